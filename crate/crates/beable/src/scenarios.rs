//! Constructors for the worked systems: a particle on a 1D grid, a pointer
//! measurement, an EPR pair with two measuring devices, and a randomized
//! model for equilibration studies.
//!
//! Each constructor returns a [`ScenarioSpec`]: a Hamiltonian schedule, an
//! initial state, a set of named projector families, and run defaults. The
//! specs are plain data; prepare a [`SystemFlow`] to evolve them.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::dynamics::{InitialCondition, ScheduledSystem, Segment, SystemFlow};
use crate::error::{Error, Result};
use crate::linalg::{expectation, tensor_product_operators, HermitianOperator, StateVector};
use crate::microstates::{
    build_coarse_observable, build_position_projectors, Boundary, CellLabel, ProjectorFamily,
    EPS_OCC,
};

/// Default run parameters bundled with a scenario.
#[derive(Debug, Clone)]
pub struct RunDefaults {
    pub dt: f64,
    pub t1: f64,
    pub trajectories: usize,
    pub initial: InitialCondition,
}

/// A fully specified simulation setup.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub name: String,
    pub system: ScheduledSystem,
    pub families: BTreeMap<String, ProjectorFamily>,
    /// Key into `families` used by default for sampling and reports.
    pub primary_family: String,
    pub run_defaults: RunDefaults,
    /// Scenario-specific numbers useful to callers (outcome cells, grid
    /// scales, pulse boundaries, ...).
    pub annotations: BTreeMap<String, f64>,
}

impl ScenarioSpec {
    pub fn family(&self, name: &str) -> Result<&ProjectorFamily> {
        self.families
            .get(name)
            .ok_or_else(|| Error::Config(format!("scenario has no family named {name:?}")))
    }

    pub fn primary(&self) -> &ProjectorFamily {
        &self.families[&self.primary_family]
    }

    pub fn flow(&self) -> Result<SystemFlow> {
        SystemFlow::prepare(self.system.clone())
    }

    pub fn annotation(&self, key: &str) -> Option<f64> {
        self.annotations.get(key).copied()
    }

    /// Extends (or trims) the final schedule segment to end at `t1`.
    pub fn with_final_time(mut self, t1: f64) -> Result<Self> {
        let last = self
            .system
            .segments
            .last_mut()
            .ok_or_else(|| Error::Config("scenario has no schedule".into()))?;
        if t1 <= last.t0 {
            return Err(Error::Config(format!(
                "final time {t1} does not reach the last segment start {}",
                last.t0
            )));
        }
        last.t1 = t1;
        self.run_defaults.t1 = t1;
        Ok(self)
    }
}

/// Three-point-stencil kinetic Hamiltonian `-(hbar^2/2M) d^2/dx^2` on a
/// uniform grid.
pub fn kinetic_hamiltonian(
    grid_points: usize,
    spacing: f64,
    mass: f64,
    hbar: f64,
    boundary: Boundary,
) -> HermitianOperator {
    let scale = hbar * hbar / (2.0 * mass * spacing * spacing);
    let mut m = DMatrix::<C64>::zeros(grid_points, grid_points);
    for g in 0..grid_points {
        m[(g, g)] = C64::new(2.0 * scale, 0.0);
        if g + 1 < grid_points {
            m[(g, g + 1)] = C64::new(-scale, 0.0);
            m[(g + 1, g)] = C64::new(-scale, 0.0);
        }
    }
    if boundary == Boundary::Periodic && grid_points > 2 {
        m[(0, grid_points - 1)] = C64::new(-scale, 0.0);
        m[(grid_points - 1, 0)] = C64::new(-scale, 0.0);
    }
    HermitianOperator::new(m).expect("stencil matrix is Hermitian")
}

/// Gaussian wave packet parameters.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct Packet {
    pub center: f64,
    pub width: f64,
    pub momentum: f64,
}

/// Samples `exp(i p x / hbar) exp(-(x - c)^2 / 4 w^2)` on the grid and
/// normalizes.
pub fn gaussian_packet(
    grid_points: usize,
    origin: f64,
    spacing: f64,
    packet: &Packet,
    hbar: f64,
) -> Result<StateVector> {
    let raw = DVector::from_fn(grid_points, |g, _| {
        let x = origin + (g as f64 + 0.5) * spacing;
        let envelope = (-(x - packet.center).powi(2) / (4.0 * packet.width * packet.width)).exp();
        let phase = packet.momentum * x / hbar;
        C64::new(envelope * phase.cos(), envelope * phase.sin())
    });
    StateVector::from_unnormalized(raw)
}

/// A particle in one dimension: stencil kinetic term plus an optional
/// diagonal potential, a Gaussian initial packet, and position cells.
#[allow(clippy::too_many_arguments)]
pub fn make_particle1d(
    grid_points: usize,
    cells: usize,
    domain: (f64, f64),
    mass: f64,
    packet: Packet,
    potential: Option<&[f64]>,
    boundary: Boundary,
    hbar: f64,
) -> Result<ScenarioSpec> {
    let family = build_position_projectors(grid_points, cells, domain, boundary)?;
    let grid = *family.grid().unwrap();
    if packet.width < 2.0 * grid.spacing {
        return Err(Error::Config(format!(
            "packet width {} under-resolved: need at least two grid spacings ({:.3e})",
            packet.width,
            2.0 * grid.spacing
        )));
    }
    let mut h = kinetic_hamiltonian(grid_points, grid.spacing, mass, hbar, boundary)
        .matrix()
        .clone();
    if let Some(v) = potential {
        if v.len() != grid_points {
            return Err(Error::Config(format!(
                "potential has {} samples for {grid_points} grid points",
                v.len()
            )));
        }
        for (g, &vg) in v.iter().enumerate() {
            h[(g, g)] += C64::new(vg, 0.0);
        }
    }
    let hamiltonian = HermitianOperator::new(h)?;
    let psi = gaussian_packet(grid_points, grid.origin, grid.spacing, &packet, hbar)?;
    let delta_x = family.resolution();
    let speed = packet.momentum.abs() / mass;
    let (t1, dt) = if speed * delta_x > 0.0 && speed > 1e-12 {
        (4.0 * delta_x / speed, 0.04 * delta_x / speed)
    } else {
        (1.0, 1e-2)
    };
    let start_cell = family
        .cell_centers()
        .and_then(|centers| {
            centers
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    (*a - packet.center)
                        .abs()
                        .partial_cmp(&(*b - packet.center).abs())
                        .unwrap()
                })
                .map(|(i, _)| i)
        })
        .unwrap_or(0);
    let mut annotations = BTreeMap::new();
    annotations.insert("delta_x".into(), delta_x);
    annotations.insert("speed".into(), speed);
    annotations.insert("mass".into(), mass);
    annotations.insert("start_cell".into(), start_cell as f64);
    let mut families = BTreeMap::new();
    families.insert("position".to_string(), family);
    Ok(ScenarioSpec {
        name: "particle1d".into(),
        system: ScheduledSystem::constant(hamiltonian, psi, hbar, 0.0, t1),
        families,
        primary_family: "position".into(),
        run_defaults: RunDefaults {
            dt,
            t1,
            trajectories: 10_000,
            initial: InitialCondition::Cell(start_cell),
        },
        annotations,
    })
}

/// Momentum operator on a periodic grid, diagonal in the discrete Fourier
/// basis. Generates exact rigid translations of trigonometric interpolants.
pub fn fourier_momentum(grid_points: usize, length: f64, hbar: f64) -> HermitianOperator {
    let g = grid_points;
    // lambda_n = hbar * 2 pi n~ / L with n~ the signed frequency; the Nyquist
    // mode (even g) is dropped to keep the operator Hermitian and real-odd.
    let mut lambda = vec![0.0; g];
    for (n, l) in lambda.iter_mut().enumerate() {
        let signed = if 2 * n < g {
            n as f64
        } else if 2 * n == g {
            0.0
        } else {
            n as f64 - g as f64
        };
        *l = hbar * 2.0 * std::f64::consts::PI * signed / length;
    }
    // (F^dagger diag(lambda) F)_{ab} depends only on (a - b) mod g.
    let mut coeff = vec![C64::new(0.0, 0.0); g];
    for (d, cd) in coeff.iter_mut().enumerate() {
        let mut s = C64::new(0.0, 0.0);
        for (n, &l) in lambda.iter().enumerate() {
            let theta = 2.0 * std::f64::consts::PI * (n * d % g) as f64 / g as f64;
            s += C64::new(theta.cos(), theta.sin()) * l;
        }
        *cd = s / g as f64;
    }
    let m = DMatrix::from_fn(g, g, |a, b| coeff[(a + g - b) % g]);
    HermitianOperator::symmetrized(&m)
}

/// Pointer-measurement scenario: a microscopic system with amplitudes
/// `lambdas` drives a pointer packet rigidly to an outcome-dependent
/// position during the pulse; afterwards the pointer evolves freely (heavy
/// mass). The observable set is the pointer position cells.
pub fn make_measurement(
    lambdas: &[C64],
    pointer_grid: usize,
    pointer_separation: f64,
    packet_width: f64,
    pulse: f64,
) -> Result<ScenarioSpec> {
    let hbar = 1.0;
    let k = lambdas.len();
    if k == 0 {
        return Err(Error::Config(
            "measurement needs at least one outcome".into(),
        ));
    }
    let norm: f64 = lambdas.iter().map(|l| l.norm_sqr()).sum();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "outcome amplitudes must be normalized; sum |lambda|^2 = {norm}"
        )));
    }
    if pulse <= 0.0 {
        return Err(Error::Config("pulse duration must be positive".into()));
    }
    // Geometry: delta_x = separation / 5, domain long enough for the
    // outermost outcome plus margin (outcomes alternate around the center,
    // reaching ceil(K/2) separations either side).
    let delta_x = pointer_separation / 5.0;
    let slots = 2 * k.div_ceil(2) + 1;
    let cells = 5 * slots;
    let length = cells as f64 * delta_x;
    if pointer_grid % cells != 0 {
        return Err(Error::Config(format!(
            "pointer grid {pointer_grid} must divide into {cells} cells"
        )));
    }
    let spacing = length / pointer_grid as f64;
    // Accuracy conditions, widest scale first.
    if pointer_separation < 4.0 * delta_x {
        return Err(Error::Config(format!(
            "resolution ordering violated: pointerSeparation {pointer_separation} < 4 delta_x {delta_x}"
        )));
    }
    if delta_x < 10.0 * packet_width {
        return Err(Error::Config(format!(
            "resolution ordering violated: delta_x {delta_x} < 10 packetWidth {packet_width}"
        )));
    }
    if packet_width < 2.0 * spacing {
        return Err(Error::Config(format!(
            "resolution ordering violated: packetWidth {packet_width} < 2 grid spacings {spacing}"
        )));
    }

    // Start cell in the middle; outcomes alternate around it, offset by
    // whole multiples of the separation (which is 5 cells, so outcome
    // centers land on cell centers).
    let start_cell = cells / 2;
    let start_center = (start_cell as f64 + 0.5) * delta_x;
    let offsets: Vec<f64> = (0..k)
        .map(|a| {
            let step = (a / 2 + 1) as f64;
            if a % 2 == 0 {
                -step * pointer_separation
            } else {
                step * pointer_separation
            }
        })
        .collect();
    let outcome_cells: Vec<i64> = offsets
        .iter()
        .map(|off| start_cell as i64 + (off / delta_x).round() as i64)
        .collect();
    // Keep every outcome packet clear of the periodic wrap.
    if outcome_cells.iter().any(|&c| c < 2 || c > cells as i64 - 3) {
        return Err(Error::Config(format!(
            "outcome cells {outcome_cells:?} come within two cells of the domain edge; \
             use a longer pointer domain"
        )));
    }
    let outcome_cells: Vec<usize> = outcome_cells.into_iter().map(|c| c as usize).collect();

    let momentum = fourier_momentum(pointer_grid, length, hbar);
    // Pulse Hamiltonian: sum_a |a><a| (x) v_a p, an outcome-conditioned
    // rigid translation generator.
    let dim = k * pointer_grid;
    let mut h_pulse = DMatrix::<C64>::zeros(dim, dim);
    for (a, off) in offsets.iter().enumerate() {
        let v_a = off / pulse;
        for g1 in 0..pointer_grid {
            for g2 in 0..pointer_grid {
                h_pulse[(a * pointer_grid + g1, a * pointer_grid + g2)] =
                    momentum.matrix()[(g1, g2)] * v_a;
            }
        }
    }
    let h_pulse = HermitianOperator::new(h_pulse)?;
    // Free segment afterwards: kinetic term only. The pointer must be heavy
    // enough that the packet (width w) does not disperse over the settle
    // window: spreading time 2 M w^2 >> settle.
    let pointer_mass = 2e4;
    let mut p2 = momentum.matrix() * momentum.matrix();
    p2.scale_mut(1.0 / (2.0 * pointer_mass));
    let h_free = tensor_product_operators(
        &HermitianOperator::identity(k),
        &HermitianOperator::new(p2)?,
    )?;

    let pointer_family =
        build_position_projectors(pointer_grid, cells, (0.0, length), Boundary::Periodic)?;
    let family = pointer_family.lift_right(k);

    let packet = gaussian_packet(
        pointer_grid,
        0.0,
        spacing,
        &Packet {
            center: start_center,
            width: packet_width,
            momentum: 0.0,
        },
        hbar,
    )?;
    let sys_state = StateVector::new(DVector::from_iterator(k, lambdas.iter().copied()))
        .map_err(|_| Error::Config("outcome amplitudes must be normalized".into()))?;
    let initial = crate::linalg::tensor_product_states(&sys_state, &packet)?;

    let settle = 0.5 * pulse;
    let system = ScheduledSystem {
        segments: vec![
            Segment {
                t0: 0.0,
                t1: pulse,
                hamiltonian: h_pulse,
            },
            Segment {
                t0: pulse,
                t1: pulse + settle,
                hamiltonian: h_free,
            },
        ],
        initial,
        hbar,
    };

    let mut annotations = BTreeMap::new();
    annotations.insert("delta_x".into(), delta_x);
    annotations.insert("pulse_end".into(), pulse);
    annotations.insert("start_cell".into(), start_cell as f64);
    for (a, &cell) in outcome_cells.iter().enumerate() {
        annotations.insert(format!("outcome_cell_{a}"), cell as f64);
        annotations.insert(format!("outcome_weight_{a}"), lambdas[a].norm_sqr());
    }
    let mut families = BTreeMap::new();
    families.insert("pointer".to_string(), family);
    Ok(ScenarioSpec {
        name: "measurement".into(),
        system,
        families,
        primary_family: "pointer".into(),
        run_defaults: RunDefaults {
            dt: pulse / 200.0,
            t1: pulse + settle,
            trajectories: 10_000,
            initial: InitialCondition::Cell(start_cell),
        },
        annotations,
    })
}

fn family_from_classifier(
    dim: usize,
    n_cells: usize,
    classify: impl Fn(usize) -> usize,
    labels: Vec<CellLabel>,
) -> ProjectorFamily {
    let mut cells = vec![Vec::new(); n_cells];
    for g in 0..dim {
        cells[classify(g)].push(g);
    }
    ProjectorFamily::from_index_cells(dim, cells, labels, 1.0)
        .expect("classifier produces disjoint cells")
}

/// EPR pair with two three-state measuring devices.
///
/// Hilbert space `A (x) B (x) qubit1 (x) qubit2` (3*3*2*2); device basis
/// order is (rest, +, -). Device A measures qubit 1 along z during its
/// pulse window; device B measures qubit 2 along the axis at angle
/// `2 theta` to z. Pulses are pi-pulses with coupling `pi / (2 tau)`.
/// Families: "A", "B", and their product refinement "AuB" (cell `a * 3 + b`).
pub fn make_epr(theta: f64, pulse: f64) -> Result<ScenarioSpec> {
    if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&theta) {
        return Err(Error::Config(format!(
            "theta must lie in [0, pi/2], got {theta}"
        )));
    }
    if pulse <= 0.0 {
        return Err(Error::Config("pulse duration must be positive".into()));
    }
    let hbar = 1.0;
    let g = std::f64::consts::FRAC_PI_2 / pulse;
    let dim = 36usize;

    let c = |re: f64| C64::new(re, 0.0);
    let ladder_plus = DMatrix::from_fn(3, 3, |i, j| {
        if (i, j) == (1, 0) || (i, j) == (0, 1) {
            c(1.0)
        } else {
            c(0.0)
        }
    });
    let ladder_minus = DMatrix::from_fn(3, 3, |i, j| {
        if (i, j) == (2, 0) || (i, j) == (0, 2) {
            c(1.0)
        } else {
            c(0.0)
        }
    });
    let proj_z_plus = DMatrix::from_diagonal(&DVector::from_vec(vec![c(1.0), c(0.0)]));
    let proj_z_minus = DMatrix::from_diagonal(&DVector::from_vec(vec![c(0.0), c(1.0)]));
    // |n+> = cos t |z+> + sin t |z->, |n-> = -sin t |z+> + cos t |z->.
    let n_plus = DVector::from_vec(vec![c(theta.cos()), c(theta.sin())]);
    let n_minus = DVector::from_vec(vec![c(-theta.sin()), c(theta.cos())]);
    let proj_n_plus = &n_plus * n_plus.adjoint();
    let proj_n_minus = &n_minus * n_minus.adjoint();

    let id3 = DMatrix::<C64>::identity(3, 3);
    let id2 = DMatrix::<C64>::identity(2, 2);
    let kron4 = |a: &DMatrix<C64>, b: &DMatrix<C64>, q1: &DMatrix<C64>, q2: &DMatrix<C64>| {
        a.kronecker(b).kronecker(q1).kronecker(q2)
    };
    let h_a = HermitianOperator::new(
        (kron4(&ladder_plus, &id3, &proj_z_plus, &id2)
            + kron4(&ladder_minus, &id3, &proj_z_minus, &id2))
        .scale(g),
    )?;
    let h_b = HermitianOperator::new(
        (kron4(&id3, &ladder_plus, &id2, &proj_n_plus)
            + kron4(&id3, &ladder_minus, &id2, &proj_n_minus))
        .scale(g),
    )?;

    // Initial: devices at rest, qubits in the singlet.
    let mut singlet = DVector::<C64>::zeros(4);
    singlet[1] = c(std::f64::consts::FRAC_1_SQRT_2); // |z+ z->
    singlet[2] = c(-std::f64::consts::FRAC_1_SQRT_2); // |z- z+>
    let mut initial = DVector::<C64>::zeros(dim);
    for q in 0..4 {
        initial[q] = singlet[q]; // a = 0, b = 0 block is the leading one
    }
    let initial = StateVector::new(initial)?;

    let t_a = 0.5;
    let t_b = t_a + pulse + 0.5;
    let t_end = t_b + pulse + 0.5;
    let system = ScheduledSystem {
        segments: vec![
            Segment {
                t0: 0.0,
                t1: t_a,
                hamiltonian: HermitianOperator::zero(dim),
            },
            Segment {
                t0: t_a,
                t1: t_a + pulse,
                hamiltonian: h_a,
            },
            Segment {
                t0: t_a + pulse,
                t1: t_b,
                hamiltonian: HermitianOperator::zero(dim),
            },
            Segment {
                t0: t_b,
                t1: t_b + pulse,
                hamiltonian: h_b,
            },
            Segment {
                t0: t_b + pulse,
                t1: t_end,
                hamiltonian: HermitianOperator::zero(dim),
            },
        ],
        initial,
        hbar,
    };

    let device_labels = |prefix: &str| {
        vec![
            CellLabel::Name(format!("{prefix}0")),
            CellLabel::Name(format!("{prefix}+")),
            CellLabel::Name(format!("{prefix}-")),
        ]
    };
    let fam_a = family_from_classifier(dim, 3, |g| g / 12, device_labels("A"));
    let fam_b = family_from_classifier(dim, 3, |g| (g / 4) % 3, device_labels("B"));
    let fam_joint = fam_a.refine(&fam_b)?;

    let mut families = BTreeMap::new();
    families.insert("A".to_string(), fam_a);
    families.insert("B".to_string(), fam_b);
    families.insert("AuB".to_string(), fam_joint);

    let mut annotations = BTreeMap::new();
    annotations.insert("theta".into(), theta);
    annotations.insert("t1".into(), 0.0);
    annotations.insert("tA".into(), t_a);
    annotations.insert("t2".into(), t_a + pulse + 0.25);
    annotations.insert("tB".into(), t_b);
    annotations.insert("t3".into(), t_b + pulse + 0.25);
    Ok(ScenarioSpec {
        name: "epr".into(),
        system,
        families,
        primary_family: "AuB".into(),
        run_defaults: RunDefaults {
            dt: pulse / 100.0,
            t1: t_end,
            trajectories: 10_000,
            initial: InitialCondition::Cell(0),
        },
        annotations,
    })
}

/// Randomized model of an interacting system inside a microcanonical shell:
/// eigenvalues uniform over `[0, delta_e]`, eigenvectors Haar-random against
/// the microstate basis, observable cells of prescribed ranks.
pub fn make_ergodic(
    n: usize,
    delta_e: f64,
    cell_ranks: &[usize],
    seed: u64,
) -> Result<ScenarioSpec> {
    if cell_ranks.iter().sum::<usize>() != n {
        return Err(Error::Config(format!(
            "cell ranks sum to {}, expected dimension {n}",
            cell_ranks.iter().sum::<usize>()
        )));
    }
    if delta_e <= 0.0 {
        return Err(Error::Config("energy width must be positive".into()));
    }
    let hbar = 1.0;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut energies: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * delta_e).collect();
    energies.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let gauss =
        |rng: &mut ChaCha12Rng| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
    let gmat = DMatrix::from_fn(n, n, |_, _| gauss(&mut rng));
    let qr = gmat.qr();
    let mut q = qr.q();
    let r = qr.r();
    // Phase fix makes the distribution Haar.
    for k in 0..n {
        let d = r[(k, k)];
        let phase = if d.norm() > 0.0 {
            d / d.norm()
        } else {
            C64::new(1.0, 0.0)
        };
        let mut col = q.column_mut(k);
        col *= phase;
    }
    let mut h = DMatrix::<C64>::zeros(n, n);
    for (k, &e) in energies.iter().enumerate() {
        let col = q.column(k);
        h += (col * col.adjoint()).scale(e);
    }
    let hamiltonian = HermitianOperator::symmetrized(&h);
    let initial = StateVector::from_unnormalized(DVector::from_fn(n, |_, _| gauss(&mut rng)))?;

    let mut cells = Vec::with_capacity(cell_ranks.len());
    let mut labels = Vec::with_capacity(cell_ranks.len());
    let mut next = 0usize;
    for (i, &d) in cell_ranks.iter().enumerate() {
        cells.push((next..next + d).collect());
        labels.push(CellLabel::Name(format!("block{i}")));
        next += d;
    }
    let family = ProjectorFamily::from_index_cells(n, cells, labels, 1.0)?;

    let t1 = 50.0 / delta_e;
    let dt = 0.02 / ((n as f64).sqrt() * delta_e);
    let mut families = BTreeMap::new();
    families.insert("blocks".to_string(), family);
    let mut annotations = BTreeMap::new();
    annotations.insert("delta_e".into(), delta_e);
    annotations.insert("n".into(), n as f64);
    Ok(ScenarioSpec {
        name: "ergodic".into(),
        system: ScheduledSystem::constant(hamiltonian, initial, hbar, 0.0, t1),
        families,
        primary_family: "blocks".into(),
        run_defaults: RunDefaults {
            dt,
            t1,
            trajectories: 1000,
            initial: InitialCondition::DrawFromWeights,
        },
        annotations,
    })
}

/// One line of the invariant report produced by [`validate_scenario`].
#[derive(Debug, Clone)]
pub struct InvariantCheck {
    pub name: String,
    pub defect: f64,
    pub tolerance: f64,
}

impl InvariantCheck {
    pub fn passed(&self) -> bool {
        self.defect <= self.tolerance
    }
}

/// Runs the structural invariant suite on a scenario: schedule sanity,
/// state normalization, projector algebra, decomposition reconstruction, the
/// ensemble identity for a coarse observable, and the one-way property of
/// the rates at the start of the schedule.
pub fn validate_scenario(spec: &ScenarioSpec) -> Result<Vec<InvariantCheck>> {
    spec.system.validate()?;
    let mut checks = Vec::new();
    let mut push = |name: &str, defect: f64, tolerance: f64| {
        checks.push(InvariantCheck {
            name: name.into(),
            defect,
            tolerance,
        });
    };
    push(
        "initial state normalization",
        spec.system.initial.norm_defect(),
        1e-10,
    );
    for (name, fam) in &spec.families {
        push(
            &format!("family {name}: projector orthogonality"),
            fam.orthogonality_defect(),
            1e-10,
        );
    }
    let flow = spec.flow()?;
    let t0 = flow.t_start();
    let fam = spec.primary();
    let d = flow.decomposition_at(fam, t0, EPS_OCC)?;
    let psi0 = flow.state_at(t0)?;
    if fam.is_exhaustive() {
        push(
            "decomposition reconstruction",
            (d.reconstruct() - psi0.amplitudes()).norm(),
            1e-9,
        );
        push(
            "weights sum to one",
            (d.weights().iter().sum::<f64>() - 1.0).abs(),
            1e-9,
        );
    }
    let obs = build_coarse_observable(fam, 0.0, 1.0);
    let o = obs.operator();
    let lhs = expectation(&o, &psi0)?;
    let rhs: f64 = d
        .occupied_cells()
        .map(|i| d.weight(i) * d.microstate_expectation(i, &o).unwrap())
        .sum();
    push(
        "ensemble identity for coarse observable",
        (lhs - rhs).abs(),
        1e-9,
    );
    let rates = flow.rates_at(fam, t0, EPS_OCC)?;
    push("one-way rates at t0", rates.one_way_defect(), 0.0);
    let u = crate::linalg::propagator_build(
        flow.hamiltonian_at(t0)?,
        spec.run_defaults.dt.max(1e-6),
        flow.hbar(),
    )?;
    push("propagator unitarity", u.unitarity_defect(), 1e-9);
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::rates_pure;

    #[test]
    fn particle_zero_momentum_has_zero_rates() {
        let spec = make_particle1d(
            128,
            8,
            (0.0, 8.0),
            1.0,
            Packet {
                center: 4.0,
                width: 0.8,
                momentum: 0.0,
            },
            None,
            Boundary::Periodic,
            1.0,
        )
        .unwrap();
        let flow = spec.flow().unwrap();
        let rates = flow.rates_at(spec.primary(), 0.0, EPS_OCC).unwrap();
        assert!(rates.max_rate() < 1e-12);
    }

    #[test]
    fn particle_under_resolved_packet_rejected() {
        let err = make_particle1d(
            64,
            8,
            (0.0, 8.0),
            1.0,
            Packet {
                center: 4.0,
                width: 0.1,
                momentum: 0.0,
            },
            None,
            Boundary::Periodic,
            1.0,
        );
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn epr_weights_at_t3_match_angles() {
        // Joint weights after both pulses: (sin^2, cos^2, cos^2, sin^2)/2 on
        // (A+B+, A+B-, A-B+, A-B-).
        let theta = std::f64::consts::FRAC_PI_6;
        let spec = make_epr(theta, 1.0).unwrap();
        let flow = spec.flow().unwrap();
        let t3 = spec.annotation("t3").unwrap();
        let fam = spec.family("AuB").unwrap();
        let w = flow.weights_at(fam, t3).unwrap();
        let s2 = theta.sin().powi(2) / 2.0;
        let c2 = theta.cos().powi(2) / 2.0;
        // Joint cell (a, b) sits at a * 3 + b with device order (0, +, -).
        let idx = |a: usize, b: usize| a * 3 + b;
        assert!((w[idx(1, 1)] - s2).abs() < 1e-8, "++: {}", w[idx(1, 1)]);
        assert!((w[idx(1, 2)] - c2).abs() < 1e-8, "+-: {}", w[idx(1, 2)]);
        assert!((w[idx(2, 1)] - c2).abs() < 1e-8, "-+: {}", w[idx(2, 1)]);
        assert!((w[idx(2, 2)] - s2).abs() < 1e-8, "--: {}", w[idx(2, 2)]);
        // Marginal consistency: |c_{i1}|^2 = sum_{i2} |c_{i1 i2}|^2.
        let fam_a = spec.family("A").unwrap();
        let wa = flow.weights_at(fam_a, t3).unwrap();
        for a in 0..3 {
            let sum: f64 = (0..3).map(|b| w[idx(a, b)]).sum();
            assert!((wa[a] - sum).abs() < 1e-10);
        }
    }

    #[test]
    fn epr_intermediate_state_after_a_pulse() {
        let theta = 0.4;
        let spec = make_epr(theta, 1.0).unwrap();
        let flow = spec.flow().unwrap();
        let t2 = spec.annotation("t2").unwrap();
        let fam_a = spec.family("A").unwrap();
        let w = flow.weights_at(fam_a, t2).unwrap();
        assert!(w[0] < 1e-12, "rest weight {}", w[0]);
        assert!((w[1] - 0.5).abs() < 1e-10);
        assert!((w[2] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn measurement_weights_reproduce_amplitudes() {
        let lam0 = 0.3f64;
        let lambdas = [
            C64::new(lam0.sqrt(), 0.0),
            C64::new((1.0 - lam0).sqrt(), 0.0),
        ];
        let spec = make_measurement(&lambdas, 360, 1.0, 1.0 / 60.0, 1.0).unwrap();
        let flow = spec.flow().unwrap();
        let fam = spec.primary();
        let t_end = spec.annotation("pulse_end").unwrap();
        let w = flow.weights_at(fam, t_end).unwrap();
        let cell0 = spec.annotation("outcome_cell_0").unwrap() as usize;
        let cell1 = spec.annotation("outcome_cell_1").unwrap() as usize;
        assert!(
            (w[cell0] - lam0).abs() < 1e-6,
            "outcome 0 weight {} vs {lam0}",
            w[cell0]
        );
        assert!(
            (w[cell1] - (1.0 - lam0)).abs() < 1e-6,
            "outcome 1 weight {} vs {}",
            w[cell1],
            1.0 - lam0
        );
    }

    #[test]
    fn measurement_single_outcome_is_dispersionless() {
        // lambda = (1, 0): the second outcome never acquires weight.
        let lambdas = [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
        let spec = make_measurement(&lambdas, 360, 1.0, 1.0 / 60.0, 1.0).unwrap();
        let flow = spec.flow().unwrap();
        let fam = spec.primary();
        let t_end = spec.annotation("pulse_end").unwrap();
        let w = flow.weights_at(fam, t_end).unwrap();
        let cell0 = spec.annotation("outcome_cell_0").unwrap() as usize;
        assert!((w[cell0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn measurement_resolution_ordering_errors() {
        let lambdas = [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
        // Packet too wide for the cell scale.
        match make_measurement(&lambdas, 360, 1.0, 0.1, 1.0) {
            Err(Error::Config(msg)) => assert!(msg.contains("delta_x"), "{msg}"),
            other => panic!("expected ConfigError, got {other:?}"),
        }
    }

    #[test]
    fn ergodic_spectrum_and_blocks() {
        let spec = make_ergodic(24, 1.0, &[6, 6, 6, 6], 7).unwrap();
        let flow = spec.flow().unwrap();
        let fam = spec.primary();
        assert_eq!(fam.cell_count(), 4);
        let w = flow.weights_at(fam, 0.0).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        // Identical seeds reproduce the scenario exactly.
        let again = make_ergodic(24, 1.0, &[6, 6, 6, 6], 7).unwrap();
        assert_eq!(
            spec.system.initial.amplitudes(),
            again.system.initial.amplitudes()
        );
        assert_eq!(
            spec.system.segments[0].hamiltonian.matrix(),
            again.system.segments[0].hamiltonian.matrix()
        );
        // Rates exist and are one-way.
        let d = flow.decomposition_at(fam, 0.0, EPS_OCC).unwrap();
        let t = rates_pure(&d, flow.hamiltonian_at(0.0).unwrap(), 1.0).unwrap();
        assert!(t.max_rate() > 0.0);
        assert_eq!(t.one_way_defect(), 0.0);
    }

    #[test]
    fn ergodic_rank1_long_run_average_matches_dephasing_oracle() {
        // Long-run time average of |c_i(t)|^2 for rank-1 cells against the
        // analytic dephasing average sum_n |<Psi_i|n>|^2 |<n|Psi(0)>|^2.
        // Convergence is limited by the smallest level gap, hence the long
        // horizon.
        let horizon = 40_000.0;
        let spec = make_ergodic(40, 1.0, &vec![1usize; 40], 3)
            .unwrap()
            .with_final_time(horizon)
            .unwrap();
        let flow = spec.flow().unwrap();
        let report =
            crate::analysis::equilibration_check(&flow, spec.primary(), horizon, 12_000).unwrap();
        assert!(
            report.max_rel_deviation_from_oracle < 0.02,
            "oracle deviation {:.3}%",
            100.0 * report.max_rel_deviation_from_oracle
        );
        // The oracle itself sits near 1/N on average (fluctuations are
        // O(1/sqrt(N)) per cell).
        let mean: f64 = report.oracle.iter().sum::<f64>() / 40.0;
        assert!((mean - 1.0 / 40.0).abs() < 1e-3);
    }

    #[test]
    fn ergodic_rate_support_matches_random_matrix_scale() {
        // Nonzero rates, weighted by the occupancy of their source cell,
        // are supported on roughly [0, d_i dE / (hbar sqrt(2N))]: the 99th
        // percentile lands within a factor two of the upper end.
        let n = 40usize;
        let delta_e = 1.0;
        let spec = make_ergodic(n, delta_e, &vec![1usize; n], 3).unwrap();
        let flow = spec.flow().unwrap();
        let mut samples: Vec<(f64, f64)> = Vec::new();
        for k in 0..200 {
            let t = k as f64 * 0.25;
            let rates = flow.rates_at(spec.primary(), t, EPS_OCC).unwrap();
            let weights = flow.weights_at(spec.primary(), t).unwrap();
            for i in 0..n {
                for j in 0..n {
                    if rates.rate(i, j) > 0.0 {
                        samples.push((rates.rate(i, j), weights[j]));
                    }
                }
            }
        }
        samples.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let total: f64 = samples.iter().map(|x| x.1).sum();
        let mut acc = 0.0;
        let mut p99 = 0.0;
        for (rate, w) in &samples {
            acc += w / total;
            if acc <= 0.99 {
                p99 = *rate;
            } else {
                break;
            }
        }
        let scale = delta_e / (2.0 * n as f64).sqrt();
        assert!(
            p99 >= 0.5 * scale && p99 <= 2.0 * scale,
            "weighted p99 {p99:.4} vs scale {scale:.4}"
        );
    }

    #[test]
    fn validate_reports_all_pass_for_epr() {
        let spec = make_epr(0.5, 1.0).unwrap();
        let checks = validate_scenario(&spec).unwrap();
        assert!(!checks.is_empty());
        for c in &checks {
            assert!(c.passed(), "{} defect {}", c.name, c.defect);
        }
    }

    #[test]
    fn fourier_momentum_translates_rigidly() {
        // exp(-i p d / hbar) must displace a packet without distortion.
        let g = 128usize;
        let length = 16.0;
        let p = fourier_momentum(g, length, 1.0);
        let spacing = length / g as f64;
        let pk = |center: f64| {
            gaussian_packet(
                g,
                0.0,
                spacing,
                &Packet {
                    center,
                    width: 0.5,
                    momentum: 0.0,
                },
                1.0,
            )
            .unwrap()
        };
        let start = pk(6.0);
        let expect = pk(6.0 + 2.0 * spacing * 3.0);
        let u = crate::linalg::propagator_build(&p, 1.0, 1.0).unwrap();
        // H = p over time d gives translation by d; use d = 6 h via scaling.
        let shift = 6.0 * spacing;
        let u_shift = crate::linalg::propagator_build(&p, shift, 1.0).unwrap();
        let moved = u_shift.step(&start);
        let overlap = moved.inner(&expect).norm();
        assert!(
            (overlap - 1.0).abs() < 1e-9,
            "rigid translation overlap {overlap}"
        );
        let _ = u;
    }
}

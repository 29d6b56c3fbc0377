//! Transition-rate evaluation, master-equation verification, integrated
//! transition probabilities and continuous-time jump sampling.
//!
//! The central formula: for microstates `|Psi_i>` with amplitudes `c_i`, the
//! jump rate from cell `j` to cell `i` is
//!
//! ```text
//! T_ij = max(-(2/hbar) Im[(c_i/c_j) <Psi_j|H|Psi_i>], 0)
//! ```
//!
//! Both directions of a pair are read off the same imaginary part, so at most
//! one of `T_ij`, `T_ji` is nonzero. All evaluators here compute the pair
//! quantity once and clamp, which makes the one-way property exact in
//! floating point.

mod flow;
mod integrate;
mod sample;

pub use flow::{ScheduledSystem, Segment, SystemFlow};
pub use integrate::{integrated_probabilities, IntegratedProbabilities};
pub use sample::{
    build_rate_schedule, sample_ensemble, sample_trajectory, EnsembleOptions, InitialCondition,
    JumpEvent, JumpTrajectory, RateSchedule,
};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::{HermitianOperator, StateVector};
use crate::microstates::{MicrostateDecomposition, MixedDecomposition, ProjectorFamily};

/// Default cap on `total_outflow * dt` for thinning and ODE stepping.
pub const RATE_STEP_CAP: f64 = 0.05;

/// Nonnegative off-diagonal transition rates; diagonal identically zero.
#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrix {
    rates: DMatrix<f64>,
}

impl RateMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            rates: DMatrix::zeros(n, n),
        }
    }

    pub fn n(&self) -> usize {
        self.rates.nrows()
    }

    /// Rate for the transition `j -> i`.
    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.rates[(i, j)]
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.rates[(i, j)] = v;
    }

    /// Total outflow rate from source `j`.
    pub fn total_outflow(&self, j: usize) -> f64 {
        self.rates.column(j).sum()
    }

    pub fn max_total_outflow(&self) -> f64 {
        (0..self.n()).fold(0.0, |m, j| m.max(self.total_outflow(j)))
    }

    pub fn max_rate(&self) -> f64 {
        self.rates.iter().fold(0.0_f64, |m, &v| m.max(v))
    }

    /// `min(T_ij, T_ji)` over all pairs; zero iff the matrix is one-way.
    pub fn one_way_defect(&self) -> f64 {
        let n = self.n();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..i {
                worst = worst.max(self.rates[(i, j)].min(self.rates[(j, i)]));
            }
        }
        worst
    }

    pub fn is_one_way(&self) -> bool {
        self.one_way_defect() == 0.0
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.rates
    }
}

/// Checks that every occupied cell keeps its weight above the occupation
/// threshold; a violation means the caller is holding a stale decomposition.
fn check_not_starved(weights: &[f64], occupied: &[usize], eps_occ: f64) -> Result<()> {
    for &j in occupied {
        if weights[j] < eps_occ {
            return Err(Error::Starvation(format!(
                "occupied cell {j} has weight {:.3e} < eps_occ {eps_occ:.1e}",
                weights[j]
            )));
        }
    }
    Ok(())
}

/// Pair matrix elements `<u_j|H|u_i>` over the unnormalized cell components
/// `u_i = c_i |Psi_i>`, as a dense cell-by-cell table.
fn pair_elements(
    decomp: &MicrostateDecomposition,
    h: &HermitianOperator,
    occupied: &[usize],
) -> DMatrix<C64> {
    let n_cells = decomp.cell_count();
    let mut acc = DMatrix::zeros(n_cells, n_cells);
    if let (Some(cells), Some(psi)) = (decomp.source_cells(), decomp.source_state()) {
        // Masked fast path: one pass over H with a basis-index -> cell lookup.
        let dim = decomp.dim();
        let mut lookup = vec![usize::MAX; dim];
        for &cell in occupied {
            for &g in &cells[cell] {
                lookup[g] = cell;
            }
        }
        let hm = h.matrix();
        for k in 0..dim {
            let cj = lookup[k];
            if cj == usize::MAX {
                continue;
            }
            let pk = psi[k].conj();
            for l in 0..dim {
                let ci = lookup[l];
                if ci == usize::MAX {
                    continue;
                }
                acc[(cj, ci)] += pk * hm[(k, l)] * psi[l];
            }
        }
    } else {
        let components: Vec<(usize, nalgebra::DVector<C64>)> = occupied
            .iter()
            .map(|&i| (i, decomp.cell_component(i).unwrap()))
            .collect();
        for (i, ui) in &components {
            let hui = h.apply(ui);
            for (j, uj) in &components {
                acc[(*j, *i)] = uj.dotc(&hui);
            }
        }
    }
    acc
}

/// Transition rates between the microstates of a pure-state decomposition
/// under Hamiltonian `h`.
pub fn rates_pure(
    decomp: &MicrostateDecomposition,
    h: &HermitianOperator,
    hbar: f64,
) -> Result<RateMatrix> {
    if h.dim() != decomp.dim() {
        return Err(Error::Shape(format!(
            "rates: H dim {} vs decomposition dim {}",
            h.dim(),
            decomp.dim()
        )));
    }
    let occupied: Vec<usize> = decomp.occupied_cells().collect();
    let weights = decomp.weights();
    check_not_starved(&weights, &occupied, decomp.eps_occ())?;
    let acc = pair_elements(decomp, h, &occupied);
    let mut t = RateMatrix::zeros(decomp.cell_count());
    for (a, &i) in occupied.iter().enumerate() {
        for &j in &occupied[a + 1..] {
            // s = Im <u_j|H|u_i>; the reverse direction is exactly -s.
            let s = acc[(j, i)].im;
            t.set(i, j, (-2.0 * s / hbar).max(0.0) / weights[j]);
            t.set(j, i, (2.0 * s / hbar).max(0.0) / weights[i]);
        }
    }
    Ok(t)
}

/// Transition rates for an explicitly time-dependent microstate family.
///
/// The derivative matrix element is approximated by the first-order finite
/// difference `<Psi_j(t)|Psi_i(t+dt)>/dt`, antisymmetrized over the pair so
/// that both directions derive from one signed quantity (the exact relation
/// `<Psi_j|dPsi_i> = -conj(<Psi_i|dPsi_j>)` holds in the continuum; enforcing
/// it keeps the one-way property exact). Error is O(dt).
pub fn rates_timedep(
    now: &MicrostateDecomposition,
    next: &MicrostateDecomposition,
    h: &HermitianOperator,
    dt: f64,
    hbar: f64,
) -> Result<RateMatrix> {
    if now.cell_count() != next.cell_count() || now.dim() != next.dim() {
        return Err(Error::Config(
            "rates_timedep: decompositions must share cell indexing and dimension".into(),
        ));
    }
    if dt <= 0.0 {
        return Err(Error::Config("rates_timedep: dt must be > 0".into()));
    }
    let occupied: Vec<usize> = now.occupied_cells().collect();
    for &i in &occupied {
        if !next.is_occupied(i) {
            return Err(Error::Config(format!(
                "rates_timedep: cell {i} occupied now but not at t+dt; cell indexing mismatch"
            )));
        }
    }
    let weights = now.weights();
    check_not_starved(&weights, &occupied, now.eps_occ())?;
    let acc = pair_elements(now, h, &occupied);
    let mut t = RateMatrix::zeros(now.cell_count());
    let i_hbar_dt = C64::new(0.0, hbar / dt);
    for (a, &i) in occupied.iter().enumerate() {
        let ci = now.amplitude(i);
        let vi_next = next.microstate(i).unwrap();
        for &j in &occupied[a + 1..] {
            let cj = now.amplitude(j);
            let vj_next = next.microstate(j).unwrap();
            let uj = now.cell_component(j).unwrap();
            let ui = now.cell_component(i).unwrap();
            // Forward difference seen from each side of the pair.
            let d_ij = ci * uj.dotc(vi_next) / dt; // ~ c_i <Psi_j| dPsi_i/dt> * |c_j|... (weights divided later)
            let d_ji = cj * ui.dotc(vj_next) / dt;
            // Signed pair quantity: Im[<u_j|H|u_i> - i hbar c_i <u_j|dPsi_i>],
            // antisymmetrized between the two one-sided differences.
            let s_fwd = (acc[(j, i)] - i_hbar_dt * d_ij * dt).im;
            let s_bwd = (acc[(i, j)] - i_hbar_dt * d_ji * dt).im;
            let s = 0.5 * (s_fwd - s_bwd);
            t.set(i, j, (-2.0 * s / hbar).max(0.0) / weights[j]);
            t.set(j, i, (2.0 * s / hbar).max(0.0) / weights[i]);
        }
    }
    Ok(t)
}

/// Transition rates for a mixed-state decomposition with time-independent
/// projectors: `T_ij = max((2/hbar) Im[tr_i([H, B_ij])] / A_jj, 0)`.
pub fn rates_mixed(
    mixed: &MixedDecomposition,
    h: &HermitianOperator,
    hbar: f64,
) -> Result<RateMatrix> {
    if h.dim() != mixed.dim() {
        return Err(Error::Shape(format!(
            "rates_mixed: H dim {} vs decomposition dim {}",
            h.dim(),
            mixed.dim()
        )));
    }
    let occupied: Vec<usize> = (0..mixed.cell_count())
        .filter(|&i| mixed.is_occupied(i))
        .collect();
    check_not_starved(mixed.weights(), &occupied, mixed.eps_occ())?;
    let rho = mixed.rho();
    let hm = h.matrix();
    let mut t = RateMatrix::zeros(mixed.cell_count());
    for (a, &i) in occupied.iter().enumerate() {
        for &j in &occupied[a + 1..] {
            // tr_i([H, B_ij]) = -sum_{k in i, l in j} rho_kl H_lk.
            let mut x = C64::new(0.0, 0.0);
            for &k in &mixed.cells()[i] {
                for &l in &mixed.cells()[j] {
                    x -= rho[(k, l)] * hm[(l, k)];
                }
            }
            let s = x.im; // Im tr_i([H, B_ij]); the (j, i) value is exactly -s.
            t.set(i, j, (2.0 * s / hbar).max(0.0) / mixed.weight(j));
            t.set(j, i, (-2.0 * s / hbar).max(0.0) / mixed.weight(i));
        }
    }
    Ok(t)
}

/// Nearest-neighbour hopping rates of a discretized 1D wavefunction from the
/// probability current through each shared cell boundary.
///
/// The current at the boundary between cells `j` and `j+1` is evaluated at
/// the midpoint between the two adjacent grid points by a central difference,
/// `J = Im[conj(psi_l) psi_r] / h^2` in grid-amplitude normalization; this is
/// exactly the bond flux of the three-point-stencil Hamiltonian, so these
/// rates agree with [`rates_pure`] on the same family.
pub fn particle_rates_current(
    psi: &StateVector,
    family: &ProjectorFamily,
    mass: f64,
    hbar: f64,
) -> Result<RateMatrix> {
    let grid = family.grid().ok_or_else(|| {
        Error::Config("particle_rates_current requires a position-grid family".into())
    })?;
    if psi.dim() != family.dim() {
        return Err(Error::Shape(format!(
            "particle rates: state dim {} vs family dim {}",
            psi.dim(),
            family.dim()
        )));
    }
    let n_cells = family.cell_count();
    let m = family.dim() / n_cells;
    let h2 = grid.spacing * grid.spacing;
    let weights: Vec<f64> = (0..n_cells)
        .map(|i| {
            family
                .cell(i)
                .iter()
                .map(|&g| psi.amplitude(g).norm_sqr())
                .sum()
        })
        .collect();
    let eps_occ = crate::microstates::EPS_OCC;
    let mut t = RateMatrix::zeros(n_cells);
    let boundaries = match grid.boundary {
        crate::microstates::Boundary::Periodic => n_cells,
        crate::microstates::Boundary::HardWall => n_cells - 1,
    };
    for b in 0..boundaries {
        // Boundary between cell b and cell (b+1) mod n_cells.
        let left_cell = b;
        let right_cell = (b + 1) % n_cells;
        let g_left = (b + 1) * m - 1;
        let g_right = ((b + 1) * m) % family.dim();
        let current = (psi.amplitude(g_left).conj() * psi.amplitude(g_right)).im / h2;
        if current > 0.0 && weights[left_cell] >= eps_occ {
            t.set(
                right_cell,
                left_cell,
                hbar / mass * current / weights[left_cell],
            );
        } else if current < 0.0 && weights[right_cell] >= eps_occ {
            t.set(
                left_cell,
                right_cell,
                hbar / mass * (-current) / weights[right_cell],
            );
        }
    }
    Ok(t)
}

/// Max residual of the master equation
/// `d|c_i|^2/dt = sum_j (T_ij |c_j|^2 - T_ji |c_i|^2)` over a sampled
/// trajectory of decompositions, using centered finite differences on the
/// left side and [`rates_pure`] on the right.
pub fn master_residual(
    samples: &[(f64, MicrostateDecomposition)],
    h: &HermitianOperator,
    hbar: f64,
) -> Result<f64> {
    if samples.len() < 3 {
        return Err(Error::Config(
            "master_residual needs at least three samples".into(),
        ));
    }
    let n_cells = samples[0].1.cell_count();
    if samples.iter().any(|(_, d)| d.cell_count() != n_cells) {
        return Err(Error::Config(
            "master_residual: samples must share a fixed family".into(),
        ));
    }
    let mut worst: f64 = 0.0;
    for k in 1..samples.len() - 1 {
        let (t_prev, d_prev) = &samples[k - 1];
        let (_, d_here) = &samples[k];
        let (t_next, d_next) = &samples[k + 1];
        let span = t_next - t_prev;
        if span <= 0.0 {
            return Err(Error::Config("master_residual: times must increase".into()));
        }
        let rates = rates_pure(d_here, h, hbar)?;
        let w = d_here.weights();
        for i in 0..n_cells {
            let lhs = (d_next.weight(i) - d_prev.weight(i)) / span;
            let mut rhs = 0.0;
            for j in 0..n_cells {
                if j != i {
                    rhs += rates.rate(i, j) * w[j] - rates.rate(j, i) * w[i];
                }
            }
            worst = worst.max((lhs - rhs).abs());
        }
    }
    Ok(worst)
}

/// Which side of a product-labelled joint family to marginalize onto.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    A,
    B,
}

/// Marginal rates of a joint process over product cells `(i1, i2)` stored at
/// index `i1 * n_b + i2`:
/// `T^(A)_{i1 j1} = sum_{i2, j2} T_{(i1 i2),(j1 j2)} |c_{j1 j2}|^2 / |c_{j1}|^2`.
pub fn marginal_rates(
    joint: &RateMatrix,
    joint_weights: &[f64],
    n_a: usize,
    n_b: usize,
    side: Side,
    eps_occ: f64,
) -> Result<RateMatrix> {
    if joint.n() != n_a * n_b || joint_weights.len() != n_a * n_b {
        return Err(Error::Shape(format!(
            "marginal_rates: joint size {} does not factor as {n_a}x{n_b}",
            joint.n()
        )));
    }
    let (n_keep, keep_of) = match side {
        Side::A => (
            n_a,
            Box::new(move |idx: usize| idx / n_b) as Box<dyn Fn(usize) -> usize>,
        ),
        Side::B => (
            n_b,
            Box::new(move |idx: usize| idx % n_b) as Box<dyn Fn(usize) -> usize>,
        ),
    };
    let mut marg_w = vec![0.0; n_keep];
    for (idx, &w) in joint_weights.iter().enumerate() {
        marg_w[keep_of(idx)] += w;
    }
    let mut t = RateMatrix::zeros(n_keep);
    let mut sums = DMatrix::<f64>::zeros(n_keep, n_keep);
    for src in 0..n_a * n_b {
        let j1 = keep_of(src);
        if joint_weights[src] <= 0.0 {
            continue;
        }
        for dst in 0..n_a * n_b {
            let i1 = keep_of(dst);
            if i1 == j1 {
                continue;
            }
            let r = joint.rate(dst, src);
            if r == 0.0 {
                continue;
            }
            if marg_w[j1] < eps_occ {
                return Err(Error::Starvation(format!(
                    "marginal source {j1} has zero weight but outgoing joint rate"
                )));
            }
            sums[(i1, j1)] += r * joint_weights[src] / marg_w[j1];
        }
    }
    for i in 0..n_keep {
        for j in 0..n_keep {
            if i != j {
                t.set(i, j, sums[(i, j)]);
            }
        }
    }
    Ok(t)
}

/// Result of the locality audit on a factorized Hamiltonian.
#[derive(Debug, Clone)]
pub struct LocalityReport {
    /// Max `|<Psi_i| 1 (x) H_E |Psi_j>|` over occupied pairs `i != j`.
    pub he_offdiagonal_max: f64,
    /// Max rate deviation when `H_E` is dropped from the Hamiltonian.
    pub drop_he_rate_deviation: f64,
    /// Max rate deviation when `H_E` is replaced by the supplied alternative.
    pub swap_he_rate_deviation: f64,
}

impl LocalityReport {
    pub fn max_deviation(&self) -> f64 {
        self.he_offdiagonal_max
            .max(self.drop_he_rate_deviation)
            .max(self.swap_he_rate_deviation)
    }
}

/// Verifies that the stochastic process attached to observables on factor A
/// does not feel the environment Hamiltonian: cross matrix elements of
/// `1 (x) H_E` vanish between distinct microstates, and the rates computed
/// from the full `H = H_A (x) 1 + 1 (x) H_E + H_int` match those computed
/// without `H_E` (or with `H_E` replaced by `h_e_alt`).
#[allow(clippy::too_many_arguments)]
pub fn locality_audit(
    psi: &StateVector,
    family_a: &ProjectorFamily,
    h_a: &HermitianOperator,
    h_e: &HermitianOperator,
    h_int: &HermitianOperator,
    h_e_alt: &HermitianOperator,
    hbar: f64,
    eps_occ: f64,
) -> Result<LocalityReport> {
    let dim_a = family_a.dim();
    let dim_e = h_e.dim();
    if h_a.dim() != dim_a
        || h_e_alt.dim() != dim_e
        || psi.dim() != dim_a * dim_e
        || h_int.dim() != dim_a * dim_e
    {
        return Err(Error::Config(
            "locality_audit: factor dimensions are inconsistent".into(),
        ));
    }
    let lifted = family_a.lift_left(dim_e);
    let decomp = crate::microstates::decompose_pure(psi, &lifted, eps_occ)?;

    let id_a = HermitianOperator::identity(dim_a);
    let id_e = HermitianOperator::identity(dim_e);
    let he_full = crate::linalg::tensor_product_operators(&id_a, h_e)?;
    let he_alt_full = crate::linalg::tensor_product_operators(&id_a, h_e_alt)?;
    let ha_full = crate::linalg::tensor_product_operators(h_a, &id_e)?;

    let occupied: Vec<usize> = decomp.occupied_cells().collect();
    let mut he_offdiag: f64 = 0.0;
    for (a, &i) in occupied.iter().enumerate() {
        let vi = decomp.microstate(i).unwrap();
        for &j in occupied.iter().skip(a + 1) {
            let vj = decomp.microstate(j).unwrap();
            he_offdiag = he_offdiag.max(vj.dotc(&he_full.apply(vi)).norm());
        }
    }

    let sum3 = |a: &HermitianOperator, b: &HermitianOperator, c: &HermitianOperator| {
        HermitianOperator::new(a.matrix() + b.matrix() + c.matrix()).expect("sum of Hermitian")
    };
    let h_full = sum3(&ha_full, &he_full, h_int);
    let h_local =
        HermitianOperator::new(ha_full.matrix() + h_int.matrix()).expect("sum of Hermitian");
    let h_swapped = sum3(&ha_full, &he_alt_full, h_int);

    let r_full = rates_pure(&decomp, &h_full, hbar)?;
    let r_local = rates_pure(&decomp, &h_local, hbar)?;
    let r_swapped = rates_pure(&decomp, &h_swapped, hbar)?;

    let max_dev = |a: &RateMatrix, b: &RateMatrix| {
        let mut worst: f64 = 0.0;
        for i in 0..a.n() {
            for j in 0..a.n() {
                worst = worst.max((a.rate(i, j) - b.rate(i, j)).abs());
            }
        }
        worst
    };

    Ok(LocalityReport {
        he_offdiagonal_max: he_offdiag,
        drop_he_rate_deviation: max_dev(&r_full, &r_local),
        swap_he_rate_deviation: max_dev(&r_full, &r_swapped),
    })
}

//! Piecewise-constant Hamiltonian schedules and exact state evolution.

use crate::error::{Error, Result};
use crate::linalg::{Eigensystem, HermitianOperator, StateVector};
use crate::microstates::{MicrostateDecomposition, ProjectorFamily};

use super::{rates_pure, RateMatrix};

/// One schedule segment `[t0, t1)` with a constant Hamiltonian.
#[derive(Debug, Clone)]
pub struct Segment {
    pub t0: f64,
    pub t1: f64,
    pub hamiltonian: HermitianOperator,
}

/// A state, a contiguous Hamiltonian schedule, and the value of hbar.
#[derive(Debug, Clone)]
pub struct ScheduledSystem {
    pub segments: Vec<Segment>,
    pub initial: StateVector,
    pub hbar: f64,
}

impl ScheduledSystem {
    /// Single-segment system with a constant Hamiltonian.
    pub fn constant(
        h: HermitianOperator,
        initial: StateVector,
        hbar: f64,
        t0: f64,
        t1: f64,
    ) -> Self {
        Self {
            segments: vec![Segment {
                t0,
                t1,
                hamiltonian: h,
            }],
            initial,
            hbar,
        }
    }

    pub fn t_start(&self) -> f64 {
        self.segments.first().map(|s| s.t0).unwrap_or(0.0)
    }

    pub fn t_end(&self) -> f64 {
        self.segments.last().map(|s| s.t1).unwrap_or(0.0)
    }

    pub fn dim(&self) -> usize {
        self.initial.dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::Config("schedule has no segments".into()));
        }
        if self.hbar <= 0.0 {
            return Err(Error::Config("hbar must be positive".into()));
        }
        let dim = self.initial.dim();
        let mut prev_end = None;
        for (k, seg) in self.segments.iter().enumerate() {
            if seg.t1 <= seg.t0 {
                return Err(Error::Config(format!(
                    "segment {k} has empty interval [{}, {}]",
                    seg.t0, seg.t1
                )));
            }
            if seg.hamiltonian.dim() != dim {
                return Err(Error::Config(format!(
                    "segment {k} Hamiltonian dim {} vs state dim {dim}",
                    seg.hamiltonian.dim()
                )));
            }
            if let Some(end) = prev_end {
                let gap: f64 = seg.t0 - end;
                if gap.abs() > 1e-12 {
                    return Err(Error::Config(format!(
                        "segments must be contiguous; gap of {gap:.3e} before segment {k}"
                    )));
                }
            }
            prev_end = Some(seg.t1);
        }
        Ok(())
    }
}

/// Prepared evolution of a [`ScheduledSystem`]: per-segment eigensystems plus
/// cached segment-boundary states, so the state at any time inside the
/// schedule is available exactly (one spectral phase rotation away).
#[derive(Debug, Clone)]
pub struct SystemFlow {
    system: ScheduledSystem,
    eigensystems: Vec<Eigensystem>,
    // Segment-boundary states expressed in each segment's eigenbasis, so a
    // state query costs one phase rotation and one basis multiply.
    boundary_coeffs: Vec<nalgebra::DVector<num_complex::Complex64>>,
}

impl SystemFlow {
    pub fn prepare(system: ScheduledSystem) -> Result<Self> {
        system.validate()?;
        let eigensystems: Vec<Eigensystem> = system
            .segments
            .iter()
            .map(|s| Eigensystem::of(&s.hamiltonian))
            .collect();
        let mut boundary_coeffs = Vec::with_capacity(system.segments.len());
        let mut psi = system.initial.clone();
        for (seg, eig) in system.segments.iter().zip(&eigensystems) {
            boundary_coeffs.push(eig.vectors.adjoint() * psi.amplitudes());
            psi = eig.evolve(&psi, seg.t1 - seg.t0, system.hbar);
        }
        Ok(Self {
            system,
            eigensystems,
            boundary_coeffs,
        })
    }

    pub fn system(&self) -> &ScheduledSystem {
        &self.system
    }

    pub fn hbar(&self) -> f64 {
        self.system.hbar
    }

    pub fn t_start(&self) -> f64 {
        self.system.t_start()
    }

    pub fn t_end(&self) -> f64 {
        self.system.t_end()
    }

    pub fn dim(&self) -> usize {
        self.system.dim()
    }

    /// Eigensystem of segment `k`'s Hamiltonian.
    pub fn eigensystem(&self, k: usize) -> &Eigensystem {
        &self.eigensystems[k]
    }

    fn segment_index(&self, t: f64) -> Result<usize> {
        let slack = 1e-9 * (1.0 + self.t_end().abs());
        if t < self.t_start() - slack || t > self.t_end() + slack {
            return Err(Error::Range(format!(
                "time {t} outside schedule [{}, {}]",
                self.t_start(),
                self.t_end()
            )));
        }
        // Segment k covers [t0_k, t1_k); the final segment includes its end.
        for (k, seg) in self.system.segments.iter().enumerate() {
            if t < seg.t1 {
                return Ok(k);
            }
        }
        Ok(self.system.segments.len() - 1)
    }

    /// Hamiltonian in force at time `t`.
    pub fn hamiltonian_at(&self, t: f64) -> Result<&HermitianOperator> {
        Ok(&self.system.segments[self.segment_index(t)?].hamiltonian)
    }

    /// State at time `t`, evolved exactly through the schedule.
    pub fn state_at(&self, t: f64) -> Result<StateVector> {
        let k = self.segment_index(t)?;
        let seg = &self.system.segments[k];
        let eig = &self.eigensystems[k];
        let dt = t - seg.t0;
        let phased = nalgebra::DVector::from_iterator(
            eig.dim(),
            self.boundary_coeffs[k]
                .iter()
                .zip(eig.values.iter())
                .map(|(c, &e)| {
                    c * (num_complex::Complex64::new(0.0, -1.0) * e * dt / self.system.hbar).exp()
                }),
        );
        StateVector::from_unnormalized(&eig.vectors * phased)
    }

    /// Microstate decomposition of the state at `t` against `family`.
    pub fn decomposition_at(
        &self,
        family: &ProjectorFamily,
        t: f64,
        eps_occ: f64,
    ) -> Result<MicrostateDecomposition> {
        crate::microstates::decompose_pure(&self.state_at(t)?, family, eps_occ)
    }

    /// Cell weights `|c_i(t)|^2`.
    pub fn weights_at(&self, family: &ProjectorFamily, t: f64) -> Result<Vec<f64>> {
        let psi = self.state_at(t)?;
        Ok((0..family.cell_count())
            .map(|i| {
                family
                    .cell(i)
                    .iter()
                    .map(|&g| psi.amplitude(g).norm_sqr())
                    .sum()
            })
            .collect())
    }

    /// Transition rates at time `t` for `family`.
    pub fn rates_at(&self, family: &ProjectorFamily, t: f64, eps_occ: f64) -> Result<RateMatrix> {
        let decomp = self.decomposition_at(family, t, eps_occ)?;
        rates_pure(&decomp, self.hamiltonian_at(t)?, self.system.hbar)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use num_complex::Complex64 as C64;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn sigma_x(scale: f64) -> HermitianOperator {
        HermitianOperator::new(DMatrix::from_row_slice(
            2,
            2,
            &[c(0.0, 0.0), c(scale, 0.0), c(scale, 0.0), c(0.0, 0.0)],
        ))
        .unwrap()
    }

    #[test]
    fn piecewise_schedule_evolves_exactly() {
        // Two segments: free, then a pi/2 pulse.
        let omega = 1.0;
        let sys = ScheduledSystem {
            segments: vec![
                Segment {
                    t0: 0.0,
                    t1: 1.0,
                    hamiltonian: HermitianOperator::zero(2),
                },
                Segment {
                    t0: 1.0,
                    t1: 1.0 + std::f64::consts::FRAC_PI_2 / omega,
                    hamiltonian: sigma_x(omega),
                },
            ],
            initial: StateVector::basis_state(2, 0),
            hbar: 1.0,
        };
        let flow = SystemFlow::prepare(sys).unwrap();
        let mid = flow.state_at(1.0).unwrap();
        assert!((mid.amplitude(0) - c(1.0, 0.0)).norm() < 1e-12);
        let end = flow.state_at(flow.t_end()).unwrap();
        assert!((end.amplitude(1) - c(0.0, -1.0)).norm() < 1e-10);
        // Norm is preserved everywhere.
        for k in 0..20 {
            let t = flow.t_start() + k as f64 * (flow.t_end() - flow.t_start()) / 19.0;
            assert!(flow.state_at(t).unwrap().norm_defect() < 1e-10);
        }
    }

    #[test]
    fn schedule_validation_errors() {
        let bad_gap = ScheduledSystem {
            segments: vec![
                Segment {
                    t0: 0.0,
                    t1: 1.0,
                    hamiltonian: HermitianOperator::zero(2),
                },
                Segment {
                    t0: 1.5,
                    t1: 2.0,
                    hamiltonian: HermitianOperator::zero(2),
                },
            ],
            initial: StateVector::basis_state(2, 0),
            hbar: 1.0,
        };
        assert!(matches!(
            SystemFlow::prepare(bad_gap),
            Err(crate::Error::Config(_))
        ));
        let flow = SystemFlow::prepare(ScheduledSystem::constant(
            HermitianOperator::zero(2),
            StateVector::basis_state(2, 0),
            1.0,
            0.0,
            1.0,
        ))
        .unwrap();
        assert!(matches!(flow.state_at(2.0), Err(crate::Error::Range(_))));
    }

    #[test]
    fn weights_follow_rabi_oscillation() {
        let omega = 0.8;
        let sys = ScheduledSystem::constant(
            sigma_x(omega),
            StateVector::new(DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)])).unwrap(),
            1.0,
            0.0,
            3.0,
        );
        let flow = SystemFlow::prepare(sys).unwrap();
        let fam = crate::microstates::ProjectorFamily::from_index_cells(
            2,
            vec![vec![0], vec![1]],
            vec![
                crate::microstates::CellLabel::Name("0".into()),
                crate::microstates::CellLabel::Name("1".into()),
            ],
            1.0,
        )
        .unwrap();
        for &t in &[0.3, 1.1, 2.7] {
            let w = flow.weights_at(&fam, t).unwrap();
            assert!((w[0] - (omega * t).cos().powi(2)).abs() < 1e-10);
            assert!((w[1] - (omega * t).sin().powi(2)).abs() < 1e-10);
        }
    }
}

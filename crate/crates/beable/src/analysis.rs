//! Post-processing of trajectories and decompositions: time averages,
//! equilibration and ergodicity diagnostics, drift and variance statistics.

use nalgebra::DMatrix;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::dynamics::{integrated_probabilities, JumpTrajectory, SystemFlow};
use crate::error::{Error, Result};
use crate::microstates::{CoarseObservable, ProjectorFamily};

/// Per-time empirical occupancy frequencies next to the theoretical weights.
#[derive(Debug, Clone)]
pub struct OccupancyStats {
    pub times: Vec<f64>,
    /// `frequencies[k][i]`: fraction of trajectories in cell `i` at time `k`.
    pub frequencies: Vec<Vec<f64>>,
    /// `weights[k][i]`: `|c_i(t_k)|^2`.
    pub weights: Vec<Vec<f64>>,
    pub trajectories: usize,
}

impl OccupancyStats {
    /// Largest `|frequency - weight|` over all times and cells.
    pub fn max_abs_deviation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (f_row, w_row) in self.frequencies.iter().zip(&self.weights) {
            for (f, w) in f_row.iter().zip(w_row) {
                worst = worst.max((f - w).abs());
            }
        }
        worst
    }

    /// Whether every deviation stays below `z` binomial standard errors
    /// (with a small absolute floor so zero-weight cells do not trip on a
    /// single stray count).
    pub fn within_binomial(&self, z: f64) -> bool {
        let n = self.trajectories as f64;
        for (f_row, w_row) in self.frequencies.iter().zip(&self.weights) {
            for (f, w) in f_row.iter().zip(w_row) {
                let sigma = (w * (1.0 - w) / n).sqrt().max(1.0 / n);
                if (f - w).abs() > z * sigma {
                    return false;
                }
            }
        }
        true
    }
}

/// Tabulates ensemble occupancy against theoretical weights at the given
/// probe times.
pub fn occupancy_stats(
    ensemble: &[JumpTrajectory],
    flow: &SystemFlow,
    family: &ProjectorFamily,
    times: &[f64],
) -> Result<OccupancyStats> {
    if ensemble.is_empty() {
        return Err(Error::Config("occupancy_stats needs trajectories".into()));
    }
    let n_cells = family.cell_count();
    let n = ensemble.len() as f64;
    let mut frequencies = Vec::with_capacity(times.len());
    let mut weights = Vec::with_capacity(times.len());
    for &t in times {
        let mut counts = vec![0usize; n_cells];
        for traj in ensemble {
            counts[traj.index_at(t)] += 1;
        }
        frequencies.push(counts.iter().map(|&c| c as f64 / n).collect());
        weights.push(flow.weights_at(family, t)?);
    }
    Ok(OccupancyStats {
        times: times.to_vec(),
        frequencies,
        weights,
        trajectories: ensemble.len(),
    })
}

/// Time average `(1/T) \int <Psi_{i(t)}|O|Psi_{i(t)}> dt` over a window,
/// computed exactly from the piecewise-constant occupancy and the per-cell
/// eigenvalues of a coarse observable built on the trajectory's family.
pub fn time_average(
    trajectory: &JumpTrajectory,
    observable: &CoarseObservable,
    window: (f64, f64),
) -> Result<f64> {
    let (a, b) = window;
    if b <= a {
        return Err(Error::Range(format!("empty window [{a}, {b}]")));
    }
    let slack = 1e-9 * (1.0 + b.abs());
    if a < trajectory.t0 - slack || b > trajectory.t1 + slack {
        return Err(Error::Range(format!(
            "window [{a}, {b}] exceeds trajectory span [{}, {}]",
            trajectory.t0, trajectory.t1
        )));
    }
    if observable.family().cell_count() != trajectory.cell_count {
        return Err(Error::Shape(
            "observable family does not match the trajectory's cells".into(),
        ));
    }
    let mut acc = 0.0;
    let mut t_cur = trajectory.t0;
    let mut cell = trajectory.initial_index;
    for ev in trajectory
        .events
        .iter()
        .chain(std::iter::once(&crate::dynamics::JumpEvent {
            time: trajectory.t1.max(b),
            from: 0,
            to: 0,
        }))
    {
        let seg_end = ev.time;
        let lo = t_cur.max(a);
        let hi = seg_end.min(b);
        if hi > lo {
            acc += (hi - lo) * observable.value(cell);
        }
        t_cur = seg_end;
        cell = ev.to;
        if t_cur >= b {
            break;
        }
    }
    Ok(acc / (b - a))
}

/// Equilibration report: time-averaged weights against the microcanonical
/// target `d_i / N` and the analytic dephasing average.
#[derive(Debug, Clone)]
pub struct EquilibrationReport {
    pub times: Vec<f64>,
    /// Time-averaged weights per cell.
    pub time_average: Vec<f64>,
    /// Microcanonical target `rank_i / dim`.
    pub target: Vec<f64>,
    /// Analytic infinite-time (dephasing) average
    /// `sum_n |<Psi_i|n>|^2 |<n|Psi(0)>|^2` per cell.
    pub oracle: Vec<f64>,
    pub max_rel_deviation_from_target: f64,
    pub max_rel_deviation_from_oracle: f64,
    /// Empirical per-cell fluctuation scale (std of `w_i(t)` over samples).
    pub fluctuation_scale: Vec<f64>,
    /// Fraction of (cell, time) samples deviating from the time average by
    /// more than three fluctuation scales.
    pub fraction_beyond_3sigma: f64,
    /// Weights never moved: the family is superselected (e.g. H commutes
    /// with every projector) and no equilibration can occur.
    pub frozen: bool,
}

/// Compares time-averaged cell weights with the equilibration targets over
/// `samples` evenly spaced times in `[t_start, t_start + horizon]`.
pub fn equilibration_check(
    flow: &SystemFlow,
    family: &ProjectorFamily,
    horizon: f64,
    samples: usize,
) -> Result<EquilibrationReport> {
    if samples < 2 {
        return Err(Error::Config(
            "equilibration_check needs >= 2 samples".into(),
        ));
    }
    if flow.system().segments.len() != 1 {
        return Err(Error::Config(
            "equilibration_check expects a constant Hamiltonian (single segment)".into(),
        ));
    }
    let t0 = flow.t_start();
    if t0 + horizon > flow.t_end() + 1e-9 {
        return Err(Error::Range(format!(
            "horizon {horizon} exceeds the schedule end {}",
            flow.t_end()
        )));
    }
    let n_cells = family.cell_count();
    let dim = flow.dim() as f64;
    let times: Vec<f64> = (0..samples)
        .map(|k| t0 + horizon * (k as f64 + 0.5) / samples as f64)
        .collect();
    let mut sums = vec![0.0; n_cells];
    let mut sq_sums = vec![0.0; n_cells];
    let mut rows = Vec::with_capacity(samples);
    for &t in &times {
        let w = flow.weights_at(family, t)?;
        for i in 0..n_cells {
            sums[i] += w[i];
            sq_sums[i] += w[i] * w[i];
        }
        rows.push(w);
    }
    let time_average: Vec<f64> = sums.iter().map(|s| s / samples as f64).collect();
    let fluctuation_scale: Vec<f64> = (0..n_cells)
        .map(|i| {
            (sq_sums[i] / samples as f64 - time_average[i] * time_average[i])
                .max(0.0)
                .sqrt()
        })
        .collect();
    let target: Vec<f64> = (0..n_cells)
        .map(|i| family.cell(i).len() as f64 / dim)
        .collect();

    // Analytic dephasing oracle from the eigensystem.
    let eig = flow.eigensystem(0);
    let w0 = flow.state_at(t0)?;
    let coeffs = eig.vectors.adjoint() * w0.amplitudes();
    let mut oracle = vec![0.0; n_cells];
    for (i, cell) in family.cells().iter().enumerate() {
        for (n_idx, c) in coeffs.iter().enumerate() {
            let overlap: f64 = cell
                .iter()
                .map(|&g| eig.vectors[(g, n_idx)].norm_sqr())
                .sum();
            oracle[i] += overlap * c.norm_sqr();
        }
    }

    let rel = |x: f64, y: f64| (x - y).abs() / y.max(1e-300);
    let max_rel_deviation_from_target = (0..n_cells)
        .map(|i| rel(time_average[i], target[i]))
        .fold(0.0, f64::max);
    let max_rel_deviation_from_oracle = (0..n_cells)
        .map(|i| rel(time_average[i], oracle[i].max(1e-300)))
        .fold(0.0, f64::max);

    let mut beyond = 0usize;
    let mut frozen = true;
    let first = &rows[0];
    for row in &rows {
        for i in 0..n_cells {
            if (row[i] - first[i]).abs() > 1e-10 {
                frozen = false;
            }
            if fluctuation_scale[i] > 0.0
                && (row[i] - time_average[i]).abs() > 3.0 * fluctuation_scale[i]
            {
                beyond += 1;
            }
        }
    }
    Ok(EquilibrationReport {
        times,
        time_average,
        target,
        oracle,
        max_rel_deviation_from_target,
        max_rel_deviation_from_oracle,
        fluctuation_scale,
        fraction_beyond_3sigma: beyond as f64 / (samples * n_cells) as f64,
        frozen,
    })
}

/// Exponential fit to the loss of initial-state memory.
#[derive(Debug, Clone)]
pub struct DecayFit {
    pub times: Vec<f64>,
    /// Memory metric `max_i max_{j,k} |p_{i|j} - p_{i|k}|` at each time.
    pub metric: Vec<f64>,
    /// Fitted decay rate (1/time).
    pub mu: f64,
    /// RMS residual of the log-linear fit.
    pub residual: f64,
}

/// Memory metric of the integrated probabilities at each probe time.
///
/// The transition matrix is accumulated incrementally: the window
/// `[t_ref, T_k]` is extended probe by probe and composed, so the cost is a
/// single pass over `[t_ref, max T]`.
pub fn memory_metric_series(
    flow: &SystemFlow,
    family: &ProjectorFamily,
    t_ref: f64,
    probe_times: &[f64],
    dt: f64,
    eps_occ: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut sorted = probe_times.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if sorted.is_empty() || sorted[0] <= 0.0 {
        return Err(Error::Config("probe times must be positive offsets".into()));
    }
    let n = family.cell_count();
    let mut p_total = DMatrix::<f64>::identity(n, n);
    let mut t_cur = t_ref;
    let mut metric = Vec::with_capacity(sorted.len());
    for &offset in &sorted {
        let t_target = t_ref + offset;
        let leg = integrated_probabilities(flow, family, t_cur, t_target, dt, eps_occ)?;
        p_total = leg.matrix() * p_total;
        t_cur = t_target;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let row = p_total.row(i);
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for &v in row.iter() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            worst = worst.max(hi - lo);
        }
        metric.push(worst);
    }
    Ok((sorted, metric))
}

/// Fits an exponential decay rate to the memory metric over the probe
/// times, excluding points below the noise floor.
pub fn ergodicity_decay(
    flow: &SystemFlow,
    family: &ProjectorFamily,
    t_ref: f64,
    probe_times: &[f64],
    dt: f64,
    eps_occ: f64,
    noise_floor: f64,
) -> Result<DecayFit> {
    if probe_times.len() < 4 {
        return Err(Error::Config(
            "ergodicity_decay needs >= 4 probe times".into(),
        ));
    }
    let (times, metric) = memory_metric_series(flow, family, t_ref, probe_times, dt, eps_occ)?;
    let usable: Vec<(f64, f64)> = times
        .iter()
        .zip(&metric)
        .filter(|(_, &m)| m > noise_floor)
        .map(|(&t, &m)| (t, m))
        .collect();
    if usable.len() < 2 {
        return Err(Error::Fit(format!(
            "only {} points above the noise floor {noise_floor}; metric {metric:?}",
            usable.len()
        )));
    }
    // Reject metrics that rise beyond noise.
    for w in usable.windows(2) {
        if w[1].1 > w[0].1 * 1.5 {
            return Err(Error::Fit(format!(
                "memory metric is not monotone beyond noise: times {times:?}, metric {metric:?}"
            )));
        }
    }
    // Least squares on ln m = ln A - mu t.
    let n = usable.len() as f64;
    let sx: f64 = usable.iter().map(|(t, _)| t).sum();
    let sy: f64 = usable.iter().map(|(_, m)| m.ln()).sum();
    let sxx: f64 = usable.iter().map(|(t, _)| t * t).sum();
    let sxy: f64 = usable.iter().map(|(t, m)| t * m.ln()).sum();
    let denom = n * sxx - sx * sx;
    if denom <= 0.0 {
        return Err(Error::Fit("degenerate probe times".into()));
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let mu = -slope;
    if mu <= 0.0 {
        return Err(Error::Fit(format!(
            "fitted rate is not positive: mu = {mu}; metric {metric:?}"
        )));
    }
    let residual = (usable
        .iter()
        .map(|(t, m)| {
            let pred = intercept + slope * t;
            (m.ln() - pred).powi(2)
        })
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(DecayFit {
        times,
        metric,
        mu,
        residual,
    })
}

/// Ensemble mean and variance of the occupied-cell center position.
#[derive(Debug, Clone)]
pub struct DriftVariance {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

/// Per-time empirical mean and variance of occupied-cell centers over an
/// ensemble of particle trajectories. Positions are unwrapped across
/// periodic boundaries (hops count by shortest signed displacement).
pub fn drift_variance(
    ensemble: &[JumpTrajectory],
    cell_centers: &[f64],
    times: &[f64],
) -> Result<DriftVariance> {
    if ensemble.is_empty() {
        return Err(Error::Config("drift_variance needs trajectories".into()));
    }
    let n_cells = cell_centers.len();
    if ensemble.iter().any(|t| t.cell_count != n_cells) {
        return Err(Error::Shape(
            "cell centers do not match trajectory cell count".into(),
        ));
    }
    let spacing = if n_cells > 1 {
        cell_centers[1] - cell_centers[0]
    } else {
        1.0
    };
    let n = ensemble.len() as f64;
    let mut mean = vec![0.0; times.len()];
    let mut sq = vec![0.0; times.len()];
    for traj in ensemble {
        let mut pos = cell_centers[traj.initial_index];
        let mut ev_idx = 0usize;
        for (k, &t) in times.iter().enumerate() {
            while ev_idx < traj.events.len() && traj.events[ev_idx].time <= t {
                let ev = &traj.events[ev_idx];
                let mut d = ev.to as i64 - ev.from as i64;
                let half = (n_cells / 2) as i64;
                if d > half {
                    d -= n_cells as i64;
                } else if d < -half {
                    d += n_cells as i64;
                }
                pos += d as f64 * spacing;
                ev_idx += 1;
            }
            mean[k] += pos;
            sq[k] += pos * pos;
        }
    }
    let mut variance = vec![0.0; times.len()];
    for k in 0..times.len() {
        mean[k] /= n;
        variance[k] = (sq[k] / n - mean[k] * mean[k]).max(0.0);
    }
    Ok(DriftVariance {
        times: times.to_vec(),
        mean,
        variance,
    })
}

/// Result of a chi-square comparison against a binomial law.
#[derive(Debug, Clone)]
pub struct BinomialChiSquare {
    pub chi2: f64,
    pub dof: usize,
    pub p_value: f64,
    pub bins: usize,
}

/// Chi-square test of hop-count data against `Binomial(n_trials, p)`.
/// Adjacent bins are merged until every expected count is at least five.
pub fn binomial_displacement_test(
    displacements: &[i64],
    n_trials: u64,
    p: f64,
) -> Result<BinomialChiSquare> {
    if displacements.is_empty() {
        return Err(Error::Config("no displacement samples".into()));
    }
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Config(format!("binomial p = {p} out of range")));
    }
    let n_samples = displacements.len() as f64;
    // Binomial pmf by stable forward recursion.
    let nt = n_trials as usize;
    let mut pmf = vec![0.0f64; nt + 1];
    pmf[0] = (1.0 - p).powi(nt as i32);
    for k in 0..nt {
        pmf[k + 1] = pmf[k] * ((nt - k) as f64) / ((k + 1) as f64) * p / (1.0 - p);
    }
    let mut observed = vec![0.0f64; nt + 1];
    let mut out_of_range = 0usize;
    for &d in displacements {
        if d < 0 || d > nt as i64 {
            out_of_range += 1;
        } else {
            observed[d as usize] += 1.0;
        }
    }
    if out_of_range > 0 {
        return Err(Error::Domain(format!(
            "{out_of_range} displacement samples outside [0, {nt}] cannot be binomial"
        )));
    }
    // Merge adjacent bins until expected >= 5.
    let mut merged: Vec<(f64, f64)> = Vec::new();
    let mut acc_obs = 0.0;
    let mut acc_exp = 0.0;
    for k in 0..=nt {
        acc_obs += observed[k];
        acc_exp += pmf[k] * n_samples;
        if acc_exp >= 5.0 {
            merged.push((acc_obs, acc_exp));
            acc_obs = 0.0;
            acc_exp = 0.0;
        }
    }
    if acc_exp > 0.0 || acc_obs > 0.0 {
        if let Some(last) = merged.last_mut() {
            last.0 += acc_obs;
            last.1 += acc_exp;
        } else {
            merged.push((acc_obs, acc_exp));
        }
    }
    if merged.len() < 2 {
        return Err(Error::Fit(
            "too few populated bins for a chi-square test".into(),
        ));
    }
    let chi2: f64 = merged.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = merged.len() - 1;
    let dist = ChiSquared::new(dof as f64)
        .map_err(|e| Error::Numerical(format!("chi-square dof: {e}")))?;
    let p_value = 1.0 - dist.cdf(chi2);
    Ok(BinomialChiSquare {
        chi2,
        dof,
        p_value,
        bins: merged.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{
        sample_ensemble, EnsembleOptions, InitialCondition, JumpEvent, ScheduledSystem,
    };
    use crate::linalg::{HermitianOperator, StateVector};
    use crate::microstates::{build_coarse_observable, CellLabel, EPS_OCC};
    use nalgebra::DVector;
    use num_complex::Complex64 as C64;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn singleton_family(dim: usize) -> ProjectorFamily {
        ProjectorFamily::from_index_cells(
            dim,
            (0..dim).map(|g| vec![g]).collect(),
            (0..dim).map(|g| CellLabel::Name(format!("{g}"))).collect(),
            1.0,
        )
        .unwrap()
    }

    fn manual_trajectory(events: Vec<JumpEvent>, t0: f64, t1: f64, cells: usize) -> JumpTrajectory {
        JumpTrajectory {
            trajectory_id: 0,
            t0,
            t1,
            initial_index: 0,
            events,
            repair_events: 0,
            steps: 0,
            cell_count: cells,
        }
    }

    #[test]
    fn time_average_constant_occupancy() {
        let fam = singleton_family(3);
        let obs = build_coarse_observable(&fam, 0.0, 1.0);
        let traj = manual_trajectory(vec![], 0.0, 2.0, 3);
        let avg = time_average(&traj, &obs, (0.0, 2.0)).unwrap();
        assert!((avg - obs.value(0)).abs() < 1e-14);
    }

    #[test]
    fn time_average_alternating_renewal_oracle() {
        // Closed-form: occupancy splits the window 50/50 between the two
        // cells, so the average is the midpoint of the two eigenvalues.
        let fam = singleton_family(2);
        let obs = build_coarse_observable(&fam, 0.0, 1.0);
        let mut events = Vec::new();
        for k in 0..10 {
            let t = 0.5 + k as f64;
            events.push(JumpEvent {
                time: t,
                from: k % 2,
                to: (k + 1) % 2,
            });
        }
        let traj = manual_trajectory(events, 0.0, 10.0, 2);
        let avg = time_average(&traj, &obs, (0.0, 10.0)).unwrap();
        let oracle = 0.5 * (obs.value(0) + obs.value(1));
        assert!((avg - oracle).abs() < 1e-12, "{avg} vs {oracle}");
        // Linearity in the observable.
        let obs2 = build_coarse_observable(&fam, 1.0, 3.0);
        let avg2 = time_average(&traj, &obs2, (0.0, 10.0)).unwrap();
        let oracle2 = 0.5 * (obs2.value(0) + obs2.value(1));
        assert!((avg2 - oracle2).abs() < 1e-12);
    }

    #[test]
    fn time_average_window_errors() {
        let fam = singleton_family(2);
        let obs = build_coarse_observable(&fam, 0.0, 1.0);
        let traj = manual_trajectory(vec![], 0.0, 1.0, 2);
        assert!(matches!(
            time_average(&traj, &obs, (0.0, 2.0)),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn frozen_dynamics_is_flagged() {
        // H commutes with the projectors: weights never move.
        let h = HermitianOperator::new(nalgebra::DMatrix::from_diagonal(&DVector::from_vec(vec![
            c(0.3, 0.0),
            c(1.1, 0.0),
            c(2.2, 0.0),
        ])))
        .unwrap();
        let psi = StateVector::from_unnormalized(DVector::from_vec(vec![
            c(1.0, 0.0),
            c(1.0, 0.0),
            c(1.0, 0.0),
        ]))
        .unwrap();
        let flow =
            crate::dynamics::SystemFlow::prepare(ScheduledSystem::constant(h, psi, 1.0, 0.0, 10.0))
                .unwrap();
        let fam = singleton_family(3);
        let report = equilibration_check(&flow, &fam, 10.0, 50).unwrap();
        assert!(report.frozen);
    }

    #[test]
    fn drift_variance_zero_current() {
        let traj = manual_trajectory(vec![], 0.0, 1.0, 4);
        let centers = vec![0.5, 1.5, 2.5, 3.5];
        let dv = drift_variance(&[traj], &centers, &[0.0, 0.5, 1.0]).unwrap();
        for k in 0..3 {
            assert!((dv.mean[k] - 0.5).abs() < 1e-14);
            assert_eq!(dv.variance[k], 0.0);
        }
    }

    #[test]
    fn drift_variance_unwraps_periodic_hops() {
        // Forward hops across the wrap must accumulate, not jump backwards.
        let events = vec![
            JumpEvent {
                time: 0.25,
                from: 2,
                to: 3,
            },
            JumpEvent {
                time: 0.50,
                from: 3,
                to: 0,
            },
            JumpEvent {
                time: 0.75,
                from: 0,
                to: 1,
            },
        ];
        let mut traj = manual_trajectory(events, 0.0, 1.0, 4);
        traj.initial_index = 2;
        let centers = vec![0.5, 1.5, 2.5, 3.5];
        let dv = drift_variance(&[traj], &centers, &[1.0]).unwrap();
        assert!((dv.mean[0] - (2.5 + 3.0)).abs() < 1e-12, "{}", dv.mean[0]);
    }

    #[test]
    fn binomial_test_accepts_binomial_data() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let n_trials = 80u64;
        let p = 0.04;
        let data: Vec<i64> = (0..20_000)
            .map(|_| (0..n_trials).filter(|_| rng.gen::<f64>() < p).count() as i64)
            .collect();
        let result = binomial_displacement_test(&data, n_trials, p).unwrap();
        assert!(result.p_value > 0.01, "p = {}", result.p_value);
    }

    #[test]
    fn binomial_test_rejects_shifted_data() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let n_trials = 80u64;
        let data: Vec<i64> = (0..20_000)
            .map(|_| (0..n_trials).filter(|_| rng.gen::<f64>() < 0.08).count() as i64)
            .collect();
        let result = binomial_displacement_test(&data, n_trials, 0.04).unwrap();
        assert!(result.p_value < 1e-6, "p = {}", result.p_value);
    }

    #[test]
    fn occupancy_stats_track_rabi_weights() {
        let omega = 1.0;
        let h = HermitianOperator::new(nalgebra::DMatrix::from_row_slice(
            2,
            2,
            &[c(0.0, 0.0), c(omega, 0.0), c(omega, 0.0), c(0.0, 0.0)],
        ))
        .unwrap();
        let psi = StateVector::new(DVector::from_vec(vec![
            c(0.6f64.sqrt(), 0.0),
            c(0.0, 0.4f64.sqrt()),
        ]))
        .unwrap();
        let flow =
            crate::dynamics::SystemFlow::prepare(ScheduledSystem::constant(h, psi, 1.0, 0.0, 1.0))
                .unwrap();
        let fam = singleton_family(2);
        let opts = EnsembleOptions {
            t0: 0.0,
            t1: 1.0,
            dt: 2e-3,
            master_seed: 31,
            trajectories: 8000,
            initial: InitialCondition::DrawFromWeights,
            eps_occ: EPS_OCC,
            threads: 1,
        };
        let ensemble = sample_ensemble(&flow, &fam, &opts).unwrap();
        let stats = occupancy_stats(&ensemble, &flow, &fam, &[0.25, 0.5, 1.0]).unwrap();
        assert!(
            stats.within_binomial(3.5),
            "max dev {}",
            stats.max_abs_deviation()
        );
        for row in &stats.frequencies {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ergodic_trajectory_time_average_matches_ensemble() {
        // A single long trajectory's time average of a coarse observable
        // approaches the ensemble average sum_i |c_i|^2 <Psi_i|O|Psi_i>.
        let horizon = 400.0;
        let spec = crate::scenarios::make_ergodic(40, 1.0, &vec![1usize; 40], 11)
            .unwrap()
            .with_final_time(horizon)
            .unwrap();
        let flow = spec.flow().unwrap();
        let fam = spec.primary();
        let obs = build_coarse_observable(fam, 0.0, 1.0);
        let traj = crate::dynamics::sample_trajectory(
            &flow,
            fam,
            0.0,
            horizon,
            0.01,
            1,
            InitialCondition::DrawFromWeights,
            EPS_OCC,
        )
        .unwrap();
        let avg = time_average(&traj, &obs, (0.0, horizon)).unwrap();
        let samples = 2000;
        let mut ensemble_value = 0.0;
        for k in 0..samples {
            let t = horizon * (k as f64 + 0.5) / samples as f64;
            let w = flow.weights_at(fam, t).unwrap();
            ensemble_value += (0..40).map(|i| w[i] * obs.value(i)).sum::<f64>();
        }
        ensemble_value /= samples as f64;
        assert!(
            (avg - ensemble_value).abs() < 0.05 * ensemble_value.abs(),
            "trajectory average {avg:.4} vs ensemble {ensemble_value:.4}"
        );
    }

    #[test]
    fn decay_fit_errors_on_constant_metric() {
        // All rates zero: the metric never decays, so the fit must fail.
        let h = HermitianOperator::zero(3);
        let psi = StateVector::from_unnormalized(DVector::from_vec(vec![
            c(1.0, 0.0),
            c(1.0, 0.0),
            c(1.0, 0.0),
        ]))
        .unwrap();
        let flow =
            crate::dynamics::SystemFlow::prepare(ScheduledSystem::constant(h, psi, 1.0, 0.0, 10.0))
                .unwrap();
        let fam = singleton_family(3);
        let result = ergodicity_decay(&flow, &fam, 0.0, &[1.0, 2.0, 3.0, 4.0], 0.05, EPS_OCC, 1e-6);
        assert!(matches!(result, Err(Error::Fit(_))));
    }
}

//! Continuous-time jump sampling by first-order thinning on an adaptive
//! shared time grid.
//!
//! All trajectories of an ensemble walk the same interval sequence in
//! lockstep; each trajectory owns an independent ChaCha stream derived from
//! `(master_seed, trajectory_id)`, so results are bitwise reproducible
//! regardless of thread count and scheduling.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::microstates::ProjectorFamily;

use super::{rates_pure, RateMatrix, SystemFlow, RATE_STEP_CAP};

/// Weight below which a cell is ignored when sizing thinning steps. Cells
/// this empty hold the realized index with probability below the floor, so
/// coarse thinning there cannot bias ensemble statistics measurably.
const SUBDIVISION_WEIGHT_FLOOR: f64 = 1e-9;

/// Hard limit on recursive step halving.
const MAX_SPLIT_DEPTH: u32 = 48;

/// How the initial microstate index is chosen.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialCondition {
    /// Start from a fixed cell.
    Cell(usize),
    /// Draw from the weight distribution `|c_i(t0)|^2`.
    DrawFromWeights,
}

/// A single jump of the realized microstate index.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct JumpEvent {
    pub time: f64,
    pub from: usize,
    pub to: usize,
}

/// Piecewise-constant record of the realized microstate index.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct JumpTrajectory {
    pub trajectory_id: u64,
    pub t0: f64,
    pub t1: f64,
    pub initial_index: usize,
    pub events: Vec<JumpEvent>,
    /// Number of starvation repairs (occupied cell drained below threshold
    /// and the index was redrawn from the current weights). Repairs also
    /// appear in `events` when they move the index.
    pub repair_events: usize,
    /// Number of thinning intervals this trajectory stepped through.
    pub steps: usize,
    pub cell_count: usize,
}

impl JumpTrajectory {
    /// Occupied cell at time `t` (events take effect at their timestamp).
    pub fn index_at(&self, t: f64) -> usize {
        let mut idx = self.initial_index;
        for ev in &self.events {
            if ev.time <= t {
                idx = ev.to;
            } else {
                break;
            }
        }
        idx
    }

    pub fn final_index(&self) -> usize {
        self.events
            .last()
            .map(|e| e.to)
            .unwrap_or(self.initial_index)
    }

    /// Net displacement in cells, unwrapping nearest-neighbour hops across a
    /// periodic boundary; non-neighbour moves count by shortest signed hop.
    pub fn unwrapped_displacement(&self) -> i64 {
        let n = self.cell_count as i64;
        let mut total = 0i64;
        for ev in &self.events {
            let mut d = ev.to as i64 - ev.from as i64;
            if d > n / 2 {
                d -= n;
            } else if d < -(n / 2) {
                d += n;
            }
            total += d;
        }
        total
    }
}

/// One interval of the shared thinning grid.
#[derive(Debug, Clone)]
pub struct ScheduleInterval {
    pub t: f64,
    pub len: f64,
    pub rates: RateMatrix,
    /// Cell weights at the interval start.
    pub weights: Vec<f64>,
}

/// Cached thinning grid over a time window.
#[derive(Debug, Clone)]
pub struct RateSchedule {
    pub t0: f64,
    pub t1: f64,
    pub intervals: Vec<ScheduleInterval>,
}

/// Streaming generator of thinning intervals: walks `[t0, t1]` in steps of
/// `dt`, halving any interval whose `max_j total_outflow_j * len` exceeds the
/// cap (outflow taken over cells above the subdivision weight floor).
struct ScheduleWalker<'a> {
    flow: &'a SystemFlow,
    family: &'a ProjectorFamily,
    t1: f64,
    dt: f64,
    cap: f64,
    eps_occ: f64,
    cursor: f64,
    pending: Vec<(f64, f64, u32)>,
}

impl<'a> ScheduleWalker<'a> {
    fn new(
        flow: &'a SystemFlow,
        family: &'a ProjectorFamily,
        t0: f64,
        t1: f64,
        dt: f64,
        cap: f64,
        eps_occ: f64,
    ) -> Self {
        Self {
            flow,
            family,
            t1,
            dt,
            cap,
            eps_occ,
            cursor: t0,
            pending: Vec::new(),
        }
    }

    fn evaluate(&self, t: f64) -> Result<(RateMatrix, Vec<f64>)> {
        let decomp = self.flow.decomposition_at(self.family, t, self.eps_occ)?;
        let rates = rates_pure(&decomp, self.flow.hamiltonian_at(t)?, self.flow.hbar())?;
        Ok((rates, decomp.weights()))
    }

    fn next_interval(&mut self) -> Result<Option<ScheduleInterval>> {
        let tiny = 1e-12 * (1.0 + self.t1.abs());
        let (t, mut len, mut depth) = match self.pending.pop() {
            Some(x) => x,
            None => {
                if self.cursor >= self.t1 - tiny {
                    return Ok(None);
                }
                let len = self.dt.min(self.t1 - self.cursor);
                let t = self.cursor;
                self.cursor += len;
                (t, len, 0)
            }
        };
        let (rates, weights) = self.evaluate(t)?;
        let mut max_out: f64 = 0.0;
        for (j, &w) in weights.iter().enumerate() {
            if w >= SUBDIVISION_WEIGHT_FLOOR {
                max_out = max_out.max(rates.total_outflow(j));
            }
        }
        // Halve until the cap holds, keeping the left piece (its rates are
        // already evaluated) and deferring the right halves.
        while max_out * len > self.cap && depth < MAX_SPLIT_DEPTH {
            len *= 0.5;
            depth += 1;
            self.pending.push((t + len, len, depth));
        }
        Ok(Some(ScheduleInterval {
            t,
            len,
            rates,
            weights,
        }))
    }
}

/// Materializes the full thinning grid. Useful for inspection and for small
/// systems; ensembles stream the same grid without storing it.
pub fn build_rate_schedule(
    flow: &SystemFlow,
    family: &ProjectorFamily,
    t0: f64,
    t1: f64,
    dt: f64,
    eps_occ: f64,
) -> Result<RateSchedule> {
    let mut walker = ScheduleWalker::new(flow, family, t0, t1, dt, RATE_STEP_CAP, eps_occ);
    let mut intervals = Vec::new();
    while let Some(iv) = walker.next_interval()? {
        intervals.push(iv);
    }
    Ok(RateSchedule { t0, t1, intervals })
}

/// Ensemble sampling options.
#[derive(Debug, Clone)]
pub struct EnsembleOptions {
    pub t0: f64,
    pub t1: f64,
    /// Base thinning step; intervals shrink automatically under the cap.
    pub dt: f64,
    pub master_seed: u64,
    pub trajectories: usize,
    pub initial: InitialCondition,
    pub eps_occ: f64,
    /// Worker threads; 0 or 1 runs serially.
    pub threads: usize,
}

struct TrajState {
    id: u64,
    rng: ChaCha12Rng,
    initial: usize,
    cell: usize,
    events: Vec<JumpEvent>,
    repairs: usize,
    steps: usize,
}

fn draw_from_weights(weights: &[f64], rng: &mut ChaCha12Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let u: f64 = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

fn advance(state: &mut TrajState, iv: &ScheduleInterval, eps_occ: f64) {
    state.steps += 1;
    // Starvation repair: the occupied cell's theoretical weight has drained
    // below threshold without a jump firing; redraw from current weights.
    if iv.weights[state.cell] < eps_occ {
        let new_cell = draw_from_weights(&iv.weights, &mut state.rng);
        state.repairs += 1;
        if new_cell != state.cell {
            state.events.push(JumpEvent {
                time: iv.t,
                from: state.cell,
                to: new_cell,
            });
            state.cell = new_cell;
        }
        return;
    }
    let out = iv.rates.total_outflow(state.cell);
    if out <= 0.0 {
        return;
    }
    let p_jump = (out * iv.len).min(1.0);
    let u: f64 = state.rng.gen();
    if u >= p_jump {
        return;
    }
    // Locate the target by inverse CDF over the column.
    let threshold = u / iv.len;
    let mut acc = 0.0;
    let n = iv.rates.n();
    let mut target = state.cell;
    for i in 0..n {
        if i == state.cell {
            continue;
        }
        acc += iv.rates.rate(i, state.cell);
        if acc > threshold {
            target = i;
            break;
        }
    }
    if target == state.cell {
        // Clamped p_jump can overshoot the actual column mass; no jump.
        return;
    }
    debug_assert!(iv.rates.rate(target, state.cell) > 0.0);
    state.events.push(JumpEvent {
        time: iv.t + iv.len,
        from: state.cell,
        to: target,
    });
    state.cell = target;
}

/// Samples an ensemble of jump trajectories in lockstep over the shared
/// adaptive grid. Deterministic in `(options, family, flow)`: each trajectory
/// draws from its own counter-derived stream, so the result is independent of
/// `threads`.
pub fn sample_ensemble(
    flow: &SystemFlow,
    family: &ProjectorFamily,
    opts: &EnsembleOptions,
) -> Result<Vec<JumpTrajectory>> {
    if opts.trajectories == 0 {
        return Err(Error::Config(
            "ensemble needs at least one trajectory".into(),
        ));
    }
    if opts.dt <= 0.0 {
        return Err(Error::Config("ensemble dt must be positive".into()));
    }
    let init_weights = flow.weights_at(family, opts.t0)?;
    let n_cells = family.cell_count();
    let mut states: Vec<TrajState> = (0..opts.trajectories as u64)
        .map(|id| {
            let mut rng = ChaCha12Rng::seed_from_u64(opts.master_seed);
            rng.set_stream(id);
            let cell = match opts.initial {
                InitialCondition::Cell(k) => k,
                InitialCondition::DrawFromWeights => draw_from_weights(&init_weights, &mut rng),
            };
            TrajState {
                id,
                rng,
                initial: cell,
                cell,
                events: Vec::new(),
                repairs: 0,
                steps: 0,
            }
        })
        .collect();
    if let InitialCondition::Cell(k) = opts.initial {
        if k >= n_cells {
            return Err(Error::Config(format!(
                "initial cell {k} out of range for {n_cells} cells"
            )));
        }
    }

    let pool = if opts.threads > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(opts.threads)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?,
        )
    } else {
        None
    };

    let mut walker = ScheduleWalker::new(
        flow,
        family,
        opts.t0,
        opts.t1,
        opts.dt,
        RATE_STEP_CAP,
        opts.eps_occ,
    );
    while let Some(iv) = walker.next_interval()? {
        match &pool {
            Some(pool) if states.len() >= 128 => {
                use rayon::prelude::*;
                pool.install(|| {
                    states
                        .par_iter_mut()
                        .for_each(|s| advance(s, &iv, opts.eps_occ))
                });
            }
            _ => {
                for s in states.iter_mut() {
                    advance(s, &iv, opts.eps_occ);
                }
            }
        }
    }

    Ok(states
        .into_iter()
        .map(|s| JumpTrajectory {
            trajectory_id: s.id,
            t0: opts.t0,
            t1: opts.t1,
            initial_index: s.initial,
            events: s.events,
            repair_events: s.repairs,
            steps: s.steps,
            cell_count: n_cells,
        })
        .collect())
}

/// Samples a single trajectory; see [`sample_ensemble`] for the stepping and
/// reproducibility rules.
#[allow(clippy::too_many_arguments)]
pub fn sample_trajectory(
    flow: &SystemFlow,
    family: &ProjectorFamily,
    t0: f64,
    t1: f64,
    dt: f64,
    seed: u64,
    initial: InitialCondition,
    eps_occ: f64,
) -> Result<JumpTrajectory> {
    let opts = EnsembleOptions {
        t0,
        t1,
        dt,
        master_seed: seed,
        trajectories: 1,
        initial,
        eps_occ,
        threads: 1,
    };
    Ok(sample_ensemble(flow, family, &opts)?.pop().unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::ScheduledSystem;
    use crate::linalg::{HermitianOperator, StateVector};
    use crate::microstates::{CellLabel, ProjectorFamily, EPS_OCC};
    use nalgebra::{DMatrix, DVector};
    use num_complex::Complex64 as C64;

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

    fn rabi_flow(omega: f64, theta0: f64, t1: f64) -> SystemFlow {
        let h = HermitianOperator::new(DMatrix::from_row_slice(
            2,
            2,
            &[c(0.0, 0.0), c(omega, 0.0), c(omega, 0.0), c(0.0, 0.0)],
        ))
        .unwrap();
        let psi = StateVector::new(DVector::from_vec(vec![
            c(theta0.cos(), 0.0),
            c(0.0, theta0.sin()),
        ]))
        .unwrap();
        SystemFlow::prepare(ScheduledSystem::constant(h, psi, 1.0, 0.0, t1)).unwrap()
    }

    #[test]
    fn zero_rates_give_no_events() {
        let flow = SystemFlow::prepare(ScheduledSystem::constant(
            HermitianOperator::zero(3),
            StateVector::basis_state(3, 2),
            1.0,
            0.0,
            5.0,
        ))
        .unwrap();
        let fam = singleton_family(3);
        let traj = sample_trajectory(
            &flow,
            &fam,
            0.0,
            5.0,
            0.1,
            7,
            InitialCondition::Cell(2),
            EPS_OCC,
        )
        .unwrap();
        assert!(traj.events.is_empty());
        assert_eq!(traj.final_index(), 2);
        assert_eq!(traj.repair_events, 0);
    }

    #[test]
    fn determinism_across_thread_counts() {
        let flow = rabi_flow(1.0, 0.4, 1.2);
        let fam = singleton_family(2);
        let mk = |threads: usize| {
            let opts = EnsembleOptions {
                t0: 0.0,
                t1: 1.2,
                dt: 1e-2,
                master_seed: 99,
                trajectories: 300,
                initial: InitialCondition::DrawFromWeights,
                eps_occ: EPS_OCC,
                threads,
            };
            sample_ensemble(&flow, &fam, &opts).unwrap()
        };
        let a = mk(1);
        let b = mk(4);
        let c_ = mk(8);
        assert_eq!(a, b);
        assert_eq!(b, c_);
    }

    #[test]
    fn ensemble_occupancy_matches_weights() {
        // Eq-of-motion faithfulness: started from the weight distribution,
        // the ensemble occupancy at a later time reproduces |c_i(t)|^2
        // within binomial error.
        let flow = rabi_flow(1.0, 0.5, 0.9);
        let fam = singleton_family(2);
        let n = 20_000usize;
        let opts = EnsembleOptions {
            t0: 0.0,
            t1: 0.9,
            dt: 2e-3,
            master_seed: 12345,
            trajectories: n,
            initial: InitialCondition::DrawFromWeights,
            eps_occ: EPS_OCC,
            threads: 1,
        };
        let ensemble = sample_ensemble(&flow, &fam, &opts).unwrap();
        for &t in &[0.3, 0.6, 0.9] {
            let w = flow.weights_at(&fam, t).unwrap();
            let freq0 = ensemble.iter().filter(|tr| tr.index_at(t) == 0).count() as f64 / n as f64;
            let sigma = (w[0] * (1.0 - w[0]) / n as f64).sqrt();
            assert!(
                (freq0 - w[0]).abs() < 3.5 * sigma.max(1e-4),
                "t={t}: freq {freq0} vs weight {} (sigma {sigma})",
                w[0]
            );
        }
        // Repair rate should be negligible here.
        let repairs: usize = ensemble.iter().map(|t| t.repair_events).sum();
        let steps: usize = ensemble.iter().map(|t| t.steps).sum();
        assert!((repairs as f64) < 1e-3 * steps as f64);
    }

    #[test]
    fn schedule_subdivides_under_cap() {
        // A strong drive forces outflow * dt over the cap at the base step.
        let flow = rabi_flow(40.0, 0.05, 0.2);
        let fam = singleton_family(2);
        let schedule = build_rate_schedule(&flow, &fam, 0.0, 0.2, 0.05, EPS_OCC).unwrap();
        assert!(schedule.intervals.len() > 4, "no subdivision happened");
        // Intervals tile the window.
        let mut t = 0.0;
        for iv in &schedule.intervals {
            assert!((iv.t - t).abs() < 1e-9);
            t += iv.len;
        }
        assert!((t - 0.2).abs() < 1e-9);
        // Cap respected for cells above the subdivision floor.
        for iv in &schedule.intervals {
            for j in 0..2 {
                if iv.weights[j] >= 1e-9 {
                    assert!(iv.rates.total_outflow(j) * iv.len < RATE_STEP_CAP * 1.0001);
                }
            }
        }
    }

    #[test]
    fn trajectory_events_are_ordered_and_valid() {
        let flow = rabi_flow(2.0, 0.7, 2.0);
        let fam = singleton_family(2);
        let traj = sample_trajectory(
            &flow,
            &fam,
            0.0,
            2.0,
            5e-3,
            3,
            InitialCondition::DrawFromWeights,
            EPS_OCC,
        )
        .unwrap();
        let mut prev = traj.t0;
        for ev in &traj.events {
            assert!(ev.time >= prev);
            assert!(ev.from != ev.to);
            prev = ev.time;
        }
        // index_at is consistent with the event list.
        assert_eq!(traj.index_at(traj.t0), traj.initial_index);
        assert_eq!(traj.index_at(traj.t1 + 1.0), traj.final_index());
    }
}

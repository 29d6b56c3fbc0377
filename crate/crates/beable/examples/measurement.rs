//! Pointer measurement: Born statistics from the jump process alone.
//!
//! A two-outcome superposition drives a pointer packet left or right during
//! a pulse. The realized position cell follows one branch; over an ensemble
//! the outcome frequencies reproduce |lambda_a|^2. After the pulse the two
//! outcome components are ergodically disjoint: the integrated probability
//! of hopping between them is negligible, which is what makes the outcome
//! definite.
//!
//! Run with: cargo run --release --example measurement

use beable::dynamics::{integrated_probabilities, sample_ensemble, EnsembleOptions};
use beable::microstates::EPS_OCC;
use beable::scenarios::make_measurement;
use num_complex::Complex64 as C64;

fn main() -> beable::Result<()> {
    let weight0 = 0.3f64;
    let lambdas = [
        C64::new(weight0.sqrt(), 0.0),
        C64::new((1.0 - weight0).sqrt(), 0.0),
    ];
    let spec = make_measurement(&lambdas, 360, 1.0, 1.0 / 60.0, 1.0)?;
    let flow = spec.flow()?;
    let fam = spec.primary();
    let cell0 = spec.annotation("outcome_cell_0").unwrap() as usize;
    let cell1 = spec.annotation("outcome_cell_1").unwrap() as usize;
    let pulse_end = spec.annotation("pulse_end").unwrap();

    // The evolved state's cell weights already carry the Born weights.
    let w = flow.weights_at(fam, pulse_end)?;
    println!(
        "weights at pulse end: outcome 0 -> {:.6} (|lambda_0|^2 = {weight0}), outcome 1 -> {:.6}",
        w[cell0], w[cell1]
    );

    // Sampling the jump process realizes them as frequencies.
    let n_traj = 10_000usize;
    let opts = EnsembleOptions {
        t0: 0.0,
        t1: spec.run_defaults.t1,
        dt: spec.run_defaults.dt,
        master_seed: 9,
        trajectories: n_traj,
        initial: spec.run_defaults.initial,
        eps_occ: EPS_OCC,
        threads: 4,
    };
    let ensemble = sample_ensemble(&flow, fam, &opts)?;
    let f0 = ensemble.iter().filter(|t| t.final_index() == cell0).count() as f64 / n_traj as f64;
    let f1 = ensemble.iter().filter(|t| t.final_index() == cell1).count() as f64 / n_traj as f64;
    println!("sampled frequencies over {n_traj} trajectories: {f0:.4} / {f1:.4}");
    let repairs: usize = ensemble.iter().map(|t| t.repair_events).sum();
    let steps: usize = ensemble.iter().map(|t| t.steps).sum();
    println!("starvation repairs: {repairs} over {steps} trajectory-steps");

    // Ergodicity breaking: the settled outcome components do not mix.
    let p = integrated_probabilities(&flow, fam, pulse_end, spec.run_defaults.t1, 1e-3, EPS_OCC)?;
    println!(
        "cross-outcome integrated probability after completion: {:.2e} / {:.2e}",
        p.probability(cell0, cell1),
        p.probability(cell1, cell0)
    );
    Ok(())
}

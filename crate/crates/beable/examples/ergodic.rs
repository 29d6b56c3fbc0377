//! Equilibration and memory loss in a randomized interacting model.
//!
//! A microcanonical-shell Hamiltonian with Haar-random eigenvectors drives
//! an ergodic jump process over observable cells. Two signatures are
//! computed: time-averaged cell weights settle near rank/dimension (checked
//! against the analytic dephasing average), and the integrated transition
//! probabilities forget the initial cell exponentially, with a decay rate
//! that grows like sqrt(N).
//!
//! Run with: cargo run --release --example ergodic

use beable::analysis::{equilibration_check, ergodicity_decay};
use beable::microstates::EPS_OCC;
use beable::scenarios::make_ergodic;

fn main() -> beable::Result<()> {
    let delta_e = 1.0;

    // Equilibration: rank-10 blocks at N = 40 over a long horizon.
    let spec = make_ergodic(40, delta_e, &[10, 10, 10, 10], 3)?.with_final_time(200.0)?;
    let flow = spec.flow()?;
    let report = equilibration_check(&flow, spec.primary(), 200.0, 1500)?;
    println!("equilibration, blocks of rank 10 (N = 40):");
    println!(
        "  time-averaged weights: {:?}",
        report
            .time_average
            .iter()
            .map(|w| format!("{w:.4}"))
            .collect::<Vec<_>>()
    );
    println!(
        "  targets d_i/N:         {:?}",
        report
            .target
            .iter()
            .map(|w| format!("{w:.4}"))
            .collect::<Vec<_>>()
    );
    println!(
        "  dephasing oracle:      {:?}",
        report
            .oracle
            .iter()
            .map(|w| format!("{w:.4}"))
            .collect::<Vec<_>>()
    );
    println!(
        "  max relative deviation: {:.2}% from target, {:.2}% from oracle",
        100.0 * report.max_rel_deviation_from_target,
        100.0 * report.max_rel_deviation_from_oracle
    );

    // Memory loss across system sizes: fitted decay rate of the worst-case
    // column difference of the integrated probability matrix.
    println!("memory loss (rank-1 cells):");
    let mut mus = Vec::new();
    for (n, t_lo, t_hi) in [(20usize, 3.0, 21.0), (40, 2.0, 13.5), (80, 1.2, 7.5)] {
        let spec = make_ergodic(n, delta_e, &vec![1usize; n], 11)?.with_final_time(t_hi + 1.0)?;
        let flow = spec.flow()?;
        let probes: Vec<f64> = (0..7)
            .map(|k| t_lo + (t_hi - t_lo) * k as f64 / 6.0)
            .collect();
        let fit = ergodicity_decay(&flow, spec.primary(), 0.0, &probes, 5e-3, EPS_OCC, 1e-4)?;
        println!(
            "  N = {n}: mu = {:.3}, mu / (sqrt(N) dE) = {:.4}, metric {} -> {:.2e}",
            fit.mu,
            fit.mu / (n as f64).sqrt() / delta_e,
            fit.metric[0],
            fit.metric.last().unwrap()
        );
        mus.push(fit.mu);
    }
    println!(
        "  scaling: mu(80)/mu(20) = {:.2} (sqrt(80/20) = 2)",
        mus[2] / mus[0]
    );
    Ok(())
}

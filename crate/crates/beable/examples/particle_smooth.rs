//! Smooth-regime particle: stochastic hopping with a classical drift.
//!
//! When the wave function is wide compared with the cell size, the realized
//! cell performs a forward random walk: hops fire at rate v/delta_x in the
//! direction of the probability current. Over an ensemble the displacement
//! is binomial, the mean drifts at the classical velocity p/M, and the
//! variance grows like (distance moved) * delta_x.
//!
//! Run with: cargo run --release --example particle_smooth

use beable::analysis::{binomial_displacement_test, drift_variance};
use beable::dynamics::{sample_ensemble, EnsembleOptions};
use beable::microstates::{Boundary, EPS_OCC};
use beable::scenarios::{make_particle1d, Packet};

fn main() -> beable::Result<()> {
    let length = 16.0;
    let delta_x = 1.0;
    let mass = 1.0;
    // Momentum must be a ring mode (k = 2 pi n / L) so the phase is smooth
    // across the wrap.
    let k_mode = 3.0 * 2.0 * std::f64::consts::PI / length;
    let v = k_mode / mass;
    let spec = make_particle1d(
        512,
        16,
        (0.0, length),
        mass,
        Packet {
            center: 8.0,
            width: 64.0, // much wider than a cell: the smooth regime
            momentum: k_mode,
        },
        None,
        Boundary::Periodic,
        1.0,
    )?
    .with_final_time(3.6)?;
    let flow = spec.flow()?;
    let fam = spec.primary();

    let dt = 0.035;
    let t_end = 3.5;
    let n_traj = 10_000usize;
    let opts = EnsembleOptions {
        t0: 0.0,
        t1: t_end,
        dt,
        master_seed: 42,
        trajectories: n_traj,
        initial: spec.run_defaults.initial,
        eps_occ: EPS_OCC,
        threads: 4,
    };
    let ensemble = sample_ensemble(&flow, fam, &opts)?;

    let centers = fam.cell_centers().unwrap();
    let times: Vec<f64> = (0..=10).map(|k| t_end * k as f64 / 10.0).collect();
    let dv = drift_variance(&ensemble, &centers, &times)?;
    println!("time    mean position    variance");
    for k in 0..times.len() {
        println!(
            "{:5.2}   {:12.4}   {:9.4}",
            dv.times[k], dv.mean[k], dv.variance[k]
        );
    }
    let slope = (dv.mean[10] - dv.mean[0]) / t_end;
    println!("drift slope {slope:.4} vs p/M = {v:.4}");
    println!(
        "variance at T: {:.4} vs v*T*delta_x = {:.4}",
        dv.variance[10],
        v * t_end * delta_x
    );

    // Hop counts against the binomial law with success probability v dt / dx.
    let steps = ensemble[0].steps as u64;
    let disp: Vec<i64> = ensemble
        .iter()
        .map(|t| t.unwrapped_displacement())
        .collect();
    let chi = binomial_displacement_test(&disp, steps, v * dt / delta_x)?;
    println!(
        "chi-square vs Binomial({steps}, {:.4}): chi2 = {:.2}, dof = {}, p = {:.3}",
        v * dt / delta_x,
        chi.chi2,
        chi.dof,
        chi.p_value
    );
    Ok(())
}

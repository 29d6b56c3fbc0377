//! Narrow-regime particle: the jump process shadows the classical path.
//!
//! A packet much narrower than a cell keeps |c_i|^2 ~ 1 in one cell at a
//! time; as the packet slides across a boundary, the realized index follows
//! with probability near one. Both routes are shown: the integrated
//! probability across one crossing (exact ODE) and a handful of sampled
//! trajectories tracking the packet center.
//!
//! Run with: cargo run --release --example particle_narrow

use beable::dynamics::{integrated_probabilities, sample_trajectory, InitialCondition};
use beable::microstates::{Boundary, EPS_OCC};
use beable::scenarios::{make_particle1d, Packet};

fn main() -> beable::Result<()> {
    // Lattice zero-dispersion point (k h = pi/2): the packet crosses cells
    // without spreading.
    let h = 1.0 / 24.0;
    let k_wave = std::f64::consts::FRAC_PI_2 / h;
    let spec = make_particle1d(
        192,
        8,
        (0.0, 8.0),
        1.0,
        Packet {
            center: 3.5,
            width: 0.1, // a tenth of a cell
            momentum: k_wave,
        },
        None,
        Boundary::Periodic,
        1.0,
    )?
    .with_final_time(0.2)?;
    let flow = spec.flow()?;
    let fam = spec.primary();
    let v_g = (k_wave * h).sin() / h;
    println!("group velocity {v_g:.2}, cell width 1.0");

    // One boundary crossing, integrated exactly.
    let window = 1.0 / v_g;
    let p = integrated_probabilities(&flow, fam, 0.0, window, 1e-4, EPS_OCC)?;
    println!(
        "integrated crossing probability p(4|3) = {:.6} (stay-put p(3|3) = {:.2e})",
        p.probability(4, 3),
        p.probability(3, 3)
    );

    // Sampled trajectories follow the packet center cell by cell.
    for seed in 0..3 {
        let traj = sample_trajectory(
            &flow,
            fam,
            0.0,
            3.0 * window,
            window / 50.0,
            seed,
            InitialCondition::Cell(3),
            EPS_OCC,
        )?;
        let path: Vec<String> = traj
            .events
            .iter()
            .map(|e| format!("t={:.4} {}->{}", e.time, e.from, e.to))
            .collect();
        println!("trajectory {seed}: {}", path.join(", "));
    }
    Ok(())
}

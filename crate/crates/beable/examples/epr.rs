//! EPR pair with two measuring devices: three perspectives, one process.
//!
//! Device A measures its qubit along z, device B along an axis at angle
//! 2*theta. The observable set of each device defines its own jump process;
//! their union refines both. The example integrates the marginal processes
//! exactly (no sampling), then samples the joint process and compares the
//! outcome frequencies with the Born values (sin^2/cos^2 over two).
//!
//! Run with: cargo run --release --example epr

use beable::dynamics::{
    integrated_probabilities, marginal_rates, rates_pure, sample_ensemble, EnsembleOptions,
    InitialCondition, Side,
};
use beable::microstates::EPS_OCC;
use beable::scenarios::make_epr;

fn main() -> beable::Result<()> {
    let theta = std::f64::consts::FRAC_PI_6; // axis half-angle: 2 theta = 60 degrees
    let spec = make_epr(theta, 1.0)?;
    let flow = spec.flow()?;
    let t1 = spec.annotation("t1").unwrap();
    let t2 = spec.annotation("t2").unwrap();
    let t3 = spec.annotation("t3").unwrap();

    // Perspective A: its pulse splits rest -> +/- with probability 1/2 each;
    // nothing happens while B measures.
    let fam_a = spec.family("A")?;
    let p12 = integrated_probabilities(&flow, fam_a, t1, t2, 1e-3, EPS_OCC)?;
    let p23 = integrated_probabilities(&flow, fam_a, t2, t3, 1e-3, EPS_OCC)?;
    println!("perspective A:");
    println!(
        "  p(+|0) over A's window  = {:.6}   p(-|0) = {:.6}",
        p12.probability(1, 0),
        p12.probability(2, 0)
    );
    println!(
        "  p(+|+) over B's window  = {:.6}   p(-|-) = {:.6}",
        p23.probability(1, 1),
        p23.probability(2, 2)
    );

    // The joint process marginalizes onto A: during B's window the marginal
    // A-rates vanish identically.
    let fam_joint = spec.family("AuB")?;
    let mid_b = spec.annotation("tB").unwrap() + 0.5;
    let d_joint = flow.decomposition_at(fam_joint, mid_b, EPS_OCC)?;
    let t_joint = rates_pure(&d_joint, flow.hamiltonian_at(mid_b)?, 1.0)?;
    let marg = marginal_rates(&t_joint, &d_joint.weights(), 3, 3, Side::A, EPS_OCC)?;
    println!(
        "  max marginal A-rate while B measures: {:.2e}",
        marg.max_rate()
    );

    // Joint perspective: Born weights at the end of both pulses.
    let w = flow.weights_at(fam_joint, t3)?;
    let idx = |a: usize, b: usize| a * 3 + b;
    println!("joint weights at t3 (analytic (1/2)sin^2, (1/2)cos^2 pattern):");
    println!(
        "  ++ {:.6}  +- {:.6}  -+ {:.6}  -- {:.6}",
        w[idx(1, 1)],
        w[idx(1, 2)],
        w[idx(2, 1)],
        w[idx(2, 2)]
    );

    // Sampled outcome frequencies.
    let n_traj = 10_000usize;
    let opts = EnsembleOptions {
        t0: 0.0,
        t1: spec.run_defaults.t1,
        dt: spec.run_defaults.dt,
        master_seed: 7,
        trajectories: n_traj,
        initial: InitialCondition::Cell(0),
        eps_occ: EPS_OCC,
        threads: 4,
    };
    let ensemble = sample_ensemble(&flow, fam_joint, &opts)?;
    println!("sampled joint frequencies over {n_traj} trajectories:");
    for (a, la) in [(1usize, "+"), (2, "-")] {
        for (b, lb) in [(1usize, "+"), (2, "-")] {
            let f = ensemble
                .iter()
                .filter(|t| t.final_index() == idx(a, b))
                .count() as f64
                / n_traj as f64;
            println!("  A{la} B{lb}: {f:.4}");
        }
    }
    Ok(())
}

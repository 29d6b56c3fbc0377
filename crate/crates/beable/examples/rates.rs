//! Transition-rate formulas on small systems.
//!
//! Walks through the rate evaluators: the analytic two-level case, the
//! current-based particle rates against the generic formula, the mixed-state
//! generalization, and the one-way property that all of them share.
//!
//! Run with: cargo run --release --example rates

use beable::dynamics::{particle_rates_current, rates_mixed, rates_pure};
use beable::linalg::{DensityMatrix, HermitianOperator, StateVector};
use beable::microstates::{
    build_position_projectors, decompose_mixed, decompose_pure, Boundary, CellLabel,
    ProjectorFamily, EPS_OCC,
};
use beable::scenarios::kinetic_hamiltonian;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn main() -> beable::Result<()> {
    // Two-level system: H = Omega sigma_x, Psi = (cos t, i sin t).
    // The only nonzero rate is T_{1<-2} = 2 Omega cot(theta).
    let omega = 1.0;
    let theta = std::f64::consts::FRAC_PI_4;
    let h = HermitianOperator::new(DMatrix::from_row_slice(
        2,
        2,
        &[c(0.0, 0.0), c(omega, 0.0), c(omega, 0.0), c(0.0, 0.0)],
    ))?;
    let psi = StateVector::new(DVector::from_vec(vec![
        c(theta.cos(), 0.0),
        c(0.0, theta.sin()),
    ]))?;
    let fam2 = ProjectorFamily::from_index_cells(
        2,
        vec![vec![0], vec![1]],
        vec![CellLabel::Name("0".into()), CellLabel::Name("1".into())],
        1.0,
    )?;
    let d = decompose_pure(&psi, &fam2, EPS_OCC)?;
    let t = rates_pure(&d, &h, 1.0)?;
    println!(
        "two-level rates: T(0<-1) = {:.6} (analytic 2 cot(pi/4) = 2), T(1<-0) = {:.6}",
        t.rate(0, 1),
        t.rate(1, 0)
    );

    // Particle on a ring: bond-current rates equal the generic formula.
    let grid_points = 128usize;
    let cells = 8usize;
    let mass = 1.0;
    let fam = build_position_projectors(grid_points, cells, (0.0, 8.0), Boundary::Periodic)?;
    let grid = *fam.grid().unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(2);
    let psi = StateVector::from_unnormalized(DVector::from_fn(grid_points, |_, _| {
        c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
    }))?;
    let h_kin = kinetic_hamiltonian(grid_points, grid.spacing, mass, 1.0, Boundary::Periodic);
    let via_current = particle_rates_current(&psi, &fam, mass, 1.0)?;
    let via_pure = rates_pure(&decompose_pure(&psi, &fam, EPS_OCC)?, &h_kin, 1.0)?;
    let mut worst: f64 = 0.0;
    for i in 0..cells {
        for j in 0..cells {
            worst = worst.max((via_current.rate(i, j) - via_pure.rate(i, j)).abs());
        }
    }
    println!("particle: current-based vs Hamiltonian rates, max difference {worst:.2e}");
    println!(
        "particle: nearest-neighbour hops only, one-way defect {:.1e}",
        via_current.one_way_defect()
    );

    // Mixed state: rates on |Psi><Psi| reproduce the pure formula; the
    // maximally mixed state is inert.
    let psi6 = StateVector::from_unnormalized(DVector::from_fn(6, |_, _| {
        c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
    }))?;
    let fam6 = build_position_projectors(6, 3, (0.0, 3.0), Boundary::HardWall)?;
    let g = DMatrix::from_fn(6, 6, |_, _| {
        c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
    });
    let h6 = HermitianOperator::symmetrized(&g);
    let pure = rates_pure(&decompose_pure(&psi6, &fam6, EPS_OCC)?, &h6, 1.0)?;
    let mixed = rates_mixed(
        &decompose_mixed(&DensityMatrix::from_pure(&psi6), &fam6, EPS_OCC)?,
        &h6,
        1.0,
    )?;
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            worst = worst.max((pure.rate(i, j) - mixed.rate(i, j)).abs());
        }
    }
    println!("mixed on a pure state: max difference vs pure rates {worst:.2e}");
    let inert = rates_mixed(
        &decompose_mixed(&DensityMatrix::maximally_mixed(6), &fam6, EPS_OCC)?,
        &h6,
        1.0,
    )?;
    println!("maximally mixed state: max rate {:.2e}", inert.max_rate());
    Ok(())
}

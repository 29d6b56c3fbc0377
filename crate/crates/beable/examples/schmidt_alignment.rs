//! Structured observable sets: Schmidt states and u(N) alignment.
//!
//! Two special cases with closed-form microstates. For a complete set of
//! observables on one tensor factor, the microstates are the Schmidt states
//! and the weights are the reduced-density-matrix eigenvalues. For a u(N)
//! generator family, a unitary rotation aligns the Cartan eigenstates |ii>
//! with the state whenever the coefficient matrix on the adjoint block is
//! normal.
//!
//! Run with: cargo run --release --example schmidt_alignment

use beable::linalg::{
    partial_trace, schmidt_decompose, DensityMatrix, Eigensystem, HermitianOperator, Keep,
    StateVector,
};
use beable::microstates::{align_un, UnAlgebra};
use nalgebra::DVector;
use num_complex::Complex64 as C64;
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;

fn main() -> beable::Result<()> {
    // Random bipartite state on 2 (x) 4.
    let mut rng = ChaCha12Rng::seed_from_u64(21);
    let psi = StateVector::from_unnormalized(DVector::from_fn(8, |_, _| {
        C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
    }))?;
    let sd = schmidt_decompose(&psi, 2, 4, 1e-12)?;
    println!("schmidt coefficients: {:?}", sd.coefficients);
    println!(
        "reassembly defect: {:.2e}",
        (sd.reassemble() - psi.amplitudes()).norm()
    );
    // Weights coincide with the reduced density matrix spectrum.
    let rho = DensityMatrix::from_pure(&psi);
    let red = partial_trace(rho.matrix(), 2, 4, Keep::Left)?;
    let eig = Eigensystem::of(&HermitianOperator::new(red)?);
    println!(
        "reduced-density eigenvalues: {:?}",
        eig.values
            .iter()
            .rev()
            .map(|v| format!("{v:.6}"))
            .collect::<Vec<_>>()
    );

    // u(2) alignment on a 5-dim space (4-dim adjoint block + 1 remainder).
    let algebra = UnAlgebra::standard(2, 1);
    let psi = StateVector::from_unnormalized(DVector::from_vec(vec![
        C64::new(0.5, 0.1),
        C64::new(0.3, 0.0),
        C64::new(0.3, 0.0),
        C64::new(0.2, 0.1),
        C64::new(0.4, 0.0),
    ]))?;
    let aligned = align_un(&psi, &algebra, 1e-8)?;
    let d = &aligned.decomposition;
    println!("u(2) alignment:");
    for i in 0..=2 {
        let name = if i < 2 {
            format!("cartan |{i}{i}>")
        } else {
            "remainder".into()
        };
        println!("  {name}: weight {:.6}", d.weight(i));
    }
    println!("  cartan eigenvalue defect: {:.2e}", aligned.cartan_defect);

    // A non-normal coefficient matrix cannot be aligned by any unitary.
    let skew = StateVector::new(DVector::from_vec(vec![
        C64::new(0.8, 0.0),
        C64::new(0.6, 0.0),
        C64::new(0.0, 0.0),
        C64::new(0.0, 0.0),
    ]))?;
    match align_un(&skew, &UnAlgebra::standard(2, 0), 1e-8) {
        Err(e) => println!("non-normal block rejected as expected: {e}"),
        Ok(_) => println!("unexpected alignment of a non-normal block"),
    }
    Ok(())
}

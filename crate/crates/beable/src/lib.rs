//! Stochastic dynamics of quantum microstates behind coarse-grained
//! observables.
//!
//! A finite-dimensional quantum state evolves deterministically under the
//! Schrödinger equation; a family of coarse-grained commuting projectors
//! splits it into orthonormal *microstates* with Born weights, and a
//! continuous-time Markov jump process moves a realized microstate index
//! between cells at rates read off the Hamiltonian matrix elements. This
//! crate provides the linear-algebra substrate, the microstate extraction,
//! the rate formulas (pure, mixed, time-dependent), jump-trajectory sampling,
//! integrated transition probabilities, scenario builders (1D particle,
//! pointer measurement, EPR pair, randomized equilibration models) and the
//! post-processing used to verify the whole construction.
//!
//! Start with the runnable programs under `examples/`; each one exercises a
//! major capability end to end. The `beable` binary exposes the same
//! scenarios behind a JSON-configured command line.

pub mod analysis;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod io;
pub mod linalg;
pub mod microstates;
pub mod scenarios;

pub use dynamics::{
    integrated_probabilities, locality_audit, marginal_rates, master_residual,
    particle_rates_current, rates_mixed, rates_pure, rates_timedep, sample_ensemble,
    sample_trajectory, IntegratedProbabilities, JumpTrajectory, RateMatrix, ScheduledSystem,
    SystemFlow,
};
pub use error::{Error, Result};
pub use linalg::{
    expectation, partial_trace, propagator_build, schmidt_decompose, tensor_product_operators,
    tensor_product_states, DensityMatrix, Eigensystem, HermitianOperator, Keep, Propagator,
    SchmidtDecomposition, StateVector,
};
pub use microstates::{
    align_un, block_projectors, build_coarse_observable, build_position_projectors,
    decompose_mixed, decompose_pure, ensemble_entropy, merge_microstates, verify_nondegeneracy,
    Boundary, CoarseObservable, MicrostateDecomposition, MixedDecomposition, ProjectorFamily,
};
pub use scenarios::{make_epr, make_ergodic, make_measurement, make_particle1d, ScenarioSpec};

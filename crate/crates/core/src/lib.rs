//! Equilibrium Monte Carlo machinery for estimating the depolarizing error
//! threshold of topological subsystem color codes.
//!
//! The error-correction problem is simulated through its equivalent classical
//! disordered Ising model: a triangular-lattice gauge structure is compiled
//! into two-spin couplings with quenched random signs, sampled with
//! parallel-tempering Metropolis dynamics, and analyzed through finite-size
//! crossings of the correlation-length ratio against the Nishimori line.
//!
//! Module layout:
//! - [`lattice`]: periodic triangular-lattice gauge structure and spin registry
//! - [`pauli`]: symplectic Pauli-string algebra used by the interaction compiler
//! - [`model`]: coupling compiler, disorder sampling, Nishimori line, exact oracles
//! - [`engine`]: bit-packed spin states, Metropolis sweeps, parallel tempering,
//!   equilibration detection, checkpointing
//! - [`observables`]: magnetization, Fourier amplitudes, susceptibilities,
//!   correlation length
//! - [`analysis`]: disorder averaging, bootstrap errors, crossing location,
//!   phase boundary and threshold estimation

pub mod analysis;
pub mod engine;
pub mod interp;
pub mod lattice;
pub mod model;
pub mod observables;
pub mod pauli;
pub mod rng;

pub use lattice::{build_lattice, validate_lattice, Color, Lattice, LatticeSpec};
pub use model::{
    compile_interactions, energy, nishimori_p, nishimori_temperature, sample_disorder,
    DisorderRealization, InteractionTable,
};

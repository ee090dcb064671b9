//! Desk-scale laboratory for one-way puzzles, post-selected sampling
//! reductions and state synthesis, verified against brute-force oracles
//! built on an exact dense statevector simulator.
//!
//! Module map:
//! - [`qsim`]: dense statevector core, measurement, distributions, metrics
//! - [`dists`]: circuit families and exact output-distribution extraction
//! - [`oracles`]: perfect and ε-noisy adversary models over exact tables
//! - [`designs`]: uniform Clifford sampling and 2-design flatness statistics
//! - [`reductions`]: probability approximation, puzzle constructions, the
//!   ratio estimator and the pseudo-deterministic sampler
//! - [`statesynth`]: amplitude/phase synthesis of secret states from
//!   puzzle inverters

pub mod bits;
pub mod designs;
pub mod dists;
pub mod error;
pub mod oracles;
pub mod qsim;
pub mod reductions;
pub mod rng;
pub mod statesynth;

pub use bits::BitString;
pub use error::Error;

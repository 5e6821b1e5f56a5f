//! Lattice laboratory for the stochastic quantization equation driven by the
//! Anderson Hamiltonian on the 2-torus.
//!
//! The crate simulates the truncated dynamics
//! `du + H u dt + :u^3: dt = sqrt(2) dW` with `H = -Laplacian + xi - c + m`
//! a renormalized lattice Schrodinger operator with white-noise potential,
//! and provides a statistical harness for its Markov semigroup: Wick
//! renormalization checks, coming-down-from-infinity sweeps, synchronous
//! coupling, Krylov-Bogoliubov averaging and Bismut-Elworthy-Li derivative
//! estimators.
//!
//! See the `examples/` directory for one runnable program per capability and
//! the `anderson-phi42` binary for the experiment-runner CLI.

pub mod acceptance;
pub mod cli;
pub mod config;
pub mod ergodicity;
pub mod error;
pub mod grid;
pub mod hamiltonian;
pub mod noise;
pub mod rng;
pub mod snapshot;
pub mod solver;
pub mod stats;
pub mod wick;

pub use error::{Error, Result};

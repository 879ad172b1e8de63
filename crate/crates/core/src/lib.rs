//! Constant-depth circuit compilation for 1D spin-chain time evolution.
//!
//! Qubit 0 is the most significant bit of every basis index. Rotations are
//! `R_a(theta) = exp(-i theta sigma_a / 2)`.

pub mod ansatz;
pub mod circuit;
pub mod error;
pub mod hamiltonian;
pub mod linalg;
pub mod matchgate;
pub mod mirror;
pub mod optimize;
pub mod qasm;
pub mod quench;
pub mod synth;
pub mod verify;

pub use error::{Error, Result};

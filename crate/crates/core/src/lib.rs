//! Monitored Majorana circuits: Gaussian trajectories, Lyapunov analysis and
//! twisted-boundary parity invariants, with a brute-force Fock-space oracle.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod circuit;
pub mod entanglement;
pub mod error;
pub mod gaussian;
pub mod linalg;
pub mod lyapunov;
pub mod oracle;
pub mod rng;
pub mod topology;

pub use error::{Error, Result};

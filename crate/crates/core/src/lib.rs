//! Classical simulation and training harness for a small superconducting-qubit
//! quantum generative adversarial network.
//!
//! The crate is organised bottom-up:
//!
//! - [`qsim`]: dense states, operator application, partial trace, fidelity.
//! - [`gates`]: the device gate library (rotations, bus entangler, `U_phase`).
//! - [`circuit`]: gate programs over a fixed qubit register.
//! - [`noise`]: coherence-limited channels and readout correction.
//! - [`ansatz`]: generator / discriminator builders and the real sources.
//! - [`grad`]: Hadamard-test, parameter-shift and finite-difference gradients.
//! - [`train`]: the alternating adversarial loop and trajectory export.
//! - [`tomo`]: state and process tomography, chi matrices.
//! - [`experiments`]: canned studies shared by the CLI and the test suites.

pub mod ansatz;
pub mod circuit;
pub mod error;
pub mod experiments;
pub mod gates;
pub mod grad;
pub mod noise;
pub mod qsim;
pub mod rng;
pub mod tomo;
pub mod train;

pub use error::{Error, Result};

/// Version string stamped into exported artifacts.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

//! Wide two-layer ReLU networks with factorized first layers (`W`, `W = BC`,
//! `W = ABC`), full-batch gradient descent on the trainable factor, and the
//! neural-tangent-kernel machinery used to check their training dynamics
//! empirically.
//!
//! | module | contents |
//! |--------|----------|
//! | [`linalg`] | dense matrices, seeded Gaussian sampling, Jacobi eigensolver, PSD solves, norms |
//! | [`jl`] | Gaussian and subsampled-Hadamard Johnson–Lindenstrauss operators |
//! | [`network`] | the three parameterizations, forward pass, activation patterns, checkpoints |
//! | [`trainer`] | gradients, GD steps, instrumented training runs |
//! | [`ntk`] | analytic, Monte-Carlo and empirical NTK Gram matrices |
//! | [`analysis`] | loss prediction, drift and Rademacher bounds, bound reports |
//! | [`bench`] | FLOP model and per-iteration timing |
//! | [`data`] | dataset generation and CSV ingestion |
//! | [`experiments`] | seeded experiment drivers and their CSV outputs |

pub mod analysis;
pub mod bench;
pub mod data;
pub mod error;
pub mod experiments;
pub mod jl;
pub mod linalg;
pub mod network;
pub mod ntk;
pub mod output;
pub mod trainer;

pub use error::{Error, Result};
pub use linalg::Matrix;

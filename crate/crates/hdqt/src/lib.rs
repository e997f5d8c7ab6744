//! Integer-only simulated low-precision training with Hadamard-domain
//! backward-pass matrix multiplies, stochastic rounding, and tiled low-bit
//! accumulation, plus the class-incremental learning protocols (LwF, iCaRL,
//! BiC) used to evaluate it on feature-vector classification datasets.
//!
//! The crate is organized bottom-up:
//!
//! - [`matrix`] / [`rng`]: dense storage, exact reference linear algebra,
//!   and a counter-based splittable random number generator.
//! - [`quant`]: the simulated-hardware quantization function with max-based
//!   calibration, nearest and stochastic rounding.
//! - [`hadamard`]: Sylvester construction and the in-place fast
//!   Walsh-Hadamard transform, applied block-diagonally.
//! - [`qgemm`]: the quantized matrix-multiply engine (tiled forward,
//!   Hadamard-domain backward).
//! - [`nn`]: a small fully connected network with reverse-mode gradients
//!   routed through the quantized GEMMs, losses, and SGD.
//! - [`cil`]: class-incremental task streams, the three trainers, and
//!   accuracy/forgetting metrics.
//! - [`data`]: CSV ingestion, dataset filtering, normalization, and a
//!   synthetic blob generator.

pub mod cil;
pub mod data;
pub mod error;
pub mod hadamard;
pub mod matrix;
pub mod nn;
pub mod qgemm;
pub mod quant;
pub mod rng;

pub use error::{Error, Result};
pub use matrix::{matmul_ref, Matrix};
pub use rng::Rng;

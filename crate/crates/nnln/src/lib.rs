//! A from-scratch neural-network and classic-ML library.
//!
//! Everything is built directly on dense `f64` tensors: hand-written
//! layer-wise backpropagation for dense, convolutional, residual and
//! recurrent layers, four gradient-based optimizers, k-means clustering,
//! closed-form (ridge) regression, and a finite-difference gradient
//! checker that every backward pass is validated against.
//!
//! The companion `nnln-cli` crate exposes training, evaluation,
//! clustering and curve-fitting as a command-line harness.

pub mod classic;
pub mod conv;
pub mod data;
pub mod dense;
pub mod error;
pub mod losses;
pub mod modelio;
pub mod optim;
pub mod params;
pub mod recurrent;
pub mod residual;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use params::{GradSet, ParamSet};
pub use rng::Rng;
pub use tensor::{ConvGeometry, OutShape, Tensor};

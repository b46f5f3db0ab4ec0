//! Toolkit for inducing and measuring memorization in networks trained by
//! gradient descent.
//!
//! * [`tensor`] and [`tape`]: dense `f64` tensors with reverse-mode differentiation.
//! * [`models`]: a strided CNN and MLPs ending in an optional softmax head.
//! * [`objectives`]: standard, split, capped and targeted objectives.
//! * [`optim`]: gradient descent and Adam.
//! * [`data`]: CIFAR-10 ingestion, noise datasets, Gaussian blobs.
//! * [`harness`]: trials, sweeps, epochs-to-threshold and dataset quality.
//! * [`stability`]: parameter-perturbation stability and the input-shift construction.
//! * [`basin`]: basin-volume ratios, Monte-Carlo basins and Brunn–Minkowski checks.

pub mod basin;
pub mod data;
pub mod error;
pub mod harness;
mod kernels;
pub mod models;
pub mod objectives;
pub mod optim;
pub mod stability;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};

//! Interpretable time-series extrinsic regression by learning to mask and
//! aggregate, with its autodiff engine, synthetic benchmarks, baselines,
//! trainer, and explanation metrics.
//!
//! The crate is `no_std` + `alloc`; IO, file formats and the CLI live in the
//! companion `magnets` crate.

#![cfg_attr(not(test), no_std)]
extern crate alloc;

pub mod baselines;
pub mod data;
pub mod error;
pub mod kernels;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod tape;
pub mod tensor;
pub mod train;
pub mod unet;

pub use error::{Error, Result};
pub use rng::Rng;
pub use tape::{grad_check, Tape, Var};
pub use tensor::Tensor;

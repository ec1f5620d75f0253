//! Two-stage measurement-error correction for scalar-on-function logistic
//! regression with multi-level count surrogates.
//!
//! Stage one reconstructs each subject's latent curve from `J` replicate count
//! curves (point-wise or windowed Poisson mixed models, functional PCA, or simple
//! averaging); stage two fits a spline-expanded logistic regression on the
//! reconstruction. The crate is `no_std` with `alloc`; file formats, parallel
//! drivers and the command-line interface live in the `fmem` crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod benchmark;
pub mod data;
pub mod error;
pub mod glmm;
pub mod grid;
pub mod inference;
pub mod kernel;
pub mod link;
pub mod mem;
pub mod metrics;
mod optim;
pub mod pace;
pub mod pipeline;
pub mod quadrature;
pub mod rng;
pub mod simulate;
pub mod sofr;
pub mod spline;

pub use data::{CountArray, Curves, MultiLevelSample, ReplicateArray};
pub use error::{Error, Result};
pub use grid::{integrate_product, FunctionalGrid};
pub use kernel::{kernel_matrix, CovarianceKernel};
pub use link::LinkFunction;

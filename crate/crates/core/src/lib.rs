//! Spatiotemporal imputation of sensor-by-time traffic matrices.
//!
//! The crate is organized bottom-up:
//!
//! - [`autodiff`]: a small reverse-mode differentiation tape over `f64` tensors.
//! - [`model`]: stacked blocks of gated dilated temporal convolutions followed
//!   by attention across sensors, scored with learnable node embeddings.
//! - [`data`]: CSV loading, seeded missingness, normalization, windowing and a
//!   synthetic ring-diffusion generator.
//! - [`train`]: Adam training on the masked squared error, plus checkpoints.
//! - [`eval`]: MAE / MAPE / RMSE reports against classical baselines.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod train;

pub use error::{Error, Result};

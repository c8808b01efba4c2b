//! Conditional moment estimation for gridded two-component fields, and a
//! conditional GAN whose generator is regularized by those moments.
//!
//! The crate is organized bottom-up:
//!
//! - [`grid`]: field containers, the CGF1 dataset format, synthetic data and
//!   the low-resolution / subfilter decomposition.
//! - [`filters`]: box filter + coarsening, nearest upsampling, Gaussian
//!   filter and the periodic Laplacian.
//! - [`deconv`]: approximate deconvolution (truncated Neumann series) and
//!   Taylor inversion baselines.
//! - [`moments`]: stencil bases, per-pixel stochastic estimation, the
//!   network-assisted estimator and an exact Gaussian conditioning oracle.
//! - [`autonet`]: a small reverse-mode network engine (conv, dense,
//!   residual blocks, depth-to-space, Adam).
//! - [`gan`]: adversarial, content and diversity losses plus the training
//!   loop.
//! - [`eval`]: diversity and consistency metrics, spectra and PDFs.

pub mod autonet;
pub mod deconv;
pub mod error;
pub mod eval;
pub mod filters;
pub mod gan;
pub mod grid;
pub mod io;
pub(crate) mod linalg;
pub mod moments;
pub mod spectrum;

pub use error::{Error, Result};
pub use grid::{Dataset, DatasetMeta, Field, HrField, LrField, SubfilterField, SynthParams};
pub use moments::{BasisSpec, MomentField, MomentModel};

/// Number of velocity components carried by every field.
pub const CHANNELS: usize = 2;

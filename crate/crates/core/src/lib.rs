//! Diffusion-based probabilistic forecasting with precision-weighted
//! classifier-free guidance, and the verification metrics used to score it.
//!
//! The crate is organized bottom-up:
//!
//! - [`schedule`]: β/α/ᾱ tables.
//! - [`diffusion`]: forward corruption, direct `x_0` recovery, reverse means.
//! - [`denoiser`]: the ε-prediction contract, a closed-form Gaussian oracle
//!   and a small trainable convolutional network.
//! - [`sampler`]: the precision-weighted sampler and its baselines.
//! - [`datagen`]: seeded synthetic spatiotemporal tasks.
//! - [`metrics`]: CRPS, CSI, FSS, PSD, economic value, RMSE/MAE.
//! - [`io`] and [`cli`]: file formats, manifests and the command line.

pub mod cli;
pub mod datagen;
pub mod denoiser;
pub mod diffusion;
pub mod error;
pub mod io;
pub mod metrics;
pub mod sampler;
pub mod schedule;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Field;

//! Re-whitened vector autoregression for aero-optic phase screens.
//!
//! This crate fits a linear generative model to a measured time series of
//! aperture-masked phase screens and synthesizes arbitrary-length data with
//! matching spatial and temporal statistics. Fitting proceeds in three
//! stages: per-pixel normalization followed by a spatial PCA
//! ([`preprocessing`]), a long-range autoregression on the leading principal
//! coefficients that augments ordinary time lags with low-pass filters of
//! the full history ([`longrange`]), and a second spatial PCA that maps the
//! AR residuals to white noise ([`whitening`]). Synthesis ([`synthesis`])
//! inverts the chain from a seeded Gaussian stream. The [`metrics`] module
//! provides the evaluation suite (temporal power spectra, OPD RMS, 2D
//! structure function, NRMSE) and [`persistence`] defines the on-disk
//! container formats.

pub mod cli;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod longrange;
pub mod metrics;
pub mod model;
pub mod noise;
pub mod ops;
pub mod oracle;
pub mod persistence;
pub mod pipeline;
pub mod plot;
pub mod preprocessing;
pub mod series;
pub mod synthesis;
pub mod whitening;

pub use error::{Result, RevarError};
pub use geometry::ApertureGeometry;
pub use model::{Provenance, RevarModel};
pub use noise::NoiseSource;
pub use series::PhaseScreenSeries;

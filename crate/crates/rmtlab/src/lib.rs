//! Numerical laboratory for central limit theorems of random quadratic
//! forms built from projected sample means and sample covariance matrices
//! in the p/n → 0 regime: model construction, entry truncation, spectral
//! machinery, contour integration, and Monte Carlo verification.

pub mod cli;
pub mod config;
pub mod contour;
pub mod error;
pub mod linalg;
pub mod model;
pub mod montecarlo;
pub mod scalar;
pub mod spectral;
pub mod statistics;
pub mod truncate;

pub use error::{Error, Result};

/// Concrete scalar used by the sampling and Monte Carlo layers.
pub type Real = f64;
/// Complex number over [`Real`].
pub type Complex64 = num_complex::Complex<f64>;
/// Dense matrix over [`Real`].
pub type Mat = linalg::Matrix<f64>;
/// Spectral decomposition over [`Real`].
pub type Decomposition = spectral::SpectralDecomposition<f64>;

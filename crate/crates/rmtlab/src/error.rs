//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("regime violation: p = {p} must be smaller than n = {n}")]
    RegimeViolation { p: usize, n: usize },

    #[error("matrix is not positive definite (min eigenvalue {min_eig} vs max {max_eig})")]
    NotPositiveDefinite { min_eig: f64, max_eig: f64 },

    #[error("symmetric eigensolver did not converge within {sweeps} sweeps (off-diag {off_diag})")]
    NoConvergence { sweeps: usize, off_diag: f64 },

    #[error("row {row} has zero post-truncation variance while its column norm is positive")]
    DegenerateRow { row: usize },

    #[error("zero vector: norm below underflow guard")]
    ZeroVector,

    #[error("evaluation point hits an eigenvalue (|lambda - z| = {gap})")]
    PoleHit { gap: f64 },

    #[error("degenerate draw: mean vector has (near-)zero norm")]
    ZeroMeanVector,

    #[error("centered and rank-one-update evaluation paths disagree by {gap}")]
    PathDisagreement { gap: f64 },

    #[error("point {z_re}+{z_im}i is not on the contour")]
    OffContour { z_re: f64, z_im: f64 },

    #[error("spectrum [{lambda_min}, {lambda_max}] is not strictly inside the contour ({u_l}, {u_r})")]
    SpectrumOutsideContour {
        lambda_min: f64,
        lambda_max: f64,
        u_l: f64,
        u_r: f64,
    },

    #[error("theorem hypothesis violated: {what} must be nonzero")]
    InvalidHypothesis { what: &'static str },

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("Cramer-Wold direction has (near-)zero target variance")]
    SingularDirection,

    #[error("scaling grid too small: need at least 4 points spanning a factor of 8, got {points} points spanning {span:.2}x")]
    GridTooSmall { points: usize, span: f64 },

    #[error("too many degenerate draws: exceeded {limit} total draws")]
    TooManyDegenerate { limit: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

use alloc::boxed::Box;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter {
        name: &'static str,
        reason: &'static str,
    },

    #[error("all points coincide; median pairwise distance is zero")]
    DegenerateBandwidth,

    #[error("matrix is not positive semidefinite (jitter up to {max_jitter:e} failed)")]
    NotPositiveDefinite { max_jitter: f64 },

    #[error("linear system is singular (jitter up to {max_jitter:e} failed)")]
    SingularSystem { max_jitter: f64 },

    #[error("dense oracle limited to n*p <= {limit}, got {np}")]
    SizeGuard { np: usize, limit: usize },

    #[error("label at index {index} is {value}, expected -1 or +1")]
    InvalidLabel { index: usize, value: f64 },

    #[error("spectrum is empty")]
    EmptySpectrum,

    #[error("columns are not orthonormal (deviation {deviation:e})")]
    NotOrthonormal { deviation: f64 },

    #[error("fold {index} failed: {source}")]
    Fold {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = core::result::Result<T, Error>;

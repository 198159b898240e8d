use thiserror::Error;

/// Errors produced by the tensor algebra and the discriminant pipeline.
///
/// Slice multi-indices are zero-based over the trailing modes (mode 3 onward).
#[derive(Debug, Error)]
pub enum Error {
    #[error("mode index {mode} out of range for an order-{order} tensor")]
    ModeIndex { mode: usize, order: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("haar transform needs an even mode length, got {0}; pad the mode first")]
    PaddingRequired(usize),

    #[error("result is not real: max imaginary magnitude {max_imag:e} exceeds tolerance {tolerance:e}")]
    NonReal { max_imag: f64, tolerance: f64 },

    #[error(
        "frontal slice {index:?} is singular to working precision \
         (rhomlda re-estimates ill-conditioned within-class slices)"
    )]
    SingularSlice { index: Vec<usize> },

    #[error("{0} is singular")]
    SingularMatrix(&'static str),

    #[error("frontal slice {index:?} is not diagonalizable (eigenvector condition {condition:e})")]
    NonDiagonalizable { index: Vec<usize>, condition: f64 },

    #[error("class {0:?} has no samples")]
    EmptyClass(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("spectrum carries no energy")]
    ZeroSpectrum,

    #[error("class {class:?} has {count} samples, fewer than {folds} folds")]
    Stratification {
        class: String,
        count: usize,
        folds: usize,
    },

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("label manifest error: {0}")]
    Manifest(String),

    #[error("model metadata error: {0}")]
    Metadata(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err(msg: impl Into<String>) -> Error {
    Error::Dimension(msg.into())
}

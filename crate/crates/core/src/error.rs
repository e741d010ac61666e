use thiserror::Error;

use crate::svm::SvmSolution;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid problem spec: {0}")]
    InvalidSpec(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("degenerate model: R_plus = 0 (both means are zero)")]
    DegenerateModel,

    #[error("empty dataset")]
    EmptyDataset,

    #[error("dataset of {n} x {d} entries exceeds the configured cap of {cap}")]
    MemoryCap { n: usize, d: usize, cap: usize },

    #[error("group {0:+} has no samples; its loss parameters are undefined")]
    EmptyGroup(i8),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("NaN encountered in {0}")]
    NotANumber(&'static str),

    #[error("classifier has zero norm")]
    ZeroClassifier,

    #[error("non-finite iterate at step {iter}; reduce the step size (eta = {eta:e})")]
    StepSize { iter: usize, eta: f64 },

    #[error("loss increased for more than 3 consecutive telemetry points at step {iter}")]
    Divergence { iter: usize },

    #[error("data not linearly separable: dual variables exceeded ceiling {ceiling:e}")]
    NonSeparable { ceiling: f64 },

    #[error("solver did not reach tolerance within {passes} passes (kkt violation {violation:e})")]
    Timeout {
        passes: usize,
        violation: f64,
        best: Box<SvmSolution>,
    },

    #[error("Gram matrix is rank deficient (condition estimate {condition:e})")]
    RankDeficient { condition: f64 },

    #[error("empty sweep grid: {0}")]
    EmptyGrid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("subsystem label `{0}` appears in both operands")]
    LabelCollision(char),
    #[error("unknown subsystem label `{0}`")]
    UnknownLabel(char),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),
    #[error("operator has trace {0}, expected 1")]
    BadTrace(f64),
    #[error("negative eigenvalue {0:e} below tolerance")]
    NegativeEigenvalue(f64),
    #[error("state is not normalized (norm^2 = {0})")]
    NotNormalized(f64),
    #[error("probability table is not normalized: {0}")]
    Unnormalized(String),
    #[error("noise parameter {0} outside [0, 1]")]
    ParameterOutOfRange(f64),
    #[error("invalid noise model: {0}")]
    InvalidModel(String),
    #[error("pipeline invariant violated: {0}")]
    Invariant(String),
    #[error("support leakage {0:e} outside the requested basis")]
    SupportLeakage(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;

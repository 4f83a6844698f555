use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("rotor is not a unit quaternion: |sigma| = {0}")]
    NonUnitRotor(f64),
    #[error("b-matrix index must be 1, 2 or 3, got {0}")]
    BadAlpha(usize),
    #[error("dimension mismatch: expected {expected} horizontal coordinates, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("dilation factor must be positive, got {0}")]
    BadScale(f64),
    #[error("point is not in the Siegel domain: Re q1 - |q'|^2 = {0}")]
    NotInDomain(f64),
    #[error("finite-difference step {0} is too small")]
    StepTooSmall(f64),
    #[error("derivative order {order} exceeds the limit {limit}")]
    OrderTooHigh { order: usize, limit: usize },
    #[error("vector field index {index} out of range 1..={max}")]
    BadIndex { index: usize, max: usize },
    #[error("function evaluation failed: {0}")]
    EvalFailure(String),
    #[error("kernel argument is zero")]
    ZeroArgument,
    #[error("boundary kernel evaluated on the diagonal (distance {0})")]
    DiagonalSingularity(f64),
    #[error("|K| = {0} is too small for |K|^p to be differentiated")]
    NearZeroModulus(f64),
    #[error("point lies within truncation tolerance of a tile boundary")]
    BoundaryUncertain,
    #[error("no sign tile found; best candidate margin {best_margin}")]
    NoCandidateFound { best_margin: f64 },
    #[error("no separated descendant pair at depth {0}")]
    DepthTooShallow(u32),
    #[error("Hardy exponent p = {0} outside (2/3, 1]")]
    BadExponent(f64),
    #[error("moment order alpha = {alpha} is below the required {required}")]
    MomentOrderTooLow { alpha: usize, required: usize },
    #[error("Gram matrix is singular")]
    GramSingular,
    #[error("too many nodes: {got} > {max}")]
    TooManyNodes { got: usize, max: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

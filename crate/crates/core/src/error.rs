use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension must be at least 1 (got {0})")]
    NonPositiveDimension(usize),
    #[error("hyperplane x[{axis}] = {offset} given twice")]
    DuplicateHyperplane { axis: usize, offset: f64 },
    #[error("hyperplane axis {axis} out of range for dimension {dim}")]
    InvalidAxis { axis: usize, dim: usize },
    #[error("negative snap tolerance {0}")]
    NegativeSnapTolerance(f64),
    #[error("unknown stratum id {0}")]
    UnknownStratum(usize),
    #[error("point is not in the closure of stratum {0}")]
    PointNotInClosure(usize),
    #[error("no dynamics/cost piece configured for stratum {0}")]
    StratumPieceMissing(usize),
    #[error("growth bound violated: {0}")]
    GrowthViolation(String),
    #[error("point is not on a codimension-one interface")]
    NotOnInterface,
    #[error("empty essential control set at an interface point")]
    EmptyEssentialSet,
    #[error("empty tangential control set on stratum {0}")]
    EmptyTangentialSet(usize),
    #[error("more than {0} interface crossings along one trajectory")]
    ZenoCapExceeded(usize),
    #[error("exhaustive search needs {needed} evaluations, budget is {budget}")]
    BudgetExceeded { needed: f64, budget: f64 },
    #[error("query outside grid range: {0}")]
    OutOfRange(String),
    #[error("{clamped} of {total} node updates needed feet outside the box")]
    BoxTooSmall { clamped: usize, total: usize },
    #[error("terminal cost mode does not fit this solver: {0}")]
    TerminalModeMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("config error: {0}")]
    ConfigParse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use std::fmt;

/// Errors surfaced by the toolkit.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A precondition on an argument was violated.
    InvalidArgument(String),
    /// A node id outside the placement was referenced.
    InvalidNode(usize),
    /// Path-loss exponent must exceed 2.
    BadPathLoss(f64),
    /// Traffic with no positive entry where one is required.
    ZeroTraffic,
    /// An empty cache set cannot source any flow.
    EmptyCacheSet,
    /// The LP solver hit its iteration cap or produced residuals above
    /// tolerance; distinct from a certified infeasibility.
    LpNumerical(String),
    /// The instance exceeds a hard size guard for an exact method.
    TooLarge(String),
    /// Traffic cannot be delivered at unit rate (the feasibility multiple
    /// came out below 1).
    Infeasible { phi: f64 },
    /// An internal invariant that should hold for every valid input failed.
    Internal(String),
    /// File or serialization problem in the CLI layer.
    Io(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::InvalidNode(id) => write!(f, "invalid node id {id}"),
            Error::BadPathLoss(a) => write!(f, "path-loss exponent must be > 2, got {a}"),
            Error::ZeroTraffic => write!(f, "traffic matrix has no positive entry"),
            Error::EmptyCacheSet => write!(f, "empty cache set"),
            Error::LpNumerical(msg) => write!(f, "LP numerical failure: {msg}"),
            Error::TooLarge(msg) => write!(f, "instance too large: {msg}"),
            Error::Infeasible { phi } => {
                write!(f, "traffic not supportable at unit rate (multiple = {phi})")
            }
            Error::Internal(msg) => write!(f, "internal consistency failure: {msg}"),
            Error::Io(msg) => write!(f, "io: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

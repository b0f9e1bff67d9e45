use alloc::string::String;
use core::fmt;

/// Errors produced by model construction, filtering, smoothing, calibration
/// and the benchmark harness.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// An innovation or predictive covariance was not numerically positive
    /// definite. Carries the 0-based step index when known.
    SingularCovariance { step: Option<usize> },
    /// Sequence lengths disagree.
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    /// An observation series was empty.
    EmptySeries,
    /// Every child hypothesis at the given step had zero posterior mass,
    /// which signals model misspecification (for example an observation
    /// outside the outlier support while `p_inlier` is zero).
    DegenerateWeights { step: usize },
    /// Exact enumeration was requested for a series too long to enumerate.
    ExactSizeExceeded { len: usize, max: usize },
    /// Smoothing or EM accumulation required per-step history that was not
    /// recorded during filtering.
    HistoryRequired,
    /// A negative time increment was supplied to the transition builder.
    NegativeTimeStep,
    /// Observation times were not strictly increasing; `index` is the
    /// 0-based position of the offending time.
    TimeOrder { index: usize },
    /// The EM normal equations for (mu1, m) were singular.
    SingularMStep,
    /// A parameter or input failed validation.
    InvalidParameter(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::SingularCovariance { step: Some(k) } => {
                write!(f, "singular covariance at step {k}")
            }
            Error::SingularCovariance { step: None } => write!(f, "singular covariance"),
            Error::Dimension {
                what,
                expected,
                got,
            } => write!(f, "dimension mismatch for {what}: expected {expected}, got {got}"),
            Error::EmptySeries => write!(f, "empty observation series"),
            Error::DegenerateWeights { step } => {
                write!(f, "all hypothesis weights vanished at step {step}")
            }
            Error::ExactSizeExceeded { len, max } => {
                write!(f, "exact enumeration limited to {max} steps, got {len}")
            }
            Error::HistoryRequired => {
                write!(f, "operation requires history tracking enabled during filtering")
            }
            Error::NegativeTimeStep => write!(f, "negative time step"),
            Error::TimeOrder { index } => {
                write!(f, "times must be strictly increasing (violated at index {index})")
            }
            Error::SingularMStep => write!(f, "singular EM normal equations"),
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    /// Attaches a step index to a `SingularCovariance` raised without one.
    pub(crate) fn at_step(self, step: usize) -> Self {
        match self {
            Error::SingularCovariance { step: None } => Error::SingularCovariance { step: Some(step) },
            other => other,
        }
    }
}

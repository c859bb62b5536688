use thiserror::Error;

/// Everything that can go wrong across the library.
///
/// Budget variants are kept separate from validation variants so callers
/// (the CLI in particular) can map them onto distinct exit codes.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("budget exceeded: {what} requires {required}, limit is {limit}")]
    BudgetExceeded {
        what: &'static str,
        required: String,
        limit: String,
    },
    #[error("quadrature budget exceeded: {required} panels requested, limit is {limit}")]
    QuadratureBudgetExceeded { required: u64, limit: u64 },
    #[error("tree expansion exceeded {limit} nodes")]
    DepthBudgetExceeded { limit: usize },
    #[error("grid average {value} is not within {tolerance} of an integer")]
    NonIntegerResult { value: f64, tolerance: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("degenerate exponent: {0}")]
    DegenerateExponent(String),
    #[error("singular system: {0}")]
    SingularSystem(String),
    #[error("system dimension n = {0} is below 3")]
    DimensionTooSmall(usize),
    #[error("omega_1 failed the affine check in theta: {0}")]
    NonAffine(String),
    #[error("empty selection: {0}")]
    EmptySelection(String),
}

impl Error {
    pub fn is_budget(&self) -> bool {
        matches!(
            self,
            Error::BudgetExceeded { .. }
                | Error::QuadratureBudgetExceeded { .. }
                | Error::DepthBudgetExceeded { .. }
        )
    }

    pub(crate) fn budget(what: &'static str, required: impl ToString, limit: impl ToString) -> Self {
        Error::BudgetExceeded {
            what,
            required: required.to_string(),
            limit: limit.to_string(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

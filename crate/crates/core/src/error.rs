use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("column {0} has zero norm")]
    ZeroColumn(usize),

    #[error("column {column} is not unit-norm (norm = {norm})")]
    NotUnitNorm { column: usize, norm: f64 },

    #[error("SVD did not converge within {max_iterations} iterations")]
    SvdNoConvergence { max_iterations: usize },

    #[error("matrix is rank deficient: {0}")]
    RankDeficient(String),

    #[error("{what}: {count} exceeds the limit of {limit}")]
    TooLarge {
        what: &'static str,
        count: u128,
        limit: u128,
    },

    #[error("linear program is infeasible")]
    Infeasible,

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown solver `{name}`; valid solvers: {valid}")]
    UnknownSolver { name: String, valid: String },

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for failures that come from the numerics rather than from how
    /// the caller configured the run.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SvdNoConvergence { .. }
                | Error::RankDeficient(_)
                | Error::Infeasible
                | Error::Unbounded
                | Error::NotUnitNorm { .. }
                | Error::ZeroColumn(_)
        )
    }
}

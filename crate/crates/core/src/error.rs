use thiserror::Error;

/// Errors raised by the library.
///
/// The variants are grouped by how a caller should react: input problems
/// (`InvalidInput`, `Precondition`, `Parse`), numerical budget problems
/// (`Budget`, `Numerical`, `StartPoint`, `GridCoverage`) and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unsupported dimension: p = {p}, at most {max} supported")]
    UnsupportedDimension { p: usize, max: usize },

    #[error("combinatorial budget exceeded: {subsets} subsets to test, budget is {budget}")]
    Budget { subsets: u128, budget: u128 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("start-point search failed after {0} attempts")]
    StartPoint(usize),

    #[error("grid does not cover the posterior: boundary mass {boundary_mass:.3e} after {expansions} expansions")]
    GridCoverage { boundary_mass: f64, expansions: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for errors caused by the caller's input rather than by numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::Precondition(_)
                | Error::Parse { .. }
                | Error::UnsupportedDimension { .. }
                | Error::Json(_)
        )
    }

    /// True for errors caused by exhausting a numerical or combinatorial budget.
    pub fn is_budget(&self) -> bool {
        matches!(
            self,
            Error::Budget { .. } | Error::Numerical(_) | Error::StartPoint(_) | Error::GridCoverage { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

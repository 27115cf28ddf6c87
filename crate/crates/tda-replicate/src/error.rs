//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an operation's arguments was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A data file could not be parsed; carries the offending line number.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// The normalization integral underflowed, which signals diverging model
    /// parameters. `point` is the index of the conditional that degenerated,
    /// when evaluated inside a pseudolikelihood sum.
    #[error("degenerate normalization: Z = {z:e} below 1e-300{}", fmt_point(.point))]
    DegenerateNormalization { z: f64, point: Option<usize> },

    /// The Θ search walked past the divergence guard.
    #[error("diverging estimate: max |theta_k| = {norm:e} exceeds {guard:e}")]
    DivergingEstimate { norm: f64, guard: f64 },

    /// The α search failed everywhere it probed on the given range.
    #[error(
        "alpha search failed on [{lo}, {hi}] (probed {probed:?}): {cause}"
    )]
    FitFailure {
        lo: f64,
        hi: f64,
        probed: Vec<f64>,
        cause: String,
    },

    /// Every candidate K failed in model selection.
    #[error("model selection failed for every K: {0}")]
    SelectionFailed(String),

    /// The proposal grid retained no cell above the density cutoff.
    #[error("empty proposal: no grid cell has density >= {cutoff:e}")]
    EmptyProposal { cutoff: f64 },

    /// A cubical complex would exceed the cell memory budget.
    #[error("grid too large: {cells} cells exceeds the budget of {budget}")]
    ResourceLimit { cells: usize, budget: usize },

    /// Too many replications of an experiment failed.
    #[error("experiment failed: {0}")]
    Experiment(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn fmt_point(point: &Option<usize>) -> String {
    match point {
        Some(i) => format!(" (point {i})"),
        None => String::new(),
    }
}

impl Error {
    /// Process exit code for the CLI: 2 for validation/input problems,
    /// 3 for fit failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::DegenerateNormalization { .. }
            | Error::DivergingEstimate { .. }
            | Error::FitFailure { .. }
            | Error::SelectionFailed(_) => 3,
            _ => 2,
        }
    }
}

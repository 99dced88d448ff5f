//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("dataset contains a single class; cross-class distance undefined")]
    SingleClass,

    #[error("all gradient features vanish; margin direction undefined")]
    DegenerateFeatures,

    #[error("no hidden unit survives the output-weight threshold")]
    EmptySurvivors,

    #[error("trajectory has fewer than two snapshots; audit needs consecutive iterates")]
    MissingSnapshots,

    #[error("sampling budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("divergence at step {step}: {message}")]
    Divergence { step: usize, message: String },

    #[error("step size too large: {0}")]
    StepSize(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("bad container: {0}")]
    Container(String),
}

impl Error {
    /// Process exit code convention: 2 invalid input, 3 budget/divergence, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_)
            | Error::DimensionMismatch(_)
            | Error::EmptyDataset
            | Error::SingleClass
            | Error::DegenerateFeatures
            | Error::EmptySurvivors
            | Error::MissingSnapshots => 2,
            Error::BudgetExceeded(_) | Error::Divergence { .. } | Error::StepSize(_) => 3,
            Error::Io(_) | Error::Parse { .. } | Error::Container(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

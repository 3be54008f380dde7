use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The document is not well-formed (syntax or schema).
    #[error("malformed document: {0}")]
    Malformed(String),

    #[error("{field}: dangling state reference {state} (automaton has {states} states)")]
    DanglingState {
        field: String,
        state: usize,
        states: usize,
    },

    #[error("{field}: duplicate alphabet symbol '{symbol}'")]
    DuplicateSymbol { field: String, symbol: char },

    #[error("{field}: {message}")]
    InvalidField { field: String, message: String },

    #[error("unknown symbol '{symbol}' at position {position}")]
    UnknownSymbol { symbol: char, position: usize },

    #[error("regex syntax error at position {position}: {message}")]
    Regex { position: usize, message: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("epsilon closure did not converge within {0} iterations")]
    NonConvergence(usize),

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("cannot summarize an empty score list")]
    EmptyScores,

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Input problems (as opposed to runtime or numeric failures).
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Malformed(_)
                | Error::DanglingState { .. }
                | Error::DuplicateSymbol { .. }
                | Error::InvalidField { .. }
                | Error::Regex { .. }
                | Error::Json(_)
                | Error::Io(_)
        )
    }
}

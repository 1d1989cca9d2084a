use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("feature index {index} is out of bounds for {columns} feature columns")]
    FeatureOutOfBounds { index: usize, columns: usize },

    #[error("invalid tree structure: {0}")]
    Structure(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("infeasible split: {0}")]
    InfeasibleSplit(String),

    #[error("model document error at {path}: {message}")]
    Document { path: String, message: String },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("non-numeric value {value:?} in column `{column}` (data row {row})")]
    NonNumeric {
        column: String,
        row: usize,
        value: String,
    },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("target prevalence {target} unreachable within the sampling budget")]
    PrevalenceUnreachable { target: f64 },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

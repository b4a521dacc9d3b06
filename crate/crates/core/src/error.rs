use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("csv header: {0}")]
    Header(String),

    #[error("row {row}, column `{column}`: {message}")]
    Cell {
        row: usize,
        column: String,
        message: String,
    },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("empty AVG: no rows match the query")]
    EmptyAvg,

    #[error("group value `{0}` is not listed in group_domain")]
    GroupOutsideDomain(String),

    #[error("column `{0}` declares no bounds")]
    MissingBounds(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("invalid preference: {0}")]
    InvalidPreference(String),

    #[error("invalid privacy amount `{0}`")]
    InvalidAmount(String),

    #[error("query id `{0}` already charged")]
    DuplicateQueryId(String),

    #[error("journal corrupted: {0}")]
    CorruptJournal(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by the caller's data, schema, or query rather
    /// than by the environment.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Io(_) | Error::CorruptJournal(_))
    }
}

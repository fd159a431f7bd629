use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("schema error: missing column `{0}`")]
    MissingColumn(String),

    /// `row` is the 1-based index of the data row (the header is not counted).
    #[error("parse error at row {row}, column `{column}`: `{value}` is not a number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("format error at row {row}: expected {expected} fields, found {found}")]
    Format {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("out of bounds: {0}")]
    Bounds(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Bounds(_) | Error::Json(_) => 2,
            Error::Numerical(_) => 4,
            Error::MissingColumn(_)
            | Error::Parse { .. }
            | Error::Format { .. }
            | Error::Shape(_)
            | Error::Data(_)
            | Error::Io(_)
            | Error::Csv(_) => 3,
        }
    }
}

pub(crate) fn shape(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

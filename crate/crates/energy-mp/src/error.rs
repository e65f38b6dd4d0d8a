use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("strategy undefined at {0}")]
    Partial(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub fn from_json(e: serde_json::Error) -> Self {
        if e.is_syntax() || e.is_eof() {
            Error::Syntax { line: e.line(), column: e.column(), message: e.to_string() }
        } else {
            Error::Invalid(e.to_string())
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

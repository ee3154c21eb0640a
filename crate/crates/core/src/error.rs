use thiserror::Error;

use crate::dsl::Ty;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("unknown primitive `{0}`")]
    UnknownPrimitive(String),
    #[error("type mismatch at {location}: expected {expected}, found {found}")]
    TypeMismatch { expected: Ty, found: Ty, location: String },
    #[error("get out of bounds at (x={x}, y={y}) on a {width}x{height} grid")]
    OutOfBoundsGet { x: i64, y: i64, width: usize, height: usize },
    #[error("runtime type error: {0}")]
    Runtime(String),
    #[error("no term of type {request} fits within depth {depth}")]
    DepthUnsatisfiable { request: Ty, depth: usize },
    #[error("term is not derivable under the grammar: {0}")]
    NotDerivable(String),
    #[error("illegal action `{0}` for this environment")]
    IllegalAction(String),
    #[error("unknown task id `{0}`")]
    UnknownTaskId(String),
    #[error("object code {0} has more than one digit")]
    MultiDigitCode(u8),
    #[error("unknown abstraction `{0}`")]
    UnknownAbstraction(String),
    #[error("unknown environment `{0}`")]
    UnknownEnv(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("json error: {0}")]
    Json(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

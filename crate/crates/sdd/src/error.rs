use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SddError {
    #[error("literal 0 is not a valid literal")]
    ZeroLiteral,
    #[error("variable {var} out of range 1..={num_vars}")]
    VarOutOfRange { var: u32, num_vars: u32 },
    #[error("clause mentions variable {0} more than once")]
    DuplicateVar(u32),
    #[error("malformed input at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("node does not respect the manager's vtree: {0}")]
    VtreeMismatch(String),
    #[error("unsatisfiable circuit has no distribution")]
    Unsatisfiable,
    #[error("incompatible vtrees: {0}")]
    IncompatibleVtree(String),
    #[error("unknown variable set: {0}")]
    UnknownVars(String),
}

pub type Result<T> = std::result::Result<T, SddError>;

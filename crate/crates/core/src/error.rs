use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("missing belief for `{0}`")]
    MissingBelief(String),
    #[error("unknown word `{0}`")]
    UnknownByte(String),
    #[error("factor graph is cyclic")]
    Cyclic,
    #[error("product circuit grew to {size} nodes, over the budget of {budget}")]
    ProductBudget { size: usize, budget: usize },
    #[error("malformed dataset at line {line}: {msg}")]
    Dataset { line: usize, msg: String },
    #[error("bad config: {0}")]
    Config(String),
    #[error(transparent)]
    Sdd(#[from] sdd::SddError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

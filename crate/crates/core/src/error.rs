use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid rank {0}: the series index must be at least 1")]
    InvalidRank(usize),
    #[error("invalid grading vector: {0}")]
    InvalidGrading(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid representation index {j} for A_{n}")]
    InvalidRepresentation { n: usize, j: usize },
    #[error("invalid composite root ({first},{last})")]
    InvalidRoot { first: usize, last: usize },
    #[error("invalid basis: {0}")]
    InvalidBasis(String),
    #[error("singular element: {0}")]
    Singular(String),
    #[error("candidate is not a highest function: {0}")]
    NotHighest(String),
    #[error("exact mode does not support {0}")]
    UnsupportedExact(String),
    #[error("construction failed: {0}")]
    Construction(String),
    #[error("stencil leaves the grid: {0}")]
    Stencil(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical breakdown: {0}")]
    Breakdown(String),
    #[error("sign convention failure: {0}")]
    Convention(String),
}

pub type Result<T> = std::result::Result<T, Error>;

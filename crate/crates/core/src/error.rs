use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("subsystem index {index} out of range for {count} subsystems")]
    SubsystemOutOfRange { index: usize, count: usize },

    #[error("matrix is not Hermitian (deviation {0:.3e})")]
    NonHermitian(f64),

    #[error("matrix is not positive semidefinite (eigenvalue {0:.3e})")]
    NotPositive(f64),

    #[error("projectors do not form a complete orthogonal set: {0}")]
    IncompleteProjectors(String),

    #[error("state has zero norm")]
    ZeroNorm,

    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("invalid attack model: {0}")]
    InvalidAttack(String),

    #[error("no records to tally")]
    EmptyInput,

    #[error("missing statistics cells: {}", .0.join(", "))]
    MissingCells(Vec<String>),

    #[error(
        "infeasible statistics for message {message}: split interval [{lo:.6e}, {hi:.6e}] is empty"
    )]
    InfeasibleStats { message: usize, lo: f64, hi: f64 },

    #[error("key table is all zero")]
    EmptyKeyTable,

    #[error("parse error: {0}")]
    Parse(String),
}

//! Error type shared by every module in the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("csv error at line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error("duplicate column name `{0}` in header")]
    DuplicateColumn(String),

    #[error("empty column name in header")]
    EmptyColumnName,

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("missing value at line {line}, column `{column}`; rerun with drop_missing to delete such rows")]
    MissingValue { line: u64, column: String },

    #[error("non-finite value `{value}` at line {line}, column `{column}`")]
    NonFinite {
        line: u64,
        column: String,
        value: String,
    },

    #[error("zero data rows remain ({dropped} dropped by listwise deletion)")]
    ZeroRows { dropped: usize },

    #[error("column `{0}` has zero variance and cannot enter the design")]
    ConstantColumn(String),

    #[error("response is constant (tss = 0); R^2 is undefined")]
    ConstantResponse,

    #[error("design is rank deficient; offending columns: {}", columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("too few rows: need at least {need}, got {got}")]
    TooFewRows { need: usize, got: usize },

    #[error("invalid model spec: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("R^2 = {r2} is too close to 1 (1 - R^2 < {guard:e}); the f^2 denominator is not meaningful")]
    DenominatorGuard { r2: f64, guard: f64 },

    #[error("reduced-model R^2 {r2_a} exceeds full-model R^2 {r2_ab}; the models are not nested OLS fits on the same rows")]
    NonNested { r2_a: f64, r2_ab: f64 },

    #[error("{skipped} of {total} bootstrap replicates were degenerate (limit is 1%)")]
    DegenerateReplicates { skipped: usize, total: usize },

    #[error("optimizer did not converge within {0} iterations")]
    NonConvergence(usize),

    #[error("oracle error: {0}")]
    Oracle(String),

    #[error("oracle handshake failed; first line from child was {first_line:?}")]
    Handshake { first_line: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("column {0} has near-zero norm and cannot be normalized")]
    DegenerateColumn(usize),

    #[error("input contains NaN or infinite values")]
    NonFinite,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("design needs at least {min_rows} rows and {min_cols} column(s), got {rows}x{cols}")]
    TooSmall {
        rows: usize,
        cols: usize,
        min_rows: usize,
        min_cols: usize,
    },

    #[error("cannot project onto {requested} columns with only {rows} rows")]
    TooManyColumns { requested: usize, rows: usize },

    #[error("index {index} out of range for {len} columns")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("variable {0} appears in its own conditioning set")]
    IndexOverlap(usize),

    #[error("no non-degenerate candidate variables remain")]
    NoCandidates,

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("support Gram matrix stayed singular after {attempts} resampling attempts")]
    SingularSupportGram { attempts: usize },

    #[error("signal variance is zero; cannot calibrate noise")]
    ZeroSignal,

    #[error("columns are linearly dependent; least squares is not identifiable")]
    RankDeficient,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite objective value at theta={theta:?}, x={x}, c={c}")]
    NonFinite { theta: Vec<f64>, x: f64, c: f64 },

    #[error("root finding failed: {0}")]
    RootFinding(String),

    #[error("integration failed: {0}")]
    Integration(String),

    #[error("regression fit failed: {0}")]
    Fit(String),

    #[error("all {0} paths diverged")]
    AllDiverged(usize),

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("{}: {source}", path.display())]
    File { path: std::path::PathBuf, source: std::io::Error },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

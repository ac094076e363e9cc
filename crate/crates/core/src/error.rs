use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix has non-positive determinant ({det:.3e})")]
    DegenerateMatrix { det: f64 },
    #[error("matrix is near singular (sigma_min/sigma_max = {ratio:.3e})")]
    NearSingular { ratio: f64 },
    #[error("matrix is not positive semidefinite (eigenvalue {eigenvalue:.3e})")]
    NotPsd { eigenvalue: f64 },
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("point configuration is degenerate: {0}")]
    DegenerateConfiguration(&'static str),
    #[error("point sets differ in size: {0} vs {1}")]
    ShapeMismatch(usize, usize),
    #[error("structure has no alpha-carbon atoms")]
    EmptyStructure,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no cross-protein contacts below the pocket threshold")]
    NoContacts,
    #[error("head matrix is degenerate (det = {det:.3e})")]
    DegenerateHead { det: f64 },
    #[error("non-finite loss on sample {sample}")]
    NonFiniteLoss { sample: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

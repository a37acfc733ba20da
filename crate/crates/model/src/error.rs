use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch}, step {step}: {task} loss is {value}")]
    Diverged { epoch: usize, step: usize, task: String, value: f64 },

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error(transparent)]
    Core(#[from] usvsthem_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

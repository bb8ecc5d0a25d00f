use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Bad scenario, check id, flag or config key; exit code 2.
    #[error("usage: {0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] eqdiff::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("config: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

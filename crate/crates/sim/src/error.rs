use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    /// Rejected before any sampling; maps to exit code 2.
    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Core(#[from] rrldp::Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl SimError {
    pub fn is_config(&self) -> bool {
        matches!(self, Self::Config { .. })
    }
}

pub type SimResult<T> = std::result::Result<T, SimError>;

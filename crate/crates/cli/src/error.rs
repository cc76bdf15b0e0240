use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Lib(#[from] npudraft::Error),

    #[error("config error at `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("cannot read `{path}` (from `{key}`): {source}")]
    File {
        key: String,
        path: String,
        source: std::io::Error,
    },

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Config { .. }
            | CliError::File { .. }
            | CliError::Lib(npudraft::Error::Config { .. }) => 3,
            _ => 1,
        }
    }
}

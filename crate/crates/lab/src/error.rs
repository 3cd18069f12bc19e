use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("config error: {0}")]
    Config(String),
    #[error("config error: unknown key {key:?} for {command}")]
    UnknownKey { key: String, command: String },
    #[error("config error: {key} = {value:?} is not {expected}")]
    Type {
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("config error at {path}:{line}: {msg}")]
    Syntax { path: PathBuf, line: usize, msg: String },
    #[error("unknown command {0:?}")]
    UnknownCommand(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("thread pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Core(#[from] lfunlab_core::Error),
}

impl LabError {
    /// 2 for anything the caller got wrong before a computation started, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_)
            | LabError::UnknownKey { .. }
            | LabError::Type { .. }
            | LabError::Syntax { .. }
            | LabError::UnknownCommand(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;

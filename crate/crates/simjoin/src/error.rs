use std::path::{Path, PathBuf};

use simjoin_core::Error as CoreError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("{stage}: {source}")]
    Core { stage: &'static str, source: CoreError },
    #[error("{context}: {source}")]
    Json { context: String, source: serde_json::Error },
    #[error("config: {0}")]
    Config(String),
    #[error("{}", .0.to_string().trim_end())]
    Clap(#[from] clap::Error),
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io { path: path.to_path_buf(), source }
    }

    pub fn format(path: &Path, msg: impl Into<String>) -> Self {
        Error::Format { path: path.to_path_buf(), msg: msg.into() }
    }

    /// Process exit code: 1 usage, 2 data, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Clap(e) if !e.use_stderr() => 0,
            Error::Usage(_) | Error::Config(_) | Error::Clap(_) => 1,
            Error::Core { source, .. } if is_numeric(source) => 3,
            _ => 2,
        }
    }

    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Usage(_) | Error::Clap(_) => "usage",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Format { .. } => "format",
            Error::Core { source, .. } if is_numeric(source) => "numeric",
            Error::Core { .. } => "data",
            Error::Json { .. } => "json",
        }
    }
}

fn is_numeric(e: &CoreError) -> bool {
    matches!(e, CoreError::Diverged { .. } | CoreError::NoNegatives { .. })
}

/// Attaches a stage name to core errors.
pub trait Stage<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> Stage<T> for std::result::Result<T, CoreError> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|source| Error::Core { stage, source })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(Error::Usage("x".into()).exit_code(), 1);
        assert_eq!(Error::format(Path::new("a"), "bad").exit_code(), 2);
        let e: Result<()> = Err(CoreError::Diverged { epoch: 3 }).stage("train");
        let e = e.unwrap_err();
        assert_eq!(e.exit_code(), 3);
        assert_eq!(e.to_string(), "train: training diverged at epoch 3: non-finite loss");
    }
}

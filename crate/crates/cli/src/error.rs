use std::path::Path;

use serde_json::json;
use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad config file or flag combination. Exit code 2.
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] pnr_pulsekit::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Format(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }

    pub fn code(&self) -> &'static str {
        match self {
            CliError::Config(_) => "CONFIG_ERROR",
            CliError::Core(e) => e.code(),
            CliError::Io { .. } => "IO_ERROR",
            CliError::Format(_) => "FORMAT_ERROR",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({ "error": { "code": self.code(), "message": self.to_string() } })
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Format(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_errors_exit_with_two() {
        let e = CliError::config("unknown field `foo`");
        assert_eq!(e.exit_code(), 2);
        assert_eq!(e.to_json()["error"]["code"], "CONFIG_ERROR");
    }

    #[test]
    fn core_errors_keep_their_code() {
        let e = CliError::from(pnr_pulsekit::Error::NoPeaks);
        assert_eq!(e.code(), "NO_PEAKS");
        assert_eq!(e.exit_code(), 1);
    }
}

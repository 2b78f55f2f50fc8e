use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config {}: {message}", path.display())]
    ConfigInvalid { path: PathBuf, message: String },
    #[error("manifest {}: field `{field}`: {message}", path.display())]
    ManifestInvalid {
        path: PathBuf,
        field: String,
        message: String,
    },
    #[error("{kind}: {message}")]
    Data { kind: &'static str, message: String },
}

/// Diagnostic line written to stderr on failure.
#[derive(Serialize)]
struct ErrorLine<'a> {
    error: &'a str,
    exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    field: Option<&'a str>,
    message: String,
}

impl CliError {
    pub fn config(path: &Path, message: impl Into<String>) -> Self {
        CliError::ConfigInvalid {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }

    pub fn manifest(path: &Path, field: &str, message: impl Into<String>) -> Self {
        CliError::ManifestInvalid {
            path: path.to_path_buf(),
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub fn data(kind: &'static str, message: impl ToString) -> Self {
        CliError::Data {
            kind,
            message: message.to_string(),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::data("Io", format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::ConfigInvalid { .. } => 1,
            _ => 2,
        }
    }

    /// One JSON object on one line.
    pub fn to_line(&self) -> String {
        let (error, path, field, message) = match self {
            CliError::Usage(m) => ("UsageError", None, None, m.clone()),
            CliError::ConfigInvalid { path, message } => {
                ("ConfigInvalid", Some(path), None, message.clone())
            }
            CliError::ManifestInvalid {
                path,
                field,
                message,
            } => (
                "ManifestInvalid",
                Some(path),
                Some(field.as_str()),
                message.clone(),
            ),
            CliError::Data { kind, message } => (*kind, None, None, message.clone()),
        };
        let line = ErrorLine {
            error,
            exit_code: self.exit_code(),
            path: path.map(|p| p.display().to_string()),
            field,
            message,
        };
        serde_json::to_string(&line).expect("error lines always serialize")
    }
}

use std::path::PathBuf;

use crate::model::Diagnostic;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid instance: {}", summarize(.0))]
    InvalidInstance(Vec<Diagnostic>),

    #[error("provably infeasible: task {task}: {reason}")]
    Infeasible { task: String, reason: String },

    #[error("unknown application `{0}`")]
    UnknownApplication(String),

    #[error("nothing to decompose: task requirement is QM")]
    NothingToDecompose,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("search space too large for exhaustive enumeration: ~{estimate:.3e} > {limit:.3e}")]
    SearchSpaceTooLarge { estimate: f64, limit: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Parse {
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}

fn summarize(diags: &[Diagnostic]) -> String {
    let shown: Vec<String> = diags.iter().take(3).map(|d| d.to_string()).collect();
    if diags.len() > 3 {
        format!("{} (+{} more)", shown.join("; "), diags.len() - 3)
    } else {
        shown.join("; ")
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = GamcError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GamcError {
    #[error("shape mismatch in {op}: {left_rows}x{left_cols} vs {right_rows}x{right_cols}")]
    ShapeMismatch {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    #[error("corrupt graph: {0}")]
    CorruptGraph(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("graph `{graph_id}` violates {rule}")]
    Invariant { graph_id: String, rule: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite loss at epoch {epoch} (graph `{graph_id}`)")]
    NonFiniteLoss { epoch: usize, graph_id: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl GamcError {
    pub(crate) fn shape(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        GamcError::ShapeMismatch {
            op,
            left_rows: left.0,
            left_cols: left.1,
            right_rows: right.0,
            right_cols: right.1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GamcError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error: 1 usage, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            GamcError::Config(_) => 1,
            GamcError::CorruptGraph(_)
            | GamcError::Parse { .. }
            | GamcError::Invariant { .. }
            | GamcError::Io { .. }
            | GamcError::Checkpoint(_) => 2,
            GamcError::ShapeMismatch { .. }
            | GamcError::Contract(_)
            | GamcError::NonFiniteLoss { .. } => 3,
        }
    }
}

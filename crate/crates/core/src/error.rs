use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("edge row {edge}: endpoint {node} out of range for {n} nodes")]
    IndexOutOfRange { edge: usize, node: usize, n: usize },

    #[error("edge row {edge}: self-loop on node {node}")]
    SelfLoop { edge: usize, node: usize },

    #[error("edge row {edge}: duplicate of undirected edge at row {first}")]
    DuplicateEdge { edge: usize, first: usize },

    #[error("non-finite value in {what} at row {row}")]
    NonFinite { what: &'static str, row: usize },

    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: String,
        got: String,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("dimension mismatch at line {line}: expected (d={d}, de={de}), got (d={got_d}, de={got_de})")]
    DimensionMismatch {
        line: usize,
        d: usize,
        de: usize,
        got_d: usize,
        got_de: usize,
    },

    #[error("loss is not a scalar: shape {rows}x{cols}")]
    NotScalar { rows: usize, cols: usize },

    #[error("graph has no nodes")]
    EmptyGraph,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid window configuration: {0}")]
    Window(String),

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    NonFiniteLoss { epoch: usize, loss: f64 },

    #[error("evaluation set is empty")]
    EmptySet,

    #[error("need at least {needed} samples (and one per class per fold), got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("unknown fixture {0:?}")]
    UnknownFixture(String),

    #[error("checkpoint does not match data: {0}")]
    CheckpointMismatch(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(what: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::ShapeMismatch {
            what,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input or configuration (exit code 2).
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Window(_) | Error::UnknownFixture(_) | Error::TooFewSamples { .. }
        )
    }
}

use std::path::PathBuf;

use thiserror::Error;

/// Every failure surfaced by the library.
///
/// Variants are grouped by the exit code the command-line driver maps them
/// to: configuration problems (2), data problems (3) and numeric failures (4).
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("index error: {0}")]
    Index(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("ingestion error: {0}")]
    Ingest(String),
    #[error("sampling error: {0}")]
    Sampling(String),
    #[error("split error: {0}")]
    Split(String),
    #[error("spec error: {0}")]
    Spec(String),
    #[error("wiring error: {0}")]
    Wiring(String),
    #[error("inference error: {0}")]
    Inference(String),
    #[error("explanation error: {0}")]
    Explanation(String),
    #[error("alignment error: importance has {importance} residues, distances have {distance}")]
    Alignment { importance: usize, distance: usize },
    #[error("undefined metric: {0}")]
    Metric(String),
    #[error("selection error: {0}")]
    Selection(String),
    #[error("checkpoint error in {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Spec(_)
            | Error::Wiring(_)
            | Error::Selection(_)
            | Error::Json(_) => 2,
            Error::NonFinite(_) => 4,
            _ => 3,
        }
    }

    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }
}

//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by network construction, algorithm steps, data loading
/// and the experiment harness.
#[derive(Error, Debug)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value in {context} at layer {layer}")]
    NonFinite { context: &'static str, layer: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("bad IDX magic in {path}: expected {expected:#010x}, found {found:#010x}")]
    IdxMagic {
        path: String,
        expected: u32,
        found: u32,
    },

    #[error("truncated IDX file {path}: {detail}")]
    IdxTruncated { path: String, detail: String },

    #[error("image/label count mismatch: {images} images vs {labels} labels")]
    IdxCountMismatch { images: usize, labels: usize },

    #[error("undefined angle: zero-norm update vector")]
    ZeroNormAngle,

    #[error("training diverged at epoch {epoch}, batch {batch}{}", layer.map(|l| format!(", layer {l}")).unwrap_or_default())]
    Diverged {
        epoch: usize,
        batch: usize,
        layer: Option<usize>,
    },

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

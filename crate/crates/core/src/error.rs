use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("bad magic bytes: expected \"ACSP\", found {found:?}")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported format version {found} (this build reads version {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("file truncated while reading {what}")]
    TruncatedFile { what: &'static str },

    #[error("non-finite value at flat index {index}")]
    NonFiniteValue { index: usize },

    #[error("unexpected container kind {found} (expected {expected})")]
    WrongKind { expected: &'static str, found: u32 },

    #[error("malformed container: {0}")]
    MalformedContainer(String),

    #[error("malformed plan: {0}")]
    MalformedPlan(String),

    #[error("plan json: {0}")]
    PlanJson(#[from] serde_json::Error),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("layer {layer_id} has no prunable components")]
    NotPrunableLayer { layer_id: usize },

    #[error("training diverged at epoch {epoch} (non-finite loss)")]
    Divergence { epoch: usize },

    #[error("invalid hyper-parameter: {0}")]
    BadParams(String),

    #[error("class {class} has {count} samples; at least 2 are required")]
    ClassTooSmall { class: usize, count: usize },

    #[error("invalid cluster count k={k} for {n} points")]
    BadK { k: usize, n: usize },

    #[error("invalid sweep range [{k_min}, {k_max}] stride {stride} for {n} points")]
    BadRange {
        k_min: usize,
        k_max: usize,
        stride: usize,
        n: usize,
    },

    #[error("least-squares fit is underdetermined: {points} points for degree {degree}")]
    Underdetermined { points: usize, degree: usize },

    #[error("knee detection needs at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("layer {layer_id}: {source}")]
    Layer {
        layer_id: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Stable, machine-parseable name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io(_) => "Io",
            Error::BadMagic { .. } => "BadMagic",
            Error::VersionMismatch { .. } => "VersionMismatch",
            Error::TruncatedFile { .. } => "TruncatedFile",
            Error::NonFiniteValue { .. } => "NonFiniteValue",
            Error::WrongKind { .. } => "WrongKind",
            Error::MalformedContainer(_) => "MalformedContainer",
            Error::MalformedPlan(_) => "MalformedPlan",
            Error::PlanJson(_) => "MalformedPlan",
            Error::InvalidDataset(_) => "InvalidDataset",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::NotPrunableLayer { .. } => "NotPrunableLayer",
            Error::Divergence { .. } => "Divergence",
            Error::BadParams(_) => "BadParams",
            Error::ClassTooSmall { .. } => "ClassTooSmall",
            Error::BadK { .. } => "BadK",
            Error::BadRange { .. } => "BadRange",
            Error::Underdetermined { .. } => "Underdetermined",
            Error::TooFewPoints { .. } => "TooFewPoints",
            Error::Parse { .. } => "ParseError",
            Error::Layer { source, .. } => source.kind(),
        }
    }

    pub(crate) fn in_layer(self, layer_id: usize) -> Error {
        match self {
            e @ Error::Layer { .. } => e,
            e => Error::Layer {
                layer_id,
                source: Box::new(e),
            },
        }
    }
}

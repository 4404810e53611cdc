use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no face found in image")]
    NoFaceFound,

    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),

    #[error("3D reconstruction failed: {0}")]
    ReconstructionFailed(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("augmented mask projection lies entirely outside the image")]
    OutOfFrame,

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("asset missing: {}", .0.display())]
    AssetMissing(PathBuf),

    #[error("checksum mismatch for {}: expected {expected}, found {found}", path.display())]
    ChecksumMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("cosine similarity undefined for a zero vector")]
    ZeroVector,

    #[error("identity `{0}` has no images")]
    EmptyIdentity(String),

    #[error("identity `{0}` is missing from the gallery")]
    MissingIdentity(String),

    #[error("targeted optimization requires a single identity, found `{0}` and `{1}`")]
    MixedIdentities(String, String),

    #[error("non-finite loss at iteration {iteration}: sim={sim_loss} tv={tv_loss}")]
    NonFiniteLoss {
        iteration: usize,
        sim_loss: f64,
        tv_loss: f64,
    },

    #[error("empty impostor probe set")]
    EmptyProbeSet,

    #[error("no frame with a detected face")]
    NoDetections,

    #[error("render failed for item {index}: {source}")]
    Item {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed file {}: {message}", path.display())]
    Format { path: PathBuf, message: String },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error on {}: {source}", path.display())]
    Codec {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn at(index: usize, source: Error) -> Self {
        Error::Item {
            index,
            source: Box::new(source),
        }
    }

    /// True when the failure stems from caller-supplied input or missing assets
    /// rather than an internal fault.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Item { source, .. } => source.is_input_error(),
            Error::NonFiniteLoss { .. } => false,
            _ => true,
        }
    }

    /// Path the error refers to, when there is one.
    pub fn path(&self) -> Option<&std::path::Path> {
        match self {
            Error::AssetMissing(p) => Some(p),
            Error::ChecksumMismatch { path, .. }
            | Error::Format { path, .. }
            | Error::Io { path, .. }
            | Error::Codec { path, .. } => Some(path),
            Error::Item { source, .. } => source.path(),
            _ => None,
        }
    }

    /// Stable machine-readable name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NoFaceFound => "NoFaceFound",
            Error::BackendUnavailable(_) => "BackendUnavailable",
            Error::ReconstructionFailed(_) => "ReconstructionFailed",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::OutOfFrame => "OutOfFrame",
            Error::ShapeMismatch { .. } => "ShapeMismatch",
            Error::AssetMissing(_) => "AssetMissing",
            Error::ChecksumMismatch { .. } => "ChecksumMismatch",
            Error::UnknownModel(_) => "UnknownModel",
            Error::ZeroVector => "ZeroVector",
            Error::EmptyIdentity(_) => "EmptyIdentity",
            Error::MissingIdentity(_) => "MissingIdentity",
            Error::MixedIdentities(..) => "MixedIdentities",
            Error::NonFiniteLoss { .. } => "NonFiniteLoss",
            Error::EmptyProbeSet => "EmptyProbeSet",
            Error::NoDetections => "NoDetections",
            Error::Item { .. } => "RenderFailure",
            Error::Format { .. } => "Format",
            Error::Io { .. } => "Io",
            Error::Codec { .. } => "Codec",
        }
    }
}

//! Embedding models, cosine similarity and enrolled identity galleries.

mod gallery;
mod model;
pub mod network;
mod registry;
mod similarity;

pub use gallery::{build_gallery, group_by_identity, GalleryMode, IdentityGallery};
pub use model::{embed, embed_with_pullback, ConstantEmbedder, Embedder, ModelInfo, NetworkEmbedder, Pullback};
pub use registry::{ModelEntry, ModelKind, ModelManifest, ModelRegistry};
pub use similarity::{cosine_similarity, cosine_to_unit_with_grad, norm, normalize};

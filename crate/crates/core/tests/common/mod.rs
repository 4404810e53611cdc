#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use advmask_core::dataset::prepare_all;
use advmask_core::embedding::{
    build_gallery, group_by_identity, Embedder, GalleryMode, IdentityGallery, ModelEntry, ModelManifest,
    ModelRegistry,
};
use advmask_core::renderer::{default_support, EllipsoidBackend, MaskTexture, PreparedFace, DEFAULT_HEIGHT, DEFAULT_WIDTH};
use advmask_core::rng;
use advmask_core::synth::{self, SyntheticConfig};
use ndarray::Array2;

pub fn toy(name: &str, seed: u64) -> Arc<dyn Embedder> {
    toys(&[(name, seed)]).remove(0)
}

pub fn toys(specs: &[(&str, u64)]) -> Vec<Arc<dyn Embedder>> {
    let manifest = ModelManifest {
        models: specs.iter().map(|(n, s)| ModelEntry::toy(*n, *s)).collect(),
    };
    let mut registry = ModelRegistry::new(manifest, Path::new("unused"));
    specs.iter().map(|(n, _)| registry.load(n).unwrap()).collect()
}

pub fn synthetic(identities: usize, images: usize, seed: u64) -> SyntheticConfig {
    SyntheticConfig {
        identities,
        images_per_identity: images,
        seed,
        noise: 0.01,
    }
}

pub fn faces(identities: usize, images: usize, seed: u64) -> Vec<PreparedFace> {
    faces_from(&synthetic(identities, images, seed), 0, images)
}

pub fn faces_from(config: &SyntheticConfig, start: usize, count: usize) -> Vec<PreparedFace> {
    let samples = synth::dataset_range(config, start, count).unwrap();
    prepare_all(samples, &EllipsoidBackend).unwrap()
}

pub fn plain_gallery(model: &dyn Embedder, faces: &[PreparedFace]) -> IdentityGallery {
    build_gallery(
        model,
        &group_by_identity(faces),
        GalleryMode::Plain,
        &[],
        &mut rng::seeded(0),
    )
    .unwrap()
}

pub fn support() -> Array2<bool> {
    default_support(DEFAULT_HEIGHT, DEFAULT_WIDTH)
}

pub fn white() -> MaskTexture {
    MaskTexture::white_default()
}

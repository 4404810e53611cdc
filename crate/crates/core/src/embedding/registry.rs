//! Model manifest and registry.
//!
//! Manifest (TOML):
//!
//! ```toml
//! [[model]]
//! name = "toy-a"
//! kind = "toy"
//! seed = 1
//! depth = 2
//! dim = 64
//! loss = "arcface"
//!
//! [[model]]
//! name = "r100-arcface"
//! kind = "asset"
//! path = "r100_arcface.advw"
//! checksum = "<sha256 hex>"
//! depth = 100
//! loss = "arcface"
//! ```
//!
//! Asset paths are resolved against `$ADVMASK_ASSET_DIR` when set, otherwise
//! against the manifest's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::model::{Embedder, ModelInfo, NetworkEmbedder};
use super::network::{toy_network, Network, ToyArchitecture};
use crate::digest;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Toy,
    Asset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub name: String,
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checksum: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<String>,
}

impl ModelEntry {
    pub fn toy(name: impl Into<String>, seed: u64) -> Self {
        ModelEntry {
            name: name.into(),
            kind: ModelKind::Toy,
            path: None,
            checksum: None,
            seed: Some(seed),
            depth: Some(2),
            dim: Some(64),
            loss: Some("toy".into()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    #[serde(rename = "model", default)]
    pub models: Vec<ModelEntry>,
}

impl ModelManifest {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let m: ModelManifest =
            toml::from_str(text).map_err(|e| Error::format(origin, e.to_string()))?;
        let mut seen = std::collections::BTreeSet::new();
        for e in &m.models {
            if !seen.insert(e.name.as_str()) {
                return Err(Error::format(origin, format!("duplicate model `{}`", e.name)));
            }
            if e.kind == ModelKind::Asset && (e.path.is_none() || e.checksum.is_none()) {
                return Err(Error::format(
                    origin,
                    format!("asset model `{}` needs both path and checksum", e.name),
                ));
            }
        }
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::AssetMissing(path.to_path_buf())
            } else {
                Error::io(path, e)
            }
        })?;
        Self::parse(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }
}

/// Builds and caches embedding models by name. Loaded models are immutable
/// and shared through `Arc`.
pub struct ModelRegistry {
    entries: BTreeMap<String, ModelEntry>,
    asset_dir: PathBuf,
    loaded: BTreeMap<String, Arc<dyn Embedder>>,
}

impl ModelRegistry {
    pub fn new(manifest: ModelManifest, asset_dir: impl Into<PathBuf>) -> Self {
        ModelRegistry {
            entries: manifest
                .models
                .into_iter()
                .map(|e| (e.name.clone(), e))
                .collect(),
            asset_dir: asset_dir.into(),
            loaded: BTreeMap::new(),
        }
    }

    /// Registry over a manifest file; assets resolve against
    /// `$ADVMASK_ASSET_DIR` or the manifest's directory.
    pub fn from_manifest_file(path: &Path) -> Result<Self> {
        let manifest = ModelManifest::load(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Ok(Self::new(manifest, digest::asset_dir(base)))
    }

    pub fn entries(&self) -> impl Iterator<Item = &ModelEntry> {
        self.entries.values()
    }

    pub fn load(&mut self, name: &str) -> Result<Arc<dyn Embedder>> {
        if let Some(m) = self.loaded.get(name) {
            return Ok(Arc::clone(m));
        }
        let entry = self
            .entries
            .get(name)
            .ok_or_else(|| Error::UnknownModel(name.to_string()))?;
        let model = build(entry, &self.asset_dir)?;
        self.loaded.insert(name.to_string(), Arc::clone(&model));
        Ok(model)
    }

    /// Registers an already-built model under its own name.
    pub fn insert(&mut self, model: Arc<dyn Embedder>) {
        self.loaded.insert(model.info().name.clone(), model);
    }

    pub fn unload(&mut self, name: &str) -> bool {
        self.loaded.remove(name).is_some()
    }

    pub fn list(&self) -> Vec<ModelInfo> {
        self.loaded.values().map(|m| m.info().clone()).collect()
    }
}

fn build(entry: &ModelEntry, asset_dir: &Path) -> Result<Arc<dyn Embedder>> {
    let loss = entry.loss.clone().unwrap_or_else(|| "unknown".into());
    match entry.kind {
        ModelKind::Toy => {
            let arch = ToyArchitecture {
                depth: entry.depth.unwrap_or(2),
                dim: entry.dim.unwrap_or(64),
                seed: entry.seed.unwrap_or(0),
            };
            let net = toy_network(&entry.name, arch)?;
            Ok(Arc::new(NetworkEmbedder::new(net, Some(arch.depth), loss)))
        }
        ModelKind::Asset => {
            let rel = entry.path.as_ref().expect("validated at parse");
            let path = asset_dir.join(rel);
            let checksum = entry.checksum.as_deref().expect("validated at parse");
            let bytes = digest::read_verified(&path, checksum)?;
            let mut net = Network::from_bytes(&bytes, &path)?;
            if net.name() != entry.name {
                net = Network::new(entry.name.clone(), net.input_shape(), net.layers().to_vec())?;
            }
            if let Some(dim) = entry.dim {
                if dim != net.output_dim() {
                    return Err(Error::ShapeMismatch {
                        expected: format!("embedding dim {dim}"),
                        found: format!("dim {}", net.output_dim()),
                    });
                }
            }
            Ok(Arc::new(NetworkEmbedder::new(net, entry.depth, loss)))
        }
    }
}

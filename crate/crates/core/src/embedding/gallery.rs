//! Enrolled identity embeddings.
//!
//! Gallery file layout (all integers little-endian):
//!
//! ```text
//! magic    b"AMGL"
//! version  u32 (= 1)
//! model    u32 byte length + UTF-8 model name
//! dim      u32
//! mode     u8 (0 = plain, 1 = mask_augmented)
//! count    u32
//! entries  count × (u32 byte length + UTF-8 identity, dim × f32)
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{embed, Embedder};
use super::similarity::normalize;
use crate::error::{Error, Result};
use crate::renderer::{render, AugmentationParams, MaskTexture, PreparedFace};
use crate::rng::Rng;

const MAGIC: &[u8; 4] = b"AMGL";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GalleryMode {
    /// Mean over the original images only.
    Plain,
    /// Mean over the originals plus one standard-masked copy of each.
    MaskAugmented,
}

impl GalleryMode {
    fn code(self) -> u8 {
        match self {
            GalleryMode::Plain => 0,
            GalleryMode::MaskAugmented => 1,
        }
    }
}

/// Unit-norm reference embedding per identity, for one model.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityGallery {
    model_name: String,
    mode: GalleryMode,
    dim: usize,
    entries: BTreeMap<String, Vec<f64>>,
}

impl IdentityGallery {
    pub fn new(model_name: impl Into<String>, mode: GalleryMode, dim: usize) -> Self {
        IdentityGallery {
            model_name: model_name.into(),
            mode,
            dim,
            entries: BTreeMap::new(),
        }
    }

    /// Adds (or replaces) an identity; the vector is unit-normalized.
    pub fn insert(&mut self, identity: impl Into<String>, vector: &[f64]) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::ShapeMismatch {
                expected: format!("vector of length {}", self.dim),
                found: format!("length {}", vector.len()),
            });
        }
        self.entries.insert(identity.into(), normalize(vector)?);
        Ok(())
    }

    pub fn model_name(&self) -> &str {
        &self.model_name
    }

    pub fn mode(&self) -> GalleryMode {
        self.mode
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, identity: &str) -> Option<&[f64]> {
        self.entries.get(identity).map(Vec::as_slice)
    }

    pub fn require(&self, identity: &str) -> Result<&[f64]> {
        self.get(identity)
            .ok_or_else(|| Error::MissingIdentity(identity.to_string()))
    }

    pub fn identities(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Cosine of `probe` against `identity`'s entry.
    pub fn score(&self, probe: &[f64], identity: &str) -> Result<f64> {
        let e = self.require(identity)?;
        let p = normalize(probe)?;
        Ok(dot(&p, e).clamp(-1.0, 1.0))
    }

    /// Highest-scoring identity; ties go to the lexicographically first.
    pub fn best_match(&self, probe: &[f64]) -> Result<Option<(&str, f64)>> {
        let p = normalize(probe)?;
        let mut best: Option<(&str, f64)> = None;
        for (k, v) in &self.entries {
            let s = dot(&p, v).clamp(-1.0, 1.0);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((k.as_str(), s));
            }
        }
        Ok(best)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        put_str(&mut out, &self.model_name);
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.push(self.mode.code());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (k, v) in &self.entries {
            put_str(&mut out, k);
            for x in v {
                out.extend_from_slice(&(*x as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { buf: bytes, path };
        if r.take(4)? != MAGIC {
            return Err(Error::format(path, "bad gallery magic"));
        }
        if r.u32()? != VERSION {
            return Err(Error::format(path, "unsupported gallery version"));
        }
        let model_name = r.string()?;
        let dim = r.u32()? as usize;
        let mode = match r.take(1)?[0] {
            0 => GalleryMode::Plain,
            1 => GalleryMode::MaskAugmented,
            m => return Err(Error::format(path, format!("unknown gallery mode {m}"))),
        };
        let count = r.u32()? as usize;
        let mut g = IdentityGallery::new(model_name, mode, dim);
        for _ in 0..count {
            let key = r.string()?;
            let raw = r.take(4 * dim)?;
            let v: Vec<f64> = raw
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
                .collect();
            g.insert(key, &v)
                .map_err(|e| Error::format(path, format!("bad entry: {e}")))?;
        }
        if !r.buf.is_empty() {
            return Err(Error::format(path, "trailing bytes after gallery"));
        }
        Ok(g)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::AssetMissing(path.to_path_buf())
            } else {
                Error::io(path, e)
            }
        })?;
        Self::from_bytes(&bytes, path)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::format(self.path, "truncated gallery"));
        }
        let (a, b) = self.buf.split_at(n);
        self.buf = b;
        Ok(a)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::format(self.path, "identity key is not UTF-8"))
    }
}

/// Unit-normalizes each embedding, averages, and renormalizes.
fn mean_direction(vectors: &[Vec<f64>]) -> Result<Vec<f64>> {
    let dim = vectors[0].len();
    let mut acc = vec![0.0; dim];
    for v in vectors {
        for (a, x) in acc.iter_mut().zip(normalize(v)?) {
            *a += x;
        }
    }
    let n = vectors.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    normalize(&acc)
}

/// Builds the reference embedding of every identity.
///
/// In [`GalleryMode::MaskAugmented`] each original image also contributes a
/// copy wearing one of `standard_masks`, chosen uniformly per image from
/// `rng` in identity and image order, rendered without augmentation.
pub fn build_gallery(
    model: &dyn Embedder,
    images_by_identity: &BTreeMap<String, Vec<PreparedFace>>,
    mode: GalleryMode,
    standard_masks: &[MaskTexture],
    rng: &mut Rng,
) -> Result<IdentityGallery> {
    if mode == GalleryMode::MaskAugmented && standard_masks.is_empty() {
        return Err(Error::InvalidConfig(
            "mask-augmented gallery needs at least one standard mask".into(),
        ));
    }
    let info = model.info();
    let mut gallery = IdentityGallery::new(info.name.clone(), mode, info.dim);
    for (identity, faces) in images_by_identity {
        if faces.is_empty() {
            return Err(Error::EmptyIdentity(identity.clone()));
        }
        let mut images = Vec::with_capacity(faces.len() * 2);
        for (i, f) in faces.iter().enumerate() {
            images.push(f.image().clone());
            if mode == GalleryMode::MaskAugmented {
                let m = &standard_masks[rng.random_range(0..standard_masks.len())];
                let masked = render(m, f, &AugmentationParams::identity())
                    .map_err(|e| Error::at(i, e))?;
                images.push(masked);
            }
        }
        let embeddings = images
            .par_iter()
            .map(|img| embed(model, img))
            .collect::<Result<Vec<_>>>()?;
        gallery.insert(identity.clone(), &mean_direction(&embeddings)?)?;
    }
    Ok(gallery)
}

/// Groups faces by identity, preserving order within each identity.
pub fn group_by_identity(faces: &[PreparedFace]) -> BTreeMap<String, Vec<PreparedFace>> {
    let mut map: BTreeMap<String, Vec<PreparedFace>> = BTreeMap::new();
    for f in faces {
        map.entry(f.identity().to_string()).or_default().push(f.clone());
    }
    map
}

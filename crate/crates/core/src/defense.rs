//! Countermeasures: standard-mask substitution and adversarial training
//! data generation.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{save_png, Image};
use crate::renderer::{
    detect_landmarks, default_support, render, sample_augmentation, AugmentationConfig, AugmentationParams,
    FaceSample, LandmarkBackend, MaskTexture, Point, PreparedFace, ReconstructionBackend, StandardMask,
    DEFAULT_HEIGHT, DEFAULT_WIDTH,
};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApplyWhen {
    #[default]
    Always,
    MaskDetected,
}

/// Decides whether a face wears a mask.
pub trait MaskPresence: Send + Sync {
    fn mask_present(&self, face: &PreparedFace) -> Result<bool>;
}

#[derive(Clone)]
pub struct SanitizationPolicy {
    pub replacement: MaskTexture,
    pub apply_when: ApplyWhen,
    /// Required when `apply_when` is [`ApplyWhen::MaskDetected`].
    pub presence: Option<Arc<dyn MaskPresence>>,
}

impl Default for SanitizationPolicy {
    fn default() -> Self {
        SanitizationPolicy {
            replacement: StandardMask::Blue.texture(&default_support(DEFAULT_HEIGHT, DEFAULT_WIDTH)),
            apply_when: ApplyWhen::Always,
            presence: None,
        }
    }
}

impl std::fmt::Debug for SanitizationPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SanitizationPolicy")
            .field("apply_when", &self.apply_when)
            .field("presence", &self.presence.is_some())
            .finish_non_exhaustive()
    }
}

/// Overwrites the lower face with the policy's replacement texture,
/// rendered without augmentation.
pub fn substitute_mask(
    image: &Image,
    landmarks: &[Point],
    policy: &SanitizationPolicy,
    backend: &dyn ReconstructionBackend,
) -> Result<Image> {
    let sample = FaceSample::new("probe", "", image.clone(), landmarks.to_vec())?;
    let face = PreparedFace::prepare(sample, backend)?;
    if policy.apply_when == ApplyWhen::MaskDetected {
        let presence = policy.presence.as_ref().ok_or_else(|| {
            Error::BackendUnavailable("no mask-presence classifier configured".into())
        })?;
        if !presence.mask_present(&face)? {
            return Ok(image.clone());
        }
    }
    render(&policy.replacement, &face, &AugmentationParams::identity())
}

/// [`substitute_mask`] with landmarks detected by `detector`.
pub fn sanitize(
    image: &Image,
    detector: &dyn LandmarkBackend,
    policy: &SanitizationPolicy,
    backend: &dyn ReconstructionBackend,
) -> Result<Image> {
    let landmarks = detect_landmarks(image, detector)?;
    substitute_mask(image, &landmarks, policy, backend)
}

/// Name used in the manifest for the unmasked original.
pub const ORIGINAL: &str = "original";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub source_path: String,
    pub output_path: String,
    pub mask_name: String,
    pub identity: String,
    /// Augmentation seed of this copy (0 for the original).
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemFailure {
    pub key: String,
    pub mask_name: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrainingSetManifest {
    pub entries: Vec<ManifestEntry>,
    pub failures: Vec<ItemFailure>,
}

impl TrainingSetManifest {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
        if self.entries.is_empty() {
            w.write_record(["source_path", "output_path", "mask_name", "identity", "seed"])
                .map_err(|e| Error::format(path, e.to_string()))?;
        }
        for e in &self.entries {
            w.serialize(e).map_err(|err| Error::format(path, err.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Vec<ManifestEntry>> {
        let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
        r.deserialize()
            .map(|row| row.map_err(|e| Error::format(path, e.to_string())))
            .collect()
    }
}

fn file_safe(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Writes each face and one rendered copy per mask under `out_dir`, as
/// `out_dir/<identity>/<image>__<mask>.png`. Paths in the manifest are
/// relative to `out_dir`. Each copy draws its augmentation from a stream
/// keyed by the face key and mask name. Copies that fail to render are
/// listed in `failures` and skipped.
pub fn generate_adv_training_set(
    faces: &[PreparedFace],
    masks: &[(String, MaskTexture)],
    out_dir: &Path,
    seed: u64,
    augmentation: &AugmentationConfig,
) -> Result<TrainingSetManifest> {
    if masks.is_empty() {
        return Err(Error::InvalidConfig("no masks given".into()));
    }
    augmentation.validate()?;
    let results: Vec<Vec<std::result::Result<ManifestEntry, ItemFailure>>> = faces
        .par_iter()
        .map(|f| {
            let identity = f.identity().to_string();
            let stem = file_safe(f.key().rsplit('/').next().unwrap_or(f.key()));
            let source = f
                .sample
                .source
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_else(|| f.key().to_string());
            let dir = PathBuf::from(file_safe(&identity));
            let emit = |name: &str, image: Result<Image>, item_seed: u64| {
                let rel = dir.join(format!("{stem}__{}.png", file_safe(name)));
                let written = image.and_then(|img| {
                    let full = out_dir.join(&rel);
                    if let Some(parent) = full.parent() {
                        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
                    }
                    save_png(&img, &full)
                });
                match written {
                    Ok(()) => Ok(ManifestEntry {
                        source_path: source.clone(),
                        output_path: rel.display().to_string(),
                        mask_name: name.to_string(),
                        identity: identity.clone(),
                        seed: item_seed,
                    }),
                    Err(e) => Err(ItemFailure {
                        key: f.key().to_string(),
                        mask_name: name.to_string(),
                        error: e.to_string(),
                    }),
                }
            };
            let mut out = vec![emit(ORIGINAL, Ok(f.image().clone()), 0)];
            for (name, mask) in masks {
                let item_seed = rng::derive_seed(seed, &format!("{}/{name}", f.key()));
                let image = sample_augmentation(&mut rng::seeded(item_seed), augmentation)
                    .and_then(|p| render(mask, f, &p));
                out.push(emit(name, image, item_seed));
            }
            out
        })
        .collect();
    let mut manifest = TrainingSetManifest::default();
    for r in results.into_iter().flatten() {
        match r {
            Ok(e) => manifest.entries.push(e),
            Err(f) => {
                log::warn!("skipping {} with {}: {}", f.key, f.mask_name, f.error);
                manifest.failures.push(f);
            }
        }
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_names_are_sanitized() {
        assert_eq!(file_safe("adv/v1 final"), "adv_v1_final");
        assert_eq!(file_safe("blue-2_x"), "blue-2_x");
    }
}

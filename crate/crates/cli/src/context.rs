use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use advmask_core::dataset::{fingerprint, load_faces, prepare_all};
use advmask_core::digest;
use advmask_core::embedding::{
    build_gallery, group_by_identity, Embedder, GalleryMode, IdentityGallery, ModelEntry, ModelManifest, ModelRegistry,
};
use advmask_core::eval::{control_conditions, MaskCondition};
use advmask_core::optimizer::load_checkpoint_mask;
use advmask_core::renderer::{
    default_support, load_support, EllipsoidBackend, FaceSample, Gender, LandmarkBackend, MaskTexture,
    NetworkLandmarks, PositionMapBackend, PreparedFace, ReconstructionBackend, SyntheticLandmarks,
};
use advmask_core::rng;
use advmask_core::synth;
use advmask_core::{imaging, Error, Result};
use ndarray::Array2;

use crate::config::{ControlFaces, ExperimentConfig, LandmarkChoice, NamedMask, ReconstructionChoice};

/// Everything a command needs, built lazily from the config.
pub struct Context {
    pub config: ExperimentConfig,
    pub out: PathBuf,
    landmarks: Box<dyn LandmarkBackend>,
    reconstruction: Box<dyn ReconstructionBackend>,
    registry: ModelRegistry,
    support: Array2<bool>,
    faces: BTreeMap<String, Arc<Vec<PreparedFace>>>,
}

impl Context {
    pub fn new(config: ExperimentConfig, out: PathBuf) -> Result<Self> {
        let landmarks: Box<dyn LandmarkBackend> = match &config.backends.landmarks {
            LandmarkChoice::Synthetic => Box::new(SyntheticLandmarks),
            LandmarkChoice::Network { path } => Box::new(NetworkLandmarks::load(path)?),
        };
        let reconstruction: Box<dyn ReconstructionBackend> = match &config.backends.reconstruction {
            ReconstructionChoice::Ellipsoid => Box::new(EllipsoidBackend),
            ReconstructionChoice::PositionMap { path } => Box::new(PositionMapBackend::load(path)?),
        };
        let mut manifest = match &config.model_manifest {
            Some(p) => ModelManifest::load(p)?,
            None => ModelManifest::default(),
        };
        manifest.models.extend(config.models.iter().cloned());
        let manifest = ModelManifest::parse(&manifest.to_toml(), Path::new("config"))?;
        let default_assets = config.asset_dir.clone().unwrap_or_else(|| PathBuf::from("assets"));
        let registry = ModelRegistry::new(manifest, digest::asset_dir(&default_assets));
        let support = match &config.mask.support {
            Some(p) => load_support(p)?,
            None => default_support(config.mask.height, config.mask.width),
        };
        if support.dim() != (config.mask.height, config.mask.width) {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{} mask support", config.mask.height, config.mask.width),
                found: format!("{}x{}", support.dim().0, support.dim().1),
            });
        }
        Ok(Context {
            config,
            out,
            landmarks,
            reconstruction,
            registry,
            support,
            faces: BTreeMap::new(),
        })
    }

    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    pub fn support(&self) -> &Array2<bool> {
        &self.support
    }

    pub fn landmarks(&self) -> &dyn LandmarkBackend {
        self.landmarks.as_ref()
    }

    pub fn reconstruction(&self) -> &dyn ReconstructionBackend {
        self.reconstruction.as_ref()
    }

    pub fn model(&mut self, name: &str) -> Result<Arc<dyn Embedder>> {
        self.registry.load(name)
    }

    pub fn model_names(&self) -> Vec<String> {
        self.registry.entries().map(|e| e.name.clone()).collect()
    }

    pub fn registry_entries(&self) -> Vec<ModelEntry> {
        self.registry.entries().cloned().collect()
    }

    pub fn samples(&self, key: &str) -> Result<Vec<FaceSample>> {
        load_faces(self.config.dataset(key)?, self.landmarks())
    }

    /// Faces of dataset `key` with their UV correspondences, cached.
    pub fn faces(&mut self, key: &str) -> Result<Arc<Vec<PreparedFace>>> {
        if let Some(f) = self.faces.get(key) {
            return Ok(f.clone());
        }
        let samples = self.samples(key)?;
        let prepared = Arc::new(prepare_all(samples, self.reconstruction())?);
        self.faces.insert(key.to_string(), prepared.clone());
        Ok(prepared)
    }

    pub fn fingerprint(&mut self, key: &str) -> Result<String> {
        let faces = self.faces(key)?;
        let samples: Vec<FaceSample> = faces.iter().map(|f| f.sample.clone()).collect();
        Ok(fingerprint(&samples))
    }

    /// Gallery of `model` over dataset `enroll`. Mask-augmented galleries
    /// draw their standard masks from the `gallery` stream.
    pub fn gallery(&mut self, model: &dyn Embedder, enroll: &str, mode: GalleryMode) -> Result<IdentityGallery> {
        let faces = self.faces(enroll)?;
        let masks: Vec<MaskTexture> = self
            .config
            .gallery
            .standard_masks
            .iter()
            .map(|m| m.texture(&self.support))
            .collect();
        let mut r = rng::substream(self.seed(), &format!("gallery/{}/{enroll}", model.info().name));
        build_gallery(model, &group_by_identity(&faces), mode, &masks, &mut r)
    }

    pub fn load_mask(&self, mask: &NamedMask) -> Result<MaskTexture> {
        match (&mask.path, mask.standard) {
            (Some(path), None) => load_mask_file(path, &self.support),
            (None, Some(s)) => Ok(s.texture(&self.support)),
            _ => Err(Error::InvalidConfig(format!(
                "mask `{}` needs exactly one of `path` or `standard`",
                mask.name
            ))),
        }
    }

    /// Clean and control conditions by name, in the order given.
    pub fn conditions(&mut self, names: &[String], control: Option<&ControlFaces>) -> Result<Vec<MaskCondition>> {
        if names.is_empty() {
            return Ok(Vec::new());
        }
        let (male, female) = self.control_faces(control)?;
        let mut r = rng::substream(self.seed(), "random-mask");
        let all = control_conditions(&self.support, &male, &female, &mut r)?;
        names
            .iter()
            .map(|n| {
                all.iter()
                    .find(|c| &c.name == n)
                    .cloned()
                    .ok_or_else(|| Error::InvalidConfig(format!("unknown condition `{n}`")))
            })
            .collect()
    }

    fn control_faces(&self, control: Option<&ControlFaces>) -> Result<(PreparedFace, PreparedFace)> {
        let prepare = |s: FaceSample| PreparedFace::prepare(s, self.reconstruction());
        match control {
            Some(c) => {
                let load = |p: &Path, key: &str| -> Result<PreparedFace> {
                    let img = imaging::load_face_png(p)?;
                    let mut s = FaceSample::detect(key, key, img, self.landmarks())?;
                    s.source = Some(p.to_path_buf());
                    prepare(s)
                };
                Ok((load(&c.male, "control-male")?, load(&c.female, "control-female")?))
            }
            None => {
                let seed = rng::derive_seed(self.seed(), "control");
                Ok((
                    prepare(synth::control_face(Gender::Male, seed)?)?,
                    prepare(synth::control_face(Gender::Female, seed)?)?,
                ))
            }
        }
    }
}

/// A texture PNG, with the support from its `.support.png` sibling when
/// present and `fallback` otherwise.
pub fn load_mask_file(path: &Path, fallback: &Array2<bool>) -> Result<MaskTexture> {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    if path.with_file_name(format!("{stem}.support.png")).exists() {
        load_checkpoint_mask(path)
    } else {
        MaskTexture::load_with_support(path, fallback.clone())
    }
}

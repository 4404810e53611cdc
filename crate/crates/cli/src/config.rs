//! Experiment configuration file.
//!
//! A TOML document with `version = 1`. Relative paths are resolved against
//! the directory of the config file when it is loaded; the snapshot written
//! next to every run holds the resolved, absolute form.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use advmask_core::dataset::DatasetSource;
use advmask_core::defense::ApplyWhen;
use advmask_core::embedding::{GalleryMode, ModelEntry};
use advmask_core::eval::{PersistenceConfig, RecognitionRule};
use advmask_core::optimizer::OptimizerConfig;
use advmask_core::renderer::{AugmentationConfig, StandardMask, DEFAULT_HEIGHT, DEFAULT_WIDTH};
use advmask_core::{Error, Result};
use serde::{Deserialize, Serialize};

pub const VERSION: u32 = 1;
pub const SNAPSHOT_FILE: &str = "config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Asset cache; `ADVMASK_ASSET_DIR` takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asset_dir: Option<PathBuf>,
    #[serde(default)]
    pub backends: Backends,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_manifest: Option<PathBuf>,
    #[serde(default, rename = "model", skip_serializing_if = "Vec::is_empty")]
    pub models: Vec<ModelEntry>,
    #[serde(default)]
    pub mask: MaskShape,
    #[serde(default)]
    pub gallery: GallerySection,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub datasets: BTreeMap<String, DatasetSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transfer: Option<TransferSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibrate: Option<CalibrateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defend: Option<DefendSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<ReportSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthSection>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Backends {
    #[serde(default)]
    pub landmarks: LandmarkChoice,
    #[serde(default)]
    pub reconstruction: ReconstructionChoice,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LandmarkChoice {
    #[default]
    Synthetic,
    Network { path: PathBuf },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReconstructionChoice {
    #[default]
    Ellipsoid,
    PositionMap { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskShape {
    pub height: usize,
    pub width: usize,
    /// Grayscale PNG; the default silhouette is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<PathBuf>,
}

impl Default for MaskShape {
    fn default() -> Self {
        MaskShape {
            height: DEFAULT_HEIGHT,
            width: DEFAULT_WIDTH,
            support: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GallerySection {
    /// Standard masks drawn from for mask-augmented galleries.
    pub standard_masks: Vec<StandardMask>,
}

impl Default for GallerySection {
    fn default() -> Self {
        GallerySection {
            standard_masks: vec![StandardMask::Blue],
        }
    }
}

/// A mask texture: a file written by `train`, or a standard colour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedMask {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standard: Option<StandardMask>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    /// Dataset key of the training images.
    pub dataset: String,
    /// Dataset key of the enrollment images (defaults to `dataset`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enroll: Option<String>,
    /// Required for targeted mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identity: Option<String>,
    /// Starting texture; white when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<PathBuf>,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub probe: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enroll: Option<String>,
    /// Models to evaluate; all configured models when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub models: Vec<String>,
    #[serde(default = "default_conditions")]
    pub conditions: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub masks: Vec<NamedMask>,
    #[serde(default = "default_eval_gallery")]
    pub gallery_mode: GalleryMode,
    #[serde(default = "AugmentationConfig::identity")]
    pub augmentation: AugmentationConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_faces: Option<ControlFaces>,
}

/// Images whose lower faces become the face-texture control masks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlFaces {
    pub male: PathBuf,
    pub female: PathBuf,
}

pub fn default_conditions() -> Vec<String> {
    ["clean", "blue", "random", "male_face", "female_face"]
        .map(String::from)
        .to_vec()
}

fn default_eval_gallery() -> GalleryMode {
    GalleryMode::MaskAugmented
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferTargetSpec {
    pub model: String,
    pub probe: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enroll: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferSection {
    /// Control conditions listed before the masks (may be empty).
    #[serde(default)]
    pub conditions: Vec<String>,
    pub masks: Vec<NamedMask>,
    pub targets: Vec<TransferTargetSpec>,
    #[serde(default = "default_eval_gallery")]
    pub gallery_mode: GalleryMode,
    #[serde(default = "AugmentationConfig::identity")]
    pub augmentation: AugmentationConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_faces: Option<ControlFaces>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateSection {
    #[serde(default = "default_far")]
    pub far_target: f64,
    /// Text or CSV file of precomputed impostor similarities, one per line.
    /// When set, the model and datasets are not used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enroll: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<String>,
    /// Masks worn by the impostor probes; one masked copy per mask.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub masks: Vec<NamedMask>,
    #[serde(default = "default_eval_gallery")]
    pub gallery_mode: GalleryMode,
}

fn default_far() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FrameSource {
    /// Numbered image files, one per frame.
    Directory { path: PathBuf },
    /// Frames of one synthetic identity, optionally masked, with blank
    /// frames interleaved.
    Synthetic {
        dataset: String,
        identity: String,
        start: usize,
        count: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mask: Option<NamedMask>,
        #[serde(default)]
        blank_every: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub model: String,
    pub enroll: String,
    pub subject: String,
    pub frames: FrameSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// `threshold.json` written by `calibrate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold_file: Option<PathBuf>,
    #[serde(default)]
    pub rule: RecognitionRule,
    #[serde(default)]
    pub persistence: PersistenceConfig,
    #[serde(default = "default_eval_gallery")]
    pub gallery_mode: GalleryMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefendAction {
    Sanitize,
    TrainingSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefendSection {
    pub action: DefendAction,
    pub input: String,
    /// Masks rendered onto the inputs: the worn mask before sanitizing, or
    /// the copies of the training set.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub masks: Vec<NamedMask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replacement: Option<NamedMask>,
    #[serde(default)]
    pub apply_when: ApplyWhen,
    #[serde(default)]
    pub augmentation: AugmentationConfig,
    /// When set, sanitizing also scores worn and sanitized probes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluate: Option<DefendEvaluate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefendEvaluate {
    pub model: String,
    pub enroll: String,
    #[serde(default = "default_eval_gallery")]
    pub gallery_mode: GalleryMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSection {
    #[serde(default)]
    pub reports: Vec<PathBuf>,
    #[serde(default)]
    pub matrices: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub identities: usize,
    pub images_per_identity: usize,
    #[serde(default)]
    pub noise: f64,
    /// Identities listed in `train.txt`; the rest go to `test.txt`.
    #[serde(default)]
    pub train_identities: usize,
}

impl ExperimentConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", origin.display())))?;
        if cfg.version != VERSION {
            return Err(Error::InvalidConfig(format!(
                "{}: unsupported config version {} (expected {VERSION})",
                origin.display(),
                cfg.version
            )));
        }
        let base = origin
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        let base = std::path::absolute(base).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.resolve(&base);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::AssetMissing(path.to_path_buf())
            } else {
                Error::InvalidConfig(format!("{}: {e}", path.display()))
            }
        })?;
        Self::parse(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let fix_opt = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                fix(p);
            }
        };
        let fix_mask = |m: &mut NamedMask| fix_opt(&mut m.path);
        let fix_faces = |c: &mut Option<ControlFaces>| {
            if let Some(c) = c {
                fix(&mut c.male);
                fix(&mut c.female);
            }
        };
        fix_opt(&mut self.out);
        fix_opt(&mut self.asset_dir);
        fix_opt(&mut self.model_manifest);
        fix_opt(&mut self.mask.support);
        if let LandmarkChoice::Network { path } = &mut self.backends.landmarks {
            fix(path);
        }
        if let ReconstructionChoice::PositionMap { path } = &mut self.backends.reconstruction {
            fix(path);
        }
        for d in self.datasets.values_mut() {
            if let DatasetSource::Directory { root, split } = d {
                fix(root);
                fix_opt(split);
            }
        }
        if let Some(t) = &mut self.train {
            fix_opt(&mut t.init);
        }
        if let Some(e) = &mut self.eval {
            e.masks.iter_mut().for_each(fix_mask);
            fix_faces(&mut e.control_faces);
        }
        if let Some(t) = &mut self.transfer {
            t.masks.iter_mut().for_each(fix_mask);
            fix_faces(&mut t.control_faces);
        }
        if let Some(c) = &mut self.calibrate {
            fix_opt(&mut c.scores);
            c.masks.iter_mut().for_each(fix_mask);
        }
        if let Some(s) = &mut self.simulate {
            fix_opt(&mut s.threshold_file);
            match &mut s.frames {
                FrameSource::Directory { path } => fix(path),
                FrameSource::Synthetic { mask, .. } => {
                    if let Some(m) = mask {
                        fix_mask(m);
                    }
                }
            }
        }
        if let Some(d) = &mut self.defend {
            d.masks.iter_mut().for_each(fix_mask);
            if let Some(m) = &mut d.replacement {
                fix_mask(m);
            }
        }
        if let Some(r) = &mut self.report {
            r.reports.iter_mut().for_each(fix);
            r.matrices.iter_mut().for_each(fix);
        }
    }

    pub fn dataset(&self, key: &str) -> Result<&DatasetSource> {
        self.datasets
            .get(key)
            .ok_or_else(|| Error::InvalidConfig(format!("no dataset named `{key}` in [datasets]")))
    }

    pub fn section<'a, T>(&self, section: &'a Option<T>, name: &str) -> Result<&'a T> {
        section
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig(format!("config has no [{name}] section")))
    }
}

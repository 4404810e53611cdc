use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::train::{HistoryRecord, OptimizerConfig, TrainingHistory};
use crate::error::{Error, Result};
use crate::renderer::MaskTexture;

pub const MASK_FILE: &str = "mask.png";
pub const SUPPORT_FILE: &str = "mask.support.png";
pub const META_FILE: &str = "mask.meta.json";
pub const HISTORY_FILE: &str = "history.csv";

/// Sidecar written next to a mask texture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: OptimizerConfig,
    pub seed: u64,
    /// Number of optimizer steps taken.
    pub iteration: usize,
    pub sim_loss: Option<f64>,
    pub tv_loss: Option<f64>,
    pub total_loss: Option<f64>,
    pub models: Vec<String>,
    pub dataset_fingerprint: String,
    pub mask_height: usize,
    pub mask_width: usize,
}

impl CheckpointMeta {
    pub fn from_history(history: &TrainingHistory, dataset_fingerprint: impl Into<String>) -> Self {
        let last = history.last();
        CheckpointMeta {
            config: history.config.clone(),
            seed: history.config.seed,
            iteration: history.records.len(),
            sim_loss: last.map(|r| r.sim_loss),
            tv_loss: last.map(|r| r.tv_loss),
            total_loss: last.map(|r| r.total_loss),
            models: history.config.ensemble.clone(),
            dataset_fingerprint: dataset_fingerprint.into(),
            mask_height: history.final_mask.height(),
            mask_width: history.final_mask.width(),
        }
    }
}

/// Writes the final mask, its support, the sidecar and the history CSV into
/// `dir`; returns the mask path.
pub fn save_checkpoint(dir: &Path, history: &TrainingHistory, dataset_fingerprint: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mask_path = dir.join(MASK_FILE);
    history.final_mask.save(&mask_path, &dir.join(SUPPORT_FILE))?;
    let meta = CheckpointMeta::from_history(history, dataset_fingerprint);
    let meta_path = dir.join(META_FILE);
    let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::format(&meta_path, e.to_string()))?;
    std::fs::write(&meta_path, json + "\n").map_err(|e| Error::io(&meta_path, e))?;
    write_history_csv(&dir.join(HISTORY_FILE), &history.records)?;
    Ok(mask_path)
}

/// Loads a mask saved by [`save_checkpoint`]. The support file is looked up
/// next to `mask_path`.
pub fn load_checkpoint_mask(mask_path: &Path) -> Result<MaskTexture> {
    let support = mask_path.with_file_name(
        mask_path
            .file_stem()
            .map(|s| format!("{}.support.png", s.to_string_lossy()))
            .unwrap_or_else(|| SUPPORT_FILE.to_string()),
    );
    MaskTexture::load(mask_path, &support)
}

pub fn load_meta(path: &Path) -> Result<CheckpointMeta> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_history_csv(path: &Path, records: &[HistoryRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    if records.is_empty() {
        w.write_record(["iteration", "sim_loss", "tv_loss", "total_loss", "seconds"])
            .map_err(|e| Error::format(path, e.to_string()))?;
    }
    for r in records {
        w.serialize(r).map_err(|e| Error::format(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_history_csv(path: &Path) -> Result<Vec<HistoryRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::format(path, e.to_string())))
        .collect()
}

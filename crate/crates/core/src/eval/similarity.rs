use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{embed, Embedder, IdentityGallery};
use crate::error::{Error, Result};
use crate::optimizer::draw_params;
use crate::renderer::{
    extract_texture, render, AugmentationConfig, MaskTexture, PreparedFace, StandardMask,
};
use crate::rng::{self, Rng};

/// A named way of occluding probes: no mask, or one texture.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskCondition {
    pub name: String,
    pub texture: Option<MaskTexture>,
}

impl MaskCondition {
    pub fn clean() -> Self {
        MaskCondition {
            name: "clean".into(),
            texture: None,
        }
    }

    pub fn with_texture(name: impl Into<String>, texture: MaskTexture) -> Self {
        MaskCondition {
            name: name.into(),
            texture: Some(texture),
        }
    }
}

/// The control conditions: clean, blue, random texture, and textures lifted
/// from a male and a female face outside the probe set.
pub fn control_conditions(
    support: &Array2<bool>,
    male_face: &PreparedFace,
    female_face: &PreparedFace,
    rng: &mut Rng,
) -> Result<Vec<MaskCondition>> {
    Ok(vec![
        MaskCondition::clean(),
        MaskCondition::with_texture("blue", StandardMask::Blue.texture(support)),
        MaskCondition::with_texture("random", MaskTexture::random(support.clone(), rng)),
        MaskCondition::with_texture("male_face", extract_texture(male_face, support)?),
        MaskCondition::with_texture("female_face", extract_texture(female_face, support)?),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRecord {
    pub key: String,
    pub identity: String,
    pub condition: String,
    pub model: String,
    pub cosine: f64,
}

/// Distribution of cosines for one (condition, model) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: String,
    pub model: String,
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
}

/// Linearly interpolated quantile of sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl ConditionSummary {
    fn of(condition: &str, model: &str, values: &[f64]) -> Self {
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        ConditionSummary {
            condition: condition.to_string(),
            model: model.to_string(),
            count: s.len(),
            mean: s.iter().sum::<f64>() / s.len() as f64,
            median: quantile(&s, 0.5),
            q1: quantile(&s, 0.25),
            q3: quantile(&s, 0.75),
            min: s[0],
            max: s[s.len() - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub records: Vec<SimilarityRecord>,
    pub summaries: Vec<ConditionSummary>,
}

impl SimilarityReport {
    /// Aggregates per (condition, model), in order of first appearance.
    pub fn from_records(records: Vec<SimilarityRecord>) -> Self {
        let mut order: Vec<(String, String)> = Vec::new();
        let mut groups: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
        for r in &records {
            let k = (r.condition.clone(), r.model.clone());
            if !groups.contains_key(&k) {
                order.push(k.clone());
            }
            groups.entry(k).or_default().push(r.cosine);
        }
        let summaries = order
            .iter()
            .map(|k| ConditionSummary::of(&k.0, &k.1, &groups[k]))
            .collect();
        SimilarityReport { records, summaries }
    }

    pub fn merge(reports: impl IntoIterator<Item = SimilarityReport>) -> Self {
        Self::from_records(reports.into_iter().flat_map(|r| r.records).collect())
    }

    pub fn summary(&self, condition: &str, model: &str) -> Option<&ConditionSummary> {
        self.summaries
            .iter()
            .find(|s| s.condition == condition && s.model == model)
    }

    /// Mean cosine of the first summary, for single-condition reports.
    pub fn mean(&self) -> Option<f64> {
        self.summaries.first().map(|s| s.mean)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
        if self.records.is_empty() {
            w.write_record(["key", "identity", "condition", "model", "cosine"])
                .map_err(|e| Error::format(path, e.to_string()))?;
        }
        for r in &self.records {
            w.serialize(r).map_err(|e| Error::format(path, e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
        let records = r
            .deserialize()
            .map(|row| row.map_err(|e| Error::format(path, e.to_string())))
            .collect::<Result<Vec<SimilarityRecord>>>()?;
        Ok(Self::from_records(records))
    }
}

/// Scores every probe, wearing `condition`'s mask, against its own gallery
/// entry. Augmentations are drawn from `rng` in probe order; with the
/// default identity configuration the masks are applied as placed.
pub fn eval_similarity(
    condition: &MaskCondition,
    probes: &[PreparedFace],
    model: &dyn Embedder,
    gallery: &IdentityGallery,
    rng: &mut Rng,
    augmentation: &AugmentationConfig,
) -> Result<SimilarityReport> {
    for p in probes {
        gallery.require(p.identity())?;
    }
    let params = draw_params(probes.len(), rng, augmentation)?;
    let model_name = model.info().name.clone();
    let records = probes
        .par_iter()
        .zip(&params)
        .enumerate()
        .map(|(i, (p, prm))| {
            let image = match &condition.texture {
                Some(t) => render(t, p, prm).map_err(|e| Error::at(i, e))?,
                None => p.image().clone(),
            };
            let e = embed(model, &image)?;
            Ok(SimilarityRecord {
                key: p.key().to_string(),
                identity: p.identity().to_string(),
                condition: condition.name.clone(),
                model: model_name.clone(),
                cosine: gallery.score(&e, p.identity())?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SimilarityReport::from_records(records))
}

/// One column of a transfer matrix: a model, the gallery it scores against
/// and the probes it sees.
#[derive(Clone, Copy)]
pub struct TransferTarget<'a> {
    pub label: &'a str,
    pub model: &'a dyn Embedder,
    pub gallery: &'a IdentityGallery,
    pub probes: &'a [PreparedFace],
}

/// Mean cosine per (mask, target).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrix {
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl TransferMatrix {
    pub fn get(&self, row: &str, column: &str) -> Option<f64> {
        let r = self.rows.iter().position(|x| x == row)?;
        let c = self.columns.iter().position(|x| x == column)?;
        Some(self.values[r][c])
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
        let map = |e: csv::Error| Error::format(path, e.to_string());
        let mut header = vec!["mask".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header).map_err(map)?;
        for (name, row) in self.rows.iter().zip(&self.values) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(map)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
        let bad = |m: String| Error::format(path, m);
        let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
        let columns: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let (mut rows, mut values) = (Vec::new(), Vec::new());
        for rec in r.records() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            rows.push(rec.get(0).unwrap_or_default().to_string());
            let row = rec
                .iter()
                .skip(1)
                .map(|v| v.parse::<f64>().map_err(|e| bad(format!("bad cell `{v}`: {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != columns.len() {
                return Err(bad("ragged matrix row".into()));
            }
            values.push(row);
        }
        Ok(TransferMatrix { rows, columns, values })
    }
}

/// Evaluates every mask against every target. Each cell draws its
/// augmentation stream from a seed taken from `rng` in row-major order, so
/// a cell equals [`eval_similarity`] run with `rng::seeded(that seed)`.
pub fn transferability_matrix(
    masks: &[MaskCondition],
    targets: &[TransferTarget<'_>],
    rng: &mut Rng,
    augmentation: &AugmentationConfig,
) -> Result<(TransferMatrix, SimilarityReport)> {
    let mut values = Vec::with_capacity(masks.len());
    let mut reports = Vec::new();
    for m in masks {
        let mut row = Vec::with_capacity(targets.len());
        for t in targets {
            let mut cell_rng = rng::seeded(rng.random());
            let report = eval_similarity(m, t.probes, t.model, t.gallery, &mut cell_rng, augmentation)?;
            row.push(report.mean().ok_or_else(|| {
                Error::InvalidConfig(format!("no probes for target `{}`", t.label))
            })?);
            reports.push(report);
        }
        values.push(row);
    }
    Ok((
        TransferMatrix {
            rows: masks.iter().map(|m| m.name.clone()).collect(),
            columns: targets.iter().map(|t| t.label.to_string()).collect(),
            values,
        },
        SimilarityReport::merge(reports),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(condition: &str, cosine: f64) -> SimilarityRecord {
        SimilarityRecord {
            key: "k".into(),
            identity: "i".into(),
            condition: condition.into(),
            model: "m".into(),
            cosine,
        }
    }

    #[test]
    fn aggregates_per_condition() {
        let r = SimilarityReport::from_records(vec![
            rec("a", 0.1),
            rec("b", 1.0),
            rec("a", 0.4),
            rec("a", 0.2),
            rec("a", 0.3),
        ]);
        assert_eq!(r.summaries.len(), 2);
        let a = r.summary("a", "m").unwrap();
        assert_eq!(a.count, 4);
        assert!((a.mean - 0.25).abs() < 1e-12);
        assert!((a.median - 0.25).abs() < 1e-12);
        assert!((a.q1 - 0.175).abs() < 1e-12);
        assert!((a.q3 - 0.325).abs() < 1e-12);
        assert_eq!((a.min, a.max), (0.1, 0.4));
    }

    #[test]
    fn matrix_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = TransferMatrix {
            rows: vec!["blue".into(), "adv".into()],
            columns: vec!["toy-a".into()],
            values: vec![vec![0.75], vec![-0.125]],
        };
        let p = dir.path().join("m.csv");
        m.write_csv(&p).unwrap();
        assert_eq!(TransferMatrix::read_csv(&p).unwrap(), m);
    }

    #[test]
    fn csv_round_trip_recomputes_aggregates() {
        let dir = tempfile::tempdir().unwrap();
        let r = SimilarityReport::from_records(vec![rec("a", 0.5), rec("a", -0.25)]);
        let p = dir.path().join("r.csv");
        r.write_csv(&p).unwrap();
        assert_eq!(SimilarityReport::read_csv(&p).unwrap(), r);
    }
}

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{embed, Embedder, IdentityGallery};
use crate::error::{Error, Result};
use crate::renderer::FaceSample;

/// Fraction of `scores` at or above `threshold`.
pub fn false_accept_rate(scores: &[f64], threshold: f64) -> f64 {
    scores.iter().filter(|s| **s >= threshold).count() as f64 / scores.len() as f64
}

/// Lowest threshold whose false-accept rate on `impostor_scores` is at
/// most `far_target`.
///
/// Candidates are the distinct observed scores in ascending order. When
/// even the largest score is accepted too often, the result is the next
/// representable value above it, which accepts nothing.
pub fn threshold_for_far(impostor_scores: &[f64], far_target: f64) -> Result<f64> {
    if impostor_scores.is_empty() {
        return Err(Error::EmptyProbeSet);
    }
    if !(far_target > 0.0 && far_target < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "far_target must lie in (0, 1), got {far_target}"
        )));
    }
    if impostor_scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidConfig("impostor scores must be finite".into()));
    }
    let mut sorted = impostor_scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut i = 0;
    while i < n {
        // sorted[i..] are the scores accepted at threshold sorted[i]
        if (n - i) as f64 / n as f64 <= far_target {
            return Ok(sorted[i]);
        }
        let v = sorted[i];
        while i < n && sorted[i] == v {
            i += 1;
        }
    }
    Ok(sorted[n - 1].next_up())
}

/// Scores of every probe against every gallery identity other than its own.
pub fn impostor_scores(
    model: &dyn Embedder,
    gallery: &IdentityGallery,
    probes: &[FaceSample],
) -> Result<Vec<f64>> {
    let per_probe = probes
        .par_iter()
        .map(|p| {
            let e = embed(model, &p.image)?;
            gallery
                .identities()
                .filter(|id| *id != p.identity)
                .map(|id| gallery.score(&e, id))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_probe.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub model: String,
    pub threshold: f64,
    pub far_target: f64,
    /// False-accept rate achieved on the impostor set.
    pub far: f64,
    pub impostor_pairs: usize,
}

/// Threshold at `far_target` over all (gallery identity, probe of another
/// identity) pairs.
pub fn calibrate_threshold(
    model: &dyn Embedder,
    gallery: &IdentityGallery,
    impostor_probes: &[FaceSample],
    far_target: f64,
) -> Result<Calibration> {
    let scores = impostor_scores(model, gallery, impostor_probes)?;
    let threshold = threshold_for_far(&scores, far_target)?;
    Ok(Calibration {
        model: model.info().name.clone(),
        threshold,
        far_target,
        far: false_accept_rate(&scores, threshold),
        impostor_pairs: scores.len(),
    })
}

use std::time::Instant;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::loss::{draw_params, restrict_to_support, total_loss_with_grad, LossBreakdown, Member};
use crate::error::{Error, Result};
use crate::renderer::{AugmentationConfig, MaskTexture, PreparedFace};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMode {
    Universal,
    Targeted,
}

/// Early stop when the best batch similarity loss improves by less than
/// `min_delta` over `window` iterations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauConfig {
    pub window: usize,
    pub min_delta: f64,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        PlateauConfig {
            window: 50,
            min_delta: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub lambda_tv: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_iterations: usize,
    pub seed: u64,
    /// Model names in ensemble order.
    pub ensemble: Vec<String>,
    pub mode: AttackMode,
    pub plateau: Option<PlateauConfig>,
    pub augmentation: AugmentationConfig,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            lambda_tv: 0.1,
            learning_rate: 1e-2,
            batch_size: 32,
            max_iterations: 1000,
            seed: 0,
            ensemble: Vec::new(),
            mode: AttackMode::Universal,
            plateau: None,
            augmentation: AugmentationConfig::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.lambda_tv >= 0.0 && self.lambda_tv.is_finite()) {
            return bad("lambda_tv must be a finite value >= 0");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be > 0");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.ensemble.is_empty() {
            return bad("ensemble must name at least one model");
        }
        if let Some(p) = self.plateau {
            if p.window == 0 || p.min_delta.is_nan() || p.min_delta < 0.0 {
                return bad("plateau window must be positive and min_delta >= 0");
            }
        }
        self.augmentation.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub iteration: usize,
    pub sim_loss: f64,
    pub tv_loss: f64,
    pub total_loss: f64,
    /// Wall time since the start of the run.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingHistory {
    pub records: Vec<HistoryRecord>,
    pub final_mask: MaskTexture,
    pub config: OptimizerConfig,
}

impl TrainingHistory {
    /// Checks `total = sim + λ·tv` for every record.
    pub fn is_consistent(&self) -> bool {
        self.records.iter().all(|r| {
            (r.total_loss - (r.sim_loss + self.config.lambda_tv * r.tv_loss)).abs() <= 1e-9
        })
    }

    /// Records with the wall-time column dropped.
    pub fn losses(&self) -> Vec<(usize, f64, f64, f64)> {
        self.records
            .iter()
            .map(|r| (r.iteration, r.sim_loss, r.tv_loss, r.total_loss))
            .collect()
    }

    pub fn first(&self) -> Option<&HistoryRecord> {
        self.records.first()
    }

    pub fn last(&self) -> Option<&HistoryRecord> {
        self.records.last()
    }
}

fn check_members(members: &[Member<'_>], config: &OptimizerConfig) -> Result<()> {
    let names: Vec<&str> = members.iter().map(|m| m.model.info().name.as_str()).collect();
    if names != config.ensemble.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(Error::InvalidConfig(format!(
            "ensemble {:?} does not match the supplied models {:?}",
            config.ensemble, names
        )));
    }
    Ok(())
}

fn plateaued(sims: &[f64], p: PlateauConfig) -> bool {
    let n = sims.len();
    if n <= p.window {
        return false;
    }
    let best = |s: &[f64]| s.iter().copied().fold(f64::INFINITY, f64::min);
    best(&sims[..n - p.window]) - best(&sims[n - p.window..]) < p.min_delta
}

/// Adam on the normalized ensemble objective.
///
/// Each iteration draws a batch without replacement from the `sampling`
/// stream and one augmentation per batch face from the `render` stream,
/// takes one step restricted to the mask support, and clamps pixels to
/// `[0, 1]`. The record for iteration `t` holds the losses of the mask
/// before step `t`.
pub fn optimize_universal(
    initial: &MaskTexture,
    dataset: &[PreparedFace],
    members: &[Member<'_>],
    config: &OptimizerConfig,
) -> Result<(MaskTexture, TrainingHistory)> {
    config.validate()?;
    check_members(members, config)?;
    if dataset.is_empty() {
        return Err(Error::InvalidConfig("training set is empty".into()));
    }
    for m in members {
        for f in dataset {
            m.gallery.require(f.identity())?;
        }
    }

    let mut sampling = rng::substream(config.seed, "sampling");
    let mut render = rng::substream(config.seed, "render");
    let mut mask = initial.clone();
    let mut adam = Adam::new(config.learning_rate, mask.pixels().dim());
    let mut records = Vec::with_capacity(config.max_iterations);
    let mut sims = Vec::with_capacity(config.max_iterations);
    let start = Instant::now();
    let batch = config.batch_size.min(dataset.len());

    for iteration in 0..config.max_iterations {
        let picks = index::sample(&mut sampling, dataset.len(), batch);
        let faces: Vec<PreparedFace> = picks.iter().map(|i| dataset[i].clone()).collect();
        let params = draw_params(faces.len(), &mut render, &config.augmentation)?;
        let (loss, mut grad) = total_loss_with_grad(&mask, &faces, members, config.lambda_tv, &params)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss {
                iteration,
                sim_loss: loss.sim,
                tv_loss: loss.tv,
            });
        }
        record(&mut records, iteration, loss, &start);
        log::debug!("iter {iteration}: sim {:.5} tv {:.5}", loss.sim, loss.tv);
        sims.push(loss.sim);

        restrict_to_support(&mut grad, &mask);
        mask.update(|p| adam.step(p, &grad));

        if config.plateau.is_some_and(|p| plateaued(&sims, p)) {
            log::info!("plateau reached after {} iterations", iteration + 1);
            break;
        }
    }

    let history = TrainingHistory {
        records,
        final_mask: mask.clone(),
        config: config.clone(),
    };
    Ok((mask, history))
}

fn record(records: &mut Vec<HistoryRecord>, iteration: usize, loss: LossBreakdown, start: &Instant) {
    records.push(HistoryRecord {
        iteration,
        sim_loss: loss.sim,
        tv_loss: loss.tv,
        total_loss: loss.total,
        seconds: start.elapsed().as_secs_f64(),
    });
}

/// [`optimize_universal`] restricted to the images of one person.
pub fn optimize_targeted(
    initial: &MaskTexture,
    images: &[PreparedFace],
    members: &[Member<'_>],
    config: &OptimizerConfig,
) -> Result<(MaskTexture, TrainingHistory)> {
    if let Some(first) = images.first() {
        if let Some(other) = images.iter().find(|f| f.identity() != first.identity()) {
            return Err(Error::MixedIdentities(
                first.identity().to_string(),
                other.identity().to_string(),
            ));
        }
    }
    optimize_universal(initial, images, members, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_detection() {
        let p = PlateauConfig {
            window: 3,
            min_delta: 0.01,
        };
        assert!(!plateaued(&[1.0, 0.9, 0.8], p));
        assert!(!plateaued(&[1.0, 0.9, 0.8, 0.7], p));
        assert!(plateaued(&[0.5, 0.6, 0.55, 0.51], p));
        assert!(plateaued(&[0.5, 0.6, 0.55, 0.495], p));
        assert!(!plateaued(&[0.5, 0.6, 0.55, 0.48], p));
    }

    #[test]
    fn config_validation() {
        let mut c = OptimizerConfig {
            ensemble: vec!["m".into()],
            ..Default::default()
        };
        assert!(c.validate().is_ok());
        c.lambda_tv = -0.1;
        assert!(c.validate().is_err());
        c.lambda_tv = 0.0;
        c.learning_rate = 0.0;
        assert!(c.validate().is_err());
        c.learning_rate = 0.01;
        c.ensemble.clear();
        assert!(c.validate().is_err());
    }
}

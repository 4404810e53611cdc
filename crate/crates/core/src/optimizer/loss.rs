use ndarray::{Array3, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{cosine_to_unit_with_grad, embed, embed_with_pullback, Embedder, IdentityGallery};
use crate::error::{Error, Result};
use crate::renderer::{
    render_traced, render_with_params, sample_augmentation, AugmentationConfig, AugmentationParams,
    MaskTexture, PreparedFace,
};
use crate::rng::Rng;

/// One model of the attacked ensemble with the gallery it is scored against.
#[derive(Clone, Copy)]
pub struct Member<'a> {
    pub model: &'a dyn Embedder,
    pub gallery: &'a IdentityGallery,
}

impl<'a> Member<'a> {
    pub fn new(model: &'a dyn Embedder, gallery: &'a IdentityGallery) -> Self {
        Member { model, gallery }
    }
}

/// Loss values for one evaluation of the objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Normalized ensemble similarity, in `[0, 1]`.
    pub sim: f64,
    /// Normalized total variation, in `[0, 1]`.
    pub tv: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(sim: f64, tv: f64, lambda_tv: f64) -> Self {
        LossBreakdown {
            sim,
            tv,
            total: sim + lambda_tv * tv,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.sim.is_finite() && self.tv.is_finite() && self.total.is_finite()
    }
}

/// One augmentation draw per face, in list order.
pub fn draw_params(count: usize, rng: &mut Rng, config: &AugmentationConfig) -> Result<Vec<AugmentationParams>> {
    (0..count).map(|_| sample_augmentation(rng, config)).collect()
}

fn check_inputs(faces: &[PreparedFace], members: &[Member<'_>], params: &[AugmentationParams]) -> Result<()> {
    if faces.is_empty() {
        return Err(Error::InvalidConfig("loss needs at least one face".into()));
    }
    if members.is_empty() {
        return Err(Error::InvalidConfig("ensemble is empty".into()));
    }
    if params.len() != faces.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} augmentation draws", faces.len()),
            found: format!("{}", params.len()),
        });
    }
    for m in members {
        for f in faces {
            m.gallery.require(f.identity())?;
        }
    }
    Ok(())
}

/// Cosine of every masked face against its own gallery entry.
pub fn probe_cosines(
    mask: &MaskTexture,
    faces: &[PreparedFace],
    model: &dyn Embedder,
    gallery: &IdentityGallery,
    params: &[AugmentationParams],
) -> Result<Vec<f64>> {
    check_inputs(faces, &[Member::new(model, gallery)], params)?;
    let images = render_with_params(mask, faces, params)?;
    images
        .par_iter()
        .zip(faces)
        .map(|(img, f)| {
            let e = embed(model, img)?;
            gallery.score(&e, f.identity())
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Batch mean cosine between masked probes and their gallery entries.
pub fn loss_sim_raw(
    mask: &MaskTexture,
    faces: &[PreparedFace],
    model: &dyn Embedder,
    gallery: &IdentityGallery,
    rng: &mut Rng,
    config: &AugmentationConfig,
) -> Result<f64> {
    let params = draw_params(faces.len(), rng, config)?;
    Ok(mean(&probe_cosines(mask, faces, model, gallery, &params)?))
}

/// Mean over models of the batch mean of `(cos + 1) / 2`. Each face gets a
/// single augmentation draw shared by all models.
pub fn loss_sim_normalized(
    mask: &MaskTexture,
    faces: &[PreparedFace],
    members: &[Member<'_>],
    rng: &mut Rng,
    config: &AugmentationConfig,
) -> Result<f64> {
    let params = draw_params(faces.len(), rng, config)?;
    sim_normalized_with_params(mask, faces, members, &params)
}

pub fn sim_normalized_with_params(
    mask: &MaskTexture,
    faces: &[PreparedFace],
    members: &[Member<'_>],
    params: &[AugmentationParams],
) -> Result<f64> {
    check_inputs(faces, members, params)?;
    let images = render_with_params(mask, faces, params)?;
    let per_face = images
        .par_iter()
        .zip(faces)
        .map(|(img, f)| {
            members
                .iter()
                .map(|m| {
                    let e = embed(m.model, img)?;
                    Ok((m.gallery.score(&e, f.identity())? + 1.0) / 2.0)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let per_model: Vec<f64> = (0..members.len())
        .map(|j| mean(&per_face.iter().map(|s| s[j]).collect::<Vec<_>>()))
        .collect();
    Ok(mean(&per_model))
}

/// Raw total variation: for every pixel and channel,
/// `sqrt(dr² + dc²)` with `dr`, `dc` the differences to the next row and
/// column; a missing neighbour contributes a zero difference.
pub fn loss_tv(pixels: &Array3<f64>) -> f64 {
    let (h, w, c) = pixels.dim();
    let mut sum = 0.0;
    for i in 0..h {
        for k in 0..w {
            for ch in 0..c {
                let p = pixels[[i, k, ch]];
                let dr = if i + 1 < h { p - pixels[[i + 1, k, ch]] } else { 0.0 };
                let dc = if k + 1 < w { p - pixels[[i, k + 1, ch]] } else { 0.0 };
                sum += (dr * dr + dc * dc).sqrt();
            }
        }
    }
    sum
}

fn tv_scale(pixels: &Array3<f64>) -> f64 {
    let (h, w, c) = pixels.dim();
    (h * w * c) as f64 * std::f64::consts::SQRT_2
}

/// Total variation scaled into `[0, 1]` for pixels in `[0, 1]`.
pub fn loss_tv_normalized(pixels: &Array3<f64>) -> f64 {
    if pixels.is_empty() {
        return 0.0;
    }
    loss_tv(pixels) / tv_scale(pixels)
}

/// Gradient of [`loss_tv_normalized`]; terms with zero magnitude contribute
/// nothing.
pub fn tv_gradient_normalized(pixels: &Array3<f64>) -> Array3<f64> {
    let (h, w, c) = pixels.dim();
    let mut g = Array3::zeros((h, w, c));
    if pixels.is_empty() {
        return g;
    }
    let scale = tv_scale(pixels);
    for i in 0..h {
        for k in 0..w {
            for ch in 0..c {
                let p = pixels[[i, k, ch]];
                let dr = if i + 1 < h { p - pixels[[i + 1, k, ch]] } else { 0.0 };
                let dc = if k + 1 < w { p - pixels[[i, k + 1, ch]] } else { 0.0 };
                let t = (dr * dr + dc * dc).sqrt();
                if t == 0.0 {
                    continue;
                }
                g[[i, k, ch]] += (dr + dc) / t / scale;
                if i + 1 < h {
                    g[[i + 1, k, ch]] -= dr / t / scale;
                }
                if k + 1 < w {
                    g[[i, k + 1, ch]] -= dc / t / scale;
                }
            }
        }
    }
    g
}

/// Normalized ensemble similarity plus `lambda_tv` times normalized TV.
pub fn total_loss(
    mask: &MaskTexture,
    faces: &[PreparedFace],
    members: &[Member<'_>],
    lambda_tv: f64,
    rng: &mut Rng,
    config: &AugmentationConfig,
) -> Result<LossBreakdown> {
    let sim = loss_sim_normalized(mask, faces, members, rng, config)?;
    Ok(LossBreakdown::new(sim, loss_tv_normalized(mask.pixels()), lambda_tv))
}

/// Objective and its gradient w.r.t. the mask pixels for fixed
/// augmentation draws.
pub fn total_loss_with_grad(
    mask: &MaskTexture,
    faces: &[PreparedFace],
    members: &[Member<'_>],
    lambda_tv: f64,
    params: &[AugmentationParams],
) -> Result<(LossBreakdown, Array3<f64>)> {
    check_inputs(faces, members, params)?;
    let weight = 1.0 / (2.0 * (members.len() * faces.len()) as f64);
    let dim = mask.pixels().dim();
    let per_face = faces
        .par_iter()
        .zip(params)
        .enumerate()
        .map(|(idx, (f, p))| {
            let (img, jac) = render_traced(mask, f, p).map_err(|e| Error::at(idx, e))?;
            let mut sims = Vec::with_capacity(members.len());
            let mut grad_img = Array3::zeros(img.dim());
            for m in members {
                let unit = m.gallery.require(f.identity())?;
                let (e, pullback) = embed_with_pullback(m.model, &img)?;
                let (cos, d_cos) = cosine_to_unit_with_grad(&e, unit)?;
                sims.push((cos + 1.0) / 2.0);
                let seed: Vec<f64> = d_cos.iter().map(|g| g * weight).collect();
                grad_img += &pullback(&seed);
            }
            let mut grad = Array3::zeros(dim);
            jac.accumulate(&grad_img, &mut grad);
            Ok((sims, grad))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut grad = tv_gradient_normalized(mask.pixels()) * lambda_tv;
    for (_, g) in &per_face {
        grad += g;
    }
    let per_model: Vec<f64> = (0..members.len())
        .map(|j| mean(&per_face.iter().map(|(s, _)| s[j]).collect::<Vec<_>>()))
        .collect();
    let loss = LossBreakdown::new(mean(&per_model), loss_tv_normalized(mask.pixels()), lambda_tv);
    Ok((loss, grad))
}

/// Zeroes gradient entries outside the mask support.
pub(crate) fn restrict_to_support(grad: &mut Array3<f64>, mask: &MaskTexture) {
    for (mut row, srow) in grad.axis_iter_mut(Axis(0)).zip(mask.support().rows()) {
        for (mut px, s) in row.axis_iter_mut(Axis(0)).zip(srow) {
            if !*s {
                px.fill(0.0);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    #[test]
    fn tv_of_small_patch() {
        let p = Array3::from_shape_vec((2, 2, 1), vec![0.0, 0.2, 0.4, 0.8]).unwrap();
        let expected = 0.2f64.sqrt() + 0.6 + 0.4;
        assert!((loss_tv(&p) - expected).abs() < 1e-12);
        assert!((loss_tv(&p) - 1.4472).abs() < 1e-4);
    }

    #[test]
    fn tv_gradient_matches_finite_differences() {
        let p = Array3::from_shape_fn((4, 5, 3), |(i, k, c)| ((i * 7 + k * 3 + c * 5) % 11) as f64 / 10.0);
        let g = tv_gradient_normalized(&p);
        let h = 1e-6;
        for idx in [(0, 0, 0), (1, 2, 1), (3, 4, 2), (2, 0, 1)] {
            let mut a = p.clone();
            a[idx] += h;
            let mut b = p.clone();
            b[idx] -= h;
            let fd = (loss_tv_normalized(&a) - loss_tv_normalized(&b)) / (2.0 * h);
            assert!((fd - g[idx]).abs() < 1e-6, "{idx:?}: {fd} vs {}", g[idx]);
        }
    }

    #[test]
    fn breakdown_arithmetic() {
        let l = LossBreakdown::new(0.5, 0.2, 0.1);
        assert!((l.total - 0.52).abs() < 1e-12);
        assert_eq!(LossBreakdown::new(0.5, 0.2, 0.0).total, 0.5);
    }
}

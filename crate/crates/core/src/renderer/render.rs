use std::path::PathBuf;
use std::sync::Arc;

use ndarray::{Array2, Array3};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::augment::{sample_augmentation, AugmentationConfig, AugmentationParams};
use super::head::{Point, CHIN, LEFT_CHEEK, NOSE_BRIDGE, RIGHT_CHEEK};
use super::landmarks::{detect_landmarks, LandmarkBackend};
use super::texture::MaskTexture;
use super::uv::{ReconstructionBackend, UvCorrespondence};
use crate::error::{Error, Result};
use crate::imaging::{bilinear_taps, check_face_shape, in_bounds, sample_rgb, Image};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
}

/// An aligned 112×112 face with its landmarks and identity label.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceSample {
    /// Unique key of this image (file stem, synthetic id, ...).
    pub key: String,
    pub identity: String,
    pub image: Image,
    pub landmarks: Vec<Point>,
    pub gender: Option<Gender>,
    /// File the image was read from, if any.
    pub source: Option<PathBuf>,
}

impl FaceSample {
    pub fn new(
        key: impl Into<String>,
        identity: impl Into<String>,
        image: Image,
        landmarks: Vec<Point>,
    ) -> Result<Self> {
        check_face_shape(&image)?;
        if landmarks.iter().any(|p| !super::landmarks::inside(p, &image)) {
            return Err(Error::InvalidConfig("landmark outside image bounds".into()));
        }
        Ok(FaceSample {
            key: key.into(),
            identity: identity.into(),
            image,
            landmarks,
            gender: None,
            source: None,
        })
    }

    /// Runs the landmark detector on `image`.
    pub fn detect(
        key: impl Into<String>,
        identity: impl Into<String>,
        image: Image,
        backend: &dyn LandmarkBackend,
    ) -> Result<Self> {
        let landmarks = detect_landmarks(&image, backend)?;
        Self::new(key, identity, image, landmarks)
    }
}

/// Axis-aligned rectangle in UV space that the mask texture is stretched
/// over: columns between the cheek landmarks, rows from the nose bridge to
/// the chin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskPlacement {
    pub u0: f64,
    pub u1: f64,
    pub v0: f64,
    pub v1: f64,
}

impl MaskPlacement {
    pub fn from_landmarks(landmarks: &[Point], uv: &UvCorrespondence) -> Result<Self> {
        let anchor = |i: usize| -> Result<[f64; 2]> {
            let p = landmarks.get(i).ok_or_else(|| {
                Error::ReconstructionFailed(format!("landmark {i} missing for mask anchoring"))
            })?;
            uv.image_point_to_uv(*p).ok_or_else(|| {
                Error::ReconstructionFailed(format!("mask anchor landmark {i} is not visible"))
            })
        };
        let (l, r) = (anchor(LEFT_CHEEK)?, anchor(RIGHT_CHEEK)?);
        let (top, bottom) = (anchor(NOSE_BRIDGE)?, anchor(CHIN)?);
        let p = MaskPlacement {
            u0: l[0],
            u1: r[0],
            v0: top[1],
            v1: bottom[1],
        };
        if p.u1 - p.u0 < 1.0 || p.v1 - p.v0 < 1.0 {
            return Err(Error::ReconstructionFailed("degenerate mask anchor quad".into()));
        }
        Ok(p)
    }

    pub fn center(&self) -> [f64; 2] {
        [(self.u0 + self.u1) / 2.0, (self.v0 + self.v1) / 2.0]
    }

    /// UV position of texture coordinate `(row, col)` for an `h × w` texture.
    pub fn texel_to_uv(&self, row: f64, col: f64, h: usize, w: usize) -> [f64; 2] {
        let fc = if w > 1 { col / (w - 1) as f64 } else { 0.5 };
        let fr = if h > 1 { row / (h - 1) as f64 } else { 0.5 };
        [
            self.u0 + fc * (self.u1 - self.u0),
            self.v0 + fr * (self.v1 - self.v0),
        ]
    }

    /// Texture coordinate `(row, col)` of a UV position.
    pub fn uv_to_texel(&self, uv: [f64; 2], h: usize, w: usize) -> (f64, f64) {
        (
            (uv[1] - self.v0) / (self.v1 - self.v0) * (h.max(2) - 1) as f64,
            (uv[0] - self.u0) / (self.u1 - self.u0) * (w.max(2) - 1) as f64,
        )
    }
}

/// A face with its reconstruction, ready for repeated rendering.
#[derive(Debug, Clone)]
pub struct PreparedFace {
    pub sample: FaceSample,
    pub uv: Arc<UvCorrespondence>,
    pub placement: MaskPlacement,
}

impl PreparedFace {
    pub fn prepare(sample: FaceSample, backend: &dyn ReconstructionBackend) -> Result<Self> {
        let uv = reconstruct_uv(&sample.image, &sample.landmarks, backend)?;
        let placement = MaskPlacement::from_landmarks(&sample.landmarks, &uv)?;
        Ok(PreparedFace {
            sample,
            uv: Arc::new(uv),
            placement,
        })
    }

    pub fn identity(&self) -> &str {
        &self.sample.identity
    }

    pub fn key(&self) -> &str {
        &self.sample.key
    }

    pub fn image(&self) -> &Image {
        &self.sample.image
    }
}

pub fn reconstruct_uv(
    image: &Image,
    landmarks: &[Point],
    backend: &dyn ReconstructionBackend,
) -> Result<UvCorrespondence> {
    check_face_shape(image)?;
    let uv = backend.reconstruct(image, landmarks)?;
    if uv.image_dim() != (image.dim().0, image.dim().1) {
        return Err(Error::ReconstructionFailed(
            "correspondence does not match the image size".into(),
        ));
    }
    Ok(uv)
}

#[derive(Debug, Clone, PartialEq)]
struct CoveredPixel {
    row: usize,
    col: usize,
    /// `(texel row, texel col, weight)`; weights sum to one.
    taps: Vec<(usize, usize, f64)>,
    gain: f64,
    active: [bool; 3],
}

/// Sparse Jacobian of a rendered image w.r.t. the mask pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderJacobian {
    mask_dim: (usize, usize),
    covered: Vec<CoveredPixel>,
}

impl RenderJacobian {
    /// Gradient w.r.t. the mask pixels of `<grad_image, render(mask)>`.
    pub fn pullback(&self, grad_image: &Image) -> Array3<f64> {
        let mut g = Array3::zeros((self.mask_dim.0, self.mask_dim.1, 3));
        self.accumulate(grad_image, &mut g);
        g
    }

    pub fn accumulate(&self, grad_image: &Image, grad_mask: &mut Array3<f64>) {
        for px in &self.covered {
            for ch in 0..3 {
                if !px.active[ch] {
                    continue;
                }
                let go = grad_image[[px.row, px.col, ch]] * px.gain;
                if go == 0.0 {
                    continue;
                }
                for &(tr, tc, w) in &px.taps {
                    grad_mask[[tr, tc, ch]] += go * w;
                }
            }
        }
    }

    /// Image pixels overwritten by the mask.
    pub fn projected_support(&self, dim: (usize, usize)) -> Array2<bool> {
        let mut s = Array2::from_elem(dim, false);
        for px in &self.covered {
            s[[px.row, px.col]] = true;
        }
        s
    }
}

fn noise_field(params: &AugmentationParams, dim: (usize, usize)) -> Option<Array3<f64>> {
    if params.noise_sigma <= 0.0 {
        return None;
    }
    let mut r = rng::seeded(params.noise_seed);
    Some(Array3::from_shape_fn((dim.0, dim.1, 3), |_| {
        let z: f64 = StandardNormal.sample(&mut r);
        params.noise_sigma * z
    }))
}

/// Projects `mask` onto `face` and records the Jacobian.
///
/// For each visible image pixel the UV position is pulled back through the
/// inverse geometric augmentation into texture coordinates; the texture is
/// sampled bilinearly over its support. Pixels where the interpolated
/// support reaches one half are overwritten with
/// `clamp(contrast·colour + brightness + noise)`; all others keep the face
/// pixel bit for bit.
pub fn render_traced(
    mask: &MaskTexture,
    face: &PreparedFace,
    params: &AugmentationParams,
) -> Result<(Image, RenderJacobian)> {
    let image = face.image();
    check_face_shape(image)?;
    let (h, w, _) = image.dim();
    let (mh, mw) = (mask.height(), mask.width());
    if !mask.support().iter().any(|s| *s) {
        return Ok((
            image.clone(),
            RenderJacobian {
                mask_dim: (mh, mw),
                covered: Vec::new(),
            },
        ));
    }
    let pixels = mask.pixels();
    let support = mask.support();
    let placement = &face.placement;
    let [uc, vc] = placement.center();
    let (s, c) = params.rotation_deg.to_radians().sin_cos();
    let noise = noise_field(params, (h, w));

    let mut out = image.clone();
    let mut covered = Vec::new();
    for row in 0..h {
        for col in 0..w {
            let Some([u, v]) = face.uv.image_to_uv(row, col) else {
                continue;
            };
            let du = u - uc - params.translation[0];
            let dv = v - vc - params.translation[1];
            let src = [uc + c * du + s * dv, vc - s * du + c * dv];
            let (tr, tc) = placement.uv_to_texel(src, mh, mw);
            let mut coverage = 0.0;
            let mut taps = Vec::with_capacity(4);
            for (r0, c0, wgt) in bilinear_taps(tr, tc) {
                if wgt > 0.0 && in_bounds(r0, c0, mh, mw) && support[[r0 as usize, c0 as usize]] {
                    coverage += wgt;
                    taps.push((r0 as usize, c0 as usize, wgt));
                }
            }
            if coverage < 0.5 {
                continue;
            }
            for t in &mut taps {
                t.2 /= coverage;
            }
            let mut active = [false; 3];
            for ch in 0..3 {
                let colour: f64 = taps.iter().map(|&(r0, c0, wt)| wt * pixels[[r0, c0, ch]]).sum();
                let n = noise.as_ref().map_or(0.0, |nf| nf[[row, col, ch]]);
                let v = params.contrast * colour + params.brightness + n;
                active[ch] = v > 0.0 && v < 1.0;
                out[[row, col, ch]] = v.clamp(0.0, 1.0);
            }
            covered.push(CoveredPixel {
                row,
                col,
                taps,
                gain: params.contrast,
                active,
            });
        }
    }
    if covered.is_empty() {
        return Err(Error::OutOfFrame);
    }
    Ok((
        out,
        RenderJacobian {
            mask_dim: (mh, mw),
            covered,
        },
    ))
}

/// Masked face image for one set of augmentation parameters.
///
/// An all-zero support leaves the face untouched.
pub fn render(mask: &MaskTexture, face: &PreparedFace, params: &AugmentationParams) -> Result<Image> {
    render_traced(mask, face, params).map(|(img, _)| img)
}

/// Renders every face, drawing parameters sequentially from `rng` in list
/// order.
pub fn render_batch(
    mask: &MaskTexture,
    faces: &[PreparedFace],
    rng: &mut Rng,
    config: &AugmentationConfig,
) -> Result<Vec<Image>> {
    if faces.is_empty() {
        return Err(Error::InvalidConfig("render_batch needs at least one face".into()));
    }
    let params = faces
        .iter()
        .map(|_| sample_augmentation(rng, config))
        .collect::<Result<Vec<_>>>()?;
    render_with_params(mask, faces, &params)
}

/// Renders every face with parameters drawn from a stream keyed by the
/// face key, so outputs do not depend on list order.
pub fn render_batch_keyed(
    mask: &MaskTexture,
    faces: &[PreparedFace],
    seed: u64,
    config: &AugmentationConfig,
) -> Result<Vec<Image>> {
    if faces.is_empty() {
        return Err(Error::InvalidConfig("render_batch needs at least one face".into()));
    }
    let params = faces
        .iter()
        .map(|f| sample_augmentation(&mut rng::substream(seed, f.key()), config))
        .collect::<Result<Vec<_>>>()?;
    render_with_params(mask, faces, &params)
}

pub fn render_with_params(
    mask: &MaskTexture,
    faces: &[PreparedFace],
    params: &[AugmentationParams],
) -> Result<Vec<Image>> {
    faces
        .par_iter()
        .zip(params)
        .enumerate()
        .map(|(i, (f, p))| render(mask, f, p).map_err(|e| Error::at(i, e)))
        .collect()
}

/// Lifts the lower-face region of `face` into an `h × w` texture over
/// `support` (the inverse of projection with identity augmentation).
pub fn extract_texture(face: &PreparedFace, support: &Array2<bool>) -> Result<MaskTexture> {
    let (h, w) = support.dim();
    let mut pixels = Array3::zeros((h, w, 3));
    let mut found = Array2::from_elem((h, w), false);
    let mut sum = [0.0; 3];
    let mut n = 0usize;
    for r in 0..h {
        for c in 0..w {
            let [u, v] = face.placement.texel_to_uv(r as f64, c as f64, h, w);
            let Some(p) = face.uv.uv_to_image(u, v) else {
                continue;
            };
            if let Some(rgb) = sample_rgb(face.image(), p.y, p.x) {
                for k in 0..3 {
                    pixels[[r, c, k]] = rgb[k];
                    sum[k] += rgb[k];
                }
                found[[r, c]] = true;
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::ReconstructionFailed("no face texels under the mask region".into()));
    }
    let mean = sum.map(|s| s / n as f64);
    for ((r, c), ok) in found.indexed_iter() {
        if !ok {
            for k in 0..3 {
                pixels[[r, c, k]] = mean[k];
            }
        }
    }
    MaskTexture::new(pixels, support.clone())
}

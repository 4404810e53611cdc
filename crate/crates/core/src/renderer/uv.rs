//! Dense image ↔ UV correspondences and the reconstruction backends that
//! produce them.

use std::path::Path;

use ndarray::{Array2, Array3};

use super::head::{
    surface_of_uv, uv_of_surface, HeadGeometry, Point, MIN_VISIBLE_DEPTH, UV_SIZE,
};
use crate::embedding::network::Network;
use crate::error::{Error, Result};
use crate::imaging::{bilinear_taps, in_bounds, Image};

/// Per-pixel correspondence between a face image and the UV raster.
///
/// `face_to_uv[[row, col]]` holds the UV `(col, row)` seen at an image pixel,
/// `uv_to_face[[r, c]]` the image `(x, y)` of a UV texel. A pixel is valid
/// when it is visible and both maps can be interpolated around it. The maps
/// are constants with respect to the mask; gradients only flow through the
/// bilinear weights applied when sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct UvCorrespondence {
    face_to_uv: Array3<f64>,
    valid_mask: Array2<bool>,
    uv_to_face: Array3<f64>,
    uv_valid: Array2<bool>,
}

impl UvCorrespondence {
    /// Assembles a correspondence from raw maps. Pixels whose UV position
    /// cannot be mapped back to within one pixel are marked invalid.
    pub fn from_maps(
        face_to_uv: Array3<f64>,
        face_valid: Array2<bool>,
        uv_to_face: Array3<f64>,
        uv_valid: Array2<bool>,
    ) -> Result<Self> {
        let (h, w, _) = face_to_uv.dim();
        let mut corr = UvCorrespondence {
            face_to_uv,
            valid_mask: face_valid,
            uv_to_face,
            uv_valid,
        };
        let mut valid = Array2::from_elem((h, w), false);
        let (uh, uw, _) = corr.uv_to_face.dim();
        for r in 0..h {
            for c in 0..w {
                if !corr.valid_mask[[r, c]] {
                    continue;
                }
                let (u, v) = (corr.face_to_uv[[r, c, 0]], corr.face_to_uv[[r, c, 1]]);
                if !(0.0..=(uw - 1) as f64).contains(&u) || !(0.0..=(uh - 1) as f64).contains(&v)
                {
                    continue;
                }
                if let Some(p) = corr.uv_to_image(u, v) {
                    if (p.x - c as f64).hypot(p.y - r as f64) <= 1.0 {
                        valid[[r, c]] = true;
                    }
                }
            }
        }
        corr.valid_mask = valid;
        if !corr.valid_mask.iter().any(|v| *v) {
            return Err(Error::ReconstructionFailed("no visible face region".into()));
        }
        Ok(corr)
    }

    pub fn image_dim(&self) -> (usize, usize) {
        self.valid_mask.dim()
    }

    pub fn valid_mask(&self) -> &Array2<bool> {
        &self.valid_mask
    }

    pub fn uv_valid(&self) -> &Array2<bool> {
        &self.uv_valid
    }

    pub fn visible_count(&self) -> usize {
        self.valid_mask.iter().filter(|v| **v).count()
    }

    /// UV `(col, row)` at a valid image pixel.
    pub fn image_to_uv(&self, row: usize, col: usize) -> Option<[f64; 2]> {
        self.valid_mask
            .get([row, col])
            .copied()
            .filter(|v| *v)
            .map(|_| [self.face_to_uv[[row, col, 0]], self.face_to_uv[[row, col, 1]]])
    }

    /// UV position at a continuous image point, bilinear over valid pixels.
    pub fn image_point_to_uv(&self, p: Point) -> Option<[f64; 2]> {
        let (h, w) = self.valid_mask.dim();
        let mut out = [0.0; 2];
        for (r, c, wgt) in bilinear_taps(p.y, p.x) {
            if wgt == 0.0 {
                continue;
            }
            if !in_bounds(r, c, h, w) || !self.valid_mask[[r as usize, c as usize]] {
                return None;
            }
            out[0] += wgt * self.face_to_uv[[r as usize, c as usize, 0]];
            out[1] += wgt * self.face_to_uv[[r as usize, c as usize, 1]];
        }
        Some(out)
    }

    /// Image point of a continuous UV position, bilinear over valid texels.
    pub fn uv_to_image(&self, u: f64, v: f64) -> Option<Point> {
        let (h, w) = self.uv_valid.dim();
        let (mut x, mut y) = (0.0, 0.0);
        for (r, c, wgt) in bilinear_taps(v, u) {
            if wgt == 0.0 {
                continue;
            }
            if !in_bounds(r, c, h, w) || !self.uv_valid[[r as usize, c as usize]] {
                return None;
            }
            x += wgt * self.uv_to_face[[r as usize, c as usize, 0]];
            y += wgt * self.uv_to_face[[r as usize, c as usize, 1]];
        }
        Some(Point::new(x, y))
    }
}

/// Produces a [`UvCorrespondence`] for a face image.
pub trait ReconstructionBackend: Send + Sync {
    fn name(&self) -> &str;

    fn reconstruct(&self, image: &Image, landmarks: &[Point]) -> Result<UvCorrespondence>;
}

/// Closed-form correspondence from the parametric ellipsoid head fitted to
/// the canonical landmarks.
#[derive(Debug, Clone, Copy, Default)]
pub struct EllipsoidBackend;

impl EllipsoidBackend {
    pub fn correspondence(geometry: &HeadGeometry, dim: (usize, usize)) -> Result<UvCorrespondence> {
        let (h, w) = dim;
        let last = (UV_SIZE - 1) as f64;
        let mut face_to_uv = Array3::zeros((h, w, 2));
        let mut face_valid = Array2::from_elem((h, w), false);
        for r in 0..h {
            for c in 0..w {
                if let Some((az, v, z)) = geometry.unproject(Point::new(c as f64, r as f64)) {
                    let (u, uv_row) = uv_of_surface(az, v);
                    if z > MIN_VISIBLE_DEPTH && (0.0..=last).contains(&u) {
                        face_to_uv[[r, c, 0]] = u;
                        face_to_uv[[r, c, 1]] = uv_row;
                        face_valid[[r, c]] = true;
                    }
                }
            }
        }
        let mut uv_to_face = Array3::zeros((UV_SIZE, UV_SIZE, 2));
        let mut uv_valid = Array2::from_elem((UV_SIZE, UV_SIZE), false);
        for r in 0..UV_SIZE {
            for c in 0..UV_SIZE {
                let (az, v) = surface_of_uv(c as f64, r as f64);
                let (p, z) = geometry.project(az, v);
                uv_to_face[[r, c, 0]] = p.x;
                uv_to_face[[r, c, 1]] = p.y;
                uv_valid[[r, c]] = z > MIN_VISIBLE_DEPTH
                    && (0.0..=(w - 1) as f64).contains(&p.x)
                    && (0.0..=(h - 1) as f64).contains(&p.y);
            }
        }
        UvCorrespondence::from_maps(face_to_uv, face_valid, uv_to_face, uv_valid)
    }
}

impl ReconstructionBackend for EllipsoidBackend {
    fn name(&self) -> &str {
        "ellipsoid"
    }

    fn reconstruct(&self, image: &Image, landmarks: &[Point]) -> Result<UvCorrespondence> {
        let geometry = HeadGeometry::fit(landmarks).ok_or_else(|| {
            Error::ReconstructionFailed("landmarks do not determine a head ellipsoid".into())
        })?;
        let (h, w, _) = image.dim();
        Self::correspondence(&geometry, (h, w))
    }
}

/// Correspondence from a UV position-map regressor.
///
/// The network maps a face image to a `grid × grid × 3` position map (image
/// `x`, image `y`, depth towards the camera), row-major over UV rows and
/// columns. The map is upsampled to the UV raster and inverted by
/// rasterizing its triangles with a depth buffer.
pub struct PositionMapBackend {
    network: Network,
    grid: usize,
}

impl PositionMapBackend {
    pub fn new(network: Network) -> Result<Self> {
        let n = network.output_dim();
        let grid = ((n / 3) as f64).sqrt().round() as usize;
        if grid < 2 || grid * grid * 3 != n {
            return Err(Error::InvalidConfig(format!(
                "position-map network output of size {n} is not grid*grid*3"
            )));
        }
        Ok(PositionMapBackend { network, grid })
    }

    /// Loads the regressor weights; missing weights make the backend
    /// unavailable.
    pub fn load(path: &Path) -> Result<Self> {
        match Network::load(path) {
            Ok(net) => Self::new(net),
            Err(Error::AssetMissing(p)) => Err(Error::BackendUnavailable(format!(
                "position-map weights not found at {}",
                p.display()
            ))),
            Err(e) => Err(e),
        }
    }

    fn upsample(&self, coarse: &[f64]) -> Array3<f64> {
        let g = self.grid;
        let scale = (g - 1) as f64 / (UV_SIZE - 1) as f64;
        Array3::from_shape_fn((UV_SIZE, UV_SIZE, 3), |(r, c, k)| {
            let (gr, gc) = (r as f64 * scale, c as f64 * scale);
            let mut acc = 0.0;
            for (tr, tc, wgt) in bilinear_taps(gr, gc) {
                if wgt == 0.0 {
                    continue;
                }
                let (tr, tc) = ((tr as usize).min(g - 1), (tc as usize).min(g - 1));
                acc += wgt * coarse[(tr * g + tc) * 3 + k];
            }
            acc
        })
    }
}

impl ReconstructionBackend for PositionMapBackend {
    fn name(&self) -> &str {
        "position_map"
    }

    fn reconstruct(&self, image: &Image, _landmarks: &[Point]) -> Result<UvCorrespondence> {
        let coarse = self.network.forward(image)?;
        let pos = self.upsample(&coarse);
        let (h, w, _) = image.dim();
        invert_position_map(&pos, (h, w))
    }
}

/// Inverts a `UV × UV × 3` position map (x, y, depth) into a correspondence.
///
/// A UV cell's triangle is visible when it is front-facing and its area
/// magnification is at least `MIN_VISIBLE_DEPTH` of the largest one (for a
/// smooth surface under orthographic projection that ratio is the cosine to
/// the view direction).
pub fn invert_position_map(pos: &Array3<f64>, dim: (usize, usize)) -> Result<UvCorrespondence> {
    let (uh, uw, _) = pos.dim();
    let (h, w) = dim;
    let at = |r: usize, c: usize| [pos[[r, c, 0]], pos[[r, c, 1]], pos[[r, c, 2]]];
    // (uv corners, image-space signed doubled area)
    let mut tris: Vec<([(usize, usize); 3], f64)> = Vec::new();
    for r in 0..uh - 1 {
        for c in 0..uw - 1 {
            for corners in [
                [(r, c), (r, c + 1), (r + 1, c)],
                [(r, c + 1), (r + 1, c + 1), (r + 1, c)],
            ] {
                let [a, b, d] = corners.map(|(rr, cc)| at(rr, cc));
                let area = (b[0] - a[0]) * (d[1] - a[1]) - (b[1] - a[1]) * (d[0] - a[0]);
                tris.push((corners, area));
            }
        }
    }
    let max_area = tris.iter().map(|t| t.1).fold(0.0_f64, f64::max);
    if max_area <= 0.0 {
        return Err(Error::ReconstructionFailed("degenerate position map".into()));
    }
    let mut face_to_uv = Array3::zeros((h, w, 2));
    let mut face_valid = Array2::from_elem((h, w), false);
    let mut zbuf = Array2::from_elem((h, w), f64::NEG_INFINITY);
    let mut uv_valid = Array2::from_elem((uh, uw), false);
    for (corners, area) in &tris {
        if *area < MIN_VISIBLE_DEPTH * max_area {
            continue;
        }
        let verts = corners.map(|(rr, cc)| at(rr, cc));
        for (rr, cc) in corners {
            let p = at(*rr, *cc);
            if (0.0..=(w - 1) as f64).contains(&p[0]) && (0.0..=(h - 1) as f64).contains(&p[1]) {
                uv_valid[[*rr, *cc]] = true;
            }
        }
        let xmin = verts.iter().map(|v| v[0]).fold(f64::INFINITY, f64::min).ceil().max(0.0);
        let xmax = verts.iter().map(|v| v[0]).fold(f64::NEG_INFINITY, f64::max).floor();
        let ymin = verts.iter().map(|v| v[1]).fold(f64::INFINITY, f64::min).ceil().max(0.0);
        let ymax = verts.iter().map(|v| v[1]).fold(f64::NEG_INFINITY, f64::max).floor();
        if xmax < 0.0 || ymax < 0.0 {
            continue;
        }
        let (xmax, ymax) = (xmax.min((w - 1) as f64), ymax.min((h - 1) as f64));
        let [a, b, d] = verts;
        let mut y = ymin;
        while y <= ymax {
            let mut x = xmin;
            while x <= xmax {
                // barycentric weights of b and d
                let l1 = ((x - a[0]) * (d[1] - a[1]) - (y - a[1]) * (d[0] - a[0])) / area;
                let l2 = ((b[0] - a[0]) * (y - a[1]) - (b[1] - a[1]) * (x - a[0])) / area;
                let l0 = 1.0 - l1 - l2;
                const EPS: f64 = -1e-9;
                if l0 >= EPS && l1 >= EPS && l2 >= EPS {
                    let z = l0 * a[2] + l1 * b[2] + l2 * d[2];
                    let (pr, pc) = (y as usize, x as usize);
                    if z > zbuf[[pr, pc]] {
                        zbuf[[pr, pc]] = z;
                        let uvs = corners.map(|(rr, cc)| (cc as f64, rr as f64));
                        face_to_uv[[pr, pc, 0]] = l0 * uvs[0].0 + l1 * uvs[1].0 + l2 * uvs[2].0;
                        face_to_uv[[pr, pc, 1]] = l0 * uvs[0].1 + l1 * uvs[1].1 + l2 * uvs[2].1;
                        face_valid[[pr, pc]] = true;
                    }
                }
                x += 1.0;
            }
            y += 1.0;
        }
    }
    let uv_to_face = Array3::from_shape_fn((uh, uw, 2), |(r, c, k)| pos[[r, c, k]]);
    UvCorrespondence::from_maps(face_to_uv, face_valid, uv_to_face, uv_valid)
}

/// Position map of an ellipsoid head sampled on a `grid × grid` UV lattice,
/// in the layout expected by [`PositionMapBackend`].
pub fn ellipsoid_position_map(geometry: &HeadGeometry, grid: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid * grid * 3);
    let step = (UV_SIZE - 1) as f64 / (grid - 1) as f64;
    for r in 0..grid {
        for c in 0..grid {
            let (az, v) = surface_of_uv(c as f64 * step, r as f64 * step);
            let (p, z) = geometry.project(az, v);
            out.extend_from_slice(&[p.x, p.y, z]);
        }
    }
    out
}

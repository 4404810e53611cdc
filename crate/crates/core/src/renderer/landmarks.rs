use std::path::Path;

use super::head::{HeadGeometry, Point, LANDMARK_COUNT};
use crate::embedding::network::Network;
use crate::error::{Error, Result};
use crate::imaging::{check_face_shape, Image, FACE_SIZE};

/// Locates the canonical facial landmarks in a face image.
pub trait LandmarkBackend: Send + Sync {
    fn name(&self) -> &str;

    /// Number of points the backend returns.
    fn count(&self) -> usize;

    fn detect(&self, image: &Image) -> Result<Vec<Point>>;
}

/// Detects landmarks and checks the backend's output contract.
pub fn detect_landmarks(image: &Image, backend: &dyn LandmarkBackend) -> Result<Vec<Point>> {
    check_face_shape(image)?;
    let points = backend.detect(image)?;
    if points.len() != backend.count() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} landmarks", backend.count()),
            found: format!("{} landmarks", points.len()),
        });
    }
    if !points.iter().all(|p| inside(p, image)) {
        return Err(Error::NoFaceFound);
    }
    Ok(points)
}

pub(crate) fn inside(p: &Point, image: &Image) -> bool {
    let (h, w, _) = image.dim();
    p.x.is_finite()
        && p.y.is_finite()
        && (0.0..=(w - 1) as f64).contains(&p.x)
        && (0.0..=(h - 1) as f64).contains(&p.y)
}

/// Backdrop colour of synthetic face images.
pub const SYNTHETIC_BACKGROUND: [f64; 3] = [0.0, 1.0, 0.0];

/// Minimum foreground pixel count for a synthetic face to be found.
const MIN_FACE_PIXELS: usize = 400;

/// Landmark detector for synthetic faces on a uniform backdrop.
///
/// Fits the head ellipse from the foreground's first and second moments
/// (a filled ellipse with semi-axis `a` has variance `a²/4` along that axis),
/// snaps the centre and semi-axes to whole pixels as the synthetic generator
/// does, and projects the canonical landmark set of a frontal head.
#[derive(Debug, Clone, Copy, Default)]
pub struct SyntheticLandmarks;

impl SyntheticLandmarks {
    pub fn fit_geometry(image: &Image) -> Option<HeadGeometry> {
        let (h, w, _) = image.dim();
        let (mut n, mut sx, mut sy, mut sxx, mut syy) = (0usize, 0.0, 0.0, 0.0, 0.0);
        for r in 0..h {
            for c in 0..w {
                if is_foreground(image, r, c) {
                    let (x, y) = (c as f64, r as f64);
                    n += 1;
                    sx += x;
                    sy += y;
                    sxx += x * x;
                    syy += y * y;
                }
            }
        }
        if n < MIN_FACE_PIXELS {
            return None;
        }
        let nf = n as f64;
        let (mx, my) = (sx / nf, sy / nf);
        let (vx, vy) = (sxx / nf - mx * mx, syy / nf - my * my);
        Some(HeadGeometry {
            cx: mx.round(),
            cy: my.round(),
            a: (2.0 * vx.max(0.0).sqrt()).round(),
            b: (2.0 * vy.max(0.0).sqrt()).round(),
            yaw: 0.0,
        })
    }
}

pub(crate) fn is_foreground(image: &Image, r: usize, c: usize) -> bool {
    (0..3).any(|k| (image[[r, c, k]] - SYNTHETIC_BACKGROUND[k]).abs() > 0.02)
}

impl LandmarkBackend for SyntheticLandmarks {
    fn name(&self) -> &str {
        "synthetic"
    }

    fn count(&self) -> usize {
        LANDMARK_COUNT
    }

    fn detect(&self, image: &Image) -> Result<Vec<Point>> {
        let g = Self::fit_geometry(image).ok_or(Error::NoFaceFound)?;
        if g.a < 4.0 || g.b < 4.0 {
            return Err(Error::NoFaceFound);
        }
        Ok(g.landmarks())
    }
}

/// Landmark regressor loaded from an `.advw` weight file.
///
/// The network outputs `2·L` values, `(x, y)` per landmark, normalized to
/// `[0, 1]` over the image extent.
pub struct NetworkLandmarks {
    network: Network,
    count: usize,
}

impl NetworkLandmarks {
    pub fn new(network: Network) -> Result<Self> {
        if network.input_shape() != (FACE_SIZE, FACE_SIZE, 3) {
            return Err(Error::InvalidConfig(
                "landmark network must take 112x112x3 input".into(),
            ));
        }
        let n = network.output_dim();
        if n == 0 || !n.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "landmark network output size {n} is not 2 per point"
            )));
        }
        Ok(NetworkLandmarks {
            network,
            count: n / 2,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        match Network::load(path) {
            Ok(net) => Self::new(net),
            Err(Error::AssetMissing(p)) => Err(Error::BackendUnavailable(format!(
                "landmark detector weights not found at {}",
                p.display()
            ))),
            Err(e) => Err(e),
        }
    }
}

impl LandmarkBackend for NetworkLandmarks {
    fn name(&self) -> &str {
        self.network.name()
    }

    fn count(&self) -> usize {
        self.count
    }

    fn detect(&self, image: &Image) -> Result<Vec<Point>> {
        let out = self.network.forward(image)?;
        let (h, w, _) = image.dim();
        let points: Vec<Point> = out
            .chunks_exact(2)
            .map(|xy| Point::new(xy[0] * (w - 1) as f64, xy[1] * (h - 1) as f64))
            .collect();
        if points.iter().any(|p| !inside(p, image)) {
            return Err(Error::NoFaceFound);
        }
        Ok(points)
    }
}

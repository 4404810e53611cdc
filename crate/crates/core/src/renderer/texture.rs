use std::path::Path;

use ndarray::{Array2, Array3};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging;
use crate::rng::Rng;

pub const DEFAULT_HEIGHT: usize = 60;
pub const DEFAULT_WIDTH: usize = 112;

/// An occluder texture: RGB pixels in `[0, 1]` plus a fixed binary support
/// (`true` = fabric).
#[derive(Debug, Clone, PartialEq)]
pub struct MaskTexture {
    pixels: Array3<f64>,
    support: Array2<bool>,
}

/// Face-mask silhouette on an `height × width` grid: a band from a
/// nose-shaped upper edge down to a rounded chin.
pub fn default_support(height: usize, width: usize) -> Array2<bool> {
    Array2::from_shape_fn((height, width), |(r, c)| {
        let s = if width > 1 {
            2.0 * c as f64 / (width - 1) as f64 - 1.0
        } else {
            0.0
        };
        let t = if height > 1 {
            r as f64 / (height - 1) as f64
        } else {
            0.5
        };
        let top = 0.04 + 0.22 * s * s;
        let bottom = 1.0 - 0.42 * s.powi(4) - 0.08 * s * s;
        t >= top && t <= bottom
    })
}

impl MaskTexture {
    /// Builds a texture, clamping pixels into `[0, 1]`.
    pub fn new(mut pixels: Array3<f64>, support: Array2<bool>) -> Result<Self> {
        let (h, w, c) = pixels.dim();
        if c != 3 || support.dim() != (h, w) || h == 0 || w == 0 {
            return Err(Error::ShapeMismatch {
                expected: format!("{h}x{w}x3 texture with {h}x{w} support"),
                found: format!("{h}x{w}x{c} texture, {:?} support", support.dim()),
            });
        }
        if pixels.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("texture contains non-finite values".into()));
        }
        pixels.mapv_inplace(|v| v.clamp(0.0, 1.0));
        Ok(MaskTexture { pixels, support })
    }

    pub fn uniform(support: Array2<bool>, rgb: [f64; 3]) -> Self {
        let (h, w) = support.dim();
        MaskTexture::new(imaging::filled(h, w, rgb), support).expect("consistent shapes")
    }

    /// White texture over the default silhouette.
    pub fn white_default() -> Self {
        MaskTexture::uniform(
            default_support(DEFAULT_HEIGHT, DEFAULT_WIDTH),
            [1.0, 1.0, 1.0],
        )
    }

    /// Uniformly random pixel colours.
    pub fn random(support: Array2<bool>, rng: &mut Rng) -> Self {
        let (h, w) = support.dim();
        let pixels = Array3::from_shape_fn((h, w, 3), |_| rng.random::<f64>());
        MaskTexture::new(pixels, support).expect("consistent shapes")
    }

    pub fn height(&self) -> usize {
        self.pixels.dim().0
    }

    pub fn width(&self) -> usize {
        self.pixels.dim().1
    }

    pub fn pixels(&self) -> &Array3<f64> {
        &self.pixels
    }

    pub fn support(&self) -> &Array2<bool> {
        &self.support
    }

    /// Replaces the pixels (same shape), clamping into `[0, 1]`.
    pub fn set_pixels(&mut self, pixels: Array3<f64>) -> Result<()> {
        if pixels.dim() != self.pixels.dim() {
            return Err(Error::ShapeMismatch {
                expected: format!("{:?}", self.pixels.dim()),
                found: format!("{:?}", pixels.dim()),
            });
        }
        self.pixels = pixels;
        self.pixels.mapv_inplace(|v| v.clamp(0.0, 1.0));
        Ok(())
    }

    /// Applies `f` to the pixels and projects the result back into `[0, 1]`.
    pub fn update(&mut self, f: impl FnOnce(&mut Array3<f64>)) {
        f(&mut self.pixels);
        self.pixels
            .mapv_inplace(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) });
    }

    pub fn support_u8(&self) -> Array2<u8> {
        self.support.mapv(|s| if s { 255 } else { 0 })
    }

    /// Writes the texture as 8-bit RGB PNG and the support as 8-bit
    /// grayscale PNG (0/255).
    pub fn save(&self, texture_path: &Path, support_path: &Path) -> Result<()> {
        imaging::save_png(&self.pixels, texture_path)?;
        imaging::save_gray_png(&self.support_u8(), support_path)
    }

    pub fn load(texture_path: &Path, support_path: &Path) -> Result<Self> {
        let pixels = imaging::load_png(texture_path)?;
        let support = load_support(support_path)?;
        MaskTexture::new(pixels, support)
    }

    /// Texture from a PNG over an existing support (e.g. the default one).
    pub fn load_with_support(texture_path: &Path, support: Array2<bool>) -> Result<Self> {
        MaskTexture::new(imaging::load_png(texture_path)?, support)
    }
}

/// Loads a binary support template; any value ≥ 128 counts as fabric.
pub fn load_support(path: &Path) -> Result<Array2<bool>> {
    Ok(imaging::load_gray_png(path)?.mapv(|v| v >= 128))
}

/// Reference surgical-style masks used for gallery augmentation and as
/// controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StandardMask {
    Blue,
    Black,
    White,
}

impl StandardMask {
    pub const ALL: [StandardMask; 3] = [StandardMask::Blue, StandardMask::Black, StandardMask::White];

    pub fn color(self) -> [f64; 3] {
        match self {
            StandardMask::Blue => [0.30, 0.52, 0.71],
            StandardMask::Black => [0.05, 0.05, 0.05],
            StandardMask::White => [0.95, 0.95, 0.95],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StandardMask::Blue => "blue",
            StandardMask::Black => "black",
            StandardMask::White => "white",
        }
    }

    pub fn texture(self, support: &Array2<bool>) -> MaskTexture {
        MaskTexture::uniform(support.clone(), self.color())
    }
}

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Closed interval `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub min: f64,
    pub max: f64,
}

impl Interval {
    pub const fn new(min: f64, max: f64) -> Self {
        Interval { min, max }
    }

    pub const fn point(v: f64) -> Self {
        Interval { min: v, max: v }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.min <= v && v <= self.max
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite()) || self.min > self.max {
            return Err(Error::InvalidConfig(format!(
                "{name} range [{}, {}] is inverted or non-finite",
                self.min, self.max
            )));
        }
        Ok(())
    }

    // One uniform draw per call, even for a degenerate interval, so the
    // stream position never depends on the configured ranges.
    fn sample(&self, rng: &mut Rng) -> f64 {
        let u: f64 = rng.random();
        self.min + u * (self.max - self.min)
    }
}

/// Sampling ranges for the random mask transformations.
///
/// Translation is in UV texels along each axis; rotation in degrees about the
/// mask centre in UV space; contrast is a gain and brightness a bias applied
/// to the mask colour; noise is additive Gaussian with standard deviation
/// drawn from `noise_sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentationConfig {
    pub translation: Interval,
    pub rotation_deg: Interval,
    pub contrast: Interval,
    pub brightness: Interval,
    pub noise_sigma: Interval,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig {
            translation: Interval::new(-4.0, 4.0),
            rotation_deg: Interval::new(-8.0, 8.0),
            contrast: Interval::new(0.9, 1.1),
            brightness: Interval::new(-0.05, 0.05),
            noise_sigma: Interval::new(0.0, 0.02),
        }
    }
}

impl AugmentationConfig {
    /// All ranges collapsed onto the identity transformation.
    pub fn identity() -> Self {
        AugmentationConfig {
            translation: Interval::point(0.0),
            rotation_deg: Interval::point(0.0),
            contrast: Interval::point(1.0),
            brightness: Interval::point(0.0),
            noise_sigma: Interval::point(0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.translation.validate("translation")?;
        self.rotation_deg.validate("rotation")?;
        self.contrast.validate("contrast")?;
        self.brightness.validate("brightness")?;
        self.noise_sigma.validate("noise_sigma")?;
        if self.noise_sigma.min < 0.0 {
            return Err(Error::InvalidConfig("noise_sigma must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentationParams {
    /// `[du, dv]` in UV texels.
    pub translation: [f64; 2],
    pub rotation_deg: f64,
    pub contrast: f64,
    pub brightness: f64,
    pub noise_seed: u64,
    pub noise_sigma: f64,
}

impl AugmentationParams {
    pub fn identity() -> Self {
        AugmentationParams {
            translation: [0.0, 0.0],
            rotation_deg: 0.0,
            contrast: 1.0,
            brightness: 0.0,
            noise_seed: 0,
            noise_sigma: 0.0,
        }
    }

    pub fn is_geometric_identity(&self) -> bool {
        self.translation == [0.0, 0.0] && self.rotation_deg == 0.0
    }
}

/// Draws transformation parameters. Consumes a fixed number of values from
/// `rng` regardless of the configuration.
pub fn sample_augmentation(rng: &mut Rng, config: &AugmentationConfig) -> Result<AugmentationParams> {
    config.validate()?;
    let tu = config.translation.sample(rng);
    let tv = config.translation.sample(rng);
    let rotation_deg = config.rotation_deg.sample(rng);
    let contrast = config.contrast.sample(rng);
    let brightness = config.brightness.sample(rng);
    let noise_sigma = config.noise_sigma.sample(rng);
    let noise_seed: u64 = rng.random();
    Ok(AugmentationParams {
        translation: [tu, tv],
        rotation_deg,
        contrast,
        brightness,
        noise_seed,
        noise_sigma,
    })
}

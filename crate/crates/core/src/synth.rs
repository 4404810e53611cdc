//! Deterministic synthetic faces for desk-scale experiments.
//!
//! Each identity is a set of colours and facial marks drawn on an ellipsoid
//! head; each image jitters position, size, lighting and sensor noise. The
//! generator's head geometry uses whole-pixel centres and semi-axes, which
//! is what [`SyntheticLandmarks`](crate::renderer::SyntheticLandmarks)
//! recovers from the image.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::imaging::{filled, Image, FACE_SIZE};
use crate::renderer::{FaceSample, Gender, HeadGeometry, SYNTHETIC_BACKGROUND};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticIdentity {
    pub name: String,
    pub gender: Gender,
    skin: [f64; 3],
    hair: [f64; 3],
    iris: [f64; 3],
    lips: [f64; 3],
    beard: Option<[f64; 3]>,
    /// `(azimuth, height, radius, colour)` skin marks.
    marks: Vec<(f64, f64, f64, [f64; 3])>,
    /// Skin shading pattern `(freq_az, freq_v, phase, amplitude)`.
    pattern: (f64, f64, f64, f64),
}

fn colour(rng: &mut Rng, lo: f64, hi: f64) -> [f64; 3] {
    [
        rng.random_range(lo..hi),
        rng.random_range(lo..hi),
        rng.random_range(lo..hi),
    ]
}

impl SyntheticIdentity {
    pub fn generate(name: impl Into<String>, gender: Gender, seed: u64) -> Self {
        let name = name.into();
        let mut r = rng::substream(seed, &format!("identity/{name}"));
        let tone: f64 = r.random_range(0.25..0.9);
        let skin = [
            (tone + r.random_range(0.05..0.15_f64)).min(1.0),
            tone * r.random_range(0.7..0.85),
            tone * r.random_range(0.5..0.7),
        ];
        let hair = colour(&mut r, 0.02, 0.55);
        let iris = colour(&mut r, 0.05, 0.6);
        let lips = [
            r.random_range(0.45..0.85),
            r.random_range(0.1..0.35),
            r.random_range(0.15..0.4),
        ];
        let beard = (gender == Gender::Male && r.random_bool(0.5)).then(|| {
            let k = r.random_range(0.3..0.7);
            [hair[0] * k, hair[1] * k, hair[2] * k]
        });
        let marks = (0..r.random_range(2..5))
            .map(|_| {
                (
                    r.random_range(-1.0..1.0),
                    r.random_range(-0.5..0.8),
                    r.random_range(0.06..0.16),
                    colour(&mut r, 0.0, 1.0),
                )
            })
            .collect();
        let pattern = (
            r.random_range(2.0..9.0),
            r.random_range(2.0..9.0),
            r.random_range(0.0..std::f64::consts::TAU),
            r.random_range(0.03..0.12),
        );
        SyntheticIdentity {
            name,
            gender,
            skin,
            hair,
            iris,
            lips,
            beard,
            marks,
            pattern,
        }
    }

    /// Surface colour at `(azimuth, v)` before shading.
    fn albedo(&self, az: f64, v: f64) -> [f64; 3] {
        let ell = |du: f64, dv: f64, ru: f64, rv: f64| (du / ru).powi(2) + (dv / rv).powi(2) < 1.0;
        if v < -0.62 + 0.08 * (3.0 * az).sin() {
            return self.hair;
        }
        for side in [-1.0, 1.0] {
            let eu = az - side * 0.35;
            if (v + 0.44).abs() < 0.035 && eu.abs() < 0.2 {
                return self.hair.map(|c| c * 0.6);
            }
            if ell(eu, v + 0.30, 0.05, 0.045) {
                return self.iris;
            }
            if ell(eu, v + 0.30, 0.14, 0.06) {
                return [0.92, 0.92, 0.9];
            }
        }
        if ell(az, v - 0.38, 0.27, 0.05) {
            return self.lips;
        }
        if let Some(b) = self.beard {
            if v > 0.5 && az.abs() < 0.9 {
                return b;
            }
        }
        for (mu, mv, rad, c) in &self.marks {
            if ell(az - mu, v - mv, *rad, *rad) {
                return *c;
            }
        }
        let (fa, fv, ph, amp) = self.pattern;
        let p = amp * (fa * az + fv * v + ph).sin();
        let nose = if az.abs() < 0.06 && (-0.2..0.05).contains(&v) {
            0.85
        } else {
            1.0
        };
        self.skin.map(|c| (c + p) * nose)
    }

    /// Renders one image of this identity.
    pub fn render(&self, geometry: &HeadGeometry, light: [f64; 2], noise: f64, rng: &mut Rng) -> Image {
        let mut img = filled(FACE_SIZE, FACE_SIZE, SYNTHETIC_BACKGROUND);
        let gauss = Normal::new(0.0, noise.max(1e-12)).expect("finite");
        for r in 0..FACE_SIZE {
            for c in 0..FACE_SIZE {
                let p = crate::renderer::Point::new(c as f64, r as f64);
                let Some((az, v, z)) = geometry.unproject(p) else {
                    continue;
                };
                let shade = light[0] * (0.55 + 0.45 * z) + light[1] * az.sin() * 0.1;
                let base = self.albedo(az, v);
                for k in 0..3 {
                    let n = if noise > 0.0 { gauss.sample(rng) } else { 0.0 };
                    img[[r, c, k]] = (base[k] * shade + n).clamp(0.0, 1.0);
                }
                // keep face pixels distinguishable from the backdrop
                if img[[r, c, 0]] < 0.03 && img[[r, c, 1]] > 0.97 && img[[r, c, 2]] < 0.03 {
                    img[[r, c, 1]] = 0.9;
                }
            }
        }
        img
    }
}

/// Parameters of a synthetic face collection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub identities: usize,
    pub images_per_identity: usize,
    pub seed: u64,
    /// Sensor noise standard deviation.
    #[serde(default = "default_noise")]
    pub noise: f64,
}

fn default_noise() -> f64 {
    0.01
}

pub fn identity_name(index: usize) -> String {
    format!("id{index:04}")
}

/// Identity roster: alternating male and female.
pub fn identities(config: &SyntheticConfig) -> Vec<SyntheticIdentity> {
    (0..config.identities)
        .map(|i| {
            let g = if i % 2 == 0 { Gender::Male } else { Gender::Female };
            SyntheticIdentity::generate(identity_name(i), g, config.seed)
        })
        .collect()
}

/// Head pose jitter for one synthetic image.
pub fn image_geometry(rng: &mut Rng) -> HeadGeometry {
    HeadGeometry {
        cx: 56.0 + rng.random_range(-3..=3) as f64,
        cy: 58.0 + rng.random_range(-3..=3) as f64,
        a: 38.0 + rng.random_range(-2..=2) as f64,
        b: 47.0 + rng.random_range(-2..=2) as f64,
        yaw: 0.0,
    }
}

/// Image `index` of `identity`, with ground-truth landmarks.
pub fn face(identity: &SyntheticIdentity, index: usize, seed: u64, noise: f64) -> Result<FaceSample> {
    let key = format!("{}/{index:03}", identity.name);
    let mut r = rng::substream(seed, &format!("image/{key}"));
    let geometry = image_geometry(&mut r);
    let light = [r.random_range(0.85..1.1), r.random_range(-1.0..1.0)];
    let image = identity.render(&geometry, light, noise, &mut r);
    let mut s = FaceSample::new(key, identity.name.clone(), image, geometry.landmarks())?;
    s.gender = Some(identity.gender);
    Ok(s)
}

/// Faces for every identity, grouped by identity in roster order.
pub fn dataset(config: &SyntheticConfig) -> Result<Vec<FaceSample>> {
    dataset_range(config, 0, config.images_per_identity)
}

/// Images `start..start + count` of every identity; disjoint ranges give
/// disjoint image sets of the same people.
pub fn dataset_range(config: &SyntheticConfig, start: usize, count: usize) -> Result<Vec<FaceSample>> {
    let mut out = Vec::with_capacity(config.identities * count);
    for id in identities(config) {
        for i in start..start + count {
            out.push(face(&id, i, config.seed, config.noise)?);
        }
    }
    Ok(out)
}

/// An empty frame (backdrop only).
pub fn blank_frame() -> Image {
    filled(FACE_SIZE, FACE_SIZE, SYNTHETIC_BACKGROUND)
}

/// A face of a person outside any roster, used for face-texture control
/// masks.
pub fn control_face(gender: Gender, seed: u64) -> Result<FaceSample> {
    let name = match gender {
        Gender::Male => "control-male",
        Gender::Female => "control-female",
    };
    let id = SyntheticIdentity::generate(name, gender, seed);
    face(&id, 0, seed, 0.0)
}

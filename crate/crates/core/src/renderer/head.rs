//! Parametric ellipsoid head model.
//!
//! A head is the unit sphere scaled by `(a, b)` in image space, turned by
//! `yaw` about the vertical axis and projected orthographically. Surface
//! points are addressed by azimuth (radians, 0 = facing the camera when
//! `yaw = 0`) and height `v ∈ [-1, 1]` (positive towards the chin).
//!
//! UV space is a `UV_SIZE × UV_SIZE` raster: column from azimuth over
//! `[-UV_AZIMUTH_SPAN, UV_AZIMUTH_SPAN]`, row from height over `[-1, 1]`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

pub const UV_SIZE: usize = 128;
pub const UV_AZIMUTH_SPAN: f64 = 0.75 * PI;
/// Surface points with a smaller camera-facing depth are treated as
/// invisible (grazing angles give unstable correspondences).
pub const MIN_VISIBLE_DEPTH: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
}

/// Canonical landmark set: name, azimuth, height.
pub const LANDMARKS: [(&str, f64, f64); 11] = [
    ("left_eye", -0.35, -0.30),
    ("right_eye", 0.35, -0.30),
    ("nose_bridge", 0.0, -0.20),
    ("nose_tip", 0.0, 0.05),
    ("mouth_left", -0.25, 0.38),
    ("mouth_right", 0.25, 0.38),
    ("chin", 0.0, 0.85),
    ("left_cheek", -0.95, 0.15),
    ("right_cheek", 0.95, 0.15),
    ("left_jaw", -0.70, 0.62),
    ("right_jaw", 0.70, 0.62),
];

pub const LANDMARK_COUNT: usize = LANDMARKS.len();
pub const NOSE_BRIDGE: usize = 2;
pub const CHIN: usize = 6;
pub const LEFT_CHEEK: usize = 7;
pub const RIGHT_CHEEK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadGeometry {
    pub cx: f64,
    pub cy: f64,
    /// Horizontal semi-axis in pixels.
    pub a: f64,
    /// Vertical semi-axis in pixels.
    pub b: f64,
    pub yaw: f64,
}

impl HeadGeometry {
    /// Image position and camera-facing depth of a surface point.
    pub fn project(&self, azimuth: f64, v: f64) -> (Point, f64) {
        let rho = (1.0 - v * v).max(0.0).sqrt();
        let (sa, ca) = azimuth.sin_cos();
        let (sy, cy) = self.yaw.sin_cos();
        let (xh, zh) = (rho * sa, rho * ca);
        let x = xh * cy + zh * sy;
        let z = -xh * sy + zh * cy;
        (Point::new(self.cx + self.a * x, self.cy + self.b * v), z)
    }

    /// Front-surface point under an image position: `(azimuth, v, depth)`.
    pub fn unproject(&self, p: Point) -> Option<(f64, f64, f64)> {
        let x = (p.x - self.cx) / self.a;
        let v = (p.y - self.cy) / self.b;
        let r2 = x * x + v * v;
        if r2 >= 1.0 {
            return None;
        }
        let z = (1.0 - r2).sqrt();
        let (sy, cy) = self.yaw.sin_cos();
        let xh = x * cy - z * sy;
        let zh = x * sy + z * cy;
        Some((xh.atan2(zh), v, z))
    }

    pub fn landmarks(&self) -> Vec<Point> {
        LANDMARKS
            .iter()
            .map(|(_, az, v)| self.project(*az, *v).0)
            .collect()
    }

    /// Recovers the head geometry from the canonical landmark set by linear
    /// least squares. Exact for noise-free landmarks.
    ///
    /// Rows: `y_i = cy + b·v_i`; columns:
    /// `x_i = cx + (a cos yaw)·ρ_i sin az_i + (a sin yaw)·ρ_i cos az_i`.
    pub fn fit(landmarks: &[Point]) -> Option<HeadGeometry> {
        if landmarks.len() != LANDMARK_COUNT {
            return None;
        }
        // y = cy + b v
        let mut ata = [[0.0; 2]; 2];
        let mut aty = [0.0; 2];
        for (p, (_, _, v)) in landmarks.iter().zip(LANDMARKS) {
            let row = [1.0, v];
            for i in 0..2 {
                aty[i] += row[i] * p.y;
                for j in 0..2 {
                    ata[i][j] += row[i] * row[j];
                }
            }
        }
        let [cy, b] = solve2(ata, aty)?;
        let mut ata = [[0.0; 3]; 3];
        let mut atx = [0.0; 3];
        for (p, (_, az, v)) in landmarks.iter().zip(LANDMARKS) {
            let rho = (1.0 - v * v).sqrt();
            let row = [1.0, rho * az.sin(), rho * az.cos()];
            for i in 0..3 {
                atx[i] += row[i] * p.x;
                for j in 0..3 {
                    ata[i][j] += row[i] * row[j];
                }
            }
        }
        let [cx, ac, as_] = solve3(ata, atx)?;
        let a = ac.hypot(as_);
        let g = HeadGeometry {
            cx,
            cy,
            a,
            b,
            yaw: as_.atan2(ac),
        };
        (a > 1.0 && b > 1.0 && g.cx.is_finite() && g.cy.is_finite()).then_some(g)
    }
}

fn solve2(m: [[f64; 2]; 2], r: [f64; 2]) -> Option<[f64; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det.abs() < 1e-12 {
        return None;
    }
    Some([
        (r[0] * m[1][1] - m[0][1] * r[1]) / det,
        (m[0][0] * r[1] - r[0] * m[1][0]) / det,
    ])
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn solve3(m: [[f64; 3]; 3], r: [f64; 3]) -> Option<[f64; 3]> {
    let det = det3(&m);
    if det.abs() < 1e-12 {
        return None;
    }
    let mut out = [0.0; 3];
    for (k, o) in out.iter_mut().enumerate() {
        let mut mk = m;
        for i in 0..3 {
            mk[i][k] = r[i];
        }
        *o = det3(&mk) / det;
    }
    Some(out)
}

/// UV raster position `(col, row)` of a surface point.
pub fn uv_of_surface(azimuth: f64, v: f64) -> (f64, f64) {
    let last = (UV_SIZE - 1) as f64;
    (
        (azimuth + UV_AZIMUTH_SPAN) / (2.0 * UV_AZIMUTH_SPAN) * last,
        (v + 1.0) / 2.0 * last,
    )
}

/// Surface point `(azimuth, v)` of a UV raster position.
pub fn surface_of_uv(col: f64, row: f64) -> (f64, f64) {
    let last = (UV_SIZE - 1) as f64;
    (
        col / last * 2.0 * UV_AZIMUTH_SPAN - UV_AZIMUTH_SPAN,
        row / last * 2.0 - 1.0,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn project_unproject_round_trip() {
        let g = HeadGeometry {
            cx: 55.0,
            cy: 58.0,
            a: 38.0,
            b: 47.0,
            yaw: 0.2,
        };
        for (_, az, v) in LANDMARKS {
            let (p, z) = g.project(az, v);
            assert!(z > 0.0);
            let (az2, v2, z2) = g.unproject(p).unwrap();
            assert!((az - az2).abs() < 1e-12 && (v - v2).abs() < 1e-12 && (z - z2).abs() < 1e-12);
        }
    }

    #[test]
    fn fit_recovers_geometry() {
        let g = HeadGeometry {
            cx: 54.0,
            cy: 57.5,
            a: 39.0,
            b: 48.0,
            yaw: -0.15,
        };
        let f = HeadGeometry::fit(&g.landmarks()).unwrap();
        for (x, y) in [(f.cx, g.cx), (f.cy, g.cy), (f.a, g.a), (f.b, g.b), (f.yaw, g.yaw)] {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
        assert!(HeadGeometry::fit(&g.landmarks()[..3]).is_none());
        assert!(HeadGeometry::fit(&[Point::new(3.0, 3.0); LANDMARK_COUNT]).is_none());
    }

    #[test]
    fn uv_mapping_round_trip() {
        for (az, v) in [(0.0, 0.0), (-1.2, 0.7), (2.0, -0.9)] {
            let (c, r) = uv_of_surface(az, v);
            let (az2, v2) = surface_of_uv(c, r);
            assert!((az - az2).abs() < 1e-12 && (v - v2).abs() < 1e-12);
        }
    }
}

//! Label-free raster plots; the numbers behind them go to CSV.

use std::path::Path;

use image::{Rgb, RgbImage};

use super::similarity::{ConditionSummary, TransferMatrix};
use crate::error::{Error, Result};

const PALETTE: [[u8; 3]; 8] = [
    [86, 180, 233],
    [230, 159, 0],
    [0, 158, 115],
    [204, 121, 167],
    [213, 94, 0],
    [0, 114, 178],
    [240, 228, 66],
    [120, 120, 120],
];

const BOX_WIDTH: u32 = 40;
const GAP: u32 = 24;
const PLOT_HEIGHT: u32 = 320;
const MARGIN: u32 = 20;

fn fill(img: &mut RgbImage, x0: u32, y0: u32, x1: u32, y1: u32, c: [u8; 3]) {
    let (w, h) = img.dimensions();
    for y in y0.min(y1)..=y0.max(y1).min(h - 1) {
        for x in x0.min(x1)..=x0.max(x1).min(w - 1) {
            img.put_pixel(x, y, Rgb(c));
        }
    }
}

fn save(img: &RgbImage, path: &Path) -> Result<()> {
    img.save(path).map_err(|source| Error::Codec {
        path: path.to_path_buf(),
        source,
    })
}

/// One box per summary on a shared cosine axis `[-1, 1]`: box from the
/// first to the third quartile, black median bar, whiskers to the extremes.
/// Grey guide lines mark −1, 0 and 1.
pub fn box_plot(summaries: &[ConditionSummary], path: &Path) -> Result<()> {
    let n = summaries.len().max(1) as u32;
    let width = 2 * MARGIN + n * BOX_WIDTH + (n - 1) * GAP;
    let height = PLOT_HEIGHT + 2 * MARGIN;
    let mut img = RgbImage::from_pixel(width, height, Rgb([255, 255, 255]));
    let y_of = |v: f64| -> u32 {
        let t = (1.0 - v.clamp(-1.0, 1.0)) / 2.0;
        MARGIN + (t * (PLOT_HEIGHT - 1) as f64).round() as u32
    };
    for v in [-1.0, 0.0, 1.0] {
        fill(&mut img, 0, y_of(v), width - 1, y_of(v), [200, 200, 200]);
    }
    for (i, s) in summaries.iter().enumerate() {
        let x0 = MARGIN + i as u32 * (BOX_WIDTH + GAP);
        let x1 = x0 + BOX_WIDTH - 1;
        let xm = x0 + BOX_WIDTH / 2;
        fill(&mut img, xm, y_of(s.max), xm, y_of(s.min), [60, 60, 60]);
        fill(&mut img, x0 + 8, y_of(s.max), x1 - 8, y_of(s.max), [60, 60, 60]);
        fill(&mut img, x0 + 8, y_of(s.min), x1 - 8, y_of(s.min), [60, 60, 60]);
        fill(&mut img, x0, y_of(s.q3), x1, y_of(s.q1), PALETTE[i % PALETTE.len()]);
        fill(&mut img, x0, y_of(s.median), x1, y_of(s.median), [0, 0, 0]);
    }
    save(&img, path)
}

/// Diverging colour for a cosine: blue at −1, white at 0, red at 1.
fn diverging(v: f64) -> [u8; 3] {
    let v = v.clamp(-1.0, 1.0);
    let fade = |t: f64| (255.0 * (1.0 - t)).round() as u8;
    if v >= 0.0 {
        [255, fade(v), fade(v)]
    } else {
        [fade(-v), fade(-v), 255]
    }
}

/// One square per matrix cell, rows top to bottom, columns left to right.
pub fn heatmap(matrix: &TransferMatrix, path: &Path) -> Result<()> {
    const CELL: u32 = 32;
    let rows = matrix.rows.len().max(1) as u32;
    let cols = matrix.columns.len().max(1) as u32;
    let mut img = RgbImage::from_pixel(cols * CELL + 2 * 4, rows * CELL + 2 * 4, Rgb([255, 255, 255]));
    for (r, row) in matrix.values.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            let x0 = 4 + c as u32 * CELL;
            let y0 = 4 + r as u32 * CELL;
            fill(&mut img, x0 + 1, y0 + 1, x0 + CELL - 2, y0 + CELL - 2, diverging(*v));
        }
    }
    save(&img, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diverging_endpoints() {
        assert_eq!(diverging(1.0), [255, 0, 0]);
        assert_eq!(diverging(0.0), [255, 255, 255]);
        assert_eq!(diverging(-1.0), [0, 0, 255]);
    }

    #[test]
    fn plots_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let s = ConditionSummary {
            condition: "a".into(),
            model: "m".into(),
            count: 3,
            mean: 0.2,
            median: 0.2,
            q1: 0.1,
            q3: 0.3,
            min: -0.5,
            max: 0.9,
        };
        box_plot(&[s.clone(), s], &dir.path().join("b.png")).unwrap();
        let m = TransferMatrix {
            rows: vec!["x".into()],
            columns: vec!["y".into(), "z".into()],
            values: vec![vec![0.5, -0.5]],
        };
        heatmap(&m, &dir.path().join("h.png")).unwrap();
        let img = image::open(dir.path().join("h.png")).unwrap();
        assert_eq!(img.width(), 2 * 32 + 8);
    }
}

//! Image rasters and lossless PNG I/O.
//!
//! Images are `height × width × 3` arrays of `f64` in `[0, 1]`, indexed
//! `[row, col, channel]`. Pixel centres sit on integer coordinates.

use std::path::Path;

use image::{GrayImage, RgbImage};
use ndarray::{Array2, Array3};

use crate::error::{Error, Result};

/// Side length of every face image fed to an embedding model.
pub const FACE_SIZE: usize = 112;

pub type Image = Array3<f64>;

pub fn blank(height: usize, width: usize) -> Image {
    Array3::zeros((height, width, 3))
}

pub fn filled(height: usize, width: usize, rgb: [f64; 3]) -> Image {
    Array3::from_shape_fn((height, width, 3), |(_, _, c)| rgb[c])
}

pub fn check_face_shape(image: &Image) -> Result<()> {
    let (h, w, c) = image.dim();
    if (h, w, c) != (FACE_SIZE, FACE_SIZE, 3) {
        return Err(Error::ShapeMismatch {
            expected: format!("{FACE_SIZE}x{FACE_SIZE}x3"),
            found: format!("{h}x{w}x{c}"),
        });
    }
    Ok(())
}

/// Quantizes a unit-range value to 8 bits.
pub fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn to_rgb8(image: &Image) -> RgbImage {
    let (h, w, _) = image.dim();
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let (r, c) = (y as usize, x as usize);
        image::Rgb([
            to_u8(image[[r, c, 0]]),
            to_u8(image[[r, c, 1]]),
            to_u8(image[[r, c, 2]]),
        ])
    })
}

pub fn from_rgb8(rgb: &RgbImage) -> Image {
    let (w, h) = rgb.dimensions();
    Array3::from_shape_fn((h as usize, w as usize, 3), |(r, c, ch)| {
        f64::from(rgb.get_pixel(c as u32, r as u32)[ch]) / 255.0
    })
}

pub fn save_png(image: &Image, path: &Path) -> Result<()> {
    to_rgb8(image)
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| Error::Codec {
            path: path.to_path_buf(),
            source,
        })
}

pub fn load_png(path: &Path) -> Result<Image> {
    if !path.exists() {
        return Err(Error::AssetMissing(path.to_path_buf()));
    }
    let img = image::open(path).map_err(|source| Error::Codec {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(from_rgb8(&img.to_rgb8()))
}

/// Loads an image and resizes it to the face input size if needed.
pub fn load_face_png(path: &Path) -> Result<Image> {
    if !path.exists() {
        return Err(Error::AssetMissing(path.to_path_buf()));
    }
    let img = image::open(path).map_err(|source| Error::Codec {
        path: path.to_path_buf(),
        source,
    })?;
    let rgb = img.to_rgb8();
    let rgb = if rgb.dimensions() == (FACE_SIZE as u32, FACE_SIZE as u32) {
        rgb
    } else {
        image::imageops::resize(
            &rgb,
            FACE_SIZE as u32,
            FACE_SIZE as u32,
            image::imageops::FilterType::Triangle,
        )
    };
    Ok(from_rgb8(&rgb))
}

pub fn save_gray_png(mask: &Array2<u8>, path: &Path) -> Result<()> {
    let (h, w) = mask.dim();
    GrayImage::from_fn(w as u32, h as u32, |x, y| {
        image::Luma([mask[[y as usize, x as usize]]])
    })
    .save_with_format(path, image::ImageFormat::Png)
    .map_err(|source| Error::Codec {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_gray_png(path: &Path) -> Result<Array2<u8>> {
    if !path.exists() {
        return Err(Error::AssetMissing(path.to_path_buf()));
    }
    let img = image::open(path)
        .map_err(|source| Error::Codec {
            path: path.to_path_buf(),
            source,
        })?
        .to_luma8();
    let (w, h) = img.dimensions();
    Ok(Array2::from_shape_fn((h as usize, w as usize), |(r, c)| {
        img.get_pixel(c as u32, r as u32)[0]
    }))
}

/// Bilinear taps for a continuous position: `(row, col, weight)` for the
/// four surrounding integer positions. Taps may fall outside the raster;
/// callers decide how to treat them.
pub fn bilinear_taps(row: f64, col: f64) -> [(isize, isize, f64); 4] {
    let r0 = row.floor();
    let c0 = col.floor();
    let fr = row - r0;
    let fc = col - c0;
    let (r0, c0) = (r0 as isize, c0 as isize);
    [
        (r0, c0, (1.0 - fr) * (1.0 - fc)),
        (r0, c0 + 1, (1.0 - fr) * fc),
        (r0 + 1, c0, fr * (1.0 - fc)),
        (r0 + 1, c0 + 1, fr * fc),
    ]
}

pub(crate) fn in_bounds(r: isize, c: isize, h: usize, w: usize) -> bool {
    r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w
}

/// Bilinearly samples an RGB image; `None` when any tap with non-zero weight
/// lies outside the raster.
pub fn sample_rgb(image: &Image, row: f64, col: f64) -> Option<[f64; 3]> {
    let (h, w, _) = image.dim();
    let mut out = [0.0; 3];
    for (r, c, wgt) in bilinear_taps(row, col) {
        if wgt == 0.0 {
            continue;
        }
        if !in_bounds(r, c, h, w) {
            return None;
        }
        for (ch, o) in out.iter_mut().enumerate() {
            *o += wgt * image[[r as usize, c as usize, ch]];
        }
    }
    Some(out)
}

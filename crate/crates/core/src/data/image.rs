use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Samples `img` at continuous pixel coordinates (pixel centers at integer positions),
/// clamping to the border.
fn sample_bilinear(img: &RgbImage, x: f64, y: f64) -> [f64; 3] {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let px = |xx: usize, yy: usize, c: usize| img.get_pixel(xx as u32, yy as u32)[c] as f64;
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let top = px(x0, y0, c) * (1.0 - fx) + px(x1, y0, c) * fx;
        let bottom = px(x0, y1, c) * (1.0 - fx) + px(x1, y1, c) * fx;
        *o = top * (1.0 - fy) + bottom * fy;
    }
    out
}

/// Resamples the square region `(x, y, side)` of `img` to `size x size`, returning
/// channel values in `[0, 255]`. Output pixel centers map to input with half-pixel alignment.
pub fn resample_region(
    img: &RgbImage,
    x: f64,
    y: f64,
    width: f64,
    height: f64,
    size: usize,
) -> Vec<[f64; 3]> {
    let sx = width / size as f64;
    let sy = height / size as f64;
    let mut out = Vec::with_capacity(size * size);
    for oy in 0..size {
        for ox in 0..size {
            let src_x = x + (ox as f64 + 0.5) * sx - 0.5;
            let src_y = y + (oy as f64 + 0.5) * sy - 0.5;
            out.push(sample_bilinear(img, src_x, src_y));
        }
    }
    out
}

/// Converts an image to a `[3, size, size]` tensor in `[0, 1]`, resizing bilinearly.
pub fn image_to_tensor(img: &RgbImage, size: usize) -> Tensor {
    let plane = size * size;
    let mut data = vec![0.0; 3 * plane];
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == size && h == size {
        for (i, p) in img.pixels().enumerate() {
            for c in 0..3 {
                data[c * plane + i] = p[c] as f64 / 255.0;
            }
        }
    } else {
        let pixels = resample_region(img, 0.0, 0.0, w as f64, h as f64, size);
        for (i, p) in pixels.iter().enumerate() {
            for c in 0..3 {
                data[c * plane + i] = p[c] / 255.0;
            }
        }
    }
    Tensor {
        shape: vec![3, size, size],
        data,
    }
}

pub fn read_rgb(path: &Path) -> Result<RgbImage> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let img = image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(img.to_rgb8())
}

/// Loads a PNG or JPEG as a `[3, crop_size, crop_size]` tensor with values in `[0, 1]`.
pub fn load_image(path: &Path, crop_size: usize) -> Result<Tensor> {
    if crop_size == 0 {
        return Err(Error::Invalid("crop_size must be positive".into()));
    }
    Ok(image_to_tensor(&read_rgb(path)?, crop_size))
}

pub fn rgb_from_floats(size: usize, pixels: &[[f64; 3]]) -> RgbImage {
    RgbImage::from_fn(size as u32, size as u32, |x, y| {
        let p = pixels[y as usize * size + x as usize];
        Rgb(p.map(|v| v.round().clamp(0.0, 255.0) as u8))
    })
}

pub fn save_png(img: &RgbImage, path: &Path) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

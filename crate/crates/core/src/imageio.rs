//! Tensor <-> 8-bit RGB PNG conversion.

use std::path::Path;

use image::{ImageBuffer, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Clamps [0,1] channel values into 8-bit RGB.
pub fn tensor_to_rgb8(t: &Tensor) -> Result<RgbImage> {
    let (_, h, w, d) = t.dims4()?;
    if d != 3 {
        return Err(Error::Dimension(format!("expected 3 channels, got {d}")));
    }
    let data = t.data();
    let mut img = ImageBuffer::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let base = (y * w + x) * 3;
            let px = Rgb([
                (data[base].clamp(0.0, 1.0) * 255.0).round() as u8,
                (data[base + 1].clamp(0.0, 1.0) * 255.0).round() as u8,
                (data[base + 2].clamp(0.0, 1.0) * 255.0).round() as u8,
            ]);
            img.put_pixel(x as u32, y as u32, px);
        }
    }
    Ok(img)
}

pub fn rgb8_to_tensor(img: &RgbImage) -> Result<Tensor> {
    let (w, h) = img.dimensions();
    let mut data = Vec::with_capacity((w * h * 3) as usize);
    for y in 0..h {
        for x in 0..w {
            let px = img.get_pixel(x, y);
            for c in 0..3 {
                data.push(px.0[c] as f64 / 255.0);
            }
        }
    }
    Tensor::new(&[h as usize, w as usize, 3], data)
}

pub fn save_png(t: &Tensor, path: &Path) -> Result<()> {
    tensor_to_rgb8(t)?.save(path)?;
    Ok(())
}

pub fn load_png(path: &Path) -> Result<Tensor> {
    let img = image::open(path)?.to_rgb8();
    rgb8_to_tensor(&img)
}

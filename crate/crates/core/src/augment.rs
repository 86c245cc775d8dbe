//! Image augmentation: random cropping and horizontal mirroring.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn crop_at(image: &Tensor, oy: usize, ox: usize, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (_, h, w, d) = image.dims4()?;
    debug_assert!(oy + out_h <= h && ox + out_w <= w);
    let src = image.data();
    let mut data = Vec::with_capacity(out_h * out_w * d);
    for y in 0..out_h {
        let row = ((oy + y) * w + ox) * d;
        data.extend_from_slice(&src[row..row + out_w * d]);
    }
    Tensor::new(&[out_h, out_w, d], data)
}

/// Crops `out_size x out_size` at an offset drawn uniformly over all valid
/// positions. Equal sizes give the identity.
pub fn random_crop(image: &Tensor, out_size: usize, seed: u64) -> Result<Tensor> {
    let (_, h, w, _) = image.dims4()?;
    if out_size > h || out_size > w {
        return Err(Error::Geometry(format!(
            "crop {out_size} exceeds image {h}x{w}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let oy = rng.gen_range(0..=h - out_size);
    let ox = rng.gen_range(0..=w - out_size);
    crop_at(image, oy, ox, out_size, out_size)
}

/// Deterministic centered crop, used at evaluation time.
pub fn center_crop(image: &Tensor, out_size: usize) -> Result<Tensor> {
    let (_, h, w, _) = image.dims4()?;
    if out_size > h || out_size > w {
        return Err(Error::Geometry(format!(
            "crop {out_size} exceeds image {h}x{w}"
        )));
    }
    crop_at(image, (h - out_size) / 2, (w - out_size) / 2, out_size, out_size)
}

pub fn flip_horizontal(image: &Tensor) -> Result<Tensor> {
    let (_, h, w, d) = image.dims4()?;
    let src = image.data();
    let mut data = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            let a = (y * w + x) * d;
            let b = (y * w + (w - 1 - x)) * d;
            data[a..a + d].copy_from_slice(&src[b..b + d]);
        }
    }
    Tensor::new(&[h, w, d], data)
}

/// Flips horizontally with probability 1/2 under the given seed.
pub fn mirror(image: &Tensor, seed: u64) -> Result<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if rng.gen::<bool>() {
        flip_horizontal(image)
    } else {
        Ok(image.clone())
    }
}

/// Fraction of pixels a `out x out` crop discards from an `inp x inp` image.
pub fn crop_fraction_discarded(out: usize, inp: usize) -> f64 {
    let kept = (out * out) as f64 / (inp * inp) as f64;
    1.0 - kept
}

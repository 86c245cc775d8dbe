//! Synthetic object-classification dataset for pretraining: one colored
//! geometric shape (disk, triangle, or cross) centered on a procedural
//! terrain-textured background. Object-centric by construction, in contrast
//! to the bird's-eye tiles of the lights task.

use crate::error::Result;
use crate::seed::{derive_seed, splitmix64};
use crate::tensor::Tensor;
use crate::texture::{hash2, paint, unit};
use crate::train::BatchSource;

pub const SHAPE_CLASSES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Disk,
    Triangle,
    Cross,
}

impl Shape {
    fn from_class(class: usize) -> Shape {
        match class % SHAPE_CLASSES {
            0 => Shape::Disk,
            1 => Shape::Triangle,
            _ => Shape::Cross,
        }
    }
}

/// Lazily rendered shape dataset; classes rotate so the set is balanced.
pub struct ShapeSet {
    pub len: usize,
    pub img_px: usize,
    pub seed: u64,
    offset: usize,
}

impl ShapeSet {
    pub fn new(len: usize, img_px: usize, seed: u64) -> Self {
        ShapeSet { len, img_px, seed, offset: 0 }
    }

    /// A disjoint continuation of this set (same generator, shifted index
    /// range), used as the validation half.
    pub fn continuation(&self, len: usize) -> Self {
        ShapeSet { len, img_px: self.img_px, seed: self.seed, offset: self.offset + self.len }
    }
}

impl BatchSource for ShapeSet {
    fn len(&self) -> usize {
        self.len
    }
    fn label(&self, i: usize) -> usize {
        (self.offset + i) % SHAPE_CLASSES
    }
    fn image(&self, i: usize) -> Result<Tensor> {
        Ok(render_shape_image(self.seed, self.offset + i, self.img_px))
    }
}

fn inside(shape: Shape, dx: f64, dy: f64, r: f64) -> bool {
    match shape {
        Shape::Disk => dx * dx + dy * dy <= r * r,
        Shape::Triangle => {
            // upward triangle inscribed in the radius-r box
            dy <= r && dy >= -r && dx.abs() <= (dy + r) / 2.0
        }
        Shape::Cross => {
            let arm = r * 0.30;
            (dx.abs() <= arm && dy.abs() <= r) || (dy.abs() <= arm && dx.abs() <= r)
        }
    }
}

/// Deterministic image for `(seed, index)`: terrain background, one shape
/// whose color contrasts with the background.
pub fn render_shape_image(seed: u64, index: usize, img_px: usize) -> Tensor {
    let h = derive_seed(seed, &format!("shape{index}"));
    let class = index % SHAPE_CLASSES;
    let shape = Shape::from_class(class);

    let px = img_px as f64;
    // the center crop always contains the object: center near the middle,
    // radius bounded by a third of the frame; axis-aligned so the three
    // silhouettes stay well separated at coarse conv resolution
    let cx = px * (0.44 + unit(splitmix64(h ^ 1)) * 0.12);
    let cy = px * (0.44 + unit(splitmix64(h ^ 2)) * 0.12);
    let r = px * (0.17 + unit(splitmix64(h ^ 3)) * 0.11);

    let bg_kind = (splitmix64(h ^ 5) % 4) as u8;
    // background offset decorrelates textures across images
    let off_x = (splitmix64(h ^ 6) % 4096) as f64;
    let off_y = (splitmix64(h ^ 7) % 4096) as f64;

    let base_color = [
        unit(splitmix64(h ^ 8)),
        unit(splitmix64(h ^ 9)),
        unit(splitmix64(h ^ 10)),
    ];

    let mut data = Vec::with_capacity(img_px * img_px * 3);
    for y in 0..img_px {
        for x in 0..img_px {
            let gx = x as f64 + off_x;
            let gy = y as f64 + off_y;
            let bg = match bg_kind {
                0 => paint::water(seed, gx, gy),
                1 => paint::forest(seed, gx, gy),
                2 => paint::barren(seed, gx, gy),
                _ => paint::farmland(seed, gx, gy),
            };
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            let rgb = if inside(shape, dx, dy, r) {
                // force luminance contrast against the background
                let bg_lum = 0.299 * bg[0] + 0.587 * bg[1] + 0.114 * bg[2];
                let mut c = base_color;
                let lum = 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2];
                if (lum - bg_lum).abs() < 0.35 {
                    let push = if bg_lum < 0.5 { 0.55 } else { -0.55 };
                    for v in &mut c {
                        *v = (*v + push).clamp(0.0, 1.0);
                    }
                }
                c
            } else {
                bg
            };
            data.extend_from_slice(&rgb);
        }
    }
    Tensor::new(&[img_px, img_px, 3], data).expect("shape image dims")
}

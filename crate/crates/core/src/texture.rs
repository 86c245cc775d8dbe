//! Hash-based procedural textures shared by the world renderer and the
//! synthetic object (pretraining) dataset. Everything is a pure function of
//! (seed, coordinates), so tiles re-render identically.

use crate::seed::splitmix64;

pub fn hash2(seed: u64, x: i64, y: i64, tag: u64) -> u64 {
    let mut h = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    h = splitmix64(h ^ (x as u64).wrapping_mul(0x8531_4157_58ed_31d3));
    splitmix64(h ^ (y as u64).wrapping_mul(0xc2b2_ae3d_27d4_eb4f))
}

/// Uniform [0, 1) from a hash.
pub fn unit(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Bilinear value noise on a lattice of spacing `scale`, in [0, 1).
pub fn value_noise(seed: u64, tag: u64, x: f64, y: f64, scale: f64) -> f64 {
    let fx = x / scale;
    let fy = y / scale;
    let ix = fx.floor() as i64;
    let iy = fy.floor() as i64;
    let tx = smoothstep(fx - ix as f64);
    let ty = smoothstep(fy - iy as f64);
    let v00 = unit(hash2(seed, ix, iy, tag));
    let v10 = unit(hash2(seed, ix + 1, iy, tag));
    let v01 = unit(hash2(seed, ix, iy + 1, tag));
    let v11 = unit(hash2(seed, ix + 1, iy + 1, tag));
    let a = v00 + (v10 - v00) * tx;
    let b = v01 + (v11 - v01) * tx;
    a + (b - a) * ty
}

/// Two-octave value noise, still in [0, 1).
pub fn fractal_noise(seed: u64, tag: u64, x: f64, y: f64, scale: f64) -> f64 {
    let a = value_noise(seed, tag, x, y, scale);
    let b = value_noise(seed, tag ^ 0x51ff, x, y, scale / 3.0);
    (2.0 * a + b) / 3.0
}

pub fn clamp01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// RGB painters for the six terrain families. `px`/`py` are global pixel
/// coordinates so texture features continue across tile borders.
pub mod paint {
    use super::*;

    pub fn water(seed: u64, px: f64, py: f64) -> [f64; 3] {
        let wave = value_noise(seed, 11, px, py, 9.0) * 0.08;
        [0.08 + wave * 0.3, 0.28 + wave, 0.62 + wave]
    }

    pub fn forest(seed: u64, px: f64, py: f64) -> [f64; 3] {
        let clump = value_noise(seed, 23, px, py, 5.0);
        let fine = value_noise(seed, 29, px, py, 1.7) * 0.10;
        let g = 0.26 + clump * 0.14 + fine;
        [0.07 + fine * 0.5, g, 0.10 + fine * 0.4]
    }

    pub fn barren(seed: u64, px: f64, py: f64) -> [f64; 3] {
        let dust = fractal_noise(seed, 37, px, py, 13.0) * 0.12;
        [0.52 + dust, 0.43 + dust, 0.28 + dust * 0.7]
    }

    /// Farmland: plough rows, direction and phase varying per field patch.
    pub fn farmland(seed: u64, px: f64, py: f64) -> [f64; 3] {
        let patch = hash2(seed, (px / 48.0).floor() as i64, (py / 48.0).floor() as i64, 41);
        let angle = unit(patch) * std::f64::consts::PI;
        let period = 4.0 + unit(splitmix64(patch)) * 4.0;
        let along = px * angle.cos() + py * angle.sin();
        let stripe = ((along / period * std::f64::consts::TAU).sin() * 0.5 + 0.5) * 0.14;
        let moisture = value_noise(seed, 43, px, py, 21.0) * 0.08;
        [0.32 + stripe, 0.44 + stripe * 0.8 + moisture, 0.14 + moisture]
    }

    /// Urban: building blocks of varying gray separated by dark streets.
    pub fn urban(seed: u64, px: f64, py: f64) -> [f64; 3] {
        let block = 7.0;
        let bx = (px / block).floor() as i64;
        let by = (py / block).floor() as i64;
        let shade = 0.35 + unit(hash2(seed, bx, by, 53)) * 0.45;
        let in_street = (px - bx as f64 * block) < 1.4 || (py - by as f64 * block) < 1.4;
        if in_street {
            [0.16, 0.16, 0.17]
        } else {
            let roof = unit(hash2(seed, bx, by, 59));
            if roof > 0.82 {
                [shade + 0.1, shade * 0.55, shade * 0.45]
            } else {
                [shade, shade, shade + 0.02]
            }
        }
    }
}

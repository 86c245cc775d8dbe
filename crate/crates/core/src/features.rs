//! Group-level feature tables: CNN transfer features, nighttime-light
//! statistics, survey features, and a HOG+color baseline, assembled into
//! named blocks for the classifier comparison.

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::groups::{group_tiles, HouseholdGroup};
use crate::net::{extract_features_batch, Network};
use crate::tensor::Tensor;
use crate::world::World;

/// Histogram bin edges for light intensities (8 bins over [0, 64)).
pub const LIGHT_HIST_EDGES: [f64; 9] = [0.0, 1.0, 4.0, 8.0, 16.0, 24.0, 32.0, 48.0, 64.0];
/// [mean, max, min, std, median] + 8 histogram bins.
pub const LIGHTS_FEATURE_DIM: usize = 13;

/// Summary statistics + histogram of the group's cell intensities.
pub fn lights_features(world: &World, group: &HouseholdGroup) -> Result<Vec<f64>> {
    let cells = group_tiles(world, group)?;
    if cells.is_empty() {
        return Err(Error::Data(format!("group {} has no tiles", group.id)));
    }
    let mut values: Vec<f64> =
        cells.iter().map(|&(x, y)| world.intensity[world.idx(x, y)] as f64).collect();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let max = *values.last().unwrap();
    let min = values[0];
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let median = if values.len() % 2 == 1 {
        values[values.len() / 2]
    } else {
        (values[values.len() / 2 - 1] + values[values.len() / 2]) / 2.0
    };
    let mut out = vec![mean, max, min, std, median];
    for w in LIGHT_HIST_EDGES.windows(2) {
        let count = values.iter().filter(|&&v| v >= w[0] && v < w[1]).count();
        out.push(count as f64);
    }
    Ok(out)
}

/// Mean transfer feature vector over the group's tiles.
pub fn transfer_features(
    net: &Network,
    world: &World,
    group: &HouseholdGroup,
    tile_px: usize,
) -> Result<Vec<f64>> {
    let cells = group_tiles(world, group)?;
    let images: Vec<Tensor> = cells
        .iter()
        .map(|&(x, y)| world.render_tile(x, y, tile_px))
        .collect::<Result<_>>()?;
    mean_features(net, &images)
}

/// Mean of `extract_features` over a tile list.
pub fn mean_features(net: &Network, images: &[Tensor]) -> Result<Vec<f64>> {
    if images.is_empty() {
        return Err(Error::Data("empty tile list".into()));
    }
    let rows = extract_features_batch(net, images)?;
    let dim = rows[0].len();
    let mut mean = vec![0.0; dim];
    for row in &rows {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= rows.len() as f64;
    }
    Ok(mean)
}

/// 9-bin gradient-orientation histogram plus per-channel 8-bin color
/// histograms: the traditional-features sanity baseline.
pub fn hog_color_features(image: &Tensor) -> Result<Vec<f64>> {
    let (_, h, w, d) = image.dims4()?;
    if d != 3 {
        return Err(Error::Dimension("hog baseline expects RGB".into()));
    }
    let data = image.data();
    let gray = |y: usize, x: usize| {
        let b = (y * w + x) * 3;
        0.299 * data[b] + 0.587 * data[b + 1] + 0.114 * data[b + 2]
    };
    let mut hog = vec![0.0; 9];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let gx = gray(y, x + 1) - gray(y, x - 1);
            let gy = gray(y + 1, x) - gray(y - 1, x);
            let mag = (gx * gx + gy * gy).sqrt();
            // unsigned orientation in [0, pi)
            let mut angle = gy.atan2(gx);
            if angle < 0.0 {
                angle += std::f64::consts::PI;
            }
            let bin = ((angle / std::f64::consts::PI * 9.0) as usize).min(8);
            hog[bin] += mag;
        }
    }
    let total: f64 = hog.iter().sum::<f64>().max(1e-12);
    for v in &mut hog {
        *v /= total;
    }
    let mut out = hog;
    for c in 0..3 {
        let mut hist = vec![0.0; 8];
        for p in 0..h * w {
            let v = data[p * 3 + c].clamp(0.0, 1.0);
            let bin = ((v * 8.0) as usize).min(7);
            hist[bin] += 1.0;
        }
        for v in &mut hist {
            *v /= (h * w) as f64;
        }
        out.extend(hist);
    }
    Ok(out)
}

/// Rows are groups; columns come in named blocks; one binary label per row.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    pub group_ids: Vec<u64>,
    pub labels: Vec<u8>,
    block_order: Vec<String>,
    blocks: HashMap<String, (Vec<String>, Vec<Vec<f64>>)>,
}

impl FeatureTable {
    pub fn new(group_ids: Vec<u64>, labels: Vec<u8>) -> Result<Self> {
        if group_ids.len() != labels.len() {
            return Err(Error::Dimension("one label per group required".into()));
        }
        Ok(FeatureTable { group_ids, labels, block_order: Vec::new(), blocks: HashMap::new() })
    }

    pub fn n_rows(&self) -> usize {
        self.group_ids.len()
    }

    pub fn block_names(&self) -> &[String] {
        &self.block_order
    }

    pub fn add_block(&mut self, name: &str, columns: Vec<String>, rows: Vec<Vec<f64>>) -> Result<()> {
        if self.blocks.contains_key(name) {
            return Err(Error::InvalidArgument(format!("block {name:?} already exists")));
        }
        if rows.len() != self.n_rows() {
            return Err(Error::Dimension(format!(
                "block {name:?} has {} rows, table has {}",
                rows.len(),
                self.n_rows()
            )));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != columns.len() {
                return Err(Error::Dimension(format!(
                    "block {name:?} row {i} has {} values for {} columns",
                    row.len(),
                    columns.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("block {name:?} row {i} has non-finite values")));
            }
        }
        self.block_order.push(name.to_string());
        self.blocks.insert(name.to_string(), (columns, rows));
        Ok(())
    }

    pub fn block_width(&self, name: &str) -> Result<usize> {
        Ok(self.get(name)?.0.len())
    }

    fn get(&self, name: &str) -> Result<&(Vec<String>, Vec<Vec<f64>>)> {
        self.blocks
            .get(name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown block {name:?}")))
    }

    /// Column-wise concatenation of the named blocks, in the requested
    /// order. No standardization happens here; the evaluation harness fits
    /// standardization on its training folds only.
    pub fn concat_blocks(&self, names: &[&str]) -> Result<Vec<Vec<f64>>> {
        if names.is_empty() {
            return Err(Error::InvalidArgument("no blocks requested".into()));
        }
        let mut parts = Vec::with_capacity(names.len());
        for name in names {
            parts.push(&self.get(name)?.1);
        }
        let mut out = Vec::with_capacity(self.n_rows());
        for i in 0..self.n_rows() {
            let mut row = Vec::new();
            for part in &parts {
                row.extend_from_slice(&part[i]);
            }
            out.push(row);
        }
        Ok(out)
    }

    /// CSV export with block-prefixed column names.
    pub fn export_csv(&self, path: &Path) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path)?;
        let mut header = vec!["group_id".to_string(), "label".to_string()];
        for name in &self.block_order {
            let (cols, _) = &self.blocks[name];
            for c in cols {
                header.push(format!("{name}:{c}"));
            }
        }
        wtr.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut row = vec![self.group_ids[i].to_string(), self.labels[i].to_string()];
            for name in &self.block_order {
                let (_, rows) = &self.blocks[name];
                for v in &rows[i] {
                    row.push(format!("{v}"));
                }
            }
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Per-group mean of a per-image feature, parallel over groups.
pub fn group_image_features<F>(
    world: &World,
    groups: &[HouseholdGroup],
    tile_px: usize,
    per_group: F,
) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[Tensor]) -> Result<Vec<f64>> + Sync,
{
    groups
        .par_iter()
        .map(|g| {
            let cells = group_tiles(world, g)?;
            let images: Vec<Tensor> = cells
                .iter()
                .map(|&(x, y)| world.render_tile(x, y, tile_px))
                .collect::<Result<_>>()?;
            per_group(&images)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::Household;
    use crate::net::{build_minif, convolutionalize, extract_features};

    fn test_world() -> World {
        World::generate(3, 96).unwrap()
    }

    fn group_at(center: (usize, usize)) -> HouseholdGroup {
        HouseholdGroup {
            id: 1,
            center,
            households: vec![Household { id: 0, cell: center, poor: true }],
        }
    }

    #[test]
    fn lights_features_have_documented_shape() {
        let world = test_world();
        let g = group_at((48, 48));
        let f = lights_features(&world, &g).unwrap();
        assert_eq!(f.len(), LIGHTS_FEATURE_DIM);
        // histogram sums to the tile count
        let hist_sum: f64 = f[5..].iter().sum();
        assert_eq!(hist_sum, 100.0);
    }

    #[test]
    fn lights_features_hand_cases() {
        // all-intensity-zero block
        let mut world = test_world();
        world.intensity = vec![0; world.side * world.side];
        let g = group_at((48, 48));
        let f = lights_features(&world, &g).unwrap();
        assert_eq!(f[0], 0.0); // mean
        assert_eq!(f[5], 100.0); // first histogram bin [0,1)
        assert!(f[6..].iter().all(|&v| v == 0.0));

        // uniform intensity 10: std 0, median 10, mass in [8,16)
        world.intensity = vec![10; world.side * world.side];
        let f = lights_features(&world, &g).unwrap();
        assert_eq!(f[0], 10.0);
        assert_eq!(f[3], 0.0);
        assert_eq!(f[4], 10.0);
        assert_eq!(f[8], 100.0);

        // hand-built 2x2 corner block: intensities {0, 5, 20, 63}
        world.intensity = vec![0; world.side * world.side];
        world.intensity[0] = 0;
        world.intensity[1] = 5;
        world.intensity[world.side] = 20;
        world.intensity[world.side + 1] = 63;
        let corner = group_at((0, 0));
        // clamped block covers cells [0,5)x[0,5); only 4 nonzero-set cells matter
        let f = lights_features(&world, &corner).unwrap();
        assert_eq!(f[1], 63.0); // max
        assert_eq!(f[2], 0.0); // min
        let expected_mean = (5.0 + 20.0 + 63.0) / 25.0;
        assert!((f[0] - expected_mean).abs() < 1e-12);
    }

    #[test]
    fn transfer_features_average_tiles() {
        let world = test_world();
        let net = convolutionalize(&build_minif(16, 3, 8, 5).unwrap()).unwrap();
        let g = group_at((50, 50));
        let f = transfer_features(&net, &world, &g, 16).unwrap();
        assert_eq!(f.len(), 8);

        // single tile group: feature equals that tile's own vector
        let cells = group_tiles(&world, &g).unwrap();
        let one = world.render_tile(cells[0].0, cells[0].1, 16).unwrap();
        let single = mean_features(&net, std::slice::from_ref(&one)).unwrap();
        let direct = extract_features(&net, &one).unwrap();
        for (a, b) in single.iter().zip(direct.data()) {
            assert!((a - b).abs() < 1e-12);
        }

        // duplicating every tile leaves the mean unchanged
        let images: Vec<Tensor> = cells
            .iter()
            .map(|&(x, y)| world.render_tile(x, y, 16).unwrap())
            .collect();
        let doubled: Vec<Tensor> = images.iter().chain(images.iter()).cloned().collect();
        let a = mean_features(&net, &images).unwrap();
        let b = mean_features(&net, &doubled).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }

        // tile order does not matter
        let mut rev = images.clone();
        rev.reverse();
        let c = mean_features(&net, &rev).unwrap();
        for (x, y) in a.iter().zip(&c) {
            assert!((x - y).abs() < 1e-9);
        }
        assert!(mean_features(&net, &[]).is_err());
    }

    #[test]
    fn four_tile_hand_mean() {
        let net = convolutionalize(&build_minif(16, 3, 4, 9).unwrap()).unwrap();
        let world = test_world();
        let images: Vec<Tensor> =
            (0..4).map(|i| world.render_tile(10 + i, 20, 16).unwrap()).collect();
        let per_tile: Vec<Vec<f64>> = images
            .iter()
            .map(|img| extract_features(&net, img).unwrap().into_data())
            .collect();
        let mean = mean_features(&net, &images).unwrap();
        for j in 0..4 {
            let hand = (per_tile[0][j] + per_tile[1][j] + per_tile[2][j] + per_tile[3][j]) / 4.0;
            assert!((mean[j] - hand).abs() < 1e-9);
        }
    }

    #[test]
    fn hog_features_are_normalized() {
        let world = test_world();
        let img = world.render_tile(40, 40, 24).unwrap();
        let f = hog_color_features(&img).unwrap();
        assert_eq!(f.len(), 9 + 24);
        let hog_sum: f64 = f[..9].iter().sum();
        assert!((hog_sum - 1.0).abs() < 1e-9);
        for c in 0..3 {
            let s: f64 = f[9 + c * 8..9 + (c + 1) * 8].iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn table_blocks_concat_and_reject_unknown() {
        let mut t = FeatureTable::new(vec![1, 2], vec![0, 1]).unwrap();
        t.add_block("a", vec!["x".into()], vec![vec![1.0], vec![2.0]]).unwrap();
        t.add_block("b", vec!["y".into(), "z".into()], vec![vec![3.0, 4.0], vec![5.0, 6.0]])
            .unwrap();
        assert!(t.add_block("a", vec![], vec![vec![], vec![]]).is_err());

        let ab = t.concat_blocks(&["a", "b"]).unwrap();
        assert_eq!(ab, vec![vec![1.0, 3.0, 4.0], vec![2.0, 5.0, 6.0]]);
        let ba = t.concat_blocks(&["b", "a"]).unwrap();
        assert_eq!(ba[0], vec![3.0, 4.0, 1.0]);
        let single = t.concat_blocks(&["a"]).unwrap();
        assert_eq!(single, vec![vec![1.0], vec![2.0]]);
        assert!(t.concat_blocks(&["missing"]).is_err());

        // widths 13 and 256 concatenate to 269
        let mut wide = FeatureTable::new(vec![1], vec![0]).unwrap();
        wide.add_block("lights", (0..13).map(|i| i.to_string()).collect(), vec![vec![0.0; 13]])
            .unwrap();
        wide.add_block("imgnet", (0..256).map(|i| i.to_string()).collect(), vec![vec![0.0; 256]])
            .unwrap();
        assert_eq!(wide.concat_blocks(&["imgnet", "lights"]).unwrap()[0].len(), 269);
    }

    #[test]
    fn csv_export_has_block_prefixed_columns() {
        let mut t = FeatureTable::new(vec![7], vec![1]).unwrap();
        t.add_block("lights", vec!["mean".into()], vec![vec![2.5]]).unwrap();
        let path = std::env::temp_dir().join("luxmap-table.csv");
        t.export_csv(&path).unwrap();
        let body = std::fs::read_to_string(&path).unwrap();
        assert!(body.starts_with("group_id,label,lights:mean"));
        assert!(body.contains("7,1,2.5"));
    }
}

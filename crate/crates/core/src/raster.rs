//! Poverty probability rasters: world scanning at block resolution, disk
//! smoothing, region aggregation, and PNG/CSV export.

use std::path::Path;

use image::{ImageBuffer, Rgb};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::mean_features;
use crate::logreg::{predict_proba, LogRegModel};
use crate::net::Network;
use crate::world::World;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbRaster {
    pub rows: usize,
    pub cols: usize,
    /// Row-major probabilities in [0, 1].
    pub values: Vec<f64>,
    /// World cells per raster block.
    pub block_cells: usize,
    /// Side of the world this raster covers, in cells.
    pub world_side: usize,
    /// Disk radius (in raster blocks) of smoothing already applied.
    pub smoothing_radius: f64,
}

impl ProbRaster {
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Scans the world block by block: render the block's tiles, average their
/// transfer features, and score with the poverty classifier.
pub fn scan(
    world: &World,
    net: &Network,
    clf: &LogRegModel,
    block_cells: usize,
    tile_px: usize,
) -> Result<ProbRaster> {
    if block_cells == 0 {
        return Err(Error::InvalidArgument("block size must be positive".into()));
    }
    let n_blocks = world.side.div_ceil(block_cells);
    let blocks: Vec<(usize, usize)> =
        (0..n_blocks * n_blocks).map(|i| (i / n_blocks, i % n_blocks)).collect();
    let values: Vec<f64> = blocks
        .par_iter()
        .map(|&(by, bx)| -> Result<f64> {
            let y0 = by * block_cells;
            let x0 = bx * block_cells;
            let y1 = (y0 + block_cells).min(world.side);
            let x1 = (x0 + block_cells).min(world.side);
            let mut images = Vec::with_capacity((y1 - y0) * (x1 - x0));
            for y in y0..y1 {
                for x in x0..x1 {
                    images.push(world.render_tile(x, y, tile_px)?);
                }
            }
            let feats = mean_features(net, &images)?;
            let prob = predict_proba(clf, &[feats])?[0];
            Ok(prob)
        })
        .collect::<Result<_>>()?;
    Ok(ProbRaster {
        rows: n_blocks,
        cols: n_blocks,
        values,
        block_cells,
        world_side: world.side,
        smoothing_radius: 0.0,
    })
}

/// Disk-kernel mean filter: uniform weights over blocks within Euclidean
/// distance `radius`, renormalized by the in-bounds kernel mass at edges.
/// Radius 0 is the identity.
pub fn smooth(raster: &ProbRaster, radius: f64) -> Result<ProbRaster> {
    if radius < 0.0 {
        return Err(Error::InvalidArgument("smoothing radius must be >= 0".into()));
    }
    let mut out = raster.clone();
    out.smoothing_radius = radius;
    if radius == 0.0 {
        return Ok(out);
    }
    let r = radius.floor() as isize;
    let mut offsets = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if ((dy * dy + dx * dx) as f64).sqrt() <= radius {
                offsets.push((dy, dx));
            }
        }
    }
    for row in 0..raster.rows {
        for col in 0..raster.cols {
            let mut sum = 0.0;
            let mut mass = 0usize;
            for &(dy, dx) in &offsets {
                let y = row as isize + dy;
                let x = col as isize + dx;
                if y < 0 || x < 0 || y >= raster.rows as isize || x >= raster.cols as isize {
                    continue;
                }
                sum += raster.at(y as usize, x as usize);
                mass += 1;
            }
            out.values[row * raster.cols + col] = sum / mass as f64;
        }
    }
    Ok(out)
}

/// Block-to-region assignment aligned with a raster.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMap {
    pub rows: usize,
    pub cols: usize,
    pub ids: Vec<u32>,
}

impl RegionMap {
    /// d x d grid of rectangular districts.
    pub fn grid(rows: usize, cols: usize, d: usize) -> Self {
        let mut ids = Vec::with_capacity(rows * cols);
        for row in 0..rows {
            for col in 0..cols {
                let ry = (row * d / rows).min(d - 1);
                let rx = (col * d / cols).min(d - 1);
                ids.push((ry * d + rx) as u32);
            }
        }
        RegionMap { rows, cols, ids }
    }

    pub fn to_csv(&self, path: &Path) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path)?;
        wtr.write_record(["row", "col", "region_id"])?;
        for row in 0..self.rows {
            for col in 0..self.cols {
                wtr.write_record([
                    row.to_string(),
                    col.to_string(),
                    self.ids[row * self.cols + col].to_string(),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut entries = Vec::new();
        let mut max_row = 0usize;
        let mut max_col = 0usize;
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |j: usize| -> Result<usize> {
                rec.get(j)
                    .unwrap_or_default()
                    .parse()
                    .map_err(|_| Error::Data(format!("region csv row {}: bad field", i + 2)))
            };
            let (row, col) = (parse(0)?, parse(1)?);
            let id: u32 = parse(2)? as u32;
            max_row = max_row.max(row);
            max_col = max_col.max(col);
            entries.push((row, col, id));
        }
        let (rows, cols) = (max_row + 1, max_col + 1);
        let mut ids = vec![u32::MAX; rows * cols];
        for (row, col, id) in entries {
            ids[row * cols + col] = id;
        }
        if ids.contains(&u32::MAX) {
            return Err(Error::Data("region csv does not cover every block".into()));
        }
        Ok(RegionMap { rows, cols, ids })
    }
}

/// Mean probability per region. Regions are weighted by their block count,
/// i.e. this is the plain mean over member blocks.
pub fn aggregate(raster: &ProbRaster, regions: &RegionMap) -> Result<Vec<(u32, f64, usize)>> {
    if regions.rows != raster.rows || regions.cols != raster.cols {
        return Err(Error::Dimension(format!(
            "region map is {}x{}, raster is {}x{}",
            regions.rows, regions.cols, raster.rows, raster.cols
        )));
    }
    let mut sums: std::collections::BTreeMap<u32, (f64, usize)> = Default::default();
    for (v, &id) in raster.values.iter().zip(&regions.ids) {
        let e = sums.entry(id).or_insert((0.0, 0));
        e.0 += v;
        e.1 += 1;
    }
    Ok(sums.into_iter().map(|(id, (s, c))| (id, s / c as f64, c)).collect())
}

/// Linear green -> yellow -> red ramp over [0, 1].
pub fn ramp(p: f64) -> [u8; 3] {
    let p = p.clamp(0.0, 1.0);
    let r = (2.0 * p).min(1.0);
    let g = (2.0 * (1.0 - p)).min(1.0);
    [(r * 255.0).round() as u8, (g * 255.0).round() as u8, 0]
}

const LEGEND_WIDTH: u32 = 12;
const LEGEND_GAP: u32 = 4;

/// PNG heatmap at `scale` pixels per block, with a vertical legend strip
/// (probability 1 at the top) on the right.
pub fn emit_png(raster: &ProbRaster, path: &Path, scale: usize) -> Result<()> {
    if scale == 0 {
        return Err(Error::InvalidArgument("scale must be positive".into()));
    }
    let w = (raster.cols * scale) as u32 + LEGEND_GAP + LEGEND_WIDTH;
    let h = (raster.rows * scale) as u32;
    let mut img = ImageBuffer::from_pixel(w, h, Rgb([255u8, 255, 255]));
    for row in 0..raster.rows {
        for col in 0..raster.cols {
            let c = Rgb(ramp(raster.at(row, col)));
            for py in 0..scale {
                for px in 0..scale {
                    img.put_pixel((col * scale + px) as u32, (row * scale + py) as u32, c);
                }
            }
        }
    }
    for y in 0..h {
        let p = 1.0 - y as f64 / (h - 1).max(1) as f64;
        let c = Rgb(ramp(p));
        for x in 0..LEGEND_WIDTH {
            img.put_pixel((raster.cols * scale) as u32 + LEGEND_GAP + x, y, c);
        }
    }
    img.save(path)?;
    Ok(())
}

/// CSV export `row,col,prob`; probabilities print in shortest round-trip
/// form so emit -> read is bit-exact.
pub fn emit_csv(raster: &ProbRaster, path: &Path) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(["row", "col", "prob"])?;
    for row in 0..raster.rows {
        for col in 0..raster.cols {
            wtr.write_record([row.to_string(), col.to_string(), format!("{}", raster.at(row, col))])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a raster CSV back; block/world geometry is not stored in the CSV
/// and defaults to zero markers.
pub fn read_csv(path: &Path) -> Result<ProbRaster> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut entries = Vec::new();
    let (mut max_row, mut max_col) = (0usize, 0usize);
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row: usize = rec
            .get(0)
            .unwrap_or_default()
            .parse()
            .map_err(|_| Error::Data(format!("raster csv row {}: bad row", i + 2)))?;
        let col: usize = rec
            .get(1)
            .unwrap_or_default()
            .parse()
            .map_err(|_| Error::Data(format!("raster csv row {}: bad col", i + 2)))?;
        let prob: f64 = rec
            .get(2)
            .unwrap_or_default()
            .parse()
            .map_err(|_| Error::Data(format!("raster csv row {}: bad prob", i + 2)))?;
        max_row = max_row.max(row);
        max_col = max_col.max(col);
        entries.push((row, col, prob));
    }
    let (rows, cols) = (max_row + 1, max_col + 1);
    let mut values = vec![f64::NAN; rows * cols];
    for (row, col, p) in entries {
        values[row * cols + col] = p;
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Data("raster csv does not cover every block".into()));
    }
    Ok(ProbRaster { rows, cols, values, block_cells: 0, world_side: 0, smoothing_radius: 0.0 })
}

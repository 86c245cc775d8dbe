//! Tile datasets: sampling labeled tiles from a world, GMM binning,
//! class rebalancing, leakage-safe splitting, and the on-disk directory
//! format (`index.csv` + PNG tiles).

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gmm::GmmModel;
use crate::imageio::{load_png, save_png};
use crate::seed::derive_seed;
use crate::tensor::Tensor;
use crate::train::BatchSource;
use crate::world::{World, MAX_INTENSITY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            other => Err(Error::Data(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TileRecord {
    pub id: u64,
    pub cell: (usize, usize),
    pub intensity: u8,
    pub bin: Option<u8>,
    pub split: Split,
    /// Image path for directory-backed datasets.
    pub path: Option<PathBuf>,
}

impl std::fmt::Debug for TileDataset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TileDataset").field("records", &self.records.len()).finish()
    }
}

#[derive(Clone)]
enum TileSource {
    World { world: Arc<World>, tile_px: usize },
    Directory { root: PathBuf },
}

#[derive(Clone)]
pub struct TileDataset {
    pub records: Vec<TileRecord>,
    source: TileSource,
}

impl TileDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Renders or loads the tile image for record `i`.
    pub fn image(&self, i: usize) -> Result<Tensor> {
        let rec = &self.records[i];
        match &self.source {
            TileSource::World { world, tile_px } => {
                world.render_tile(rec.cell.0, rec.cell.1, *tile_px)
            }
            TileSource::Directory { root } => {
                let rel = rec
                    .path
                    .as_ref()
                    .ok_or_else(|| Error::Data(format!("record {} has no image path", rec.id)))?;
                load_png(&root.join(rel))
            }
        }
    }

    pub fn indices_of(&self, split: Split) -> Vec<usize> {
        (0..self.records.len()).filter(|&i| self.records[i].split == split).collect()
    }

    /// Labeled view over one split; labels are bins when present, raw
    /// intensities otherwise.
    pub fn view(&self, split: Split) -> TileView<'_> {
        TileView { ds: self, indices: self.indices_of(split) }
    }

    pub fn bin_counts(&self, split: Split) -> HashMap<u8, usize> {
        let mut counts = HashMap::new();
        for r in self.records.iter().filter(|r| r.split == split) {
            if let Some(b) = r.bin {
                *counts.entry(b).or_insert(0) += 1;
            }
        }
        counts
    }

    /// FNV-1a hash over the record table, for provenance manifests.
    pub fn content_hash(&self) -> u64 {
        let mut repr = String::new();
        for r in &self.records {
            repr.push_str(&format!(
                "{}|{}|{}|{}|{:?}|{};",
                r.id,
                r.cell.0,
                r.cell.1,
                r.intensity,
                r.bin,
                r.split.name()
            ));
        }
        crate::seed::fnv1a64(repr.as_bytes())
    }
}

pub struct TileView<'a> {
    ds: &'a TileDataset,
    indices: Vec<usize>,
}

impl TileView<'_> {
    pub fn record(&self, i: usize) -> &TileRecord {
        &self.ds.records[self.indices[i]]
    }
}

impl BatchSource for TileView<'_> {
    fn len(&self) -> usize {
        self.indices.len()
    }
    fn label(&self, i: usize) -> usize {
        let r = &self.ds.records[self.indices[i]];
        r.bin.map(|b| b as usize).unwrap_or(r.intensity as usize)
    }
    fn image(&self, i: usize) -> Result<Tensor> {
        self.ds.image(self.indices[i])
    }
}

/// Samples `n` labeled tiles, concentrated near the world's survey sites
/// (80% site-adjacent, 20% uniform). Labels are the cell intensities.
pub fn sample_dataset(world: &Arc<World>, n: usize, tile_px: usize, seed: u64) -> Result<TileDataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("cannot sample an empty dataset".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "sample"));
    let side = world.side as isize;
    let mut records = Vec::with_capacity(n);
    for id in 0..n {
        let (x, y) = if rng.gen::<f64>() < 0.8 && !world.survey_sites.is_empty() {
            let &(sx, sy) = &world.survey_sites[rng.gen_range(0..world.survey_sites.len())];
            // triangular-ish offset around the site
            let dx = rng.gen_range(-6i64..=6) + rng.gen_range(-3i64..=3);
            let dy = rng.gen_range(-6i64..=6) + rng.gen_range(-3i64..=3);
            (
                (sx as isize + dx as isize).clamp(0, side - 1) as usize,
                (sy as isize + dy as isize).clamp(0, side - 1) as usize,
            )
        } else {
            (rng.gen_range(0..world.side), rng.gen_range(0..world.side))
        };
        records.push(TileRecord {
            id: id as u64,
            cell: (x, y),
            intensity: world.intensity[world.idx(x, y)],
            bin: None,
            split: Split::Train,
            path: None,
        });
    }
    Ok(TileDataset {
        records,
        source: TileSource::World { world: Arc::clone(world), tile_px },
    })
}

/// Assigns each record the argmax-responsibility mixture component. The
/// model's components are mean-sorted, so bin 0 is the dimmest.
pub fn bin_labels(gmm: &GmmModel, dataset: &TileDataset) -> Result<TileDataset> {
    if gmm.loglik_trace.is_empty() {
        return Err(Error::InvalidArgument("mixture model has not been fitted".into()));
    }
    let mut out = dataset.clone();
    // 64 possible intensities; precompute the assignment table
    let table: Vec<u8> = (0..=MAX_INTENSITY).map(|v| gmm.assign(v as f64) as u8).collect();
    for r in &mut out.records {
        r.bin = Some(table[r.intensity as usize]);
    }
    Ok(out)
}

/// Resamples each split so the rarest bin has at least half the records of
/// the most frequent one: the dominant bin is subsampled down to twice the
/// runner-up, then rare bins are duplicated up to half the new maximum.
pub fn rebalance(dataset: &TileDataset, seed: u64) -> Result<TileDataset> {
    if dataset.records.iter().any(|r| r.bin.is_none()) {
        return Err(Error::InvalidArgument("rebalance requires a binned dataset".into()));
    }
    let mut out = dataset.clone();
    let mut records = Vec::new();
    let mut next_id: u64 = dataset.records.iter().map(|r| r.id).max().unwrap_or(0) + 1;

    for split in [Split::Train, Split::Val] {
        let mut by_bin: HashMap<u8, Vec<&TileRecord>> = HashMap::new();
        for r in dataset.records.iter().filter(|r| r.split == split) {
            by_bin.entry(r.bin.unwrap()).or_default().push(r);
        }
        if by_bin.is_empty() {
            continue;
        }
        if by_bin.values().any(|v| v.is_empty()) {
            return Err(Error::DegenerateData("a class has no records".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("rebalance-{}", split.name())));

        let mut counts: Vec<(u8, usize)> = by_bin.iter().map(|(b, v)| (*b, v.len())).collect();
        counts.sort();
        let max_count = counts.iter().map(|&(_, c)| c).max().unwrap();
        let second = counts
            .iter()
            .map(|&(_, c)| c)
            .filter(|&c| c < max_count)
            .max()
            .unwrap_or(max_count);
        let argmax_bin = counts.iter().find(|&&(_, c)| c == max_count).unwrap().0;
        let cap = max_count.min(2 * second);

        // subsample the dominant bin
        let mut kept: HashMap<u8, Vec<TileRecord>> = HashMap::new();
        for (b, rows) in &by_bin {
            let mut rows: Vec<TileRecord> = rows.iter().map(|r| (*r).clone()).collect();
            if *b == argmax_bin && rows.len() > cap {
                for i in 0..cap {
                    let j = rng.gen_range(i..rows.len());
                    rows.swap(i, j);
                }
                rows.truncate(cap);
            }
            kept.insert(*b, rows);
        }

        // upsample rare bins to half the (new) maximum
        let new_max = kept.values().map(|v| v.len()).max().unwrap();
        let target_min = new_max.div_ceil(2);
        let mut bins: Vec<u8> = kept.keys().copied().collect();
        bins.sort();
        for b in bins {
            let rows = kept.get_mut(&b).unwrap();
            let originals = rows.len();
            while rows.len() < target_min {
                let mut dup = rows[rng.gen_range(0..originals)].clone();
                dup.id = next_id;
                next_id += 1;
                rows.push(dup);
            }
            records.extend(rows.drain(..));
        }
    }

    records.sort_by_key(|r| r.id);
    out.records = records;
    Ok(out)
}

/// Splits into train/val at cell granularity, so tiles of the same world
/// cell never straddle the split boundary.
pub fn split(dataset: &TileDataset, val_fraction: f64, seed: u64) -> Result<TileDataset> {
    if !(0.0..1.0).contains(&val_fraction) || val_fraction == 0.0 {
        return Err(Error::InvalidArgument(format!(
            "val fraction must be in (0, 1), got {val_fraction}"
        )));
    }
    let mut out = dataset.clone();
    let mut by_cell: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (i, r) in dataset.records.iter().enumerate() {
        by_cell.entry(r.cell).or_default().push(i);
    }
    let mut cells: Vec<(usize, usize)> = by_cell.keys().copied().collect();
    cells.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "split"));
    for i in (1..cells.len()).rev() {
        let j = rng.gen_range(0..=i);
        cells.swap(i, j);
    }
    let target = (dataset.len() as f64 * val_fraction).round() as usize;
    let mut assigned = 0usize;
    for r in &mut out.records {
        r.split = Split::Train;
    }
    for cell in cells {
        if assigned >= target {
            break;
        }
        for &i in &by_cell[&cell] {
            out.records[i].split = Split::Val;
            assigned += 1;
        }
    }
    Ok(out)
}

/// Writes the dataset as `index.csv` plus one PNG per record.
pub fn export_directory(dataset: &TileDataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir.join("tiles"))?;
    let mut wtr = csv::Writer::from_path(dir.join("index.csv"))?;
    wtr.write_record(["tile_id", "path", "intensity", "bin", "split", "cell_x", "cell_y"])?;
    for (i, r) in dataset.records.iter().enumerate() {
        let rel = format!("tiles/{}.png", r.id);
        save_png(&dataset.image(i)?, &dir.join(&rel))?;
        wtr.write_record([
            r.id.to_string(),
            rel,
            r.intensity.to_string(),
            r.bin.map(|b| b.to_string()).unwrap_or_default(),
            r.split.name().to_string(),
            r.cell.0.to_string(),
            r.cell.1.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a tile directory, validating ids, label ranges and image files.
pub fn ingest_directory(dir: &Path) -> Result<TileDataset> {
    let index = dir.join("index.csv");
    if !index.exists() {
        return Err(Error::Data(format!("missing index file {}", index.display())));
    }
    let mut rdr = csv::Reader::from_path(&index)?;
    let headers = rdr.headers()?.clone();
    let expect = ["tile_id", "path", "intensity", "bin", "split", "cell_x", "cell_y"];
    let got: Vec<&str> = headers.iter().collect();
    if got != expect {
        return Err(Error::Data(format!(
            "index.csv header mismatch: expected {expect:?}, got {got:?}"
        )));
    }

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (row_idx, row) in rdr.records().enumerate() {
        let rownum = row_idx + 2; // 1-based, after the header
        let row = row?;
        let field = |i: usize| -> &str { row.get(i).unwrap_or_default() };
        let id: u64 = field(0)
            .parse()
            .map_err(|_| Error::Data(format!("row {rownum}: bad tile_id {:?}", field(0))))?;
        if !seen.insert(id) {
            return Err(Error::Data(format!("row {rownum}: duplicate tile id {id}")));
        }
        let intensity: i64 = field(2)
            .parse()
            .map_err(|_| Error::Data(format!("row {rownum}: bad intensity {:?}", field(2))))?;
        if !(0..=MAX_INTENSITY as i64).contains(&intensity) {
            return Err(Error::Data(format!(
                "row {rownum}: intensity {intensity} outside [0, {MAX_INTENSITY}]"
            )));
        }
        let bin = match field(3) {
            "" => None,
            s => Some(
                s.parse::<u8>()
                    .map_err(|_| Error::Data(format!("row {rownum}: bad bin {s:?}")))?,
            ),
        };
        let split = Split::parse(field(4))
            .map_err(|_| Error::Data(format!("row {rownum}: bad split {:?}", field(4))))?;
        let cx: usize = field(5)
            .parse()
            .map_err(|_| Error::Data(format!("row {rownum}: bad cell_x {:?}", field(5))))?;
        let cy: usize = field(6)
            .parse()
            .map_err(|_| Error::Data(format!("row {rownum}: bad cell_y {:?}", field(6))))?;
        let rel = PathBuf::from(field(1));
        let full = dir.join(&rel);
        if !full.exists() {
            return Err(Error::Data(format!(
                "row {rownum}: image file {} does not exist",
                full.display()
            )));
        }
        // decode once so malformed images fail at ingest, not mid-training
        load_png(&full).map_err(|e| {
            Error::Data(format!("row {rownum}: cannot decode {}: {e}", full.display()))
        })?;
        records.push(TileRecord {
            id,
            cell: (cx, cy),
            intensity: intensity as u8,
            bin,
            split,
            path: Some(rel),
        });
    }
    Ok(TileDataset { records, source: TileSource::Directory { root: dir.to_path_buf() } })
}

//! Filter interpretability: per-filter mean post-ReLU activation scores,
//! maximally activating image rankings, and montage export.

use std::path::Path;

use image::{ImageBuffer, Rgb};

use crate::dataset::{Split, TileDataset};
use crate::error::{Error, Result};
use crate::net::{LayerSpec, Network};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct FilterActivation {
    pub layer: usize,
    pub filter: usize,
    /// Mean of the post-ReLU activation map.
    pub score: f64,
    /// Post-ReLU spatial map (h x w).
    pub map: Tensor,
}

fn check_conv_layer(net: &Network, layer: usize, filter: usize) -> Result<usize> {
    let channels = match net.layers.get(layer) {
        Some(LayerSpec::Conv { out_channels, .. })
        | Some(LayerSpec::ConvFromFc { out_channels, .. }) => *out_channels,
        Some(other) => {
            return Err(Error::InvalidArgument(format!(
                "layer {layer} is {other:?}, not convolutional"
            )))
        }
        None => {
            return Err(Error::InvalidArgument(format!(
                "layer index {layer} out of range ({} layers)",
                net.layers.len()
            )))
        }
    };
    if filter >= channels {
        return Err(Error::InvalidArgument(format!(
            "filter {filter} out of range for {channels} channels"
        )));
    }
    Ok(channels)
}

/// Forward to a convolutional layer, slice one output channel, apply ReLU,
/// and average the resulting map.
pub fn activation_score(
    net: &Network,
    layer: usize,
    filter: usize,
    image: &Tensor,
) -> Result<FilterActivation> {
    let channels = check_conv_layer(net, layer, filter)?;
    let fwd = net.forward(image, false, 0.0, 0)?;
    let out = fwd.tape.value(fwd.layer_out[layer]);
    let (_, h, w, c) = out.dims4()?;
    debug_assert_eq!(c, channels);
    let mut map = Vec::with_capacity(h * w);
    let mut sum = 0.0;
    for p in 0..h * w {
        let v = out.data()[p * c + filter].max(0.0);
        sum += v;
        map.push(v);
    }
    Ok(FilterActivation {
        layer,
        filter,
        score: sum / (h * w) as f64,
        map: Tensor::new(&[h, w], map)?,
    })
}

/// Batched scores for every tile index given (mean post-ReLU activation of
/// one filter channel). Order matches `indices`.
fn batched_scores(
    net: &Network,
    layer: usize,
    filter: usize,
    ds: &TileDataset,
    indices: &[usize],
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(indices.len());
    for chunk in indices.chunks(32) {
        let images: Vec<Tensor> = chunk.iter().map(|&i| ds.image(i)).collect::<Result<_>>()?;
        let (h, w, d) = {
            let (_, h, w, d) = images[0].dims4()?;
            (h, w, d)
        };
        let mut data = Vec::with_capacity(images.len() * h * w * d);
        for img in &images {
            data.extend_from_slice(img.data());
        }
        let batch = Tensor::new(&[images.len(), h, w, d], data)?;
        let fwd = net.forward(&batch, false, 0.0, 0)?;
        let act = fwd.tape.value(fwd.layer_out[layer]);
        let (n, ah, aw, c) = act.dims4()?;
        for ni in 0..n {
            let mut sum = 0.0;
            for p in 0..ah * aw {
                sum += act.data()[(ni * ah * aw + p) * c + filter].max(0.0);
            }
            out.push(sum / (ah * aw) as f64);
        }
    }
    Ok(out)
}

/// Tiles of one split ranked by descending filter score; score ties break
/// by ascending tile id. Returns up to `n` (tile id, score) pairs.
pub fn top_activating(
    net: &Network,
    layer: usize,
    filter: usize,
    ds: &TileDataset,
    split: Split,
    n: usize,
) -> Result<Vec<(u64, f64)>> {
    check_conv_layer(net, layer, filter)?;
    let indices = ds.indices_of(split);
    if indices.is_empty() {
        return Err(Error::Data(format!("dataset has no {} tiles", split.name())));
    }
    let scores = batched_scores(net, layer, filter, ds, &indices)?;
    let mut ranked: Vec<(u64, f64)> = indices
        .iter()
        .zip(&scores)
        .map(|(&i, &s)| (ds.records[i].id, s))
        .collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    ranked.truncate(n);
    Ok(ranked)
}

/// Heat ramp for activation maps: 0 -> black, 1 -> yellow.
fn heat(v: f64) -> [u8; 3] {
    let v = v.clamp(0.0, 1.0);
    let r = (2.0 * v).min(1.0);
    let g = (2.0 * v - 1.0).max(0.0);
    [(r * 255.0).round() as u8, (g * 255.0).round() as u8, 0]
}

/// Writes a grid of (image, activation-map) pairs. Maps are min-max
/// normalized per image; zero-range maps render as 0.
pub fn export_montage(images: &[Tensor], maps: &[Tensor], path: &Path) -> Result<()> {
    if images.len() != maps.len() {
        return Err(Error::Dimension(format!(
            "{} images for {} maps",
            images.len(),
            maps.len()
        )));
    }
    if images.is_empty() {
        return Err(Error::Data("montage needs at least one image".into()));
    }
    let (_, h, w, _) = images[0].dims4()?;
    let pair_cols = (images.len() as f64).sqrt().ceil() as usize;
    let rows = images.len().div_ceil(pair_cols);
    let mut img = ImageBuffer::from_pixel(
        (pair_cols * 2 * w) as u32,
        (rows * h) as u32,
        Rgb([0u8, 0, 0]),
    );
    for (i, (src, map)) in images.iter().zip(maps).enumerate() {
        let (_, sh, sw, sd) = src.dims4()?;
        if (sh, sw) != (h, w) || sd != 3 {
            return Err(Error::Dimension("montage images must share one RGB shape".into()));
        }
        let row = i / pair_cols;
        let col = i % pair_cols;
        let ox = (col * 2 * w) as u32;
        let oy = (row * h) as u32;
        for y in 0..h {
            for x in 0..w {
                let b = (y * w + x) * 3;
                let px = Rgb([
                    (src.data()[b].clamp(0.0, 1.0) * 255.0).round() as u8,
                    (src.data()[b + 1].clamp(0.0, 1.0) * 255.0).round() as u8,
                    (src.data()[b + 2].clamp(0.0, 1.0) * 255.0).round() as u8,
                ]);
                img.put_pixel(ox + x as u32, oy + y as u32, px);
            }
        }
        // nearest-neighbor upscale of the (usually coarser) map
        let ms = map.shape();
        let (mh, mw) = (ms[0], ms[1]);
        let lo = map.data().iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = map.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let range = hi - lo;
        for y in 0..h {
            for x in 0..w {
                let my = (y * mh / h).min(mh - 1);
                let mx = (x * mw / w).min(mw - 1);
                let v = if range > 0.0 { (map.data()[my * mw + mx] - lo) / range } else { 0.0 };
                img.put_pixel(ox + (w + x) as u32, oy + y as u32, Rgb(heat(v)));
            }
        }
    }
    img.save(path)?;
    Ok(())
}

/// `tile_id,layer,filter,score` rows.
pub fn export_scores_csv(
    scores: &[(u64, usize, usize, f64)],
    path: &Path,
) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(["tile_id", "layer", "filter", "score"])?;
    for (tile, layer, filter, score) in scores {
        wtr.write_record([
            tile.to_string(),
            layer.to_string(),
            filter.to_string(),
            format!("{score}"),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

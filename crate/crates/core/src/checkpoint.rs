//! Checkpoint I/O: a text manifest describing the layer stack followed by
//! the raw little-endian IEEE-754 weight arrays in manifest order.
//!
//! Round-trips are bit-exact at the stored precision. `f32` storage halves
//! file size; loading widens back to `f64` losslessly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::net::{LayerSpec, NetMode, Network};
use crate::tensor::Tensor;

const MAGIC: &str = "luxmap-checkpoint v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    F64,
    F32,
}

impl Precision {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "f64" => Ok(Precision::F64),
            "f32" => Ok(Precision::F32),
            other => Err(Error::InvalidArgument(format!("unknown precision {other:?}"))),
        }
    }
    fn name(self) -> &'static str {
        match self {
            Precision::F64 => "f64",
            Precision::F32 => "f32",
        }
    }
}

fn layer_line(layer: &LayerSpec) -> String {
    match layer {
        LayerSpec::Conv { filter, stride, pad, out_channels } => {
            format!("layer conv k {filter} stride {stride} pad {pad} out {out_channels}")
        }
        LayerSpec::MaxPool { window, stride } => format!("layer maxpool k {window} stride {stride}"),
        LayerSpec::Relu => "layer relu".into(),
        LayerSpec::Dropout => "layer dropout".into(),
        LayerSpec::FullyConnected { out, conv_stride } => {
            format!("layer fc out {out} conv_stride {conv_stride}")
        }
        LayerSpec::ConvFromFc { filter_h, filter_w, stride, out_channels, replaced_params } => format!(
            "layer conv_from_fc kh {filter_h} kw {filter_w} stride {stride} out {out_channels} replaced {replaced_params}"
        ),
        LayerSpec::Softmax => "layer softmax".into(),
    }
}

fn parse_layer(line: &str) -> Result<LayerSpec> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    let corrupt = || Error::Corrupt(format!("bad layer line: {line:?}"));
    let field = |key: &str| -> Result<usize> {
        let pos = toks.iter().position(|t| *t == key).ok_or_else(corrupt)?;
        toks.get(pos + 1).ok_or_else(corrupt)?.parse().map_err(|_| corrupt())
    };
    match toks.get(1) {
        Some(&"conv") => Ok(LayerSpec::Conv {
            filter: field("k")?,
            stride: field("stride")?,
            pad: field("pad")?,
            out_channels: field("out")?,
        }),
        Some(&"maxpool") => Ok(LayerSpec::MaxPool { window: field("k")?, stride: field("stride")? }),
        Some(&"relu") => Ok(LayerSpec::Relu),
        Some(&"dropout") => Ok(LayerSpec::Dropout),
        Some(&"fc") => Ok(LayerSpec::FullyConnected {
            out: field("out")?,
            conv_stride: field("conv_stride")?,
        }),
        Some(&"conv_from_fc") => Ok(LayerSpec::ConvFromFc {
            filter_h: field("kh")?,
            filter_w: field("kw")?,
            stride: field("stride")?,
            out_channels: field("out")?,
            replaced_params: field("replaced")?,
        }),
        Some(&"softmax") => Ok(LayerSpec::Softmax),
        _ => Err(corrupt()),
    }
}

pub fn save_checkpoint(net: &Network, path: &Path, precision: Precision) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "precision {}", precision.name())?;
    let mode = match net.mode {
        NetMode::FixedInput => "fixed_input",
        NetMode::FullyConvolutional => "fully_convolutional",
    };
    writeln!(out, "mode {mode}")?;
    let (h, w, d) = net.training_input;
    writeln!(out, "input {h} {w} {d}")?;
    for layer in &net.layers {
        writeln!(out, "{}", layer_line(layer))?;
    }
    let mut order: Vec<&Tensor> = Vec::new();
    for (i, lw) in net.weights.iter().enumerate() {
        for (slot, t) in [("w", &lw.w), ("b", &lw.b)] {
            if let Some(t) = t {
                let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
                writeln!(out, "tensor {i} {slot} {}", dims.join(" "))?;
                order.push(t);
            }
        }
    }
    writeln!(out, "end")?;
    for t in order {
        match precision {
            Precision::F64 => {
                for v in t.data() {
                    out.write_all(&v.to_le_bytes())?;
                }
            }
            Precision::F32 => {
                for v in t.data() {
                    out.write_all(&(*v as f32).to_le_bytes())?;
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Network> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;

    // manifest is everything up to the "end" line
    let end_marker = b"\nend\n";
    let split = bytes
        .windows(end_marker.len())
        .position(|w| w == end_marker)
        .ok_or_else(|| Error::Corrupt("checkpoint has no manifest terminator".into()))?;
    let manifest = std::str::from_utf8(&bytes[..split])
        .map_err(|_| Error::Corrupt("manifest is not utf-8".into()))?;
    let blob = &bytes[split + end_marker.len()..];

    let mut lines = manifest.lines();
    let magic = lines.next().unwrap_or_default();
    if magic != MAGIC {
        return Err(Error::Corrupt(format!(
            "version mismatch: expected {MAGIC:?}, found {magic:?}"
        )));
    }

    let mut precision = Precision::F64;
    let mut mode = None;
    let mut input = None;
    let mut layers = Vec::new();
    let mut tensor_decls: Vec<(usize, String, Vec<usize>)> = Vec::new();
    for line in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.first() {
            Some(&"precision") => {
                precision = Precision::parse(toks.get(1).copied().unwrap_or_default())?;
            }
            Some(&"mode") => {
                mode = Some(match toks.get(1) {
                    Some(&"fixed_input") => NetMode::FixedInput,
                    Some(&"fully_convolutional") => NetMode::FullyConvolutional,
                    other => return Err(Error::Corrupt(format!("bad mode {other:?}"))),
                });
            }
            Some(&"input") => {
                if toks.len() != 4 {
                    return Err(Error::Corrupt(format!("bad input line: {line:?}")));
                }
                let dims: Vec<usize> = toks[1..]
                    .iter()
                    .map(|t| t.parse().map_err(|_| Error::Corrupt(format!("bad input dim {t:?}"))))
                    .collect::<Result<_>>()?;
                input = Some((dims[0], dims[1], dims[2]));
            }
            Some(&"layer") => layers.push(parse_layer(line)?),
            Some(&"tensor") => {
                if toks.len() < 4 {
                    return Err(Error::Corrupt(format!("bad tensor line: {line:?}")));
                }
                let idx: usize =
                    toks[1].parse().map_err(|_| Error::Corrupt(format!("bad tensor index {line:?}")))?;
                let dims: Vec<usize> = toks[3..]
                    .iter()
                    .map(|t| t.parse().map_err(|_| Error::Corrupt(format!("bad tensor dim {t:?}"))))
                    .collect::<Result<_>>()?;
                tensor_decls.push((idx, toks[2].to_string(), dims));
            }
            Some(other) => return Err(Error::Corrupt(format!("unknown manifest key {other:?}"))),
            None => {}
        }
    }
    let mode = mode.ok_or_else(|| Error::Corrupt("manifest missing mode".into()))?;
    let input = input.ok_or_else(|| Error::Corrupt("manifest missing input".into()))?;

    let elem = match precision {
        Precision::F64 => 8,
        Precision::F32 => 4,
    };
    let expected: usize = tensor_decls.iter().map(|(_, _, d)| d.iter().product::<usize>()).sum();
    if blob.len() != expected * elem {
        return Err(Error::Corrupt(format!(
            "binary section holds {} bytes, manifest declares {}",
            blob.len(),
            expected * elem
        )));
    }

    let mut net = Network {
        weights: vec![Default::default(); layers.len()],
        layers,
        training_input: input,
        mode,
    };
    let mut offset = 0usize;
    for (idx, slot, dims) in tensor_decls {
        if idx >= net.layers.len() {
            return Err(Error::Corrupt(format!("tensor for nonexistent layer {idx}")));
        }
        let n: usize = dims.iter().product();
        let mut data = Vec::with_capacity(n);
        match precision {
            Precision::F64 => {
                for c in blob[offset..offset + n * 8].chunks_exact(8) {
                    data.push(f64::from_le_bytes(c.try_into().unwrap()));
                }
            }
            Precision::F32 => {
                for c in blob[offset..offset + n * 4].chunks_exact(4) {
                    data.push(f32::from_le_bytes(c.try_into().unwrap()) as f64);
                }
            }
        }
        offset += n * elem;
        let t = Tensor::new(&dims, data)?;
        match slot.as_str() {
            "w" => net.weights[idx].w = Some(t),
            "b" => net.weights[idx].b = Some(t),
            other => return Err(Error::Corrupt(format!("unknown tensor slot {other:?}"))),
        }
    }

    // every parameterized layer must have arrived with both tensors
    for (i, layer) in net.layers.iter().enumerate() {
        if layer.has_params() && (net.weights[i].w.is_none() || net.weights[i].b.is_none()) {
            return Err(Error::Corrupt(format!("layer {i} is missing weight tensors")));
        }
    }
    net.shape_chain(net.training_input)?;
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{build_minif, convolutionalize};
    use crate::tensor::max_rel_err;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tmpfile(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("luxmap-ckpt-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    fn rand_image(seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::new(&[16, 16, 3], (0..768).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn roundtrip_preserves_outputs_bitexact() {
        let net = build_minif(16, 3, 16, 42).unwrap();
        let path = tmpfile("roundtrip.ckpt");
        save_checkpoint(&net, &path, Precision::F64).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.layers, net.layers);
        let img = rand_image(1);
        let a = net.class_scores(&img).unwrap();
        let b = loaded.class_scores(&img).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn converted_roundtrip_preserves_mode() {
        let net = convolutionalize(&build_minif(16, 3, 8, 7).unwrap()).unwrap();
        let path = tmpfile("converted.ckpt");
        save_checkpoint(&net, &path, Precision::F64).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.mode, NetMode::FullyConvolutional);
        assert_eq!(loaded.layers, net.layers);
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let net = build_minif(16, 2, 8, 3).unwrap();
        let path = tmpfile("trunc.ckpt");
        save_checkpoint(&net, &path, Precision::F64).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 16]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Corrupt(_))));
    }

    #[test]
    fn version_mismatch_is_corrupt() {
        let path = tmpfile("version.ckpt");
        std::fs::write(&path, b"luxmap-checkpoint v9\nend\n").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Corrupt(_))));
    }

    #[test]
    fn f32_roundtrip_is_stable_at_f32() {
        let net = build_minif(16, 3, 8, 9).unwrap();
        let p1 = tmpfile("f32a.ckpt");
        let p2 = tmpfile("f32b.ckpt");
        save_checkpoint(&net, &p1, Precision::F32).unwrap();
        let once = load_checkpoint(&p1).unwrap();
        save_checkpoint(&once, &p2, Precision::F32).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        // and the widened weights are close to the originals
        for (a, b) in once.params().iter().zip(net.params()) {
            assert!(max_rel_err(a.data(), b.data()) < 1e-6);
        }
    }
}

//! Network definition: layer descriptors, the "MiniF" builder, forward
//! evaluation, and conversion of fully connected layers to convolutions.
//!
//! MiniF is a scaled-down structural analog of a classic conv->FC->softmax
//! image classifier. Its geometry is chosen so that the total network
//! stride S and receptive field R satisfy R = training input side and
//! S = R/2, which makes a 1.5x-sided input produce a 2x2 score map whose
//! positions are the four overlapping quadrant crops.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::ops::out_dim;
use crate::seed::derive_seed;
use crate::tensor::Tensor;

pub const MINIF_STAGE1_CHANNELS: usize = 16;
pub const MINIF_STAGE2_CHANNELS: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSpec {
    Conv { filter: usize, stride: usize, pad: usize, out_channels: usize },
    MaxPool { window: usize, stride: usize },
    Relu,
    Dropout,
    /// Fully connected layer. `conv_stride` is the stride its replacement
    /// convolution uses after conversion (1 for layers whose input is
    /// already 1x1 spatially).
    FullyConnected { out: usize, conv_stride: usize },
    /// A convolution that replaced a fully connected layer; remembers the
    /// parameter count of the layer it replaced.
    ConvFromFc { filter_h: usize, filter_w: usize, stride: usize, out_channels: usize, replaced_params: usize },
    Softmax,
}

impl LayerSpec {
    pub fn has_params(&self) -> bool {
        matches!(
            self,
            LayerSpec::Conv { .. } | LayerSpec::FullyConnected { .. } | LayerSpec::ConvFromFc { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetMode {
    FixedInput,
    FullyConvolutional,
}

/// Which activation `sliding_scores` returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreTap {
    /// Pre-softmax class scores from the final layer.
    Classes,
    /// Post-ReLU output of the last hidden (pre-classifier) layer.
    Features,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LayerWeights {
    pub w: Option<Tensor>,
    pub b: Option<Tensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<LayerSpec>,
    pub weights: Vec<LayerWeights>,
    /// (h, w, d) the network was declared for; fixed-input mode accepts
    /// exactly this size.
    pub training_input: (usize, usize, usize),
    pub mode: NetMode,
}

/// Total stride and receptive field of a layer stack, counting FC layers as
/// the convolutions they become on conversion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvArithmetic {
    pub total_stride: usize,
    pub receptive_field: usize,
}

impl Network {
    /// Builds a network from specs with seeded uniform(-1/sqrt(fan_in),
    /// +1/sqrt(fan_in)) weight init, validating that the layer shapes chain
    /// for the declared input.
    pub fn from_layers(layers: Vec<LayerSpec>, input: (usize, usize, usize), seed: u64) -> Result<Self> {
        let mut net = Network {
            weights: vec![LayerWeights::default(); layers.len()],
            layers,
            training_input: input,
            mode: NetMode::FixedInput,
        };
        net.shape_chain(input)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in 0..net.layers.len() {
            net.init_layer(i, &mut rng)?;
        }
        Ok(net)
    }

    fn init_layer(&mut self, idx: usize, rng: &mut ChaCha8Rng) -> Result<()> {
        let shapes = self.shape_chain(self.training_input)?;
        let (in_h, in_w, in_d) = if idx == 0 { self.training_input } else { shapes[idx - 1] };
        let (w_shape, b_len): (Vec<usize>, usize) = match &self.layers[idx] {
            LayerSpec::Conv { filter, out_channels, .. } => {
                (vec![*filter, *filter, in_d, *out_channels], *out_channels)
            }
            LayerSpec::ConvFromFc { filter_h, filter_w, out_channels, .. } => {
                (vec![*filter_h, *filter_w, in_d, *out_channels], *out_channels)
            }
            LayerSpec::FullyConnected { out, .. } => (vec![*out, in_h * in_w * in_d], *out),
            _ => return Ok(()),
        };
        let fan_in: usize = match &self.layers[idx] {
            LayerSpec::FullyConnected { .. } => w_shape[1],
            _ => w_shape[0] * w_shape[1] * w_shape[2],
        };
        let width = 1.0 / (fan_in as f64).sqrt();
        let w_len: usize = w_shape.iter().product();
        let data = (0..w_len).map(|_| rng.gen_range(-width..width)).collect();
        self.weights[idx] = LayerWeights {
            w: Some(Tensor::new(&w_shape, data)?),
            b: Some(Tensor::zeros(&[b_len])),
        };
        Ok(())
    }

    /// Re-initializes one layer's weights (used when conversion-created
    /// layers are trained from scratch).
    pub fn reinit_layer(&mut self, idx: usize, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.init_layer(idx, &mut rng)
    }

    /// Output (h, w, d) of every layer for the given input size.
    pub fn shape_chain(&self, input: (usize, usize, usize)) -> Result<Vec<(usize, usize, usize)>> {
        let (mut h, mut w, mut d) = input;
        let mut seen_fc = false;
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                LayerSpec::Conv { filter, stride, pad, out_channels } => {
                    if seen_fc {
                        return Err(Error::UnsupportedTopology(format!(
                            "conv layer {i} after a fully connected layer"
                        )));
                    }
                    h = out_dim(h, *filter, *stride, *pad)?;
                    w = out_dim(w, *filter, *stride, *pad)?;
                    d = *out_channels;
                }
                LayerSpec::ConvFromFc { filter_h, filter_w, stride, out_channels, .. } => {
                    h = out_dim(h, *filter_h, *stride, 0)?;
                    w = out_dim(w, *filter_w, *stride, 0)?;
                    d = *out_channels;
                }
                LayerSpec::MaxPool { window, stride } => {
                    if seen_fc {
                        return Err(Error::UnsupportedTopology(format!(
                            "pool layer {i} after a fully connected layer"
                        )));
                    }
                    h = out_dim(h, *window, *stride, 0)?;
                    w = out_dim(w, *window, *stride, 0)?;
                }
                LayerSpec::FullyConnected { out, .. } => {
                    seen_fc = true;
                    h = 1;
                    w = 1;
                    d = *out;
                }
                LayerSpec::Relu | LayerSpec::Dropout | LayerSpec::Softmax => {}
            }
            out.push((h, w, d));
        }
        Ok(out)
    }

    /// Indices of layers that carry weights.
    pub fn param_layers(&self) -> Vec<usize> {
        (0..self.layers.len()).filter(|&i| self.layers[i].has_params()).collect()
    }

    /// Flat parameter list in layer order: w then b per parameterized layer.
    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for lw in &self.weights {
            if let Some(w) = &lw.w {
                out.push(w);
            }
            if let Some(b) = &lw.b {
                out.push(b);
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for lw in &mut self.weights {
            if let Some(w) = &mut lw.w {
                out.push(w);
            }
            if let Some(b) = &mut lw.b {
                out.push(b);
            }
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Class count of the softmax head (output width of the last
    /// parameterized layer).
    pub fn num_classes(&self) -> usize {
        for (i, l) in self.layers.iter().enumerate().rev() {
            if l.has_params() {
                return match &self.layers[i] {
                    LayerSpec::Conv { out_channels, .. }
                    | LayerSpec::ConvFromFc { out_channels, .. } => *out_channels,
                    LayerSpec::FullyConnected { out, .. } => *out,
                    _ => unreachable!(),
                };
            }
        }
        0
    }

    /// Index of the last parameterized layer (the classifier head).
    pub fn head_layer(&self) -> Option<usize> {
        (0..self.layers.len()).rev().find(|&i| self.layers[i].has_params())
    }

    /// Index of the activation that feeds feature extraction: the ReLU
    /// directly after the last hidden parameterized layer. Falls back to
    /// the layer before the head when no ReLU intervenes.
    pub fn feature_tap(&self) -> Result<usize> {
        let head = self
            .head_layer()
            .ok_or_else(|| Error::UnsupportedTopology("network has no parameterized layers".into()))?;
        let hidden = (0..head)
            .rev()
            .find(|&i| self.layers[i].has_params())
            .ok_or_else(|| Error::UnsupportedTopology("network has no hidden layer to tap".into()))?;
        let mut tap = hidden;
        for i in hidden + 1..head {
            if matches!(self.layers[i], LayerSpec::Relu) {
                tap = i;
                break;
            }
        }
        Ok(tap)
    }

    /// Width of the vector produced by `extract_features`.
    pub fn feature_dim(&self) -> Result<usize> {
        let tap = self.feature_tap()?;
        let shapes = self.shape_chain(self.training_input)?;
        Ok(shapes[tap].2)
    }

    /// Stride/receptive-field arithmetic of the stack, counting the first
    /// FC layer as the convolution it becomes on conversion.
    pub fn conv_arithmetic(&self) -> Result<ConvArithmetic> {
        let shapes = self.shape_chain(self.training_input)?;
        let mut jump = 1usize;
        let mut rf = 1usize;
        for (i, layer) in self.layers.iter().enumerate() {
            let (k, s) = match layer {
                LayerSpec::Conv { filter, stride, .. } => (*filter, *stride),
                LayerSpec::MaxPool { window, stride } => (*window, *stride),
                LayerSpec::ConvFromFc { filter_h, stride, .. } => (*filter_h, *stride),
                LayerSpec::FullyConnected { conv_stride, .. } => {
                    // an FC consumes the whole remaining spatial extent
                    let (ih, _, _) = if i == 0 { self.training_input } else { shapes[i - 1] };
                    rf += (ih - 1) * jump;
                    jump *= *conv_stride;
                    continue;
                }
                _ => continue,
            };
            rf += (k - 1) * jump;
            jump *= s;
        }
        Ok(ConvArithmetic { total_stride: jump, receptive_field: rf })
    }

    /// Forward pass on a batch. Returns the tape plus per-layer output vars;
    /// `layer_out[i]` is the activation after layer `i` (softmax layers pass
    /// logits through untouched).
    pub fn forward(&self, batch: &Tensor, training: bool, dropout_rate: f64, seed: u64) -> Result<ForwardPass> {
        let (_, h, w, d) = batch.dims4()?;
        let (th, tw, td) = self.training_input;
        if d != td {
            return Err(Error::Dimension(format!("input has {d} channels, network expects {td}")));
        }
        match self.mode {
            NetMode::FixedInput => {
                if (h, w) != (th, tw) {
                    return Err(Error::Geometry(format!(
                        "fixed-input network expects {th}x{tw}, got {h}x{w}"
                    )));
                }
            }
            NetMode::FullyConvolutional => {
                if h < th || w < tw {
                    return Err(Error::Geometry(format!(
                        "input {h}x{w} smaller than training size {th}x{tw}"
                    )));
                }
                // shape chain below rejects non-integral arithmetic
                self.shape_chain((h, w, d))?;
            }
        }

        let mut tape = Tape::new();
        let batch4 = if batch.rank() == 3 {
            batch.reshaped(&[1, h, w, d])?
        } else {
            batch.clone()
        };
        let input = tape.leaf(batch4);
        let mut weight_vars: Vec<Option<(Var, Var)>> = Vec::with_capacity(self.layers.len());
        for lw in &self.weights {
            match (&lw.w, &lw.b) {
                (Some(w), Some(b)) => {
                    let wv = tape.leaf(w.clone());
                    let bv = tape.leaf(b.clone());
                    weight_vars.push(Some((wv, bv)));
                }
                _ => weight_vars.push(None),
            }
        }

        let mut cur = input;
        let mut layer_out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            cur = match layer {
                LayerSpec::Conv { stride, pad, .. } => {
                    let (wv, bv) = weight_vars[i].expect("conv has weights");
                    tape.conv2d(cur, wv, bv, *stride, *pad)?
                }
                LayerSpec::ConvFromFc { stride, .. } => {
                    let (wv, bv) = weight_vars[i].expect("conv_from_fc has weights");
                    tape.conv2d(cur, wv, bv, *stride, 0)?
                }
                LayerSpec::MaxPool { window, stride } => tape.maxpool2d(cur, *window, *stride)?,
                LayerSpec::Relu => tape.relu(cur),
                LayerSpec::Dropout => {
                    tape.dropout(cur, dropout_rate, training, derive_seed(seed, &format!("dropout{i}")))?
                }
                LayerSpec::FullyConnected { .. } => {
                    let (wv, bv) = weight_vars[i].expect("fc has weights");
                    tape.fully_connected(cur, wv, bv)?
                }
                LayerSpec::Softmax => cur,
            };
            layer_out.push(cur);
        }
        Ok(ForwardPass { tape, input, weight_vars, layer_out })
    }

    /// Pre-softmax class scores, one row per batch element. In fully
    /// convolutional mode the head's spatial score map is averaged.
    pub fn class_scores(&self, batch: &Tensor) -> Result<Tensor> {
        let mut fwd = self.forward(batch, false, 0.0, 0)?;
        let head = self
            .head_layer()
            .ok_or_else(|| Error::UnsupportedTopology("no classifier head".into()))?;
        let head_var = fwd.layer_out[head];
        let v = fwd.tape.value(head_var);
        if v.rank() == 4 {
            let pooled = fwd.tape.spatial_mean(head_var)?;
            Ok(fwd.tape.value(pooled).clone())
        } else {
            Ok(v.clone())
        }
    }
}

pub struct ForwardPass {
    pub tape: Tape,
    pub input: Var,
    pub weight_vars: Vec<Option<(Var, Var)>>,
    pub layer_out: Vec<Var>,
}

/// Builds the MiniF classifier for a square `input_size` image with three
/// channels: two conv+pool stages, two hidden FC layers of width
/// `feature_dim`, and a softmax head over `num_classes`.
///
/// The geometry template needs `input_size` divisible by 16; the first conv
/// uses kernel `input_size/8` and stride `input_size/16`, which together
/// with the fixed tail gives receptive field `input_size` and total stride
/// `input_size/2`.
pub fn build_minif(input_size: usize, num_classes: usize, feature_dim: usize, seed: u64) -> Result<Network> {
    if num_classes < 2 {
        return Err(Error::InvalidArgument(format!(
            "softmax over {num_classes} class(es) is degenerate; need at least 2"
        )));
    }
    if feature_dim == 0 {
        return Err(Error::InvalidArgument("feature_dim must be positive".into()));
    }
    if input_size < 16 || input_size % 16 != 0 {
        return Err(Error::Geometry(format!(
            "MiniF geometry needs input_size divisible by 16, got {input_size}"
        )));
    }
    let s1 = input_size / 16;
    let layers = vec![
        LayerSpec::Conv { filter: 2 * s1, stride: s1, pad: 0, out_channels: MINIF_STAGE1_CHANNELS },
        LayerSpec::Relu,
        LayerSpec::MaxPool { window: 3, stride: 2 },
        LayerSpec::Conv { filter: 3, stride: 1, pad: 0, out_channels: MINIF_STAGE2_CHANNELS },
        LayerSpec::Relu,
        LayerSpec::MaxPool { window: 3, stride: 2 },
        LayerSpec::FullyConnected { out: feature_dim, conv_stride: 2 },
        LayerSpec::Relu,
        LayerSpec::Dropout,
        LayerSpec::FullyConnected { out: feature_dim, conv_stride: 1 },
        LayerSpec::Relu,
        LayerSpec::Dropout,
        LayerSpec::FullyConnected { out: num_classes, conv_stride: 1 },
        LayerSpec::Softmax,
    ];
    let net = Network::from_layers(layers, (input_size, input_size, 3), seed)?;

    let arith = net.conv_arithmetic()?;
    if arith.receptive_field != input_size || arith.total_stride * 2 != input_size {
        return Err(Error::Geometry(format!(
            "receptive field {} / stride {} do not satisfy R = input = 2S for input {input_size}",
            arith.receptive_field, arith.total_stride
        )));
    }
    // the 1.5x-sided input must chain to a 2x2 score map
    let sliding = input_size + arith.total_stride;
    net.shape_chain((sliding, sliding, 3))?;
    Ok(net)
}

/// Rewrites every fully connected layer as a convolution: the first becomes
/// a conv whose filter equals its input activation's spatial size, later
/// ones become 1x1 convs. Weights are reshaped, never retrained, so outputs
/// on the original input size are unchanged.
pub fn convolutionalize(net: &Network) -> Result<Network> {
    if net.mode == NetMode::FullyConvolutional {
        return Err(Error::UnsupportedTopology("network is already fully convolutional".into()));
    }
    let shapes = net.shape_chain(net.training_input)?;
    let mut out = net.clone();
    out.mode = NetMode::FullyConvolutional;
    if !net.layers.iter().any(|l| matches!(l, LayerSpec::FullyConnected { .. })) {
        return Ok(out);
    }

    for i in 0..net.layers.len() {
        let LayerSpec::FullyConnected { out: k, conv_stride } = net.layers[i] else {
            continue;
        };
        let (ih, iw, id) = if i == 0 { net.training_input } else { shapes[i - 1] };
        let fc_w = net.weights[i]
            .w
            .as_ref()
            .ok_or_else(|| Error::UnsupportedTopology(format!("fc layer {i} has no weights")))?;
        let replaced_params = fc_w.len() + k;
        // FC weight rows are unrolled (y, x, c); conv layout is
        // (ky, kx, c_in, c_out), so the reshape is a transpose of the
        // output dimension to the innermost position.
        let hwd = ih * iw * id;
        let mut conv_w = vec![0.0; hwd * k];
        let fd = fc_w.data();
        for j in 0..k {
            for p in 0..hwd {
                conv_w[p * k + j] = fd[j * hwd + p];
            }
        }
        out.layers[i] = LayerSpec::ConvFromFc {
            filter_h: ih,
            filter_w: iw,
            stride: conv_stride,
            out_channels: k,
            replaced_params,
        };
        out.weights[i] = LayerWeights {
            w: Some(Tensor::new(&[ih, iw, id, k], conv_w)?),
            b: net.weights[i].b.clone(),
        };
    }
    // conversion must preserve the shape chain on the training input
    out.shape_chain(out.training_input)?;
    Ok(out)
}

/// Evaluates a fully convolutional network on `image` and returns the
/// spatial score map at the requested tap. Position `(i, j)` of the map
/// equals the fixed-input network applied at input offset
/// `(i * total_stride, j * total_stride)`.
pub fn sliding_scores(net: &Network, image: &Tensor, tap: ScoreTap) -> Result<Tensor> {
    if net.mode != NetMode::FullyConvolutional {
        return Err(Error::UnsupportedTopology(
            "sliding_scores requires a fully convolutional network".into(),
        ));
    }
    let fwd = net.forward(image, false, 0.0, 0)?;
    let var = match tap {
        ScoreTap::Classes => {
            fwd.layer_out[net.head_layer().ok_or_else(|| {
                Error::UnsupportedTopology("no classifier head".into())
            })?]
        }
        ScoreTap::Features => fwd.layer_out[net.feature_tap()?],
    };
    Ok(fwd.tape.value(var).clone())
}

/// Arithmetic mean over the spatial positions of a score map, yielding one
/// vector of the map's channel width.
pub fn average_head(score_map: &Tensor) -> Result<Tensor> {
    let (n, _, _, c) = score_map.dims4()?;
    if n != 1 {
        return Err(Error::Dimension(format!("average_head expects a single map, got batch {n}")));
    }
    let map4 = if score_map.rank() == 3 {
        let s = score_map.shape();
        score_map.reshaped(&[1, s[0], s[1], s[2]])?
    } else {
        score_map.clone()
    };
    let mean = crate::ops::spatial_mean_forward(&map4)?;
    mean.reshaped(&[c])
}

/// The transfer feature vector for one image: sliding feature map, then
/// spatial averaging. Dropout is inactive; the result is deterministic.
pub fn extract_features(net: &Network, image: &Tensor) -> Result<Tensor> {
    let map = sliding_scores(net, image, ScoreTap::Features)?;
    average_head(&map)
}

/// Batched variant of [`extract_features`]: one row per input image. All
/// images must share one shape so the forward pass can batch them.
pub fn extract_features_batch(net: &Network, images: &[Tensor]) -> Result<Vec<Vec<f64>>> {
    if images.is_empty() {
        return Ok(Vec::new());
    }
    let (h, w, d) = {
        let (_, h, w, d) = images[0].dims4()?;
        (h, w, d)
    };
    let mut data = Vec::with_capacity(images.len() * h * w * d);
    for img in images {
        let (_, ih, iw, id) = img.dims4()?;
        if (ih, iw, id) != (h, w, d) {
            return Err(Error::Dimension("extract_features_batch: mixed image shapes".into()));
        }
        data.extend_from_slice(img.data());
    }
    let batch = Tensor::new(&[images.len(), h, w, d], data)?;
    let fwd = net.forward(&batch, false, 0.0, 0)?;
    let tap = net.feature_tap()?;
    let map = fwd.tape.value(fwd.layer_out[tap]);
    let pooled = crate::ops::spatial_mean_forward(map)?;
    let (_, c) = pooled.batch_view();
    Ok(pooled.data().chunks(c).map(|r| r.to_vec()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::max_rel_err;

    fn rand_image(h: usize, w: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::new(&[h, w, 3], (0..h * w * 3).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn minif_geometry_and_feature_dim() {
        let net = build_minif(64, 3, 256, 1).unwrap();
        let arith = net.conv_arithmetic().unwrap();
        assert_eq!(arith.total_stride, 32);
        assert_eq!(arith.receptive_field, 64);
        assert_eq!(net.num_classes(), 3);
        assert_eq!(net.feature_dim().unwrap(), 256);
        // converted net on 96x96 must give a 2x2 pre-head map
        let conv = convolutionalize(&net).unwrap();
        let shapes = conv.shape_chain((96, 96, 3)).unwrap();
        let tap = conv.feature_tap().unwrap();
        assert_eq!(shapes[tap], (2, 2, 256));
    }

    #[test]
    fn minif_rejects_single_class_and_bad_size() {
        assert!(matches!(build_minif(64, 1, 32, 1), Err(Error::InvalidArgument(_))));
        assert!(matches!(build_minif(60, 3, 32, 1), Err(Error::Geometry(_))));
    }

    #[test]
    fn conversion_preserves_outputs_on_training_size() {
        let net = build_minif(16, 3, 24, 7).unwrap();
        let conv = convolutionalize(&net).unwrap();
        let img = rand_image(16, 16, 3);
        let orig = net.class_scores(&img).unwrap();
        let converted = conv.class_scores(&img).unwrap();
        assert!(max_rel_err(orig.data(), converted.data()) < 1e-5);
    }

    #[test]
    fn conversion_without_fc_layers_is_unchanged() {
        let layers = vec![
            LayerSpec::Conv { filter: 3, stride: 1, pad: 0, out_channels: 4 },
            LayerSpec::Relu,
            LayerSpec::Conv { filter: 3, stride: 1, pad: 0, out_channels: 2 },
            LayerSpec::Softmax,
        ];
        let net = Network::from_layers(layers, (8, 8, 3), 5).unwrap();
        let conv = convolutionalize(&net).unwrap();
        assert_eq!(conv.layers, net.layers);
        assert_eq!(conv.weights, net.weights);
        assert_eq!(conv.mode, NetMode::FullyConvolutional);
    }

    #[test]
    fn conversion_rejects_fc_before_conv() {
        let layers = vec![
            LayerSpec::FullyConnected { out: 4, conv_stride: 1 },
            LayerSpec::Conv { filter: 1, stride: 1, pad: 0, out_channels: 2 },
        ];
        assert!(Network::from_layers(layers, (2, 2, 1), 0).is_err());
    }

    #[test]
    fn sliding_map_matches_explicit_crops() {
        let net = build_minif(16, 3, 16, 11).unwrap();
        let conv = convolutionalize(&net).unwrap();
        let stride = net.conv_arithmetic().unwrap().total_stride;
        assert_eq!(stride, 8);
        let big = rand_image(24, 24, 13);
        let map = sliding_scores(&conv, &big, ScoreTap::Classes).unwrap();
        assert_eq!(map.shape(), &[1, 2, 2, 3]);
        for i in 0..2 {
            for j in 0..2 {
                let mut crop = Tensor::zeros(&[16, 16, 3]);
                for y in 0..16 {
                    for x in 0..16 {
                        for c in 0..3 {
                            crop.data_mut()[(y * 16 + x) * 3 + c] =
                                big.data()[((i * stride + y) * 24 + (j * stride + x)) * 3 + c];
                        }
                    }
                }
                let direct = net.class_scores(&crop).unwrap();
                let at: Vec<f64> =
                    (0..3).map(|c| map.data()[((i * 2) + j) * 3 + c]).collect();
                assert!(
                    max_rel_err(direct.data(), &at) < 1e-4,
                    "position ({i},{j}) err {}",
                    max_rel_err(direct.data(), &at)
                );
            }
        }
    }

    #[test]
    fn sliding_on_training_size_is_single_position() {
        let net = build_minif(16, 2, 8, 2).unwrap();
        let conv = convolutionalize(&net).unwrap();
        let img = rand_image(16, 16, 5);
        let map = sliding_scores(&conv, &img, ScoreTap::Classes).unwrap();
        assert_eq!(map.shape(), &[1, 1, 1, 2]);
        let direct = net.class_scores(&img).unwrap();
        assert!(max_rel_err(direct.data(), map.data()) < 1e-10);
    }

    #[test]
    fn constant_input_gives_constant_map() {
        let net = build_minif(16, 2, 8, 9).unwrap();
        let conv = convolutionalize(&net).unwrap();
        let img = Tensor::filled(&[32, 32, 3], 0.4);
        let map = sliding_scores(&conv, &img, ScoreTap::Classes).unwrap();
        let (_, mh, mw, c) = map.dims4().unwrap();
        assert_eq!((mh, mw), (3, 3));
        let first: Vec<f64> = map.data()[..c].to_vec();
        for p in 1..mh * mw {
            let row = &map.data()[p * c..(p + 1) * c];
            assert!(max_rel_err(&first, row) < 1e-9);
        }
    }

    #[test]
    fn average_head_basics() {
        let v = Tensor::new(&[1, 1, 1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(average_head(&v).unwrap().data(), &[1.0, 2.0, 3.0]);

        // four distinct vectors -> elementwise mean: (1+2+3+4)/4 = 2.5 etc.
        let m = Tensor::new(
            &[1, 2, 2, 2],
            vec![1.0, 10.0, 2.0, 20.0, 3.0, 30.0, 4.0, 40.0],
        )
        .unwrap();
        let avg = average_head(&m).unwrap();
        assert_eq!(avg.data(), &[2.5, 25.0]);
    }

    #[test]
    fn average_head_permutation_invariant() {
        let m = Tensor::new(&[1, 2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let p = Tensor::new(&[1, 2, 2, 1], vec![4.0, 3.0, 2.0, 1.0]).unwrap();
        assert_eq!(average_head(&m).unwrap().data(), average_head(&p).unwrap().data());
    }

    #[test]
    fn conv_from_fc_has_no_more_params_than_fc() {
        let net = build_minif(16, 3, 24, 4).unwrap();
        let conv = convolutionalize(&net).unwrap();
        for (i, layer) in conv.layers.iter().enumerate() {
            if let LayerSpec::ConvFromFc { replaced_params, .. } = layer {
                let have = conv.weights[i].w.as_ref().unwrap().len()
                    + conv.weights[i].b.as_ref().unwrap().len();
                assert!(have <= *replaced_params);
            }
        }
    }

    #[test]
    fn extract_features_deterministic_and_matches_fixed_path() {
        let net = build_minif(16, 3, 12, 21).unwrap();
        let conv = convolutionalize(&net).unwrap();
        let img = rand_image(16, 16, 31);
        let f1 = extract_features(&conv, &img).unwrap();
        let f2 = extract_features(&conv, &img).unwrap();
        assert_eq!(f1.data(), f2.data());
        assert_eq!(f1.len(), 12);

        // on a training-size input the feature equals the fixed net's hidden activation
        let fwd = net.forward(&img, false, 0.0, 0).unwrap();
        let tap = net.feature_tap().unwrap();
        let hidden = fwd.tape.value(fwd.layer_out[tap]);
        assert!(max_rel_err(hidden.data(), f1.data()) < 1e-6);

        let zero = Tensor::zeros(&[16, 16, 3]);
        assert!(extract_features(&conv, &zero).unwrap().all_finite());
    }

    #[test]
    fn batch_extraction_matches_single() {
        let net = build_minif(16, 3, 12, 33).unwrap();
        let conv = convolutionalize(&net).unwrap();
        let imgs: Vec<Tensor> = (0..3).map(|s| rand_image(16, 16, 100 + s)).collect();
        let batch = extract_features_batch(&conv, &imgs).unwrap();
        for (i, img) in imgs.iter().enumerate() {
            let single = extract_features(&conv, img).unwrap();
            assert!(max_rel_err(single.data(), &batch[i]) < 1e-9);
        }
    }

    #[test]
    fn fully_conv_rejects_non_integral_input() {
        let net = build_minif(64, 3, 16, 1).unwrap();
        let conv = convolutionalize(&net).unwrap();
        // 80 = 64 + 16 does not chain through the stride-2 tail
        let img = rand_image(80, 80, 1);
        assert!(matches!(
            sliding_scores(&conv, &img, ScoreTap::Classes),
            Err(Error::Geometry(_))
        ));
    }
}

//! Minibatched training with momentum, mirroring/cropping augmentation,
//! and best-validation-checkpoint selection.

use crate::augment::{center_crop, mirror, random_crop};
use crate::error::{Error, Result};
use crate::net::{NetMode, Network};
use crate::optim::SgdState;
use crate::seed::derive_seed;
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A labeled image collection the trainer can draw batches from. Images may
/// be produced lazily (rendered or decoded on demand).
pub trait BatchSource: Sync {
    fn len(&self) -> usize;
    fn label(&self, i: usize) -> usize;
    fn image(&self, i: usize) -> Result<Tensor>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// In-memory batch source.
pub struct ImageSet {
    pub images: Vec<Tensor>,
    pub labels: Vec<usize>,
}

impl BatchSource for ImageSet {
    fn len(&self) -> usize {
        self.images.len()
    }
    fn label(&self, i: usize) -> usize {
        self.labels[i]
    }
    fn image(&self, i: usize) -> Result<Tensor> {
        Ok(self.images[i].clone())
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Multiplicative decay applied to the learning rate each iteration
    /// (1.0 keeps it constant).
    pub lr_decay: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub max_iters: usize,
    pub dropout_rate: f64,
    pub mirror_augment: bool,
    pub seed: u64,
    /// Validation cadence in iterations; also controls checkpoint selection.
    pub eval_every: usize,
    /// Stop as soon as a validation accuracy reaches this value.
    pub stop_at_val_acc: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        // Desk-scale default rate; large pre-trained regimes typically
        // fine-tune several orders of magnitude lower.
        TrainConfig {
            learning_rate: 1e-3,
            lr_decay: 1.0,
            momentum: 0.9,
            batch_size: 32,
            max_iters: 500,
            dropout_rate: 0.5,
            mirror_augment: true,
            seed: 0,
            eval_every: 100,
            stop_at_val_acc: None,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.learning_rate < 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument("learning rate must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument("momentum must be in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidArgument("dropout rate must be in [0, 1)".into()));
        }
        if self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::InvalidArgument("batch_size and eval_every must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    /// The checkpoint with the best validation accuracy seen.
    pub net: Network,
    pub loss_curve: Vec<(usize, f64)>,
    pub val_curve: Vec<(usize, f64)>,
    pub best_val_acc: f64,
    pub best_iter: usize,
}

impl TrainRun {
    /// First evaluation iteration whose validation accuracy reached `thr`.
    pub fn iterations_to_accuracy(&self, thr: f64) -> Option<usize> {
        self.val_curve.iter().find(|(_, a)| *a >= thr).map(|(i, _)| *i)
    }
}

/// Fits a source image to the network's expected input: fixed-input
/// networks crop (randomly in training, centered otherwise), fully
/// convolutional networks take the image as-is.
fn fit_input(net: &Network, img: Tensor, training: bool, seed: u64) -> Result<Tensor> {
    let (th, tw, _) = net.training_input;
    let (_, h, w, _) = img.dims4()?;
    if net.mode == NetMode::FixedInput && (h, w) != (th, tw) {
        if th != tw {
            return Err(Error::Geometry("cropping requires a square network input".into()));
        }
        if training {
            random_crop(&img, th, seed)
        } else {
            center_crop(&img, th)
        }
    } else {
        Ok(img)
    }
}

fn assemble_batch(
    net: &Network,
    src: &dyn BatchSource,
    indices: &[usize],
    training: bool,
    mirror_augment: bool,
    seed: u64,
) -> Result<(Tensor, Vec<usize>)> {
    let mut data: Vec<f64> = Vec::new();
    let mut labels = Vec::with_capacity(indices.len());
    let mut shape = (0, 0, 0);
    for (slot, &i) in indices.iter().enumerate() {
        let mut img = src.image(i)?;
        if training && mirror_augment {
            img = mirror(&img, derive_seed(seed, &format!("mirror{slot}")))?;
        }
        let img = fit_input(net, img, training, derive_seed(seed, &format!("crop{slot}")))?;
        let (_, h, w, d) = img.dims4()?;
        if slot == 0 {
            shape = (h, w, d);
            data.reserve(indices.len() * h * w * d);
        } else if shape != (h, w, d) {
            return Err(Error::Dimension("batch mixes image shapes".into()));
        }
        data.extend_from_slice(img.data());
        labels.push(src.label(i));
    }
    let (h, w, d) = shape;
    Ok((Tensor::new(&[indices.len(), h, w, d], data)?, labels))
}

/// Mean argmax accuracy of the network's class scores over a source.
pub fn evaluate(net: &Network, src: &dyn BatchSource) -> Result<f64> {
    if src.is_empty() {
        return Err(Error::Data("cannot evaluate on an empty source".into()));
    }
    let k = net.num_classes();
    let mut correct = 0usize;
    let all: Vec<usize> = (0..src.len()).collect();
    for chunk in all.chunks(64) {
        let (batch, labels) = assemble_batch(net, src, chunk, false, false, 0)?;
        let scores = net.class_scores(&batch)?;
        for (n, &label) in labels.iter().enumerate() {
            let row = &scores.data()[n * k..(n + 1) * k];
            let pred = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(j, _)| j)
                .unwrap();
            if pred == label {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / src.len() as f64)
}

/// Trains `net` on `train_src`, tracking validation accuracy on `val_src`
/// and returning the best-validation checkpoint. A zero learning rate
/// leaves the weights untouched (useful as a dry run).
pub fn train(
    net: &Network,
    train_src: &dyn BatchSource,
    val_src: &dyn BatchSource,
    cfg: &TrainConfig,
) -> Result<TrainRun> {
    cfg.validate()?;
    if train_src.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    let k = net.num_classes();
    for i in 0..train_src.len() {
        let l = train_src.label(i);
        if l >= k {
            return Err(Error::InvalidArgument(format!(
                "training label {l} out of range for {k} classes (record {i})"
            )));
        }
    }

    let mut current = net.clone();
    let mut sgd = if cfg.learning_rate > 0.0 {
        Some(SgdState::new(cfg.learning_rate, cfg.momentum, &current.params())?)
    } else {
        None
    };

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "batches"));
    let mut loss_curve = Vec::new();
    let mut val_curve = Vec::new();
    let mut best_val_acc = f64::NEG_INFINITY;
    let mut best_iter = 0;
    let mut best_net = current.clone();

    for iter in 0..cfg.max_iters {
        let indices: Vec<usize> =
            (0..cfg.batch_size).map(|_| rng.gen_range(0..train_src.len())).collect();
        let iter_seed = derive_seed(cfg.seed, &format!("iter{iter}"));
        let (batch, labels) =
            assemble_batch(&current, train_src, &indices, true, cfg.mirror_augment, iter_seed)?;

        let mut fwd = current.forward(&batch, true, cfg.dropout_rate, iter_seed)?;
        let head = fwd.layer_out[current.head_layer().unwrap()];
        let logits = if fwd.tape.value(head).rank() == 4 {
            fwd.tape.spatial_mean(head)?
        } else {
            head
        };
        let loss_var = fwd.tape.softmax_xent(logits, &labels)?;
        let loss = fwd.tape.value(loss_var).data()[0];
        if !loss.is_finite() {
            return Err(Error::Diverged(format!("loss became {loss} at iteration {iter}")));
        }
        loss_curve.push((iter, loss));

        if let Some(sgd) = sgd.as_mut() {
            fwd.tape.backward(loss_var)?;
            let mut grads: Vec<Vec<f64>> = Vec::new();
            for wv in fwd.weight_vars.iter().flatten() {
                for v in [wv.0, wv.1] {
                    grads.push(
                        fwd.tape
                            .grad(v)
                            .map(|g| g.to_vec())
                            .unwrap_or_else(|| vec![0.0; fwd.tape.value(v).len()]),
                    );
                }
            }
            sgd.learning_rate = cfg.learning_rate * cfg.lr_decay.powi(iter as i32);
            let grad_refs: Vec<&[f64]> = grads.iter().map(|g| g.as_slice()).collect();
            let mut params = current.params_mut();
            sgd.step(&mut params, &grad_refs)?;
        }

        let last = iter + 1 == cfg.max_iters;
        if (iter + 1) % cfg.eval_every == 0 || last {
            let acc = if val_src.is_empty() { 0.0 } else { evaluate(&current, val_src)? };
            val_curve.push((iter + 1, acc));
            if acc > best_val_acc {
                best_val_acc = acc;
                best_iter = iter + 1;
                best_net = current.clone();
            }
            if cfg.stop_at_val_acc.is_some_and(|thr| acc >= thr) {
                break;
            }
        }
    }

    Ok(TrainRun { net: best_net, loss_curve, val_curve, best_val_acc, best_iter })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::LayerSpec;

    fn tiny_net(seed: u64) -> Network {
        let layers = vec![
            LayerSpec::Conv { filter: 3, stride: 1, pad: 0, out_channels: 4 },
            LayerSpec::Relu,
            LayerSpec::MaxPool { window: 2, stride: 2 },
            LayerSpec::FullyConnected { out: 2, conv_stride: 1 },
            LayerSpec::Softmax,
        ];
        Network::from_layers(layers, (8, 8, 3), seed).unwrap()
    }

    /// Red-dominant tiles are class 0, blue-dominant are class 1.
    fn separable_set(n: usize, seed: u64) -> ImageSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let class = i % 2;
            let mut data = Vec::with_capacity(8 * 8 * 3);
            for _ in 0..64 {
                let noise: f64 = rng.gen_range(0.0..0.2);
                let strong = 0.8 + noise;
                let weak = noise;
                if class == 0 {
                    data.extend_from_slice(&[strong, weak, weak]);
                } else {
                    data.extend_from_slice(&[weak, weak, strong]);
                }
            }
            images.push(Tensor::new(&[8, 8, 3], data).unwrap());
            labels.push(class);
        }
        ImageSet { images, labels }
    }

    #[test]
    fn overfits_separable_tiles() {
        let net = tiny_net(3);
        let set = separable_set(32, 17);
        let cfg = TrainConfig {
            learning_rate: 0.05,
            momentum: 0.9,
            batch_size: 16,
            max_iters: 200,
            dropout_rate: 0.0,
            mirror_augment: false,
            eval_every: 50,
            seed: 5,
            ..TrainConfig::default()
        };
        let run = train(&net, &set, &set, &cfg).unwrap();
        assert!(run.best_val_acc == 1.0, "accuracy {}", run.best_val_acc);
        let final_loss = run.loss_curve.last().unwrap().1;
        assert!(final_loss < 0.05, "final loss {final_loss}");
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let net = tiny_net(4);
        let set = separable_set(8, 2);
        let cfg = TrainConfig {
            learning_rate: 0.0,
            batch_size: 4,
            max_iters: 10,
            dropout_rate: 0.0,
            mirror_augment: false,
            eval_every: 5,
            seed: 1,
            ..TrainConfig::default()
        };
        let run = train(&net, &set, &set, &cfg).unwrap();
        for (a, b) in run.net.params().iter().zip(net.params()) {
            assert_eq!(a.data(), b.data());
        }
        // loss flat across identical batch distributions
        let losses: Vec<f64> = run.loss_curve.iter().map(|&(_, l)| l).collect();
        let spread = losses.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - losses.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread < 0.2, "loss moved by {spread} without updates");
    }

    #[test]
    fn label_out_of_range_rejected() {
        let net = tiny_net(4);
        let mut set = separable_set(8, 2);
        set.labels[3] = 2;
        let cfg = TrainConfig { max_iters: 1, ..TrainConfig::default() };
        assert!(train(&net, &set, &set, &cfg).is_err());
    }

    #[test]
    fn fixed_input_crops_larger_images() {
        let net = tiny_net(9);
        let mut set = separable_set(8, 21);
        // enlarge every image to 12x12 by tiling edge values
        set.images = set
            .images
            .iter()
            .map(|img| {
                let mut data = vec![0.0; 12 * 12 * 3];
                for y in 0..12 {
                    for x in 0..12 {
                        for c in 0..3 {
                            let sy = y.min(7);
                            let sx = x.min(7);
                            data[(y * 12 + x) * 3 + c] = img.data()[(sy * 8 + sx) * 3 + c];
                        }
                    }
                }
                Tensor::new(&[12, 12, 3], data).unwrap()
            })
            .collect();
        let cfg = TrainConfig {
            learning_rate: 0.05,
            batch_size: 8,
            max_iters: 60,
            dropout_rate: 0.0,
            mirror_augment: true,
            eval_every: 30,
            seed: 2,
            ..TrainConfig::default()
        };
        let run = train(&net, &set, &set, &cfg).unwrap();
        assert!(run.best_val_acc > 0.9);
    }
}

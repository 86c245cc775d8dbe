//! Forward and backward kernels for every layer the network uses.
//!
//! All kernels are pure functions from tensors to tensors. The batch
//! dimension is parallelized where it pays off; weight-gradient
//! accumulation sums per-sample partials in index order, so results do not
//! depend on the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Output side length of a conv/pool window sweep, or a geometry error when
/// the stride does not divide evenly.
pub fn out_dim(input: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be positive".into()));
    }
    let padded = input + 2 * pad;
    if padded < kernel {
        return Err(Error::Geometry(format!(
            "window {kernel} larger than padded input {padded}"
        )));
    }
    let span = padded - kernel;
    if span % stride != 0 {
        return Err(Error::Geometry(format!(
            "(({input} + 2*{pad}) - {kernel}) not divisible by stride {stride}"
        )));
    }
    Ok(span / stride + 1)
}

fn check_conv_shapes(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<(usize, usize, usize, usize, usize, usize, usize)> {
    let (n, h, wid, d_in) = x.dims4()?;
    let ws = w.shape();
    if ws.len() != 4 || ws[0] != ws[1] {
        return Err(Error::Dimension(format!(
            "conv filter must be l x l x d_in x d_out, got {ws:?}"
        )));
    }
    let (l, wd_in, d_out) = (ws[0], ws[2], ws[3]);
    if wd_in != d_in {
        return Err(Error::Dimension(format!(
            "input has {d_in} channels but filter expects {wd_in}"
        )));
    }
    if b.len() != d_out {
        return Err(Error::Dimension(format!(
            "bias length {} != output channels {d_out}",
            b.len()
        )));
    }
    Ok((n, h, wid, d_in, l, wd_in, d_out))
}

/// 2-D convolution (cross-correlation) of `x: N x H x W x d_in` with filters
/// `w: l x l x d_in x d_out` plus a per-channel bias.
pub fn conv2d_forward(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
    let (n, h, wid, d_in, l, _, d_out) = check_conv_shapes(x, w, b)?;
    let oh = out_dim(h, l, stride, pad)?;
    let ow = out_dim(wid, l, stride, pad)?;

    let xd = x.data();
    let wd = w.data();
    let bd = b.data();
    let sample_in = h * wid * d_in;
    let sample_out = oh * ow * d_out;
    let mut out = vec![0.0; n * sample_out];

    out.par_chunks_mut(sample_out).enumerate().for_each(|(ni, o)| {
        let xs = &xd[ni * sample_in..(ni + 1) * sample_in];
        let mut acc = vec![0.0; d_out];
        for oy in 0..oh {
            for ox in 0..ow {
                acc.copy_from_slice(bd);
                for ky in 0..l {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..l {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= wid as isize {
                            continue;
                        }
                        let xbase = (iy as usize * wid + ix as usize) * d_in;
                        let wbase = (ky * l + kx) * d_in * d_out;
                        for ci in 0..d_in {
                            let xv = xs[xbase + ci];
                            let wrow = &wd[wbase + ci * d_out..wbase + (ci + 1) * d_out];
                            for (a, &wv) in acc.iter_mut().zip(wrow) {
                                *a += xv * wv;
                            }
                        }
                    }
                }
                o[(oy * ow + ox) * d_out..(oy * ow + ox + 1) * d_out].copy_from_slice(&acc);
            }
        }
    });

    Tensor::new(&[n, oh, ow, d_out], out)
}

/// Gradients of `conv2d_forward` with respect to input, filters and bias.
pub fn conv2d_backward(
    x: &Tensor,
    w: &Tensor,
    stride: usize,
    pad: usize,
    gout: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (n, h, wid, d_in) = x.dims4()?;
    let ws = w.shape();
    let (l, d_out) = (ws[0], ws[3]);
    let (gn, oh, ow, gd) = gout.dims4()?;
    if gn != n || gd != d_out {
        return Err(Error::Dimension("conv2d_backward: gout shape mismatch".into()));
    }

    let xd = x.data();
    let wd = w.data();
    let gd_out = gout.data();
    let sample_in = h * wid * d_in;
    let sample_out = oh * ow * d_out;

    let mut gx = vec![0.0; n * sample_in];
    // Per-sample filter/bias partials, folded in batch order afterwards.
    let partials: Vec<(Vec<f64>, Vec<f64>)> = gx
        .par_chunks_mut(sample_in)
        .enumerate()
        .map(|(ni, gxs)| {
            let xs = &xd[ni * sample_in..(ni + 1) * sample_in];
            let gs = &gd_out[ni * sample_out..(ni + 1) * sample_out];
            let mut gw = vec![0.0; wd.len()];
            let mut gb = vec![0.0; d_out];
            for oy in 0..oh {
                for ox in 0..ow {
                    let grow = &gs[(oy * ow + ox) * d_out..(oy * ow + ox + 1) * d_out];
                    for (gbv, &g) in gb.iter_mut().zip(grow) {
                        *gbv += g;
                    }
                    for ky in 0..l {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..l {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= wid as isize {
                                continue;
                            }
                            let xbase = (iy as usize * wid + ix as usize) * d_in;
                            let wbase = (ky * l + kx) * d_in * d_out;
                            for ci in 0..d_in {
                                let xv = xs[xbase + ci];
                                let wrow = &wd[wbase + ci * d_out..wbase + (ci + 1) * d_out];
                                let gwrow = &mut gw[wbase + ci * d_out..wbase + (ci + 1) * d_out];
                                let mut gxv = 0.0;
                                for j in 0..d_out {
                                    let g = grow[j];
                                    gxv += wrow[j] * g;
                                    gwrow[j] += xv * g;
                                }
                                gxs[xbase + ci] += gxv;
                            }
                        }
                    }
                }
            }
            (gw, gb)
        })
        .collect();

    let mut gw = vec![0.0; wd.len()];
    let mut gb = vec![0.0; d_out];
    for (pw, pb) in &partials {
        for (a, b) in gw.iter_mut().zip(pw) {
            *a += b;
        }
        for (a, b) in gb.iter_mut().zip(pb) {
            *a += b;
        }
    }

    Ok((
        Tensor::new(&[n, h, wid, d_in], gx)?,
        Tensor::new(ws, gw)?,
        Tensor::new(&[d_out], gb)?,
    ))
}

/// Max pooling over `k x k` windows. Returns the pooled tensor and the flat
/// input index of each window's maximum (first occurrence wins ties, i.e.
/// the top-left-most element in scan order).
pub fn maxpool2d_forward(x: &Tensor, k: usize, stride: usize) -> Result<(Tensor, Vec<usize>)> {
    let (n, h, w, c) = x.dims4()?;
    let oh = out_dim(h, k, stride, 0)?;
    let ow = out_dim(w, k, stride, 0)?;
    let xd = x.data();
    let sample_in = h * w * c;

    let mut out = vec![0.0; n * oh * ow * c];
    let mut argmax = vec![0usize; n * oh * ow * c];
    for ni in 0..n {
        let xs = &xd[ni * sample_in..(ni + 1) * sample_in];
        for oy in 0..oh {
            for ox in 0..ow {
                for ci in 0..c {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0usize;
                    for ky in 0..k {
                        for kx in 0..k {
                            let idx = ((oy * stride + ky) * w + ox * stride + kx) * c + ci;
                            if xs[idx] > best {
                                best = xs[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    let o = ((ni * oh + oy) * ow + ox) * c + ci;
                    out[o] = best;
                    argmax[o] = ni * sample_in + best_idx;
                }
            }
        }
    }
    Ok((Tensor::new(&[n, oh, ow, c], out)?, argmax))
}

pub fn maxpool2d_backward(x_shape: &[usize], argmax: &[usize], gout: &Tensor) -> Result<Tensor> {
    let mut gx = Tensor::zeros(x_shape);
    let g = gx.data_mut();
    for (i, &src) in argmax.iter().enumerate() {
        g[src] += gout.data()[i];
    }
    Ok(gx)
}

fn check_fc_shapes(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<(usize, usize, usize)> {
    if x.rank() < 2 {
        return Err(Error::Dimension("fully_connected input must have a batch dim".into()));
    }
    let (n, hwd) = x.batch_view();
    let ws = w.shape();
    if ws.len() != 2 || ws[1] != hwd {
        return Err(Error::Dimension(format!(
            "weight shape {:?} does not accept unrolled input of length {hwd}",
            ws
        )));
    }
    let k = ws[0];
    if b.len() != k {
        return Err(Error::Dimension(format!("bias length {} != {k}", b.len())));
    }
    Ok((n, hwd, k))
}

/// Fully connected layer: `out[n] = W * unroll(x[n]) + b` with `W: k x hwd`.
/// The unroll order is the tensor's native row-major channel-last layout.
pub fn fully_connected_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (n, hwd, k) = check_fc_shapes(x, w, b)?;
    let xd = x.data();
    let wd = w.data();
    let bd = b.data();
    let mut out = vec![0.0; n * k];
    out.par_chunks_mut(k).enumerate().for_each(|(ni, o)| {
        let xs = &xd[ni * hwd..(ni + 1) * hwd];
        for j in 0..k {
            let row = &wd[j * hwd..(j + 1) * hwd];
            let mut acc = bd[j];
            for (xv, wv) in xs.iter().zip(row) {
                acc += xv * wv;
            }
            o[j] = acc;
        }
    });
    Tensor::new(&[n, k], out)
}

pub fn fully_connected_backward(
    x: &Tensor,
    w: &Tensor,
    gout: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (n, hwd) = x.batch_view();
    let ws = w.shape();
    let k = ws[0];
    if gout.shape() != [n, k] {
        return Err(Error::Dimension("fully_connected_backward: gout shape mismatch".into()));
    }
    let xd = x.data();
    let wd = w.data();
    let gd = gout.data();

    let mut gx = vec![0.0; n * hwd];
    let partials: Vec<(Vec<f64>, Vec<f64>)> = gx
        .par_chunks_mut(hwd)
        .enumerate()
        .map(|(ni, gxs)| {
            let xs = &xd[ni * hwd..(ni + 1) * hwd];
            let gs = &gd[ni * k..(ni + 1) * k];
            let mut gw = vec![0.0; wd.len()];
            let mut gb = vec![0.0; k];
            for j in 0..k {
                let g = gs[j];
                gb[j] += g;
                let row = &wd[j * hwd..(j + 1) * hwd];
                let grow = &mut gw[j * hwd..(j + 1) * hwd];
                for i in 0..hwd {
                    gxs[i] += row[i] * g;
                    grow[i] += xs[i] * g;
                }
            }
            (gw, gb)
        })
        .collect();

    let mut gw = vec![0.0; wd.len()];
    let mut gb = vec![0.0; k];
    for (pw, pb) in &partials {
        for (a, b) in gw.iter_mut().zip(pw) {
            *a += b;
        }
        for (a, b) in gb.iter_mut().zip(pb) {
            *a += b;
        }
    }
    Ok((
        Tensor::new(x.shape(), gx)?,
        Tensor::new(ws, gw)?,
        Tensor::new(&[k], gb)?,
    ))
}

pub fn relu_forward(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::new(x.shape(), data).expect("shape preserved")
}

pub fn relu_backward(x: &Tensor, gout: &Tensor) -> Tensor {
    let data = x
        .data()
        .iter()
        .zip(gout.data())
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(x.shape(), data).expect("shape preserved")
}

/// Inverted dropout: in training mode each unit is zeroed with probability
/// `rate` and survivors are scaled by `1/(1-rate)`, so inference is the
/// identity. Returns the output and the applied mask (scale factor per unit).
pub fn dropout_forward(x: &Tensor, rate: f64, training: bool, seed: u64) -> Result<(Tensor, Vec<f64>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!("dropout rate {rate} outside [0, 1)")));
    }
    if !training || rate == 0.0 {
        return Ok((x.clone(), vec![1.0; x.len()]));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep = 1.0 - rate;
    let mask: Vec<f64> = (0..x.len())
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { 1.0 / keep })
        .collect();
    let data = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
    Ok((Tensor::new(x.shape(), data)?, mask))
}

pub fn dropout_backward(mask: &[f64], gout: &Tensor) -> Tensor {
    let data = gout.data().iter().zip(mask).map(|(&g, &m)| g * m).collect();
    Tensor::new(gout.shape(), data).expect("shape preserved")
}

/// Mean over the spatial dims of an `N x H x W x C` map, giving `N x C`.
pub fn spatial_mean_forward(x: &Tensor) -> Result<Tensor> {
    let (n, h, w, c) = x.dims4()?;
    let xd = x.data();
    let inv = 1.0 / (h * w) as f64;
    let mut out = vec![0.0; n * c];
    for ni in 0..n {
        for p in 0..h * w {
            let base = (ni * h * w + p) * c;
            for ci in 0..c {
                out[ni * c + ci] += xd[base + ci];
            }
        }
    }
    for v in &mut out {
        *v *= inv;
    }
    Tensor::new(&[n, c], out)
}

pub fn spatial_mean_backward(x_shape: &[usize], gout: &Tensor) -> Result<Tensor> {
    let (n, h, w, c) = Tensor::zeros(x_shape).dims4()?;
    let inv = 1.0 / (h * w) as f64;
    let gd = gout.data();
    let mut gx = vec![0.0; n * h * w * c];
    for ni in 0..n {
        for p in 0..h * w {
            let base = (ni * h * w + p) * c;
            for ci in 0..c {
                gx[base + ci] = gd[ni * c + ci] * inv;
            }
        }
    }
    Tensor::new(x_shape, gx)
}

/// Softmax cross-entropy over `N x K` logits with integer class labels.
/// Returns the mean negative log-likelihood, the gradient with respect to
/// the logits, and the softmax probabilities.
pub fn softmax_xent(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor, Tensor)> {
    let shape = logits.shape();
    if shape.len() != 2 {
        return Err(Error::Dimension(format!("logits must be N x K, got {shape:?}")));
    }
    let (n, k) = (shape[0], shape[1]);
    if labels.len() != n {
        return Err(Error::Dimension(format!("{} labels for batch of {n}", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::InvalidArgument(format!("label {bad} out of range 0..{k}")));
    }
    let ld = logits.data();
    let mut probs = vec![0.0; n * k];
    let mut loss = 0.0;
    for ni in 0..n {
        let row = &ld[ni * k..(ni + 1) * k];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for (j, &v) in row.iter().enumerate() {
            let e = (v - m).exp();
            probs[ni * k + j] = e;
            z += e;
        }
        for j in 0..k {
            probs[ni * k + j] /= z;
        }
        loss -= probs[ni * k + labels[ni]].max(f64::MIN_POSITIVE).ln();
    }
    loss /= n as f64;

    let mut grad = probs.clone();
    let inv_n = 1.0 / n as f64;
    for ni in 0..n {
        grad[ni * k + labels[ni]] -= 1.0;
        for j in 0..k {
            grad[ni * k + j] *= inv_n;
        }
    }
    Ok((loss, Tensor::new(&[n, k], grad)?, Tensor::new(&[n, k], probs)?))
}

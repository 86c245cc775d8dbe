//! Reverse-mode differentiation over a per-forward-pass tape.
//!
//! A `Tape` records one forward evaluation as a sequence of nodes; calling
//! [`Tape::backward`] on a scalar node fills the `grad` slot of every node
//! that contributed to it. Tapes are cheap, short-lived objects: build one
//! per training step or per gradient check.

use crate::error::{Error, Result};
use crate::ops;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Record {
    Leaf,
    Conv2d { x: usize, w: usize, b: usize, stride: usize, pad: usize },
    MaxPool { x: usize, argmax: Vec<usize> },
    Fc { x: usize, w: usize, b: usize },
    Relu { x: usize },
    Dropout { x: usize, mask: Vec<f64> },
    SpatialMean { x: usize },
    SoftmaxXent { logits: usize, grad: Tensor },
}

struct Node {
    value: Tensor,
    grad: Option<Vec<f64>>,
    rec: Record,
}

pub struct Tape {
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor, rec: Record) -> Var {
        self.nodes.push(Node { value, grad: None, rec });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Record::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient of the last `backward` root with respect to node `v`.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn grad_tensor(&self, v: Var) -> Option<Tensor> {
        let node = &self.nodes[v.0];
        node.grad
            .as_ref()
            .map(|g| Tensor::new(node.value.shape(), g.clone()).expect("grad shape matches value"))
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        let out = ops::conv2d_forward(self.value(x), self.value(w), self.value(b), stride, pad)?;
        Ok(self.push(out, Record::Conv2d { x: x.0, w: w.0, b: b.0, stride, pad }))
    }

    pub fn maxpool2d(&mut self, x: Var, k: usize, stride: usize) -> Result<Var> {
        let (out, argmax) = ops::maxpool2d_forward(self.value(x), k, stride)?;
        Ok(self.push(out, Record::MaxPool { x: x.0, argmax }))
    }

    pub fn fully_connected(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let out = ops::fully_connected_forward(self.value(x), self.value(w), self.value(b))?;
        Ok(self.push(out, Record::Fc { x: x.0, w: w.0, b: b.0 }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = ops::relu_forward(self.value(x));
        self.push(out, Record::Relu { x: x.0 })
    }

    pub fn dropout(&mut self, x: Var, rate: f64, training: bool, seed: u64) -> Result<Var> {
        let (out, mask) = ops::dropout_forward(self.value(x), rate, training, seed)?;
        Ok(self.push(out, Record::Dropout { x: x.0, mask }))
    }

    pub fn spatial_mean(&mut self, x: Var) -> Result<Var> {
        let out = ops::spatial_mean_forward(self.value(x))?;
        Ok(self.push(out, Record::SpatialMean { x: x.0 }))
    }

    /// Mean softmax cross-entropy; the returned node holds the scalar loss.
    pub fn softmax_xent(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (loss, grad, _) = ops::softmax_xent(self.value(logits), labels)?;
        Ok(self.push(Tensor::scalar(loss), Record::SoftmaxXent { logits: logits.0, grad }))
    }

    fn accumulate(&mut self, idx: usize, contribution: &[f64]) {
        let node = &mut self.nodes[idx];
        match &mut node.grad {
            Some(g) => {
                for (a, b) in g.iter_mut().zip(contribution) {
                    *a += b;
                }
            }
            None => node.grad = Some(contribution.to_vec()),
        }
    }

    /// Reverse pass from a scalar node. Fills `grad` for every contributing
    /// node; nodes unreachable from `root` keep `grad = None`.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let root_len = self.nodes[root.0].value.len();
        if root_len != 1 {
            return Err(Error::InvalidArgument(
                "backward root must be a scalar node".into(),
            ));
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        self.nodes[root.0].grad = Some(vec![1.0]);

        for i in (0..=root.0).rev() {
            let gout = match &self.nodes[i].grad {
                Some(g) => Tensor::new(self.nodes[i].value.shape(), g.clone())
                    .expect("grad shape matches value"),
                None => continue,
            };
            // Split borrows: read the record, then accumulate into inputs.
            match &self.nodes[i].rec {
                Record::Leaf => {}
                Record::Conv2d { x, w, b, stride, pad } => {
                    let (x, w, b, stride, pad) = (*x, *w, *b, *stride, *pad);
                    let (gx, gw, gb) = ops::conv2d_backward(
                        &self.nodes[x].value,
                        &self.nodes[w].value,
                        stride,
                        pad,
                        &gout,
                    )?;
                    self.accumulate(x, gx.data());
                    self.accumulate(w, gw.data());
                    self.accumulate(b, gb.data());
                }
                Record::MaxPool { x, argmax } => {
                    let x = *x;
                    let argmax = argmax.clone();
                    let gx = ops::maxpool2d_backward(
                        self.nodes[x].value.shape().to_vec().as_slice(),
                        &argmax,
                        &gout,
                    )?;
                    self.accumulate(x, gx.data());
                }
                Record::Fc { x, w, b } => {
                    let (x, w, b) = (*x, *w, *b);
                    let (gx, gw, gb) =
                        ops::fully_connected_backward(&self.nodes[x].value, &self.nodes[w].value, &gout)?;
                    self.accumulate(x, gx.data());
                    self.accumulate(w, gw.data());
                    self.accumulate(b, gb.data());
                }
                Record::Relu { x } => {
                    let x = *x;
                    let gx = ops::relu_backward(&self.nodes[x].value, &gout);
                    self.accumulate(x, gx.data());
                }
                Record::Dropout { x, mask } => {
                    let x = *x;
                    let mask = mask.clone();
                    let gx = ops::dropout_backward(&mask, &gout);
                    self.accumulate(x, gx.data());
                }
                Record::SpatialMean { x } => {
                    let x = *x;
                    let gx = ops::spatial_mean_backward(
                        self.nodes[x].value.shape().to_vec().as_slice(),
                        &gout,
                    )?;
                    self.accumulate(x, gx.data());
                }
                Record::SoftmaxXent { logits, grad } => {
                    let logits = *logits;
                    let scale = gout.data()[0];
                    let scaled: Vec<f64> = grad.data().iter().map(|g| g * scale).collect();
                    self.accumulate(logits, &scaled);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_through_fc_softmax() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(&[1, 2], vec![0.5, -0.25]).unwrap());
        let w = tape.leaf(Tensor::new(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let b = tape.leaf(Tensor::zeros(&[2]));
        let logits = tape.fully_connected(x, w, b).unwrap();
        let loss = tape.softmax_xent(logits, &[0]).unwrap();
        tape.backward(loss).unwrap();
        // d loss / d logits = softmax - onehot
        let g = tape.grad(logits).unwrap();
        let p0 = (0.5f64).exp() / ((0.5f64).exp() + (-0.25f64).exp());
        assert!((g[0] - (p0 - 1.0)).abs() < 1e-12);
        assert!((g[1] - (1.0 - p0)).abs() < 1e-12);
        // identity weights: dx = dlogits
        assert_eq!(tape.grad(x).unwrap(), g);
    }

    #[test]
    fn backward_requires_scalar_root() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(&[2, 2]));
        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn unreached_nodes_have_no_grad() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(&[1, 2]));
        let unused = tape.leaf(Tensor::zeros(&[3]));
        let logits = {
            let w = tape.leaf(Tensor::new(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
            let b = tape.leaf(Tensor::zeros(&[2]));
            tape.fully_connected(x, w, b).unwrap()
        };
        let loss = tape.softmax_xent(logits, &[1]).unwrap();
        tape.backward(loss).unwrap();
        assert!(tape.grad(unused).is_none());
        assert!(tape.grad(x).is_some());
    }
}

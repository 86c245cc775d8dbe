//! Minibatch SGD with classical momentum.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-parameter velocity plus the scalar hyperparameters.
#[derive(Debug, Clone)]
pub struct SgdState {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: Vec<Vec<f64>>,
}

impl SgdState {
    pub fn new(learning_rate: f64, momentum: f64, params: &[&Tensor]) -> Result<Self> {
        if learning_rate <= 0.0 || !learning_rate.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::InvalidArgument(format!(
                "momentum must be in [0, 1), got {momentum}"
            )));
        }
        Ok(SgdState {
            learning_rate,
            momentum,
            velocity: params.iter().map(|p| vec![0.0; p.len()]).collect(),
        })
    }

    /// Classical momentum update: `v <- momentum*v - lr*g; p <- p + v`.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.velocity.len() || grads.len() != params.len() {
            return Err(Error::Dimension(format!(
                "sgd step: {} params, {} grads, {} velocity slots",
                params.len(),
                grads.len(),
                self.velocity.len()
            )));
        }
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            if p.len() != g.len() || p.len() != v.len() {
                return Err(Error::Dimension("sgd step: parameter/gradient shape mismatch".into()));
            }
            let data = p.data_mut();
            for i in 0..data.len() {
                v[i] = self.momentum * v[i] - self.learning_rate * g[i];
                data[i] += v[i];
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_momentum_is_plain_sgd() {
        let mut p0 = Tensor::new(&[2], vec![1.0, 2.0]).unwrap();
        let grads = vec![0.5, -1.0];
        let mut sgd = SgdState::new(0.1, 0.0, &[&p0]).unwrap();
        sgd.step(&mut [&mut p0], &[&grads]).unwrap();
        assert!((p0.data()[0] - 0.95).abs() < 1e-12);
        assert!((p0.data()[1] - 2.1).abs() < 1e-12);
    }

    #[test]
    fn zero_lr_rejected() {
        let p = Tensor::zeros(&[1]);
        assert!(SgdState::new(0.0, 0.9, &[&p]).is_err());
    }

    #[test]
    fn momentum_recurrence_two_steps() {
        // v1 = -0.1, v2 = 0.9*(-0.1) - 0.1 = -0.19; p2 = p0 - 0.1 - 0.19
        let mut p0 = Tensor::new(&[1], vec![3.0]).unwrap();
        let grads = vec![1.0];
        let mut sgd = SgdState::new(0.1, 0.9, &[&p0]).unwrap();
        sgd.step(&mut [&mut p0], &[&grads]).unwrap();
        sgd.step(&mut [&mut p0], &[&grads]).unwrap();
        assert!((p0.data()[0] - (3.0 - 0.1 - 0.19)).abs() < 1e-12);
    }

    #[test]
    fn mismatched_shapes_rejected() {
        let mut p = Tensor::zeros(&[2]);
        let grads = vec![1.0];
        let mut sgd = SgdState::new(0.1, 0.0, &[&p]).unwrap();
        assert!(sgd.step(&mut [&mut p], &[&grads]).is_err());
    }
}

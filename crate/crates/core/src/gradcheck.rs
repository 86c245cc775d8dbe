//! Central-difference verification of analytic gradients.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Outcome of a finite-difference sweep over every input element.
#[derive(Debug, Clone)]
pub struct FdReport {
    /// Largest relative error among checked (non-excluded) elements. The
    /// denominator is `max(|analytic|, |numeric|, 1)` so vanishing gradients
    /// are compared absolutely.
    pub max_rel_err: f64,
    pub checked: usize,
    /// Elements skipped because the one-sided derivatives disagree, i.e.
    /// the perturbation straddles a kink (ReLU at zero, pooling argmax flip).
    pub excluded: Vec<usize>,
}

/// Compares `analytic` against central differences of `f` at `x`.
///
/// `kink_tol` is the relative disagreement between forward and backward
/// one-sided differences above which an element is reported as excluded
/// rather than failed.
pub fn finite_diff_check<F>(
    f: F,
    x: &Tensor,
    analytic: &[f64],
    epsilon: f64,
    kink_tol: f64,
) -> Result<FdReport>
where
    F: Fn(&Tensor) -> f64,
{
    if epsilon <= 0.0 {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    if analytic.len() != x.len() {
        return Err(Error::Dimension(format!(
            "analytic gradient has {} elements, input has {}",
            analytic.len(),
            x.len()
        )));
    }

    let f0 = f(x);
    let mut probe = x.clone();
    let mut max_rel_err: f64 = 0.0;
    let mut checked = 0;
    let mut excluded = Vec::new();

    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + epsilon;
        let fp = f(&probe);
        probe.data_mut()[i] = orig - epsilon;
        let fm = f(&probe);
        probe.data_mut()[i] = orig;

        let central = (fp - fm) / (2.0 * epsilon);
        let fwd = (fp - f0) / epsilon;
        let bwd = (f0 - fm) / epsilon;
        let disagreement = (fwd - bwd).abs() / fwd.abs().max(bwd.abs()).max(1.0);
        if disagreement > kink_tol {
            excluded.push(i);
            continue;
        }

        let a = analytic[i];
        let err = (a - central).abs() / a.abs().max(central.abs()).max(1.0);
        max_rel_err = max_rel_err.max(err);
        checked += 1;
    }

    Ok(FdReport { max_rel_err, checked, excluded })
}

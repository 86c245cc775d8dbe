//! 1-D Gaussian mixture fitting by EM, used to bin light intensities by
//! frequency. Components are kept sorted by mean, so component index 0 is
//! always the lowest-intensity bin.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Variances are clamped to this floor, which keeps the zero-intensity
/// spike from collapsing the likelihood.
pub const VARIANCE_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    /// Mean log-likelihood after each EM iteration; nondecreasing.
    pub loglik_trace: Vec<f64>,
}

impl GmmModel {
    pub fn k(&self) -> usize {
        self.means.len()
    }

    fn log_component_density(&self, j: usize, x: f64) -> f64 {
        let var = self.variances[j];
        let d = x - self.means[j];
        -0.5 * (d * d / var + var.ln() + (2.0 * std::f64::consts::PI).ln())
    }

    /// Posterior responsibilities of each component for `x`; sums to 1.
    pub fn responsibilities(&self, x: f64) -> Vec<f64> {
        let logs: Vec<f64> = (0..self.k())
            .map(|j| self.weights[j].max(f64::MIN_POSITIVE).ln() + self.log_component_density(j, x))
            .collect();
        let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
        let z: f64 = exps.iter().sum();
        exps.iter().map(|e| e / z).collect()
    }

    /// Index of the argmax-responsibility component.
    pub fn assign(&self, x: f64) -> usize {
        let r = self.responsibilities(x);
        r.iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(j, _)| j)
            .unwrap()
    }

    fn mean_loglik(&self, values: &[f64]) -> f64 {
        let mut total = 0.0;
        for &x in values {
            let logs: Vec<f64> = (0..self.k())
                .map(|j| {
                    self.weights[j].max(f64::MIN_POSITIVE).ln() + self.log_component_density(j, x)
                })
                .collect();
            let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            total += m + logs.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
        }
        total / values.len() as f64
    }
}

/// Fits a k-component mixture to the value multiset with k-means++-style
/// seeding. Stops when the mean log-likelihood improves by less than `tol`
/// or after `max_iters` iterations.
pub fn fit_gmm1d(values: &[f64], k: usize, seed: u64, max_iters: usize, tol: f64) -> Result<GmmModel> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if values.is_empty() {
        return Err(Error::DegenerateData("no values to fit".into()));
    }
    let mut distinct: Vec<f64> = values.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    if distinct.len() < k {
        return Err(Error::DegenerateData(format!(
            "{} distinct value(s) cannot support {k} components",
            distinct.len()
        )));
    }

    let n = values.len() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++ seeding on the 1-D values
    let mut centers: Vec<f64> = vec![values[rng.gen_range(0..values.len())]];
    while centers.len() < k {
        let d2: Vec<f64> = values
            .iter()
            .map(|&v| {
                centers
                    .iter()
                    .map(|&c| (v - c) * (v - c))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            // remaining mass sits on existing centers; pick a fresh distinct value
            let unused = distinct.iter().find(|v| !centers.contains(v)).copied();
            centers.push(unused.expect("distinct count checked above"));
            continue;
        }
        let mut draw = rng.gen::<f64>() * total;
        let mut pick = values.len() - 1;
        for (i, &d) in d2.iter().enumerate() {
            draw -= d;
            if draw <= 0.0 {
                pick = i;
                break;
            }
        }
        centers.push(values[pick]);
    }

    let global_mean = values.iter().sum::<f64>() / n;
    let global_var = values.iter().map(|v| (v - global_mean).powi(2)).sum::<f64>() / n;
    let mut model = GmmModel {
        weights: vec![1.0 / k as f64; k],
        means: centers,
        variances: vec![(global_var / k as f64).max(VARIANCE_FLOOR); k],
        loglik_trace: Vec::new(),
    };

    let mut resp = vec![0.0; values.len() * k];
    for _ in 0..max_iters {
        // E step
        for (i, &x) in values.iter().enumerate() {
            let r = model.responsibilities(x);
            resp[i * k..(i + 1) * k].copy_from_slice(&r);
        }
        // M step (variance maximization constrained to var >= floor)
        for j in 0..k {
            let nj: f64 = (0..values.len()).map(|i| resp[i * k + j]).sum();
            let nj_safe = nj.max(1e-12);
            let mean = (0..values.len()).map(|i| resp[i * k + j] * values[i]).sum::<f64>() / nj_safe;
            let var = (0..values.len())
                .map(|i| resp[i * k + j] * (values[i] - mean).powi(2))
                .sum::<f64>()
                / nj_safe;
            model.weights[j] = nj / n;
            model.means[j] = mean;
            model.variances[j] = var.max(VARIANCE_FLOOR);
        }
        let ll = model.mean_loglik(values);
        let done = model
            .loglik_trace
            .last()
            .is_some_and(|prev| (ll - prev).abs() < tol);
        model.loglik_trace.push(ll);
        if done {
            break;
        }
    }

    // canonical order: ascending means
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| model.means[a].partial_cmp(&model.means[b]).unwrap());
    model.weights = order.iter().map(|&j| model.weights[j]).collect();
    model.means = order.iter().map(|&j| model.means[j]).collect();
    model.variances = order.iter().map(|&j| model.variances[j]).collect();
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k1_matches_closed_form() {
        let values = vec![1.0, 2.0, 3.0, 6.0];
        let m = fit_gmm1d(&values, 1, 0, 50, 1e-9).unwrap();
        let mean = 3.0;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
        assert!((m.means[0] - mean).abs() < 1e-9);
        assert!((m.variances[0] - var).abs() < 1e-9);
        assert!((m.weights[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn recovers_three_separated_components() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut values = Vec::new();
        for &mean in &[2.0, 20.0, 50.0] {
            for _ in 0..1000 {
                // Box-Muller
                let u1: f64 = rng.gen::<f64>().max(1e-12);
                let u2: f64 = rng.gen();
                let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                values.push(mean + z);
            }
        }
        let m = fit_gmm1d(&values, 3, 7, 200, 1e-9).unwrap();
        assert!((m.means[0] - 2.0).abs() < 0.5, "mean0 {}", m.means[0]);
        assert!((m.means[1] - 20.0).abs() < 0.5, "mean1 {}", m.means[1]);
        assert!((m.means[2] - 50.0).abs() < 0.5, "mean2 {}", m.means[2]);
    }

    #[test]
    fn loglik_trace_nondecreasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let values: Vec<f64> = (0..500)
            .map(|i| if i % 3 == 0 { rng.gen::<f64>() * 4.0 } else { 30.0 + rng.gen::<f64>() * 10.0 })
            .collect();
        let m = fit_gmm1d(&values, 3, 1, 100, 1e-12).unwrap();
        for w in m.loglik_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "loglik decreased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn degenerate_data_rejected_for_k2() {
        let values = vec![5.0; 100];
        assert!(matches!(fit_gmm1d(&values, 2, 0, 10, 1e-6), Err(Error::DegenerateData(_))));
        assert!(fit_gmm1d(&values, 1, 0, 10, 1e-6).is_ok());
    }

    #[test]
    fn responsibilities_sum_to_one() {
        let values: Vec<f64> = (0..200).map(|i| (i % 40) as f64).collect();
        let m = fit_gmm1d(&values, 3, 5, 60, 1e-9).unwrap();
        for &x in &[0.0, 7.5, 22.0, 39.0] {
            let r = m.responsibilities(x);
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn weights_sum_to_one_and_means_sorted() {
        let values: Vec<f64> = (0..300).map(|i| ((i * 17) % 60) as f64).collect();
        let m = fit_gmm1d(&values, 3, 11, 80, 1e-9).unwrap();
        assert!((m.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(m.means.windows(2).all(|w| w[0] <= w[1]));
        assert!(m.variances.iter().all(|&v| v >= VARIANCE_FLOOR));
    }
}

//! L1-regularized logistic regression by proximal gradient with
//! backtracking. The intercept is unpenalized; features are expected to be
//! standardized (the model carries the standardization it was fitted with).

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Per-column mean/std; constant columns get std 1 so they map to 0.
    pub fn fit(x: &[Vec<f64>]) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::Data("cannot standardize an empty matrix".into()));
        }
        let p = x[0].len();
        let n = x.len() as f64;
        let mut mean = vec![0.0; p];
        for row in x {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut std = vec![0.0; p];
        for row in x {
            for j in 0..p {
                std[j] += (row[j] - mean[j]).powi(2);
            }
        }
        for s in &mut std {
            *s = (*s / n).sqrt();
            if *s < 1e-12 {
                *s = 1.0;
            }
        }
        Ok(Standardizer { mean, std })
    }

    pub fn identity(p: usize) -> Self {
        Standardizer { mean: vec![0.0; p], std: vec![1.0; p] }
    }

    pub fn apply(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        x.iter()
            .map(|row| {
                row.iter()
                    .zip(self.mean.iter().zip(&self.std))
                    .map(|(v, (m, s))| (v - m) / s)
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct LogRegModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    pub standardizer: Standardizer,
    /// Composite objective after each accepted step; nonincreasing.
    pub objective_trace: Vec<f64>,
}

fn check_xy(x: &[Vec<f64>], y: &[u8]) -> Result<usize> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::Dimension(format!(
            "{} rows of features for {} labels",
            x.len(),
            y.len()
        )));
    }
    let p = x[0].len();
    for (i, row) in x.iter().enumerate() {
        if row.len() != p {
            return Err(Error::Dimension(format!("row {i} has {} of {p} features", row.len())));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("row {i} contains non-finite features")));
        }
    }
    if y.iter().any(|&l| l > 1) {
        return Err(Error::InvalidArgument("labels must be binary 0/1".into()));
    }
    Ok(p)
}

fn log1p_exp(m: f64) -> f64 {
    if m > 0.0 {
        m + (-m).exp().ln_1p()
    } else {
        m.exp().ln_1p()
    }
}

fn sigmoid(m: f64) -> f64 {
    if m >= 0.0 {
        1.0 / (1.0 + (-m).exp())
    } else {
        let e = m.exp();
        e / (1.0 + e)
    }
}

/// Mean logistic loss and its gradient at (w, b).
fn loss_grad(x: &[Vec<f64>], y: &[u8], w: &[f64], b: f64) -> (f64, Vec<f64>, f64) {
    let n = x.len() as f64;
    let mut loss = 0.0;
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    for (row, &label) in x.iter().zip(y) {
        let m: f64 = b + row.iter().zip(w).map(|(xi, wi)| xi * wi).sum::<f64>();
        loss += log1p_exp(m) - f64::from(label) * m;
        let r = sigmoid(m) - f64::from(label);
        for (g, xi) in gw.iter_mut().zip(row) {
            *g += r * xi;
        }
        gb += r;
    }
    loss /= n;
    for g in &mut gw {
        *g /= n;
    }
    (loss, gw, gb / n)
}

fn loss_only(x: &[Vec<f64>], y: &[u8], w: &[f64], b: f64) -> f64 {
    let n = x.len() as f64;
    let mut loss = 0.0;
    for (row, &label) in x.iter().zip(y) {
        let m: f64 = b + row.iter().zip(w).map(|(xi, wi)| xi * wi).sum::<f64>();
        loss += log1p_exp(m) - f64::from(label) * m;
    }
    loss / n
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Smallest L1 strength at which the solution is all-zero weights (for
/// standardized features): `max_j |mean_i x_ij (y_i - ybar)|`.
pub fn kill_threshold(x: &[Vec<f64>], y: &[u8]) -> Result<f64> {
    let p = check_xy(x, y)?;
    let n = x.len() as f64;
    let ybar = y.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let mut best: f64 = 0.0;
    for j in 0..p {
        let mut s = 0.0;
        for (row, &label) in x.iter().zip(y) {
            s += row[j] * (f64::from(label) - ybar);
        }
        best = best.max((s / n).abs());
    }
    Ok(best)
}

/// Fits on pre-standardized features; the recorded standardizer is the
/// identity. Stops when the objective improves by less than `tol`.
pub fn fit_l1_logreg(
    x: &[Vec<f64>],
    y: &[u8],
    lambda: f64,
    max_iters: usize,
    tol: f64,
) -> Result<LogRegModel> {
    fit_l1_logreg_warm(x, y, lambda, max_iters, tol, None)
}

/// Like [`fit_l1_logreg`] but optionally starting from a previous solution
/// (used for warm starts along a regularization path).
pub fn fit_l1_logreg_warm(
    x: &[Vec<f64>],
    y: &[u8],
    lambda: f64,
    max_iters: usize,
    tol: f64,
    init: Option<(&[f64], f64)>,
) -> Result<LogRegModel> {
    let p = check_xy(x, y)?;
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {lambda}")));
    }
    let (mut w, mut b) = match init {
        Some((w0, b0)) => {
            if w0.len() != p {
                return Err(Error::Dimension("warm start width mismatch".into()));
            }
            (w0.to_vec(), b0)
        }
        None => (vec![0.0; p], 0.0),
    };

    let l1 = |w: &[f64]| -> f64 { w.iter().map(|v| v.abs()).sum::<f64>() * lambda };
    let (mut loss, mut gw, mut gb) = loss_grad(x, y, &w, b);
    let mut objective = loss + l1(&w);
    let mut trace = vec![objective];
    let mut eta = 1.0f64;

    for _ in 0..max_iters {
        // backtracking on the smooth part
        let (new_w, new_b, new_loss) = loop {
            let cand_w: Vec<f64> = w
                .iter()
                .zip(&gw)
                .map(|(wi, gi)| soft_threshold(wi - eta * gi, eta * lambda))
                .collect();
            let cand_b = b - eta * gb;
            let cand_loss = loss_only(x, y, &cand_w, cand_b);
            let mut dot = (cand_b - b) * gb;
            let mut sq = (cand_b - b) * (cand_b - b);
            for i in 0..p {
                let d = cand_w[i] - w[i];
                dot += d * gw[i];
                sq += d * d;
            }
            if cand_loss <= loss + dot + sq / (2.0 * eta) + 1e-15 {
                break (cand_w, cand_b, cand_loss);
            }
            eta *= 0.5;
            if eta < 1e-12 {
                break (w.clone(), b, loss);
            }
        };

        let new_objective = new_loss + l1(&new_w);
        let improvement = objective - new_objective;
        w = new_w;
        b = new_b;
        objective = new_objective;
        trace.push(objective);
        if improvement.abs() < tol {
            break;
        }
        let (l, gww, gbb) = loss_grad(x, y, &w, b);
        loss = l;
        gw = gww;
        gb = gbb;
        eta = (eta * 1.5).min(1e4);
    }

    if w.iter().any(|v| !v.is_finite()) || !b.is_finite() {
        return Err(Error::Diverged("logistic regression weights became non-finite".into()));
    }
    Ok(LogRegModel {
        weights: w,
        intercept: b,
        lambda,
        standardizer: Standardizer::identity(p),
        objective_trace: trace,
    })
}

/// Standardizes, fits, and records the standardizer in the model.
pub fn fit_l1_logreg_raw(
    x: &[Vec<f64>],
    y: &[u8],
    lambda: f64,
    max_iters: usize,
    tol: f64,
) -> Result<LogRegModel> {
    let std = Standardizer::fit(x)?;
    let xs = std.apply(x);
    let mut model = fit_l1_logreg(&xs, y, lambda, max_iters, tol)?;
    model.standardizer = std;
    Ok(model)
}

/// `sigmoid(standardize(x) . w + b)` per row.
pub fn predict_proba(model: &LogRegModel, x: &[Vec<f64>]) -> Result<Vec<f64>> {
    let p = model.weights.len();
    for (i, row) in x.iter().enumerate() {
        if row.len() != p {
            return Err(Error::Dimension(format!(
                "row {i} has {} features, model expects {p}",
                row.len()
            )));
        }
    }
    let xs = model.standardizer.apply(x);
    Ok(xs
        .iter()
        .map(|row| {
            let m: f64 =
                model.intercept + row.iter().zip(&model.weights).map(|(a, b)| a * b).sum::<f64>();
            sigmoid(m)
        })
        .collect())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn standardized_instance(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)])
            .collect();
        let y: Vec<u8> = raw
            .iter()
            .map(|r| u8::from(0.8 * r[0] - 0.5 * r[1] + rng.gen_range(-0.5..0.5) > 0.0))
            .collect();
        let std = Standardizer::fit(&raw).unwrap();
        (std.apply(&raw), y)
    }

    #[test]
    fn large_lambda_kills_all_weights() {
        let (x, y) = standardized_instance(40, 1);
        let lmax = kill_threshold(&x, &y).unwrap();
        let model = fit_l1_logreg(&x, &y, lmax * 1.01, 2000, 1e-12).unwrap();
        assert!(model.weights.iter().all(|&w| w == 0.0), "weights {:?}", model.weights);
        let ybar = y.iter().map(|&v| f64::from(v)).sum::<f64>() / y.len() as f64;
        assert!((model.intercept - logit(ybar)).abs() < 1e-5);
    }

    #[test]
    fn lambda_zero_separable_two_points() {
        let x = vec![vec![-1.0], vec![1.0]];
        let y = vec![0u8, 1u8];
        let model = fit_l1_logreg(&x, &y, 0.0, 200, 1e-10).unwrap();
        assert!(model.weights[0] > 0.0);
    }

    #[test]
    fn objective_trace_nonincreasing() {
        let (x, y) = standardized_instance(60, 5);
        let model = fit_l1_logreg(&x, &y, 0.05, 500, 1e-12).unwrap();
        for w in model.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "objective rose {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn grid_oracle_on_two_features() {
        // coarse-to-fine exhaustive search around the optimum, against the
        // proximal path
        let (x, y) = standardized_instance(20, 42);
        let lambda = 0.1;
        let model = fit_l1_logreg(&x, &y, lambda, 20_000, 1e-14).unwrap();
        let obj = |w1: f64, w2: f64, b: f64| {
            loss_only(&x, &y, &[w1, w2], b) + lambda * (w1.abs() + w2.abs())
        };
        let mut best = f64::INFINITY;
        for i in -50..=50 {
            for j in -50..=50 {
                for k in -50..=50 {
                    best = best.min(obj(i as f64 * 0.1, j as f64 * 0.1, k as f64 * 0.1));
                }
            }
        }
        let fitted = model.objective_trace.last().unwrap();
        assert!(
            *fitted <= best + 1e-4,
            "prox objective {fitted} vs coarse grid {best}"
        );
    }

    #[test]
    fn predict_proba_shapes_and_monotonicity() {
        let model = LogRegModel {
            weights: vec![0.0],
            intercept: 0.0,
            lambda: 0.0,
            standardizer: Standardizer::identity(1),
            objective_trace: vec![],
        };
        let p = predict_proba(&model, &[vec![3.0]]).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-12);

        let model = LogRegModel { weights: vec![2.0], ..model };
        let p = predict_proba(&model, &[vec![-1.0], vec![0.0], vec![1.0]]).unwrap();
        assert!(p[0] < p[1] && p[1] < p[2]);
        // hand sigmoid at x=1: 1/(1+e^-2)
        assert!((p[2] - 1.0 / (1.0 + (-2.0f64).exp())).abs() < 1e-12);
        assert!(predict_proba(&model, &[vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn non_binary_labels_rejected() {
        let x = vec![vec![0.0]];
        assert!(fit_l1_logreg(&x, &[2u8], 0.0, 10, 1e-6).is_err());
        assert!(fit_l1_logreg(&x, &[0u8, 1u8], 0.0, 10, 1e-6).is_err());
    }

    #[test]
    fn non_finite_features_rejected() {
        let x = vec![vec![f64::NAN]];
        assert!(fit_l1_logreg(&x, &[0u8], 0.0, 10, 1e-6).is_err());
    }

    #[test]
    fn standardizer_centers_and_scales() {
        let x = vec![vec![1.0, 5.0], vec![3.0, 5.0]];
        let s = Standardizer::fit(&x).unwrap();
        let xs = s.apply(&x);
        assert!((xs[0][0] + 1.0).abs() < 1e-12);
        assert!((xs[1][0] - 1.0).abs() < 1e-12);
        // constant column maps to zero
        assert_eq!(xs[0][1], 0.0);
    }
}

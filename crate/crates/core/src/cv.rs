//! Nested cross-validation: outer folds give unbiased test metrics, inner
//! folds tune the L1 strength per outer fold with a coarse-then-fine
//! linearly spaced search. An audit log records which rows tuning touched,
//! so leakage is checkable after the fact.

use std::collections::BTreeSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::logreg::{fit_l1_logreg_warm, kill_threshold, predict_proba, LogRegModel, Standardizer};
use crate::metrics::{metrics, Metrics};
use crate::seed::derive_seed;

#[derive(Debug, Clone)]
pub struct NestedCvConfig {
    pub k_outer: usize,
    pub k_inner: usize,
    pub coarse_points: usize,
    pub fine_points: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for NestedCvConfig {
    fn default() -> Self {
        NestedCvConfig {
            k_outer: 10,
            // leave-one-outer-fold structure keeps inner folds regular
            k_inner: 9,
            coarse_points: 20,
            fine_points: 20,
            max_iters: 400,
            tol: 1e-8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub fold: usize,
    pub tuned_lambda: f64,
    pub metrics: Metrics,
}

/// Row-access record for one outer fold: everything tuning read, and the
/// held-out rows it must never have read.
#[derive(Debug, Clone)]
pub struct FoldAudit {
    pub fold: usize,
    pub tuning_rows: BTreeSet<usize>,
    pub test_rows: BTreeSet<usize>,
}

#[derive(Debug, Clone)]
pub struct CvReport {
    pub folds: Vec<FoldOutcome>,
    pub mean: Metrics,
    pub audit: Vec<FoldAudit>,
    /// Out-of-fold prediction and score per input row (each row is in
    /// exactly one outer test fold).
    pub oof_pred: Vec<u8>,
    pub oof_score: Vec<f64>,
}

impl CvReport {
    /// True when no outer-test row was touched while tuning its fold.
    pub fn leakage_free(&self) -> bool {
        self.audit.iter().all(|a| a.tuning_rows.is_disjoint(&a.test_rows))
    }

    /// CSV export: one row per fold plus a mean row.
    pub fn export_csv(&self, path: &Path) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path)?;
        wtr.write_record(["fold", "lambda", "accuracy", "f1", "precision", "recall", "auc"])?;
        let fmt_auc = |a: Option<f64>| a.map(|v| v.to_string()).unwrap_or_else(|| "undefined".into());
        for f in &self.folds {
            wtr.write_record([
                f.fold.to_string(),
                f.tuned_lambda.to_string(),
                f.metrics.accuracy.to_string(),
                f.metrics.f1.to_string(),
                f.metrics.precision.to_string(),
                f.metrics.recall.to_string(),
                fmt_auc(f.metrics.auc),
            ])?;
        }
        wtr.write_record([
            "mean".into(),
            String::new(),
            self.mean.accuracy.to_string(),
            self.mean.f1.to_string(),
            self.mean.precision.to_string(),
            self.mean.recall.to_string(),
            fmt_auc(self.mean.auc),
        ])?;
        wtr.flush()?;
        Ok(())
    }
}

/// Renders a fixed-width comparison table, one column per named report.
pub fn comparison_table(reports: &[(&str, &CvReport)]) -> String {
    let mut out = String::new();
    out.push_str(&format!("{:<12}", ""));
    for (name, _) in reports {
        out.push_str(&format!("{name:>12}"));
    }
    out.push('\n');
    let rows: [(&str, fn(&Metrics) -> Option<f64>); 5] = [
        ("Accuracy", |m| Some(m.accuracy)),
        ("F1 Score", |m| Some(m.f1)),
        ("Precision", |m| Some(m.precision)),
        ("Recall", |m| Some(m.recall)),
        ("AUC", |m| m.auc),
    ];
    for (label, get) in rows {
        out.push_str(&format!("{label:<12}"));
        for (_, report) in reports {
            match get(&report.mean) {
                Some(v) => out.push_str(&format!("{v:>12.3}")),
                None => out.push_str(&format!("{:>12}", "undef")),
            }
        }
        out.push('\n');
    }
    out
}

/// Stratified fold assignment: per-class shuffle, then round-robin.
fn stratified_folds(y: &[u8], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(), Vec::new()];
    for (i, &label) in y.iter().enumerate() {
        by_class[label as usize].push(i);
    }
    for class in &mut by_class {
        if class.len() < k {
            return Err(Error::Data(format!(
                "a class has {} samples, fewer than {k} folds",
                class.len()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    for class in &mut by_class {
        for i in (1..class.len()).rev() {
            let j = rng.gen_range(0..=i);
            class.swap(i, j);
        }
        for (pos, &idx) in class.iter().enumerate() {
            folds[pos % k].push(idx);
        }
    }
    Ok(folds)
}

fn rows_of(x: &[Vec<f64>], idx: &[usize]) -> Vec<Vec<f64>> {
    idx.iter().map(|&i| x[i].clone()).collect()
}

fn labels_of(y: &[u8], idx: &[usize]) -> Vec<u8> {
    idx.iter().map(|&i| y[i]).collect()
}

/// Mean inner-CV accuracy for each lambda in `grid`, descending-lambda warm
/// starts. Returns accuracies aligned with `grid`.
fn inner_grid_accuracy(
    x: &[Vec<f64>],
    y: &[u8],
    inner_folds: &[Vec<usize>],
    train_sets: &[Vec<usize>],
    grid: &[f64],
    cfg: &NestedCvConfig,
) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; grid.len()];
    // largest lambda first so each fit warm-starts from a sparser one
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[b].partial_cmp(&grid[a]).unwrap());

    for (fold_idx, val_rows) in inner_folds.iter().enumerate() {
        let train_rows = &train_sets[fold_idx];
        let xt = rows_of(x, train_rows);
        let yt = labels_of(y, train_rows);
        let xv = rows_of(x, val_rows);
        let yv = labels_of(y, val_rows);
        let mut warm: Option<(Vec<f64>, f64)> = None;
        for &gi in &order {
            let model = fit_l1_logreg_warm(
                &xt,
                &yt,
                grid[gi],
                cfg.max_iters,
                cfg.tol,
                warm.as_ref().map(|(w, b)| (w.as_slice(), *b)),
            )?;
            let probs = predict_proba(&model, &xv)?;
            let correct = probs
                .iter()
                .zip(&yv)
                .filter(|(p, &label)| u8::from(**p >= 0.5) == label)
                .count();
            acc[gi] += correct as f64 / yv.len() as f64;
            warm = Some((model.weights.clone(), model.intercept));
        }
    }
    for a in &mut acc {
        *a /= inner_folds.len() as f64;
    }
    Ok(acc)
}

/// Best lambda by accuracy; ties go to the larger (sparser) lambda.
fn pick_lambda(grid: &[f64], acc: &[f64]) -> (f64, usize) {
    let mut best = 0usize;
    for i in 0..grid.len() {
        if acc[i] > acc[best] || (acc[i] == acc[best] && grid[i] > grid[best]) {
            best = i;
        }
    }
    (grid[best], best)
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo.max(0.0)];
    }
    (0..n)
        .map(|i| (lo + (hi - lo) * i as f64 / (n - 1) as f64).max(0.0))
        .collect()
}

/// Evaluates one feature matrix under nested stratified cross-validation.
pub fn nested_cv(x: &[Vec<f64>], y: &[u8], cfg: &NestedCvConfig) -> Result<CvReport> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::Dimension("features and labels must align and be nonempty".into()));
    }
    let outer = stratified_folds(y, cfg.k_outer, derive_seed(cfg.seed, "outer-folds"))?;

    let fold_results: Vec<Result<(FoldOutcome, FoldAudit, Vec<(usize, u8, f64)>)>> = outer
        .par_iter()
        .enumerate()
        .map(|(fold, test_rows)| {
            let train_rows: Vec<usize> =
                (0..y.len()).filter(|i| !test_rows.contains(i)).collect();

            // standardization fit on the outer-train rows only
            let x_train_raw = rows_of(x, &train_rows);
            let y_train = labels_of(y, &train_rows);
            let standardizer = Standardizer::fit(&x_train_raw)?;
            let x_train = standardizer.apply(&x_train_raw);

            // inner folds are defined over positions within outer-train
            let inner = stratified_folds(
                &y_train,
                cfg.k_inner,
                derive_seed(cfg.seed, &format!("inner-folds-{fold}")),
            )?;
            let inner_train_sets: Vec<Vec<usize>> = (0..inner.len())
                .map(|i| {
                    (0..y_train.len())
                        .filter(|p| !inner[i].contains(p))
                        .collect()
                })
                .collect();

            let lambda_max = kill_threshold(&x_train, &y_train)?;
            let coarse = linspace(0.0, lambda_max, cfg.coarse_points);
            let coarse_acc =
                inner_grid_accuracy(&x_train, &y_train, &inner, &inner_train_sets, &coarse, cfg)?;
            let (coarse_best, idx) = pick_lambda(&coarse, &coarse_acc);

            let step = if coarse.len() > 1 { coarse[1] - coarse[0] } else { lambda_max.max(1e-6) };
            let fine = linspace(
                (coarse_best - step).max(0.0),
                coarse_best + step,
                cfg.fine_points,
            );
            let fine_acc =
                inner_grid_accuracy(&x_train, &y_train, &inner, &inner_train_sets, &fine, cfg)?;
            let (mut tuned, fine_idx) = pick_lambda(&fine, &fine_acc);
            // the coarse winner stays if the fine pass found nothing better
            if fine_acc[fine_idx] < coarse_acc[idx] {
                tuned = coarse_best;
            }

            // refit on the full outer-train, evaluate once on the held-out fold
            let mut model: LogRegModel =
                fit_l1_logreg_warm(&x_train, &y_train, tuned, cfg.max_iters * 4, cfg.tol, None)?;
            model.standardizer = standardizer;
            let x_test = rows_of(x, test_rows);
            let y_test = labels_of(y, test_rows);
            let probs = predict_proba(&model, &x_test)?;
            let preds: Vec<u8> = probs.iter().map(|&p| u8::from(p >= 0.5)).collect();
            let m = metrics(&y_test, &preds, &probs)?;

            let audit = FoldAudit {
                fold,
                tuning_rows: train_rows.iter().copied().collect(),
                test_rows: test_rows.iter().copied().collect(),
            };
            let row_preds: Vec<(usize, u8, f64)> = test_rows
                .iter()
                .zip(preds.iter().zip(&probs))
                .map(|(&row, (&p, &s))| (row, p, s))
                .collect();
            Ok((FoldOutcome { fold, tuned_lambda: tuned, metrics: m }, audit, row_preds))
        })
        .collect();

    let mut folds = Vec::with_capacity(cfg.k_outer);
    let mut audit = Vec::with_capacity(cfg.k_outer);
    let mut oof_pred = vec![0u8; y.len()];
    let mut oof_score = vec![0.0f64; y.len()];
    for r in fold_results {
        let (f, a, rows) = r?;
        folds.push(f);
        audit.push(a);
        for (row, p, s) in rows {
            oof_pred[row] = p;
            oof_score[row] = s;
        }
    }
    folds.sort_by_key(|f| f.fold);
    audit.sort_by_key(|a| a.fold);

    let k = folds.len() as f64;
    let mean = Metrics {
        accuracy: folds.iter().map(|f| f.metrics.accuracy).sum::<f64>() / k,
        f1: folds.iter().map(|f| f.metrics.f1).sum::<f64>() / k,
        precision: folds.iter().map(|f| f.metrics.precision).sum::<f64>() / k,
        recall: folds.iter().map(|f| f.metrics.recall).sum::<f64>() / k,
        auc: folds
            .iter()
            .map(|f| f.metrics.auc)
            .collect::<Option<Vec<f64>>>()
            .map(|v| v.iter().sum::<f64>() / k),
    };
    Ok(CvReport { folds, mean, audit, oof_pred, oof_score })
}

/// Conditional rates around zero mean light intensity, with their support
/// counts. `None` marks an empty conditioning set.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalRates {
    pub n_zero: usize,
    pub n_nonzero: usize,
    pub pred_poor_given_zero: Option<f64>,
    pub poor_given_zero: Option<f64>,
    pub poor_given_nonzero: Option<f64>,
}

pub fn conditional_analysis(
    labels: &[u8],
    preds: &[u8],
    mean_intensity: &[f64],
) -> Result<ConditionalRates> {
    if labels.len() != preds.len() || labels.len() != mean_intensity.len() {
        return Err(Error::Dimension("conditional_analysis inputs must align".into()));
    }
    let zero: Vec<usize> = (0..labels.len()).filter(|&i| mean_intensity[i] == 0.0).collect();
    let nonzero: Vec<usize> = (0..labels.len()).filter(|&i| mean_intensity[i] > 0.0).collect();
    let rate = |idx: &[usize], v: &[u8]| {
        if idx.is_empty() {
            None
        } else {
            Some(idx.iter().filter(|&&i| v[i] == 1).count() as f64 / idx.len() as f64)
        }
    };
    Ok(ConditionalRates {
        n_zero: zero.len(),
        n_nonzero: nonzero.len(),
        pred_poor_given_zero: rate(&zero, preds),
        poor_given_zero: rate(&zero, labels),
        poor_given_nonzero: rate(&nonzero, labels),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise_data(n: usize, p: usize, base_rate: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = (0..n).map(|_| (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let y = (0..n).map(|_| u8::from(rng.gen::<f64>() < base_rate)).collect();
        (x, y)
    }

    #[test]
    fn folds_are_stratified_disjoint_and_cover() {
        let y: Vec<u8> = (0..40).map(|i| u8::from(i % 4 == 0)).collect();
        let folds = stratified_folds(&y, 5, 3).unwrap();
        let mut seen = BTreeSet::new();
        for fold in &folds {
            for &i in fold {
                assert!(seen.insert(i), "row {i} in two folds");
            }
            let pos = fold.iter().filter(|&&i| y[i] == 1).count();
            assert!((1..=3).contains(&pos), "fold positives {pos}");
        }
        assert_eq!(seen.len(), 40);
    }

    #[test]
    fn too_few_samples_per_class_is_an_error() {
        let y = vec![1u8, 0, 0, 0, 0, 0];
        assert!(stratified_folds(&y, 3, 0).is_err());
    }

    #[test]
    fn perfect_feature_scores_every_fold() {
        let n = 60;
        let y: Vec<u8> = (0..n).map(|i| u8::from(i % 2 == 0)).collect();
        let x: Vec<Vec<f64>> =
            y.iter().map(|&l| vec![f64::from(l) * 2.0 - 1.0]).collect();
        let cfg = NestedCvConfig {
            k_outer: 5,
            k_inner: 4,
            coarse_points: 8,
            fine_points: 8,
            max_iters: 300,
            tol: 1e-9,
            seed: 2,
        };
        let report = nested_cv(&x, &y, &cfg).unwrap();
        for f in &report.folds {
            assert_eq!(f.metrics.accuracy, 1.0, "fold {}", f.fold);
        }
        assert!(report.leakage_free());
        assert_eq!(report.mean.accuracy, 1.0);
        // out-of-fold predictions cover every row correctly
        assert_eq!(report.oof_pred, y);
    }

    #[test]
    fn mean_row_is_exact_fold_average() {
        let (x, y) = noise_data(50, 3, 0.5, 9);
        let cfg = NestedCvConfig {
            k_outer: 5,
            k_inner: 4,
            coarse_points: 5,
            fine_points: 5,
            max_iters: 120,
            tol: 1e-7,
            seed: 4,
        };
        let report = nested_cv(&x, &y, &cfg).unwrap();
        let hand: f64 =
            report.folds.iter().map(|f| f.metrics.accuracy).sum::<f64>() / report.folds.len() as f64;
        assert_eq!(report.mean.accuracy, hand);
    }

    #[test]
    fn noise_features_stay_near_base_rate() {
        let mut accs = Vec::new();
        let base_rate = 0.6;
        let n = 80;
        let seeds = 10;
        for seed in 0..seeds {
            let (x, y) = noise_data(n, 6, base_rate, 100 + seed);
            let majority = {
                let pos = y.iter().filter(|&&v| v == 1).count() as f64 / n as f64;
                pos.max(1.0 - pos)
            };
            let cfg = NestedCvConfig {
                k_outer: 5,
                k_inner: 4,
                coarse_points: 8,
                fine_points: 8,
                max_iters: 150,
                tol: 1e-7,
                seed,
            };
            let report = nested_cv(&x, &y, &cfg).unwrap();
            assert!(report.leakage_free());
            accs.push(report.mean.accuracy - majority);
        }
        let mean_gap = accs.iter().sum::<f64>() / accs.len() as f64;
        let sigma = (base_rate * (1.0 - base_rate) / (n * seeds as usize) as f64).sqrt();
        assert!(
            mean_gap.abs() <= 3.0 * sigma + 0.02,
            "mean accuracy gap {mean_gap} vs 3 sigma {}",
            3.0 * sigma
        );
    }

    #[test]
    fn audit_catches_fabricated_leakage() {
        let mut audit = FoldAudit {
            fold: 0,
            tuning_rows: [1, 2, 3].into_iter().collect(),
            test_rows: [4, 5].into_iter().collect(),
        };
        let report = CvReport {
            folds: vec![],
            mean: Metrics { accuracy: 0.0, f1: 0.0, precision: 0.0, recall: 0.0, auc: None },
            audit: vec![audit.clone()],
            oof_pred: vec![],
            oof_score: vec![],
        };
        assert!(report.leakage_free());
        audit.tuning_rows.insert(4);
        let bad = CvReport { audit: vec![audit], ..report };
        assert!(!bad.leakage_free());
    }

    #[test]
    fn conditional_analysis_hand_case() {
        // four groups: two at zero intensity (one poor), two lit (none poor)
        let labels = vec![1, 0, 0, 0];
        let preds = vec![1, 1, 0, 0];
        let mi = vec![0.0, 0.0, 3.0, 8.0];
        let r = conditional_analysis(&labels, &preds, &mi).unwrap();
        assert_eq!(r.n_zero, 2);
        assert_eq!(r.n_nonzero, 2);
        assert_eq!(r.pred_poor_given_zero, Some(1.0));
        assert_eq!(r.poor_given_zero, Some(0.5));
        assert_eq!(r.poor_given_nonzero, Some(0.0));

        // all zero-light groups poor
        let r = conditional_analysis(&[1, 1], &[0, 0], &[0.0, 0.0]).unwrap();
        assert_eq!(r.poor_given_zero, Some(1.0));
        assert_eq!(r.poor_given_nonzero, None);
        assert_eq!(r.n_nonzero, 0);
    }

    #[test]
    fn comparison_table_lists_all_metrics() {
        let m = Metrics { accuracy: 0.7, f1: 0.5, precision: 0.4, recall: 0.6, auc: Some(0.75) };
        let report = CvReport {
            folds: vec![FoldOutcome { fold: 0, tuned_lambda: 0.1, metrics: m }],
            mean: m,
            audit: vec![],
            oof_pred: vec![],
            oof_score: vec![],
        };
        let table = comparison_table(&[("transfer", &report)]);
        for label in ["Accuracy", "F1 Score", "Precision", "Recall", "AUC", "transfer"] {
            assert!(table.contains(label), "missing {label} in:\n{table}");
        }
    }
}

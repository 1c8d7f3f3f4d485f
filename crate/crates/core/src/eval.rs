//! Metrics and the experiment protocol: repeated 50/25/25 splits, a grid over
//! `(k, C)` chosen on validation data, and misclassification-vs-k sweeps.
//!
//! Every `(repeat, k, C)` cell is trained independently and in parallel. The
//! split for repeat `r` comes from `seed + r`; the sample order inside repeat
//! `r` comes from a stream derived from `(seed, r)` and is shared by all cells of
//! that repeat, so curves over `k` are paired. Results are reduced in cell
//! order, which keeps parallel and serial runs identical.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{make_split, Dataset, SplitPlan, Task};
use crate::error::{MatkError, Result};
use crate::losses::IndividualLoss;
use crate::solver::{check_loss_task, train, ModelState, TrainConfig};

fn check_pair(predictions: &[f64], targets: &[f64]) -> Result<()> {
    if predictions.len() != targets.len() {
        return Err(MatkError::Shape {
            expected: targets.len(),
            got: predictions.len(),
        });
    }
    if targets.is_empty() {
        return Err(MatkError::UndefinedMetric("no samples to score".into()));
    }
    Ok(())
}

/// Class predicted from a real score; a zero score counts as `+1`.
#[inline]
pub fn sign_label(score: f64) -> f64 {
    if score >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Fraction of samples whose predicted sign disagrees with the label.
pub fn misclassification_rate(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    check_pair(predictions, targets)?;
    let wrong = predictions
        .iter()
        .zip(targets)
        .filter(|(&p, &y)| sign_label(p) != y)
        .count();
    Ok(wrong as f64 / targets.len() as f64)
}

/// `sqrt(sensitivity * specificity)`.
pub fn g_mean(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    check_pair(predictions, targets)?;
    let (mut tp, mut fn_, mut tn, mut fp) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &y) in predictions.iter().zip(targets) {
        match (y > 0.0, sign_label(p) > 0.0) {
            (true, true) => tp += 1,
            (true, false) => fn_ += 1,
            (false, false) => tn += 1,
            (false, true) => fp += 1,
        }
    }
    if tp + fn_ == 0 || tn + fp == 0 {
        return Err(MatkError::UndefinedMetric(
            "G-mean needs both classes among the targets".into(),
        ));
    }
    let sensitivity = tp as f64 / (tp + fn_) as f64;
    let specificity = tn as f64 / (tn + fp) as f64;
    Ok((sensitivity * specificity).sqrt())
}

pub fn rmse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    check_pair(predictions, targets)?;
    let sq: f64 = predictions.iter().zip(targets).map(|(p, y)| (p - y) * (p - y)).sum();
    Ok((sq / targets.len() as f64).sqrt())
}

pub fn mae(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    check_pair(predictions, targets)?;
    let abs: f64 = predictions.iter().zip(targets).map(|(p, y)| (p - y).abs()).sum();
    Ok(abs / targets.len() as f64)
}

/// Model-selection score: misclassification rate or RMSE.
pub fn primary_score(task: Task, predictions: &[f64], targets: &[f64]) -> Result<f64> {
    match task {
        Task::Classification => misclassification_rate(predictions, targets),
        Task::Regression => rmse(predictions, targets),
    }
}

/// Reported alongside the primary score: G-mean or MAE. `None` when undefined.
pub fn secondary_score(task: Task, predictions: &[f64], targets: &[f64]) -> Option<f64> {
    match task {
        Task::Classification => g_mean(predictions, targets).ok(),
        Task::Regression => mae(predictions, targets).ok(),
    }
}

/// `m` log10-spaced integers on `[1, n]`, rounded and deduplicated; always holds 1 and n.
pub fn log_k_grid(n: usize, m: usize) -> Vec<usize> {
    if n <= 1 || m < 2 {
        let mut g = vec![1, n.max(1)];
        g.dedup();
        return g;
    }
    let top = (n as f64).log10();
    let mut grid: Vec<usize> = (0..m)
        .map(|j| {
            let v = 10f64.powf(j as f64 * top / (m - 1) as f64).round() as usize;
            v.clamp(1, n)
        })
        .collect();
    grid.dedup();
    grid
}

/// `10^lo, 10^(lo+1), ..., 10^hi`.
pub fn log10_c_grid(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|e| 10f64.powi(e)).collect()
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Independent seed for a named sub-stream of `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream))
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

struct Fold {
    train: Dataset,
    val: Dataset,
    test: Dataset,
    train_seed: u64,
}

fn folds(data: &Dataset, repeats: usize, seed: u64) -> Result<Vec<Fold>> {
    (0..repeats)
        .map(|r| {
            let plan: SplitPlan = make_split(data.len(), seed.wrapping_add(r as u64))?;
            Ok(Fold {
                train: data.subset(&plan.train_idx),
                val: data.subset(&plan.val_idx),
                test: data.subset(&plan.test_idx),
                train_seed: derive_seed(seed, r as u64),
            })
        })
        .collect()
}

fn check_protocol(data: &Dataset, loss: IndividualLoss, k_values: &[usize], repeats: usize) -> Result<usize> {
    check_loss_task(loss, data.task())?;
    if repeats == 0 {
        return Err(MatkError::param("repeats must be at least 1"));
    }
    if k_values.is_empty() {
        return Err(MatkError::param("k grid is empty"));
    }
    let n_train = data.len().div_ceil(2);
    if let Some(&k) = k_values.iter().find(|&&k| k == 0 || k > n_train) {
        return Err(MatkError::param(format!(
            "k = {k} outside [1, {n_train}] (training split size)"
        )));
    }
    Ok(n_train)
}

fn fit(fold: &Fold, loss: IndividualLoss, base: &TrainConfig, k: usize, c: f64) -> Result<ModelState> {
    let cfg = TrainConfig {
        k,
        seed: fold.train_seed,
        record_every: 0,
        ..base.clone()
    };
    Ok(train(&fold.train, loss, &cfg, c)?.state)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub repeat: usize,
    pub k: usize,
    pub c: f64,
    pub val_score: f64,
    pub test_score: f64,
    /// G-mean (classification) or MAE (regression) on the test split.
    pub test_secondary: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    /// `"misclassification"` or `"rmse"`.
    pub metric: String,
    pub best_k: usize,
    pub best_c: f64,
    /// Validation score of the selected cell, averaged over repeats.
    pub val_score: f64,
    /// Test score of the selected cell, one entry per repeat.
    pub test_scores: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub cells: Vec<GridCell>,
}

impl GridSearchResult {
    /// Mean validation score of a grid cell, if it was evaluated.
    pub fn mean_val_score(&self, k: usize, c: f64) -> Option<f64> {
        let scores: Vec<f64> = self
            .cells
            .iter()
            .filter(|cell| cell.k == k && cell.c == c)
            .map(|cell| cell.val_score)
            .collect();
        (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64)
    }

    /// Best mean validation score over `C` for a fixed `k`.
    pub fn best_val_for_k(&self, k: usize) -> Option<f64> {
        let mut cs: Vec<f64> = self.cells.iter().filter(|c| c.k == k).map(|c| c.c).collect();
        cs.dedup();
        cs.into_iter()
            .filter_map(|c| self.mean_val_score(k, c))
            .min_by(f64::total_cmp)
    }
}

/// Grid search over `(k, C)`.
///
/// Each cell is trained on the training split of every repeat and scored on
/// validation. The cell with the lowest mean validation score wins (ties go to
/// the smaller `k`, then the smaller `C`), and its per-repeat test scores are
/// reported. `train_cfg.k` and `train_cfg.seed` are overridden per cell.
pub fn grid_search(
    data: &Dataset,
    loss: IndividualLoss,
    k_grid: &[usize],
    c_grid: &[f64],
    repeats: usize,
    seed: u64,
    train_cfg: &TrainConfig,
) -> Result<GridSearchResult> {
    check_protocol(data, loss, k_grid, repeats)?;
    if c_grid.is_empty() {
        return Err(MatkError::param("C grid is empty"));
    }
    if let Some(c) = c_grid.iter().find(|&&c| !(c > 0.0)) {
        return Err(MatkError::param(format!("C = {c} must be positive")));
    }
    let task = data.task();
    let folds = folds(data, repeats, seed)?;

    let mut jobs = Vec::with_capacity(repeats * k_grid.len() * c_grid.len());
    for r in 0..repeats {
        for &k in k_grid {
            for &c in c_grid {
                jobs.push((r, k, c));
            }
        }
    }
    let cells: Vec<GridCell> = jobs
        .par_iter()
        .map(|&(r, k, c)| {
            let fold = &folds[r];
            let model = fit(fold, loss, train_cfg, k, c)?;
            let val_pred = model.predict_all(&fold.val);
            let test_pred = model.predict_all(&fold.test);
            Ok(GridCell {
                repeat: r,
                k,
                c,
                val_score: primary_score(task, &val_pred, fold.val.targets())?,
                test_score: primary_score(task, &test_pred, fold.test.targets())?,
                test_secondary: secondary_score(task, &test_pred, fold.test.targets()),
            })
        })
        .collect::<Result<_>>()?;

    let mut best: Option<(usize, f64, f64)> = None;
    for &k in k_grid {
        for &c in c_grid {
            let val = cells
                .iter()
                .filter(|cell| cell.k == k && cell.c == c)
                .map(|cell| cell.val_score)
                .sum::<f64>()
                / repeats as f64;
            let better = match best {
                None => true,
                Some((bk, bc, bv)) => val < bv || (val == bv && (k, c) < (bk, bc)),
            };
            if better {
                best = Some((k, c, val));
            }
        }
    }
    let (best_k, best_c, val_score) = best.expect("grids are nonempty");
    let test_scores: Vec<f64> = (0..repeats)
        .map(|r| {
            cells
                .iter()
                .find(|cell| cell.repeat == r && cell.k == best_k && cell.c == best_c)
                .expect("every cell evaluated")
                .test_score
        })
        .collect();
    let (mean, std) = mean_std(&test_scores);
    Ok(GridSearchResult {
        metric: match task {
            Task::Classification => "misclassification",
            Task::Regression => "rmse",
        }
        .to_owned(),
        best_k,
        best_c,
        val_score,
        test_scores,
        mean,
        std,
        cells,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub k: usize,
    pub mean_test_error: f64,
    pub std: f64,
}

/// Test score against `k` at a fixed `C`, averaged over repeats with splits shared across `k`.
pub fn sweep_k(
    data: &Dataset,
    loss: IndividualLoss,
    k_values: &[usize],
    c: f64,
    repeats: usize,
    seed: u64,
    train_cfg: &TrainConfig,
) -> Result<Vec<SweepPoint>> {
    check_protocol(data, loss, k_values, repeats)?;
    if !(c > 0.0) {
        return Err(MatkError::param(format!("C = {c} must be positive")));
    }
    let task = data.task();
    let folds = folds(data, repeats, seed)?;
    let jobs: Vec<(usize, usize)> = k_values
        .iter()
        .flat_map(|&k| (0..repeats).map(move |r| (k, r)))
        .collect();
    let scores: Vec<f64> = jobs
        .par_iter()
        .map(|&(k, r)| {
            let fold = &folds[r];
            let model = fit(fold, loss, train_cfg, k, c)?;
            primary_score(task, &model.predict_all(&fold.test), fold.test.targets())
        })
        .collect::<Result<_>>()?;
    Ok(k_values
        .iter()
        .zip(scores.chunks(repeats))
        .map(|(&k, s)| {
            let (mean, std) = mean_std(s);
            SweepPoint {
                k,
                mean_test_error: mean,
                std,
            }
        })
        .collect())
}

/// `k,mean,std` rows with a header.
pub fn sweep_to_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("k,mean,std\n");
    for p in points {
        out.push_str(&format!("{},{},{}\n", p.k, p.mean_test_error, p.std));
    }
    out
}

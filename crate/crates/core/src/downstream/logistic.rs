//! L1-regularized logistic regression by proximal gradient descent.
//!
//! Objective over M samples with labels y in {0, 1}:
//!
//! ```text
//! min over (beta, b)   sum_i -log p(y_i | x_i; beta, b)  +  lambda * ||beta||_1
//! ```
//!
//! The smooth negative log-likelihood part is handled by gradient steps with
//! backtracking line search, the penalty by coordinatewise soft-thresholding.
//! The intercept is never penalized. Features are standardized on the
//! training set (zero mean, unit variance per feature) and the statistics are
//! stored for prediction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::{SupervisedSet, Targets};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Standardizer {
        let d = rows[0].len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for row in rows {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n;
            }
        }
        let mut std = vec![0.0; d];
        for row in rows {
            for ((s, m), v) in std.iter_mut().zip(&mean).zip(row) {
                *s += (v - m) * (v - m) / n;
            }
        }
        for s in std.iter_mut() {
            *s = s.sqrt();
            if *s == 0.0 {
                *s = 1.0;
            }
        }
        Standardizer { mean, std }
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

/// Coefficients over day-major flattened window features plus an intercept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub beta: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    pub scaler: Standardizer,
    pub w: usize,
    pub f: usize,
    /// Training data held a single class; only the intercept was fitted.
    pub single_class: bool,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LogisticOptions {
    pub max_iters: usize,
    /// Relative objective change declaring convergence.
    pub tol: f64,
}

impl Default for LogisticOptions {
    fn default() -> LogisticOptions {
        LogisticOptions { max_iters: 5000, tol: 1e-9 }
    }
}

/// prox of `t * |.|`: sign(v) * max(|v| - t, 0).
pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^x) without overflow.
fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Negative log-likelihood of labels under the linear logit model.
fn nll(rows: &[Vec<f64>], labels: &[u8], beta: &[f64], intercept: f64) -> f64 {
    rows.iter()
        .zip(labels)
        .map(|(row, &y)| {
            let margin: f64 = intercept + row.iter().zip(beta).map(|(x, b)| x * b).sum::<f64>();
            // -log p(y) = log(1 + exp(-s*margin)) with s = +/-1
            let s = if y == 1 { 1.0 } else { -1.0 };
            log1p_exp(-s * margin)
        })
        .sum()
}

fn nll_gradient(rows: &[Vec<f64>], labels: &[u8], beta: &[f64], intercept: f64) -> (Vec<f64>, f64) {
    let d = beta.len();
    let mut g = vec![0.0; d];
    let mut gb = 0.0;
    for (row, &y) in rows.iter().zip(labels) {
        let margin: f64 = intercept + row.iter().zip(beta).map(|(x, b)| x * b).sum::<f64>();
        let residual = sigmoid(margin) - f64::from(y);
        for (gi, x) in g.iter_mut().zip(row) {
            *gi += residual * x;
        }
        gb += residual;
    }
    (g, gb)
}

/// Full objective: NLL + lambda * ||beta||_1 (intercept unpenalized).
pub fn logistic_objective(rows: &[Vec<f64>], labels: &[u8], beta: &[f64], intercept: f64, lambda: f64) -> f64 {
    nll(rows, labels, beta, intercept) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

/// Proximal gradient with backtracking on standardized features. The
/// objective is checked to be non-increasing at every accepted step.
pub fn train_logistic_l1(set: &SupervisedSet, lambda: f64, opts: &LogisticOptions) -> Result<LogisticModel> {
    if lambda < 0.0 {
        return Err(Error::Config(format!("lambda must be non-negative, got {lambda}")));
    }
    let Targets::Labels(labels) = &set.targets else {
        return Err(Error::Data("logistic regression needs binary targets".into()));
    };
    let n = set.n_samples();
    if n == 0 {
        return Err(Error::Data("cannot fit on an empty set".into()));
    }
    let raw: Vec<Vec<f64>> = (0..n).map(|i| set.input(i).to_vec()).collect();
    let scaler = Standardizer::fit(&raw);
    let rows: Vec<Vec<f64>> = raw.iter().map(|r| scaler.transform(r)).collect();

    let positives = labels.iter().filter(|&&y| y == 1).count();
    if positives == 0 || positives == n {
        // single-class data: fit the intercept only and signal it
        let rate = (positives as f64 / n as f64).clamp(1e-6, 1.0 - 1e-6);
        return Ok(LogisticModel {
            beta: vec![0.0; set.w * set.f],
            intercept: (rate / (1.0 - rate)).ln(),
            lambda,
            scaler,
            w: set.w,
            f: set.f,
            single_class: true,
        });
    }

    let d = set.w * set.f;
    let mut beta = vec![0.0; d];
    let mut intercept = 0.0;
    let mut objective = logistic_objective(&rows, labels, &beta, intercept, lambda);
    let mut step = 1.0;

    for _ in 0..opts.max_iters {
        let (g, gb) = nll_gradient(&rows, labels, &beta, intercept);
        let smooth = nll(&rows, labels, &beta, intercept);

        // backtracking: shrink until the quadratic upper bound holds
        let (next_beta, next_intercept, next_obj) = loop {
            let cand_beta: Vec<f64> = beta
                .iter()
                .zip(&g)
                .map(|(b, gi)| soft_threshold(b - step * gi, step * lambda))
                .collect();
            let cand_intercept = intercept - step * gb;
            let cand_smooth = nll(&rows, labels, &cand_beta, cand_intercept);
            let mut dot = (cand_intercept - intercept) * gb;
            let mut dist2 = (cand_intercept - intercept) * (cand_intercept - intercept);
            for ((cb, b), gi) in cand_beta.iter().zip(&beta).zip(&g) {
                dot += (cb - b) * gi;
                dist2 += (cb - b) * (cb - b);
            }
            if cand_smooth <= smooth + dot + dist2 / (2.0 * step) || step < 1e-18 {
                let cand_obj = cand_smooth + lambda * cand_beta.iter().map(|b| b.abs()).sum::<f64>();
                break (cand_beta, cand_intercept, cand_obj);
            }
            step *= 0.5;
        };

        assert!(
            next_obj <= objective * (1.0 + 1e-12) + 1e-12,
            "objective increased: {objective} -> {next_obj}"
        );
        let rel_change = (objective - next_obj).abs() / objective.abs().max(1e-12);
        beta = next_beta;
        intercept = next_intercept;
        objective = next_obj;
        if rel_change < opts.tol {
            break;
        }
        // allow the step to grow back slowly so progress does not stall
        step *= 1.1;
    }

    Ok(LogisticModel {
        beta,
        intercept,
        lambda,
        scaler,
        w: set.w,
        f: set.f,
        single_class: false,
    })
}

/// sigmoid(intercept + beta . standardized(flattened window)).
pub fn logistic_predict(model: &LogisticModel, window: &[f64]) -> Result<f64> {
    if window.len() != model.w * model.f {
        return Err(Error::Data(format!(
            "logistic window has {} values, expected {}x{}",
            window.len(),
            model.w,
            model.f
        )));
    }
    let z = model.scaler.transform(window);
    let margin: f64 = model.intercept + z.iter().zip(&model.beta).map(|(x, b)| x * b).sum::<f64>();
    Ok(sigmoid(margin))
}

/// Mean held-out log-loss over a 5-fold split for each candidate, returning
/// the lambda with the smallest loss (ties go to the stronger penalty).
pub fn choose_lambda_cv(set: &SupervisedSet, grid: &[f64], folds: usize, seed: u64) -> Result<f64> {
    let Targets::Labels(labels) = &set.targets else {
        return Err(Error::Data("lambda selection needs binary targets".into()));
    };
    let n = set.n_samples();
    if n < folds || folds < 2 {
        return Err(Error::Config(format!("{n} samples cannot form {folds} folds")));
    }
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut crate::rng::stream(seed, "lambda-cv"));

    let mut best = (f64::INFINITY, grid[0]);
    for &lambda in grid {
        let mut total_loss = 0.0;
        let mut total_count = 0usize;
        for fold in 0..folds {
            let held: Vec<usize> = order.iter().copied().skip(fold).step_by(folds).collect();
            let train: Vec<usize> = order.iter().copied().filter(|i| !held.contains(i)).collect();
            let sub = subset(set, labels, &train)?;
            let model = train_logistic_l1(&sub, lambda, &LogisticOptions { max_iters: 500, tol: 1e-7 })?;
            for &i in &held {
                let p = logistic_predict(&model, set.input(i))?.clamp(1e-12, 1.0 - 1e-12);
                let y = f64::from(labels[i]);
                total_loss += -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
                total_count += 1;
            }
        }
        let mean = total_loss / total_count as f64;
        if mean < best.0 - 1e-12 || (mean <= best.0 + 1e-12 && lambda > best.1) {
            best = (mean, lambda);
        }
    }
    Ok(best.1)
}

fn subset(set: &SupervisedSet, labels: &[u8], indices: &[usize]) -> Result<SupervisedSet> {
    let mut inputs = Vec::with_capacity(indices.len() * set.w * set.f);
    let mut l = Vec::with_capacity(indices.len());
    for &i in indices {
        inputs.extend_from_slice(set.input(i));
        l.push(labels[i]);
    }
    SupervisedSet::new_classify(set.w, set.f, inputs, l)
}

//! Evaluation metrics: RMSE, MAPE, Pearson correlation, within-sample and
//! full-series autocorrelation, histograms, attribute proportions, ROC/AUC,
//! and the fidelity report comparing real and synthetic sample sets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::SampleSet;

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Data(format!("rmse length mismatch: {} vs {}", pred.len(), truth.len())));
    }
    if pred.is_empty() {
        return Err(Error::Data("rmse of empty vectors".into()));
    }
    let mse = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64;
    Ok(mse.sqrt())
}

/// Denominators smaller than this (in percent-yield units) are excluded from
/// MAPE unless `include_all` is set.
pub const MAPE_DENOMINATOR_FLOOR: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mape {
    /// Mean absolute percentage error over included points, in percent.
    pub percent: f64,
    /// Points excluded for a near-zero denominator.
    pub excluded: usize,
}

/// 100 * mean(|p - t| / |t|). With `include_all`, near-zero denominators are
/// kept (the permissive variant); otherwise they are excluded and counted.
pub fn mape(pred: &[f64], truth: &[f64], include_all: bool) -> Result<Mape> {
    if pred.len() != truth.len() {
        return Err(Error::Data(format!("mape length mismatch: {} vs {}", pred.len(), truth.len())));
    }
    let mut sum = 0.0;
    let mut included = 0usize;
    for (p, t) in pred.iter().zip(truth) {
        if !include_all && t.abs() < MAPE_DENOMINATOR_FLOOR {
            continue;
        }
        sum += ((p - t) / t).abs();
        included += 1;
    }
    if included == 0 {
        return Err(Error::Data("all mape points were excluded by the denominator floor".into()));
    }
    Ok(Mape { percent: 100.0 * sum / included as f64, excluded: pred.len() - included })
}

pub fn pearson_corr(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Data(format!("correlation length mismatch: {} vs {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::Data("correlation needs at least two points".into()));
    }
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::Data("correlation undefined for zero-variance input".into()));
    }
    Ok(cov / (va * vb).sqrt())
}

/// Biased (divide-by-T) autocorrelation of one series at `lag`.
/// `None` for constant series.
fn autocorr_at(series: &[f64], lag: usize) -> Option<f64> {
    let t = series.len();
    let mean = series.iter().sum::<f64>() / t as f64;
    let c0: f64 = series.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / t as f64;
    if c0 == 0.0 {
        return None;
    }
    let cl: f64 = (0..t - lag).map(|i| (series[i] - mean) * (series[i + lag] - mean)).sum::<f64>() / t as f64;
    Some(cl / c0)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AutocorrSummary {
    /// Mean over samples and features, per lag (index = lag, 0..=max_lag).
    pub pooled: Vec<f64>,
    /// Per feature: mean over samples, per lag.
    pub per_feature: Vec<Vec<f64>>,
    /// Constant (sample, feature) series skipped.
    pub skipped_constant: usize,
}

/// Within-sample autocorrelation averaged across all samples (and, for the
/// pooled view, across features). Constant samples are excluded and counted.
pub fn avg_sample_autocorr(set: &SampleSet, max_lag: usize) -> Result<AutocorrSummary> {
    if max_lag >= set.t {
        return Err(Error::Data(format!("max_lag {max_lag} must be below sample length {}", set.t)));
    }
    let n = set.n_samples();
    if n == 0 {
        return Err(Error::Data("autocorrelation of an empty set".into()));
    }
    let mut pooled_sum = vec![0.0; max_lag + 1];
    let mut pooled_count = vec![0usize; max_lag + 1];
    let mut feature_sum = vec![vec![0.0; max_lag + 1]; set.f];
    let mut feature_count = vec![vec![0usize; max_lag + 1]; set.f];
    let mut skipped = 0usize;

    for i in 0..n {
        for j in 0..set.f {
            let series: Vec<f64> = (0..set.t).map(|s| set.value(i, s, j)).collect();
            if autocorr_at(&series, 0).is_none() {
                skipped += 1;
                continue;
            }
            for (lag, (ps, pc)) in pooled_sum.iter_mut().zip(&mut pooled_count).enumerate() {
                let r = autocorr_at(&series, lag).expect("non-constant checked above");
                *ps += r;
                *pc += 1;
                feature_sum[j][lag] += r;
                feature_count[j][lag] += 1;
            }
        }
    }
    if pooled_count[0] == 0 {
        return Err(Error::Data("every sample was constant; autocorrelation undefined".into()));
    }
    let pooled = pooled_sum.iter().zip(&pooled_count).map(|(s, c)| s / *c as f64).collect();
    let per_feature = feature_sum
        .iter()
        .zip(&feature_count)
        .map(|(sums, counts)| {
            sums.iter()
                .zip(counts)
                .map(|(s, c)| if *c > 0 { s / *c as f64 } else { f64::NAN })
                .collect()
        })
        .collect();
    Ok(AutocorrSummary { pooled, per_feature, skipped_constant: skipped })
}

/// Autocorrelation of one undivided series for lags `0..=max_lag`.
pub fn full_series_autocorr(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if max_lag >= series.len() {
        return Err(Error::Data(format!(
            "max_lag {max_lag} must be below series length {}",
            series.len()
        )));
    }
    (0..=max_lag)
        .map(|lag| {
            autocorr_at(series, lag)
                .ok_or_else(|| Error::Data("autocorrelation undefined for a constant series".into()))
        })
        .collect()
}

/// Normalized bin masses over `[lo, hi)`; out-of-range values land in the
/// nearest edge bin.
pub fn histogram(values: &[f64], bins: usize, lo: f64, hi: f64) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::Data("histogram of empty input".into()));
    }
    if bins == 0 || lo >= hi {
        return Err(Error::Config(format!("invalid histogram spec: {bins} bins over [{lo}, {hi})")));
    }
    let mut counts = vec![0usize; bins];
    let width = (hi - lo) / bins as f64;
    for &v in values {
        let idx = ((v - lo) / width).floor();
        let idx = (idx.max(0.0) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    let n = values.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

/// Mean of a binary attribute across samples.
pub fn attribute_proportion(set: &SampleSet, attr: &str) -> Result<f64> {
    let idx = set.attr_index(attr)?;
    let n = set.n_samples();
    if n == 0 {
        return Err(Error::Data("attribute proportion of an empty set".into()));
    }
    let mut sum = 0.0;
    for i in 0..n {
        let v = set.attrs(i)[idx];
        if v != 0.0 && v != 1.0 {
            return Err(Error::Data(format!("attribute {attr:?} is not binary (sample {i} has {v})")));
        }
        sum += v;
    }
    Ok(sum / n as f64)
}

/// ROC curve from a threshold sweep over the distinct scores, with the AUC.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RocCurve {
    /// (false positive rate, true positive rate), from (0,0) to (1,1).
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// Sweeps thresholds over the distinct score values (plus an "above all"
/// sentinel). Tied scores move the curve point diagonally in one step, and the
/// trapezoidal area equals the probability that a random positive outscores a
/// random negative, counting ties 1/2.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::Data(format!("roc length mismatch: {} vs {}", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Data("roc scores contain NaN".into()));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Data("roc needs both classes present".into()));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }

    let mut auc = 0.0;
    for pair in points.windows(2) {
        let (x0, y0) = pair[0];
        let (x1, y1) = pair[1];
        auc += (x1 - x0) * (y0 + y1) / 2.0;
    }
    Ok(RocCurve { points, auc })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeatureHistogram {
    pub feature: usize,
    pub lo: f64,
    pub hi: f64,
    pub real: Vec<f64>,
    pub synthetic: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AttributeProportion {
    pub name: String,
    pub real: f64,
    pub synthetic: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AutocorrTriple {
    pub max_lag: usize,
    pub synthetic: AutocorrSummary,
    pub real_by_sample: AutocorrSummary,
    /// Per feature, estimated on the undivided training series when a panel
    /// is supplied.
    pub real_full: Option<Vec<Vec<f64>>>,
}

/// Everything behind the fidelity comparison of real and generated samples:
/// value histograms, the cross-feature correlation pair, autocorrelation
/// summaries, indicator-attribute proportions, and diversity scores.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FidelityReport {
    pub n_real: usize,
    pub n_synthetic: usize,
    pub bins: usize,
    pub histograms: Vec<FeatureHistogram>,
    /// Pearson correlation between feature 0 and feature 1 values.
    pub correlation_real: f64,
    pub correlation_synthetic: f64,
    pub autocorrelation: AutocorrTriple,
    pub attribute_proportions: Vec<AttributeProportion>,
    pub diversity_real: f64,
    pub diversity_synthetic: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct FidelityOptions {
    pub bins: usize,
    pub max_lag: usize,
}

impl Default for FidelityOptions {
    fn default() -> FidelityOptions {
        FidelityOptions { bins: 50, max_lag: 100 }
    }
}

/// Builds the full fidelity report. `full_real_series`, when given, supplies
/// the undivided per-feature training series for the full-range
/// autocorrelation comparison.
pub fn fidelity_report(
    real: &SampleSet,
    synthetic: &SampleSet,
    full_real_series: Option<&[Vec<f64>]>,
    opts: FidelityOptions,
) -> Result<FidelityReport> {
    if real.f != synthetic.f || real.t != synthetic.t {
        return Err(Error::Data(format!(
            "real ({}x{}) and synthetic ({}x{}) sets are not comparable",
            real.t, real.f, synthetic.t, synthetic.f
        )));
    }
    let max_lag = opts.max_lag.min(real.t - 1);

    let mut histograms = Vec::with_capacity(real.f);
    for j in 0..real.f {
        let rv = real.feature_values(j);
        let sv = synthetic.feature_values(j);
        let lo = rv.iter().chain(&sv).cloned().fold(f64::INFINITY, f64::min);
        let hi = rv.iter().chain(&sv).cloned().fold(f64::NEG_INFINITY, f64::max);
        let hi = if hi > lo { hi } else { lo + 1.0 };
        histograms.push(FeatureHistogram {
            feature: j,
            lo,
            hi,
            real: histogram(&rv, opts.bins, lo, hi)?,
            synthetic: histogram(&sv, opts.bins, lo, hi)?,
        });
    }

    let corr = |set: &SampleSet| -> Result<f64> {
        pearson_corr(&set.feature_values(0), &set.feature_values(1))
    };

    let mut attribute_proportions = Vec::new();
    for name in &real.attr_schema {
        // only indicator attributes; generated sets carry min/max metadata too
        if !synthetic.attr_schema.contains(name) || name.starts_with("mid_") || name.starts_with("half_") {
            continue;
        }
        attribute_proportions.push(AttributeProportion {
            name: name.clone(),
            real: attribute_proportion(real, name)?,
            synthetic: attribute_proportion(synthetic, name)?,
        });
    }

    let normalize = |set: &SampleSet| -> Result<SampleSet> {
        let (norm, _) = crate::dgan::normalize_samples(set)?;
        SampleSet::new(norm.t, norm.f, norm.features_flat().to_vec(), vec![], vec![])
    };

    let real_full = match full_real_series {
        Some(series) => {
            let mut per_feature = Vec::with_capacity(series.len());
            for s in series {
                per_feature.push(full_series_autocorr(s, max_lag.min(s.len().saturating_sub(1)))?);
            }
            Some(per_feature)
        }
        None => None,
    };

    Ok(FidelityReport {
        n_real: real.n_samples(),
        n_synthetic: synthetic.n_samples(),
        bins: opts.bins,
        histograms,
        correlation_real: corr(real)?,
        correlation_synthetic: corr(synthetic)?,
        autocorrelation: AutocorrTriple {
            max_lag,
            synthetic: avg_sample_autocorr(synthetic, max_lag)?,
            real_by_sample: avg_sample_autocorr(real, max_lag)?,
            real_full,
        },
        attribute_proportions,
        diversity_real: crate::dgan::diversity_score(&normalize(real)?)?,
        diversity_synthetic: crate::dgan::diversity_score(&normalize(synthetic)?)?,
    })
}

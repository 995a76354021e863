//! End-to-end experiment pipelines at configurable scale: GAN training,
//! synthetic set construction, downstream model training on real / synthetic /
//! combined sets, and evaluation reports with their plot data.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, config_hash};
use crate::dgan::{generate, train_dgan, DganConfig, DganModel};
use crate::downstream::{
    choose_lambda_cv, classify, forecast, logistic_predict, train_forecaster,
    train_logistic_l1, train_lstm_classifier, ClassifierNetConfig, LogisticOptions,
    NetTrainConfig,
};
use crate::error::{Error, Result};
use crate::ingest::{align_panel, load_fred_csv, slice_period, MissingPolicy, YieldPanel};
use crate::metrics::{mape, rmse, roc_auc, Mape, RocCurve};
use crate::sampling::{
    combine_sets, labeled_windows_from_synthetic, rolling_classifier_windows, rolling_windows,
    segment_gan_samples, windows_from_synthetic, AttributePlan, SupervisedSet,
    ATTR_FUTURE_RECESSION,
};

pub const FEATURE_NAMES: [&str; 2] = ["1-year", "10-year"];
pub const VARIANTS: [&str; 3] = ["real", "synthetic", "combined"];

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: &str, end: &str) -> DateRange {
        DateRange {
            start: crate::ingest::date(start).expect("valid date literal"),
            end: crate::ingest::date(end).expect("valid date literal"),
        }
    }
}

/// Where the raw series come from: either a pre-aligned panel CSV or the
/// three FRED export files.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub panel_csv: Option<PathBuf>,
    pub y1_csv: Option<PathBuf>,
    pub y10_csv: Option<PathBuf>,
    pub rec_csv: Option<PathBuf>,
    pub missing_policy: MissingPolicy,
}

impl DataConfig {
    pub fn load_panel(&self) -> Result<YieldPanel> {
        if let Some(path) = &self.panel_csv {
            return YieldPanel::load_csv(path);
        }
        match (&self.y1_csv, &self.y10_csv, &self.rec_csv) {
            (Some(a), Some(b), Some(c)) => {
                let y1 = load_fred_csv(a)?;
                let y10 = load_fred_csv(b)?;
                let rec = load_fred_csv(c)?;
                align_panel(&y1, &y10, &rec, self.missing_policy)
            }
            _ => Err(Error::Config(
                "data config needs either panel_csv or all of y1_csv/y10_csv/rec_csv".into(),
            )),
        }
    }
}

fn check_ranges(train: &DateRange, test: &DateRange) -> Result<()> {
    if train.start > train.end || test.start > test.end {
        return Err(Error::Config("date range start is after its end".into()));
    }
    if train.end >= test.start {
        return Err(Error::Config(format!(
            "training range must end before the test range starts ({} >= {})",
            train.end, test.start
        )));
    }
    Ok(())
}

fn train_or_load_gan(
    gan: &DganConfig,
    checkpoint_path: &Option<PathBuf>,
    data: &crate::sampling::SampleSet,
    out_dir: &Path,
) -> Result<DganModel> {
    if let Some(path) = checkpoint_path {
        return checkpoint::dgan_from_checkpoint(&checkpoint::load(path)?);
    }
    let outcome = train_dgan(gan, data)?;
    outcome.history.save_csv(&out_dir.join("gan_history.csv"))?;
    if let Some(reason) = outcome.aborted {
        return Err(Error::Numeric(format!("GAN training aborted: {reason}")));
    }
    let ck = checkpoint::dgan_to_checkpoint(&outcome.model)
        .with_run_info(gan.seed, &config_hash(gan));
    checkpoint::save(&out_dir.join("gan.ckpt"), &ck)?;
    Ok(outcome.model)
}

// --- forecasting experiment ---

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ForecastExperimentConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub gan_train_range: DateRange,
    pub test_range: DateRange,
    pub gan: DganConfig,
    /// Reuse a trained GAN instead of training one.
    pub gan_checkpoint: Option<PathBuf>,
    pub n_synthetic: usize,
    pub window: usize,
    pub horizons: Vec<usize>,
    pub net: NetTrainConfig,
    pub mape_include_all: bool,
    pub clip_negative_yields: bool,
}

impl Default for ForecastExperimentConfig {
    fn default() -> ForecastExperimentConfig {
        ForecastExperimentConfig {
            seed: 0,
            data: DataConfig::default(),
            gan_train_range: DateRange::new("1962-01-02", "2016-12-30"),
            test_range: DateRange::new("2017-01-03", "2023-01-23"),
            gan: DganConfig::default(),
            gan_checkpoint: None,
            n_synthetic: 1000,
            window: 25,
            horizons: vec![1, 15],
            net: NetTrainConfig::default(),
            mape_include_all: false,
            clip_negative_yields: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ForecastCell {
    pub variant: String,
    pub feature: String,
    pub rmse: f64,
    pub mape: Mape,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HorizonReport {
    pub horizon: usize,
    pub train_counts: Vec<(String, usize)>,
    pub test_windows: usize,
    pub cells: Vec<ForecastCell>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ForecastReport {
    pub seed: u64,
    pub config_hash: String,
    pub evaluation_range: DateRange,
    pub horizons: Vec<HorizonReport>,
}

impl ForecastReport {
    /// One table per horizon: rows metric x feature, columns the variants.
    pub fn table_csv(&self, horizon: usize) -> Option<String> {
        let h = self.horizons.iter().find(|h| h.horizon == horizon)?;
        let mut out = String::from("metric,real,synthetic,combined\n");
        for feature in FEATURE_NAMES {
            for metric in ["RMSE", "MAPE"] {
                let mut row = format!("{feature} Treasury {metric}");
                for variant in VARIANTS {
                    let cell = h
                        .cells
                        .iter()
                        .find(|c| c.variant == variant && c.feature == feature)
                        .expect("complete table");
                    let v = if metric == "RMSE" { cell.rmse } else { cell.mape.percent };
                    row.push_str(&format!(",{v:.3}"));
                }
                out.push_str(&row);
                out.push('\n');
            }
        }
        Some(out)
    }
}

/// Per-feature evaluation of one forecaster over the test panel at the final
/// horizon day (day H of an H-step forecast).
fn evaluate_forecaster(
    model: &crate::downstream::ForecastModel,
    test: &SupervisedSet,
    mape_include_all: bool,
) -> Result<Vec<(f64, Mape)>> {
    let h = model.h;
    let f = model.f;
    let mut preds: Vec<Vec<f64>> = vec![Vec::new(); f];
    let mut truths: Vec<Vec<f64>> = vec![Vec::new(); f];
    for i in 0..test.n_samples() {
        let out = forecast(model, test.input(i))?;
        let target = test.series_target(i);
        for j in 0..f {
            preds[j].push(out[(h - 1) * f + j]);
            truths[j].push(target[(h - 1) * f + j]);
        }
    }
    (0..f)
        .map(|j| Ok((rmse(&preds[j], &truths[j])?, mape(&preds[j], &truths[j], mape_include_all)?)))
        .collect()
}

pub fn run_experiment_forecast(
    cfg: &ForecastExperimentConfig,
    panel: &YieldPanel,
    out_dir: &Path,
) -> Result<ForecastReport> {
    check_ranges(&cfg.gan_train_range, &cfg.test_range)?;
    std::fs::create_dir_all(out_dir)?;
    let hash = config_hash(cfg);

    let train_panel = slice_period(panel, cfg.gan_train_range.start, cfg.gan_train_range.end)?;
    let test_panel = slice_period(panel, cfg.test_range.start, cfg.test_range.end)?;

    let plan = AttributePlan { recession_in_window: true, future_recession_lookahead: None };
    let gan_data = segment_gan_samples(&train_panel, cfg.gan.t, &plan)?;
    let gan_cfg = DganConfig { seed: crate::rng::derive_u64(cfg.seed, "gan"), ..cfg.gan.clone() };
    let model = train_or_load_gan(&gan_cfg, &cfg.gan_checkpoint, &gan_data, out_dir)?;
    let synth = generate(
        &model.bundle,
        cfg.n_synthetic,
        crate::rng::derive_u64(cfg.seed, "generate"),
        cfg.clip_negative_yields,
    )?;

    let mut horizons = Vec::new();
    for &h in &cfg.horizons {
        let real_set = rolling_windows(&train_panel, cfg.window, h)?;
        let synth_set = windows_from_synthetic(&synth, cfg.window, h)?;
        let combined_set = combine_sets(&real_set, &synth_set)?;
        let test_set = rolling_windows(&test_panel, cfg.window, h)?;

        let mut cells = Vec::new();
        let train_counts: Vec<(String, usize)> = VARIANTS
            .iter()
            .zip([&real_set, &synth_set, &combined_set])
            .map(|(v, s)| (v.to_string(), s.n_samples()))
            .collect();

        for (variant, set) in VARIANTS.iter().zip([&real_set, &synth_set, &combined_set]) {
            let net = NetTrainConfig {
                seed: crate::rng::derive_u64(cfg.seed, &format!("forecaster-{variant}-h{h}")),
                ..cfg.net.clone()
            };
            let (m, _losses) = train_forecaster(set, h, &net)?;
            let ck = checkpoint::forecaster_to_checkpoint(&m, &net).with_run_info(net.seed, &hash);
            checkpoint::save(&out_dir.join(format!("forecaster_{variant}_h{h}.ckpt")), &ck)?;

            // forecast curve at the evaluated day, for plotting
            let mut curve = String::from("date,y1_pred,y10_pred,y1_true,y10_true\n");
            for i in 0..test_set.n_samples() {
                let out = forecast(&m, test_set.input(i))?;
                let target = test_set.series_target(i);
                let d = test_panel.dates()[i + cfg.window + h - 1];
                curve.push_str(&format!(
                    "{d},{},{},{},{}\n",
                    out[(h - 1) * 2],
                    out[(h - 1) * 2 + 1],
                    target[(h - 1) * 2],
                    target[(h - 1) * 2 + 1]
                ));
            }
            std::fs::write(out_dir.join(format!("forecasts_{variant}_h{h}.csv")), curve)?;

            for (j, (r, m)) in evaluate_forecaster(&m, &test_set, cfg.mape_include_all)?.into_iter().enumerate() {
                cells.push(ForecastCell {
                    variant: variant.to_string(),
                    feature: FEATURE_NAMES[j].to_string(),
                    rmse: r,
                    mape: m,
                });
            }
        }
        horizons.push(HorizonReport { horizon: h, train_counts, test_windows: test_set.n_samples(), cells });
    }

    let report = ForecastReport {
        seed: cfg.seed,
        config_hash: hash,
        evaluation_range: cfg.test_range,
        horizons,
    };
    std::fs::write(out_dir.join("forecast_report.json"), serde_json::to_string_pretty(&report).unwrap())?;
    for &h in &cfg.horizons {
        if let Some(table) = report.table_csv(h) {
            std::fs::write(out_dir.join(format!("table_h{h}.csv")), table)?;
        }
    }
    write_manifest(out_dir, &report.config_hash, cfg.seed)?;
    Ok(report)
}

// --- recession-classification experiment ---

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct RecessionExperimentConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub gan_train_range: DateRange,
    pub test_range: DateRange,
    pub gan: DganConfig,
    pub gan_checkpoint: Option<PathBuf>,
    pub n_synthetic: usize,
    pub window: usize,
    /// Days after a window in which a recession makes the label positive.
    pub lookahead: usize,
    /// Fixed L1 strength; when absent, chosen by 5-fold cross-validation.
    pub lambda: Option<f64>,
    pub lambda_grid: Vec<f64>,
    pub logistic: LogisticOptions,
    pub net: ClassifierNetConfig,
    pub clip_negative_yields: bool,
    /// Label windows whose lookahead crosses the training cutoff with
    /// post-cutoff recession data (labels are historical facts); disable to
    /// drop those windows instead.
    pub use_post_cutoff_labels: bool,
}

impl Default for RecessionExperimentConfig {
    fn default() -> RecessionExperimentConfig {
        RecessionExperimentConfig {
            seed: 0,
            data: DataConfig::default(),
            gan_train_range: DateRange::new("1962-01-02", "1984-12-31"),
            test_range: DateRange::new("1985-01-02", "2009-06-30"),
            gan: DganConfig { t: 30, s: 5, ..DganConfig::default() },
            gan_checkpoint: None,
            n_synthetic: 50_000,
            window: 30,
            lookahead: 250,
            lambda: None,
            lambda_grid: vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0],
            logistic: LogisticOptions::default(),
            net: ClassifierNetConfig::default(),
            clip_negative_yields: false,
            use_post_cutoff_labels: true,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassifierEval {
    pub kind: String,
    pub variant: String,
    pub n_train: usize,
    /// Probability-curve points over the test range (one per eligible day).
    pub curve_points: usize,
    /// Windows with full label lookahead that entered the ROC.
    pub n_scored: usize,
    pub auc: f64,
    pub roc: RocCurve,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub seed: u64,
    pub config_hash: String,
    pub test_range: DateRange,
    pub lambda: f64,
    pub models: Vec<ClassifierEval>,
}

/// Recession flags for the days immediately after `range_end` in `panel`,
/// used to label windows whose lookahead crosses the cutoff.
fn post_cutoff_recession(panel: &YieldPanel, range_end: NaiveDate) -> Vec<u8> {
    panel
        .dates()
        .iter()
        .zip(panel.recession())
        .filter(|(d, _)| **d > range_end)
        .map(|(_, &r)| r)
        .collect()
}

pub fn run_experiment_recession(
    cfg: &RecessionExperimentConfig,
    panel: &YieldPanel,
    out_dir: &Path,
) -> Result<ClassificationReport> {
    check_ranges(&cfg.gan_train_range, &cfg.test_range)?;
    std::fs::create_dir_all(out_dir)?;
    let hash = config_hash(cfg);

    let train_panel = slice_period(panel, cfg.gan_train_range.start, cfg.gan_train_range.end)?;
    let test_panel = slice_period(panel, cfg.test_range.start, cfg.test_range.end)?;

    let plan = AttributePlan {
        recession_in_window: true,
        future_recession_lookahead: Some(cfg.lookahead),
    };
    let gan_data = segment_gan_samples(&train_panel, cfg.gan.t, &plan)?;
    let gan_cfg = DganConfig { seed: crate::rng::derive_u64(cfg.seed, "gan"), ..cfg.gan.clone() };
    let model = train_or_load_gan(&gan_cfg, &cfg.gan_checkpoint, &gan_data, out_dir)?;
    let synth = generate(
        &model.bundle,
        cfg.n_synthetic,
        crate::rng::derive_u64(cfg.seed, "generate"),
        cfg.clip_negative_yields,
    )?;

    let train_lookahead = cfg
        .use_post_cutoff_labels
        .then(|| post_cutoff_recession(panel, cfg.gan_train_range.end));
    let real_set = rolling_classifier_windows(
        &train_panel,
        cfg.window,
        cfg.lookahead,
        train_lookahead.as_deref(),
    )?;
    let synth_set = labeled_windows_from_synthetic(&synth, cfg.window, ATTR_FUTURE_RECESSION)?;
    let combined_set = combine_sets(&real_set, &synth_set)?;

    // test windows: probabilities for every eligible day, labels only where
    // the lookahead is fully covered by the panel
    let test_lookahead = post_cutoff_recession(panel, cfg.test_range.end);
    let labeled_test = rolling_classifier_windows(
        &test_panel,
        cfg.window,
        cfg.lookahead,
        Some(&test_lookahead),
    )?;

    let lambda = match cfg.lambda {
        Some(l) => l,
        None => choose_lambda_cv(
            &real_set,
            &cfg.lambda_grid,
            5,
            crate::rng::derive_u64(cfg.seed, "lambda-cv"),
        )?,
    };

    let mut models = Vec::new();
    for (variant, set) in VARIANTS.iter().zip([&real_set, &synth_set, &combined_set]) {
        // logistic
        let lmodel = train_logistic_l1(set, lambda, &cfg.logistic)?;
        let ck = checkpoint::logistic_to_checkpoint(&lmodel).with_run_info(cfg.seed, &hash);
        checkpoint::save(&out_dir.join(format!("logistic_{variant}.ckpt")), &ck)?;
        models.push(evaluate_classifier(
            "logistic",
            variant,
            set.n_samples(),
            |w| logistic_predict(&lmodel, w),
            &test_panel,
            labeled_test.labels(),
            cfg.window,
            out_dir,
        )?);

        // LSTM classifier
        let net = ClassifierNetConfig {
            seed: crate::rng::derive_u64(cfg.seed, &format!("classifier-{variant}")),
            ..cfg.net.clone()
        };
        let (cmodel, _losses) = train_lstm_classifier(set, &net)?;
        let ck = checkpoint::classifier_to_checkpoint(&cmodel, &net).with_run_info(net.seed, &hash);
        checkpoint::save(&out_dir.join(format!("lstm_{variant}.ckpt")), &ck)?;
        models.push(evaluate_classifier(
            "lstm",
            variant,
            set.n_samples(),
            |w| classify(&cmodel, w),
            &test_panel,
            labeled_test.labels(),
            cfg.window,
            out_dir,
        )?);
    }

    let report = ClassificationReport {
        seed: cfg.seed,
        config_hash: hash,
        test_range: cfg.test_range,
        lambda,
        models,
    };
    std::fs::write(
        out_dir.join("classification_report.json"),
        serde_json::to_string_pretty(&report).unwrap(),
    )?;
    write_manifest(out_dir, &report.config_hash, cfg.seed)?;
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
fn evaluate_classifier(
    kind: &str,
    variant: &str,
    n_train: usize,
    predict: impl Fn(&[f64]) -> Result<f64>,
    test_panel: &YieldPanel,
    labels: &[u8],
    window: usize,
    out_dir: &Path,
) -> Result<ClassifierEval> {
    // daily probability curve: one point per window fully inside the range
    let feats = test_panel.features();
    let f = crate::sampling::FEATURES;
    let n_all = test_panel.len() - window + 1;
    let mut curve = String::from("date,probability\n");
    let mut scores_all = Vec::with_capacity(n_all);
    for i in 0..n_all {
        let p = predict(&feats[i * f..(i + window) * f])?;
        scores_all.push(p);
        let d = test_panel.dates()[i + window - 1];
        curve.push_str(&format!("{d},{p}\n"));
    }
    std::fs::write(out_dir.join(format!("probability_{kind}_{variant}.csv")), curve)?;

    // ROC over the prefix whose label lookahead is covered by data
    let roc = roc_auc(&scores_all[..labels.len()], labels)?;
    let mut roc_csv = String::from("fpr,tpr\n");
    for (x, y) in &roc.points {
        roc_csv.push_str(&format!("{x},{y}\n"));
    }
    std::fs::write(out_dir.join(format!("roc_{kind}_{variant}.csv")), roc_csv)?;

    Ok(ClassifierEval {
        kind: kind.into(),
        variant: variant.into(),
        n_train,
        curve_points: scores_all.len(),
        n_scored: labels.len(),
        auc: roc.auc,
        roc,
    })
}

fn write_manifest(out_dir: &Path, hash: &str, seed: u64) -> Result<()> {
    let mut files: Vec<String> = std::fs::read_dir(out_dir)?
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name() != "run_manifest.json")
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    files.sort();
    let manifest = serde_json::json!({
        "config_hash": hash,
        "seed": seed,
        "artifacts": files,
    });
    std::fs::write(out_dir.join("run_manifest.json"), serde_json::to_string_pretty(&manifest).unwrap())?;
    Ok(())
}

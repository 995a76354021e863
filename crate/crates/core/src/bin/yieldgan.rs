//! Command-line front end: data ingestion, sample-set construction, GAN
//! training and generation, fidelity reports, downstream model training and
//! prediction, and the two end-to-end experiments.
//!
//! Every command accepts `--config FILE` with a JSON object whose fields
//! override the equivalent flags. Relative output paths resolve under
//! `$YIELDGAN_OUT` when it is set. Exit codes: 0 success, 2 config error,
//! 3 data error, 4 numerical failure.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Parser, Subcommand, ValueEnum};

use yieldgan::checkpoint::{self, config_hash};
use yieldgan::dgan::{self, DganConfig};
use yieldgan::downstream::{self, ClassifierNetConfig, LogisticOptions, NetTrainConfig};
use yieldgan::error::{Error, Result};
use yieldgan::experiment::{
    run_experiment_forecast, run_experiment_recession, ForecastExperimentConfig,
    RecessionExperimentConfig,
};
use yieldgan::ingest::{self, MissingPolicy, YieldPanel};
use yieldgan::metrics::{fidelity_report, FidelityOptions};
use yieldgan::sampling::{self, AttributePlan};

#[derive(Parser)]
#[command(name = "yieldgan", version, about = "Synthetic Treasury-yield GAN and downstream evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SampleKind {
    Gan,
    Forecast,
    Classify,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClassifierKind {
    Logistic,
    Lstm,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentKind {
    Forecast,
    Recession,
}

#[derive(Subcommand)]
enum Command {
    /// Parse FRED CSV exports, align them onto a weekday panel, slice a date
    /// range, and write the canonical panel CSV.
    Ingest {
        #[arg(long)]
        y1: PathBuf,
        #[arg(long)]
        y10: PathBuf,
        #[arg(long)]
        rec: PathBuf,
        #[arg(long)]
        start: NaiveDate,
        #[arg(long)]
        end: NaiveDate,
        #[arg(long, value_enum, default_value_t = MissingPolicy::DropDay)]
        policy: MissingPolicy,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a training/test set from a panel CSV and save it as
    /// `<out>.json` + `<out>.f64`.
    MakeSamples {
        #[arg(long)]
        panel: PathBuf,
        #[arg(long, value_enum)]
        kind: SampleKind,
        #[arg(long)]
        window: usize,
        /// Forecast horizon in days (forecast kind).
        #[arg(long, default_value_t = 1)]
        horizon: usize,
        /// Future-recession label lookahead in days (gan/classify kinds).
        #[arg(long, default_value_t = 250)]
        lookahead: usize,
        /// Attach the future-recession attribute to GAN segments.
        #[arg(long)]
        future_recession: bool,
        #[arg(long, default_value = "real")]
        provenance: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the DoppelGANger-style generator on a saved GAN sample set.
    TrainGan {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample synthetic series from a trained generator checkpoint.
    Generate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Clip negative generated yields at zero.
        #[arg(long)]
        clip_negative: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a real and a synthetic sample set: histograms, correlation,
    /// autocorrelation, attribute proportions, diversity.
    Fidelity {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        synth: PathBuf,
        /// Panel CSV for the full-series autocorrelation reference.
        #[arg(long)]
        panel: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        max_lag: usize,
        #[arg(long, default_value_t = 50)]
        bins: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the stacked-LSTM forecaster on a saved forecast set.
    TrainForecaster {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        horizon: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Slide a trained forecaster over a panel and write per-day forecasts.
    Forecast {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        panel: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a recession classifier (L1 logistic regression or LSTM).
    TrainClassifier {
        #[arg(long, value_enum)]
        kind: ClassifierKind,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// L1 strength; chosen by 5-fold cross-validation when omitted.
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Slide a trained classifier over a panel and write `date,probability`.
    Classify {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        panel: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a `date,y1,y10` forecast CSV against a truth panel (RMSE/MAPE
    /// per feature over the dates present in both).
    EvaluateForecasts {
        #[arg(long)]
        forecasts: PathBuf,
        #[arg(long)]
        panel: PathBuf,
        /// Keep near-zero denominators in the MAPE instead of excluding them.
        #[arg(long)]
        mape_include_all: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a `date,probability` curve against future-recession labels
    /// derived from a panel (ROC points and AUC).
    EvaluateClassifier {
        #[arg(long)]
        probs: PathBuf,
        #[arg(long)]
        panel: PathBuf,
        /// Days after each date in which a recession makes the label positive.
        #[arg(long, default_value_t = 250)]
        lookahead: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a full experiment pipeline from a JSON config.
    RunExperiment {
        #[arg(value_enum)]
        kind: ExperimentKind,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

/// Resolves relative paths under `$YIELDGAN_OUT` when set.
fn out_path(p: &Path) -> PathBuf {
    match std::env::var_os("YIELDGAN_OUT") {
        Some(root) if p.is_relative() => PathBuf::from(root).join(p),
        _ => p.to_path_buf(),
    }
}

fn ensure_parent(p: &Path) -> Result<()> {
    if let Some(parent) = p.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(())
}

/// Loads a JSON config, letting file fields override the flag-derived base.
fn merged_config<T: serde::Serialize + serde::de::DeserializeOwned>(
    base: T,
    path: &Option<PathBuf>,
) -> Result<T> {
    let Some(path) = path else { return Ok(base) };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    let overrides: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("bad config JSON: {e}")))?;
    let mut merged = serde_json::to_value(&base).expect("config serializes");
    merge_json(&mut merged, overrides);
    serde_json::from_value(merged).map_err(|e| Error::Config(format!("invalid config: {e}")))
}

fn merge_json(base: &mut serde_json::Value, overrides: serde_json::Value) {
    match (base, overrides) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge_json(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn write_sibling_manifest(artifact: &Path, seed: u64, hash: &str) -> Result<()> {
    let manifest = serde_json::json!({ "config_hash": hash, "seed": seed });
    let name = format!(
        "{}.manifest.json",
        artifact.file_name().unwrap_or_default().to_string_lossy()
    );
    let path = artifact.with_file_name(name);
    std::fs::write(path, serde_json::to_string_pretty(&manifest).unwrap())?;
    Ok(())
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Ingest { y1, y10, rec, start, end, policy, out } => {
            let out = out_path(&out);
            ensure_parent(&out)?;
            let s1 = ingest::load_fred_csv(&y1)?;
            let s10 = ingest::load_fred_csv(&y10)?;
            let sr = ingest::load_fred_csv(&rec)?;
            let panel = ingest::align_panel(&s1, &s10, &sr, policy)?;
            let sliced = ingest::slice_period(&panel, start, end)?;
            sliced.save_csv(&out)?;
            let hash = config_hash(&serde_json::json!({
                "start": start, "end": end, "policy": policy,
            }));
            write_sibling_manifest(&out, 0, &hash)?;
            println!("wrote panel with {} weekdays to {}", sliced.len(), out.display());
        }

        Command::MakeSamples { panel, kind, window, horizon, lookahead, future_recession, provenance, out } => {
            let out = out_path(&out);
            ensure_parent(&out)?;
            let p = YieldPanel::load_csv(&panel)?;
            let args = serde_json::json!({
                "window": window, "horizon": horizon, "lookahead": lookahead,
                "future_recession": future_recession,
            });
            let meta = serde_json::json!({
                "source_panel": panel, "seed": 0, "config_hash": config_hash(&args),
            });
            match kind {
                SampleKind::Gan => {
                    let plan = AttributePlan {
                        recession_in_window: true,
                        future_recession_lookahead: future_recession.then_some(lookahead),
                    };
                    let set = sampling::segment_gan_samples(&p, window, &plan)?;
                    sampling::save_sample_set(&set, &out, &provenance, meta)?;
                    println!("wrote {} segments of length {window} to {}.json/.f64", set.n_samples(), out.display());
                }
                SampleKind::Forecast => {
                    let set = sampling::rolling_windows(&p, window, horizon)?;
                    sampling::save_supervised_set(&set, &out, &provenance, meta)?;
                    println!("wrote {} forecast windows to {}.json/.f64", set.n_samples(), out.display());
                }
                SampleKind::Classify => {
                    let set = sampling::rolling_classifier_windows(&p, window, lookahead, None)?;
                    sampling::save_supervised_set(&set, &out, &provenance, meta)?;
                    println!("wrote {} classifier windows to {}.json/.f64", set.n_samples(), out.display());
                }
            }
        }

        Command::TrainGan { data, config, seed, epochs, out } => {
            let out = out_path(&out);
            ensure_parent(&out)?;
            let mut base = DganConfig { seed, ..DganConfig::default() };
            if let Some(e) = epochs {
                base.epochs = e;
            }
            let set = sampling::load_sample_set(&data)?;
            let mut cfg = merged_config(base, &config)?;
            cfg.t = set.t; // the data defines the sample length
            let hash = config_hash(&cfg);
            let outcome = dgan::train_dgan(&cfg, &set)?;
            outcome.history.save_csv(&out.with_extension("history.csv"))?;
            let ck = checkpoint::dgan_to_checkpoint(&outcome.model).with_run_info(cfg.seed, &hash);
            checkpoint::save(&out, &ck)?;
            write_sibling_manifest(&out, cfg.seed, &hash)?;
            if let Some(reason) = outcome.aborted {
                return Err(Error::Numeric(format!("training aborted: {reason}")));
            }
            let last = outcome.history.epochs.last().expect("at least one epoch");
            println!(
                "trained {} epochs (critic {:.4}, gen {:.4}, diversity {:.3}); checkpoint at {}",
                outcome.history.epochs.len(),
                last.critic_loss,
                last.gen_loss,
                last.diversity,
                out.display()
            );
        }

        Command::Generate { ckpt, n, seed, clip_negative, out } => {
            let out = out_path(&out);
            ensure_parent(&out)?;
            let model = checkpoint::dgan_from_checkpoint(&checkpoint::load(&ckpt)?)?;
            let set = dgan::generate(&model.bundle, n, seed, clip_negative)?;
            let meta = serde_json::json!({
                "seed": seed,
                "checkpoint": ckpt,
                "clip_negative": clip_negative,
                "config_hash": config_hash(&model.config),
            });
            sampling::save_sample_set(&set, &out, "synthetic", meta)?;
            println!("generated {n} samples of length {} to {}.json/.f64", set.t, out.display());
        }

        Command::Fidelity { real, synth, panel, max_lag, bins, out } => {
            let out = out_path(&out);
            std::fs::create_dir_all(&out)?;
            let real_set = sampling::load_sample_set(&real)?;
            let synth_set = sampling::load_sample_set(&synth)?;
            let full = match panel {
                Some(p) => {
                    let panel = YieldPanel::load_csv(&p)?;
                    Some(vec![panel.y1().to_vec(), panel.y10().to_vec()])
                }
                None => None,
            };
            let report = fidelity_report(&real_set, &synth_set, full.as_deref(), FidelityOptions { bins, max_lag })?;
            std::fs::write(out.join("fidelity_report.json"), serde_json::to_string_pretty(&report).unwrap())?;

            let mut hist = String::from("feature,bin,lo,hi,real,synthetic\n");
            for h in &report.histograms {
                let width = (h.hi - h.lo) / h.real.len() as f64;
                for (i, (r, s)) in h.real.iter().zip(&h.synthetic).enumerate() {
                    let lo = h.lo + i as f64 * width;
                    hist.push_str(&format!("{},{},{},{},{},{}\n", h.feature, i, lo, lo + width, r, s));
                }
            }
            std::fs::write(out.join("histograms.csv"), hist)?;

            let ac = &report.autocorrelation;
            let mut acsv = String::from("lag,synthetic,real_by_sample,real_full_y1,real_full_y10\n");
            for lag in 0..=ac.max_lag {
                let full0 = ac.real_full.as_ref().and_then(|f| f[0].get(lag)).map(|v| v.to_string()).unwrap_or_default();
                let full1 = ac.real_full.as_ref().and_then(|f| f[1].get(lag)).map(|v| v.to_string()).unwrap_or_default();
                acsv.push_str(&format!(
                    "{lag},{},{},{full0},{full1}\n",
                    ac.synthetic.pooled[lag], ac.real_by_sample.pooled[lag]
                ));
            }
            std::fs::write(out.join("autocorrelation.csv"), acsv)?;

            println!(
                "correlation real {:.3} synthetic {:.3}; report in {}",
                report.correlation_real,
                report.correlation_synthetic,
                out.display()
            );
        }

        Command::TrainForecaster { data, horizon, config, seed, out } => {
            let out = out_path(&out);
            ensure_parent(&out)?;
            let set = sampling::load_supervised_set(&data)?;
            let cfg = merged_config(NetTrainConfig { seed, ..NetTrainConfig::default() }, &config)?;
            let hash = config_hash(&cfg);
            let (model, losses) = downstream::train_forecaster(&set, horizon, &cfg)?;
            let ck = checkpoint::forecaster_to_checkpoint(&model, &cfg).with_run_info(cfg.seed, &hash);
            checkpoint::save(&out, &ck)?;
            write_sibling_manifest(&out, cfg.seed, &hash)?;
            println!(
                "trained forecaster (h={horizon}) for {} epochs, final loss {:.6}; checkpoint at {}",
                losses.len(),
                losses.last().unwrap(),
                out.display()
            );
        }

        Command::Forecast { ckpt, panel, out } => {
            let out = out_path(&out);
            ensure_parent(&out)?;
            let model = checkpoint::forecaster_from_checkpoint(&checkpoint::load(&ckpt)?)?;
            let p = YieldPanel::load_csv(&panel)?;
            let (w, h) = (model.w, model.h);
            if p.len() < w {
                return Err(Error::Data(format!("panel has {} days, window needs {w}", p.len())));
            }
            let feats = p.features();
            let mut csv = String::from("date,y1,y10\n");
            for i in 0..=(p.len() - w) {
                let pred = downstream::forecast(&model, &feats[i * 2..(i + w) * 2])?;
                // the forecast is dated by the final predicted day when it
                // lands inside the panel, else by offset from the window end
                let target_idx = i + w + h - 1;
                let date = if target_idx < p.len() {
                    p.dates()[target_idx].to_string()
                } else {
                    format!("{}+{}d", p.dates()[p.len() - 1], target_idx - p.len() + 1)
                };
                csv.push_str(&format!("{date},{},{}\n", pred[(h - 1) * 2], pred[(h - 1) * 2 + 1]));
            }
            std::fs::write(&out, csv)?;
            println!("wrote forecasts to {}", out.display());
        }

        Command::TrainClassifier { kind, data, config, lambda, seed, out } => {
            let out = out_path(&out);
            ensure_parent(&out)?;
            let set = sampling::load_supervised_set(&data)?;
            match kind {
                ClassifierKind::Logistic => {
                    let opts = merged_config(LogisticOptions::default(), &config)?;
                    let lambda = match lambda {
                        Some(l) => l,
                        None => downstream::choose_lambda_cv(
                            &set,
                            &[1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0],
                            5,
                            seed,
                        )?,
                    };
                    let hash = config_hash(&serde_json::json!({ "lambda": lambda, "opts": opts }));
                    let model = downstream::train_logistic_l1(&set, lambda, &opts)?;
                    if model.single_class {
                        eprintln!("warning: single-class training data; fitted intercept only");
                    }
                    let ck = checkpoint::logistic_to_checkpoint(&model).with_run_info(seed, &hash);
                    checkpoint::save(&out, &ck)?;
                    write_sibling_manifest(&out, seed, &hash)?;
                    let nonzero = model.beta.iter().filter(|b| **b != 0.0).count();
                    println!(
                        "trained logistic model (lambda {lambda}, {nonzero}/{} active coefficients); checkpoint at {}",
                        model.beta.len(),
                        out.display()
                    );
                }
                ClassifierKind::Lstm => {
                    let cfg = merged_config(ClassifierNetConfig { seed, ..ClassifierNetConfig::default() }, &config)?;
                    let hash = config_hash(&cfg);
                    let (model, losses) = downstream::train_lstm_classifier(&set, &cfg)?;
                    let ck = checkpoint::classifier_to_checkpoint(&model, &cfg).with_run_info(cfg.seed, &hash);
                    checkpoint::save(&out, &ck)?;
                    write_sibling_manifest(&out, cfg.seed, &hash)?;
                    println!(
                        "trained LSTM classifier for {} epochs, final loss {:.6}; checkpoint at {}",
                        losses.len(),
                        losses.last().unwrap(),
                        out.display()
                    );
                }
            }
        }

        Command::Classify { ckpt, panel, out } => {
            let out = out_path(&out);
            ensure_parent(&out)?;
            let ck = checkpoint::load(&ckpt)?;
            let p = YieldPanel::load_csv(&panel)?;
            let feats = p.features();
            type Predictor = Box<dyn Fn(&[f64]) -> Result<f64>>;
            let predict: Predictor = match ck.kind.as_str() {
                checkpoint::KIND_LOGISTIC => {
                    let m = checkpoint::logistic_from_checkpoint(&ck)?;
                    Box::new(move |w| downstream::logistic_predict(&m, w))
                }
                checkpoint::KIND_LSTM_CLASSIFIER => {
                    let m = checkpoint::classifier_from_checkpoint(&ck)?;
                    Box::new(move |w| downstream::classify(&m, w))
                }
                other => return Err(Error::Data(format!("checkpoint kind {other:?} is not a classifier"))),
            };
            let w = match ck.kind.as_str() {
                checkpoint::KIND_LOGISTIC => checkpoint::logistic_from_checkpoint(&ck)?.w,
                _ => checkpoint::classifier_from_checkpoint(&ck)?.w,
            };
            if p.len() < w {
                return Err(Error::Data(format!("panel has {} days, window needs {w}", p.len())));
            }
            let mut csv = String::from("date,probability\n");
            for i in 0..=(p.len() - w) {
                let prob = predict(&feats[i * 2..(i + w) * 2])?;
                csv.push_str(&format!("{},{prob}\n", p.dates()[i + w - 1]));
            }
            std::fs::write(&out, csv)?;
            println!("wrote probabilities to {}", out.display());
        }

        Command::EvaluateForecasts { forecasts, panel, mape_include_all, out } => {
            let out = out_path(&out);
            ensure_parent(&out)?;
            let p = YieldPanel::load_csv(&panel)?;
            let truth: std::collections::HashMap<NaiveDate, (f64, f64)> = p
                .dates()
                .iter()
                .enumerate()
                .map(|(i, d)| (*d, (p.y1()[i], p.y10()[i])))
                .collect();
            let (mut pred1, mut pred10, mut true1, mut true10) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
            let mut skipped = 0usize;
            for (i, line) in std::fs::read_to_string(&forecasts)?.lines().enumerate().skip(1) {
                let mut parts = line.split(',');
                let (Some(d), Some(a), Some(b)) = (parts.next(), parts.next(), parts.next()) else {
                    return Err(Error::Data(format!("forecast csv row {i} is malformed")));
                };
                let Ok(date) = d.parse::<NaiveDate>() else {
                    skipped += 1; // e.g. horizon dates past the panel end
                    continue;
                };
                match truth.get(&date) {
                    Some(&(t1, t10)) => {
                        pred1.push(a.parse::<f64>().map_err(|_| Error::Data(format!("bad value in row {i}")))?);
                        pred10.push(b.parse::<f64>().map_err(|_| Error::Data(format!("bad value in row {i}")))?);
                        true1.push(t1);
                        true10.push(t10);
                    }
                    None => skipped += 1,
                }
            }
            if pred1.is_empty() {
                return Err(Error::Data("no forecast dates overlap the panel".into()));
            }
            let report = serde_json::json!({
                "n_scored": pred1.len(),
                "n_skipped": skipped,
                "y1": {
                    "rmse": yieldgan::metrics::rmse(&pred1, &true1)?,
                    "mape": yieldgan::metrics::mape(&pred1, &true1, mape_include_all)?,
                },
                "y10": {
                    "rmse": yieldgan::metrics::rmse(&pred10, &true10)?,
                    "mape": yieldgan::metrics::mape(&pred10, &true10, mape_include_all)?,
                },
            });
            std::fs::write(&out, serde_json::to_string_pretty(&report).unwrap())?;
            println!("{report}");
        }

        Command::EvaluateClassifier { probs, panel, lookahead, out } => {
            let out = out_path(&out);
            ensure_parent(&out)?;
            let p = YieldPanel::load_csv(&panel)?;
            let index: std::collections::HashMap<NaiveDate, usize> =
                p.dates().iter().enumerate().map(|(i, d)| (*d, i)).collect();
            let rec = p.recession();
            let mut scores = Vec::new();
            let mut labels = Vec::new();
            let mut skipped = 0usize;
            for (i, line) in std::fs::read_to_string(&probs)?.lines().enumerate().skip(1) {
                let Some((d, v)) = line.split_once(',') else {
                    return Err(Error::Data(format!("probability csv row {i} is malformed")));
                };
                let date: NaiveDate = d
                    .parse()
                    .map_err(|_| Error::Data(format!("bad date in row {i}: {d:?}")))?;
                let Some(&pos) = index.get(&date) else {
                    skipped += 1;
                    continue;
                };
                if pos + 1 + lookahead > rec.len() {
                    skipped += 1; // lookahead not fully covered by the panel
                    continue;
                }
                scores.push(v.parse::<f64>().map_err(|_| Error::Data(format!("bad probability in row {i}")))?);
                labels.push(u8::from(rec[pos + 1..pos + 1 + lookahead].contains(&1)));
            }
            let roc = yieldgan::metrics::roc_auc(&scores, &labels)?;
            let mut roc_csv = String::from("fpr,tpr\n");
            for (x, y) in &roc.points {
                roc_csv.push_str(&format!("{x},{y}\n"));
            }
            std::fs::write(out.with_extension("roc.csv"), roc_csv)?;
            let report = serde_json::json!({
                "auc": roc.auc,
                "n_scored": scores.len(),
                "n_skipped": skipped,
                "positives": labels.iter().filter(|&&l| l == 1).count(),
            });
            std::fs::write(&out, serde_json::to_string_pretty(&report).unwrap())?;
            println!("{report}");
        }

        Command::RunExperiment { kind, config, out } => {
            let out = out_path(&out);
            match kind {
                ExperimentKind::Forecast => {
                    let cfg = merged_config(ForecastExperimentConfig::default(), &config)?;
                    let panel = cfg.data.load_panel()?;
                    let report = run_experiment_forecast(&cfg, &panel, &out)?;
                    for h in &report.horizons {
                        println!("horizon {}:", h.horizon);
                        if let Some(table) = report.table_csv(h.horizon) {
                            print!("{table}");
                        }
                    }
                    println!("report in {}", out.display());
                }
                ExperimentKind::Recession => {
                    let cfg = merged_config(RecessionExperimentConfig::default(), &config)?;
                    let panel = cfg.data.load_panel()?;
                    let report = run_experiment_recession(&cfg, &panel, &out)?;
                    println!("lambda = {}", report.lambda);
                    for m in &report.models {
                        println!("{:>8} / {:<9} AUC {:.3}", m.kind, m.variant, m.auc);
                    }
                    println!("report in {}", out.display());
                }
            }
        }
    }
    Ok(())
}

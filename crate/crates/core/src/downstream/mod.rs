//! Downstream predictive models trained on real, synthetic, or combined sets:
//! a stacked-LSTM yield forecaster (1-day and 15-day horizons), an
//! L1-regularized logistic recession classifier, and an LSTM recession
//! classifier.

mod logistic;

pub use logistic::{
    choose_lambda_cv, logistic_objective, logistic_predict, soft_threshold, train_logistic_l1,
    LogisticModel, LogisticOptions, Standardizer,
};

use rand::seq::SliceRandom;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, Tape, Tensor};
use crate::error::{Error, Result};
use crate::nets::{
    cross_entropy, dropout, mse_loss, one_hot_binary, AdamParams, AdamState, Activation, Dense,
    LstmStack, Mode, Parameterized,
};
use crate::sampling::{SupervisedSet, Targets};

/// Per-feature min/max scaler mapping training values to [-1, 1]
/// (midpoint/half-width form, so constant features map to 0).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl FeatureScaler {
    /// Fits on flattened `[.., step, feature]` data with `f` features.
    pub fn fit(values: &[f64], f: usize) -> FeatureScaler {
        let mut min = vec![f64::INFINITY; f];
        let mut max = vec![f64::NEG_INFINITY; f];
        for (i, &v) in values.iter().enumerate() {
            let j = i % f;
            min[j] = min[j].min(v);
            max[j] = max[j].max(v);
        }
        FeatureScaler { min, max }
    }

    pub fn transform(&self, values: &[f64]) -> Vec<f64> {
        let f = self.min.len();
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let j = i % f;
                let mid = (self.min[j] + self.max[j]) / 2.0;
                let half = ((self.max[j] - self.min[j]) / 2.0).max(1e-12);
                (v - mid) / half
            })
            .collect()
    }

    pub fn inverse(&self, values: &[f64]) -> Vec<f64> {
        let f = self.min.len();
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let j = i % f;
                let mid = (self.min[j] + self.max[j]) / 2.0;
                let half = ((self.max[j] - self.min[j]) / 2.0).max(1e-12);
                v * half + mid
            })
            .collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct NetTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub dropout: f64,
    /// LSTM widths: two stacked layers for the forecaster, one for the
    /// classifier.
    pub lstm_widths: Vec<usize>,
    pub seed: u64,
}

impl Default for NetTrainConfig {
    fn default() -> NetTrainConfig {
        NetTrainConfig {
            epochs: 50,
            batch_size: 128,
            lr: 1e-3,
            dropout: 0.2,
            lstm_widths: vec![64, 64],
            seed: 0,
        }
    }
}

/// Two stacked tanh LSTM layers, dropout, and a dense head of width H*F.
#[derive(Clone, Debug)]
pub struct ForecastModel {
    pub lstm: LstmStack,
    pub head: Dense,
    pub dropout: f64,
    pub w: usize,
    pub h: usize,
    pub f: usize,
    pub scaler: FeatureScaler,
}

impl Parameterized for ForecastModel {
    fn params(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = Vec::new();
        for (n, t) in self.lstm.params() {
            out.push((format!("lstm.{n}"), t));
        }
        for (n, t) in self.head.params() {
            out.push((format!("head.{n}"), t));
        }
        out
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = Vec::new();
        for (n, t) in self.lstm.params_mut() {
            out.push((format!("lstm.{n}"), t));
        }
        for (n, t) in self.head.params_mut() {
            out.push((format!("head.{n}"), t));
        }
        out
    }
}

/// Normalized per-timestep batch tensors (`w` of `n x f`) from raw windows.
fn timestep_tensors(windows: &[&[f64]], w: usize, f: usize, scaler: &FeatureScaler) -> Vec<Tensor> {
    let n = windows.len();
    let mut steps = vec![vec![0.0; n * f]; w];
    for (row, win) in windows.iter().enumerate() {
        let z = scaler.transform(win);
        for s in 0..w {
            steps[s][row * f..(row + 1) * f].copy_from_slice(&z[s * f..(s + 1) * f]);
        }
    }
    steps.into_iter().map(|d| Tensor::from_vec(&[n, f], d)).collect()
}

fn shuffled_batches(n: usize, batch: usize, rng: &mut ChaCha20Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch).map(|c| c.to_vec()).collect()
}

/// Trains the stacked-LSTM forecaster with MSE loss and Adam. Inputs and
/// targets are scaled to [-1, 1] by training-set min/max; the scaler is kept
/// on the model for inference parity. Returns per-epoch mean losses.
pub fn train_forecaster(
    set: &SupervisedSet,
    h: usize,
    config: &NetTrainConfig,
) -> Result<(ForecastModel, Vec<f64>)> {
    let Targets::Series { h: set_h, .. } = &set.targets else {
        return Err(Error::Data("train_forecaster needs series targets".into()));
    };
    if *set_h != h {
        return Err(Error::Config(format!("requested horizon {h} but the set has H = {set_h}")));
    }
    if set.n_samples() == 0 {
        return Err(Error::Data("cannot train on an empty set".into()));
    }
    let (w, f) = (set.w, set.f);
    let scaler = FeatureScaler::fit(set.inputs_flat(), f);

    let mut init = crate::rng::stream(config.seed, "forecaster-init");
    let mut model = ForecastModel {
        lstm: LstmStack::new(f, &config.lstm_widths, &mut init),
        head: Dense::new(*config.lstm_widths.last().unwrap(), h * f, Activation::Identity, &mut init),
        dropout: config.dropout,
        w,
        h,
        f,
        scaler,
    };
    let mut adam = AdamState::for_params(AdamParams::with_lr(config.lr), &model.params());
    let mut shuffle_rng = crate::rng::stream(config.seed, "forecaster-shuffle");
    let mut dropout_rng = crate::rng::stream(config.seed, "forecaster-dropout");

    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let mut sum = 0.0;
        let mut count = 0usize;
        for batch in shuffled_batches(set.n_samples(), config.batch_size, &mut shuffle_rng) {
            let windows: Vec<&[f64]> = batch.iter().map(|&i| set.input(i)).collect();
            let steps = timestep_tensors(&windows, w, f, &model.scaler);
            let mut target = Vec::with_capacity(batch.len() * h * f);
            for &i in &batch {
                target.extend(model.scaler.transform(set.series_target(i)));
            }
            let target = Tensor::from_vec(&[batch.len(), h * f], target);

            let mut tape = Tape::new();
            let ids = crate::nets::bind_leaves(&mut tape, &model, true);
            let mut it = ids.iter().copied();
            let lstm = model.lstm.bind_ids(&mut it);
            let head = model.head.bind_ids(&mut it);
            let seq: Vec<NodeId> = steps.iter().map(|s| tape.constant(s.clone())).collect();
            let hidden = lstm.forward_last(&mut tape, &seq);
            let dropped = dropout(&mut tape, hidden, model.dropout, Mode::Train, &mut dropout_rng);
            let pred = head.forward(&mut tape, dropped);
            let loss = mse_loss(&mut tape, pred, &target);

            let loss_val = tape.value(loss).item();
            if !loss_val.is_finite() {
                return Err(Error::Numeric(format!("forecaster loss is {loss_val}")));
            }
            let grads = tape.backward(loss);
            let gt: Vec<Tensor> = ids.iter().map(|&id| tape.grad(&grads, id)).collect();
            adam.step(&mut model.params_mut(), &gt)?;
            sum += loss_val;
            count += 1;
        }
        epoch_losses.push(sum / count as f64);
    }
    Ok((model, epoch_losses))
}

/// Deterministic H x F forecast (percent-yield units) from a W x F window.
pub fn forecast(model: &ForecastModel, window: &[f64]) -> Result<Vec<f64>> {
    if window.len() != model.w * model.f {
        return Err(Error::Data(format!(
            "forecast window has {} values, expected {}x{}",
            window.len(),
            model.w,
            model.f
        )));
    }
    let steps = timestep_tensors(&[window], model.w, model.f, &model.scaler);
    let mut tape = Tape::new();
    let ids = crate::nets::bind_leaves(&mut tape, model, false);
    let mut it = ids.into_iter();
    let lstm = model.lstm.bind_ids(&mut it);
    let head = model.head.bind_ids(&mut it);
    let seq: Vec<NodeId> = steps.iter().map(|s| tape.constant(s.clone())).collect();
    let hidden = lstm.forward_last(&mut tape, &seq);
    let pred = head.forward(&mut tape, hidden); // eval mode: dropout is identity
    Ok(model.scaler.inverse(tape.value(pred).data()))
}

/// Single tanh LSTM layer, dropout, dense(100, tanh), dense(2, softmax).
#[derive(Clone, Debug)]
pub struct ClassifierModel {
    pub lstm: LstmStack,
    pub dense: Dense,
    pub output: Dense,
    pub dropout: f64,
    pub w: usize,
    pub f: usize,
    pub scaler: FeatureScaler,
}

impl Parameterized for ClassifierModel {
    fn params(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = Vec::new();
        for (n, t) in self.lstm.params() {
            out.push((format!("lstm.{n}"), t));
        }
        for (n, t) in self.dense.params() {
            out.push((format!("dense.{n}"), t));
        }
        for (n, t) in self.output.params() {
            out.push((format!("output.{n}"), t));
        }
        out
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = Vec::new();
        for (n, t) in self.lstm.params_mut() {
            out.push((format!("lstm.{n}"), t));
        }
        for (n, t) in self.dense.params_mut() {
            out.push((format!("dense.{n}"), t));
        }
        for (n, t) in self.output.params_mut() {
            out.push((format!("output.{n}"), t));
        }
        out
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct ClassifierNetConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub dropout: f64,
    pub lstm_width: usize,
    pub dense_width: usize,
    pub seed: u64,
}

impl Default for ClassifierNetConfig {
    fn default() -> ClassifierNetConfig {
        ClassifierNetConfig {
            epochs: 50,
            batch_size: 128,
            lr: 1e-3,
            dropout: 0.2,
            lstm_width: 64,
            dense_width: 100,
            seed: 0,
        }
    }
}

fn classifier_probs(
    model: &ClassifierModel,
    tape: &mut Tape,
    ids: &[NodeId],
    steps: &[Tensor],
    mode: Mode,
    dropout_rng: &mut ChaCha20Rng,
) -> NodeId {
    let mut it = ids.iter().copied();
    let lstm = model.lstm.bind_ids(&mut it);
    let dense = model.dense.bind_ids(&mut it);
    let output = model.output.bind_ids(&mut it);
    let seq: Vec<NodeId> = steps.iter().map(|s| tape.constant(s.clone())).collect();
    let hidden = lstm.forward_last(tape, &seq);
    let dropped = dropout(tape, hidden, model.dropout, mode, dropout_rng);
    let mid = dense.forward(tape, dropped);
    output.forward(tape, mid)
}

/// Trains the LSTM classifier with categorical cross-entropy and Adam.
/// Returns per-epoch mean losses.
pub fn train_lstm_classifier(
    set: &SupervisedSet,
    config: &ClassifierNetConfig,
) -> Result<(ClassifierModel, Vec<f64>)> {
    let Targets::Labels(labels) = &set.targets else {
        return Err(Error::Data("train_lstm_classifier needs binary targets".into()));
    };
    if set.n_samples() == 0 {
        return Err(Error::Data("cannot train on an empty set".into()));
    }
    let (w, f) = (set.w, set.f);
    let scaler = FeatureScaler::fit(set.inputs_flat(), f);
    let mut init = crate::rng::stream(config.seed, "classifier-init");
    let mut model = ClassifierModel {
        lstm: LstmStack::new(f, &[config.lstm_width], &mut init),
        dense: Dense::new(config.lstm_width, config.dense_width, Activation::Tanh, &mut init),
        output: Dense::new(config.dense_width, 2, Activation::Softmax, &mut init),
        dropout: config.dropout,
        w,
        f,
        scaler,
    };
    let mut adam = AdamState::for_params(AdamParams::with_lr(config.lr), &model.params());
    let mut shuffle_rng = crate::rng::stream(config.seed, "classifier-shuffle");
    let mut dropout_rng = crate::rng::stream(config.seed, "classifier-dropout");

    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let mut sum = 0.0;
        let mut count = 0usize;
        for batch in shuffled_batches(set.n_samples(), config.batch_size, &mut shuffle_rng) {
            let windows: Vec<&[f64]> = batch.iter().map(|&i| set.input(i)).collect();
            let steps = timestep_tensors(&windows, w, f, &model.scaler);
            let batch_labels: Vec<u8> = batch.iter().map(|&i| labels[i]).collect();
            let onehot = one_hot_binary(&batch_labels);

            let mut tape = Tape::new();
            let ids = crate::nets::bind_leaves(&mut tape, &model, true);
            let probs = classifier_probs(&model, &mut tape, &ids, &steps, Mode::Train, &mut dropout_rng);
            let loss = cross_entropy(&mut tape, probs, &onehot);

            let loss_val = tape.value(loss).item();
            if !loss_val.is_finite() {
                return Err(Error::Numeric(format!("classifier loss is {loss_val}")));
            }
            let grads = tape.backward(loss);
            let gt: Vec<Tensor> = ids.iter().map(|&id| tape.grad(&grads, id)).collect();
            adam.step(&mut model.params_mut(), &gt)?;
            sum += loss_val;
            count += 1;
        }
        epoch_losses.push(sum / count as f64);
    }
    Ok((model, epoch_losses))
}

/// Probability that a recession starts or persists within the labeling
/// lookahead after this window: the positive-class softmax component.
pub fn classify(model: &ClassifierModel, window: &[f64]) -> Result<f64> {
    if window.len() != model.w * model.f {
        return Err(Error::Data(format!(
            "classification window has {} values, expected {}x{}",
            window.len(),
            model.w,
            model.f
        )));
    }
    let steps = timestep_tensors(&[window], model.w, model.f, &model.scaler);
    let mut tape = Tape::new();
    let ids = crate::nets::bind_leaves(&mut tape, model, false);
    let mut rng = crate::rng::stream(0, "unused-eval");
    let probs = classifier_probs(model, &mut tape, &ids, &steps, Mode::Eval, &mut rng);
    let row = tape.value(probs);
    debug_assert!((row.data()[0] + row.data()[1] - 1.0).abs() < 1e-9);
    Ok(row.data()[1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::SupervisedSet;
    use rand::Rng;

    fn constant_forecast_set(n: usize, c: f64) -> SupervisedSet {
        let (w, h, f) = (10, 1, 2);
        let inputs = vec![c; n * w * f];
        let targets = vec![c; n * h * f];
        SupervisedSet::new_forecast(w, f, inputs, h, targets).unwrap()
    }

    #[test]
    fn forecaster_fits_a_constant_dataset() {
        let c = 4.2;
        let set = constant_forecast_set(100, c);
        let cfg = NetTrainConfig { epochs: 50, batch_size: 32, lstm_widths: vec![8, 8], dropout: 0.0, seed: 1, ..Default::default() };
        let (model, losses) = train_forecaster(&set, 1, &cfg).unwrap();
        assert!(losses.last().unwrap() < &1e-3, "final loss {}", losses.last().unwrap());
        let pred = forecast(&model, &[c; 10 * 2]).unwrap();
        for v in pred {
            assert!((v - c).abs() < 0.2, "prediction {v} vs constant {c}");
        }
    }

    #[test]
    fn forecaster_determinism_and_shapes() {
        let mut rng = crate::rng::stream(2, "fcast-det");
        let (w, h, f, n) = (6, 15, 2, 12);
        let inputs: Vec<f64> = (0..n * w * f).map(|_| rng.gen_range(1.0..5.0)).collect();
        let targets: Vec<f64> = (0..n * h * f).map(|_| rng.gen_range(1.0..5.0)).collect();
        let set = SupervisedSet::new_forecast(w, f, inputs, h, targets).unwrap();
        let cfg = NetTrainConfig { epochs: 2, batch_size: 4, lstm_widths: vec![6, 6], seed: 7, ..Default::default() };
        let (m1, l1) = train_forecaster(&set, 15, &cfg).unwrap();
        let (m2, l2) = train_forecaster(&set, 15, &cfg).unwrap();
        assert_eq!(l1, l2);
        for ((_, a), (_, b)) in m1.params().iter().zip(m2.params()) {
            assert_eq!(a.data(), b.data());
        }
        // H=15 output has 15 x 2 values
        let out = forecast(&m1, set.input(0)).unwrap();
        assert_eq!(out.len(), 15 * 2);
        // repeated calls identical
        assert_eq!(out, forecast(&m1, set.input(0)).unwrap());
    }

    #[test]
    fn forecaster_rejects_wrong_horizon_and_shape() {
        let set = constant_forecast_set(4, 1.0);
        let cfg = NetTrainConfig { epochs: 1, lstm_widths: vec![4], ..Default::default() };
        assert!(train_forecaster(&set, 5, &cfg).is_err());
        let (model, _) = train_forecaster(&set, 1, &cfg).unwrap();
        assert!(forecast(&model, &[1.0; 7]).is_err());
    }

    fn sign_toy_classifier_set(n: usize, seed: u64) -> SupervisedSet {
        // class = 1 iff the window mean is positive
        let mut rng = crate::rng::stream(seed, "cls-toy");
        let (w, f) = (8, 2);
        let mut inputs = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n {
            let offset: f64 = if rng.gen_bool(0.5) { 1.5 } else { -1.5 };
            for _ in 0..w * f {
                inputs.push(offset + rng.gen_range(-0.5..0.5));
            }
            labels.push(u8::from(offset > 0.0));
        }
        SupervisedSet::new_classify(w, f, inputs, labels).unwrap()
    }

    #[test]
    fn lstm_classifier_learns_a_linearly_trivial_toy() {
        let set = sign_toy_classifier_set(100, 3);
        let cfg = ClassifierNetConfig {
            epochs: 30,
            batch_size: 25,
            lstm_width: 8,
            dense_width: 16,
            dropout: 0.0,
            seed: 11,
            ..Default::default()
        };
        let (model, losses) = train_lstm_classifier(&set, &cfg).unwrap();
        assert!(losses.iter().all(|l| l.is_finite()));
        let mut correct = 0;
        for i in 0..set.n_samples() {
            let p = classify(&model, set.input(i)).unwrap();
            if (p >= 0.5) == (set.labels()[i] == 1) {
                correct += 1;
            }
        }
        let acc = correct as f64 / set.n_samples() as f64;
        assert!(acc >= 0.95, "training accuracy {acc}");
    }

    #[test]
    fn classifier_probabilities_sum_to_one_and_are_deterministic() {
        let set = sign_toy_classifier_set(20, 4);
        let cfg = ClassifierNetConfig { epochs: 1, lstm_width: 4, dense_width: 6, seed: 5, ..Default::default() };
        let (m1, _) = train_lstm_classifier(&set, &cfg).unwrap();
        let (m2, _) = train_lstm_classifier(&set, &cfg).unwrap();
        for ((_, a), (_, b)) in m1.params().iter().zip(m2.params()) {
            assert_eq!(a.data(), b.data());
        }
        let p = classify(&m1, set.input(0)).unwrap();
        assert!((0.0..=1.0).contains(&p));
        assert_eq!(p, classify(&m1, set.input(0)).unwrap());
    }

    #[test]
    fn scaler_statistics_come_from_training_inputs_only() {
        let set = constant_forecast_set(5, 2.0);
        let cfg = NetTrainConfig { epochs: 1, lstm_widths: vec![4], ..Default::default() };
        let (model, _) = train_forecaster(&set, 1, &cfg).unwrap();
        // stored stats equal training-set moments (min = max = 2.0 per feature)
        assert_eq!(model.scaler.min, vec![2.0, 2.0]);
        assert_eq!(model.scaler.max, vec![2.0, 2.0]);
    }
}

//! DoppelGANger-style generator/critic system.
//!
//! Three-stage generation: an attribute MLP samples per-series indicator
//! metadata from noise, a min/max MLP maps those attributes (plus noise) to
//! per-sample normalization metadata (midpoint and half-range per feature),
//! and an LSTM emits the series itself in batches of `S` steps per pass, so a
//! length-`T` sample takes `T/S` passes. Two Wasserstein critics score the
//! result: the primary critic sees metadata and the full series, the auxiliary
//! critic only the metadata, combined with weight `alpha`.

mod train;

pub use train::{train_dgan, DganModel, EpochStats, TrainOutcome, TrainingHistory};

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, Tape, Tensor};
use crate::error::{Error, Result};
use crate::nets::{Activation, BoundDense, BoundLstmStack, BoundMlp, Dense, LstmStack, Mlp, Mode, Parameterized};
use crate::sampling::SampleSet;

/// Floor applied to half-ranges so constant series normalize to zero instead
/// of dividing by zero.
pub const HALFRANGE_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct DganConfig {
    /// Sample length in days.
    pub t: usize,
    /// Steps emitted per generator pass; `t` must be divisible by `s`.
    pub s: usize,
    pub z_attr: usize,
    pub z_minmax: usize,
    pub z_seq: usize,
    pub attr_hidden: Vec<usize>,
    pub minmax_hidden: Vec<usize>,
    pub seq_width: usize,
    pub critic_hidden: Vec<usize>,
    pub aux_hidden: Vec<usize>,
    pub critic_dropout: f64,
    pub aux_dropout: f64,
    /// Weight of the auxiliary (metadata-only) critic in the combined loss.
    pub alpha: f64,
    /// Critic updates per generator update.
    pub critic_steps: usize,
    pub lr_g: f64,
    pub lr_d: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// When true, critics are regularized by a gradient penalty on
    /// real/fake interpolates; when false, weights are clipped instead.
    pub gradient_penalty: bool,
    pub gp_coeff: f64,
    pub weight_clip: f64,
    pub seed: u64,
}

impl Default for DganConfig {
    fn default() -> DganConfig {
        DganConfig {
            t: 125,
            s: 5,
            z_attr: 8,
            z_minmax: 8,
            z_seq: 8,
            attr_hidden: vec![64, 64],
            minmax_hidden: vec![64, 64],
            seq_width: 128,
            critic_hidden: vec![128, 128, 128],
            aux_hidden: vec![64, 64],
            critic_dropout: 0.3,
            aux_dropout: 0.3,
            alpha: 1.0,
            critic_steps: 1,
            lr_g: 1e-4,
            lr_d: 1e-4,
            epochs: 2000,
            batch_size: 128,
            gradient_penalty: true,
            gp_coeff: 10.0,
            weight_clip: 0.01,
            seed: 0,
        }
    }
}

impl DganConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t == 0 || self.s == 0 || !self.t.is_multiple_of(self.s) {
            return Err(Error::Config(format!("t = {} must be a positive multiple of s = {}", self.t, self.s)));
        }
        if self.critic_steps == 0 {
            return Err(Error::Config("critic_steps must be >= 1".into()));
        }
        if self.lr_g <= 0.0 || self.lr_d <= 0.0 {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch_size and epochs must be positive".into()));
        }
        if self.z_attr == 0 || self.z_minmax == 0 || self.z_seq == 0 {
            return Err(Error::Config("latent dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.critic_dropout) || !(0.0..1.0).contains(&self.aux_dropout) {
            return Err(Error::Config("dropout rates must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Per-sample, per-feature normalization metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalizer {
    /// `[sample][feature]` midpoints, (min + max) / 2.
    pub midpoint: Vec<f64>,
    /// `[sample][feature]` half-ranges, (max - min) / 2.
    pub halfrange: Vec<f64>,
    pub f: usize,
}

/// Attribute names appended by normalization: `mid_<j>` then `half_<j>`.
pub fn minmax_attr_names(f: usize) -> Vec<String> {
    (0..f).map(|j| format!("mid_{j}")).chain((0..f).map(|j| format!("half_{j}"))).collect()
}

/// Maps every sample and feature into [-1, 1] by its own min/max and appends
/// the midpoint/half-range metadata as real-valued attributes.
pub fn normalize_samples(set: &SampleSet) -> Result<(SampleSet, Normalizer)> {
    let n = set.n_samples();
    if n == 0 {
        return Err(Error::Data("cannot normalize an empty sample set".into()));
    }
    let (t, f) = (set.t, set.f);
    let mut midpoint = Vec::with_capacity(n * f);
    let mut halfrange = Vec::with_capacity(n * f);
    let mut features = Vec::with_capacity(n * t * f);
    let mut attributes = Vec::with_capacity(n * (set.n_attrs() + 2 * f));

    for i in 0..n {
        let sample = set.sample(i);
        let mut mids = Vec::with_capacity(f);
        let mut halves = Vec::with_capacity(f);
        for j in 0..f {
            let column = (0..t).map(|s| sample[s * f + j]);
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for v in column {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            mids.push((lo + hi) / 2.0);
            halves.push((hi - lo) / 2.0);
        }
        for s in 0..t {
            for j in 0..f {
                let denom = halves[j].max(HALFRANGE_FLOOR);
                features.push((sample[s * f + j] - mids[j]) / denom);
            }
        }
        attributes.extend_from_slice(set.attrs(i));
        attributes.extend_from_slice(&mids);
        attributes.extend_from_slice(&halves);
        midpoint.extend_from_slice(&mids);
        halfrange.extend_from_slice(&halves);
    }

    let mut schema = set.attr_schema.clone();
    schema.extend(minmax_attr_names(f));
    let normalized = SampleSet::new(t, f, features, attributes, schema)?;
    Ok((normalized, Normalizer { midpoint, halfrange, f }))
}

/// Rescales one normalized `t x f` series by midpoint/half-range metadata.
pub fn denormalize(series: &[f64], f: usize, midpoint: &[f64], halfrange: &[f64]) -> Result<Vec<f64>> {
    assert_eq!(midpoint.len(), f, "midpoint length");
    assert_eq!(halfrange.len(), f, "halfrange length");
    if halfrange.iter().any(|&h| h < 0.0) {
        return Err(Error::Data("negative halfrange".into()));
    }
    if midpoint.iter().chain(halfrange).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite normalization metadata".into()));
    }
    Ok(series
        .iter()
        .enumerate()
        .map(|(i, &v)| v * halfrange[i % f] + midpoint[i % f])
        .collect())
}

/// Static shape information shared by the generator stages.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GenSpec {
    pub t: usize,
    pub s: usize,
    pub f: usize,
    /// Indicator attribute names generated jointly with the series.
    pub attr_names: Vec<String>,
    pub z_attr: usize,
    pub z_minmax: usize,
    pub z_seq: usize,
}

impl GenSpec {
    pub fn n_ind(&self) -> usize {
        self.attr_names.len()
    }

    pub fn passes(&self) -> usize {
        self.t / self.s
    }

    /// Width of the full metadata vector: indicators + midpoints + half-ranges.
    pub fn meta_width(&self) -> usize {
        self.n_ind() + 2 * self.f
    }
}

/// The three-stage generator: attribute MLP, min/max MLP, sequence LSTM.
#[derive(Clone, Debug)]
pub struct GeneratorBundle {
    pub spec: GenSpec,
    pub attr_gen: Mlp,
    pub minmax_gen: Mlp,
    pub seq: LstmStack,
    pub head: Dense,
}

impl GeneratorBundle {
    pub fn new(config: &DganConfig, f: usize, attr_names: Vec<String>, rng: &mut ChaCha20Rng) -> Result<GeneratorBundle> {
        if attr_names.is_empty() {
            return Err(Error::Config("the generator needs at least one indicator attribute".into()));
        }
        let spec = GenSpec {
            t: config.t,
            s: config.s,
            f,
            attr_names,
            z_attr: config.z_attr,
            z_minmax: config.z_minmax,
            z_seq: config.z_seq,
        };
        let mut attr_dims = vec![config.z_attr];
        attr_dims.extend_from_slice(&config.attr_hidden);
        attr_dims.push(spec.n_ind());
        let attr_gen = Mlp::new(&attr_dims, Activation::Tanh, Activation::Sigmoid, rng);

        let mut mm_dims = vec![spec.n_ind() + config.z_minmax];
        mm_dims.extend_from_slice(&config.minmax_hidden);
        mm_dims.push(2 * f);
        let minmax_gen = Mlp::new(&mm_dims, Activation::Tanh, Activation::Identity, rng);

        let seq_in = spec.meta_width() + config.z_seq;
        let seq = LstmStack::new(seq_in, &[config.seq_width], rng);
        let head = Dense::new(config.seq_width, config.s * f, Activation::Tanh, rng);
        Ok(GeneratorBundle { spec, attr_gen, minmax_gen, seq, head })
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundGenerator {
        let ids = crate::nets::bind_leaves(tape, self, trainable);
        self.bind_ids(&mut ids.into_iter())
    }

    pub fn bind_ids(&self, ids: &mut impl Iterator<Item = NodeId>) -> BoundGenerator {
        BoundGenerator {
            spec: self.spec.clone(),
            attr: self.attr_gen.bind_ids(ids),
            minmax: self.minmax_gen.bind_ids(ids),
            seq: self.seq.bind_ids(ids),
            head: self.head.bind_ids(ids),
        }
    }
}

impl Parameterized for GeneratorBundle {
    fn params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (n, t) in self.attr_gen.params() {
            out.push((format!("attr.{n}"), t));
        }
        for (n, t) in self.minmax_gen.params() {
            out.push((format!("minmax.{n}"), t));
        }
        for (n, t) in self.seq.params() {
            out.push((format!("seq.{n}"), t));
        }
        for (n, t) in self.head.params() {
            out.push((format!("head.{n}"), t));
        }
        out
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = Vec::new();
        for (n, t) in self.attr_gen.params_mut() {
            out.push((format!("attr.{n}"), t));
        }
        for (n, t) in self.minmax_gen.params_mut() {
            out.push((format!("minmax.{n}"), t));
        }
        for (n, t) in self.seq.params_mut() {
            out.push((format!("seq.{n}"), t));
        }
        for (n, t) in self.head.params_mut() {
            out.push((format!("head.{n}"), t));
        }
        out
    }
}

/// MLP critic with dropout between hidden layers; unbounded scalar output.
#[derive(Clone, Debug)]
pub struct CriticNet {
    pub layers: Vec<Dense>,
    pub dropout: f64,
}

impl CriticNet {
    pub fn new(input: usize, hidden: &[usize], dropout: f64, rng: &mut ChaCha20Rng) -> CriticNet {
        let mut dims = vec![input];
        dims.extend_from_slice(hidden);
        dims.push(1);
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, d)| {
                let act = if i + 2 == dims.len() { Activation::Identity } else { Activation::Tanh };
                Dense::new(d[0], d[1], act, rng)
            })
            .collect();
        CriticNet { layers, dropout }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundCritic {
        let ids = crate::nets::bind_leaves(tape, self, trainable);
        self.bind_ids(&mut ids.into_iter())
    }

    pub fn bind_ids(&self, ids: &mut impl Iterator<Item = NodeId>) -> BoundCritic {
        BoundCritic {
            layers: self.layers.iter().map(|l| l.bind_ids(ids)).collect(),
            dropout: self.dropout,
        }
    }
}

impl Parameterized for CriticNet {
    fn params(&self) -> Vec<(String, &Tensor)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.params().into_iter().map(move |(n, t)| (format!("layer{i}.{n}"), t)))
            .collect()
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(i, l)| {
                l.params_mut().into_iter().map(move |(n, t)| (format!("layer{i}.{n}"), t))
            })
            .collect()
    }
}

pub struct BoundCritic {
    pub layers: Vec<BoundDense>,
    pub dropout: f64,
}

impl BoundCritic {
    /// Scores a batch (`n x input`) into `n x 1` Wasserstein scores. Dropout
    /// is applied after every hidden activation in train mode.
    pub fn score(&self, tape: &mut Tape, x: NodeId, mode: Mode, rng: &mut ChaCha20Rng) -> NodeId {
        let last = self.layers.len() - 1;
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, h);
            if i < last {
                h = crate::nets::dropout(tape, h, self.dropout, mode, rng);
            }
        }
        h
    }
}

/// Primary series critic and auxiliary metadata-only critic.
///
/// `meta_scale` rescales each metadata input dimension to order one before
/// scoring (indicators stay at 1; midpoint/half-range dims are divided by
/// their training-set magnitude). Without it the Lipschitz-constrained
/// critics spend their budget on the large-magnitude metadata dimensions and
/// the indicator signal starves.
#[derive(Clone, Debug)]
pub struct Critics {
    pub primary: CriticNet,
    pub aux: CriticNet,
    pub alpha: f64,
    pub meta_scale: Vec<f64>,
}

impl Critics {
    pub fn new(config: &DganConfig, spec: &GenSpec, rng: &mut ChaCha20Rng) -> Critics {
        let meta = spec.meta_width();
        Critics {
            primary: CriticNet::new(meta + spec.t * spec.f, &config.critic_hidden, config.critic_dropout, rng),
            aux: CriticNet::new(meta, &config.aux_hidden, config.aux_dropout, rng),
            alpha: config.alpha,
            meta_scale: vec![1.0; meta],
        }
    }

    /// Fixes the metadata scale from the real (normalized) training set.
    pub fn fit_meta_scale(&mut self, normalized: &SampleSet) {
        let a = normalized.n_attrs();
        let mut max_abs = vec![0.0_f64; a];
        for i in 0..normalized.n_samples() {
            for (m, v) in max_abs.iter_mut().zip(normalized.attrs(i)) {
                *m = m.max(v.abs());
            }
        }
        self.meta_scale = max_abs.into_iter().map(|m| 1.0 / m.max(1.0)).collect();
    }

    /// Metadata batch rescaled for critic input.
    pub fn scale_meta(&self, attrs_full: &Tensor) -> Tensor {
        let a = self.meta_scale.len();
        assert_eq!(attrs_full.cols(), a, "metadata width mismatch");
        let data = attrs_full
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| v * self.meta_scale[i % a])
            .collect();
        Tensor::from_vec(attrs_full.shape(), data)
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundCritics {
        let ids = crate::nets::bind_leaves(tape, self, trainable);
        self.bind_ids(&mut ids.into_iter())
    }

    pub fn bind_ids(&self, ids: &mut impl Iterator<Item = NodeId>) -> BoundCritics {
        BoundCritics {
            primary: self.primary.bind_ids(ids),
            aux: self.aux.bind_ids(ids),
            alpha: self.alpha,
            meta_scale: self.meta_scale.clone(),
        }
    }
}

impl Parameterized for Critics {
    fn params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (n, t) in self.primary.params() {
            out.push((format!("primary.{n}"), t));
        }
        for (n, t) in self.aux.params() {
            out.push((format!("aux.{n}"), t));
        }
        out
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = Vec::new();
        for (n, t) in self.primary.params_mut() {
            out.push((format!("primary.{n}"), t));
        }
        for (n, t) in self.aux.params_mut() {
            out.push((format!("aux.{n}"), t));
        }
        out
    }
}

pub struct BoundCritics {
    pub primary: BoundCritic,
    pub aux: BoundCritic,
    pub alpha: f64,
    pub meta_scale: Vec<f64>,
}

impl BoundCritics {
    /// Applies the metadata scale to an on-tape metadata node.
    pub fn scale_meta_node(&self, tape: &mut Tape, attrs_full: NodeId) -> NodeId {
        let c = tape.constant(Tensor::from_vec(&[self.meta_scale.len()], self.meta_scale.clone()));
        tape.mul(attrs_full, c)
    }
}

/// Latent draws for one generated batch.
#[derive(Clone, Debug)]
pub struct GenLatents {
    pub z_attr: Tensor,
    pub z_minmax: Tensor,
    /// One tensor per generator pass.
    pub z_seq: Vec<Tensor>,
}

impl GenLatents {
    /// Standard-normal draws for `n` samples from one stream.
    pub fn draw(spec: &GenSpec, n: usize, rng: &mut ChaCha20Rng) -> GenLatents {
        let mut normal = |shape: &[usize]| {
            let len = shape.iter().product();
            Tensor::from_vec(shape, (0..len).map(|_| rng.sample(StandardNormal)).collect())
        };
        GenLatents {
            z_attr: normal(&[n, spec.z_attr]),
            z_minmax: normal(&[n, spec.z_minmax]),
            z_seq: (0..spec.passes()).map(|_| normal(&[n, spec.z_seq])).collect(),
        }
    }

    /// Draws where sample `start + i` always uses its own derived stream, so
    /// the result is independent of batching.
    pub fn draw_per_sample(spec: &GenSpec, seed: u64, start: u64, n: usize) -> GenLatents {
        let mut z_attr = Vec::with_capacity(n * spec.z_attr);
        let mut z_minmax = Vec::with_capacity(n * spec.z_minmax);
        let mut z_seq: Vec<Vec<f64>> = vec![Vec::with_capacity(n * spec.z_seq); spec.passes()];
        for i in 0..n {
            let mut rng = crate::rng::indexed_stream(seed, "generate", start + i as u64);
            for _ in 0..spec.z_attr {
                z_attr.push(rng.sample(StandardNormal));
            }
            for _ in 0..spec.z_minmax {
                z_minmax.push(rng.sample(StandardNormal));
            }
            for pass in z_seq.iter_mut() {
                for _ in 0..spec.z_seq {
                    pass.push(rng.sample(StandardNormal));
                }
            }
        }
        GenLatents {
            z_attr: Tensor::from_vec(&[n, spec.z_attr], z_attr),
            z_minmax: Tensor::from_vec(&[n, spec.z_minmax], z_minmax),
            z_seq: z_seq.into_iter().map(|z| Tensor::from_vec(&[n, spec.z_seq], z)).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.z_attr.shape()[0]
    }
}

/// Tape nodes of one generated batch.
pub struct FakeNodes {
    /// `n x n_ind` indicator attributes (soft sigmoid outputs, or hard 0/1).
    pub attrs_ind: NodeId,
    /// `n x 2f` generated midpoints and half-ranges (half-ranges already
    /// through the non-negativity transform).
    pub minmax: NodeId,
    /// `attrs_ind` and `minmax` concatenated: the metadata vector the critics
    /// see.
    pub attrs_full: NodeId,
    /// `n x t*f` normalized series in [-1, 1].
    pub series: NodeId,
}

pub struct BoundGenerator {
    pub spec: GenSpec,
    pub attr: BoundMlp,
    pub minmax: BoundMlp,
    pub seq: BoundLstmStack,
    pub head: BoundDense,
}

/// softplus(x) = log(1 + e^x): smooth non-negativity transform.
pub fn softplus(tape: &mut Tape, x: NodeId) -> NodeId {
    let e = tape.exp(x);
    let one = tape.constant(Tensor::scalar(1.0));
    let p = tape.add(e, one);
    tape.log(p)
}

impl BoundGenerator {
    /// Full generation chain. With `hard_attrs` the indicator outputs are
    /// thresholded at 0.5 (sampling); otherwise the sigmoid probabilities
    /// flow through unchanged, keeping the chain differentiable for training.
    pub fn forward(&self, tape: &mut Tape, latents: &GenLatents, hard_attrs: bool) -> FakeNodes {
        let n = latents.n();
        let za = tape.constant(latents.z_attr.clone());
        let probs = self.attr.forward(tape, za);
        let attrs_ind = if hard_attrs {
            let hard = tape.value(probs).map(|p| f64::from(p >= 0.5));
            tape.constant(hard)
        } else {
            probs
        };

        let zm = tape.constant(latents.z_minmax.clone());
        let mm_in = tape.concat_last(&[attrs_ind, zm]);
        let mm_raw = self.minmax.forward(tape, mm_in);
        let f = self.spec.f;
        let mids = tape.slice_last(mm_raw, 0, f);
        let half_raw = tape.slice_last(mm_raw, f, f);
        let halves = softplus(tape, half_raw);
        let minmax = tape.concat_last(&[mids, halves]);
        let attrs_full = tape.concat_last(&[attrs_ind, minmax]);

        let mut state = self.seq.zero_state(tape, n);
        let mut passes = Vec::with_capacity(self.spec.passes());
        for zt in &latents.z_seq {
            let z = tape.constant(zt.clone());
            let input = tape.concat_last(&[attrs_ind, minmax, z]);
            let h = self.seq.step(tape, input, &mut state);
            passes.push(self.head.forward(tape, h));
        }
        let series = tape.concat_last(&passes);
        FakeNodes { attrs_ind, minmax, attrs_full, series }
    }
}

/// One critic-input batch: full metadata vector plus flattened series.
#[derive(Clone, Debug)]
pub struct CriticBatch {
    /// `n x (n_ind + 2f)`.
    pub attrs_full: Tensor,
    /// `n x t*f`.
    pub series: Tensor,
}

impl CriticBatch {
    /// Extracts the rows `indices` of a normalized sample set.
    pub fn from_normalized(set: &SampleSet, indices: &[usize]) -> CriticBatch {
        let a = set.n_attrs();
        let w = set.t * set.f;
        let mut attrs = Vec::with_capacity(indices.len() * a);
        let mut series = Vec::with_capacity(indices.len() * w);
        for &i in indices {
            attrs.extend_from_slice(set.attrs(i));
            series.extend_from_slice(set.sample(i));
        }
        CriticBatch {
            attrs_full: Tensor::from_vec(&[indices.len(), a], attrs),
            series: Tensor::from_vec(&[indices.len(), w], series),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CriticLosses {
    pub primary: f64,
    pub auxiliary: f64,
    pub combined: f64,
}

/// Evaluation-mode Wasserstein critic losses (no penalty, no dropout):
/// per critic, mean score(fake) - mean score(real); combined adds
/// `alpha * auxiliary` to the primary loss.
pub fn critic_losses(critics: &Critics, real: &CriticBatch, fake: &CriticBatch) -> Result<CriticLosses> {
    if real.attrs_full.cols() != fake.attrs_full.cols() || real.series.cols() != fake.series.cols() {
        return Err(Error::Data("real and fake critic batches have mismatched shapes".into()));
    }
    let mut rng = crate::rng::stream(0, "critic-eval"); // eval mode: rng unused
    let mut tape = Tape::new();
    let bound = critics.bind(&mut tape, false);
    let mut score_mean = |critic: &BoundCritic, batch: &CriticBatch, with_series: bool| -> f64 {
        let meta = critics.scale_meta(&batch.attrs_full);
        let input = if with_series {
            let a = tape.constant(meta);
            let s = tape.constant(batch.series.clone());
            tape.concat_last(&[a, s])
        } else {
            tape.constant(meta)
        };
        let scores = critic.score(&mut tape, input, Mode::Eval, &mut rng);
        let m = tape.mean(scores);
        tape.value(m).item()
    };
    let primary = score_mean(&bound.primary, fake, true) - score_mean(&bound.primary, real, true);
    let auxiliary = score_mean(&bound.aux, fake, false) - score_mean(&bound.aux, real, false);
    Ok(CriticLosses { primary, auxiliary, combined: primary + critics.alpha * auxiliary })
}

/// Evaluation-mode generator loss: -(mean D(fake) + alpha * mean D_aux(fake
/// metadata)). Descent on this value pushes critic scores of fakes upward.
pub fn generator_loss(critics: &Critics, fake: &CriticBatch) -> Result<f64> {
    if fake.attrs_full.cols() != critics.aux.input_dim() {
        return Err(Error::Data(format!(
            "fake metadata width {} does not match the auxiliary critic input {}",
            fake.attrs_full.cols(),
            critics.aux.input_dim()
        )));
    }
    let mut rng = crate::rng::stream(0, "gen-eval");
    let mut tape = Tape::new();
    let bound = critics.bind(&mut tape, false);
    let a = tape.constant(critics.scale_meta(&fake.attrs_full));
    let s = tape.constant(fake.series.clone());
    let full = tape.concat_last(&[a, s]);
    let d = bound.primary.score(&mut tape, full, Mode::Eval, &mut rng);
    let d_mean = tape.mean(d);
    let d_aux = bound.aux.score(&mut tape, a, Mode::Eval, &mut rng);
    let aux_mean = tape.mean(d_aux);
    Ok(-(tape.value(d_mean).item() + critics.alpha * tape.value(aux_mean).item()))
}

/// Mean pairwise L2 distance between flattened samples divided by the mean
/// sample norm; 0 iff all samples are identical.
pub fn diversity_score(set: &SampleSet) -> Result<f64> {
    let n = set.n_samples();
    if n < 2 {
        return Err(Error::Data(format!("diversity_score needs >= 2 samples, got {n}")));
    }
    let mut dist_sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let d: f64 = set
                .sample(i)
                .iter()
                .zip(set.sample(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            dist_sum += d.sqrt();
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    let mean_norm: f64 = (0..n)
        .map(|i| set.sample(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .sum::<f64>()
        / n as f64;
    if mean_norm == 0.0 {
        return Ok(0.0);
    }
    Ok(dist_sum / pairs / mean_norm)
}

/// Samples `n` synthetic series from a trained bundle.
///
/// Indicator attributes are thresholded at 0.5; the series is denormalized by
/// its generated midpoint/half-range metadata. Each sample draws from its own
/// derived latent stream, so results do not depend on batching. Negative
/// yields are kept unless `clip_negative` is set.
pub fn generate(bundle: &GeneratorBundle, n: usize, seed: u64, clip_negative: bool) -> Result<SampleSet> {
    if n == 0 {
        return Err(Error::Config("generate: n must be positive".into()));
    }
    let spec = &bundle.spec;
    let (t, f) = (spec.t, spec.f);
    let mut features = Vec::with_capacity(n * t * f);
    let mut attributes = Vec::with_capacity(n * spec.meta_width());

    const CHUNK: usize = 256;
    let mut start = 0;
    while start < n {
        let count = CHUNK.min(n - start);
        let latents = GenLatents::draw_per_sample(spec, seed, start as u64, count);
        let mut tape = Tape::new();
        let bound = bundle.bind(&mut tape, false);
        let fake = bound.forward(&mut tape, &latents, true);
        let series = tape.value(fake.series);
        let attrs_ind = tape.value(fake.attrs_ind);
        let minmax = tape.value(fake.minmax);
        debug_assert!(series.data().iter().all(|v| v.abs() <= 1.0 + 1e-12));
        for i in 0..count {
            let row = &series.data()[i * t * f..(i + 1) * t * f];
            let mids = &minmax.data()[i * 2 * f..i * 2 * f + f];
            let halves = &minmax.data()[i * 2 * f + f..(i + 1) * 2 * f];
            let mut denorm = denormalize(row, f, mids, halves)?;
            if clip_negative {
                for v in denorm.iter_mut() {
                    *v = v.max(0.0);
                }
            }
            features.extend_from_slice(&denorm);
            attributes.extend_from_slice(&attrs_ind.data()[i * spec.n_ind()..(i + 1) * spec.n_ind()]);
            attributes.extend_from_slice(mids);
            attributes.extend_from_slice(halves);
        }
        start += count;
    }

    let mut schema = spec.attr_names.clone();
    schema.extend(minmax_attr_names(f));
    SampleSet::new(t, f, features, attributes, schema)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::SampleSet;
    use rand::Rng;

    fn toy_set(n: usize, t: usize, seed: u64) -> SampleSet {
        let mut rng = crate::rng::stream(seed, "dgan-toy-set");
        let mut features = Vec::new();
        let mut attrs = Vec::new();
        for _ in 0..n {
            let base: f64 = rng.gen_range(1.0..9.0);
            let amp: f64 = rng.gen_range(0.1..2.0);
            for s in 0..t {
                features.push(base + amp * (s as f64 * 0.3).sin());
                features.push(base + 1.0 + amp * (s as f64 * 0.2).cos());
            }
            attrs.push(f64::from(rng.gen_bool(0.3)));
        }
        SampleSet::new(t, 2, features, attrs, vec!["recession".into()]).unwrap()
    }

    #[test]
    fn normalization_maps_extremes_to_unit_interval() {
        let features: Vec<f64> = vec![
            0.0, 5.0, //
            50.0, 5.0, //
            100.0, 5.0,
        ];
        let set = SampleSet::new(3, 2, features, vec![1.0], vec!["recession".into()]).unwrap();
        let (norm, meta) = normalize_samples(&set).unwrap();
        // feature 0 spans [0, 100] -> midpoint 50, halfrange 50
        assert_eq!(meta.midpoint[0], 50.0);
        assert_eq!(meta.halfrange[0], 50.0);
        assert_eq!(norm.value(0, 0, 0), -1.0);
        assert_eq!(norm.value(0, 2, 0), 1.0);
        // constant feature 1 -> all zeros under the floor
        assert_eq!(meta.halfrange[1], 0.0);
        assert_eq!(norm.value(0, 1, 1), 0.0);
        // metadata appended as attributes: [recession, mid_0, mid_1, half_0, half_1]
        assert_eq!(norm.attr_schema, vec!["recession", "mid_0", "mid_1", "half_0", "half_1"]);
        assert_eq!(norm.attrs(0), &[1.0, 50.0, 5.0, 50.0, 0.0]);
    }

    #[test]
    fn normalize_denormalize_round_trip() {
        let set = toy_set(20, 15, 7);
        let (norm, meta) = normalize_samples(&set).unwrap();
        for i in 0..set.n_samples() {
            assert!(norm.sample(i).iter().all(|v| v.abs() <= 1.0 + 1e-12));
            let back = denormalize(
                norm.sample(i),
                2,
                &meta.midpoint[i * 2..(i + 1) * 2],
                &meta.halfrange[i * 2..(i + 1) * 2],
            )
            .unwrap();
            for (a, b) in back.iter().zip(set.sample(i)) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn denormalize_analytic_cases() {
        // all-zero sample -> constant at midpoint
        let out = denormalize(&[0.0, 0.0, 0.0, 0.0], 2, &[3.0, 4.0], &[1.0, 2.0]).unwrap();
        assert_eq!(out, vec![3.0, 4.0, 3.0, 4.0]);
        // +/-1 touches midpoint +/- halfrange
        let out = denormalize(&[1.0, -1.0], 2, &[3.0, 4.0], &[1.0, 2.0]).unwrap();
        assert_eq!(out, vec![4.0, 2.0]);
        assert!(denormalize(&[0.0], 1, &[0.0], &[-1.0]).is_err());
    }

    fn tiny_config() -> DganConfig {
        DganConfig {
            t: 10,
            s: 5,
            z_attr: 3,
            z_minmax: 3,
            z_seq: 3,
            attr_hidden: vec![8],
            minmax_hidden: vec![8],
            seq_width: 12,
            critic_hidden: vec![16, 16],
            aux_hidden: vec![8],
            epochs: 1,
            batch_size: 4,
            ..DganConfig::default()
        }
    }

    #[test]
    fn generation_shape_and_pass_count() {
        let cfg = DganConfig { t: 125, s: 5, ..tiny_config() };
        assert_eq!(cfg.t / cfg.s, 25); // 25 generator passes per sample
        let mut rng = crate::rng::stream(1, "gen-test");
        let bundle = GeneratorBundle::new(&cfg, 2, vec!["recession".into()], &mut rng).unwrap();
        assert_eq!(bundle.spec.passes(), 25);
        let set = generate(&bundle, 5, 99, false).unwrap();
        assert_eq!(set.n_samples(), 5);
        assert_eq!(set.t, 125);
        assert_eq!(set.f, 2);
        assert_eq!(set.attr_schema[0], "recession");
        // indicator attrs are hard 0/1
        for i in 0..5 {
            let a = set.attrs(i)[0];
            assert!(a == 0.0 || a == 1.0);
            // generated halfranges are non-negative by construction
            assert!(set.attrs(i)[3] >= 0.0 && set.attrs(i)[4] >= 0.0);
        }
    }

    #[test]
    fn generation_is_independent_of_batching() {
        let cfg = tiny_config();
        let mut rng = crate::rng::stream(2, "gen-batch");
        let bundle = GeneratorBundle::new(&cfg, 2, vec!["recession".into()], &mut rng).unwrap();
        let all = generate(&bundle, 300, 7, false).unwrap(); // crosses the chunk boundary
        let prefix = generate(&bundle, 10, 7, false).unwrap();
        for i in 0..10 {
            assert_eq!(all.sample(i), prefix.sample(i));
            assert_eq!(all.attrs(i), prefix.attrs(i));
        }
    }

    #[test]
    fn pre_denormalization_values_stay_in_unit_box() {
        let cfg = tiny_config();
        let mut rng = crate::rng::stream(3, "gen-box");
        let bundle = GeneratorBundle::new(&cfg, 2, vec!["recession".into()], &mut rng).unwrap();
        let latents = GenLatents::draw(&bundle.spec, 8, &mut rng);
        let mut tape = Tape::new();
        let bound = bundle.bind(&mut tape, false);
        let fake = bound.forward(&mut tape, &latents, true);
        assert!(tape.value(fake.series).data().iter().all(|v| v.abs() <= 1.0));
        assert_eq!(tape.value(fake.series).shape(), &[8, 20]);
    }

    #[test]
    fn critic_losses_match_hand_evaluation() {
        // Zero all critic weights: every score is exactly the output bias, so
        // identical scoring of real and fake gives loss 0; then set distinct
        // output biases and check against the written-out formula.
        let cfg = tiny_config();
        let mut rng = crate::rng::stream(4, "critic-hand");
        let bundle = GeneratorBundle::new(&cfg, 2, vec!["recession".into()], &mut rng).unwrap();
        let mut critics = Critics::new(&cfg, &bundle.spec, &mut rng);
        for (_, t) in critics.params_mut() {
            for v in t.data_mut() {
                *v = 0.0;
            }
        }
        let real = CriticBatch {
            attrs_full: Tensor::from_vec(&[2, 5], vec![1.0, 3.0, 4.0, 1.0, 0.5, 0.0, 2.0, 5.0, 0.5, 1.0]),
            series: Tensor::from_vec(&[2, 20], vec![0.1; 40]),
        };
        let fake = CriticBatch {
            attrs_full: Tensor::from_vec(&[2, 5], vec![0.5; 10]),
            series: Tensor::from_vec(&[2, 20], vec![-0.2; 40]),
        };
        let l = critic_losses(&critics, &real, &fake).unwrap();
        assert_eq!(l.primary, 0.0);
        assert_eq!(l.auxiliary, 0.0);
        assert_eq!(l.combined, 0.0);

        // constant critic c on all inputs -> generator loss = -(1 + alpha) c
        let c = 0.7;
        for (name, t) in critics.params_mut() {
            if name.ends_with(".b") && t.len() == 1 {
                t.data_mut()[0] = c;
            }
        }
        let g = generator_loss(&critics, &fake).unwrap();
        assert!((g - (-(1.0 + critics.alpha) * c)).abs() < 1e-12);

        let l = critic_losses(&critics, &real, &fake).unwrap();
        assert!((l.primary - 0.0).abs() < 1e-12); // same constant on both sides

        // alpha = 0 -> combined equals primary
        critics.alpha = 0.0;
        let l0 = critic_losses(&critics, &real, &fake).unwrap();
        assert_eq!(l0.combined, l0.primary);
        let g0 = generator_loss(&critics, &fake).unwrap();
        assert!((g0 - (-c)).abs() < 1e-12);
    }

    #[test]
    fn diversity_analytic_and_brute_force() {
        // identical samples -> 0
        let set = SampleSet::new(2, 1, vec![1.0, 2.0, 1.0, 2.0], vec![], vec![]).unwrap();
        assert_eq!(diversity_score(&set).unwrap(), 0.0);

        // x and -x -> 2 under the stated normalization
        let set = SampleSet::new(2, 1, vec![0.5, -0.25, -0.5, 0.25], vec![], vec![]).unwrap();
        assert!((diversity_score(&set).unwrap() - 2.0).abs() < 1e-12);

        // random set matches an independent brute-force computation
        let mut rng = crate::rng::stream(6, "div-brute");
        let n = 7;
        let len = 6;
        let data: Vec<f64> = (0..n * len).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let set = SampleSet::new(3, 2, data.clone(), vec![], vec![]).unwrap();
        let mut pair_sum = 0.0;
        let mut pairs = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let mut acc = 0.0;
                for k in 0..len {
                    let d = data[i * len + k] - data[j * len + k];
                    acc += d * d;
                }
                pair_sum += acc.sqrt();
                pairs += 1.0;
            }
        }
        let mean_norm: f64 = (0..n)
            .map(|i| (0..len).map(|k| data[i * len + k].powi(2)).sum::<f64>().sqrt())
            .sum::<f64>()
            / n as f64;
        let expect = pair_sum / pairs / mean_norm;
        assert!((diversity_score(&set).unwrap() - expect).abs() < 1e-9);

        // n < 2 is an error
        let one = SampleSet::new(2, 1, vec![1.0, 2.0], vec![], vec![]).unwrap();
        assert!(diversity_score(&one).is_err());
    }

    #[test]
    fn generator_critic_composite_gradient_check() {
        use crate::autodiff::grad_check_multi;
        let cfg = DganConfig {
            t: 4,
            s: 2,
            z_attr: 2,
            z_minmax: 2,
            z_seq: 2,
            attr_hidden: vec![3],
            minmax_hidden: vec![3],
            seq_width: 3,
            critic_hidden: vec![4],
            aux_hidden: vec![3],
            ..DganConfig::default()
        };
        let mut rng = crate::rng::stream(8, "composite-gc");
        let bundle = GeneratorBundle::new(&cfg, 2, vec!["recession".into()], &mut rng).unwrap();
        let critics = Critics::new(&cfg, &bundle.spec, &mut rng);
        let latents = GenLatents::draw(&bundle.spec, 3, &mut rng);
        let alpha = critics.alpha;

        let mut inputs: Vec<Tensor> = bundle.params().into_iter().map(|(_, t)| t.clone()).collect();
        let n_gen = inputs.len();
        inputs.extend(critics.params().into_iter().map(|(_, t)| t.clone()));

        let err = grad_check_multi(
            |tape, ids| {
                let mut it = ids.iter().copied();
                let bound_gen = bundle.bind_ids(&mut (&mut it).take(n_gen));
                let bound_critics = critics.bind_ids(&mut it);
                let fake = bound_gen.forward(tape, &latents, false);
                let full = tape.concat_last(&[fake.attrs_full, fake.series]);
                let mut rng = crate::rng::stream(0, "unused");
                let d = bound_critics.primary.score(tape, full, Mode::Eval, &mut rng);
                let d_mean = tape.mean(d);
                let a = bound_critics.aux.score(tape, fake.attrs_full, Mode::Eval, &mut rng);
                let a_mean = tape.mean(a);
                let a_scaled = tape.scale(a_mean, alpha);
                let s = tape.add(d_mean, a_scaled);
                tape.neg(s)
            },
            &inputs,
            1e-5,
        );
        assert!(err < 1e-4, "composite gradient error = {err}");
    }
}

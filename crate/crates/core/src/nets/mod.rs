//! Network building blocks: dense layers and MLPs, the LSTM cell and stacked
//! LSTM, inverted dropout, MSE / categorical cross-entropy losses, and Adam.
//!
//! Layers own plain [`Tensor`] parameters. To run a forward pass they are
//! `bind`-ed onto a [`Tape`], which inserts the parameters as leaves (trainable
//! vars or frozen constants) and returns a bound mirror holding the node ids.

mod adam;
mod lstm;

pub use adam::{AdamParams, AdamState};
pub use lstm::{BoundLstmCell, BoundLstmStack, LstmCell, LstmStack};

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::autodiff::{NodeId, Tape, Tensor};

/// Named parameter access, in a stable order shared by `bind`, Adam updates
/// and checkpoints.
pub trait Parameterized {
    fn params(&self) -> Vec<(String, &Tensor)>;
    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)>;
}

/// Inserts every parameter of `model` as a leaf, in `params()` order.
pub fn bind_leaves(tape: &mut Tape, model: &impl Parameterized, trainable: bool) -> Vec<NodeId> {
    model
        .params()
        .into_iter()
        .map(|(_, t)| if trainable { tape.var(t.clone()) } else { tape.constant(t.clone()) })
        .collect()
}

/// Uniform(-s, s) with s = 1/sqrt(fan_in).
pub fn uniform_init(shape: &[usize], fan_in: usize, rng: &mut ChaCha20Rng) -> Tensor {
    let s = 1.0 / (fan_in as f64).sqrt();
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-s..s)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Tanh,
    Sigmoid,
    Softmax,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, z: NodeId) -> NodeId {
        match self {
            Activation::Identity => z,
            Activation::Tanh => tape.tanh(z),
            Activation::Sigmoid => tape.sigmoid(z),
            Activation::Softmax => tape.softmax(z),
        }
    }
}

/// Fully connected layer, weights stored input-major (`in x out`).
#[derive(Clone, Debug)]
pub struct Dense {
    pub w: Tensor,
    pub b: Tensor,
    pub activation: Activation,
}

impl Dense {
    pub fn new(input: usize, output: usize, activation: Activation, rng: &mut ChaCha20Rng) -> Dense {
        Dense {
            w: uniform_init(&[input, output], input, rng),
            b: Tensor::zeros(&[output]),
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn output_dim(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundDense {
        let (w, b) = if trainable {
            (tape.var(self.w.clone()), tape.var(self.b.clone()))
        } else {
            (tape.constant(self.w.clone()), tape.constant(self.b.clone()))
        };
        BoundDense { w, b, activation: self.activation }
    }

    /// Rebinds onto existing leaves, consuming ids in `params()` order.
    pub fn bind_ids(&self, ids: &mut impl Iterator<Item = NodeId>) -> BoundDense {
        BoundDense {
            w: ids.next().expect("missing leaf for dense w"),
            b: ids.next().expect("missing leaf for dense b"),
            activation: self.activation,
        }
    }
}

impl Parameterized for Dense {
    fn params(&self) -> Vec<(String, &Tensor)> {
        vec![("w".into(), &self.w), ("b".into(), &self.b)]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![("w".into(), &mut self.w), ("b".into(), &mut self.b)]
    }
}

pub struct BoundDense {
    pub w: NodeId,
    pub b: NodeId,
    activation: Activation,
}

impl BoundDense {
    /// `x`: batch x input. Returns batch x output.
    pub fn forward(&self, tape: &mut Tape, x: NodeId) -> NodeId {
        let z = tape.matmul(x, self.w);
        let zb = tape.add(z, self.b);
        self.activation.apply(tape, zb)
    }

    pub fn leaf_ids(&self) -> Vec<NodeId> {
        vec![self.w, self.b]
    }
}

/// Plain feed-forward stack.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    /// `dims` = [input, hidden..., output]; hidden layers use `hidden_act`,
    /// the final layer `output_act`.
    pub fn new(
        dims: &[usize],
        hidden_act: Activation,
        output_act: Activation,
        rng: &mut ChaCha20Rng,
    ) -> Mlp {
        assert!(dims.len() >= 2, "mlp needs at least input and output dims");
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, d)| {
                let act = if i + 2 == dims.len() { output_act } else { hidden_act };
                Dense::new(d[0], d[1], act, rng)
            })
            .collect();
        Mlp { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().output_dim()
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundMlp {
        BoundMlp {
            layers: self.layers.iter().map(|l| l.bind(tape, trainable)).collect(),
        }
    }

    pub fn bind_ids(&self, ids: &mut impl Iterator<Item = NodeId>) -> BoundMlp {
        BoundMlp {
            layers: self.layers.iter().map(|l| l.bind_ids(ids)).collect(),
        }
    }
}

impl Parameterized for Mlp {
    fn params(&self) -> Vec<(String, &Tensor)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                l.params().into_iter().map(move |(n, t)| (format!("layer{i}.{n}"), t))
            })
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

pub struct BoundMlp {
    pub layers: Vec<BoundDense>,
}

impl BoundMlp {
    pub fn forward(&self, tape: &mut Tape, x: NodeId) -> NodeId {
        self.layers.iter().fold(x, |h, l| l.forward(tape, h))
    }

    pub fn leaf_ids(&self) -> Vec<NodeId> {
        self.layers.iter().flat_map(|l| l.leaf_ids()).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Inverted dropout: in train mode each element is zeroed with probability
/// `rate` and survivors are scaled by 1/(1-rate); eval mode is the identity.
pub fn dropout(tape: &mut Tape, x: NodeId, rate: f64, mode: Mode, rng: &mut ChaCha20Rng) -> NodeId {
    assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1), got {rate}");
    if mode == Mode::Eval || rate == 0.0 {
        return x;
    }
    let keep = 1.0 - rate;
    let shape = tape.value(x).shape().to_vec();
    let n: usize = shape.iter().product();
    let mask = Tensor::from_vec(
        &shape,
        (0..n)
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect(),
    );
    let m = tape.constant(mask);
    tape.mul(x, m)
}

/// Mean squared error over all entries of `pred` against a fixed target.
pub fn mse_loss(tape: &mut Tape, pred: NodeId, target: &Tensor) -> NodeId {
    assert_eq!(
        tape.value(pred).shape(),
        target.shape(),
        "mse shape mismatch: {:?} vs {:?}",
        tape.value(pred).shape(),
        target.shape()
    );
    let t = tape.constant(target.clone());
    let d = tape.sub(pred, t);
    let sq = tape.square(d);
    tape.mean(sq)
}

/// Categorical cross-entropy: mean over samples of -log p[true class].
/// `probs` is n x k with rows summing to 1; `onehot` is an n x k indicator.
pub fn cross_entropy(tape: &mut Tape, probs: NodeId, onehot: &Tensor) -> NodeId {
    let p = tape.value(probs);
    assert_eq!(p.shape(), onehot.shape(), "cross_entropy shape mismatch");
    let (n, k) = (p.rows(), p.cols());
    for i in 0..n {
        let row_sum: f64 = p.data()[i * k..(i + 1) * k].iter().sum();
        assert!(
            (row_sum - 1.0).abs() < 1e-6,
            "cross_entropy row {i} sums to {row_sum}, not a probability row"
        );
    }
    // Tiny floor keeps log finite if a class probability underflows to zero.
    let floor = tape.constant(Tensor::scalar(1e-300));
    let shifted = tape.add(probs, floor);
    let lp = tape.log(shifted);
    let oh = tape.constant(onehot.clone());
    let picked = tape.mul(oh, lp);
    let total = tape.sum(picked);
    tape.scale(total, -1.0 / n as f64)
}

/// One-hot encoding of binary labels into n x 2 rows (column 1 = positive).
pub fn one_hot_binary(labels: &[u8]) -> Tensor {
    let mut data = vec![0.0; labels.len() * 2];
    for (i, &y) in labels.iter().enumerate() {
        data[i * 2 + usize::from(y != 0)] = 1.0;
    }
    Tensor::from_vec(&[labels.len(), 2], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check_multi;

    #[test]
    fn dropout_rate_zero_and_eval_are_identity() {
        let mut rng = crate::rng::stream(1, "dropout");
        let mut tape = Tape::new();
        let x = tape.var(Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]));
        let a = dropout(&mut tape, x, 0.0, Mode::Train, &mut rng);
        let b = dropout(&mut tape, x, 0.7, Mode::Eval, &mut rng);
        assert_eq!(a, x);
        assert_eq!(b, x);
    }

    #[test]
    fn dropout_survivor_fraction_concentrates() {
        let mut rng = crate::rng::stream(2, "dropout-frac");
        let mut tape = Tape::new();
        let n = 100_000;
        let x = tape.var(Tensor::ones(&[n]));
        let y = dropout(&mut tape, x, 0.5, Mode::Train, &mut rng);
        let survivors = tape.value(y).data().iter().filter(|&&v| v != 0.0).count();
        let frac = survivors as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.01, "surviving fraction {frac}");
        // survivors are scaled by 1/(1-rate)
        assert!(tape.value(y).data().iter().all(|&v| v == 0.0 || (v - 2.0).abs() < 1e-12));
    }

    #[test]
    #[should_panic(expected = "dropout rate must be in [0, 1)")]
    fn dropout_rejects_rate_one() {
        let mut rng = crate::rng::stream(3, "dropout-bad");
        let mut tape = Tape::new();
        let x = tape.var(Tensor::ones(&[2]));
        dropout(&mut tape, x, 1.0, Mode::Train, &mut rng);
    }

    #[test]
    fn mse_zero_when_equal() {
        let mut tape = Tape::new();
        let t = Tensor::from_vec(&[2, 2], vec![1.0, -2.0, 0.5, 3.0]);
        let p = tape.var(t.clone());
        let l = mse_loss(&mut tape, p, &t);
        assert_eq!(tape.value(l).item(), 0.0);
    }

    #[test]
    fn cross_entropy_analytic_cases() {
        // exact one-hot prediction contributes zero
        let mut tape = Tape::new();
        let p = tape.var(Tensor::from_vec(&[1, 2], vec![0.0, 1.0]));
        let l = cross_entropy(&mut tape, p, &one_hot_binary(&[1]));
        assert_eq!(tape.value(l).item(), 0.0);

        // uniform over k=2 gives log 2
        let mut tape = Tape::new();
        let p = tape.var(Tensor::from_vec(&[2, 2], vec![0.5, 0.5, 0.5, 0.5]));
        let l = cross_entropy(&mut tape, p, &one_hot_binary(&[0, 1]));
        assert!((tape.value(l).item() - 2.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    #[should_panic(expected = "not a probability row")]
    fn cross_entropy_rejects_non_probability_rows() {
        let mut tape = Tape::new();
        let p = tape.var(Tensor::from_vec(&[1, 2], vec![0.9, 0.9]));
        cross_entropy(&mut tape, p, &one_hot_binary(&[0]));
    }

    #[test]
    fn dense_and_loss_gradients_match_finite_differences() {
        let mut rng = crate::rng::stream(5, "dense-gc");
        let dense = Dense::new(3, 2, Activation::Tanh, &mut rng);
        let x = uniform_init(&[4, 3], 3, &mut rng);
        let target = uniform_init(&[4, 2], 2, &mut rng);
        let inputs = vec![dense.w.clone(), dense.b.clone(), x];
        let err = grad_check_multi(
            |tape, ids| {
                let bound = BoundDense { w: ids[0], b: ids[1], activation: Activation::Tanh };
                let h = bound.forward(tape, ids[2]);
                mse_loss(tape, h, &target)
            },
            &inputs,
            1e-5,
        );
        assert!(err < 1e-4, "err = {err}");
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = crate::rng::stream(6, "softmax");
        let mut tape = Tape::new();
        let x = tape.var(uniform_init(&[5, 4], 4, &mut rng));
        let s = tape.softmax(x);
        let v = tape.value(s);
        for i in 0..5 {
            let sum: f64 = v.data()[i * 4..(i + 1) * 4].iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }
}

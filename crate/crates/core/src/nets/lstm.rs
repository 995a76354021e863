//! LSTM cell and stacked layers.
//!
//! The cell follows the standard sigmoid-gated equations: with
//! `z = [x_t ; h_prev]`,
//!
//! ```text
//! f = sigmoid(z W_f + b_f)      i = sigmoid(z W_i + b_i)
//! o = sigmoid(z W_o + b_o)      g = tanh(z W_g + b_g)
//! c = f * c_prev + i * g        h = o * tanh(c)
//! ```
//!
//! No peepholes; zero initial states; forget-gate bias starts at 1.

use rand_chacha::ChaCha20Rng;

use super::{uniform_init, Parameterized};
use crate::autodiff::{NodeId, Tape, Tensor};

#[derive(Clone, Debug)]
pub struct LstmCell {
    pub w_f: Tensor,
    pub b_f: Tensor,
    pub w_i: Tensor,
    pub b_i: Tensor,
    pub w_o: Tensor,
    pub b_o: Tensor,
    pub w_g: Tensor,
    pub b_g: Tensor,
    pub input_dim: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new(input_dim: usize, hidden: usize, rng: &mut ChaCha20Rng) -> LstmCell {
        let z = input_dim + hidden;
        let w = |rng: &mut ChaCha20Rng| uniform_init(&[z, hidden], z, rng);
        LstmCell {
            w_f: w(rng),
            b_f: Tensor::ones(&[hidden]),
            w_i: w(rng),
            b_i: Tensor::zeros(&[hidden]),
            w_o: w(rng),
            b_o: Tensor::zeros(&[hidden]),
            w_g: w(rng),
            b_g: Tensor::zeros(&[hidden]),
            input_dim,
            hidden,
        }
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundLstmCell {
        let mut leaf = |t: &Tensor| if trainable { tape.var(t.clone()) } else { tape.constant(t.clone()) };
        BoundLstmCell {
            w_f: leaf(&self.w_f),
            b_f: leaf(&self.b_f),
            w_i: leaf(&self.w_i),
            b_i: leaf(&self.b_i),
            w_o: leaf(&self.w_o),
            b_o: leaf(&self.b_o),
            w_g: leaf(&self.w_g),
            b_g: leaf(&self.b_g),
            hidden: self.hidden,
        }
    }

    /// Rebinds onto existing leaves, consuming ids in `params()` order.
    pub fn bind_ids(&self, ids: &mut impl Iterator<Item = NodeId>) -> BoundLstmCell {
        let mut next = |what: &str| -> NodeId {
            ids.next().unwrap_or_else(|| panic!("missing leaf for lstm {what}"))
        };
        BoundLstmCell {
            w_f: next("w_f"),
            b_f: next("b_f"),
            w_i: next("w_i"),
            b_i: next("b_i"),
            w_o: next("w_o"),
            b_o: next("b_o"),
            w_g: next("w_g"),
            b_g: next("b_g"),
            hidden: self.hidden,
        }
    }
}

impl Parameterized for LstmCell {
    fn params(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("w_f".into(), &self.w_f),
            ("b_f".into(), &self.b_f),
            ("w_i".into(), &self.w_i),
            ("b_i".into(), &self.b_i),
            ("w_o".into(), &self.w_o),
            ("b_o".into(), &self.b_o),
            ("w_g".into(), &self.w_g),
            ("b_g".into(), &self.b_g),
        ]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![
            ("w_f".into(), &mut self.w_f),
            ("b_f".into(), &mut self.b_f),
            ("w_i".into(), &mut self.w_i),
            ("b_i".into(), &mut self.b_i),
            ("w_o".into(), &mut self.w_o),
            ("b_o".into(), &mut self.b_o),
            ("w_g".into(), &mut self.w_g),
            ("b_g".into(), &mut self.b_g),
        ]
    }
}

pub struct BoundLstmCell {
    pub w_f: NodeId,
    pub b_f: NodeId,
    pub w_i: NodeId,
    pub b_i: NodeId,
    pub w_o: NodeId,
    pub b_o: NodeId,
    pub w_g: NodeId,
    pub b_g: NodeId,
    hidden: usize,
}

impl BoundLstmCell {
    /// One timestep: `x` is batch x input, `h`/`c` are batch x hidden.
    pub fn step(&self, tape: &mut Tape, x: NodeId, h: NodeId, c: NodeId) -> (NodeId, NodeId) {
        let z = tape.concat_last(&[x, h]);
        let gate = |tape: &mut Tape, w, b| {
            let a = tape.matmul(z, w);
            tape.add(a, b)
        };
        let zf = gate(tape, self.w_f, self.b_f);
        let f = tape.sigmoid(zf);
        let zi = gate(tape, self.w_i, self.b_i);
        let i = tape.sigmoid(zi);
        let zo = gate(tape, self.w_o, self.b_o);
        let o = tape.sigmoid(zo);
        let zg = gate(tape, self.w_g, self.b_g);
        let g = tape.tanh(zg);

        let fc = tape.mul(f, c);
        let ig = tape.mul(i, g);
        let c_new = tape.add(fc, ig);
        let tc = tape.tanh(c_new);
        let h_new = tape.mul(o, tc);
        (h_new, c_new)
    }

    pub fn leaf_ids(&self) -> Vec<NodeId> {
        vec![self.w_f, self.b_f, self.w_i, self.b_i, self.w_o, self.b_o, self.w_g, self.b_g]
    }
}

/// Stacked LSTM layers: layer l consumes layer l-1's hidden sequence.
#[derive(Clone, Debug)]
pub struct LstmStack {
    pub cells: Vec<LstmCell>,
}

impl LstmStack {
    pub fn new(input_dim: usize, widths: &[usize], rng: &mut ChaCha20Rng) -> LstmStack {
        assert!(!widths.is_empty(), "lstm stack needs at least one layer");
        let mut cells = Vec::with_capacity(widths.len());
        let mut dim = input_dim;
        for &w in widths {
            cells.push(LstmCell::new(dim, w, rng));
            dim = w;
        }
        LstmStack { cells }
    }

    pub fn output_dim(&self) -> usize {
        self.cells.last().unwrap().hidden
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundLstmStack {
        BoundLstmStack {
            cells: self.cells.iter().map(|c| c.bind(tape, trainable)).collect(),
        }
    }

    pub fn bind_ids(&self, ids: &mut impl Iterator<Item = NodeId>) -> BoundLstmStack {
        BoundLstmStack {
            cells: self.cells.iter().map(|c| c.bind_ids(ids)).collect(),
        }
    }
}

impl Parameterized for LstmStack {
    fn params(&self) -> Vec<(String, &Tensor)> {
        self.cells
            .iter()
            .enumerate()
            .flat_map(|(i, c)| c.params().into_iter().map(move |(n, t)| (format!("cell{i}.{n}"), t)))
            .collect()
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        self.cells
            .iter_mut()
            .enumerate()
            .flat_map(|(i, c)| {
                c.params_mut().into_iter().map(move |(n, t)| (format!("cell{i}.{n}"), t))
            })
            .collect()
    }
}

pub struct BoundLstmStack {
    pub cells: Vec<BoundLstmCell>,
}

/// Per-layer (h, c) state carried across steps.
pub type LstmState = Vec<(NodeId, NodeId)>;

impl BoundLstmStack {
    /// Zero initial state for a batch of the given size.
    pub fn zero_state(&self, tape: &mut Tape, batch: usize) -> LstmState {
        self.cells
            .iter()
            .map(|c| {
                let h = tape.constant(Tensor::zeros(&[batch, c.hidden]));
                let cst = tape.constant(Tensor::zeros(&[batch, c.hidden]));
                (h, cst)
            })
            .collect()
    }

    /// One timestep through every layer; returns the top layer's hidden.
    pub fn step(&self, tape: &mut Tape, x: NodeId, state: &mut LstmState) -> NodeId {
        let mut input = x;
        for (cell, (h, c)) in self.cells.iter().zip(state.iter_mut()) {
            let (h_new, c_new) = cell.step(tape, input, *h, *c);
            *h = h_new;
            *c = c_new;
            input = h_new;
        }
        input
    }

    /// Runs the whole sequence (one node per timestep, each batch x features)
    /// and returns the top layer's hidden at every step.
    pub fn forward_full(&self, tape: &mut Tape, seq: &[NodeId]) -> Vec<NodeId> {
        assert!(!seq.is_empty(), "empty sequence");
        let batch = tape.value(seq[0]).rows();
        let mut state = self.zero_state(tape, batch);
        seq.iter().map(|&x| self.step(tape, x, &mut state)).collect()
    }

    /// Top layer's hidden after the final step.
    pub fn forward_last(&self, tape: &mut Tape, seq: &[NodeId]) -> NodeId {
        *self.forward_full(tape, seq).last().unwrap()
    }

    pub fn leaf_ids(&self) -> Vec<NodeId> {
        self.cells.iter().flat_map(|c| c.leaf_ids()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check_multi;

    fn zeroed_cell(input_dim: usize, hidden: usize) -> LstmCell {
        let mut rng = crate::rng::stream(0, "zc");
        let mut cell = LstmCell::new(input_dim, hidden, &mut rng);
        for (_, t) in cell.params_mut() {
            for v in t.data_mut() {
                *v = 0.0;
            }
        }
        cell
    }

    #[test]
    fn zero_parameters_zero_state_give_zero_outputs() {
        let cell = zeroed_cell(2, 3);
        let mut tape = Tape::new();
        let bound = cell.bind(&mut tape, false);
        let x = tape.constant(Tensor::from_vec(&[1, 2], vec![0.7, -0.3]));
        let h0 = tape.constant(Tensor::zeros(&[1, 3]));
        let c0 = tape.constant(Tensor::zeros(&[1, 3]));
        let (h, c) = bound.step(&mut tape, x, h0, c0);
        assert_eq!(tape.value(h).data(), &[0.0; 3]);
        assert_eq!(tape.value(c).data(), &[0.0; 3]);
    }

    #[test]
    fn zero_parameters_carry_half_the_cell_state() {
        // Independent scalar evaluation of the cell equations: with all-zero
        // parameters every gate is sigmoid(0) = 0.5 and the candidate is
        // tanh(0) = 0, so c = 0.5 * c_prev and h = 0.5 * tanh(c).
        let cell = zeroed_cell(2, 3);
        let mut tape = Tape::new();
        let bound = cell.bind(&mut tape, false);
        let v = [0.4, -1.2, 2.0];
        let x = tape.constant(Tensor::zeros(&[1, 2]));
        let h0 = tape.constant(Tensor::zeros(&[1, 3]));
        let c0 = tape.constant(Tensor::from_vec(&[1, 3], v.to_vec()));
        let (h, c) = bound.step(&mut tape, x, h0, c0);
        for (k, &vk) in v.iter().enumerate() {
            let c_expect = 0.5 * vk;
            let h_expect = 0.5 * (0.5 * vk).tanh();
            assert!((tape.value(c).data()[k] - c_expect).abs() < 1e-15);
            assert!((tape.value(h).data()[k] - h_expect).abs() < 1e-15);
        }
    }

    #[test]
    fn cell_matches_independent_scalar_evaluation() {
        // Scalar cell (1 input, 1 hidden) with hand-set weights, evaluated
        // against a plain-f64 transcription of the equations.
        let mut cell = zeroed_cell(1, 1);
        // parameter order: w_f, b_f, w_i, b_i, w_o, b_o, w_g, b_g
        let flat: Vec<f64> = vec![
            0.3, -0.1, // w_f
            0.25, // b_f
            0.2, -0.4, // w_i
            0.05, // b_i
            0.6, -0.2, // w_o
            0.15, // b_o
            -0.5, 0.35, // w_g
            0.0, // b_g
        ];
        let mut it = flat.iter();
        for (_, t) in cell.params_mut() {
            for v in t.data_mut() {
                *v = *it.next().unwrap();
            }
        }
        let (x, h_prev, c_prev) = (0.8_f64, -0.3_f64, 0.5_f64);

        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let f = sig(x * 0.3 + h_prev * -0.1 + 0.25);
        let i = sig(x * 0.2 + h_prev * -0.4 + 0.05);
        let o = sig(x * 0.6 + h_prev * -0.2 + 0.15);
        let g = (x * -0.5 + h_prev * 0.35).tanh();
        let c_expect = f * c_prev + i * g;
        let h_expect = o * c_expect.tanh();

        let mut tape = Tape::new();
        let bound = cell.bind(&mut tape, false);
        let xi = tape.constant(Tensor::from_vec(&[1, 1], vec![x]));
        let hi = tape.constant(Tensor::from_vec(&[1, 1], vec![h_prev]));
        let ci = tape.constant(Tensor::from_vec(&[1, 1], vec![c_prev]));
        let (h, c) = bound.step(&mut tape, xi, hi, ci);
        assert!((tape.value(c).item() - c_expect).abs() < 1e-15);
        assert!((tape.value(h).item() - h_expect).abs() < 1e-15);
    }

    #[test]
    fn cell_gradients_match_finite_differences() {
        let mut rng = crate::rng::stream(9, "lstm-gc");
        let cell = LstmCell::new(2, 3, &mut rng);
        let x = uniform_init(&[2, 2], 2, &mut rng);
        let mut inputs: Vec<Tensor> = cell.params().into_iter().map(|(_, t)| t.clone()).collect();
        inputs.push(x);
        let err = grad_check_multi(
            |tape, ids| {
                let bound = BoundLstmCell {
                    w_f: ids[0],
                    b_f: ids[1],
                    w_i: ids[2],
                    b_i: ids[3],
                    w_o: ids[4],
                    b_o: ids[5],
                    w_g: ids[6],
                    b_g: ids[7],
                    hidden: 3,
                };
                let h0 = tape.constant(Tensor::zeros(&[2, 3]));
                let c0 = tape.constant(Tensor::zeros(&[2, 3]));
                let (h, _) = bound.step(tape, ids[8], h0, c0);
                tape.sum(h)
            },
            &inputs,
            1e-5,
        );
        assert!(err < 1e-4, "err = {err}");
    }

    #[test]
    fn stack_shapes_and_single_step_equivalence() {
        let mut rng = crate::rng::stream(10, "lstm-stack");
        let stack = LstmStack::new(2, &[4, 3], &mut rng);
        let mut tape = Tape::new();
        let bound = stack.bind(&mut tape, false);
        let xs: Vec<NodeId> = (0..5)
            .map(|_| {
                let t = uniform_init(&[2, 2], 2, &mut rng);
                tape.constant(t)
            })
            .collect();
        let outs = bound.forward_full(&mut tape, &xs);
        assert_eq!(outs.len(), 5);
        for &o in &outs {
            assert_eq!(tape.value(o).shape(), &[2, 3]);
        }

        // T=1 equals one cell step per layer
        let one = bound.forward_last(&mut tape, &xs[..1]);
        let mut state = bound.zero_state(&mut tape, 2);
        let manual = bound.step(&mut tape, xs[0], &mut state);
        assert_eq!(tape.value(one).data(), tape.value(manual).data());
    }

    #[test]
    fn two_layer_stack_gradient_check() {
        let mut rng = crate::rng::stream(11, "lstm-stack-gc");
        let stack = LstmStack::new(1, &[2, 2], &mut rng);
        let seq: Vec<Tensor> = (0..3).map(|_| uniform_init(&[1, 1], 1, &mut rng)).collect();
        let mut inputs: Vec<Tensor> = stack.params().into_iter().map(|(_, t)| t.clone()).collect();
        let n_params = inputs.len();
        inputs.extend(seq);
        let err = grad_check_multi(
            |tape, ids| {
                let cells = (0..2)
                    .map(|l| BoundLstmCell {
                        w_f: ids[l * 8],
                        b_f: ids[l * 8 + 1],
                        w_i: ids[l * 8 + 2],
                        b_i: ids[l * 8 + 3],
                        w_o: ids[l * 8 + 4],
                        b_o: ids[l * 8 + 5],
                        w_g: ids[l * 8 + 6],
                        b_g: ids[l * 8 + 7],
                        hidden: 2,
                    })
                    .collect();
                let bound = BoundLstmStack { cells };
                let h = bound.forward_last(tape, &ids[n_params..]);
                let sq = tape.square(h);
                tape.sum(sq)
            },
            &inputs,
            1e-5,
        );
        assert!(err < 1e-4, "err = {err}");
    }
}

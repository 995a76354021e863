use super::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Scale(f64),
    MatMul,
    Transpose,
    Tanh,
    Sigmoid,
    Exp,
    Log,
    Sqrt,
    Square,
    Softmax,
    ConcatLast,
    SliceLast { start: usize, len: usize },
    PadLast { before: usize },
    Sum,
    SumTo,
}

struct Node {
    op: Op,
    inputs: Vec<NodeId>,
    value: Tensor,
    requires_grad: bool,
}

/// Record of a forward computation.
///
/// Values are evaluated eagerly as nodes are pushed, so the tape is always in
/// topological order. Backward passes append their adjoint computations as
/// ordinary nodes, which keeps the gradient itself differentiable (used by the
/// critic gradient penalty, where the loss contains an input gradient).
///
/// A tape is single-writer; shape violations panic.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`]: a map from node to the node
/// holding its gradient.
pub struct Gradients {
    adjoint: Vec<Option<NodeId>>,
}

impl Gradients {
    /// Node holding d(output)/d(id), if the output depends on `id`.
    pub fn node(&self, id: NodeId) -> Option<NodeId> {
        self.adjoint.get(id.0).copied().flatten()
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Gradient of the backward output with respect to `id`, as a tensor.
    /// Zero if the output does not depend on `id`.
    pub fn grad(&self, grads: &Gradients, id: NodeId) -> Tensor {
        match grads.node(id) {
            Some(g) => self.value(g).clone(),
            None => Tensor::zeros(self.value(id).shape()),
        }
    }

    fn push(&mut self, op: Op, inputs: Vec<NodeId>, value: Tensor, requires_grad: bool) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { op, inputs, value, requires_grad });
        id
    }

    /// Differentiable leaf.
    pub fn var(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, vec![], value, true)
    }

    /// Non-differentiable leaf.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, vec![], value, false)
    }

    fn unary(&mut self, op: Op, x: NodeId, value: Tensor) -> NodeId {
        let rg = self.nodes[x.0].requires_grad;
        self.push(op, vec![x], value, rg)
    }

    fn binary(&mut self, op: Op, a: NodeId, b: NodeId, value: Tensor) -> NodeId {
        let rg = self.nodes[a.0].requires_grad || self.nodes[b.0].requires_grad;
        self.push(op, vec![a, b], value, rg)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = broadcast_zip("add", self.value(a), self.value(b), |x, y| x + y);
        self.binary(Op::Add, a, b, v)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = broadcast_zip("sub", self.value(a), self.value(b), |x, y| x - y);
        self.binary(Op::Sub, a, b, v)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = broadcast_zip("mul", self.value(a), self.value(b), |x, y| x * y);
        self.binary(Op::Mul, a, b, v)
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = broadcast_zip("div", self.value(a), self.value(b), |x, y| x / y);
        self.binary(Op::Div, a, b, v)
    }

    pub fn neg(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(|a| -a);
        self.unary(Op::Neg, x, v)
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let v = self.value(x).map(|a| a * c);
        self.unary(Op::Scale(c), x, v)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = matmul_value(self.value(a), self.value(b));
        self.binary(Op::MatMul, a, b, v)
    }

    pub fn transpose(&mut self, x: NodeId) -> NodeId {
        let t = self.value(x);
        let (m, n) = (t.rows(), t.cols());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = t.get2(i, j);
            }
        }
        let v = Tensor::from_vec(&[n, m], out);
        self.unary(Op::Transpose, x, v)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(f64::tanh);
        self.unary(Op::Tanh, x, v)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(sigmoid_scalar);
        self.unary(Op::Sigmoid, x, v)
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(f64::exp);
        self.unary(Op::Exp, x, v)
    }

    pub fn log(&mut self, x: NodeId) -> NodeId {
        assert!(
            self.value(x).data().iter().all(|&v| v > 0.0),
            "log of non-positive value"
        );
        let v = self.value(x).map(f64::ln);
        self.unary(Op::Log, x, v)
    }

    pub fn sqrt(&mut self, x: NodeId) -> NodeId {
        assert!(
            self.value(x).data().iter().all(|&v| v >= 0.0),
            "sqrt of negative value"
        );
        let v = self.value(x).map(f64::sqrt);
        self.unary(Op::Sqrt, x, v)
    }

    pub fn square(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(|a| a * a);
        self.unary(Op::Square, x, v)
    }

    /// Row-wise softmax over the last axis of a 2-D tensor.
    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let t = self.value(x);
        let (n, k) = (t.rows(), t.cols());
        let mut out = vec![0.0; n * k];
        for i in 0..n {
            let row = &t.data()[i * k..(i + 1) * k];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for j in 0..k {
                let e = (row[j] - max).exp();
                out[i * k + j] = e;
                denom += e;
            }
            for j in 0..k {
                out[i * k + j] /= denom;
            }
        }
        let v = Tensor::from_vec(&[n, k], out);
        self.unary(Op::Softmax, x, v)
    }

    /// Concatenates tensors of equal rank (1 or 2) along the last axis.
    pub fn concat_last(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat of zero tensors");
        let rank = self.value(parts[0]).shape().len();
        assert!(rank == 1 || rank == 2, "concat_last supports rank 1 or 2");
        let n = if rank == 2 { self.value(parts[0]).rows() } else { 1 };
        let widths: Vec<usize> = parts
            .iter()
            .map(|&p| {
                let t = self.value(p);
                assert_eq!(t.shape().len(), rank, "concat rank mismatch");
                if rank == 2 {
                    assert_eq!(t.rows(), n, "concat leading-dim mismatch");
                    t.cols()
                } else {
                    t.shape()[0]
                }
            })
            .collect();
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; n * total];
        for i in 0..n {
            let mut off = 0;
            for (&p, &w) in parts.iter().zip(&widths) {
                let src = self.value(p).data();
                out[i * total + off..i * total + off + w].copy_from_slice(&src[i * w..(i + 1) * w]);
                off += w;
            }
        }
        let shape = if rank == 2 { vec![n, total] } else { vec![total] };
        let value = Tensor::from_vec(&shape, out);
        let rg = parts.iter().any(|&p| self.nodes[p.0].requires_grad);
        self.push(Op::ConcatLast, parts.to_vec(), value, rg)
    }

    /// Slice `[start, start+len)` of the last axis.
    pub fn slice_last(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let t = self.value(x);
        let rank = t.shape().len();
        assert!(rank == 1 || rank == 2, "slice_last supports rank 1 or 2");
        let (n, w) = if rank == 2 { (t.rows(), t.cols()) } else { (1, t.shape()[0]) };
        assert!(start + len <= w, "slice [{start}, {}) out of width {w}", start + len);
        let mut out = vec![0.0; n * len];
        for i in 0..n {
            out[i * len..(i + 1) * len].copy_from_slice(&t.data()[i * w + start..i * w + start + len]);
        }
        let shape = if rank == 2 { vec![n, len] } else { vec![len] };
        let v = Tensor::from_vec(&shape, out);
        self.unary(Op::SliceLast { start, len }, x, v)
    }

    /// Zero-pad the last axis with `before`/`after` entries.
    pub fn pad_last(&mut self, x: NodeId, before: usize, after: usize) -> NodeId {
        let t = self.value(x);
        let rank = t.shape().len();
        assert!(rank == 1 || rank == 2, "pad_last supports rank 1 or 2");
        let (n, w) = if rank == 2 { (t.rows(), t.cols()) } else { (1, t.shape()[0]) };
        let total = before + w + after;
        let mut out = vec![0.0; n * total];
        for i in 0..n {
            out[i * total + before..i * total + before + w]
                .copy_from_slice(&t.data()[i * w..(i + 1) * w]);
        }
        let shape = if rank == 2 { vec![n, total] } else { vec![total] };
        let v = Tensor::from_vec(&shape, out);
        self.unary(Op::PadLast { before }, x, v)
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(x).data().iter().sum());
        self.unary(Op::Sum, x, v)
    }

    /// Mean of all entries, as a scalar.
    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let n = self.value(x).len();
        assert!(n > 0, "mean of empty tensor");
        let s = self.sum(x);
        self.scale(s, 1.0 / n as f64)
    }

    /// Sums over leading axes until `target` (a suffix of the input shape)
    /// remains. `[1]` sums everything.
    pub fn sum_to(&mut self, x: NodeId, target: &[usize]) -> NodeId {
        let t = self.value(x);
        if t.shape() == target {
            // still record a node so vjp composition stays uniform
        }
        let p: usize = target.iter().product();
        assert!(
            is_suffix(target, t.shape()) || p == 1,
            "sum_to target {:?} is not a suffix of {:?}",
            target,
            t.shape()
        );
        let mut out = vec![0.0; p];
        for (i, &v) in t.data().iter().enumerate() {
            out[i % p] += v;
        }
        let v = Tensor::from_vec(target, out);
        self.unary(Op::SumTo, x, v)
    }

    /// Reverse-mode sweep from a scalar output. Gradients accumulate over
    /// fan-out. Adjoints are recorded as ordinary nodes, so a second backward
    /// pass over an expression built from these gradients is valid.
    pub fn backward(&mut self, output: NodeId) -> Gradients {
        assert_eq!(self.value(output).len(), 1, "backward requires a scalar output");
        let n = self.nodes.len();
        let mut adjoint: Vec<Option<NodeId>> = vec![None; n];
        let seed = self.constant(Tensor::ones(self.value(output).shape()));
        adjoint[output.0] = Some(seed);

        for i in (0..=output.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let g = match adjoint[i] {
                Some(g) => g,
                None => continue,
            };
            let contributions = self.vjp(i, g);
            for (input, grad) in contributions {
                adjoint[input.0] = Some(match adjoint[input.0] {
                    Some(existing) => self.add(existing, grad),
                    None => grad,
                });
            }
        }
        Gradients { adjoint }
    }

    /// Adjoint contributions of node `i` to each differentiable input.
    fn vjp(&mut self, i: usize, g: NodeId) -> Vec<(NodeId, NodeId)> {
        let op = self.nodes[i].op.clone();
        let inputs = self.nodes[i].inputs.clone();
        let out = NodeId(i);
        let mut res = Vec::new();
        let mut emit = |tape: &mut Tape, input: NodeId, grad: NodeId| {
            if tape.nodes[input.0].requires_grad {
                res.push((input, grad));
            }
        };
        match op {
            Op::Leaf => {}
            Op::Add => {
                let (a, b) = (inputs[0], inputs[1]);
                let da = self.reduce_like(g, a);
                emit(self, a, da);
                let db = self.reduce_like(g, b);
                emit(self, b, db);
            }
            Op::Sub => {
                let (a, b) = (inputs[0], inputs[1]);
                let da = self.reduce_like(g, a);
                emit(self, a, da);
                let ng = self.neg(g);
                let db = self.reduce_like(ng, b);
                emit(self, b, db);
            }
            Op::Mul => {
                let (a, b) = (inputs[0], inputs[1]);
                if self.nodes[a.0].requires_grad {
                    let gb = self.mul(g, b);
                    let da = self.reduce_like(gb, a);
                    emit(self, a, da);
                }
                if self.nodes[b.0].requires_grad {
                    let ga = self.mul(g, a);
                    let db = self.reduce_like(ga, b);
                    emit(self, b, db);
                }
            }
            Op::Div => {
                let (a, b) = (inputs[0], inputs[1]);
                if self.nodes[a.0].requires_grad {
                    let gb = self.div(g, b);
                    let da = self.reduce_like(gb, a);
                    emit(self, a, da);
                }
                if self.nodes[b.0].requires_grad {
                    let ga = self.mul(g, a);
                    let b2 = self.square(b);
                    let q = self.div(ga, b2);
                    let nq = self.neg(q);
                    let db = self.reduce_like(nq, b);
                    emit(self, b, db);
                }
            }
            Op::Neg => {
                let da = self.neg(g);
                emit(self, inputs[0], da);
            }
            Op::Scale(c) => {
                let da = self.scale(g, c);
                emit(self, inputs[0], da);
            }
            Op::MatMul => {
                let (a, b) = (inputs[0], inputs[1]);
                if self.nodes[a.0].requires_grad {
                    let bt = self.transpose(b);
                    let da = self.matmul(g, bt);
                    emit(self, a, da);
                }
                if self.nodes[b.0].requires_grad {
                    let at = self.transpose(a);
                    let db = self.matmul(at, g);
                    emit(self, b, db);
                }
            }
            Op::Transpose => {
                let da = self.transpose(g);
                emit(self, inputs[0], da);
            }
            Op::Tanh => {
                let one = self.constant(Tensor::scalar(1.0));
                let y2 = self.square(out);
                let d = self.sub(one, y2);
                let da = self.mul(g, d);
                emit(self, inputs[0], da);
            }
            Op::Sigmoid => {
                let one = self.constant(Tensor::scalar(1.0));
                let gy = self.mul(g, out);
                let d = self.sub(one, out);
                let da = self.mul(gy, d);
                emit(self, inputs[0], da);
            }
            Op::Exp => {
                let da = self.mul(g, out);
                emit(self, inputs[0], da);
            }
            Op::Log => {
                let da = self.div(g, inputs[0]);
                emit(self, inputs[0], da);
            }
            Op::Sqrt => {
                let two_y = self.scale(out, 2.0);
                let da = self.div(g, two_y);
                emit(self, inputs[0], da);
            }
            Op::Square => {
                let two_x = self.scale(inputs[0], 2.0);
                let da = self.mul(g, two_x);
                emit(self, inputs[0], da);
            }
            Op::Softmax => {
                let k = self.value(out).cols();
                let t = self.mul(g, out);
                let ones_k1 = self.constant(Tensor::ones(&[k, 1]));
                let rowsum = self.matmul(t, ones_k1);
                let ones_1k = self.constant(Tensor::ones(&[1, k]));
                let spread = self.matmul(rowsum, ones_1k);
                let ss = self.mul(out, spread);
                let da = self.sub(t, ss);
                emit(self, inputs[0], da);
            }
            Op::ConcatLast => {
                let rank = self.value(out).shape().len();
                let mut off = 0;
                for &p in &inputs {
                    let w = {
                        let s = self.value(p).shape();
                        if rank == 2 { s[1] } else { s[0] }
                    };
                    if self.nodes[p.0].requires_grad {
                        let dp = self.slice_last(g, off, w);
                        emit(self, p, dp);
                    }
                    off += w;
                }
            }
            Op::SliceLast { start, len } => {
                let x = inputs[0];
                let w = *self.value(x).shape().last().unwrap();
                let da = self.pad_last(g, start, w - start - len);
                emit(self, x, da);
            }
            Op::PadLast { before } => {
                let x = inputs[0];
                let w = *self.value(x).shape().last().unwrap();
                let da = self.slice_last(g, before, w);
                emit(self, x, da);
            }
            Op::Sum | Op::SumTo => {
                let x = inputs[0];
                let ones = self.constant(Tensor::ones(self.value(x).shape()));
                let da = self.mul(ones, g);
                emit(self, x, da);
            }
        }
        res
    }

    /// `g` summed down to the shape of `like` (no-op when shapes already match).
    fn reduce_like(&mut self, g: NodeId, like: NodeId) -> NodeId {
        let target = self.value(like).shape().to_vec();
        if self.value(g).shape() == target.as_slice() {
            g
        } else {
            self.sum_to(g, &target)
        }
    }
}

fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn is_suffix(suffix: &[usize], shape: &[usize]) -> bool {
    suffix.len() <= shape.len() && shape[shape.len() - suffix.len()..] == *suffix
}

/// Elementwise zip with suffix broadcast over leading axes. Scalars (length 1)
/// broadcast to anything.
fn broadcast_zip(opname: &str, a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    if a.shape() == b.shape() {
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        return Tensor::from_vec(a.shape(), data);
    }
    let (big, small, small_is_b) = if a.len() >= b.len() { (a, b, true) } else { (b, a, false) };
    assert!(
        is_suffix(small.shape(), big.shape()) || small.len() == 1,
        "{opname}: shape {:?} does not broadcast against {:?}",
        a.shape(),
        b.shape()
    );
    let p = small.len().max(1);
    let data = big
        .data()
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let y = small.data()[i % p];
            if small_is_b { f(x, y) } else { f(y, x) }
        })
        .collect();
    Tensor::from_vec(big.shape(), data)
}

fn matmul_value(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k) = (a.rows(), a.cols());
    let (k2, n) = (b.rows(), b.cols());
    assert_eq!(k, k2, "matmul inner-dim mismatch: {:?} x {:?}", a.shape(), b.shape());
    let mut out = vec![0.0; m * n];
    let ad = a.data();
    let bd = b.data();
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for kk in 0..k {
            let aik = ad[i * k + kk];
            if aik == 0.0 {
                continue;
            }
            let brow = &bd[kk * n..(kk + 1) * n];
            for j in 0..n {
                orow[j] += aik * brow[j];
            }
        }
    }
    Tensor::from_vec(&[m, n], out)
}

//! Finite-difference verification of tape gradients.

use super::tape::{NodeId, Tape};
use super::tensor::Tensor;

/// Max relative error between tape gradients and central finite differences,
/// over every coordinate of every input.
///
/// `f` must produce a scalar node. The relative error denominator is
/// `max(1, |analytic|, |numeric|)`, which stays well-behaved near zero.
pub fn grad_check_multi<F>(f: F, inputs: &[Tensor], eps: f64) -> f64
where
    F: Fn(&mut Tape, &[NodeId]) -> NodeId,
{
    let eval = |points: &[Tensor]| -> f64 {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = points.iter().map(|x| tape.var(x.clone())).collect();
        let out = f(&mut tape, &ids);
        tape.value(out).item()
    };

    let mut tape = Tape::new();
    let ids: Vec<NodeId> = inputs.iter().map(|x| tape.var(x.clone())).collect();
    let out = f(&mut tape, &ids);
    assert_eq!(tape.value(out).len(), 1, "grad_check requires a scalar function");
    let grads = tape.backward(out);
    let analytic: Vec<Tensor> = ids.iter().map(|&id| tape.grad(&grads, id)).collect();

    let mut worst: f64 = 0.0;
    for (k, input) in inputs.iter().enumerate() {
        for c in 0..input.len() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[c] += eps;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[c] -= eps;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * eps);
            let a = analytic[k].data()[c];
            let err = (a - numeric).abs() / 1.0_f64.max(a.abs()).max(numeric.abs());
            worst = worst.max(err);
        }
    }
    worst
}

/// Single-input convenience wrapper around [`grad_check_multi`].
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> f64
where
    F: Fn(&mut Tape, NodeId) -> NodeId,
{
    grad_check_multi(|tape, ids| f(tape, ids[0]), std::slice::from_ref(x), eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn linear_function_is_exact() {
        let x = Tensor::from_vec(&[4], vec![0.3, -1.2, 2.5, 0.0]);
        let err = grad_check(|t, x| t.sum(x), &x, 1e-5);
        assert!(err <= 1e-10, "err = {err}");
    }

    #[test]
    fn sum_of_squares_at_zero() {
        let x = Tensor::zeros(&[5]);
        let err = grad_check(
            |t, x| {
                let s = t.square(x);
                t.sum(s)
            },
            &x,
            1e-5,
        );
        assert!(err <= 1e-8, "err = {err}");
    }

    #[test]
    fn tanh_layer_under_1e4() {
        let mut rng = crate::rng::stream(3, "gradcheck-tanh");
        let w = Tensor::from_vec(&[3, 3], (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let x = Tensor::from_vec(&[1, 3], (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let err = grad_check_multi(
            |t, ids| {
                let z = t.matmul(ids[1], ids[0]);
                let h = t.tanh(z);
                t.sum(h)
            },
            &[w, x],
            1e-5,
        );
        assert!(err < 1e-4, "err = {err}");
    }

    #[test]
    fn two_layer_mlp_matches_finite_differences() {
        let mut rng = crate::rng::stream(4, "gradcheck-mlp");
        let mut rnd = |shape: &[usize]| {
            let n = shape.iter().product();
            Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-0.8..0.8)).collect())
        };
        let inputs = vec![rnd(&[2, 3]), rnd(&[3, 4]), rnd(&[4]), rnd(&[4, 2]), rnd(&[2])];
        let err = grad_check_multi(
            |t, ids| {
                let (x, w1, b1, w2, b2) = (ids[0], ids[1], ids[2], ids[3], ids[4]);
                let z1 = t.matmul(x, w1);
                let z1b = t.add(z1, b1);
                let h1 = t.tanh(z1b);
                let z2 = t.matmul(h1, w2);
                let z2b = t.add(z2, b2);
                let h2 = t.tanh(z2b);
                let sq = t.square(h2);
                t.mean(sq)
            },
            &inputs,
            1e-5,
        );
        assert!(err < 1e-4, "err = {err}");
    }
}

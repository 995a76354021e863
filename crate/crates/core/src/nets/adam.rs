//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamParams {
    pub fn with_lr(lr: f64) -> AdamParams {
        AdamParams { lr, ..AdamParams::default() }
    }
}

impl Default for AdamParams {
    fn default() -> AdamParams {
        AdamParams { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second-moment accumulators, one pair per parameter tensor.
#[derive(Clone, Debug)]
pub struct AdamState {
    hp: AdamParams,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl AdamState {
    pub fn new(hp: AdamParams, shapes: &[&[usize]]) -> AdamState {
        AdamState {
            hp,
            m: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            v: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            step: 0,
        }
    }

    pub fn for_params(hp: AdamParams, params: &[(String, &Tensor)]) -> AdamState {
        let shapes: Vec<&[usize]> = params.iter().map(|(_, t)| t.shape()).collect();
        AdamState::new(hp, &shapes)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update over all parameters. Non-finite gradients
    /// leave every parameter untouched and signal the failure.
    pub fn step(&mut self, params: &mut [(String, &mut Tensor)], grads: &[Tensor]) -> Result<()> {
        assert_eq!(params.len(), grads.len(), "adam: {} params vs {} grads", params.len(), grads.len());
        for ((name, p), g) in params.iter().zip(grads) {
            assert_eq!(
                p.shape(),
                g.shape(),
                "adam: shape mismatch for {name}: {:?} vs {:?}",
                p.shape(),
                g.shape()
            );
            if !g.all_finite() {
                return Err(Error::Numeric(format!("non-finite gradient for parameter {name}")));
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let AdamParams { lr, beta1, beta2, eps } = self.hp;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (k, ((_, p), g)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.m[k].data_mut();
            let v = self.v[k].data_mut();
            let pd = p.data_mut();
            for ((pi, mi_vi), &gi) in pd.iter_mut().zip(m.iter_mut().zip(v.iter_mut())).zip(g.data())
            {
                let (mi, vi) = mi_vi;
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *pi -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut p = Tensor::from_vec(&[2], vec![1.5, -2.5]);
        let mut state = AdamState::new(AdamParams::default(), &[&[2]]);
        state
            .step(&mut [("p".into(), &mut p)], &[Tensor::zeros(&[2])])
            .unwrap();
        assert_eq!(p.data(), &[1.5, -2.5]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // Independent evaluation of the update formulas at t=1 with g=1:
        // m_hat = 1, v_hat = 1, so the step is -lr / (1 + eps) ~ -lr.
        let mut p = Tensor::scalar(0.0);
        let hp = AdamParams::with_lr(0.1);
        let mut state = AdamState::new(hp, &[&[1]]);
        state
            .step(&mut [("p".into(), &mut p)], &[Tensor::scalar(1.0)])
            .unwrap();
        let delta = p.item();
        assert!((delta + 0.1).abs() < 1e-6, "delta = {delta}");
    }

    #[test]
    fn constant_gradient_trajectory_matches_reference_formulas() {
        // Reference trajectory computed with the textbook recursions.
        let hp = AdamParams { lr: 0.05, beta1: 0.9, beta2: 0.999, eps: 1e-8 };
        let g = 0.7;
        let mut p_ref = 1.0_f64;
        let (mut m, mut v) = (0.0_f64, 0.0_f64);
        let mut p = Tensor::scalar(1.0);
        let mut state = AdamState::new(hp, &[&[1]]);
        for t in 1..=25 {
            m = hp.beta1 * m + (1.0 - hp.beta1) * g;
            v = hp.beta2 * v + (1.0 - hp.beta2) * g * g;
            let m_hat = m / (1.0 - hp.beta1.powi(t));
            let v_hat = v / (1.0 - hp.beta2.powi(t));
            p_ref -= hp.lr * m_hat / (v_hat.sqrt() + hp.eps);
            state
                .step(&mut [("p".into(), &mut p)], &[Tensor::scalar(g)])
                .unwrap();
            assert!((p.item() - p_ref).abs() < 1e-14, "step {t}");
        }
    }

    #[test]
    fn non_finite_gradient_is_signalled_without_update() {
        let mut p = Tensor::scalar(3.0);
        let mut state = AdamState::new(AdamParams::default(), &[&[1]]);
        let err = state
            .step(&mut [("p".into(), &mut p)], &[Tensor::scalar(f64::NAN)])
            .unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
        assert_eq!(p.item(), 3.0);
    }

    #[test]
    fn seeded_runs_are_bit_identical() {
        let run = || {
            let mut rng = crate::rng::stream(21, "adam-det");
            let mut p = crate::nets::uniform_init(&[4], 4, &mut rng);
            let mut state = AdamState::new(AdamParams::default(), &[&[4]]);
            for _ in 0..10 {
                let g = crate::nets::uniform_init(&[4], 4, &mut rng);
                state.step(&mut [("p".into(), &mut p)], &[g]).unwrap();
            }
            p.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}

//! AdaDelta with a learning-rate multiplier.
//!
//! Per scalar parameter:
//!
//! ```text
//! E[g²]  ← ρ·E[g²] + (1-ρ)·g²
//! Δ      ← -(√(E[Δ²] + ε) / √(E[g²] + ε))·g
//! E[Δ²]  ← ρ·E[Δ²] + (1-ρ)·Δ²
//! θ      ← θ + lr·Δ
//! ```
//!
//! `E[Δ²]` tracks the unscaled step, as in the PyTorch implementation; with
//! `lr = 1` this is the original parameter-free method.

use crate::error::{Error, Result};

use super::params::ModelParams;
use super::train::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct AdaDeltaState {
    pub sq_grad: ModelParams,
    pub sq_update: ModelParams,
    pub steps: usize,
}

impl AdaDeltaState {
    pub fn new(like: &ModelParams) -> Self {
        AdaDeltaState {
            sq_grad: like.zeros_like(),
            sq_update: like.zeros_like(),
            steps: 0,
        }
    }
}

pub fn adadelta_update(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut AdaDeltaState,
    cfg: &TrainConfig,
) -> Result<()> {
    if params.dims() != grads.dims() || params.dims() != state.sq_grad.dims() {
        return Err(Error::InvalidShape(format!(
            "adadelta: params {:?}, grads {:?}, state {:?}",
            params.dims(),
            grads.dims(),
            state.sq_grad.dims()
        )));
    }
    for (t, g) in grads.tensors().iter().enumerate() {
        if let Some(k) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite gradient in tensor {t}, element {k}"
            )));
        }
    }
    let (rho, eps, lr) = (cfg.adadelta_rho, cfg.adadelta_eps, cfg.learning_rate);
    let tensors = params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(state.sq_grad.tensors_mut())
        .zip(state.sq_update.tensors_mut());
    for (((theta, g), eg2), ed2) in tensors {
        for k in 0..theta.len() {
            eg2[k] = rho * eg2[k] + (1.0 - rho) * g[k] * g[k];
            let delta = -((ed2[k] + eps).sqrt() / (eg2[k] + eps).sqrt()) * g[k];
            ed2[k] = rho * ed2[k] + (1.0 - rho) * delta * delta;
            theta[k] += lr * delta;
        }
    }
    state.steps += 1;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::ModelDims;
    use crate::numeric::SeededRng;

    fn setup() -> (ModelParams, TrainConfig) {
        let dims = ModelDims {
            vocab_size: 5,
            emb_dim: 2,
            hidden_dim: 2,
        };
        (ModelParams::init(dims, 0.08, &mut SeededRng::new(4)), TrainConfig::default())
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let (mut m, cfg) = setup();
        let before = m.clone();
        let mut st = AdaDeltaState::new(&m);
        adadelta_update(&mut m, &before.zeros_like(), &mut st, &cfg).unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn first_step_plug_in() {
        let (mut m, cfg) = setup();
        let before = m.clone();
        let mut g = m.zeros_like();
        g.out_bias[0] = 1.0;
        let mut st = AdaDeltaState::new(&m);
        adadelta_update(&mut m, &g, &mut st, &cfg).unwrap();
        // -0.2 · √1e-6 / √(0.05 + 1e-6)
        let expect = -0.2 * (1e-6f64).sqrt() / (0.05f64 + 1e-6).sqrt();
        assert!((expect - (-8.944_182_468_621_678e-4)).abs() < 1e-15);
        assert!((m.out_bias[0] - before.out_bias[0] - expect).abs() < 1e-15);
        assert_eq!(m.out_bias[1], before.out_bias[1]);
    }

    #[test]
    fn accumulator_recurrence() {
        let (mut m, cfg) = setup();
        let mut g = m.zeros_like();
        g.embedding.set(1, 1, 0.5);
        let mut st = AdaDeltaState::new(&m);
        adadelta_update(&mut m, &g, &mut st, &cfg).unwrap();
        adadelta_update(&mut m, &g, &mut st, &cfg).unwrap();
        // E1 = 0.05·0.25 = 0.0125; E2 = 0.95·0.0125 + 0.0125 = 0.024375
        assert!((st.sq_grad.embedding.get(1, 1) - 0.024_375).abs() < 1e-15);
        assert_eq!(st.steps, 2);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let (mut m, cfg) = setup();
        let before = m.clone();
        let mut g = m.zeros_like();
        g.out_bias[2] = f64::NAN;
        let mut st = AdaDeltaState::new(&m);
        assert!(matches!(adadelta_update(&mut m, &g, &mut st, &cfg), Err(Error::Numerical(_))));
        assert_eq!(m, before);
    }
}

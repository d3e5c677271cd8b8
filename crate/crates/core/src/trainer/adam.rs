//! Adam with bias-corrected moment estimates.

use crate::error::{Error, Result};
use crate::net::EmbeddingParams;

use super::loss::Gradients;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;
pub const DEFAULT_LEARNING_RATE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m_weights: Vec<f64>,
    pub m_bias: Vec<f64>,
    pub v_weights: Vec<f64>,
    pub v_bias: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(params: &EmbeddingParams) -> Self {
        Self {
            m_weights: vec![0.0; params.weights().len()],
            m_bias: vec![0.0; params.bias().len()],
            v_weights: vec![0.0; params.weights().len()],
            v_bias: vec![0.0; params.bias().len()],
            step: 0,
            beta1: BETA1,
            beta2: BETA2,
            epsilon: EPSILON,
        }
    }
}

struct Coeffs {
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    /// Bias corrections `1 - beta^t`.
    c1: f64,
    c2: f64,
}

fn update(theta: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64], k: &Coeffs) {
    for i in 0..theta.len() {
        m[i] = k.beta1 * m[i] + (1.0 - k.beta1) * g[i];
        v[i] = k.beta2 * v[i] + (1.0 - k.beta2) * g[i] * g[i];
        let m_hat = m[i] / k.c1;
        let v_hat = v[i] / k.c2;
        theta[i] -= k.lr * m_hat / (v_hat.sqrt() + k.epsilon);
    }
}

/// One Adam update of `params` in place.
///
/// Rejects non-finite gradients before touching any state.
pub fn adam_step(params: &mut EmbeddingParams, state: &mut AdamState, grads: &Gradients, lr: f64) -> Result<()> {
    if grads.weights.len() != params.weights().len() || grads.bias.len() != params.bias().len() {
        return Err(Error::Training("gradient shape does not match parameters".into()));
    }
    if let Some((which, i)) = grads.first_non_finite() {
        return Err(Error::Training(format!(
            "non-finite gradient in {which}[{i}] at Adam step {}",
            state.step + 1
        )));
    }
    state.step += 1;
    let t = state.step.min(i32::MAX as u64) as i32;
    let k = Coeffs {
        lr,
        beta1: state.beta1,
        beta2: state.beta2,
        epsilon: state.epsilon,
        c1: 1.0 - state.beta1.powi(t),
        c2: 1.0 - state.beta2.powi(t),
    };
    update(params.weights_mut(), &mut state.m_weights, &mut state.v_weights, &grads.weights, &k);
    update(params.bias_mut(), &mut state.m_bias, &mut state.v_bias, &grads.bias, &k);
    if !params.is_finite() {
        return Err(Error::Training(format!("parameters became non-finite at Adam step {}", state.step)));
    }
    Ok(())
}

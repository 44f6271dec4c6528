use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    /// lr 1e-3, β₁ 0.9, β₂ 0.999, ε 1e-8.
    pub fn new(param_count: usize) -> Self {
        AdamState::with_hyper(param_count, 1e-3, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyper(param_count: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        AdamState {
            t: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            lr,
            beta1,
            beta2,
            eps,
        }
    }
}

/// Bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut [f64], grad: &[f64], state: &mut AdamState) -> Result<()> {
    if grad.len() != params.len() {
        return Err(Error::Shape { expected: params.len(), got: grad.len() });
    }
    if state.m.len() != params.len() {
        return Err(Error::Shape { expected: params.len(), got: state.m.len() });
    }
    state.t += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut state.m).zip(&mut state.v) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

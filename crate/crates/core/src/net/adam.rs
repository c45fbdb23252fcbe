use super::{Gradients, Params, ProjectionNet};
use crate::error::{Result, ZslError};

/// Adam moment accumulators and hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Params,
    pub v: Params,
}

impl AdamState {
    pub fn new(net: &ProjectionNet, lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Params::zeros(net.dims()),
            v: Params::zeros(net.dims()),
        }
    }
}

/// One bias-corrected Adam update of `net` in place.
pub fn adam_step(net: &mut ProjectionNet, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    if !net.params.same_shape(grads) || !net.params.same_shape(&state.m) || !net.params.same_shape(&state.v) {
        return Err(ZslError::arg("gradient / optimizer state shapes do not match the network"));
    }
    state.t += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    let (lr, eps) = (state.lr, state.eps);
    let params = net.params.tensors_mut();
    let ms = state.m.tensors_mut();
    let vs = state.v.tensors_mut();
    for (((_, p), (_, m)), ((_, v), (_, g))) in params.into_iter().zip(ms).zip(vs.into_iter().zip(grads.tensors())) {
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

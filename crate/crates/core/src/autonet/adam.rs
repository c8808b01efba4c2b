use super::{Gradients, Network};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, shaped like the network parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(net: &Network) -> Self {
        let zeros: Vec<Vec<f64>> = net.layers().iter().map(|l| vec![0.0; l.params.len()]).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// One bias-corrected Adam update of `net` in place.
pub fn adam_step(net: &mut Network, grads: &Gradients, state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    adam_update(net, &grads.params, state, cfg)
}

pub fn adam_update(net: &mut Network, grads: &[Vec<f64>], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if grads.len() != net.layers().len() || state.m.len() != grads.len() {
        return Err(Error::shape("gradient / optimizer state do not match the network"));
    }
    if grads.iter().flatten().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradients passed to adam".into()));
    }
    state.t += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.t as i32);
    for (li, layer) in net.layers_mut().iter_mut().enumerate() {
        let g = &grads[li];
        if g.len() != layer.params.len() {
            return Err(Error::shape(format!("layer {li} gradient length")));
        }
        let (m, v) = (&mut state.m[li], &mut state.v[li]);
        for i in 0..g.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let mh = m[i] / bc1;
            let vh = v[i] / bc2;
            layer.params[i] -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

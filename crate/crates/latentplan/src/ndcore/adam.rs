//! Bias-corrected Adam.

use crate::ndcore::net::Network;
use crate::ndcore::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl AdamState {
    /// Fresh state with moment buffers matching the network parameters.
    pub fn for_network(net: &Network) -> Self {
        let mut m = Vec::new();
        net.visit_params(|p| m.push(Tensor::zeros(p.shape().to_vec())));
        let v = m.clone();
        AdamState { m, v, t: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One Adam update from the gradients accumulated in the parameter grad
/// slots. Gradients are left untouched; callers zero them per batch.
pub fn adam_step(net: &mut Network, state: &mut AdamState, lr: f32) {
    state.t += 1;
    let t = state.t as f64;
    let b1 = state.beta1 as f64;
    let b2 = state.beta2 as f64;
    let bc1 = 1.0 - b1.powf(t);
    let bc2 = 1.0 - b2.powf(t);
    let eps = state.eps as f64;
    let lr = lr as f64;

    let mut idx = 0;
    let (ms, vs) = (&mut state.m, &mut state.v);
    net.visit_params_mut(|p| {
        let m = ms[idx].data_mut();
        let v = vs[idx].data_mut();
        idx += 1;
        let has_grad = p.grad().is_some();
        if !has_grad {
            // No gradient recorded: moments decay, parameters keep their
            // zero-update guarantee for all-zero fresh state.
            for (mi, vi) in m.iter_mut().zip(v.iter_mut()) {
                *mi *= b1 as f32;
                *vi *= b2 as f32;
            }
        }
        let n = p.len();
        for i in 0..n {
            let g = if has_grad { p.grad().unwrap()[i] as f64 } else { 0.0 };
            let mi = b1 * m[i] as f64 + (1.0 - b1) * g;
            let vi = b2 * v[i] as f64 + (1.0 - b2) * g * g;
            m[i] = mi as f32;
            v[i] = vi as f32;
            let mhat = mi / bc1;
            let vhat = vi / bc2;
            p.data_mut()[i] -= (lr * mhat / (vhat.sqrt() + eps)) as f32;
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndcore::rng::RngStream;

    fn one_param_net() -> Network {
        Network::builder(vec![1], RngStream::new(0)).dense(1).build()
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut net = one_param_net();
        let before: Vec<f32> = {
            let mut v = Vec::new();
            net.visit_params(|p| v.extend_from_slice(p.data()));
            v
        };
        let mut state = AdamState::for_network(&net);
        net.zero_grads();
        net.visit_params_mut(|p| {
            p.grad_mut();
        });
        adam_step(&mut net, &mut state, 0.001);
        let mut after = Vec::new();
        net.visit_params(|p| after.extend_from_slice(p.data()));
        assert_eq!(before, after);
    }

    #[test]
    fn single_step_matches_hand_computation() {
        // p=1, g=1, lr=0.001: mhat=1, vhat=1, update = lr/(1+eps) -> p ~ 0.999
        let mut net = one_param_net();
        net.visit_params_mut(|p| {
            if p.shape() == [1, 1] {
                p.data_mut()[0] = 1.0;
                p.grad_mut()[0] = 1.0;
            } else {
                p.grad_mut();
            }
        });
        let mut state = AdamState::for_network(&net);
        adam_step(&mut net, &mut state, 0.001);
        let mut w = 0.0;
        net.visit_params(|p| {
            if p.shape() == [1, 1] {
                w = p.data()[0];
            }
        });
        assert!((w - 0.999).abs() < 1e-6, "{w}");
        assert_eq!(state.step_count(), 1);
    }
}

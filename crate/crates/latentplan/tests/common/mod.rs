//! Shared test utilities: the central finite-difference gradient oracle.
//!
//! The oracle evaluates the network as a pure function of its parameters
//! (noise draws replay from a cloned rng state), perturbs every parameter
//! and the input with central differences, and compares the assembled
//! numeric gradient vector against the analytic backward pass by relative
//! L2 error.

#![allow(dead_code)]

use latentplan::ndcore::{ForwardCtx, Mode, Network, RngStream, Tensor};

pub const FD_EPS: f32 = 5e-3;
pub const FD_TOLERANCE: f64 = 1e-3;

/// Scalar objective: weighted sum of the outputs plus any variational loss
/// the gumbel layers contribute. The weighted sum keeps every output
/// gradient O(1) so the relative-error comparison is meaningful.
fn objective(net: &Network, x: &Tensor, aux: Option<&Tensor>, weights: &[f32], rng: &RngStream) -> f64 {
    let mut net = net.clone();
    let mut r = rng.clone();
    let mut ctx = ForwardCtx { mode: Mode::Train, tau: 0.8, aux, rng: &mut r };
    let (y, tape) = net.forward_train(x, &mut ctx).expect("forward");
    let linear: f64 = y
        .data()
        .iter()
        .zip(weights)
        .map(|(v, w)| *v as f64 * *w as f64)
        .sum();
    linear + kl_weight_of(&net) * tape.variational_loss()
}

fn kl_weight_of(net: &Network) -> f64 {
    use latentplan::ndcore::LayerSpec;
    net.layers
        .iter()
        .find_map(|l| match l {
            LayerSpec::GumbelSoftmax { kl_weight, .. } => Some(*kl_weight as f64),
            _ => None,
        })
        .unwrap_or(0.0)
}

pub struct GradCheckResult {
    pub rel_error: f64,
    pub analytic_norm: f64,
    pub numeric_norm: f64,
}

/// Runs the oracle for one network/input pair. Returns the relative L2
/// error between analytic and numeric gradients over all parameters and
/// the input.
pub fn grad_check(net: &Network, x: &Tensor, aux: Option<&Tensor>, seed: u64) -> GradCheckResult {
    let rng_base = RngStream::new(seed ^ 0x5eed);
    let out_len: usize = {
        let mut probe = net.clone();
        let mut r = rng_base.clone();
        let mut ctx = ForwardCtx { mode: Mode::Train, tau: 0.8, aux, rng: &mut r };
        probe.forward_train(x, &mut ctx).expect("probe forward").0.len()
    };
    let mut wrng = RngStream::new(seed ^ 0xda7a);
    let weights: Vec<f32> = (0..out_len)
        .map(|_| {
            let mag = wrng.uniform_range(0.5, 1.5);
            if wrng.uniform() < 0.5 {
                -mag
            } else {
                mag
            }
        })
        .collect();

    // Analytic pass.
    let mut train_net = net.clone();
    train_net.zero_grads();
    let mut r = rng_base.clone();
    let mut ctx = ForwardCtx { mode: Mode::Train, tau: 0.8, aux, rng: &mut r };
    let (y, mut tape) = train_net.forward_train(x, &mut ctx).expect("forward");
    assert_eq!(y.len(), out_len);
    let dy = Tensor::new(y.shape().to_vec(), weights.clone());
    let dx = train_net.backward(&mut tape, &dy).expect("backward");

    let mut analytic: Vec<f64> = Vec::new();
    train_net.visit_params(|p| {
        let g = p.grad().expect("param gradient");
        analytic.extend(g.iter().map(|v| *v as f64));
    });
    analytic.extend(dx.data().iter().map(|v| *v as f64));

    // Numeric pass: central differences over every parameter, then the input.
    let mut numeric: Vec<f64> = Vec::new();
    let param_count = net.param_count();
    for pi in 0..param_count {
        let mut plus = net.clone();
        perturb_param(&mut plus, pi, FD_EPS);
        let lp = objective(&plus, x, aux, &weights, &rng_base);
        let mut minus = net.clone();
        perturb_param(&mut minus, pi, -FD_EPS);
        let lm = objective(&minus, x, aux, &weights, &rng_base);
        numeric.push((lp - lm) / (2.0 * FD_EPS as f64));
    }
    for xi in 0..x.len() {
        let mut xp = x.clone();
        xp.data_mut()[xi] += FD_EPS;
        let lp = objective(net, &xp, aux, &weights, &rng_base);
        let mut xm = x.clone();
        xm.data_mut()[xi] -= FD_EPS;
        let lm = objective(net, &xm, aux, &weights, &rng_base);
        numeric.push((lp - lm) / (2.0 * FD_EPS as f64));
    }

    assert_eq!(analytic.len(), numeric.len());
    let diff_norm: f64 = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n) * (a - n))
        .sum::<f64>()
        .sqrt();
    let numeric_norm: f64 = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    let analytic_norm: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    GradCheckResult {
        rel_error: diff_norm / (numeric_norm + 1e-8),
        analytic_norm,
        numeric_norm,
    }
}

fn perturb_param(net: &mut Network, flat_index: usize, delta: f32) {
    let mut remaining = flat_index;
    let mut done = false;
    net.visit_params_mut(|p| {
        if done {
            return;
        }
        if remaining < p.len() {
            p.data_mut()[remaining] += delta;
            done = true;
        } else {
            remaining -= p.len();
        }
    });
    assert!(done, "parameter index out of range");
}

/// Random input tensor with entries bounded away from zero, so relu kinks
/// and saturated regions do not sit exactly on the evaluation point.
pub fn offset_input(shape: Vec<usize>, seed: u64) -> Tensor {
    let mut rng = RngStream::new(seed ^ 0x1217);
    let n: usize = shape.iter().product();
    let data: Vec<f32> = (0..n)
        .map(|_| {
            let mag = rng.uniform_range(0.3, 1.2);
            if rng.uniform() < 0.5 {
                -mag
            } else {
                mag
            }
        })
        .collect();
    Tensor::new(shape, data)
}

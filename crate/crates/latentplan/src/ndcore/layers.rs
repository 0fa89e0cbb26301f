//! Layer kinds and their forward/backward rules.
//!
//! The engine covers exactly the layer set the network architectures need:
//! dense, conv2d (stride 1, zero "same" padding), batchnorm, dropout,
//! gaussian noise, relu/tanh/sigmoid, gumbel-softmax, reshape and concat.
//! Batch items are independent, so batch loops may run in parallel; every
//! reduction runs in a fixed order, which keeps results identical for any
//! thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ndcore::rng::RngStream;
use crate::ndcore::tensor::Tensor;

pub const BATCHNORM_MOMENTUM: f32 = 0.9;
pub const BATCHNORM_EPS: f32 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Noise and dropout active, batch statistics, soft gumbel samples.
    Train,
    /// Deterministic: noise off, running statistics, hard argmax one-hot.
    Infer,
    /// Like Infer but the gumbel layer draws noise and hardens the result;
    /// used for stochastic state augmentation.
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, x: f32) -> f32 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output(self, y: f32) -> f32 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

#[derive(Debug, Clone)]
pub enum LayerSpec {
    /// Fully connected: weight is `[out, in]`, bias `[out]`. Flattens each
    /// batch item implicitly.
    Dense { weight: Tensor, bias: Tensor },
    /// 2-D convolution, stride 1, zero "same" padding. Weight is
    /// `[out_c, in_c, kh, kw]`, bias `[out_c]`.
    Conv2d { weight: Tensor, bias: Tensor },
    /// Normalizes over everything but the leading per-sample axis.
    BatchNorm {
        gamma: Tensor,
        beta: Tensor,
        running_mean: Tensor,
        running_var: Tensor,
        momentum: f32,
        eps: f32,
    },
    Dropout { rate: f32 },
    GaussianNoise { sigma: f32 },
    Activation(Activation),
    /// `vars` independent categorical variables with `cats` categories each.
    /// In train mode the layer also contributes `kl_weight` times the KL
    /// divergence to the uniform prior, injected during backward.
    GumbelSoftmax { vars: usize, cats: usize, kl_weight: f32 },
    /// Per-sample reshape; `dims` excludes the batch axis.
    Reshape { dims: Vec<usize> },
    /// Appends the context's auxiliary tensor to each batch item.
    Concat,
}

impl LayerSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::BatchNorm { .. } => "batchnorm",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::GaussianNoise { .. } => "gaussian_noise",
            LayerSpec::Activation(_) => "activation",
            LayerSpec::GumbelSoftmax { .. } => "gumbel_softmax",
            LayerSpec::Reshape { .. } => "reshape",
            LayerSpec::Concat => "concat",
        }
    }

    /// Output per-sample shape for a given input per-sample shape, or a
    /// shape error if the layer cannot accept it.
    pub fn output_shape(&self, input: &[usize], aux_width: Option<usize>) -> Result<Vec<usize>> {
        let flat: usize = input.iter().product();
        match self {
            LayerSpec::Dense { weight, .. } => {
                let (out, inw) = (weight.shape()[0], weight.shape()[1]);
                if flat != inw {
                    return Err(Error::Shape {
                        expected: format!("{inw} inputs"),
                        actual: format!("{flat} ({input:?})"),
                    });
                }
                Ok(vec![out])
            }
            LayerSpec::Conv2d { weight, .. } => {
                let (oc, ic) = (weight.shape()[0], weight.shape()[1]);
                let (c, h, w) = conv_input_dims(input)?;
                if c != ic {
                    return Err(Error::Shape {
                        expected: format!("{ic} channels"),
                        actual: format!("{c} channels"),
                    });
                }
                Ok(vec![oc, h, w])
            }
            LayerSpec::BatchNorm { gamma, .. } => {
                if input.is_empty() || input[0] != gamma.len() {
                    return Err(Error::Shape {
                        expected: format!("leading per-sample axis {}", gamma.len()),
                        actual: format!("{input:?}"),
                    });
                }
                Ok(input.to_vec())
            }
            LayerSpec::GumbelSoftmax { vars, cats, .. } => {
                if flat != vars * cats {
                    return Err(Error::Shape {
                        expected: format!("{} = {vars}x{cats} values", vars * cats),
                        actual: format!("{flat}"),
                    });
                }
                Ok(vec![*vars, *cats])
            }
            LayerSpec::Reshape { dims } => {
                let n: usize = dims.iter().product();
                if flat != n {
                    return Err(Error::Shape {
                        expected: format!("{n} values for {dims:?}"),
                        actual: format!("{flat}"),
                    });
                }
                Ok(dims.clone())
            }
            LayerSpec::Concat => {
                let aw = aux_width.ok_or_else(|| Error::Shape {
                    expected: "an auxiliary input for concat".into(),
                    actual: "none".into(),
                })?;
                Ok(vec![flat + aw])
            }
            _ => Ok(input.to_vec()),
        }
    }

    /// Trainable parameter tensors, in a fixed order.
    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            LayerSpec::Dense { weight, bias } | LayerSpec::Conv2d { weight, bias } => {
                vec![weight, bias]
            }
            LayerSpec::BatchNorm { gamma, beta, .. } => vec![gamma, beta],
            _ => vec![],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            LayerSpec::Dense { weight, bias } | LayerSpec::Conv2d { weight, bias } => {
                vec![weight, bias]
            }
            LayerSpec::BatchNorm { gamma, beta, .. } => vec![gamma, beta],
            _ => vec![],
        }
    }
}

fn conv_input_dims(per_sample: &[usize]) -> Result<(usize, usize, usize)> {
    match per_sample.len() {
        2 => Ok((1, per_sample[0], per_sample[1])),
        3 => Ok((per_sample[0], per_sample[1], per_sample[2])),
        _ => Err(Error::Shape {
            expected: "rank 2 or 3 per-sample input for conv2d".into(),
            actual: format!("{per_sample:?}"),
        }),
    }
}

/// Per-layer values cached by a training forward pass.
#[derive(Debug)]
pub enum Trace {
    Dense { x: Tensor },
    Conv2d { x: Tensor },
    BatchNorm { xhat: Tensor, inv_std: Vec<f32> },
    Dropout { mask: Option<Vec<f32>> },
    GaussianNoise,
    Activation { y: Tensor },
    GumbelSoftmax { z: Tensor, q: Tensor, tau: f32 },
    Reshape { from: Vec<usize> },
    Concat { x_width: usize },
}

pub struct ForwardCtx<'a> {
    pub mode: Mode,
    pub tau: f32,
    pub aux: Option<&'a Tensor>,
    pub rng: &'a mut RngStream,
}

// ── forward ────────────────────────────────────────────────────────────

impl LayerSpec {
    /// Runs the layer. Returns the output and, in train mode, the trace
    /// needed by `backward`. `update_stats` lets the caller decide whether
    /// train-mode batchnorm folds the batch statistics into the running
    /// estimates (the training loop does, a side-effect-free evaluation
    /// does not); it requires `running` passed via `forward_stateful`.
    pub fn forward(
        &self,
        x: &Tensor,
        ctx: &mut ForwardCtx,
        want_trace: bool,
    ) -> Result<(Tensor, Option<Trace>)> {
        match self {
            LayerSpec::Dense { weight, bias } => {
                let y = dense_forward(x, weight, bias)?;
                let trace = want_trace.then(|| Trace::Dense { x: x.clone() });
                Ok((y, trace))
            }
            LayerSpec::Conv2d { weight, bias } => {
                let y = conv2d_forward(x, weight, bias)?;
                let trace = want_trace.then(|| Trace::Conv2d { x: x.clone() });
                Ok((y, trace))
            }
            LayerSpec::BatchNorm {
                gamma,
                beta,
                running_mean,
                running_var,
                eps,
                ..
            } => match ctx.mode {
                Mode::Train => {
                    let (y, xhat, inv_std, _, _) = batchnorm_train_forward(x, gamma, beta, *eps)?;
                    let trace = want_trace.then(|| Trace::BatchNorm { xhat, inv_std });
                    Ok((y, trace))
                }
                Mode::Infer | Mode::Sample => {
                    let y = batchnorm_infer_forward(x, gamma, beta, running_mean, running_var, *eps)?;
                    Ok((y, None))
                }
            },
            LayerSpec::Dropout { rate } => match ctx.mode {
                Mode::Train if *rate > 0.0 => {
                    let keep = 1.0 - *rate;
                    let scale = 1.0 / keep;
                    let mask: Vec<f32> = (0..x.len())
                        .map(|_| if ctx.rng.uniform() < *rate { 0.0 } else { scale })
                        .collect();
                    let mut y = x.clone();
                    for (v, m) in y.data_mut().iter_mut().zip(&mask) {
                        *v *= m;
                    }
                    let trace = want_trace.then(|| Trace::Dropout { mask: Some(mask) });
                    Ok((y, trace))
                }
                _ => {
                    let trace = want_trace.then(|| Trace::Dropout { mask: None });
                    Ok((x.clone(), trace))
                }
            },
            LayerSpec::GaussianNoise { sigma } => match ctx.mode {
                Mode::Train if *sigma > 0.0 => {
                    let mut y = x.clone();
                    for v in y.data_mut() {
                        *v += *sigma * ctx.rng.normal();
                    }
                    Ok((y, want_trace.then(|| Trace::GaussianNoise)))
                }
                _ => Ok((x.clone(), want_trace.then(|| Trace::GaussianNoise))),
            },
            LayerSpec::Activation(act) => {
                let mut y = x.clone();
                for v in y.data_mut() {
                    *v = act.apply(*v);
                }
                let trace = want_trace.then(|| Trace::Activation { y: y.clone() });
                Ok((y, trace))
            }
            LayerSpec::GumbelSoftmax { vars, cats, .. } => {
                gumbel_softmax_layer_forward(x, *vars, *cats, ctx, want_trace)
            }
            LayerSpec::Reshape { dims } => {
                let from: Vec<usize> = x.shape()[1..].to_vec();
                let mut shape = vec![x.batch()];
                shape.extend_from_slice(dims);
                let y = x.clone().reshaped(shape)?;
                Ok((y, want_trace.then(|| Trace::Reshape { from })))
            }
            LayerSpec::Concat => {
                let aux = ctx.aux.ok_or_else(|| Error::Shape {
                    expected: "auxiliary input for concat".into(),
                    actual: "none".into(),
                })?;
                if aux.batch() != x.batch() {
                    return Err(Error::Shape {
                        expected: format!("aux batch {}", x.batch()),
                        actual: format!("{}", aux.batch()),
                    });
                }
                let (xw, aw) = (x.row_len(), aux.row_len());
                let b = x.batch();
                let mut out = vec![0.0f32; b * (xw + aw)];
                for i in 0..b {
                    out[i * (xw + aw)..i * (xw + aw) + xw].copy_from_slice(x.row(i));
                    out[i * (xw + aw) + xw..(i + 1) * (xw + aw)].copy_from_slice(aux.row(i));
                }
                let y = Tensor::new(vec![b, xw + aw], out);
                Ok((y, want_trace.then(|| Trace::Concat { x_width: xw })))
            }
        }
    }

    /// Propagates `dy` through the layer, accumulating parameter gradients
    /// and returning the gradient with respect to the layer input.
    pub fn backward(&mut self, trace: &Trace, dy: &Tensor, kl_scale: f32) -> Result<Tensor> {
        match (self, trace) {
            (LayerSpec::Dense { weight, bias }, Trace::Dense { x }) => {
                dense_backward(x, weight, bias, dy)
            }
            (LayerSpec::Conv2d { weight, bias }, Trace::Conv2d { x }) => {
                conv2d_backward(x, weight, bias, dy)
            }
            (LayerSpec::BatchNorm { gamma, beta, .. }, Trace::BatchNorm { xhat, inv_std }) => {
                batchnorm_backward(xhat, inv_std, gamma, beta, dy)
            }
            (LayerSpec::Dropout { .. }, Trace::Dropout { mask }) => {
                let mut dx = dy.clone();
                if let Some(mask) = mask {
                    for (v, m) in dx.data_mut().iter_mut().zip(mask) {
                        *v *= m;
                    }
                }
                Ok(dx)
            }
            (LayerSpec::GaussianNoise { .. }, Trace::GaussianNoise) => Ok(dy.clone()),
            (LayerSpec::Activation(act), Trace::Activation { y }) => {
                let mut dx = dy.clone();
                for (v, yo) in dx.data_mut().iter_mut().zip(y.data()) {
                    *v *= act.derivative_from_output(*yo);
                }
                Ok(dx)
            }
            (
                LayerSpec::GumbelSoftmax { vars, cats, kl_weight },
                Trace::GumbelSoftmax { z, q, tau },
            ) => gumbel_softmax_backward(z, q, *tau, *vars, *cats, dy, *kl_weight * kl_scale),
            (LayerSpec::Reshape { .. }, Trace::Reshape { from }) => {
                let mut shape = vec![dy.batch()];
                shape.extend_from_slice(from);
                dy.clone().reshaped(shape)
            }
            (LayerSpec::Concat, Trace::Concat { x_width }) => {
                let b = dy.batch();
                let full = dy.row_len();
                let mut dx = vec![0.0f32; b * x_width];
                for i in 0..b {
                    dx[i * x_width..(i + 1) * x_width]
                        .copy_from_slice(&dy.data()[i * full..i * full + x_width]);
                }
                Ok(Tensor::new(vec![b, *x_width], dx))
            }
            (layer, _) => Err(Error::Format(format!(
                "trace does not match layer kind {}",
                layer.kind_name()
            ))),
        }
    }
}

// ── dense ──────────────────────────────────────────────────────────────

fn dense_forward(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (out, inw) = (weight.shape()[0], weight.shape()[1]);
    let b = x.batch();
    if x.row_len() != inw {
        return Err(Error::Shape {
            expected: format!("{inw} inputs"),
            actual: format!("{} ({})", x.row_len(), x.shape_string()),
        });
    }
    let w = weight.data();
    let bs = bias.data();
    let mut ydata = vec![0.0f32; b * out];
    ydata
        .par_chunks_mut(out)
        .enumerate()
        .for_each(|(i, yrow)| {
            let xrow = &x.data()[i * inw..(i + 1) * inw];
            for (o, yo) in yrow.iter_mut().enumerate() {
                let wrow = &w[o * inw..(o + 1) * inw];
                let mut acc = 0.0f32;
                for (xv, wv) in xrow.iter().zip(wrow) {
                    acc += xv * wv;
                }
                *yo = acc + bs[o];
            }
        });
    Ok(Tensor::new(vec![b, out], ydata))
}

fn dense_backward(x: &Tensor, weight: &mut Tensor, bias: &mut Tensor, dy: &Tensor) -> Result<Tensor> {
    let (out, inw) = (weight.shape()[0], weight.shape()[1]);
    let b = x.batch();
    let xflat = x.data();
    let w = weight.data().to_vec();

    // dW[o,i] = sum_b dy[b,o] x[b,i];  db[o] = sum_b dy[b,o]
    {
        let gw = weight.grad_mut();
        gw.par_chunks_mut(inw).enumerate().for_each(|(o, grow)| {
            for bi in 0..b {
                let d = dy.data()[bi * out + o];
                if d != 0.0 {
                    let xrow = &xflat[bi * inw..(bi + 1) * inw];
                    for (g, xv) in grow.iter_mut().zip(xrow) {
                        *g += d * xv;
                    }
                }
            }
        });
    }
    {
        let gb = bias.grad_mut();
        for bi in 0..b {
            for o in 0..out {
                gb[o] += dy.data()[bi * out + o];
            }
        }
    }

    // dx[b,i] = sum_o dy[b,o] W[o,i]
    let mut dx = vec![0.0f32; b * inw];
    dx.par_chunks_mut(inw).enumerate().for_each(|(bi, dxrow)| {
        for o in 0..out {
            let d = dy.data()[bi * out + o];
            if d != 0.0 {
                let wrow = &w[o * inw..(o + 1) * inw];
                for (dxv, wv) in dxrow.iter_mut().zip(wrow) {
                    *dxv += d * wv;
                }
            }
        }
    });
    let mut shape = vec![b];
    shape.extend_from_slice(&x.shape()[1..]);
    Tensor::new(vec![b, inw], dx).reshaped(shape)
}

// ── conv2d ─────────────────────────────────────────────────────────────

fn conv2d_forward(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let [oc, ic, kh, kw] = [
        weight.shape()[0],
        weight.shape()[1],
        weight.shape()[2],
        weight.shape()[3],
    ];
    let (c, h, w) = conv_input_dims(&x.shape()[1..])?;
    if c != ic {
        return Err(Error::Shape {
            expected: format!("{ic} input channels"),
            actual: format!("{c}"),
        });
    }
    let b = x.batch();
    let (pt, pl) = ((kh - 1) / 2, (kw - 1) / 2);
    let wd = weight.data();
    let bd = bias.data();
    let plane = h * w;
    let mut ydata = vec![0.0f32; b * oc * plane];

    ydata
        .par_chunks_mut(oc * plane)
        .enumerate()
        .for_each(|(bi, yb)| {
            let xb = &x.data()[bi * ic * plane..(bi + 1) * ic * plane];
            for o in 0..oc {
                let yplane = &mut yb[o * plane..(o + 1) * plane];
                yplane.iter_mut().for_each(|v| *v = bd[o]);
                for cin in 0..ic {
                    let xplane = &xb[cin * plane..(cin + 1) * plane];
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let wv = wd[((o * ic + cin) * kh + ky) * kw + kx];
                            if wv == 0.0 {
                                continue;
                            }
                            // y[oy,ox] += wv * x[oy+ky-pt, ox+kx-pl]
                            let oy_lo = pt.saturating_sub(ky);
                            let oy_hi = (h + pt).saturating_sub(ky).min(h);
                            for oy in oy_lo..oy_hi {
                                let iy = oy + ky - pt;
                                let ox_lo = pl.saturating_sub(kx);
                                let ox_hi = (w + pl).saturating_sub(kx).min(w);
                                let yrow = &mut yplane[oy * w..(oy + 1) * w];
                                let xrow = &xplane[iy * w..(iy + 1) * w];
                                for ox in ox_lo..ox_hi {
                                    yrow[ox] += wv * xrow[ox + kx - pl];
                                }
                            }
                        }
                    }
                }
            }
        });
    Ok(Tensor::new(vec![b, oc, h, w], ydata))
}

fn conv2d_backward(x: &Tensor, weight: &mut Tensor, bias: &mut Tensor, dy: &Tensor) -> Result<Tensor> {
    let [oc, ic, kh, kw] = [
        weight.shape()[0],
        weight.shape()[1],
        weight.shape()[2],
        weight.shape()[3],
    ];
    let (_, h, w) = conv_input_dims(&x.shape()[1..])?;
    let b = x.batch();
    let (pt, pl) = ((kh - 1) / 2, (kw - 1) / 2);
    let plane = h * w;
    let wd = weight.data().to_vec();

    // Parameter gradients: parallel over output channels, batch summed
    // sequentially inside so accumulation order is fixed.
    {
        let gw = weight.grad_mut();
        gw.par_chunks_mut(ic * kh * kw).enumerate().for_each(|(o, gchunk)| {
            for bi in 0..b {
                let xb = &x.data()[bi * ic * plane..(bi + 1) * ic * plane];
                let dyp = &dy.data()[(bi * oc + o) * plane..(bi * oc + o + 1) * plane];
                for cin in 0..ic {
                    let xplane = &xb[cin * plane..(cin + 1) * plane];
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let mut acc = 0.0f32;
                            let oy_lo = pt.saturating_sub(ky);
                            let oy_hi = (h + pt).saturating_sub(ky).min(h);
                            for oy in oy_lo..oy_hi {
                                let iy = oy + ky - pt;
                                let ox_lo = pl.saturating_sub(kx);
                                let ox_hi = (w + pl).saturating_sub(kx).min(w);
                                let dyrow = &dyp[oy * w..(oy + 1) * w];
                                let xrow = &xplane[iy * w..(iy + 1) * w];
                                for ox in ox_lo..ox_hi {
                                    acc += dyrow[ox] * xrow[ox + kx - pl];
                                }
                            }
                            gchunk[(cin * kh + ky) * kw + kx] += acc;
                        }
                    }
                }
            }
        });
    }
    {
        let gb = bias.grad_mut();
        for o in 0..oc {
            let mut acc = 0.0f32;
            for bi in 0..b {
                let dyp = &dy.data()[(bi * oc + o) * plane..(bi * oc + o + 1) * plane];
                for v in dyp {
                    acc += v;
                }
            }
            gb[o] += acc;
        }
    }

    // dx[b,ic,iy,ix] = sum_o sum_k dy[b,o,iy-ky+pt, ix-kx+pl] * W[o,ic,ky,kx]
    let mut dx = vec![0.0f32; b * ic * plane];
    dx.par_chunks_mut(ic * plane).enumerate().for_each(|(bi, dxb)| {
        for o in 0..oc {
            let dyp = &dy.data()[(bi * oc + o) * plane..(bi * oc + o + 1) * plane];
            for cin in 0..ic {
                let dxplane = &mut dxb[cin * plane..(cin + 1) * plane];
                for ky in 0..kh {
                    for kx in 0..kw {
                        let wv = wd[((o * ic + cin) * kh + ky) * kw + kx];
                        if wv == 0.0 {
                            continue;
                        }
                        let oy_lo = pt.saturating_sub(ky);
                        let oy_hi = (h + pt).saturating_sub(ky).min(h);
                        for oy in oy_lo..oy_hi {
                            let iy = oy + ky - pt;
                            let ox_lo = pl.saturating_sub(kx);
                            let ox_hi = (w + pl).saturating_sub(kx).min(w);
                            let dyrow = &dyp[oy * w..(oy + 1) * w];
                            let dxrow = &mut dxplane[iy * w..(iy + 1) * w];
                            for ox in ox_lo..ox_hi {
                                dxrow[ox + kx - pl] += wv * dyrow[ox];
                            }
                        }
                    }
                }
            }
        }
    });
    let mut shape = vec![b];
    shape.extend_from_slice(&x.shape()[1..]);
    Tensor::new(vec![b, ic, h, w], dx).reshaped(shape)
}

// ── batchnorm ──────────────────────────────────────────────────────────

/// Mean and (biased) variance per feature, where the feature is the leading
/// per-sample axis. Accumulates in f64 in a fixed order.
fn batch_statistics(x: &Tensor, feat: usize) -> Result<(Vec<f32>, Vec<f32>)> {
    let b = x.batch();
    let per = x.row_len();
    if per % feat != 0 || per == 0 {
        return Err(Error::Shape {
            expected: format!("row length divisible by {feat} features"),
            actual: format!("{per}"),
        });
    }
    let spatial = per / feat;
    let m = (b * spatial) as f64;
    let mut mean = vec![0.0f32; feat];
    let mut var = vec![0.0f32; feat];
    for f in 0..feat {
        let mut sum = 0.0f64;
        let mut sq = 0.0f64;
        for bi in 0..b {
            let base = bi * per + f * spatial;
            for s in 0..spatial {
                let v = x.data()[base + s] as f64;
                sum += v;
                sq += v * v;
            }
        }
        let mu = sum / m;
        mean[f] = mu as f32;
        var[f] = ((sq / m) - mu * mu).max(0.0) as f32;
    }
    Ok((mean, var))
}

pub(crate) fn batchnorm_train_forward(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    eps: f32,
) -> Result<(Tensor, Tensor, Vec<f32>, Vec<f32>, Vec<f32>)> {
    let feat = gamma.len();
    let (mean, var) = batch_statistics(x, feat)?;
    let inv_std: Vec<f32> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let b = x.batch();
    let per = x.row_len();
    let spatial = per / feat;
    let mut xhat = vec![0.0f32; b * per];
    let mut y = vec![0.0f32; b * per];
    for bi in 0..b {
        for f in 0..feat {
            let base = bi * per + f * spatial;
            for s in 0..spatial {
                let xv = x.data()[base + s];
                let xn = (xv - mean[f]) * inv_std[f];
                xhat[base + s] = xn;
                y[base + s] = gamma.data()[f] * xn + beta.data()[f];
            }
        }
    }
    Ok((
        Tensor::new(x.shape().to_vec(), y),
        Tensor::new(x.shape().to_vec(), xhat),
        inv_std,
        mean,
        var,
    ))
}

fn batchnorm_infer_forward(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    running_mean: &Tensor,
    running_var: &Tensor,
    eps: f32,
) -> Result<Tensor> {
    let feat = gamma.len();
    let b = x.batch();
    let per = x.row_len();
    if per % feat != 0 || per == 0 {
        return Err(Error::Shape {
            expected: format!("row length divisible by {feat} features"),
            actual: format!("{per}"),
        });
    }
    let spatial = per / feat;
    let mut y = vec![0.0f32; b * per];
    for f in 0..feat {
        let scale = gamma.data()[f] / (running_var.data()[f] + eps).sqrt();
        let shift = beta.data()[f] - scale * running_mean.data()[f];
        for bi in 0..b {
            let base = bi * per + f * spatial;
            for s in 0..spatial {
                y[base + s] = scale * x.data()[base + s] + shift;
            }
        }
    }
    Ok(Tensor::new(x.shape().to_vec(), y))
}

fn batchnorm_backward(
    xhat: &Tensor,
    inv_std: &[f32],
    gamma: &mut Tensor,
    beta: &mut Tensor,
    dy: &Tensor,
) -> Result<Tensor> {
    let feat = gamma.len();
    let b = xhat.batch();
    let per = xhat.row_len();
    let spatial = per / feat;
    let m = (b * spatial) as f64;

    let mut dx = vec![0.0f32; b * per];
    let gamma_vals = gamma.data().to_vec();
    {
        let dgamma = gamma.grad_mut();
        let mut dgl = vec![0.0f64; feat];
        let mut dbl = vec![0.0f64; feat];
        for f in 0..feat {
            for bi in 0..b {
                let base = bi * per + f * spatial;
                for s in 0..spatial {
                    let d = dy.data()[base + s] as f64;
                    dgl[f] += d * xhat.data()[base + s] as f64;
                    dbl[f] += d;
                }
            }
        }
        for f in 0..feat {
            dgamma[f] += dgl[f] as f32;
        }
        let dbeta = beta.grad_mut();
        for f in 0..feat {
            dbeta[f] += dbl[f] as f32;
        }

        // dx = (gamma * inv_std / m) * (m*dy - sum(dy) - xhat * sum(dy*xhat))
        for f in 0..feat {
            let k = gamma_vals[f] as f64 * inv_std[f] as f64 / m;
            for bi in 0..b {
                let base = bi * per + f * spatial;
                for s in 0..spatial {
                    let d = dy.data()[base + s] as f64;
                    let xn = xhat.data()[base + s] as f64;
                    dx[base + s] = (k * (m * d - dbl[f] - xn * dgl[f])) as f32;
                }
            }
        }
    }
    Ok(Tensor::new(xhat.shape().to_vec(), dx))
}

// ── gumbel-softmax layer ───────────────────────────────────────────────

/// Row-wise softmax of `v/tau`, numerically stabilized.
pub(crate) fn softmax_scaled(row: &[f32], tau: f32, out: &mut [f32]) {
    let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0f64;
    for (o, v) in out.iter_mut().zip(row) {
        let e = (((v - max) / tau) as f64).exp();
        *o = e as f32;
        sum += e;
    }
    let inv = (1.0 / sum) as f32;
    for o in out.iter_mut() {
        *o *= inv;
    }
}

fn gumbel_softmax_layer_forward(
    x: &Tensor,
    vars: usize,
    cats: usize,
    ctx: &mut ForwardCtx,
    want_trace: bool,
) -> Result<(Tensor, Option<Trace>)> {
    if x.row_len() != vars * cats {
        return Err(Error::Shape {
            expected: format!("{} = {vars}x{cats} logits", vars * cats),
            actual: format!("{}", x.row_len()),
        });
    }
    if ctx.mode == Mode::Train && !(ctx.tau > 0.0) {
        return Err(Error::Temperature(ctx.tau));
    }
    let b = x.batch();
    let mut z = vec![0.0f32; b * vars * cats];
    let mut q = vec![0.0f32; b * vars * cats];

    match ctx.mode {
        Mode::Train => {
            for bi in 0..b {
                for vi in 0..vars {
                    let off = (bi * vars + vi) * cats;
                    let logits = &x.data()[off..off + cats];
                    softmax_scaled(logits, 1.0, &mut q[off..off + cats]);
                    let noisy: Vec<f32> = logits.iter().map(|l| l + ctx.rng.gumbel()).collect();
                    softmax_scaled(&noisy, ctx.tau, &mut z[off..off + cats]);
                }
            }
        }
        Mode::Infer => {
            for bi in 0..b {
                for vi in 0..vars {
                    let off = (bi * vars + vi) * cats;
                    let logits = &x.data()[off..off + cats];
                    let arg = argmax(logits);
                    z[off + arg] = 1.0;
                }
            }
        }
        Mode::Sample => {
            for bi in 0..b {
                for vi in 0..vars {
                    let off = (bi * vars + vi) * cats;
                    let noisy: Vec<f32> = x.data()[off..off + cats]
                        .iter()
                        .map(|l| l + ctx.rng.gumbel())
                        .collect();
                    z[off + argmax(&noisy)] = 1.0;
                }
            }
        }
    }

    let mut shape = vec![b, vars, cats];
    if vars == 1 && x.shape().len() == 2 {
        // keep flat shape for 1-variable layers feeding dense stacks
        shape = vec![b, cats];
    }
    let zt = Tensor::new(shape.clone(), z);
    let trace = (want_trace && ctx.mode == Mode::Train).then(|| Trace::GumbelSoftmax {
        z: zt.clone(),
        q: Tensor::new(shape, q),
        tau: ctx.tau,
    });
    Ok((zt, trace))
}

pub(crate) fn argmax(xs: &[f32]) -> usize {
    let mut best = 0;
    for (i, v) in xs.iter().enumerate() {
        if *v > xs[best] {
            best = i;
        }
    }
    best
}

/// KL(q_row || uniform) summed over rows: sum q * log(q * cats), with the
/// probability floor applied inside the log.
pub(crate) fn kl_to_uniform(q_row: &[f32]) -> f64 {
    let m = q_row.len() as f64;
    let mut acc = 0.0f64;
    for &p in q_row {
        if p > 0.0 {
            let pc = (p as f64).clamp(1e-7, 1.0 - 1e-7);
            acc += p as f64 * (pc * m).ln();
        }
    }
    acc
}

fn gumbel_softmax_backward(
    z: &Tensor,
    q: &Tensor,
    tau: f32,
    vars: usize,
    cats: usize,
    dy: &Tensor,
    kl_factor: f32,
) -> Result<Tensor> {
    let b = z.batch();
    let mut dx = vec![0.0f32; b * vars * cats];
    for bi in 0..b {
        for vi in 0..vars {
            let off = (bi * vars + vi) * cats;
            let zr = &z.data()[off..off + cats];
            let dr = &dy.data()[off..off + cats];
            // softmax jacobian scaled by 1/tau
            let dot: f64 = zr.iter().zip(dr).map(|(a, c)| *a as f64 * *c as f64).sum();
            for j in 0..cats {
                dx[off + j] = ((zr[j] as f64 * (dr[j] as f64 - dot)) / tau as f64) as f32;
            }
            // KL-to-uniform contribution through q = softmax(logits)
            if kl_factor != 0.0 {
                let qr = &q.data()[off..off + cats];
                let mut entsum = 0.0f64;
                for &p in qr {
                    let pc = (p as f64).clamp(1e-7, 1.0 - 1e-7);
                    entsum += p as f64 * pc.ln();
                }
                for j in 0..cats {
                    let pc = (qr[j] as f64).clamp(1e-7, 1.0 - 1e-7);
                    let g = qr[j] as f64 * (pc.ln() - entsum);
                    dx[off + j] += (kl_factor as f64 * g) as f32;
                }
            }
        }
    }
    let mut shape = vec![b];
    shape.extend_from_slice(&dy.shape()[1..]);
    Ok(Tensor::new(shape, dx))
}

//! Sequential network, training tape, and the builder that wires layer
//! shapes together.

use crate::error::{Error, Result};
use crate::ndcore::layers::{
    batchnorm_train_forward, kl_to_uniform, Activation, ForwardCtx, LayerSpec, Mode, Trace,
    BATCHNORM_EPS, BATCHNORM_MOMENTUM,
};
use crate::ndcore::rng::RngStream;
use crate::ndcore::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct Network {
    pub layers: Vec<LayerSpec>,
    input_shape: Vec<usize>,
}

/// Record of one training forward pass; consumed by `Network::backward`.
pub struct Tape {
    traces: Vec<Trace>,
    consumed: bool,
    batch: usize,
    /// Sum over all gumbel-softmax rows of KL(q || uniform).
    kl_sum: f64,
}

impl Tape {
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Variational loss recorded at forward time, averaged per sample.
    pub fn variational_loss(&self) -> f64 {
        if self.batch == 0 {
            0.0
        } else {
            self.kl_sum / self.batch as f64
        }
    }
}

impl Network {
    pub fn builder(input_shape: Vec<usize>, rng: RngStream) -> NetBuilder {
        NetBuilder {
            layers: Vec::new(),
            shape: input_shape.clone(),
            input_shape,
            aux_width: None,
            rng,
        }
    }

    pub fn from_layers(input_shape: Vec<usize>, layers: Vec<LayerSpec>) -> Self {
        Network { layers, input_shape }
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    /// Per-sample output shape, validating every layer transition.
    pub fn output_shape(&self, aux_width: Option<usize>) -> Result<Vec<usize>> {
        let mut shape = self.input_shape.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            shape = layer.output_shape(&shape, aux_width).map_err(|e| wrap_layer(i, e))?;
        }
        Ok(shape)
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let per: usize = self.input_shape.iter().product();
        if x.row_len() != per {
            return Err(Error::LayerShape {
                layer: 0,
                expected: format!("per-sample {:?}", self.input_shape),
                actual: x.shape_string(),
            });
        }
        Ok(())
    }

    /// Side-effect-free forward pass. Train mode uses batch statistics and
    /// draws noise from the context stream but never touches running
    /// estimates; infer mode is fully deterministic.
    pub fn forward(&self, x: &Tensor, ctx: &mut ForwardCtx) -> Result<Tensor> {
        self.check_input(x)?;
        let mut cur = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let (y, _) = layer.forward(&cur, ctx, false).map_err(|e| wrap_layer(i, e))?;
            cur = y;
        }
        Ok(cur)
    }

    /// Deterministic inference with no noise sources.
    pub fn infer(&self, x: &Tensor, aux: Option<&Tensor>) -> Result<Tensor> {
        let mut rng = RngStream::new(0);
        let mut ctx = ForwardCtx { mode: Mode::Infer, tau: 1.0, aux, rng: &mut rng };
        self.forward(x, &mut ctx)
    }

    /// Runs only `layers[..end]`, with the usual input check.
    pub fn forward_until(&self, end: usize, x: &Tensor, ctx: &mut ForwardCtx) -> Result<Tensor> {
        self.check_input(x)?;
        let mut cur = x.clone();
        for (i, layer) in self.layers[..end].iter().enumerate() {
            let (y, _) = layer.forward(&cur, ctx, false).map_err(|e| wrap_layer(i, e))?;
            cur = y;
        }
        Ok(cur)
    }

    /// Runs only `layers[start..]` on a tensor already shaped for that
    /// layer.
    pub fn forward_from(&self, start: usize, x: &Tensor, ctx: &mut ForwardCtx) -> Result<Tensor> {
        let mut cur = x.clone();
        for (i, layer) in self.layers[start..].iter().enumerate() {
            let (y, _) = layer
                .forward(&cur, ctx, false)
                .map_err(|e| wrap_layer(start + i, e))?;
            cur = y;
        }
        Ok(cur)
    }

    /// Training forward pass: records a tape and folds batch statistics
    /// into the batchnorm running estimates.
    pub fn forward_train(&mut self, x: &Tensor, ctx: &mut ForwardCtx) -> Result<(Tensor, Tape)> {
        self.check_input(x)?;
        let mut cur = x.clone();
        let mut traces = Vec::with_capacity(self.layers.len());
        let mut kl_sum = 0.0f64;
        for (i, layer) in self.layers.iter_mut().enumerate() {
            match layer {
                LayerSpec::BatchNorm {
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                    momentum,
                    eps,
                } if ctx.mode == Mode::Train => {
                    let (y, xhat, inv_std, mean, var) =
                        batchnorm_train_forward(&cur, gamma, beta, *eps).map_err(|e| wrap_layer(i, e))?;
                    for (r, m) in running_mean.data_mut().iter_mut().zip(&mean) {
                        *r = *momentum * *r + (1.0 - *momentum) * m;
                    }
                    for (r, v) in running_var.data_mut().iter_mut().zip(&var) {
                        *r = *momentum * *r + (1.0 - *momentum) * v;
                    }
                    traces.push(Trace::BatchNorm { xhat, inv_std });
                    cur = y;
                }
                _ => {
                    let (y, trace) = layer.forward(&cur, ctx, true).map_err(|e| wrap_layer(i, e))?;
                    if let Some(Trace::GumbelSoftmax { q, .. }) = &trace {
                        let cats = match layer {
                            LayerSpec::GumbelSoftmax { cats, .. } => *cats,
                            _ => unreachable!(),
                        };
                        for row in q.data().chunks(cats) {
                            kl_sum += kl_to_uniform(row);
                        }
                    }
                    traces.push(trace.unwrap_or(Trace::GaussianNoise));
                    cur = y;
                }
            }
        }
        let tape = Tape { traces, consumed: false, batch: x.batch(), kl_sum };
        Ok((cur, tape))
    }

    /// Reverse pass: accumulates parameter gradients from `dloss_dy` and
    /// returns the gradient with respect to the network input. Errors if
    /// the tape was already used.
    pub fn backward(&mut self, tape: &mut Tape, dloss_dy: &Tensor) -> Result<Tensor> {
        if tape.consumed {
            return Err(Error::TapeConsumed);
        }
        tape.consumed = true;
        let kl_scale = if tape.batch == 0 { 0.0 } else { 1.0 / tape.batch as f32 };
        let mut grad = dloss_dy.clone();
        for (i, (layer, trace)) in self
            .layers
            .iter_mut()
            .zip(tape.traces.iter())
            .enumerate()
            .rev()
        {
            grad = layer.backward(trace, &grad, kl_scale).map_err(|e| wrap_layer(i, e))?;
        }
        Ok(grad)
    }

    pub fn visit_params<F: FnMut(&Tensor)>(&self, mut f: F) {
        for layer in &self.layers {
            for p in layer.params() {
                f(p);
            }
        }
    }

    pub fn visit_params_mut<F: FnMut(&mut Tensor)>(&mut self, mut f: F) {
        for layer in &mut self.layers {
            for p in layer.params_mut() {
                f(p);
            }
        }
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit_params(|p| n += p.len());
        n
    }

    pub fn zero_grads(&mut self) {
        self.visit_params_mut(|p| p.zero_grad());
    }

    /// Index of the first gumbel-softmax layer, if any.
    pub fn gumbel_layer_index(&self) -> Option<usize> {
        self.layers
            .iter()
            .position(|l| matches!(l, LayerSpec::GumbelSoftmax { .. }))
    }
}

fn wrap_layer(i: usize, e: Error) -> Error {
    match e {
        Error::Shape { expected, actual } => Error::LayerShape { layer: i, expected, actual },
        other => other,
    }
}

// ── builder ────────────────────────────────────────────────────────────

pub struct NetBuilder {
    layers: Vec<LayerSpec>,
    shape: Vec<usize>,
    input_shape: Vec<usize>,
    aux_width: Option<usize>,
    rng: RngStream,
}

impl NetBuilder {
    /// Declares the auxiliary input width used by concat layers.
    pub fn with_aux(mut self, width: usize) -> Self {
        self.aux_width = Some(width);
        self
    }

    fn flat(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn dense(mut self, out: usize) -> Self {
        let inw = self.flat();
        let limit = (6.0 / (inw + out) as f32).sqrt();
        let weight = Tensor::uniform_init(vec![out, inw], limit, &mut self.rng);
        let bias = Tensor::zeros(vec![out]);
        self.layers.push(LayerSpec::Dense { weight, bias });
        self.shape = vec![out];
        self
    }

    pub fn conv2d(mut self, kh: usize, kw: usize, out_channels: usize) -> Self {
        let (ic, h, w) = match self.shape.len() {
            2 => (1, self.shape[0], self.shape[1]),
            3 => (self.shape[0], self.shape[1], self.shape[2]),
            _ => panic!("conv2d needs rank 2 or 3 per-sample input, got {:?}", self.shape),
        };
        let fan_in = ic * kh * kw;
        let fan_out = out_channels * kh * kw;
        let limit = (6.0 / (fan_in + fan_out) as f32).sqrt();
        let weight = Tensor::uniform_init(vec![out_channels, ic, kh, kw], limit, &mut self.rng);
        let bias = Tensor::zeros(vec![out_channels]);
        self.layers.push(LayerSpec::Conv2d { weight, bias });
        self.shape = vec![out_channels, h, w];
        self
    }

    pub fn batchnorm(mut self) -> Self {
        let feat = self.shape[0];
        self.layers.push(LayerSpec::BatchNorm {
            gamma: Tensor::full(vec![feat], 1.0),
            beta: Tensor::zeros(vec![feat]),
            running_mean: Tensor::zeros(vec![feat]),
            running_var: Tensor::full(vec![feat], 1.0),
            momentum: BATCHNORM_MOMENTUM,
            eps: BATCHNORM_EPS,
        });
        self
    }

    pub fn dropout(mut self, rate: f32) -> Self {
        assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0,1)");
        self.layers.push(LayerSpec::Dropout { rate });
        self
    }

    pub fn gaussian_noise(mut self, sigma: f32) -> Self {
        self.layers.push(LayerSpec::GaussianNoise { sigma });
        self
    }

    pub fn relu(self) -> Self {
        self.activation(Activation::Relu)
    }

    pub fn tanh(self) -> Self {
        self.activation(Activation::Tanh)
    }

    pub fn sigmoid(self) -> Self {
        self.activation(Activation::Sigmoid)
    }

    pub fn activation(mut self, act: Activation) -> Self {
        self.layers.push(LayerSpec::Activation(act));
        self
    }

    pub fn gumbel_softmax(mut self, vars: usize, cats: usize, kl_weight: f32) -> Self {
        assert_eq!(self.flat(), vars * cats, "gumbel_softmax input width mismatch");
        self.layers.push(LayerSpec::GumbelSoftmax { vars, cats, kl_weight });
        self.shape = vec![vars, cats];
        self
    }

    pub fn reshape(mut self, dims: &[usize]) -> Self {
        assert_eq!(
            self.flat(),
            dims.iter().product::<usize>(),
            "reshape element count mismatch"
        );
        self.layers.push(LayerSpec::Reshape { dims: dims.to_vec() });
        self.shape = dims.to_vec();
        self
    }

    pub fn concat_aux(mut self) -> Self {
        let aw = self.aux_width.expect("concat requires with_aux(width)");
        self.layers.push(LayerSpec::Concat);
        self.shape = vec![self.flat() + aw];
        self
    }

    pub fn build(self) -> Network {
        Network { layers: self.layers, input_shape: self.input_shape }
    }
}

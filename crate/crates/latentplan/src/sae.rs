//! State autoencoder: a categorical-latent denoising autoencoder that maps
//! puzzle images to N-bit propositional states and back.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bits::LatentBitVector;
use crate::domains::DomainSpec;
use crate::error::{Error, Result};
use crate::ndcore::checkpoint::{
    expect_magic, read_f32, read_layer_stream, read_u64, write_f32, write_layer_stream, write_u64,
    ModelKind, WEIGHT_MAGIC,
};
use crate::ndcore::{adam_step, bce_loss_grad, AdamState, ForwardCtx, Mode, Network, RngStream, Tensor};

/// Temperature schedule: tau(t) = max(tau_min, tau0 * exp(-rate * t)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub tau0: f32,
    pub rate: f32,
    pub tau_min: f32,
}

impl AnnealSchedule {
    /// Calibrated so tau(0) = tau0 and tau(final epoch) = tau_min.
    pub fn calibrated(tau0: f32, tau_min: f32, epochs: usize) -> Self {
        let rate = if epochs > 1 {
            (tau0 / tau_min).ln() / (epochs - 1) as f32
        } else {
            0.0
        };
        AnnealSchedule { tau0, rate, tau_min }
    }

    pub fn tau(&self, epoch: usize) -> f32 {
        (self.tau0 * (-self.rate * epoch as f32).exp()).max(self.tau_min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SaeConfig {
    /// N: number of latent propositional bits.
    pub latent_bits: usize,
    /// M: categories per latent variable (2 = boolean).
    pub categories: usize,
    /// (H, W) of the input images.
    pub input_dims: (usize, usize),
    /// Denoising corruption applied to the input during training.
    pub noise_sigma: f32,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_initial: f32,
    pub lr_final: f32,
    pub tau0: f32,
    pub tau_min: f32,
    pub conv_channels: usize,
    pub dropout: f32,
    pub fc_width: usize,
    /// Weight of the variational term relative to reconstruction.
    pub kl_weight: f32,
}

impl Default for SaeConfig {
    fn default() -> Self {
        SaeConfig {
            latent_bits: 36,
            categories: 2,
            input_dims: (42, 42),
            noise_sigma: 0.4,
            epochs: 150,
            batch_size: 4000,
            lr_initial: 0.001,
            lr_final: 0.0001,
            tau0: 5.0,
            tau_min: 0.7,
            conv_channels: 16,
            dropout: 0.4,
            fc_width: 1000,
            kl_weight: 1.0,
        }
    }
}

impl SaeConfig {
    /// Published per-domain defaults: sliding tiles train 150 epochs at
    /// batch 4000; lights-out 100 epochs at batch 2000; the tower domain
    /// narrows the convolution to 12 channels with dropout 0.6, batch 500.
    pub fn for_domain(spec: &DomainSpec, dims: (usize, usize)) -> Self {
        let mut cfg = SaeConfig { input_dims: dims, ..SaeConfig::default() };
        match spec {
            DomainSpec::Puzzle8 => {}
            DomainSpec::LightsOut { .. } | DomainSpec::TwistedLightsOut { .. } => {
                cfg.epochs = 100;
                cfg.batch_size = 2000;
            }
            DomainSpec::Hanoi { .. } => {
                cfg.conv_channels = 12;
                cfg.dropout = 0.6;
                cfg.batch_size = 500;
            }
        }
        cfg
    }

    pub fn anneal(&self) -> AnnealSchedule {
        AnnealSchedule::calibrated(self.tau0, self.tau_min, self.epochs)
    }

    fn build_network(&self, rng: RngStream) -> Network {
        let (h, w) = self.input_dims;
        Network::builder(vec![h, w], rng)
            .gaussian_noise(self.noise_sigma)
            .conv2d(3, 3, self.conv_channels)
            .tanh()
            .batchnorm()
            .dropout(self.dropout)
            .conv2d(3, 3, self.conv_channels)
            .tanh()
            .batchnorm()
            .dropout(self.dropout)
            .dense(self.latent_bits * self.categories)
            .reshape(&[self.latent_bits, self.categories])
            .gumbel_softmax(self.latent_bits, self.categories, self.kl_weight)
            .dense(self.fc_width)
            .relu()
            .batchnorm()
            .dropout(self.dropout)
            .dense(self.fc_width)
            .relu()
            .batchnorm()
            .dropout(self.dropout)
            .dense(h * w)
            .sigmoid()
            .build()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SaeTrainReport {
    pub epochs_run: usize,
    pub final_recon_loss: f64,
    pub final_variational_loss: f64,
    pub recon_history: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SaeModel {
    cfg: SaeConfig,
    net: Network,
    /// Index of the categorical latent layer; encode runs layers
    /// `..=gs_index`, decode runs `gs_index + 1..`.
    gs_index: usize,
}

impl SaeModel {
    pub fn config(&self) -> &SaeConfig {
        &self.cfg
    }

    pub fn latent_bits(&self) -> usize {
        self.cfg.latent_bits
    }

    pub fn input_dims(&self) -> (usize, usize) {
        self.cfg.input_dims
    }

    fn check_image_batch(&self, images: &Tensor) -> Result<usize> {
        let (h, w) = self.cfg.input_dims;
        match images.shape() {
            [ih, iw] if *ih == h && *iw == w => Ok(1),
            [b, ih, iw] if *ih == h && *iw == w => Ok(*b),
            _ => Err(Error::Shape {
                expected: format!("[{h}, {w}] or [B, {h}, {w}]"),
                actual: images.shape_string(),
            }),
        }
    }

    fn as_batch(&self, images: &Tensor) -> Result<Tensor> {
        let b = self.check_image_batch(images)?;
        let (h, w) = self.cfg.input_dims;
        Ok(Tensor::new(vec![b, h, w], images.data().to_vec()))
    }

    /// Deterministic encoding: hard argmax over the category activations,
    /// bit j set when category 0 wins.
    pub fn encode(&self, image: &Tensor) -> Result<LatentBitVector> {
        Ok(self.encode_batch(image)?.pop().expect("non-empty batch"))
    }

    pub fn encode_batch(&self, images: &Tensor) -> Result<Vec<LatentBitVector>> {
        let batch = self.as_batch(images)?;
        let mut rng = RngStream::new(0);
        let mut ctx = ForwardCtx { mode: Mode::Infer, tau: 1.0, aux: None, rng: &mut rng };
        let z = self.net.forward_until(self.gs_index + 1, &batch, &mut ctx)?;
        Ok(self.bits_from_onehot(&z))
    }

    fn bits_from_onehot(&self, z: &Tensor) -> Vec<LatentBitVector> {
        let (n, m) = (self.cfg.latent_bits, self.cfg.categories);
        (0..z.batch())
            .map(|bi| {
                let row = z.row(bi);
                let mut v = LatentBitVector::zeros(n);
                for j in 0..n {
                    if row[j * m] == 1.0 {
                        v.set(j, true);
                    }
                }
                v
            })
            .collect()
    }

    /// Decodes a propositional state back to an image by feeding the
    /// [b, 1-b] category matrix to the decoder half.
    pub fn decode(&self, bits: &LatentBitVector) -> Result<Tensor> {
        let imgs = self.decode_batch(std::slice::from_ref(bits))?;
        let (h, w) = self.cfg.input_dims;
        Ok(Tensor::new(vec![h, w], imgs.row(0).to_vec()))
    }

    /// Batched decode: returns `[B, H, W]`.
    pub fn decode_batch(&self, bits: &[LatentBitVector]) -> Result<Tensor> {
        let (n, m) = (self.cfg.latent_bits, self.cfg.categories);
        if m != 2 {
            return Err(Error::InvalidState("decode requires 2 categories per variable".into()));
        }
        let b = bits.len();
        let mut z = vec![0.0f32; b * n * m];
        for (bi, v) in bits.iter().enumerate() {
            if v.len() != n {
                return Err(Error::Length { expected: n, actual: v.len() });
            }
            for j in 0..n {
                let on = v.get(j);
                z[bi * n * m + j * m] = if on { 1.0 } else { 0.0 };
                z[bi * n * m + j * m + 1] = if on { 0.0 } else { 1.0 };
            }
        }
        let zt = Tensor::new(vec![b, n, m], z);
        let mut rng = RngStream::new(0);
        let mut ctx = ForwardCtx { mode: Mode::Infer, tau: 1.0, aux: None, rng: &mut rng };
        let flat = self.net.forward_from(self.gs_index + 1, &zt, &mut ctx)?;
        let (h, w) = self.cfg.input_dims;
        flat.reshaped(vec![b, h, w])
    }

    /// Stochastic encodings: samples the categorical noise per draw and
    /// hardens, returning up to `k` distinct bitvectors per image. With
    /// k = 1 this is exactly `encode`.
    pub fn augment_states(
        &self,
        images: &Tensor,
        k: usize,
        rng: &mut RngStream,
    ) -> Result<Vec<Vec<LatentBitVector>>> {
        let batch = self.as_batch(images)?;
        if k <= 1 {
            return Ok(self.encode_batch(&batch)?.into_iter().map(|b| vec![b]).collect());
        }
        let mut out: Vec<Vec<LatentBitVector>> = vec![Vec::new(); batch.batch()];
        for _ in 0..k {
            let mut ctx = ForwardCtx { mode: Mode::Sample, tau: self.cfg.tau_min, aux: None, rng };
            let z = self.net.forward_until(self.gs_index + 1, &batch, &mut ctx)?;
            for (bi, bits) in self.bits_from_onehot(&z).into_iter().enumerate() {
                if !out[bi].contains(&bits) {
                    out[bi].push(bits);
                }
            }
        }
        Ok(out)
    }

    /// One round of encode(decode(b)).
    pub fn autoencode_bits(&self, bits: &[LatentBitVector]) -> Result<Vec<LatentBitVector>> {
        let images = self.decode_batch(bits)?;
        self.encode_batch(&images)
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write(&mut w)
    }

    pub fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(WEIGHT_MAGIC)?;
        w.write_all(&[ModelKind::Sae as u8])?;
        write_u64(w, self.cfg.latent_bits as u64)?;
        write_u64(w, self.cfg.categories as u64)?;
        write_u64(w, self.cfg.input_dims.0 as u64)?;
        write_u64(w, self.cfg.input_dims.1 as u64)?;
        write_f32(w, self.cfg.noise_sigma)?;
        write_f32(w, self.cfg.kl_weight)?;
        write_f32(w, self.cfg.tau_min)?;
        write_layer_stream(w, &self.net)
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read(&mut r)
    }

    pub fn read<R: Read>(r: &mut R) -> Result<Self> {
        expect_magic(r)?;
        let mut kind = [0u8; 1];
        r.read_exact(&mut kind)?;
        if ModelKind::from_byte(kind[0])? != ModelKind::Sae {
            return Err(Error::Format(format!(
                "expected a sae checkpoint, found {}",
                ModelKind::from_byte(kind[0])?.stage_name()
            )));
        }
        let latent_bits = read_u64(r)? as usize;
        let categories = read_u64(r)? as usize;
        let h = read_u64(r)? as usize;
        let w = read_u64(r)? as usize;
        let noise_sigma = read_f32(r)?;
        let kl_weight = read_f32(r)?;
        let tau_min = read_f32(r)?;
        let net = read_layer_stream(r, vec![h, w])?;
        let gs_index = net
            .gumbel_layer_index()
            .ok_or_else(|| Error::Format("sae checkpoint has no categorical layer".into()))?;
        let cfg = SaeConfig {
            latent_bits,
            categories,
            input_dims: (h, w),
            noise_sigma,
            kl_weight,
            tau_min,
            ..SaeConfig::default()
        };
        Ok(SaeModel { cfg, net, gs_index })
    }
}

/// Trains the state autoencoder: denoising input corruption, annealed
/// categorical temperature, halved-point learning-rate drop, Adam.
pub fn train_sae(images: &Tensor, cfg: &SaeConfig, rng: &mut RngStream) -> Result<(SaeModel, SaeTrainReport)> {
    let (h, w) = cfg.input_dims;
    if images.batch() == 0 {
        return Err(Error::EmptyDataset);
    }
    if images.shape().len() != 3 || images.shape()[1] != h || images.shape()[2] != w {
        return Err(Error::Shape {
            expected: format!("[B, {h}, {w}]"),
            actual: images.shape_string(),
        });
    }
    if images.data().iter().any(|v| !(-0.001..=1.001).contains(v)) {
        return Err(Error::InvalidState("pixel values must lie in [0, 1]".into()));
    }

    let mut net = cfg.build_network(rng.substream(0x5ae_1217));
    let gs_index = net.gumbel_layer_index().expect("network has a categorical layer");
    let mut adam = AdamState::for_network(&net);
    let anneal = cfg.anneal();
    let count = images.batch();
    let batch_size = cfg.batch_size.max(1).min(count);
    let mut order: Vec<usize> = (0..count).collect();
    let mut recon_history = Vec::with_capacity(cfg.epochs);
    let mut final_kl = 0.0f64;

    for epoch in 0..cfg.epochs {
        let tau = anneal.tau(epoch);
        let lr = if epoch < cfg.epochs / 2 { cfg.lr_initial } else { cfg.lr_final };
        rng.shuffle(&mut order);
        let mut epoch_recon = 0.0f64;
        let mut epoch_kl = 0.0f64;
        let mut batches = 0usize;
        for chunk in order.chunks(batch_size) {
            let batch = gather_rows(images, chunk);
            let target = Tensor::new(
                vec![chunk.len(), h * w],
                batch.data().to_vec(),
            );
            let mut ctx = ForwardCtx { mode: Mode::Train, tau, aux: None, rng };
            let (recon, mut tape) = net.forward_train(&batch, &mut ctx)?;
            let (loss, mut grad) = bce_loss_grad(&recon, &target)?;
            let kl = tape.variational_loss();
            if !loss.is_finite() || !kl.is_finite() {
                return Err(Error::NonFinite(format!(
                    "sae loss at epoch {epoch} (recon {loss}, variational {kl}, tau {tau}, lr {lr})"
                )));
            }
            // The objective sums reconstruction error over the pixels of
            // each sample (the variational term is per-sample already), so
            // the mean-based gradient is scaled back up; kl_weight is
            // relative to that per-sample sum.
            let pixel_count = (h * w) as f32;
            for g in grad.data_mut() {
                *g *= pixel_count;
            }
            net.backward(&mut tape, &grad)?;
            adam_step(&mut net, &mut adam, lr);
            net.zero_grads();
            epoch_recon += loss;
            epoch_kl += kl;
            batches += 1;
        }
        epoch_recon /= batches as f64;
        epoch_kl /= batches as f64;
        recon_history.push(epoch_recon);
        final_kl = epoch_kl;
    }

    let report = SaeTrainReport {
        epochs_run: cfg.epochs,
        final_recon_loss: recon_history.last().copied().unwrap_or(f64::NAN),
        final_variational_loss: final_kl,
        recon_history,
    };
    Ok((SaeModel { cfg: cfg.clone(), net, gs_index }, report))
}

pub(crate) fn gather_rows(images: &Tensor, idx: &[usize]) -> Tensor {
    let row = images.row_len();
    let mut data = Vec::with_capacity(idx.len() * row);
    for &i in idx {
        data.extend_from_slice(images.row(i));
    }
    let mut shape = images.shape().to_vec();
    shape[0] = idx.len();
    Tensor::new(shape, data)
}

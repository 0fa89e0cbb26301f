//! Positive/unlabeled discriminator training. A binary classifier d1 is
//! trained to separate known positives from the mixed set; the held-out
//! positive average c = mean(d1(p2)) calibrates the final score
//! d2(x) = c * d1(x). Scaling by c preserves the ranking of d1.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bits::LatentBitVector;
use crate::error::{Error, Result};
use crate::ndcore::checkpoint::{
    expect_magic, read_f32, read_layer_stream, read_u64, write_f32, write_layer_stream, write_u64,
    ModelKind, WEIGHT_MAGIC,
};
use crate::ndcore::{adam_step, bce_loss_grad, AdamState, ForwardCtx, Mode, Network, RngStream, Tensor};

/// One discriminator topology: `blocks` repetitions of
/// [batchnorm, dense(width), relu, dropout], then dense(1) + sigmoid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscArch {
    pub width: usize,
    pub blocks: usize,
    pub dropout: f32,
}

impl DiscArch {
    /// The single-state discriminator topology.
    pub fn state_default() -> Vec<DiscArch> {
        vec![DiscArch { width: 50, blocks: 1, dropout: 0.8 }]
    }

    /// The four transition-discriminator candidates: dropout 0.5 or 0.8,
    /// one or two blocks.
    pub fn action_candidates() -> Vec<DiscArch> {
        let mut out = Vec::new();
        for &blocks in &[1usize, 2] {
            for &dropout in &[0.5f32, 0.8] {
                out.push(DiscArch { width: 300, blocks, dropout });
            }
        }
        out
    }

    fn build(&self, input_bits: usize, rng: RngStream) -> Network {
        let mut b = Network::builder(vec![input_bits], rng);
        for _ in 0..self.blocks {
            b = b.batchnorm().dense(self.width).relu().dropout(self.dropout);
        }
        b.dense(1).sigmoid().build()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscriminatorConfig {
    pub input_bits: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f32,
    /// Early-stopping patience on validation loss, in epochs.
    pub patience: usize,
    /// Train fraction of the shuffled positive+mixed pool.
    pub split: f32,
    pub archs: Vec<DiscArch>,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig {
            input_bits: 36,
            epochs: 3000,
            batch_size: 1000,
            lr: 0.001,
            patience: 50,
            split: 0.9,
            archs: DiscArch::state_default(),
        }
    }
}

impl DiscriminatorConfig {
    /// Published state-discriminator settings (single fc(50) block,
    /// lr 1e-4).
    pub fn state_default(input_bits: usize) -> Self {
        DiscriminatorConfig {
            input_bits,
            lr: 0.0001,
            archs: DiscArch::state_default(),
            ..DiscriminatorConfig::default()
        }
    }

    /// Published action-discriminator settings (four fc(300) candidates,
    /// lr 1e-3, inputs are concatenated (s, t) pairs).
    pub fn action_default(state_bits: usize) -> Self {
        DiscriminatorConfig {
            input_bits: 2 * state_bits,
            lr: 0.001,
            archs: DiscArch::action_candidates(),
            ..DiscriminatorConfig::default()
        }
    }
}

/// Positive and mixed example pools. Mixed examples equal to a known
/// positive are filtered out on construction.
#[derive(Debug, Clone)]
pub struct PuDataset {
    pub positives: Vec<LatentBitVector>,
    pub mixed: Vec<LatentBitVector>,
}

impl PuDataset {
    pub fn new(positives: Vec<LatentBitVector>, mixed: Vec<LatentBitVector>) -> Self {
        let mut positives = positives;
        positives.sort();
        positives.dedup();
        let pos_set: std::collections::HashSet<&LatentBitVector> = positives.iter().collect();
        let mut mixed: Vec<LatentBitVector> =
            mixed.into_iter().filter(|m| !pos_set.contains(m)).collect();
        mixed.sort();
        mixed.dedup();
        PuDataset { positives, mixed }
    }
}

#[derive(Debug, Clone)]
pub struct DiscriminatorModel {
    kind: ModelKind,
    net: Network,
    input_bits: usize,
    /// PU calibration constant, in (0, 1].
    c: f32,
    arch: DiscArch,
    /// Validation accuracy of the winning architecture at threshold 0.5.
    pub validation_accuracy: f64,
}

impl DiscriminatorModel {
    pub fn calibration(&self) -> f32 {
        self.c
    }

    pub fn input_bits(&self) -> usize {
        self.input_bits
    }

    pub fn arch(&self) -> DiscArch {
        self.arch
    }

    fn batch_tensor(&self, xs: &[&LatentBitVector]) -> Result<Tensor> {
        let n = self.input_bits;
        let mut data = Vec::with_capacity(xs.len() * n);
        for x in xs {
            if x.len() != n {
                return Err(Error::Length { expected: n, actual: x.len() });
            }
            data.extend(x.to_f32_vec());
        }
        Ok(Tensor::new(vec![xs.len(), n], data))
    }

    /// Uncalibrated positive-vs-mixed probability d1(x).
    pub fn raw_score(&self, x: &LatentBitVector) -> Result<f32> {
        Ok(self.raw_scores(std::slice::from_ref(x))?[0])
    }

    pub fn raw_scores(&self, xs: &[LatentBitVector]) -> Result<Vec<f32>> {
        if xs.is_empty() {
            return Ok(Vec::new());
        }
        let refs: Vec<&LatentBitVector> = xs.iter().collect();
        let t = self.batch_tensor(&refs)?;
        let y = self.net.infer(&t, None)?;
        Ok(y.data().to_vec())
    }

    /// Calibrated validity probability d2(x) = c * d1(x).
    pub fn score(&self, x: &LatentBitVector) -> Result<f32> {
        Ok(self.c * self.raw_score(x)?)
    }

    pub fn scores(&self, xs: &[LatentBitVector]) -> Result<Vec<f32>> {
        Ok(self.raw_scores(xs)?.into_iter().map(|v| self.c * v).collect())
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write(&mut w)
    }

    pub fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(WEIGHT_MAGIC)?;
        w.write_all(&[self.kind as u8])?;
        write_u64(w, self.input_bits as u64)?;
        write_f32(w, self.c)?;
        write_u64(w, self.arch.width as u64)?;
        write_u64(w, self.arch.blocks as u64)?;
        write_f32(w, self.arch.dropout)?;
        write_f32(w, self.validation_accuracy as f32)?;
        write_layer_stream(w, &self.net)
    }

    pub fn load<P: AsRef<Path>>(path: P, expect: ModelKind) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read(&mut r, expect)
    }

    pub fn read<R: Read>(r: &mut R, expect: ModelKind) -> Result<Self> {
        expect_magic(r)?;
        let mut kind = [0u8; 1];
        r.read_exact(&mut kind)?;
        let kind = ModelKind::from_byte(kind[0])?;
        if kind != expect {
            return Err(Error::Format(format!(
                "expected a {} checkpoint, found {}",
                expect.stage_name(),
                kind.stage_name()
            )));
        }
        let input_bits = read_u64(r)? as usize;
        let c = read_f32(r)?;
        let width = read_u64(r)? as usize;
        let blocks = read_u64(r)? as usize;
        let dropout = read_f32(r)?;
        let validation_accuracy = read_f32(r)? as f64;
        let net = read_layer_stream(r, vec![input_bits])?;
        Ok(DiscriminatorModel {
            kind,
            net,
            input_bits,
            c,
            arch: DiscArch { width, blocks, dropout },
            validation_accuracy,
        })
    }
}

struct Split {
    train_x: Tensor,
    train_y: Tensor,
    val_x: Tensor,
    val_y: Tensor,
    /// Held-out positives (the calibration pool p2).
    val_positives: Vec<LatentBitVector>,
}

fn make_split(data: &PuDataset, input_bits: usize, split: f32, rng: &mut RngStream) -> Result<Split> {
    // p and m are divided separately so the validation split always holds
    // positives to calibrate on, then pooled and shuffled
    let part = |items: &[LatentBitVector], rng: &mut RngStream| -> (Vec<LatentBitVector>, Vec<LatentBitVector>) {
        let mut order: Vec<usize> = (0..items.len()).collect();
        rng.shuffle(&mut order);
        let train_n = ((items.len() as f32 * split).round() as usize)
            .max(1)
            .min(items.len().saturating_sub(1).max(1));
        let train = order[..train_n.min(items.len())].iter().map(|&i| items[i].clone()).collect();
        let val = order[train_n.min(items.len())..].iter().map(|&i| items[i].clone()).collect();
        (train, val)
    };
    let (p1, p2) = part(&data.positives, rng);
    let (m1, m2) = part(&data.mixed, rng);

    let build = |pos: &[LatentBitVector], mix: &[LatentBitVector], rng: &mut RngStream| -> Result<(Tensor, Tensor)> {
        let mut items: Vec<(&LatentBitVector, f32)> = Vec::with_capacity(pos.len() + mix.len());
        items.extend(pos.iter().map(|x| (x, 1.0)));
        items.extend(mix.iter().map(|x| (x, 0.0)));
        rng.shuffle(&mut items);
        let mut xs = Vec::with_capacity(items.len() * input_bits);
        let mut ys = Vec::with_capacity(items.len());
        for (x, y) in &items {
            if x.len() != input_bits {
                return Err(Error::Length { expected: input_bits, actual: x.len() });
            }
            xs.extend(x.to_f32_vec());
            ys.push(*y);
        }
        Ok((
            Tensor::new(vec![items.len(), input_bits], xs),
            Tensor::new(vec![items.len(), 1], ys),
        ))
    };

    let (train_x, train_y) = build(&p1, &m1, rng)?;
    let (val_x, val_y) = build(&p2, &m2, rng)?;
    Ok(Split { train_x, train_y, val_x, val_y, val_positives: p2 })
}

fn val_metrics(net: &Network, split: &Split) -> Result<(f64, f64)> {
    let pred = net.infer(&split.val_x, None)?;
    let mut loss = 0.0f64;
    let mut correct = 0usize;
    for (p, t) in pred.data().iter().zip(split.val_y.data()) {
        let pc = (*p as f64).clamp(1e-7, 1.0 - 1e-7);
        loss -= *t as f64 * pc.ln() + (1.0 - *t as f64) * (1.0 - pc).ln();
        if (*p >= 0.5) == (*t >= 0.5) {
            correct += 1;
        }
    }
    let n = pred.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Trains d1 for every architecture candidate with early stopping on
/// validation loss, keeps the best validation accuracy, and calibrates
/// d2 = c * d1 with c = mean d1 over held-out positives.
pub fn pu_train(
    data: &PuDataset,
    cfg: &DiscriminatorConfig,
    kind: ModelKind,
    rng: &mut RngStream,
) -> Result<DiscriminatorModel> {
    if data.positives.is_empty() || data.mixed.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let split = make_split(data, cfg.input_bits, cfg.split, rng)?;
    if split.val_positives.is_empty() {
        return Err(Error::InvalidState(
            "validation split contains no positives to calibrate on".into(),
        ));
    }

    let mut best: Option<(Network, f64, DiscArch)> = None;
    for (ai, arch) in cfg.archs.iter().enumerate() {
        let mut net = arch.build(cfg.input_bits, rng.substream(0xd15c ^ ai as u64));
        let mut adam = AdamState::for_network(&net);
        let count = split.train_x.batch();
        let batch_size = cfg.batch_size.max(1).min(count);
        let mut order: Vec<usize> = (0..count).collect();
        let mut best_val = f64::INFINITY;
        let mut best_net = net.clone();
        let mut stall = 0usize;

        for epoch in 0..cfg.epochs {
            rng.shuffle(&mut order);
            for chunk in order.chunks(batch_size) {
                let x = crate::sae::gather_rows(&split.train_x, chunk);
                let y = crate::sae::gather_rows(&split.train_y, chunk);
                let mut ctx = ForwardCtx { mode: Mode::Train, tau: 1.0, aux: None, rng };
                let (pred, mut tape) = net.forward_train(&x, &mut ctx)?;
                let (loss, grad) = bce_loss_grad(&pred, &y)?;
                if !loss.is_finite() {
                    return Err(Error::NonFinite(format!("discriminator loss at epoch {epoch}")));
                }
                net.backward(&mut tape, &grad)?;
                adam_step(&mut net, &mut adam, cfg.lr);
                net.zero_grads();
            }
            let (val_loss, _) = val_metrics(&net, &split)?;
            if val_loss < best_val - 1e-6 {
                best_val = val_loss;
                best_net = net.clone();
                stall = 0;
            } else {
                stall += 1;
                if stall >= cfg.patience {
                    break;
                }
            }
        }

        let (_, acc) = val_metrics(&best_net, &split)?;
        if best.as_ref().map_or(true, |(_, best_acc, _)| acc > *best_acc) {
            best = Some((best_net, acc, *arch));
        }
    }

    let (net, validation_accuracy, arch) = best.expect("at least one architecture");
    let model_uncal = DiscriminatorModel {
        kind,
        net,
        input_bits: cfg.input_bits,
        c: 1.0,
        arch,
        validation_accuracy,
    };
    let p2 = model_uncal.raw_scores(&split.val_positives)?;
    let c = (p2.iter().map(|v| *v as f64).sum::<f64>() / p2.len() as f64) as f32;
    if !(c > 0.0) {
        return Err(Error::CalibrationZero);
    }
    Ok(DiscriminatorModel { c: c.min(1.0), ..model_uncal })
}

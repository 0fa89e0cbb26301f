//! Action autoencoder: reconstructs the successor state t from (a, s)
//! where the discrete latent label a is learned without supervision. Every
//! layer re-reads the before-state s, so the label carries only the
//! conditional information needed to rebuild t given s.

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
use crate::ndcore::layers::argmax;
use crate::ndcore::{adam_step, bce_loss_grad, AdamState, ForwardCtx, Mode, Network, RngStream, Tensor};
use crate::sae::AnnealSchedule;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AaeConfig {
    /// State width N.
    pub latent_bits: usize,
    /// Label capacity K; the one-hot latent has this many classes.
    pub labels: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f32,
    pub tau0: f32,
    pub tau_min: f32,
    pub fc_width: usize,
    pub dropout: f32,
    /// Weight of the label-distribution KL-to-uniform term relative to the
    /// per-sample summed reconstruction. Keeps the label head from
    /// collapsing onto a single logit while the temperature is high.
    pub kl_weight: f32,
    /// Final-loss level above which the report carries a warning.
    pub plateau_warning: f64,
}

impl Default for AaeConfig {
    fn default() -> Self {
        AaeConfig {
            latent_bits: 36,
            labels: 128,
            epochs: 1000,
            batch_size: 2000,
            lr: 0.001,
            tau0: 5.0,
            tau_min: 0.1,
            fc_width: 400,
            dropout: 0.4,
            kl_weight: 0.0,
            plateau_warning: 0.05,
        }
    }
}

impl AaeConfig {
    fn build_network(&self, rng: RngStream) -> Network {
        let n = self.latent_bits;
        Network::builder(vec![n], rng)
            .with_aux(n)
            .concat_aux()
            .dense(self.fc_width)
            .relu()
            .batchnorm()
            .dropout(self.dropout)
            .concat_aux()
            .dense(self.fc_width)
            .relu()
            .batchnorm()
            .dropout(self.dropout)
            .concat_aux()
            .dense(self.labels)
            .gumbel_softmax(1, self.labels, self.kl_weight)
            .concat_aux()
            .dense(self.fc_width)
            .relu()
            .batchnorm()
            .dropout(self.dropout)
            .concat_aux()
            .dense(self.fc_width)
            .relu()
            .batchnorm()
            .dropout(self.dropout)
            .dense(n)
            .sigmoid()
            .build()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AaeTrainReport {
    pub epochs_run: usize,
    pub final_loss: f64,
    /// Fraction of training transitions with apply(action(t,s),s) == t.
    pub roundtrip_accuracy: f64,
    pub used_label_count: usize,
    /// Set when reconstruction plateaued above the configured level.
    pub warning: Option<String>,
}

#[derive(Debug, Clone)]
pub struct AaeModel {
    cfg: AaeConfig,
    net: Network,
    gs_index: usize,
    used_labels: Vec<u16>,
}

impl AaeModel {
    pub fn config(&self) -> &AaeConfig {
        &self.cfg
    }

    pub fn latent_bits(&self) -> usize {
        self.cfg.latent_bits
    }

    pub fn label_capacity(&self) -> usize {
        self.cfg.labels
    }

    /// Labels actually selected by at least one training transition.
    pub fn used_labels(&self) -> &[u16] {
        &self.used_labels
    }

    fn states_tensor(&self, states: &[&LatentBitVector]) -> Result<Tensor> {
        let n = self.cfg.latent_bits;
        let mut data = Vec::with_capacity(states.len() * n);
        for s in states {
            if s.len() != n {
                return Err(Error::Length { expected: n, actual: s.len() });
            }
            data.extend(s.to_f32_vec());
        }
        Ok(Tensor::new(vec![states.len(), n], data))
    }

    /// The discrete action label assigned to the transition (s -> t).
    pub fn action_label(&self, t: &LatentBitVector, s: &LatentBitVector) -> Result<usize> {
        Ok(self.action_label_batch(&[(s.clone(), t.clone())])?[0])
    }

    pub fn action_label_batch(&self, pairs: &[(LatentBitVector, LatentBitVector)]) -> Result<Vec<usize>> {
        let svec: Vec<&LatentBitVector> = pairs.iter().map(|(s, _)| s).collect();
        let tvec: Vec<&LatentBitVector> = pairs.iter().map(|(_, t)| t).collect();
        let aux = self.states_tensor(&svec)?;
        let x = self.states_tensor(&tvec)?;
        let mut rng = RngStream::new(0);
        let mut ctx = ForwardCtx { mode: Mode::Infer, tau: 1.0, aux: Some(&aux), rng: &mut rng };
        let z = self.net.forward_until(self.gs_index + 1, &x, &mut ctx)?;
        let k = self.cfg.labels;
        Ok((0..z.batch()).map(|bi| argmax(&z.row(bi)[..k])).collect())
    }

    /// Applies a used action label to a state; the decoder output is
    /// thresholded at 0.5 into a bitvector.
    pub fn apply_label(&self, label: usize, s: &LatentBitVector) -> Result<LatentBitVector> {
        if !self.used_labels.contains(&(label as u16)) {
            return Err(Error::UnusedLabel(label));
        }
        Ok(self.apply_labels_unchecked(&[label], s)?.pop().expect("one row"))
    }

    /// One batched decoder pass: applies every used label to `s`,
    /// returning (label, successor) in ascending label order.
    pub fn apply_all_used(&self, s: &LatentBitVector) -> Result<Vec<(u32, LatentBitVector)>> {
        let labels: Vec<usize> = self.used_labels.iter().map(|l| *l as usize).collect();
        if labels.is_empty() {
            return Ok(Vec::new());
        }
        let outs = self.apply_labels_unchecked(&labels, s)?;
        Ok(labels
            .into_iter()
            .map(|l| l as u32)
            .zip(outs)
            .collect())
    }

    fn apply_labels_unchecked(&self, labels: &[usize], s: &LatentBitVector) -> Result<Vec<LatentBitVector>> {
        let (n, k) = (self.cfg.latent_bits, self.cfg.labels);
        if s.len() != n {
            return Err(Error::Length { expected: n, actual: s.len() });
        }
        let b = labels.len();
        let mut onehot = vec![0.0f32; b * k];
        for (i, &l) in labels.iter().enumerate() {
            if l >= k {
                return Err(Error::UnusedLabel(l));
            }
            onehot[i * k + l] = 1.0;
        }
        let z = Tensor::new(vec![b, k], onehot);
        let srow = s.to_f32_vec();
        let mut aux_data = Vec::with_capacity(b * n);
        for _ in 0..b {
            aux_data.extend_from_slice(&srow);
        }
        let aux = Tensor::new(vec![b, n], aux_data);
        let mut rng = RngStream::new(0);
        let mut ctx = ForwardCtx { mode: Mode::Infer, tau: 1.0, aux: Some(&aux), rng: &mut rng };
        let y = self.net.forward_from(self.gs_index + 1, &z, &mut ctx)?;
        Ok((0..b)
            .map(|bi| LatentBitVector::from_f32_threshold(y.row(bi), 0.5))
            .collect())
    }

    /// apply(action(t, s), s): the reconstruction the planner uses as a
    /// stability filter.
    pub fn roundtrip(&self, s: &LatentBitVector, t: &LatentBitVector) -> Result<LatentBitVector> {
        let label = self.action_label(t, s)?;
        self.apply_labels_unchecked(&[label], s)
            .map(|mut v| v.pop().expect("one row"))
    }

    pub fn roundtrip_batch(
        &self,
        pairs: &[(LatentBitVector, LatentBitVector)],
    ) -> Result<Vec<LatentBitVector>> {
        let labels = self.action_label_batch(pairs)?;
        let mut out = Vec::with_capacity(pairs.len());
        // group by shared before-state runs to keep batches large
        let mut i = 0;
        while i < pairs.len() {
            let mut j = i + 1;
            while j < pairs.len() && pairs[j].0 == pairs[i].0 {
                j += 1;
            }
            let outs = self.apply_labels_unchecked(&labels[i..j], &pairs[i].0)?;
            out.extend(outs);
            i = j;
        }
        Ok(out)
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write(&mut w)
    }

    pub fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(WEIGHT_MAGIC)?;
        w.write_all(&[ModelKind::Aae as u8])?;
        write_u64(w, self.cfg.latent_bits as u64)?;
        write_u64(w, self.cfg.labels as u64)?;
        write_f32(w, self.cfg.tau_min)?;
        write_u64(w, self.used_labels.len() as u64)?;
        for l in &self.used_labels {
            write_u64(w, *l as u64)?;
        }
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
        if ModelKind::from_byte(kind[0])? != ModelKind::Aae {
            return Err(Error::Format("expected an aae checkpoint".into()));
        }
        let latent_bits = read_u64(r)? as usize;
        let labels = read_u64(r)? as usize;
        let tau_min = read_f32(r)?;
        let used_count = read_u64(r)? as usize;
        if used_count > labels {
            return Err(Error::Format("used label count exceeds capacity".into()));
        }
        let mut used_labels = Vec::with_capacity(used_count);
        for _ in 0..used_count {
            used_labels.push(read_u64(r)? as u16);
        }
        let net = read_layer_stream(r, vec![latent_bits])?;
        let gs_index = net
            .gumbel_layer_index()
            .ok_or_else(|| Error::Format("aae checkpoint has no categorical layer".into()))?;
        let cfg = AaeConfig { latent_bits, labels, tau_min, ..AaeConfig::default() };
        Ok(AaeModel { cfg, net, gs_index, used_labels })
    }
}

/// Trains the action autoencoder on encoded (s, t) pairs and records the
/// set of labels the training data actually uses.
pub fn train_aae(
    transitions: &[(LatentBitVector, LatentBitVector)],
    cfg: &AaeConfig,
    rng: &mut RngStream,
) -> Result<(AaeModel, AaeTrainReport)> {
    if transitions.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = cfg.latent_bits;
    for (s, t) in transitions {
        if s.len() != n || t.len() != n {
            return Err(Error::Length { expected: n, actual: s.len().min(t.len()) });
        }
    }

    let count = transitions.len();
    let mut pre = Vec::with_capacity(count * n);
    let mut suc = Vec::with_capacity(count * n);
    for (s, t) in transitions {
        pre.extend(s.to_f32_vec());
        suc.extend(t.to_f32_vec());
    }
    let pre = Tensor::new(vec![count, n], pre);
    let suc = Tensor::new(vec![count, n], suc);

    let mut net = cfg.build_network(rng.substream(0xaae_1217));
    let gs_index = net.gumbel_layer_index().expect("network has a categorical layer");
    let mut adam = AdamState::for_network(&net);
    let anneal = AnnealSchedule::calibrated(cfg.tau0, cfg.tau_min, cfg.epochs);
    let batch_size = cfg.batch_size.max(1).min(count);
    let mut order: Vec<usize> = (0..count).collect();
    let mut final_loss = f64::NAN;

    for epoch in 0..cfg.epochs {
        let tau = anneal.tau(epoch);
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0f64;
        let mut batches = 0usize;
        for chunk in order.chunks(batch_size) {
            let x = crate::sae::gather_rows(&suc, chunk);
            let aux = crate::sae::gather_rows(&pre, chunk);
            let mut ctx = ForwardCtx { mode: Mode::Train, tau, aux: Some(&aux), rng };
            let (recon, mut tape) = net.forward_train(&x, &mut ctx)?;
            let (loss, mut grad) = bce_loss_grad(&recon, &x)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("aae loss at epoch {epoch}")));
            }
            // reconstruction summed over the bits of each sample, matching
            // the per-sample scale of the label-distribution term
            for g in grad.data_mut() {
                *g *= n as f32;
            }
            net.backward(&mut tape, &grad)?;
            adam_step(&mut net, &mut adam, cfg.lr);
            net.zero_grads();
            epoch_loss += loss;
            batches += 1;
        }
        final_loss = epoch_loss / batches as f64;
    }

    // label usage and roundtrip accuracy at inference
    let mut model = AaeModel {
        cfg: cfg.clone(),
        net,
        gs_index,
        used_labels: (0..cfg.labels as u16).collect(),
    };
    let labels = model.action_label_batch(transitions)?;
    let mut used: Vec<u16> = labels.iter().map(|l| *l as u16).collect();
    used.sort_unstable();
    used.dedup();
    model.used_labels = used;

    let outs = model.roundtrip_batch(transitions)?;
    let ok = outs
        .iter()
        .zip(transitions)
        .filter(|(o, (_, t))| *o == t)
        .count();
    let roundtrip_accuracy = ok as f64 / count as f64;

    let warning = (final_loss > cfg.plateau_warning).then(|| {
        format!(
            "reconstruction loss plateaued at {final_loss:.4} (above {:.4}); \
             consider more labels or epochs",
            cfg.plateau_warning
        )
    });

    let report = AaeTrainReport {
        epochs_run: cfg.epochs,
        final_loss,
        roundtrip_accuracy,
        used_label_count: model.used_labels.len(),
        warning,
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Toy action system on 8 bits: three xor masks play the actions.
    fn toy_transitions() -> Vec<(LatentBitVector, LatentBitVector)> {
        let masks = [0b0000_0011u8, 0b0001_1000, 0b1100_0000];
        let mut out = Vec::new();
        for state in 0..32u8 {
            let s_bits: Vec<bool> = (0..8).map(|j| (state >> j) & 1 == 1).collect();
            let s = LatentBitVector::from_bools(&s_bits);
            for m in masks {
                let t_val = state ^ m;
                let t_bits: Vec<bool> = (0..8).map(|j| (t_val >> j) & 1 == 1).collect();
                out.push((s.clone(), LatentBitVector::from_bools(&t_bits)));
            }
        }
        out
    }

    fn toy_cfg() -> AaeConfig {
        AaeConfig {
            latent_bits: 8,
            labels: 16,
            epochs: 800,
            batch_size: 32,
            fc_width: 64,
            ..AaeConfig::default()
        }
    }

    #[test]
    fn toy_system_reconstructs_and_uses_few_labels() {
        let data = toy_transitions();
        let (model, report) = train_aae(&data, &toy_cfg(), &mut RngStream::new(11)).unwrap();
        // 3 distinct difference patterns fit easily within 16 labels
        assert!(report.roundtrip_accuracy >= 0.99, "{}", report.roundtrip_accuracy);
        assert!(report.used_label_count <= 16);
        assert!(!model.used_labels().is_empty());
    }

    #[test]
    fn action_label_is_deterministic_and_apply_roundtrips() {
        let data = toy_transitions();
        let (model, _) = train_aae(&data, &toy_cfg(), &mut RngStream::new(11)).unwrap();
        let (s, t) = &data[7];
        let l1 = model.action_label(t, s).unwrap();
        let l2 = model.action_label(t, s).unwrap();
        assert_eq!(l1, l2);
        let out = model.apply_label(l1, s).unwrap();
        assert_eq!(&out, t);
    }

    #[test]
    fn unused_label_is_an_error() {
        let data = toy_transitions();
        let (model, _) = train_aae(&data, &toy_cfg(), &mut RngStream::new(11)).unwrap();
        let unused = (0..16u16).find(|l| !model.used_labels().contains(l));
        if let Some(l) = unused {
            let s = &data[0].0;
            assert!(matches!(
                model.apply_label(l as usize, s),
                Err(Error::UnusedLabel(_))
            ));
        }
    }

    #[test]
    fn successor_fan_is_bounded_by_used_labels() {
        let data = toy_transitions();
        let (model, _) = train_aae(&data, &toy_cfg(), &mut RngStream::new(11)).unwrap();
        let s = &data[0].0;
        let fan = model.apply_all_used(s).unwrap();
        assert!(fan.len() <= model.used_labels().len());
        // ascending label order
        for w in fan.windows(2) {
            assert!(w[0].0 < w[1].0);
        }
    }

    #[test]
    fn checkpoint_roundtrip_preserves_behavior() {
        let data = toy_transitions();
        let (model, _) = train_aae(&data, &toy_cfg(), &mut RngStream::new(11)).unwrap();
        let mut buf = Vec::new();
        model.write(&mut buf).unwrap();
        let back = AaeModel::read(&mut buf.as_slice()).unwrap();
        assert_eq!(model.used_labels(), back.used_labels());
        let (s, t) = &data[3];
        assert_eq!(
            model.action_label(t, s).unwrap(),
            back.action_label(t, s).unwrap()
        );
        let fan_a = model.apply_all_used(s).unwrap();
        let fan_b = back.apply_all_used(s).unwrap();
        assert_eq!(fan_a, fan_b);
    }

    #[test]
    fn empty_transitions_error() {
        assert!(matches!(
            train_aae(&[], &toy_cfg(), &mut RngStream::new(0)),
            Err(Error::EmptyDataset)
        ));
    }
}

//! Mixed-example generators for PU training.

use std::collections::HashSet;

use crate::ama2::aae::AaeModel;
use crate::ama2::pu::DiscriminatorModel;
use crate::bits::LatentBitVector;
use crate::error::Result;
use crate::ndcore::rng::RngStream;
use crate::sae::SaeModel;

/// Mixed states for the state discriminator: uniform random bitvectors
/// stabilized by `k_iters` rounds of encode(decode(.)). The repeated
/// autoencoding denoises them toward clean (often invalid) states.
/// Duplicates are collapsed.
pub fn gen_mixed_sd(
    sae: &SaeModel,
    count: usize,
    k_iters: usize,
    rng: &mut RngStream,
) -> Result<Vec<LatentBitVector>> {
    let n = sae.latent_bits();
    let mut vectors: Vec<LatentBitVector> = (0..count)
        .map(|_| {
            LatentBitVector::from_bools(&(0..n).map(|_| rng.uniform() < 0.5).collect::<Vec<_>>())
        })
        .collect();
    for _ in 0..k_iters.max(1) {
        vectors = sae.autoencode_bits(&vectors)?;
    }
    let mut seen = HashSet::new();
    vectors.retain(|v| seen.insert(v.clone()));
    Ok(vectors)
}

/// Mixed transitions for the action discriminator: every used label
/// applied to every distinct before-state, minus the known positives,
/// minus (when a state discriminator is supplied) candidates whose
/// successor it rejects at 0.5.
pub fn gen_mixed_ad(
    transitions: &[(LatentBitVector, LatentBitVector)],
    aae: &AaeModel,
    sd: Option<&DiscriminatorModel>,
) -> Result<Vec<(LatentBitVector, LatentBitVector)>> {
    let positives: HashSet<(LatentBitVector, LatentBitVector)> =
        transitions.iter().cloned().collect();
    let mut before: Vec<LatentBitVector> = transitions.iter().map(|(s, _)| s.clone()).collect();
    before.sort();
    before.dedup();

    let mut candidates: Vec<(LatentBitVector, LatentBitVector)> = Vec::new();
    for s in &before {
        for (_, t) in aae.apply_all_used(s)? {
            let pair = (s.clone(), t);
            if !positives.contains(&pair) {
                candidates.push(pair);
            }
        }
    }
    candidates.sort();
    candidates.dedup();

    if let Some(sd) = sd {
        let sucs: Vec<LatentBitVector> = candidates.iter().map(|(_, t)| t.clone()).collect();
        let scores = sd.scores(&sucs)?;
        let pruned: Vec<(LatentBitVector, LatentBitVector)> = candidates
            .iter()
            .zip(&scores)
            .filter(|(_, sc)| **sc >= 0.5)
            .map(|(pair, _)| pair.clone())
            .collect();
        // an over-eager state discriminator must not erase the training
        // pool entirely; fall back to the unpruned candidates then
        if !pruned.is_empty() {
            candidates = pruned;
        }
    }
    Ok(candidates)
}

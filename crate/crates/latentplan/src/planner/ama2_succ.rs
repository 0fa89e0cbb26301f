//! Learned successor function: the action autoencoder enumerates
//! candidate successors and four validity filters prune them. Every filter
//! only removes candidates, so enabling more filters never enlarges the
//! result.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::ama2::aae::AaeModel;
use crate::ama2::pu::DiscriminatorModel;
use crate::bits::LatentBitVector;
use crate::error::{Error, Result};
use crate::planner::SuccessorFn;
use crate::sae::SaeModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuccConfig {
    pub ad_threshold: f32,
    pub sd_threshold: f32,
    pub use_ad: bool,
    pub use_sd: bool,
    /// Reconstruction stability of the successor:
    /// encode(decode(t)) == t.
    pub use_sae_stability: bool,
    /// Optional stability gate on the expanded state itself:
    /// encode(decode(s)) == s. Off by default.
    pub use_sae_stability_pre: bool,
    /// Label stability: apply(action(t, s), s) == t.
    pub use_aae_stability: bool,
}

impl Default for SuccConfig {
    fn default() -> Self {
        SuccConfig {
            ad_threshold: 0.5,
            sd_threshold: 0.5,
            use_ad: true,
            use_sd: true,
            use_sae_stability: true,
            use_sae_stability_pre: false,
            use_aae_stability: true,
        }
    }
}

impl SuccConfig {
    pub fn no_filters() -> Self {
        SuccConfig {
            use_ad: false,
            use_sd: false,
            use_sae_stability: false,
            use_sae_stability_pre: false,
            use_aae_stability: false,
            ..SuccConfig::default()
        }
    }
}

/// Successor generator over trained models. Candidate generation and each
/// filter run one batched inference pass per expansion; reconstruction
/// stability verdicts are memoized because search revisits states.
pub struct Ama2Successors<'a> {
    sae: &'a SaeModel,
    aae: &'a AaeModel,
    ad: Option<&'a DiscriminatorModel>,
    sd: Option<&'a DiscriminatorModel>,
    cfg: SuccConfig,
    stability: HashMap<LatentBitVector, bool>,
    succ_cache: HashMap<LatentBitVector, Vec<(u32, LatentBitVector)>>,
}

impl<'a> Ama2Successors<'a> {
    pub fn new(
        sae: &'a SaeModel,
        aae: &'a AaeModel,
        ad: Option<&'a DiscriminatorModel>,
        sd: Option<&'a DiscriminatorModel>,
        cfg: SuccConfig,
    ) -> Result<Self> {
        if cfg.use_ad && ad.is_none() {
            return Err(Error::MissingCheckpoint {
                stage: "ad".into(),
                path: "action discriminator required by the successor filters".into(),
            });
        }
        if cfg.use_sd && sd.is_none() {
            return Err(Error::MissingCheckpoint {
                stage: "sd".into(),
                path: "state discriminator required by the successor filters".into(),
            });
        }
        Ok(Ama2Successors { sae, aae, ad, sd, cfg, stability: HashMap::new(), succ_cache: HashMap::new() })
    }

    pub fn config(&self) -> SuccConfig {
        self.cfg
    }

    fn stable(&mut self, v: &LatentBitVector) -> Result<bool> {
        if let Some(&known) = self.stability.get(v) {
            return Ok(known);
        }
        let back = self
            .sae
            .autoencode_bits(std::slice::from_ref(v))?
            .pop()
            .expect("one row");
        let ok = back == *v;
        self.stability.insert(v.clone(), ok);
        Ok(ok)
    }

    fn stable_batch(&mut self, vs: &[LatentBitVector]) -> Result<Vec<bool>> {
        let misses: Vec<LatentBitVector> = vs
            .iter()
            .filter(|v| !self.stability.contains_key(*v))
            .cloned()
            .collect();
        if !misses.is_empty() {
            let backs = self.sae.autoencode_bits(&misses)?;
            for (v, b) in misses.into_iter().zip(backs) {
                let ok = b == v;
                self.stability.insert(v, ok);
            }
        }
        Ok(vs.iter().map(|v| self.stability[v]).collect())
    }

    fn compute(&mut self, s: &LatentBitVector) -> Result<Vec<(u32, LatentBitVector)>> {
        if self.cfg.use_sae_stability_pre && !self.stable(s)? {
            return Ok(Vec::new());
        }

        // candidates from every used label, in label order; duplicate
        // successors collapse onto the smallest label id
        let mut seen: HashMap<LatentBitVector, u32> = HashMap::new();
        let mut cands: Vec<(u32, LatentBitVector)> = Vec::new();
        for (label, t) in self.aae.apply_all_used(s)? {
            if !seen.contains_key(&t) {
                seen.insert(t.clone(), label);
                cands.push((label, t));
            }
        }

        if self.cfg.use_ad {
            let ad = self.ad.expect("checked in new");
            let pairs: Vec<LatentBitVector> = cands.iter().map(|(_, t)| s.concat(t)).collect();
            let scores = ad.scores(&pairs)?;
            cands = cands
                .into_iter()
                .zip(scores)
                .filter(|(_, sc)| *sc >= self.cfg.ad_threshold)
                .map(|(c, _)| c)
                .collect();
        }

        if self.cfg.use_sd {
            let sd = self.sd.expect("checked in new");
            let states: Vec<LatentBitVector> = cands.iter().map(|(_, t)| t.clone()).collect();
            let scores = sd.scores(&states)?;
            cands = cands
                .into_iter()
                .zip(scores)
                .filter(|(_, sc)| *sc >= self.cfg.sd_threshold)
                .map(|(c, _)| c)
                .collect();
        }

        if self.cfg.use_aae_stability {
            let pairs: Vec<(LatentBitVector, LatentBitVector)> =
                cands.iter().map(|(_, t)| (s.clone(), t.clone())).collect();
            let outs = self.aae.roundtrip_batch(&pairs)?;
            cands = cands
                .into_iter()
                .zip(outs)
                .filter(|((_, t), back)| back == t)
                .map(|(c, _)| c)
                .collect();
        }

        if self.cfg.use_sae_stability {
            let states: Vec<LatentBitVector> = cands.iter().map(|(_, t)| t.clone()).collect();
            let verdicts = self.stable_batch(&states)?;
            cands = cands
                .into_iter()
                .zip(verdicts)
                .filter(|(_, ok)| *ok)
                .map(|(c, _)| c)
                .collect();
        }

        Ok(cands)
    }
}

impl SuccessorFn for Ama2Successors<'_> {
    fn successors(&mut self, s: &LatentBitVector) -> Result<Vec<(u32, LatentBitVector)>> {
        if let Some(cached) = self.succ_cache.get(s) {
            return Ok(cached.clone());
        }
        let result = self.compute(s)?;
        self.succ_cache.insert(s.clone(), result.clone());
        Ok(result)
    }
}

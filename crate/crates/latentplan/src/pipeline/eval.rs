//! Benchmark evaluation: sampled instances, per-noise conditions, plan
//! validation, and the discriminator error table.

use std::collections::HashSet;
use std::fs;

use serde::{Deserialize, Serialize};

use crate::ama2::DiscriminatorModel;
use crate::bits::LatentBitVector;
use crate::error::Result;
use crate::ndcore::RngStream;
use crate::planner::{Ama2Successors, PlanStatus, StripsSuccessors};
use crate::pipeline::config::{Benchmark, Method, NoiseKind, RunConfig};
use crate::pipeline::noise::corrupt_image;
use crate::pipeline::stages::{
    encoded_transitions, heuristic_for, load_aae, load_ad, load_compiled, load_dataset, load_sae,
    load_sd, run_search, search_limits, PlanFile,
};
use crate::sae::SaeModel;

const TAG_EVAL: u64 = 7;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalInstanceRow {
    pub id: usize,
    pub status: PlanStatus,
    pub plan_length: usize,
    /// Validator verdict on the decoded plan.
    pub valid: bool,
    /// Breadth-first optimum when the state space permits computing it.
    pub optimal_length: Option<u32>,
    pub expanded: usize,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscErrorTable {
    /// Valid states misclassified as invalid (fraction).
    pub sd_type1: f64,
    /// Stabilized invalid states misclassified as valid; None when every
    /// stabilized state was valid.
    pub sd_type2: Option<f64>,
    /// Valid transitions misclassified as invalid.
    pub ad_type1: f64,
    /// Generated invalid transitions misclassified as valid.
    pub ad_type2: Option<f64>,
    /// As type-2, restricted to candidates the state discriminator accepts.
    pub ad_type2_sd: Option<f64>,
    /// As type-2, restricted to candidates whose successor is a valid state.
    pub ad_type2_valid_state: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub domain: String,
    pub method: Method,
    pub benchmark: Benchmark,
    pub noise: NoiseKind,
    pub instances: Vec<EvalInstanceRow>,
    /// Instances whose plan both solved and passed the validator.
    pub solved: usize,
    /// Raw search successes before validation.
    pub search_solved: usize,
    pub discriminator_errors: Option<DiscErrorTable>,
}

/// Runs the benchmark protocol: `cfg.instances` sampled instances at the
/// benchmark's walk length, optional input corruption, a search per
/// instance under the configured time limit, and validator checks on the
/// decoded plans. Plan files land under `plans/`.
pub fn cmd_eval(
    cfg: &RunConfig,
    method: Method,
    benchmark: Benchmark,
    noise: NoiseKind,
) -> Result<EvalReport> {
    let domain = cfg.domain()?;
    let sae = load_sae(cfg)?;
    let mut rng = RngStream::new(cfg.seed)
        .substream(TAG_EVAL)
        .substream(benchmark.walk_length() as u64)
        .substream(noise as u64);

    let instances = domain.sample_instances(cfg.instances, benchmark.walk_length(), &mut rng)?;
    let limits = search_limits(cfg);
    let heuristic = heuristic_for(cfg, method);

    // model handles shared across instances
    let mut strips = match method {
        Method::Ama1 => Some(StripsSuccessors::new(load_compiled(cfg)?)),
        Method::Ama2 => None,
    };
    let (aae, ad, sd) = match method {
        Method::Ama2 => (Some(load_aae(cfg)?), Some(load_ad(cfg)?), Some(load_sd(cfg)?)),
        Method::Ama1 => (None, None, None),
    };
    let mut ama2 = match method {
        Method::Ama2 => Some(Ama2Successors::new(
            &sae,
            aae.as_ref().expect("loaded"),
            ad.as_ref(),
            sd.as_ref(),
            cfg.succ,
        )?),
        Method::Ama1 => None,
    };

    let compute_optimal = state_space_is_small(&domain);
    fs::create_dir_all(cfg.plans_dir())?;

    let mut rows = Vec::with_capacity(instances.len());
    let mut solved = 0usize;
    let mut search_solved = 0usize;
    for (id, inst) in instances.iter().enumerate() {
        let init_img = corrupt_image(&inst.init_image, noise, &mut rng);
        let goal_img = corrupt_image(&inst.goal_image, noise, &mut rng);
        let init = sae.encode(&init_img)?;
        let goal = sae.encode(&goal_img)?;

        let result = match (&mut strips, &mut ama2) {
            (Some(s), _) => run_search(s, &init, &goal, heuristic, limits)?,
            (_, Some(a)) => run_search(a, &init, &goal, heuristic, limits)?,
            _ => unreachable!(),
        };

        let mut valid = false;
        if result.solved() {
            search_solved += 1;
            let frames: Result<Vec<_>> = result.states.iter().map(|b| sae.decode(b)).collect();
            valid = domain.validate_image_plan(&inst.init, &inst.goal, &frames?);
            if valid {
                solved += 1;
            }
        }

        let plan = PlanFile::from_result(
            cfg,
            method,
            &result,
            Some(inst.init.clone()),
            Some(inst.goal.clone()),
        );
        plan.save(cfg.plans_dir().join(format!("inst_{id:03}.json")))?;

        rows.push(EvalInstanceRow {
            id,
            status: result.status,
            plan_length: result.plan_length(),
            valid,
            optimal_length: if compute_optimal {
                domain.bfs_distance(&inst.init, &inst.goal)?
            } else {
                None
            },
            expanded: result.expanded,
            wall_ms: result.wall.as_millis() as u64,
        });
    }

    let discriminator_errors = match (&sd, &ad, &aae) {
        (Some(sd), Some(ad), Some(aae)) if state_space_is_small(&domain) => Some(
            discriminator_error_table(cfg, &domain, &sae, aae, ad, sd, &mut rng)?,
        ),
        _ => None,
    };

    let report = EvalReport {
        domain: cfg.domain.name(),
        method,
        benchmark,
        noise,
        instances: rows,
        solved,
        search_solved,
        discriminator_errors,
    };
    let name = format!(
        "eval_{}_{}_{}.json",
        match method {
            Method::Ama1 => "ama1",
            Method::Ama2 => "ama2",
        },
        match benchmark {
            Benchmark::A => "a",
            Benchmark::B => "b",
        },
        match noise {
            NoiseKind::None => "std",
            NoiseKind::Gaussian => "gaussian",
            NoiseKind::SaltPepper => "saltpepper",
        }
    );
    fs::write(cfg.out_dir.join(name), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

fn state_space_is_small(domain: &crate::domains::Domain) -> bool {
    use crate::domains::DomainSpec;
    match domain.spec() {
        DomainSpec::Puzzle8 => false,
        DomainSpec::LightsOut { n } | DomainSpec::TwistedLightsOut { n, .. } => *n <= 4,
        DomainSpec::Hanoi { disks } => *disks <= 7,
    }
}

/// Measures the discriminator misclassification rates against the
/// ground-truth state space, mirroring the published table layout.
pub fn discriminator_error_table(
    cfg: &RunConfig,
    domain: &crate::domains::Domain,
    sae: &SaeModel,
    aae: &crate::ama2::AaeModel,
    ad: &DiscriminatorModel,
    sd: &DiscriminatorModel,
    rng: &mut RngStream,
) -> Result<DiscErrorTable> {
    // every reachable state and directed transition, encoded
    let states = domain.reachable_states()?;
    let codes: Vec<LatentBitVector> = {
        let mut out = Vec::with_capacity(states.len());
        for s in &states {
            out.push(sae.encode(&domain.render(s))?);
        }
        out
    };
    let valid_codes: HashSet<LatentBitVector> = codes.iter().cloned().collect();

    // SD type-1: valid states the discriminator rejects
    let sd_scores = sd.scores(&codes)?;
    let sd_type1 =
        sd_scores.iter().filter(|v| **v < 0.5).count() as f64 / sd_scores.len().max(1) as f64;

    // SD type-2: stabilized random vectors that are invalid yet accepted
    let sample_n = (codes.len() * 8).min(30_000).max(256);
    let stabilized =
        crate::ama2::gen_mixed_sd(sae, sample_n, cfg.sd_stabilize_iters, rng)?;
    let invalid: Vec<LatentBitVector> = stabilized
        .into_iter()
        .filter(|v| !valid_codes.contains(v))
        .collect();
    let sd_type2 = if invalid.is_empty() {
        None
    } else {
        let scores = sd.scores(&invalid)?;
        Some(scores.iter().filter(|v| **v >= 0.5).count() as f64 / scores.len() as f64)
    };

    // AD type-1: valid transitions rejected
    let mut valid_pairs: Vec<LatentBitVector> = Vec::new();
    let mut valid_pair_set: HashSet<(LatentBitVector, LatentBitVector)> = HashSet::new();
    for (si, s) in states.iter().enumerate() {
        for t in domain.gt_successors(s)? {
            let ti = states.binary_search(&t).expect("successor is reachable");
            valid_pairs.push(codes[si].concat(&codes[ti]));
            valid_pair_set.insert((codes[si].clone(), codes[ti].clone()));
        }
    }
    let ad_scores = ad.scores(&valid_pairs)?;
    let ad_type1 =
        ad_scores.iter().filter(|v| **v < 0.5).count() as f64 / ad_scores.len().max(1) as f64;

    // AD type-2 family: fan the labels over up to 1000 valid states and
    // keep the generated pairs that are not valid transitions
    let mut pick: Vec<usize> = (0..codes.len()).collect();
    rng.shuffle(&mut pick);
    pick.truncate(1000);
    let mut gen_pairs: Vec<(LatentBitVector, LatentBitVector)> = Vec::new();
    for &i in &pick {
        for (_, t) in aae.apply_all_used(&codes[i])? {
            if !valid_pair_set.contains(&(codes[i].clone(), t.clone())) {
                gen_pairs.push((codes[i].clone(), t));
            }
        }
    }
    let (ad_type2, ad_type2_sd, ad_type2_valid_state) = if gen_pairs.is_empty() {
        (None, None, None)
    } else {
        let concat: Vec<LatentBitVector> = gen_pairs.iter().map(|(s, t)| s.concat(t)).collect();
        let scores = ad.scores(&concat)?;
        let accepted: Vec<bool> = scores.iter().map(|v| *v >= 0.5).collect();
        let type2 =
            accepted.iter().filter(|b| **b).count() as f64 / accepted.len() as f64;

        let suc_states: Vec<LatentBitVector> = gen_pairs.iter().map(|(_, t)| t.clone()).collect();
        let sd_ok: Vec<bool> = sd.scores(&suc_states)?.iter().map(|v| *v >= 0.5).collect();
        let sd_kept: Vec<usize> = (0..gen_pairs.len()).filter(|&i| sd_ok[i]).collect();
        let type2_sd = if sd_kept.is_empty() {
            None
        } else {
            Some(sd_kept.iter().filter(|&&i| accepted[i]).count() as f64 / sd_kept.len() as f64)
        };

        let vs_kept: Vec<usize> = (0..gen_pairs.len())
            .filter(|&i| valid_codes.contains(&gen_pairs[i].1))
            .collect();
        let type2_vs = if vs_kept.is_empty() {
            None
        } else {
            Some(vs_kept.iter().filter(|&&i| accepted[i]).count() as f64 / vs_kept.len() as f64)
        };
        (Some(type2), type2_sd, type2_vs)
    };

    Ok(DiscErrorTable {
        sd_type1,
        sd_type2,
        ad_type1,
        ad_type2,
        ad_type2_sd,
        ad_type2_valid_state,
    })
}

/// Evaluation uses the training-split encoder to mirror the training
/// pipeline; re-exported for the acceptance suite.
pub fn encode_dataset_transitions(
    cfg: &RunConfig,
    sae: &SaeModel,
    upto: Option<usize>,
) -> Result<Vec<(LatentBitVector, LatentBitVector)>> {
    let ds = load_dataset(cfg)?;
    let n = upto.unwrap_or(ds.len());
    let mut rng = RngStream::new(cfg.seed).substream(0xe2c0de);
    encoded_transitions(sae, &ds, n, cfg.augment, &mut rng)
}

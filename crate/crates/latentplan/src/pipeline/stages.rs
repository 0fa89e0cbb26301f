//! Individual pipeline stages.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::ama1::{compile, emit_pddl, StripsProblem};
use crate::ama2::{
    gen_mixed_ad, gen_mixed_sd, pu_train, train_aae, AaeModel, AaeTrainReport, DiscriminatorModel,
    PuDataset,
};
use crate::bits::LatentBitVector;
use crate::dataset::{load_bitvectors, load_tensor, save_bitvectors, save_tensor, TransitionDataset};
use crate::domains::{imageio, Domain, DomainSpec, PuzzleState};
use crate::error::{Error, Result};
use crate::ndcore::checkpoint::ModelKind;
use crate::ndcore::{RngStream, Tensor};
use crate::planner::{
    astar, goal_count, Ama2Successors, PlanResult, PlanStatus, SearchLimits, StripsSuccessors,
    SuccessorFn,
};
use crate::pipeline::config::{Heuristic, Method, NoiseKind, RunConfig};
use crate::pipeline::noise::corrupt_image;
use crate::sae::{train_sae, SaeModel, SaeTrainReport};

// stage tags for deriving independent random streams from the run seed
const TAG_GEN: u64 = 1;
const TAG_SAE: u64 = 2;
const TAG_AAE: u64 = 3;
const TAG_SD: u64 = 4;
const TAG_AD: u64 = 5;
const TAG_SOLVE: u64 = 6;
const TAG_INSTANCE: u64 = 8;

pub fn load_domain(cfg: &RunConfig) -> Result<Domain> {
    cfg.domain()
}

fn missing(stage: &str, path: &Path) -> Error {
    Error::MissingCheckpoint { stage: stage.into(), path: path.display().to_string() }
}

fn require(stage: &str, path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(missing(stage, path))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataMeta {
    pub domain: String,
    pub seed: u64,
    pub transition_count: usize,
    /// First `train_count` transitions are the training split (9:1).
    pub train_count: usize,
    pub image_dims: (usize, usize),
}

/// Generates the transition dataset: image pairs for ground-truth moves,
/// sampled with duplicates when a count is configured, otherwise every
/// reachable directed transition in a deterministically shuffled order.
pub fn cmd_gen_data(cfg: &RunConfig) -> Result<DataMeta> {
    let domain = cfg.domain()?;
    let mut rng = RngStream::new(cfg.seed).substream(TAG_GEN);
    let all = domain.reachable_transitions()?;
    let chosen: Vec<(PuzzleState, PuzzleState)> = match cfg.transitions {
        Some(k) => {
            let states = domain.reachable_states()?;
            let mut out = Vec::with_capacity(k);
            for _ in 0..k {
                let s = &states[rng.below(states.len())];
                let succs = domain.gt_successors(s)?;
                let t = succs[rng.below(succs.len())].clone();
                out.push((s.clone(), t));
            }
            out
        }
        None => {
            let mut out = all;
            rng.shuffle(&mut out);
            out
        }
    };

    let (h, w) = domain.image_dims();
    let count = chosen.len();
    let mut pre = Vec::with_capacity(count * h * w);
    let mut suc = Vec::with_capacity(count * h * w);
    for (s, t) in &chosen {
        pre.extend_from_slice(domain.render(s).data());
        suc.extend_from_slice(domain.render(t).data());
    }
    fs::create_dir_all(&cfg.out_dir)?;
    save_tensor(cfg.path_pre_images(), &Tensor::new(vec![count, h, w], pre))?;
    save_tensor(cfg.path_suc_images(), &Tensor::new(vec![count, h, w], suc))?;

    let meta = DataMeta {
        domain: cfg.domain.name(),
        seed: cfg.seed,
        transition_count: count,
        train_count: (count * 9) / 10,
        image_dims: (h, w),
    };
    fs::write(cfg.path_meta(), serde_json::to_string_pretty(&meta)?)?;
    Ok(meta)
}

pub fn load_meta(cfg: &RunConfig) -> Result<DataMeta> {
    require("gen-data", &cfg.path_meta())?;
    Ok(serde_json::from_str(&fs::read_to_string(cfg.path_meta())?)?)
}

pub fn load_dataset(cfg: &RunConfig) -> Result<TransitionDataset> {
    require("gen-data", &cfg.path_pre_images())?;
    require("gen-data", &cfg.path_suc_images())?;
    TransitionDataset::new(
        load_tensor(cfg.path_pre_images())?,
        load_tensor(cfg.path_suc_images())?,
    )
}

fn train_slice(images: &Tensor, count: usize) -> Tensor {
    let row = images.row_len();
    let mut shape = images.shape().to_vec();
    shape[0] = count;
    Tensor::new(shape, images.data()[..count * row].to_vec())
}

/// Trains the state autoencoder on the training split of the dataset
/// images (before and after frames, duplicates included).
pub fn cmd_train_sae(cfg: &RunConfig) -> Result<SaeTrainReport> {
    let meta = load_meta(cfg)?;
    let ds = load_dataset(cfg)?;
    let train_n = meta.train_count.max(1);
    let pre = train_slice(&ds.pre_images, train_n);
    let suc = train_slice(&ds.suc_images, train_n);
    let both = TransitionDataset::new(pre, suc)?.all_images();

    let sae_cfg = cfg.sae_config();
    let mut rng = RngStream::new(cfg.seed).substream(TAG_SAE);
    let (model, report) = train_sae(&both, &sae_cfg, &mut rng)?;
    model.save(cfg.path_sae())?;
    fs::write(
        cfg.out_dir.join("sae_report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    Ok(report)
}

pub fn load_sae(cfg: &RunConfig) -> Result<SaeModel> {
    require("sae", &cfg.path_sae())?;
    SaeModel::load(cfg.path_sae())
}

const ENCODE_CHUNK: usize = 256;

fn encode_images(sae: &SaeModel, images: &Tensor) -> Result<Vec<LatentBitVector>> {
    let row = images.row_len();
    let (h, w) = sae.input_dims();
    let mut out = Vec::with_capacity(images.batch());
    let mut i = 0;
    while i < images.batch() {
        let j = (i + ENCODE_CHUNK).min(images.batch());
        let chunk = Tensor::new(vec![j - i, h, w], images.data()[i * row..j * row].to_vec());
        out.extend(sae.encode_batch(&chunk)?);
        i = j;
    }
    Ok(out)
}

/// Encodes transition image pairs to bitvector pairs. With `augment > 1`
/// each endpoint image is encoded stochastically that many times and the
/// cross product of the sampled codes joins the result.
pub fn encoded_transitions(
    sae: &SaeModel,
    ds: &TransitionDataset,
    upto: usize,
    augment: usize,
    rng: &mut RngStream,
) -> Result<Vec<(LatentBitVector, LatentBitVector)>> {
    let n = upto.min(ds.len());
    let pre = train_slice(&ds.pre_images, n);
    let suc = train_slice(&ds.suc_images, n);
    if augment <= 1 {
        let s = encode_images(sae, &pre)?;
        let t = encode_images(sae, &suc)?;
        return Ok(s.into_iter().zip(t).collect());
    }
    let s_groups = sae.augment_states(&pre, augment, rng)?;
    let t_groups = sae.augment_states(&suc, augment, rng)?;
    let mut out = Vec::new();
    for (ss, ts) in s_groups.iter().zip(&t_groups) {
        for s in ss {
            for t in ts {
                out.push((s.clone(), t.clone()));
            }
        }
    }
    Ok(out)
}

/// Trains the action autoencoder on the encoded training-split
/// transitions.
pub fn cmd_train_aae(cfg: &RunConfig) -> Result<AaeTrainReport> {
    let meta = load_meta(cfg)?;
    let ds = load_dataset(cfg)?;
    let sae = load_sae(cfg)?;
    let mut rng = RngStream::new(cfg.seed).substream(TAG_AAE);
    let transitions = encoded_transitions(&sae, &ds, meta.train_count.max(1), cfg.augment, &mut rng)?;
    let aae_cfg = cfg.aae_config();
    let (model, report) = train_aae(&transitions, &aae_cfg, &mut rng)?;
    model.save(cfg.path_aae())?;
    fs::write(
        cfg.out_dir.join("aae_report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    Ok(report)
}

pub fn load_aae(cfg: &RunConfig) -> Result<AaeModel> {
    require("aae", &cfg.path_aae())?;
    AaeModel::load(cfg.path_aae())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscTrainSummary {
    pub calibration: f32,
    pub validation_accuracy: f64,
    pub arch_width: usize,
    pub arch_blocks: usize,
    pub arch_dropout: f32,
    pub positives: usize,
    pub mixed: usize,
}

fn disc_summary(model: &DiscriminatorModel, data: &PuDataset) -> DiscTrainSummary {
    DiscTrainSummary {
        calibration: model.calibration(),
        validation_accuracy: model.validation_accuracy,
        arch_width: model.arch().width,
        arch_blocks: model.arch().blocks,
        arch_dropout: model.arch().dropout,
        positives: data.positives.len(),
        mixed: data.mixed.len(),
    }
}

/// Trains the state discriminator: positives are the encoded endpoint
/// states of the training transitions, mixed examples are stabilized
/// random vectors.
pub fn cmd_train_sd(cfg: &RunConfig) -> Result<DiscTrainSummary> {
    let meta = load_meta(cfg)?;
    let ds = load_dataset(cfg)?;
    let sae = load_sae(cfg)?;
    let mut rng = RngStream::new(cfg.seed).substream(TAG_SD);
    let transitions = encoded_transitions(&sae, &ds, meta.train_count.max(1), cfg.augment, &mut rng)?;
    let mut positives = Vec::with_capacity(transitions.len() * 2);
    for (s, t) in &transitions {
        positives.push(s.clone());
        positives.push(t.clone());
    }
    let mixed_target = ((positives.len() as f32) * cfg.sd_mixed_factor).ceil() as usize;
    let mixed = gen_mixed_sd(&sae, mixed_target, cfg.sd_stabilize_iters, &mut rng)?;
    let data = PuDataset::new(positives, mixed);
    let model = pu_train(&data, &cfg.sd_config(), ModelKind::StateDisc, &mut rng)?;
    model.save(cfg.path_sd())?;
    let summary = disc_summary(&model, &data);
    fs::write(
        cfg.out_dir.join("sd_report.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(summary)
}

pub fn load_sd(cfg: &RunConfig) -> Result<DiscriminatorModel> {
    require("sd", &cfg.path_sd())?;
    DiscriminatorModel::load(cfg.path_sd(), ModelKind::StateDisc)
}

/// Trains the action discriminator on concatenated (s, t) pairs:
/// positives are the encoded training transitions, mixed examples come
/// from fanning the learned labels over the before-states, pruned by the
/// state discriminator when one exists.
pub fn cmd_train_ad(cfg: &RunConfig) -> Result<DiscTrainSummary> {
    let meta = load_meta(cfg)?;
    let ds = load_dataset(cfg)?;
    let sae = load_sae(cfg)?;
    let aae = load_aae(cfg)?;
    let sd = if cfg.path_sd().exists() {
        Some(DiscriminatorModel::load(cfg.path_sd(), ModelKind::StateDisc)?)
    } else {
        None
    };
    let mut rng = RngStream::new(cfg.seed).substream(TAG_AD);
    let transitions = encoded_transitions(&sae, &ds, meta.train_count.max(1), cfg.augment, &mut rng)?;
    let mixed_pairs = gen_mixed_ad(&transitions, &aae, sd.as_ref())?;
    let positives: Vec<LatentBitVector> = transitions.iter().map(|(s, t)| s.concat(t)).collect();
    let mixed: Vec<LatentBitVector> = mixed_pairs.iter().map(|(s, t)| s.concat(t)).collect();
    let data = PuDataset::new(positives, mixed);
    let model = pu_train(&data, &cfg.ad_config(), ModelKind::ActionDisc, &mut rng)?;
    model.save(cfg.path_ad())?;
    let summary = disc_summary(&model, &data);
    fs::write(
        cfg.out_dir.join("ad_report.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(summary)
}

pub fn load_ad(cfg: &RunConfig) -> Result<DiscriminatorModel> {
    require("ad", &cfg.path_ad())?;
    DiscriminatorModel::load(cfg.path_ad(), ModelKind::ActionDisc)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompileSummary {
    pub num_bits: usize,
    pub actions: usize,
    pub input_transitions: usize,
    pub self_loops: usize,
}

/// Compiles the encoded dataset transitions into a grounded model and
/// emits the PDDL files. The instance comes from the given image pair, or
/// from a freshly sampled walk when none is supplied.
pub fn cmd_compile_ama1(
    cfg: &RunConfig,
    instance_images: Option<(PathBuf, PathBuf)>,
) -> Result<CompileSummary> {
    let domain = cfg.domain()?;
    let ds = load_dataset(cfg)?;
    let sae = load_sae(cfg)?;
    let mut rng = RngStream::new(cfg.seed).substream(TAG_INSTANCE);
    let transitions = encoded_transitions(&sae, &ds, ds.len(), cfg.augment, &mut rng)?;
    let (mut problem, stats) = compile(&transitions)?;

    let pre: Vec<LatentBitVector> = transitions.iter().map(|(s, _)| s.clone()).collect();
    let suc: Vec<LatentBitVector> = transitions.iter().map(|(_, t)| t.clone()).collect();
    save_bitvectors(cfg.path_trans_pre_bits(), &pre)?;
    save_bitvectors(cfg.path_trans_suc_bits(), &suc)?;

    let (init_img, goal_img) = match instance_images {
        Some((i, g)) => (imageio::read_pgm(i)?, imageio::read_pgm(g)?),
        None => {
            let inst = domain.sample_instances(1, 7, &mut rng)?.remove(0);
            (inst.init_image, inst.goal_image)
        }
    };
    problem.set_instance(sae.encode(&init_img)?, sae.encode(&goal_img)?)?;
    let (dom_text, prob_text) = emit_pddl(&problem, &cfg.domain.name(), "latent-instance")?;
    fs::write(cfg.path_domain_pddl(), dom_text)?;
    fs::write(cfg.path_problem_pddl(), prob_text)?;

    let summary = CompileSummary {
        num_bits: problem.num_bits,
        actions: problem.actions.len(),
        input_transitions: stats.input_transitions,
        self_loops: stats.self_loop_ids.len(),
    };
    fs::write(
        cfg.out_dir.join("compile_report.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(summary)
}

/// Rebuilds the compiled model from the encoded transition files.
pub fn load_compiled(cfg: &RunConfig) -> Result<StripsProblem> {
    require("compile-ama1", &cfg.path_trans_pre_bits())?;
    require("compile-ama1", &cfg.path_trans_suc_bits())?;
    let pre = load_bitvectors(cfg.path_trans_pre_bits())?;
    let suc = load_bitvectors(cfg.path_trans_suc_bits())?;
    if pre.len() != suc.len() {
        return Err(Error::Format("transition files disagree on count".into()));
    }
    let transitions: Vec<(LatentBitVector, LatentBitVector)> =
        pre.into_iter().zip(suc).collect();
    Ok(compile(&transitions)?.0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanFile {
    pub domain: DomainSpec,
    pub method: Method,
    pub status: PlanStatus,
    pub plan_length: usize,
    /// Latent states as 0/1 strings, init through goal.
    pub states: Vec<String>,
    pub action_ids: Vec<u32>,
    pub expanded: usize,
    pub generated: usize,
    pub wall_ms: u64,
    /// Ground-truth endpoints when the clean input images classified.
    pub gt_init: Option<PuzzleState>,
    pub gt_goal: Option<PuzzleState>,
}

impl PlanFile {
    pub fn from_result(
        cfg: &RunConfig,
        method: Method,
        result: &PlanResult,
        gt_init: Option<PuzzleState>,
        gt_goal: Option<PuzzleState>,
    ) -> Self {
        PlanFile {
            domain: cfg.domain.clone(),
            method,
            status: result.status,
            plan_length: result.plan_length(),
            states: result.states.iter().map(|s| s.to_string()).collect(),
            action_ids: result.action_ids.clone(),
            expanded: result.expanded,
            generated: result.generated,
            wall_ms: result.wall.as_millis() as u64,
            gt_init,
            gt_goal,
        }
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn bit_states(&self) -> Result<Vec<LatentBitVector>> {
        self.states.iter().map(|s| s.parse()).collect()
    }
}

pub struct SolveOutput {
    pub plan: PlanFile,
    pub plan_path: PathBuf,
    pub strip_path: Option<PathBuf>,
}

pub(crate) fn search_limits(cfg: &RunConfig) -> SearchLimits {
    SearchLimits {
        time: Duration::from_secs(cfg.time_limit_secs),
        max_expansions: cfg.max_expansions.unwrap_or(usize::MAX),
    }
}

pub(crate) fn heuristic_for(cfg: &RunConfig, method: Method) -> Heuristic {
    cfg.heuristic.unwrap_or(match method {
        Method::Ama1 => Heuristic::Blind,
        Method::Ama2 => Heuristic::GoalCount,
    })
}

pub(crate) fn run_search<S: SuccessorFn>(
    succ: &mut S,
    init: &LatentBitVector,
    goal: &LatentBitVector,
    heuristic: Heuristic,
    limits: SearchLimits,
) -> Result<PlanResult> {
    match heuristic {
        Heuristic::Blind => astar(init, goal, succ, |_| 0, limits),
        Heuristic::GoalCount => {
            let g = goal.clone();
            astar(init, goal, succ, move |s| goal_count(s, &g).unwrap_or(usize::MAX), limits)
        }
    }
}

/// Encodes the (optionally corrupted) planning inputs, searches, decodes
/// the plan into an image strip, and writes both artifacts.
pub fn cmd_solve(
    cfg: &RunConfig,
    init_path: &Path,
    goal_path: &Path,
    method: Method,
    noise: NoiseKind,
) -> Result<SolveOutput> {
    let domain = cfg.domain()?;
    let sae = load_sae(cfg)?;
    let init_clean = imageio::read_pgm(init_path)?;
    let goal_clean = imageio::read_pgm(goal_path)?;
    let mut rng = RngStream::new(cfg.seed).substream(TAG_SOLVE);
    let init_img = corrupt_image(&init_clean, noise, &mut rng);
    let goal_img = corrupt_image(&goal_clean, noise, &mut rng);
    let init = sae.encode(&init_img)?;
    let goal = sae.encode(&goal_img)?;
    let limits = search_limits(cfg);
    let heuristic = heuristic_for(cfg, method);

    let result = match method {
        Method::Ama1 => {
            let problem = load_compiled(cfg)?;
            let mut succ = StripsSuccessors::new(problem);
            run_search(&mut succ, &init, &goal, heuristic, limits)?
        }
        Method::Ama2 => {
            let aae = load_aae(cfg)?;
            let ad = load_ad(cfg)?;
            let sd = load_sd(cfg)?;
            let mut succ = Ama2Successors::new(&sae, &aae, Some(&ad), Some(&sd), cfg.succ)?;
            run_search(&mut succ, &init, &goal, heuristic, limits)?
        }
    };

    let gt_init = domain.classify(&init_clean);
    let gt_goal = domain.classify(&goal_clean);
    let plan = PlanFile::from_result(cfg, method, &result, gt_init, gt_goal);
    fs::create_dir_all(&cfg.out_dir)?;
    let plan_path = cfg.out_dir.join("plan.json");
    plan.save(&plan_path)?;

    let strip_path = if result.solved() {
        let frames: Result<Vec<Tensor>> =
            result.states.iter().map(|b| sae.decode(b)).collect();
        let p = cfg.out_dir.join("plan.ppm");
        imageio::write_ppm_strip(&p, &frames?, 2)?;
        Some(p)
    } else {
        None
    };
    Ok(SolveOutput { plan, plan_path, strip_path })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationVerdict {
    pub valid: bool,
    pub reason: String,
}

/// Re-validates a stored plan: decodes every latent state, classifies the
/// images against the domain rules, and replays the move chain.
pub fn cmd_validate(cfg: &RunConfig, plan_path: &Path) -> Result<ValidationVerdict> {
    let plan = PlanFile::load(plan_path)?;
    if plan.status != PlanStatus::Solved {
        return Ok(ValidationVerdict {
            valid: false,
            reason: format!("plan status is {:?}", plan.status),
        });
    }
    let domain = cfg.domain()?;
    let sae = load_sae(cfg)?;
    let bits = plan.bit_states()?;
    let mut states = Vec::with_capacity(bits.len());
    for (i, b) in bits.iter().enumerate() {
        match domain.classify(&sae.decode(b)?) {
            Some(s) => states.push(s),
            None => {
                return Ok(ValidationVerdict {
                    valid: false,
                    reason: format!("decoded state {i} is not recognizable"),
                })
            }
        }
    }
    let (init, goal) = match (&plan.gt_init, &plan.gt_goal) {
        (Some(i), Some(g)) => (i.clone(), g.clone()),
        _ => match (states.first(), states.last()) {
            (Some(i), Some(g)) => (i.clone(), g.clone()),
            _ => {
                return Ok(ValidationVerdict { valid: false, reason: "empty plan".into() });
            }
        },
    };
    if domain.validate_plan(&init, &goal, &states) {
        Ok(ValidationVerdict { valid: true, reason: "plan replays under the domain rules".into() })
    } else {
        Ok(ValidationVerdict {
            valid: false,
            reason: "state sequence violates the domain rules or endpoints".into(),
        })
    }
}

/// Decodes a stored plan into a PPM strip.
pub fn cmd_visualize(cfg: &RunConfig, plan_path: &Path, out_path: &Path) -> Result<()> {
    let plan = PlanFile::load(plan_path)?;
    let sae = load_sae(cfg)?;
    let frames: Result<Vec<Tensor>> = plan
        .bit_states()?
        .iter()
        .map(|b| sae.decode(b))
        .collect();
    imageio::write_ppm_strip(out_path, &frames?, 2)
}

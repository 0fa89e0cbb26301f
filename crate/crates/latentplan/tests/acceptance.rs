//! Acceptance suite: one test per exit criterion, each printing a
//! PASS/FAIL line. Tests are ordered c1..c9; the heavyweight desk-scale
//! models (criteria 5-7, 9) are trained once and shared.
//!
//! Run with:  cargo test -p latentplan --test acceptance -- --nocapture

mod common;

use std::collections::HashMap;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use latentplan::ama1::{compile, step, StripsProblem};
use latentplan::ama2::{
    gen_mixed_ad, gen_mixed_sd, pu_train, train_aae, AaeConfig, AaeModel, DiscriminatorConfig,
    DiscriminatorModel, PuDataset,
};
use latentplan::bits::LatentBitVector;
use latentplan::domains::{Domain, DomainSpec, Instance, PuzzleState};
use latentplan::ndcore::checkpoint::ModelKind;
use latentplan::ndcore::{
    gumbel_max_sample, gumbel_softmax_with_noise, RngStream, Tensor,
};
use latentplan::pipeline::{corrupt_image, NoiseKind};
use latentplan::planner::{
    astar, goal_count, Ama2Successors, PlanResult, SearchLimits, StripsSuccessors, SuccConfig,
    SuccessorFn,
};
use latentplan::sae::{train_sae, SaeConfig, SaeModel};

// ── harness ────────────────────────────────────────────────────────────

fn criterion(number: u32, name: &str, body: impl FnOnce() -> Result<String, String>) {
    match body() {
        Ok(detail) => {
            println!("criterion {number} PASS  {name}  [{detail}]");
        }
        Err(reason) => {
            println!("criterion {number} FAIL  {name}: {reason}");
            panic!("criterion {number} failed: {reason}");
        }
    }
}

fn peak_rss_gib() -> f64 {
    let status = std::fs::read_to_string("/proc/self/status").unwrap_or_default();
    for line in status.lines() {
        if let Some(rest) = line.strip_prefix("VmHWM:") {
            let kb: f64 = rest.trim().trim_end_matches("kB").trim().parse().unwrap_or(0.0);
            return kb / (1024.0 * 1024.0);
        }
    }
    0.0
}

// ── criterion 1: gradient suite ────────────────────────────────────────

#[test]
fn c1_gradient_suite() {
    criterion(1, "finite-difference gradients for every layer kind and both losses", || {
        let started = Instant::now();
        let tol = common::FD_TOLERANCE;
        let seeds = 20u64;

        let mut checks: Vec<(&str, Box<dyn Fn(RngStream) -> latentplan::ndcore::Network>, Vec<usize>)> = Vec::new();
        checks.push(("dense", Box::new(|r| latentplan::ndcore::Network::builder(vec![4], r).dense(5).build()), vec![3, 4]));
        checks.push(("conv2d", Box::new(|r| latentplan::ndcore::Network::builder(vec![2, 5, 6], r).conv2d(3, 3, 3).build()), vec![2, 2, 5, 6]));
        checks.push(("batchnorm", Box::new(|r| latentplan::ndcore::Network::builder(vec![3], r).batchnorm().build()), vec![4, 3]));
        checks.push(("dropout", Box::new(|r| latentplan::ndcore::Network::builder(vec![6], r).dropout(0.4).build()), vec![3, 6]));
        checks.push(("gaussian_noise", Box::new(|r| latentplan::ndcore::Network::builder(vec![5], r).gaussian_noise(0.3).build()), vec![3, 5]));
        checks.push(("relu", Box::new(|r| latentplan::ndcore::Network::builder(vec![6], r).relu().build()), vec![3, 6]));
        checks.push(("tanh", Box::new(|r| latentplan::ndcore::Network::builder(vec![6], r).tanh().build()), vec![3, 6]));
        checks.push(("sigmoid", Box::new(|r| latentplan::ndcore::Network::builder(vec![6], r).sigmoid().build()), vec![3, 6]));
        checks.push((
            "gumbel_softmax",
            Box::new(|r| latentplan::ndcore::Network::builder(vec![6], r).dense(8).gumbel_softmax(4, 2, 1.0).build()),
            vec![3, 6],
        ));
        checks.push(("reshape", Box::new(|r| latentplan::ndcore::Network::builder(vec![12], r).dense(12).reshape(&[3, 4]).build()), vec![2, 12]));

        for (name, build, shape) in &checks {
            for seed in 0..seeds {
                let net = build(RngStream::new(seed * 31 + 7));
                let x = common::offset_input(shape.clone(), seed);
                let r = common::grad_check(&net, &x, None, seed);
                if r.rel_error >= tol {
                    return Err(format!("{name} seed {seed}: rel error {}", r.rel_error));
                }
            }
        }

        // concat needs an auxiliary input
        for seed in 0..seeds {
            let net = latentplan::ndcore::Network::builder(vec![3], RngStream::new(seed + 400))
                .with_aux(4)
                .concat_aux()
                .dense(5)
                .build();
            let x = common::offset_input(vec![2, 3], seed);
            let aux = common::offset_input(vec![2, 4], seed ^ 0xaaaa);
            let r = common::grad_check(&net, &x, Some(&aux), seed);
            if r.rel_error >= tol {
                return Err(format!("concat seed {seed}: rel error {}", r.rel_error));
            }
        }

        // both losses
        for seed in 0..seeds {
            let mut rng = RngStream::new(seed * 13 + 5);
            let n = 12;
            let pred = Tensor::from_vec((0..n).map(|_| rng.uniform_range(0.15, 0.85)).collect());
            let target = Tensor::from_vec((0..n).map(|_| rng.uniform_range(0.0, 1.0)).collect());
            let (_, grad) = latentplan::ndcore::bce_loss_grad(&pred, &target).map_err(|e| e.to_string())?;
            let eps = 1e-3f32;
            let mut diff = 0.0f64;
            let mut norm = 0.0f64;
            for i in 0..n {
                let mut p = pred.clone();
                p.data_mut()[i] += eps;
                let lp = latentplan::ndcore::bce_loss(&p, &target).map_err(|e| e.to_string())?;
                let mut m = pred.clone();
                m.data_mut()[i] -= eps;
                let lm = latentplan::ndcore::bce_loss(&m, &target).map_err(|e| e.to_string())?;
                let numeric = (lp - lm) / (2.0 * eps as f64);
                diff += (grad.data()[i] as f64 - numeric).powi(2);
                norm += numeric * numeric;
            }
            if diff.sqrt() / (norm.sqrt() + 1e-8) >= tol {
                return Err(format!("bce seed {seed}: rel error {}", diff.sqrt() / norm.sqrt()));
            }

            // KL-to-uniform: d/dq sum q log(qM) = log(qM) + 1
            let cats = 4;
            let raw: Vec<f32> = (0..cats).map(|_| rng.uniform_range(0.1, 1.0)).collect();
            let s: f32 = raw.iter().sum();
            let q = Tensor::new(vec![1, cats], raw.iter().map(|v| v / s).collect());
            let mut diff = 0.0f64;
            let mut norm = 0.0f64;
            for i in 0..cats {
                let analytic = ((q.data()[i] * cats as f32) as f64).ln() + 1.0;
                let mut p = q.clone();
                p.data_mut()[i] += eps;
                let lp = latentplan::ndcore::gs_variational_loss(&p);
                let mut m = q.clone();
                m.data_mut()[i] -= eps;
                let lm = latentplan::ndcore::gs_variational_loss(&m);
                let numeric = (lp - lm) / (2.0 * eps as f64);
                diff += (analytic - numeric).powi(2);
                norm += numeric * numeric;
            }
            if diff.sqrt() / (norm.sqrt() + 1e-8) >= tol {
                return Err(format!("variational seed {seed}"));
            }
        }

        let elapsed = started.elapsed();
        if elapsed > Duration::from_secs(120) {
            return Err(format!("took {elapsed:?}, budget is 2 minutes"));
        }
        Ok(format!("20 seeds per layer kind, rel error < 1e-3, {elapsed:?}"))
    });
}

// ── criterion 2: sampler law ───────────────────────────────────────────

#[test]
fn c2_sampler_law() {
    criterion(2, "categorical sampler frequencies and low-temperature argmax", || {
        let pi = [0.1f32, 0.1, 0.8];
        let logpi = Tensor::from_vec(pi.iter().map(|p| p.ln()).collect());
        let mut rng = RngStream::new(90210);
        let n = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[gumbel_max_sample(&logpi, &mut rng).map_err(|e| e.to_string())?] += 1;
        }
        let mut max_dev = 0.0f32;
        for (c, p) in counts.iter().zip(&pi) {
            max_dev = max_dev.max((*c as f32 / n as f32 - p).abs());
        }
        if max_dev >= 0.01 {
            return Err(format!("max frequency deviation {max_dev} over 1e5 draws"));
        }

        let z = gumbel_softmax_with_noise(
            &logpi.reshaped(vec![1, 3]).map_err(|e| e.to_string())?,
            &Tensor::zeros(vec![1, 3]),
            0.01,
        )
        .map_err(|e| e.to_string())?;
        if (z.data()[2] - 1.0).abs() >= 1e-6 || z.data()[0] >= 1e-6 || z.data()[1] >= 1e-6 {
            return Err(format!("zero-noise tau=0.01 output {:?} is not one-hot argmax", z.data()));
        }
        Ok(format!("max deviation {max_dev:.4}, one-hot within 1e-6"))
    });
}

// ── criterion 3: exact symbolic reproduction on the tower domain ───────

fn solve_blind(problem: StripsProblem, init: &LatentBitVector, goal: &LatentBitVector) -> PlanResult {
    let mut succ = StripsSuccessors::new(problem);
    astar(init, goal, &mut succ, |_| 0, SearchLimits::default()).expect("search runs")
}

#[test]
fn c3_tower_symbolic_exact() {
    criterion(3, "compiled tower models reproduce breadth-first optima", || {
        let started = Instant::now();

        // 4 disks: canonical instance solves in exactly 15 steps
        let d4 = Domain::new(DomainSpec::Hanoi { disks: 4 });
        let transitions: Vec<(LatentBitVector, LatentBitVector)> = d4
            .reachable_transitions()
            .map_err(|e| e.to_string())?
            .iter()
            .map(|(s, t)| (d4.gt_encode(s), d4.gt_encode(t)))
            .collect();
        if transitions.len() != 240 {
            return Err(format!("expected 240 directed transitions, got {}", transitions.len()));
        }
        let (problem, _) = compile(&transitions).map_err(|e| e.to_string())?;
        if problem.actions.len() != 240 {
            return Err(format!("expected 240 compiled actions, got {}", problem.actions.len()));
        }
        let start = PuzzleState::Hanoi { pegs: vec![0; 4] };
        let goal = d4.goal_state();
        let r = solve_blind(problem.clone(), &d4.gt_encode(&start), &d4.gt_encode(&goal));
        if !r.solved() || r.plan_length() != 15 {
            return Err(format!("canonical 4-disk instance: status {:?}, {} steps (want 15)", r.status, r.plan_length()));
        }

        // 3 disks: every ordered state pair matches the BFS oracle
        let d3 = Domain::new(DomainSpec::Hanoi { disks: 3 });
        let states = d3.reachable_states().map_err(|e| e.to_string())?;
        if states.len() != 27 {
            return Err(format!("3-disk space has {} states", states.len()));
        }
        let transitions: Vec<(LatentBitVector, LatentBitVector)> = d3
            .reachable_transitions()
            .map_err(|e| e.to_string())?
            .iter()
            .map(|(s, t)| (d3.gt_encode(s), d3.gt_encode(t)))
            .collect();
        let (problem3, _) = compile(&transitions).map_err(|e| e.to_string())?;
        let mut succ = StripsSuccessors::new(problem3);
        let mut checked = 0usize;
        for a in &states {
            let dist = d3.bfs_distances(a).map_err(|e| e.to_string())?;
            for b in &states {
                let optimal = *dist.get(b).ok_or("unreachable pair")? as usize;
                let r = astar(&d3.gt_encode(a), &d3.gt_encode(b), &mut succ, |_| 0, SearchLimits::default())
                    .map_err(|e| e.to_string())?;
                if !r.solved() || r.plan_length() != optimal {
                    return Err(format!("pair {a:?} -> {b:?}: got {} want {optimal}", r.plan_length()));
                }
                checked += 1;
            }
        }

        let elapsed = started.elapsed();
        if elapsed > Duration::from_secs(60) {
            return Err(format!("took {elapsed:?}, budget is 1 minute"));
        }
        Ok(format!("15-step canonical plan; {checked} pairs match the oracle; {elapsed:?}"))
    });
}

// ── criterion 4: hardest sliding-tile instance ─────────────────────────

#[test]
fn c4_hardest_puzzle8_instance() {
    criterion(4, "full sliding-tile enumeration yields the 31-step optimum", || {
        let started = Instant::now();
        let domain = Domain::new(DomainSpec::Puzzle8);
        let goal = domain.goal_state();

        // breadth-first over the reachable half-space
        let dist = domain.bfs_distances(&goal).map_err(|e| e.to_string())?;
        if dist.len() != 181_440 {
            return Err(format!("reachable component has {} states", dist.len()));
        }
        let mut hardest: Option<(PuzzleState, u32)> = None;
        for (s, d) in &dist {
            let better = match &hardest {
                None => true,
                // deterministic pick: deepest, ties to the smallest state
                Some((hs, hd)) => *d > *hd || (*d == *hd && s < hs),
            };
            if better {
                hardest = Some((s.clone(), *d));
            }
        }
        let (hardest, depth) = hardest.ok_or("empty space")?;
        if depth != 31 {
            return Err(format!("eccentricity {depth}, expected 31"));
        }

        // compile every directed transition among reachable states
        let mut transitions = Vec::with_capacity(500_000);
        for s in dist.keys() {
            for t in domain.gt_successors(s).map_err(|e| e.to_string())? {
                transitions.push((domain.gt_encode(s), domain.gt_encode(&t)));
            }
        }
        let (problem, _) = compile(&transitions).map_err(|e| e.to_string())?;
        drop(transitions);

        let r = solve_blind(problem, &domain.gt_encode(&hardest), &domain.gt_encode(&goal));
        if !r.solved() || r.plan_length() != 31 {
            return Err(format!("status {:?}, {} steps (want 31)", r.status, r.plan_length()));
        }

        let elapsed = started.elapsed();
        let peak = peak_rss_gib();
        if elapsed > Duration::from_secs(600) {
            return Err(format!("took {elapsed:?}, budget is 10 minutes"));
        }
        if peak >= 4.0 {
            return Err(format!("peak rss {peak:.2} GiB, budget is 4 GiB"));
        }
        Ok(format!("31 optimal steps, {} expanded, {elapsed:?}, peak rss {peak:.2} GiB", r.expanded))
    });
}

// ── shared desk-scale models (criteria 5-7, 9) ─────────────────────────

const DESK_SEED: u64 = 7;
const DESK_INSTANCES: usize = 20;

struct DeskBase {
    domain: Domain,
    states: Vec<PuzzleState>,
    codes: Vec<LatentBitVector>,
    code_of: HashMap<PuzzleState, usize>,
    sae: SaeModel,
    /// Every directed ground-truth transition as encoded pairs.
    transitions: Vec<(LatentBitVector, LatentBitVector)>,
    problem: StripsProblem,
    instances: Vec<Instance>,
    /// Validated-optimal solve count on the standard condition.
    std_solved: usize,
}

struct DeskLearned {
    aae: AaeModel,
    sd: DiscriminatorModel,
    ad: DiscriminatorModel,
}

fn desk_sae_config() -> SaeConfig {
    SaeConfig {
        latent_bits: 36,
        input_dims: (27, 27),
        epochs: 150,
        batch_size: 128,
        conv_channels: 8,
        fc_width: 400,
        kl_weight: 0.3,
        ..SaeConfig::default()
    }
}

/// Trains (or loads from the developer cache) the desk-scale state
/// autoencoder and prepares the compiled model plus benchmark instances.
fn desk_base() -> &'static DeskBase {
    static BASE: OnceLock<DeskBase> = OnceLock::new();
    BASE.get_or_init(|| {
        let domain = Domain::new(DomainSpec::LightsOut { n: 3 });
        let states = domain.reachable_states().expect("state space");
        assert_eq!(states.len(), 512);
        let (h, w) = domain.image_dims();
        let mut data = Vec::with_capacity(states.len() * h * w);
        for s in &states {
            data.extend_from_slice(domain.render(s).data());
        }
        let images = Tensor::new(vec![states.len(), h, w], data);

        let cache = std::env::var_os("LATENTPLAN_ACCEPT_CACHE").map(std::path::PathBuf::from);
        let cached_sae = cache.as_ref().map(|d| d.join("sae.ckpt")).filter(|p| p.exists());
        let sae = match cached_sae {
            Some(p) => SaeModel::load(&p).expect("cached model"),
            None => {
                let (model, _) = train_sae(
                    &images,
                    &desk_sae_config(),
                    &mut RngStream::new(DESK_SEED).substream(2),
                )
                .expect("sae training");
                if let Some(dir) = &cache {
                    std::fs::create_dir_all(dir).ok();
                    model.save(dir.join("sae.ckpt")).ok();
                }
                model
            }
        };

        let mut codes = Vec::with_capacity(states.len());
        for i in 0..states.len() {
            let img = Tensor::new(vec![h, w], images.row(i).to_vec());
            codes.push(sae.encode(&img).expect("encode"));
        }
        let code_of: HashMap<PuzzleState, usize> =
            states.iter().cloned().zip(0..).collect();

        let mut transitions = Vec::new();
        for (si, s) in states.iter().enumerate() {
            for t in domain.gt_successors(s).expect("successors") {
                transitions.push((codes[si].clone(), codes[code_of[&t]].clone()));
            }
        }
        let (problem, _) = compile(&transitions).expect("compile");

        let instances = domain
            .sample_instances(DESK_INSTANCES, 7, &mut RngStream::new(DESK_SEED).substream(31))
            .expect("instances");

        let mut base = DeskBase {
            domain,
            states,
            codes,
            code_of,
            sae,
            transitions,
            problem,
            instances,
            std_solved: 0,
        };
        base.std_solved = run_ama1_condition(&base, NoiseKind::None).0;
        base
    })
}

/// Solves the shared instances through the compiled model under a noise
/// condition. Returns (validated optimal count, per-instance detail).
fn run_ama1_condition(base: &DeskBase, noise: NoiseKind) -> (usize, Vec<String>) {
    let mut succ = StripsSuccessors::new(base.problem.clone());
    let mut rng = RngStream::new(DESK_SEED).substream(0xc0ffee ^ noise as u64);
    let mut ok = 0usize;
    let mut detail = Vec::new();
    for (i, inst) in base.instances.iter().enumerate() {
        let init_img = corrupt_image(&inst.init_image, noise, &mut rng);
        let goal_img = corrupt_image(&inst.goal_image, noise, &mut rng);
        let init = base.sae.encode(&init_img).expect("encode");
        let goal = base.sae.encode(&goal_img).expect("encode");
        let r = astar(&init, &goal, &mut succ, |_| 0, SearchLimits::default()).expect("search");
        if !r.solved() {
            detail.push(format!("instance {i}: {:?}", r.status));
            continue;
        }
        let optimal = base
            .domain
            .bfs_distance(&inst.init, &inst.goal)
            .expect("bfs")
            .expect("reachable") as usize;
        if r.plan_length() != optimal {
            detail.push(format!("instance {i}: length {} vs optimal {optimal}", r.plan_length()));
            continue;
        }
        let frames: Vec<Tensor> = r
            .states
            .iter()
            .map(|b| base.sae.decode(b).expect("decode"))
            .collect();
        if base.domain.validate_image_plan(&inst.init, &inst.goal, &frames) {
            ok += 1;
        } else {
            detail.push(format!("instance {i}: decoded plan failed validation"));
        }
    }
    (ok, detail)
}

fn desk_learned() -> &'static DeskLearned {
    static LEARNED: OnceLock<DeskLearned> = OnceLock::new();
    LEARNED.get_or_init(|| {
        let base = desk_base();
        let cache = std::env::var_os("LATENTPLAN_ACCEPT_CACHE").map(std::path::PathBuf::from);

        let aae_cfg = AaeConfig {
            latent_bits: 36,
            epochs: 300,
            batch_size: 256,
            fc_width: 400,
            ..AaeConfig::default()
        };
        let cached = cache.as_ref().map(|d| d.join("aae.ckpt")).filter(|p| p.exists());
        let aae = match cached {
            Some(p) => AaeModel::load(&p).expect("cached aae"),
            None => {
                let (model, report) = train_aae(
                    &base.transitions,
                    &aae_cfg,
                    &mut RngStream::new(DESK_SEED).substream(3),
                )
                .expect("aae training");
                println!(
                    "  [desk aae: roundtrip {:.3}, {} labels]",
                    report.roundtrip_accuracy, report.used_label_count
                );
                if let Some(dir) = &cache {
                    model.save(dir.join("aae.ckpt")).ok();
                }
                model
            }
        };

        let mut rng = RngStream::new(DESK_SEED).substream(4);
        let positives: Vec<LatentBitVector> = {
            let mut v: Vec<LatentBitVector> = base.codes.clone();
            v.extend(base.transitions.iter().map(|(_, t)| t.clone()));
            v
        };
        let cached_sd = cache.as_ref().map(|d| d.join("sd.ckpt")).filter(|p| p.exists());
        let sd = match cached_sd {
            Some(p) => DiscriminatorModel::load(&p, ModelKind::StateDisc).expect("cached sd"),
            None => {
                let mixed = gen_mixed_sd(&base.sae, positives.len() * 4, 2, &mut rng).expect("mixed states");
                let data = PuDataset::new(positives.clone(), mixed);
                let cfg = DiscriminatorConfig {
                    epochs: 600,
                    patience: 50,
                    ..DiscriminatorConfig::state_default(36)
                };
                let model = pu_train(&data, &cfg, ModelKind::StateDisc, &mut rng).expect("sd training");
                if let Some(dir) = &cache {
                    model.save(dir.join("sd.ckpt")).ok();
                }
                model
            }
        };

        let cached_ad = cache.as_ref().map(|d| d.join("ad.ckpt")).filter(|p| p.exists());
        let ad = match cached_ad {
            Some(p) => DiscriminatorModel::load(&p, ModelKind::ActionDisc).expect("cached ad"),
            None => {
                let mixed_pairs = gen_mixed_ad(&base.transitions, &aae, Some(&sd)).expect("mixed pairs");
                let pos_pairs: Vec<LatentBitVector> =
                    base.transitions.iter().map(|(s, t)| s.concat(t)).collect();
                let mixed: Vec<LatentBitVector> =
                    mixed_pairs.iter().map(|(s, t)| s.concat(t)).collect();
                let data = PuDataset::new(pos_pairs, mixed);
                let cfg = DiscriminatorConfig {
                    epochs: 300,
                    patience: 25,
                    ..DiscriminatorConfig::action_default(36)
                };
                let model = pu_train(&data, &cfg, ModelKind::ActionDisc, &mut rng).expect("ad training");
                if let Some(dir) = &cache {
                    model.save(dir.join("ad.ckpt")).ok();
                }
                model
            }
        };

        DeskLearned { aae, sd, ad }
    })
}

// ── criterion 5: end-to-end compiled pipeline at desk scale ────────────

#[test]
fn c5_end_to_end_compiled_desk() {
    criterion(5, "trained encoder + compiled model solve 20 instances optimally", || {
        let started = Instant::now();
        let base = desk_base();
        let (ok, detail) = (base.std_solved, run_ama1_condition(base, NoiseKind::None).1);
        let need = (DESK_INSTANCES as f64 * 0.95).ceil() as usize;
        if ok < need {
            return Err(format!("{ok}/{DESK_INSTANCES} validated optimal plans (need {need}): {detail:?}"));
        }
        let elapsed = started.elapsed();
        if elapsed > Duration::from_secs(1800) {
            return Err(format!("took {elapsed:?}, budget is 30 minutes"));
        }
        Ok(format!("{ok}/{DESK_INSTANCES} instances validated at optimal length, {elapsed:?}"))
    });
}

// ── criterion 6: end-to-end learned pipeline at desk scale ─────────────

#[test]
fn c6_end_to_end_learned_desk() {
    criterion(6, "learned action model solves the benchmark with low discriminator error", || {
        let base = desk_base();
        let learned = desk_learned();

        // discriminator error bounds over the full ground truth
        let sd_scores = learned.sd.scores(&base.codes).map_err(|e| e.to_string())?;
        let sd_type1 =
            sd_scores.iter().filter(|v| **v < 0.5).count() as f64 / sd_scores.len() as f64;
        if sd_type1 >= 0.01 {
            return Err(format!("state discriminator type-1 error {sd_type1:.4} (need < 0.01)"));
        }
        let pairs: Vec<LatentBitVector> =
            base.transitions.iter().map(|(s, t)| s.concat(t)).collect();
        let ad_scores = learned.ad.scores(&pairs).map_err(|e| e.to_string())?;
        let ad_type1 =
            ad_scores.iter().filter(|v| **v < 0.5).count() as f64 / ad_scores.len() as f64;
        if ad_type1 >= 0.05 {
            return Err(format!("action discriminator type-1 error {ad_type1:.4} (need < 0.05)"));
        }

        // benchmark protocol: 100 instances, 7-step walks, 180 s limit
        let domain = &base.domain;
        let instances = domain
            .sample_instances(100, 7, &mut RngStream::new(DESK_SEED).substream(61))
            .map_err(|e| e.to_string())?;
        let mut succ = Ama2Successors::new(
            &base.sae,
            &learned.aae,
            Some(&learned.ad),
            Some(&learned.sd),
            SuccConfig::default(),
        )
        .map_err(|e| e.to_string())?;
        let limits = SearchLimits { time: Duration::from_secs(180), max_expansions: usize::MAX };
        let mut solved = 0usize;
        for inst in &instances {
            let init = base.sae.encode(&inst.init_image).map_err(|e| e.to_string())?;
            let goal = base.sae.encode(&inst.goal_image).map_err(|e| e.to_string())?;
            let g = goal.clone();
            let r = astar(&init, &goal, &mut succ, |s| goal_count(s, &g).unwrap_or(usize::MAX), limits)
                .map_err(|e| e.to_string())?;
            if !r.solved() {
                continue;
            }
            let frames: Result<Vec<Tensor>, _> =
                r.states.iter().map(|b| base.sae.decode(b)).collect();
            let frames = frames.map_err(|e| e.to_string())?;
            if domain.validate_image_plan(&inst.init, &inst.goal, &frames) {
                solved += 1;
            }
        }
        if solved < 80 {
            return Err(format!("{solved}/100 validated plans (need >= 80)"));
        }
        Ok(format!(
            "{solved}/100 benchmark instances; sd type-1 {sd_type1:.4}, ad type-1 {ad_type1:.4}"
        ))
    });
}

// ── criterion 7: noise robustness ──────────────────────────────────────

#[test]
fn c7_noise_robustness() {
    criterion(7, "corrupted planning inputs keep the compiled solve rate", || {
        let base = desk_base();
        let baseline = base.std_solved;
        if baseline == 0 {
            return Err("standard condition solved nothing; robustness undefined".into());
        }
        let need = ((baseline as f64) * 0.9).ceil() as usize;
        let (gauss, gdetail) = run_ama1_condition(base, NoiseKind::Gaussian);
        if gauss < need {
            return Err(format!("gaussian: {gauss}/{DESK_INSTANCES} vs baseline {baseline} (need {need}): {gdetail:?}"));
        }
        let (sp, spdetail) = run_ama1_condition(base, NoiseKind::SaltPepper);
        if sp < need {
            return Err(format!("salt/pepper: {sp}/{DESK_INSTANCES} vs baseline {baseline} (need {need}): {spdetail:?}"));
        }
        Ok(format!("baseline {baseline}, gaussian {gauss}, salt/pepper {sp} (floor {need})"))
    });
}

// ── criterion 8: positive/unlabeled calibration sanity ─────────────────

#[test]
fn c8_pu_learning_sanity() {
    criterion(8, "planted-parity task: calibrated scores classify and preserve ranking", || {
        // parity of 8 planted bits inside 16-bit vectors
        let planted = 8usize;
        let width = 16usize;
        let mut rng = RngStream::new(4242);
        let parity = |v: &LatentBitVector| -> bool {
            (0..planted).fold(false, |acc, j| acc ^ v.get(j))
        };
        let draw = |rng: &mut RngStream| -> LatentBitVector {
            LatentBitVector::from_bools(&(0..width).map(|_| rng.uniform() < 0.5).collect::<Vec<_>>())
        };
        let mut positives = Vec::new();
        while positives.len() < 4000 {
            let v = draw(&mut rng);
            if !parity(&v) {
                positives.push(v);
            }
        }
        // mixed: half true positives, half negatives
        let mut mixed = Vec::new();
        while mixed.len() < 2000 {
            let v = draw(&mut rng);
            if (mixed.len() % 2 == 0) != parity(&v) {
                continue;
            }
            mixed.push(v);
        }
        let data = PuDataset::new(positives, mixed);
        let cfg = DiscriminatorConfig {
            input_bits: width,
            epochs: 400,
            batch_size: 256,
            patience: 40,
            ..DiscriminatorConfig::action_default(width / 2)
        };
        let model = pu_train(&data, &cfg, ModelKind::ActionDisc, &mut rng).map_err(|e| e.to_string())?;

        let c = model.calibration();
        if !(c > 0.0 && c <= 1.0) {
            return Err(format!("calibration constant {c} outside (0, 1]"));
        }

        // labeled evaluation set
        let eval: Vec<LatentBitVector> = (0..2000).map(|_| draw(&mut rng)).collect();
        let labels: Vec<bool> = eval.iter().map(|v| !parity(v)).collect();
        let cal = model.scores(&eval).map_err(|e| e.to_string())?;
        let raw = model.raw_scores(&eval).map_err(|e| e.to_string())?;
        let correct = cal
            .iter()
            .zip(&labels)
            .filter(|(s, l)| (**s >= 0.5) == **l)
            .count();
        let accuracy = correct as f64 / eval.len() as f64;
        if accuracy < 0.95 {
            return Err(format!("calibrated accuracy {accuracy:.4} (need >= 0.95)"));
        }

        // positive scaling preserves the ranking
        let mut by_raw: Vec<usize> = (0..eval.len()).collect();
        by_raw.sort_by(|&a, &b| raw[a].partial_cmp(&raw[b]).unwrap().then(a.cmp(&b)));
        let mut by_cal: Vec<usize> = (0..eval.len()).collect();
        by_cal.sort_by(|&a, &b| cal[a].partial_cmp(&cal[b]).unwrap().then(a.cmp(&b)));
        if by_raw != by_cal {
            return Err("calibration reordered the score ranking".into());
        }
        Ok(format!("accuracy {accuracy:.4}, c {c:.3}, ranking preserved"))
    });
}

// ── criterion 9: headless invariant suites ─────────────────────────────

#[test]
fn c9_invariant_suites() {
    criterion(9, "step soundness, filter monotonicity, plan replay, determinism", || {
        let base = desk_base();
        let learned = desk_learned();

        // STRIPS soundness over every compiled transition
        for action in &base.problem.actions {
            let t = step(&action.pre, action).map_err(|e| e.to_string())?;
            if t != action.post() {
                return Err(format!("action {} violates step soundness", action.id));
            }
            if !base
                .transitions
                .iter()
                .any(|(s, u)| *s == action.pre && *u == t)
            {
                return Err(format!("action {} not backed by a recorded transition", action.id));
            }
        }

        // filter monotonicity: enabling filters never enlarges the output
        let sample_states: Vec<&LatentBitVector> = base.codes.iter().step_by(37).collect();
        let configs = [
            SuccConfig::no_filters(),
            SuccConfig { use_ad: true, ..SuccConfig::no_filters() },
            SuccConfig { use_ad: true, use_sd: true, ..SuccConfig::no_filters() },
            SuccConfig {
                use_ad: true,
                use_sd: true,
                use_aae_stability: true,
                ..SuccConfig::no_filters()
            },
            SuccConfig::default(),
        ];
        for s in sample_states {
            let mut prev = usize::MAX;
            for cfg in &configs {
                let mut succ = Ama2Successors::new(
                    &base.sae,
                    &learned.aae,
                    Some(&learned.ad),
                    Some(&learned.sd),
                    *cfg,
                )
                .map_err(|e| e.to_string())?;
                let n = succ.successors(s).map_err(|e| e.to_string())?.len();
                if n > prev {
                    return Err(format!("enabling a filter grew the successor set {prev} -> {n}"));
                }
                prev = n;
            }
            // the unfiltered fan is bounded by the used labels
            let mut unfiltered = Ama2Successors::new(
                &base.sae,
                &learned.aae,
                None,
                None,
                SuccConfig::no_filters(),
            )
            .map_err(|e| e.to_string())?;
            let n = unfiltered.successors(s).map_err(|e| e.to_string())?.len();
            if n > learned.aae.used_labels().len() {
                return Err("successor fan exceeds the used label count".into());
            }
        }

        // plan replay: a solved plan replays through the successor function
        let inst = &base.instances[0];
        let init = base.codes[base.code_of[&inst.init]].clone();
        let goal = base.codes[base.code_of[&inst.goal]].clone();
        let mut succ = StripsSuccessors::new(base.problem.clone());
        let r = astar(&init, &goal, &mut succ, |_| 0, SearchLimits::default())
            .map_err(|e| e.to_string())?;
        if !r.solved() {
            return Err("replay instance did not solve".into());
        }
        let mut cur = init.clone();
        for (i, aid) in r.action_ids.iter().enumerate() {
            let step_to = succ
                .successors(&cur)
                .map_err(|e| e.to_string())?
                .into_iter()
                .find(|(id, _)| id == aid);
            match step_to {
                Some((_, next)) if next == r.states[i + 1] => cur = next,
                _ => return Err(format!("plan does not replay at step {i}")),
            }
        }
        if cur != goal {
            return Err("replayed plan does not end at the goal".into());
        }

        // determinism: dataset bytes and micro-training trajectories
        let render_twice_identical = {
            let a = base.domain.render(&base.states[100]);
            let b = base.domain.render(&base.states[100]);
            a.data() == b.data()
        };
        if !render_twice_identical {
            return Err("rendering is not deterministic".into());
        }
        let micro = SaeConfig {
            latent_bits: 8,
            input_dims: (9, 9),
            epochs: 4,
            batch_size: 8,
            conv_channels: 3,
            fc_width: 24,
            ..SaeConfig::default()
        };
        let mut imgs = vec![0.0f32; 8 * 81];
        for (i, chunk) in imgs.chunks_mut(81).enumerate() {
            chunk[i * 9] = 1.0;
            chunk[i * 9 + 1] = 1.0;
        }
        let images = Tensor::new(vec![8, 9, 9], imgs);
        let (m1, r1) = train_sae(&images, &micro, &mut RngStream::new(3)).map_err(|e| e.to_string())?;
        let (m2, r2) = train_sae(&images, &micro, &mut RngStream::new(3)).map_err(|e| e.to_string())?;
        if r1.recon_history != r2.recon_history {
            return Err("training trajectories diverged under a fixed seed".into());
        }
        let probe = Tensor::new(vec![9, 9], images.row(3).to_vec());
        if m1.encode(&probe).map_err(|e| e.to_string())?
            != m2.encode(&probe).map_err(|e| e.to_string())?
        {
            return Err("trained encoders diverged under a fixed seed".into());
        }

        // the encoded-state invariant: hard bits, and the stability rate
        // the mixed-state generator relies on
        let stable = {
            let back = base.sae.autoencode_bits(&base.codes).map_err(|e| e.to_string())?;
            base.codes.iter().zip(&back).filter(|(a, b)| a == b).count()
        };
        if (stable as f64) < 0.99 * base.codes.len() as f64 {
            return Err(format!("encode/decode stability {stable}/512 below 99%"));
        }

        Ok(format!(
            "soundness over {} actions; monotone filters; replay; determinism; stability {stable}/512",
            base.problem.actions.len()
        ))
    });
}

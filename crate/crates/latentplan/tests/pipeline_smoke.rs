//! End-to-end pipeline exercise on the smallest lights-out board: every
//! stage runs through the filesystem exactly as the CLI drives it.

use std::path::PathBuf;
use std::process::Command;

use latentplan::ama2::{AaeConfig, DiscArch, DiscriminatorConfig};
use latentplan::domains::{imageio, Domain, DomainSpec};
use latentplan::pipeline::{
    self, Benchmark, Method, NoiseKind, PlanFile, RunConfig,
};
use latentplan::planner::PlanStatus;
use latentplan::sae::SaeConfig;

fn micro_config(out: PathBuf) -> RunConfig {
    let mut cfg = RunConfig::new(DomainSpec::LightsOut { n: 2 });
    cfg.seed = 11;
    cfg.out_dir = out;
    cfg.transitions = None; // all 64 directed transitions
    cfg.instances = 5;
    cfg.time_limit_secs = 30;
    cfg.sae = Some(SaeConfig {
        latent_bits: 12,
        input_dims: (18, 18),
        epochs: 80,
        batch_size: 32,
        conv_channels: 4,
        fc_width: 96,
        kl_weight: 0.3,
        ..SaeConfig::default()
    });
    cfg.aae = Some(AaeConfig {
        latent_bits: 12,
        labels: 24,
        epochs: 150,
        batch_size: 64,
        fc_width: 64,
        ..AaeConfig::default()
    });
    cfg.sd = Some(DiscriminatorConfig {
        input_bits: 12,
        epochs: 60,
        batch_size: 64,
        patience: 15,
        lr: 0.0001,
        archs: DiscArch::state_default(),
        ..DiscriminatorConfig::default()
    });
    cfg.ad = Some(DiscriminatorConfig {
        input_bits: 24,
        epochs: 40,
        batch_size: 128,
        patience: 10,
        archs: vec![
            DiscArch { width: 64, blocks: 1, dropout: 0.5 },
            DiscArch { width: 64, blocks: 2, dropout: 0.5 },
        ],
        ..DiscriminatorConfig::default()
    });
    cfg
}

#[test]
fn full_pipeline_runs_and_stays_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = micro_config(dir.path().join("run"));

    // dataset generation is byte-deterministic
    let meta = pipeline::cmd_gen_data(&cfg).unwrap();
    assert_eq!(meta.transition_count, 64);
    assert_eq!(meta.train_count, 57);
    let first = std::fs::read(cfg.path_pre_images()).unwrap();
    pipeline::cmd_gen_data(&cfg).unwrap();
    assert_eq!(first, std::fs::read(cfg.path_pre_images()).unwrap());

    // training stages write their checkpoints and reports
    let sae_report = pipeline::cmd_train_sae(&cfg).unwrap();
    assert!(sae_report.final_recon_loss.is_finite());
    assert!(cfg.path_sae().exists());

    let aae_report = pipeline::cmd_train_aae(&cfg).unwrap();
    assert!(aae_report.used_label_count > 0);
    assert!(cfg.path_aae().exists());

    let sd = pipeline::cmd_train_sd(&cfg).unwrap();
    assert!(sd.calibration > 0.0 && sd.calibration <= 1.0);
    let ad = pipeline::cmd_train_ad(&cfg).unwrap();
    assert!(ad.calibration > 0.0 && ad.calibration <= 1.0);

    // compilation emits deterministic PDDL and the transition codes
    let summary = pipeline::cmd_compile_ama1(&cfg, None).unwrap();
    assert!(summary.actions > 0);
    assert!(summary.actions <= 64);
    let domain_text = std::fs::read_to_string(cfg.path_domain_pddl()).unwrap();
    assert!(domain_text.contains("(:requirements :strips)"));
    pipeline::cmd_compile_ama1(&cfg, None).unwrap();
    assert_eq!(
        domain_text,
        std::fs::read_to_string(cfg.path_domain_pddl()).unwrap()
    );

    // solve from rendered endpoint images (2 presses apart)
    let domain = Domain::new(cfg.domain.clone());
    let goal = domain.goal_state();
    let succs = domain.gt_successors(&goal).unwrap();
    let mid = succs[0].clone();
    let init = domain
        .gt_successors(&mid)
        .unwrap()
        .into_iter()
        .find(|s| *s != goal)
        .unwrap();
    let init_path = dir.path().join("init.pgm");
    let goal_path = dir.path().join("goal.pgm");
    imageio::write_pgm(&init_path, &domain.render(&init)).unwrap();
    imageio::write_pgm(&goal_path, &domain.render(&goal)).unwrap();

    let out = pipeline::cmd_solve(&cfg, &init_path, &goal_path, Method::Ama1, NoiseKind::None)
        .unwrap();
    assert!(out.plan_path.exists());
    if out.plan.status == PlanStatus::Solved {
        assert!(out.strip_path.is_some());
        // stored plan re-validates; a tampered copy does not
        let verdict = pipeline::cmd_validate(&cfg, &out.plan_path).unwrap();
        if verdict.valid && out.plan.plan_length >= 2 {
            let mut tampered = PlanFile::load(&out.plan_path).unwrap();
            tampered.states.swap(0, 1);
            let tpath = dir.path().join("tampered.json");
            tampered.save(&tpath).unwrap();
            let tv = pipeline::cmd_validate(&cfg, &tpath).unwrap();
            assert!(!tv.valid, "tampered plan accepted");
        }
        // visualization decodes the stored plan
        let strip = dir.path().join("strip.ppm");
        pipeline::cmd_visualize(&cfg, &out.plan_path, &strip).unwrap();
        assert!(strip.exists());
    }

    // the learned-model solver runs under the same interface
    let out2 = pipeline::cmd_solve(&cfg, &init_path, &goal_path, Method::Ama2, NoiseKind::None)
        .unwrap();
    assert!(out2.plan_path.exists());

    // evaluation writes a report whose solved rows have validating plans
    let report = pipeline::cmd_eval(&cfg, Method::Ama1, Benchmark::A, NoiseKind::None).unwrap();
    assert_eq!(report.instances.len(), 5);
    assert!(report.solved <= 5);
    assert!(report.search_solved >= report.solved);
    for row in &report.instances {
        if row.status == PlanStatus::Solved && row.valid {
            let plan_path = cfg.plans_dir().join(format!("inst_{:03}.json", row.id));
            let v = pipeline::cmd_validate(&cfg, &plan_path).unwrap();
            assert!(v.valid, "instance {} stored plan fails validation", row.id);
        }
    }

    // stage isolation: solving again does not alter checkpoints
    let sae_bytes = std::fs::read(cfg.path_sae()).unwrap();
    pipeline::cmd_solve(&cfg, &init_path, &goal_path, Method::Ama1, NoiseKind::None).unwrap();
    assert_eq!(sae_bytes, std::fs::read(cfg.path_sae()).unwrap());
}

#[test]
fn cli_binary_reports_and_fails_cleanly() {
    let bin = env!("CARGO_BIN_EXE_latentplan");
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");

    // gen-data through the binary
    let ok = Command::new(bin)
        .args(["gen-data", "--domain", "lightsout2", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(out.join("pre.lpt").exists());

    // missing checkpoint: operational failure, nonzero exit, stage named
    let missing = Command::new(bin)
        .args(["train-aae", "--domain", "lightsout2", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(!missing.status.success());
    let stderr = String::from_utf8_lossy(&missing.stderr);
    assert!(stderr.contains("sae"), "stderr: {stderr}");

    // unknown domain is rejected
    let bad = Command::new(bin)
        .args(["gen-data", "--domain", "nonsense9"])
        .output()
        .unwrap();
    assert!(!bad.status.success());
}

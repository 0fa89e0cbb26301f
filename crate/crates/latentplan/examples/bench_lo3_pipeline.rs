use latentplan::ama2::AaeConfig;
use latentplan::domains::{Domain, DomainSpec};
use latentplan::ndcore::{RngStream, Tensor};
use latentplan::pipeline::{self, RunConfig};
use latentplan::sae::{train_sae, SaeConfig};
use std::path::PathBuf;
use std::time::Instant;

fn lo3_config(out: PathBuf) -> RunConfig {
    let mut cfg = RunConfig::new(DomainSpec::LightsOut { n: 3 });
    cfg.seed = 7;
    cfg.out_dir = out;
    cfg.transitions = None;
    cfg
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let stage = args.get(1).map(|s| s.as_str()).unwrap_or("all");
    let out = PathBuf::from("/tmp/lo3_cache");
    let mut cfg = lo3_config(out.clone());

    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(120);
    let width: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(200);
    let batch: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(256);
    let tau0: f32 = std::env::var("TAU0").ok().and_then(|v| v.parse().ok()).unwrap_or(5.0);
    cfg.aae = Some(AaeConfig {
        tau0,
        latent_bits: 36,
        epochs,
        batch_size: batch,
        fc_width: width,
        ..AaeConfig::default()
    });

    match stage {
        "gen" => {
            let t = Instant::now();
            let meta = pipeline::cmd_gen_data(&cfg).unwrap();
            println!("gen: {} transitions in {:.0}s", meta.transition_count, t.elapsed().as_secs_f32());
        }
        "sae" => {
            // criterion-style: train on the 512 unique state renderings
            let t = Instant::now();
            let domain = Domain::new(cfg.domain.clone());
            let states = domain.reachable_states().unwrap();
            let (h, w) = domain.image_dims();
            let mut data = Vec::new();
            for s in &states {
                data.extend_from_slice(domain.render(s).data());
            }
            let images = Tensor::new(vec![states.len(), h, w], data);
            let sae_cfg = SaeConfig {
                latent_bits: 36,
                input_dims: (h, w),
                epochs: 150,
                batch_size: 128,
                conv_channels: 8,
                fc_width: 400,
                kl_weight: 0.3,
                ..SaeConfig::default()
            };
            let (model, r) =
                train_sae(&images, &sae_cfg, &mut RngStream::new(cfg.seed).substream(2)).unwrap();
            std::fs::create_dir_all(&cfg.out_dir).unwrap();
            model.save(cfg.path_sae()).unwrap();
            println!("sae: loss {:.4} in {:.0}s", r.final_recon_loss, t.elapsed().as_secs_f32());
        }
        "sd" => {
            let t = Instant::now();
            let r = pipeline::cmd_train_sd(&cfg).unwrap();
            println!(
                "sd: c {:.3} val-acc {:.3} pos {} mixed {} in {:.0}s",
                r.calibration, r.validation_accuracy, r.positives, r.mixed, t.elapsed().as_secs_f32()
            );
        }
        "ad" => {
            let t = Instant::now();
            let r = pipeline::cmd_train_ad(&cfg).unwrap();
            println!(
                "ad: c {:.3} val-acc {:.3} arch w{} b{} d{} pos {} mixed {} in {:.0}s",
                r.calibration, r.validation_accuracy, r.arch_width, r.arch_blocks, r.arch_dropout,
                r.positives, r.mixed, t.elapsed().as_secs_f32()
            );
        }
        "eval" => {
            use latentplan::pipeline::{Benchmark, Method, NoiseKind};
            let t = Instant::now();
            let r = pipeline::cmd_eval(&cfg, Method::Ama2, Benchmark::A, NoiseKind::None).unwrap();
            println!(
                "eval ama2 A std: solved {}/{} (search {}) in {:.0}s",
                r.solved, r.instances.len(), r.search_solved, t.elapsed().as_secs_f32()
            );
            if let Some(d) = &r.discriminator_errors {
                println!(
                    "  sd t1 {:.4} t2 {:?} | ad t1 {:.4} t2 {:?} t2/sd {:?} t2/v {:?}",
                    d.sd_type1, d.sd_type2, d.ad_type1, d.ad_type2, d.ad_type2_sd, d.ad_type2_valid_state
                );
            }
        }
        "aae" => {
            let t = Instant::now();
            let r = pipeline::cmd_train_aae(&cfg).unwrap();
            println!(
                "aae e{epochs} w{width} b{batch}: loss {:.4} roundtrip {:.4} used {} in {:.0}s",
                r.final_loss, r.roundtrip_accuracy, r.used_label_count, t.elapsed().as_secs_f32()
            );
        }
        other => {
            eprintln!("unknown stage {other}");
        }
    }
}

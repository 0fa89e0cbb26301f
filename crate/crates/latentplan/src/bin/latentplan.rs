//! Pipeline driver: dataset generation, training, compilation, solving,
//! evaluation and visualization as composable subcommands.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use latentplan::domains::DomainSpec;
use latentplan::pipeline::{
    self, Benchmark, Method, NoiseKind, RunConfig,
};

#[derive(Parser)]
#[command(name = "latentplan", version, about = "plan in a learned propositional latent space")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Overrides the configured domain (puzzle8, lightsout<N>,
    /// twisted<N>, hanoi<D>).
    #[arg(long, global = true)]
    domain: Option<String>,

    /// Overrides the planning time limit in seconds.
    #[arg(long, global = true)]
    time_limit: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Renders transition image pairs for the configured domain.
    GenData,
    /// Trains the state autoencoder on the generated dataset.
    TrainSae,
    /// Trains the action autoencoder on encoded transitions.
    TrainAae,
    /// Trains the state discriminator.
    TrainSd,
    /// Trains the action discriminator.
    TrainAd,
    /// Compiles encoded transitions into grounded PDDL files.
    CompileAma1 {
        /// Initial-state image (PGM); sampled when omitted.
        #[arg(long)]
        init: Option<PathBuf>,
        /// Goal-state image (PGM); sampled when omitted.
        #[arg(long)]
        goal: Option<PathBuf>,
    },
    /// Plans between two images and writes plan.json plus an image strip.
    Solve {
        #[arg(long)]
        init: PathBuf,
        #[arg(long)]
        goal: PathBuf,
        #[arg(long, value_enum, default_value = "ama2")]
        method: Method,
        #[arg(long, value_enum, default_value = "none")]
        noise: NoiseKind,
    },
    /// Runs the benchmark protocol and writes an evaluation report.
    Eval {
        #[arg(long, value_enum, default_value = "ama2")]
        method: Method,
        #[arg(long, value_enum, default_value = "a")]
        benchmark: Benchmark,
        #[arg(long, value_enum, default_value = "none")]
        noise: NoiseKind,
    },
    /// Re-validates a stored plan against the domain rules.
    Validate {
        #[arg(long)]
        plan: PathBuf,
    },
    /// Decodes a stored plan into a PPM strip.
    Visualize {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
}

fn parse_domain(name: &str) -> Result<DomainSpec, String> {
    let name = name.to_lowercase();
    if name == "puzzle8" {
        return Ok(DomainSpec::Puzzle8);
    }
    if let Some(n) = name.strip_prefix("lightsout") {
        let n: u8 = n.parse().map_err(|_| format!("bad lights-out size in `{name}`"))?;
        return Ok(DomainSpec::LightsOut { n });
    }
    if let Some(n) = name.strip_prefix("twisted") {
        let n: u8 = n.parse().map_err(|_| format!("bad twisted size in `{name}`"))?;
        return Ok(DomainSpec::TwistedLightsOut { n, strength: 3.0 });
    }
    if let Some(d) = name.strip_prefix("hanoi") {
        let disks: u8 = d.parse().map_err(|_| format!("bad disk count in `{name}`"))?;
        return Ok(DomainSpec::Hanoi { disks });
    }
    Err(format!("unknown domain `{name}`"))
}

fn effective_config(cli: &Cli) -> Result<RunConfig, String> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(|e| format!("loading {}: {e}", path.display()))?,
        None => {
            let domain = cli
                .domain
                .as_deref()
                .ok_or("either --config or --domain is required")?;
            RunConfig::new(parse_domain(domain)?)
        }
    };
    if let Some(d) = &cli.domain {
        cfg.domain = parse_domain(d)?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    if let Some(t) = cli.time_limit {
        cfg.time_limit_secs = t;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), String> {
    pipeline::configure_threads_from_env();
    let cfg = effective_config(&cli)?;
    let fail = |e: latentplan::Error| e.to_string();

    match &cli.command {
        Command::GenData => {
            let meta = pipeline::cmd_gen_data(&cfg).map_err(fail)?;
            println!(
                "wrote {} transition pairs ({}x{}) to {}",
                meta.transition_count,
                meta.image_dims.0,
                meta.image_dims.1,
                cfg.out_dir.display()
            );
        }
        Command::TrainSae => {
            let report = pipeline::cmd_train_sae(&cfg).map_err(fail)?;
            println!(
                "sae trained: {} epochs, reconstruction loss {:.5}",
                report.epochs_run, report.final_recon_loss
            );
        }
        Command::TrainAae => {
            let report = pipeline::cmd_train_aae(&cfg).map_err(fail)?;
            println!(
                "aae trained: loss {:.5}, roundtrip {:.1}%, {} labels used",
                report.final_loss,
                report.roundtrip_accuracy * 100.0,
                report.used_label_count
            );
            if let Some(w) = &report.warning {
                eprintln!("warning: {w}");
            }
        }
        Command::TrainSd => {
            let s = pipeline::cmd_train_sd(&cfg).map_err(fail)?;
            println!(
                "sd trained: calibration {:.3}, validation accuracy {:.3}",
                s.calibration, s.validation_accuracy
            );
        }
        Command::TrainAd => {
            let s = pipeline::cmd_train_ad(&cfg).map_err(fail)?;
            println!(
                "ad trained: calibration {:.3}, validation accuracy {:.3} (width {}, blocks {}, dropout {})",
                s.calibration, s.validation_accuracy, s.arch_width, s.arch_blocks, s.arch_dropout
            );
        }
        Command::CompileAma1 { init, goal } => {
            let images = match (init, goal) {
                (Some(i), Some(g)) => Some((i.clone(), g.clone())),
                (None, None) => None,
                _ => return Err("--init and --goal must be given together".into()),
            };
            let s = pipeline::cmd_compile_ama1(&cfg, images).map_err(fail)?;
            println!(
                "compiled {} actions over {} bits ({} self-loops) -> {}",
                s.actions,
                s.num_bits,
                s.self_loops,
                cfg.path_domain_pddl().display()
            );
        }
        Command::Solve { init, goal, method, noise } => {
            let out = pipeline::cmd_solve(&cfg, init, goal, *method, *noise).map_err(fail)?;
            println!(
                "status {:?}: {} steps, {} expanded, {} ms -> {}",
                out.plan.status,
                out.plan.plan_length,
                out.plan.expanded,
                out.plan.wall_ms,
                out.plan_path.display()
            );
        }
        Command::Eval { method, benchmark, noise } => {
            let report = pipeline::cmd_eval(&cfg, *method, *benchmark, *noise).map_err(fail)?;
            println!(
                "solved {}/{} (search {}, validated {})",
                report.solved,
                report.instances.len(),
                report.search_solved,
                report.solved
            );
            if let Some(t) = &report.discriminator_errors {
                println!(
                    "sd type1 {:.3}% type2 {} | ad type1 {:.3}% type2 {}",
                    t.sd_type1 * 100.0,
                    t.sd_type2.map_or("n/a".into(), |v| format!("{:.3}%", v * 100.0)),
                    t.ad_type1 * 100.0,
                    t.ad_type2.map_or("n/a".into(), |v| format!("{:.3}%", v * 100.0)),
                );
            }
        }
        Command::Validate { plan } => {
            let v = pipeline::cmd_validate(&cfg, plan).map_err(fail)?;
            println!("{}: {}", if v.valid { "valid" } else { "invalid" }, v.reason);
        }
        Command::Visualize { plan, output } => {
            pipeline::cmd_visualize(&cfg, plan, output).map_err(fail)?;
            println!("wrote {}", output.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

//! Run configuration: one JSON document drives every stage; the seed
//! fully determines all stochastic choices downstream.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ama2::{AaeConfig, DiscriminatorConfig};
use crate::domains::tiles::TileSet;
use crate::domains::{imageio, Domain, DomainSpec};
use crate::error::Result;
use crate::planner::SuccConfig;
use crate::sae::SaeConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ama1,
    Ama2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Benchmark {
    A,
    B,
}

impl Benchmark {
    /// Walk length of the instance generator.
    pub fn walk_length(self) -> usize {
        match self {
            Benchmark::A => 7,
            Benchmark::B => 14,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    None,
    Gaussian,
    #[serde(rename = "saltpepper")]
    #[clap(name = "saltpepper")]
    SaltPepper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum, Default)]
#[serde(rename_all = "snake_case")]
pub enum Heuristic {
    /// Hamming distance to the goal bits (inadmissible, fast).
    #[default]
    GoalCount,
    /// h = 0: uniform-cost search, optimal plans.
    Blind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum TileSource {
    #[default]
    Builtin,
    Idx {
        images: PathBuf,
        labels: PathBuf,
    },
    Photo {
        path: PathBuf,
    },
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_time_limit() -> u64 {
    180
}

fn default_instances() -> usize {
    100
}

fn default_sd_mixed_factor() -> f32 {
    4.0
}

fn default_sd_iters() -> usize {
    2
}

fn default_augment() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub domain: DomainSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Number of sampled transitions; omit to enumerate every reachable
    /// ground-truth transition.
    #[serde(default)]
    pub transitions: Option<usize>,
    #[serde(default)]
    pub tiles: TileSource,
    /// Stochastic encodings per image when compiling transitions (> 1
    /// reconnects sparse latent graphs; used by the tower domain).
    #[serde(default = "default_augment")]
    pub augment: usize,
    #[serde(default)]
    pub sae: Option<SaeConfig>,
    #[serde(default)]
    pub aae: Option<AaeConfig>,
    #[serde(default)]
    pub sd: Option<DiscriminatorConfig>,
    #[serde(default)]
    pub ad: Option<DiscriminatorConfig>,
    /// Mixed-state pool size for the state discriminator, as a multiple
    /// of the positive count.
    #[serde(default = "default_sd_mixed_factor")]
    pub sd_mixed_factor: f32,
    /// Autoencode iterations applied to random vectors when generating
    /// mixed states.
    #[serde(default = "default_sd_iters")]
    pub sd_stabilize_iters: usize,
    #[serde(default)]
    pub succ: SuccConfig,
    /// Omit to pick per method: optimal blind search for the compiled
    /// model, goal-count for the learned successor function.
    #[serde(default)]
    pub heuristic: Option<Heuristic>,
    #[serde(default = "default_time_limit")]
    pub time_limit_secs: u64,
    #[serde(default)]
    pub max_expansions: Option<usize>,
    #[serde(default = "default_instances")]
    pub instances: usize,
}

impl RunConfig {
    pub fn new(domain: DomainSpec) -> Self {
        RunConfig {
            domain,
            seed: 0,
            out_dir: default_out_dir(),
            transitions: None,
            tiles: TileSource::default(),
            augment: 1,
            sae: None,
            aae: None,
            sd: None,
            ad: None,
            sd_mixed_factor: default_sd_mixed_factor(),
            sd_stabilize_iters: default_sd_iters(),
            succ: SuccConfig::default(),
            heuristic: None,
            time_limit_secs: default_time_limit(),
            max_expansions: None,
            instances: default_instances(),
        }
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn domain(&self) -> Result<Domain> {
        let tiles = match &self.tiles {
            TileSource::Builtin => TileSet::builtin(),
            TileSource::Idx { images, labels } => TileSet::from_idx(images, labels)?,
            TileSource::Photo { path } => {
                let img = imageio::read_pgm(path)?;
                TileSet::from_photo(&img)?
            }
        };
        Ok(Domain::with_tiles(self.domain.clone(), tiles))
    }

    pub fn sae_config(&self) -> SaeConfig {
        match &self.sae {
            Some(c) => c.clone(),
            None => {
                let d = Domain::new(self.domain.clone());
                SaeConfig::for_domain(&self.domain, d.image_dims())
            }
        }
    }

    pub fn aae_config(&self) -> AaeConfig {
        match &self.aae {
            Some(c) => c.clone(),
            None => AaeConfig {
                latent_bits: self.sae_config().latent_bits,
                ..AaeConfig::default()
            },
        }
    }

    pub fn sd_config(&self) -> DiscriminatorConfig {
        match &self.sd {
            Some(c) => c.clone(),
            None => DiscriminatorConfig::state_default(self.sae_config().latent_bits),
        }
    }

    pub fn ad_config(&self) -> DiscriminatorConfig {
        match &self.ad {
            Some(c) => c.clone(),
            None => DiscriminatorConfig::action_default(self.sae_config().latent_bits),
        }
    }

    // canonical stage paths under out_dir
    pub fn path_pre_images(&self) -> PathBuf {
        self.out_dir.join("pre.lpt")
    }
    pub fn path_suc_images(&self) -> PathBuf {
        self.out_dir.join("suc.lpt")
    }
    pub fn path_meta(&self) -> PathBuf {
        self.out_dir.join("meta.json")
    }
    pub fn path_sae(&self) -> PathBuf {
        self.out_dir.join("sae.ckpt")
    }
    pub fn path_aae(&self) -> PathBuf {
        self.out_dir.join("aae.ckpt")
    }
    pub fn path_sd(&self) -> PathBuf {
        self.out_dir.join("sd.ckpt")
    }
    pub fn path_ad(&self) -> PathBuf {
        self.out_dir.join("ad.ckpt")
    }
    pub fn path_domain_pddl(&self) -> PathBuf {
        self.out_dir.join("domain.pddl")
    }
    pub fn path_problem_pddl(&self) -> PathBuf {
        self.out_dir.join("problem.pddl")
    }
    pub fn path_trans_pre_bits(&self) -> PathBuf {
        self.out_dir.join("trans_pre.lpb")
    }
    pub fn path_trans_suc_bits(&self) -> PathBuf {
        self.out_dir.join("trans_suc.lpb")
    }
    pub fn plans_dir(&self) -> PathBuf {
        self.out_dir.join("plans")
    }
}

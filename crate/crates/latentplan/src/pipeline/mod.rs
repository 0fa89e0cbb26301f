//! Pipeline stages behind the command-line driver: dataset generation,
//! training, compilation, solving, evaluation, validation and
//! visualization. Every stage is a library function so tests can run the
//! whole pipeline in-process.

mod config;
mod eval;
mod noise;
mod stages;

pub use config::{Benchmark, Heuristic, Method, NoiseKind, RunConfig, TileSource};
pub use eval::{
    cmd_eval, discriminator_error_table, encode_dataset_transitions, DiscErrorTable,
    EvalInstanceRow, EvalReport,
};
pub use noise::corrupt_image;
pub use stages::{
    cmd_compile_ama1, cmd_gen_data, cmd_solve, cmd_train_aae, cmd_train_ad, cmd_train_sae,
    cmd_train_sd, cmd_validate, cmd_visualize, encoded_transitions, load_domain, CompileSummary,
    DataMeta, PlanFile, SolveOutput, ValidationVerdict,
};

use std::sync::OnceLock;

/// Caps the global worker pool from `LATENTPLAN_THREADS`. Results never
/// depend on the thread count, only wall time does.
pub fn configure_threads_from_env() {
    static ONCE: OnceLock<()> = OnceLock::new();
    ONCE.get_or_init(|| {
        if let Ok(v) = std::env::var("LATENTPLAN_THREADS") {
            if let Ok(n) = v.trim().parse::<usize>() {
                if n > 0 {
                    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
                }
            }
        }
    });
}

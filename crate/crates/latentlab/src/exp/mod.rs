//! Experiment configuration, run manifests, and reproduction recipes.

mod config;
mod manifest;
mod recipes;

pub use config::{ConfigError, ExperimentConfig};
pub use manifest::{versioned_output_dir, RunManifest};
pub use recipes::{
    belief_signature_checks, finetune_ablation, plot_uniform_from_csv, prepare_dataset,
    reproduce_fig3, reproduce_fig5, reproduce_fig6, reproduce_table2b, run_reproduce,
    table2b_checks, CheckLine, ReportBundle, ReproTarget, Splits, TABLE_2A_COCONUT, TABLE_2A_COT,
    TABLE_2A_NO_LATENT, TABLE_2B,
};

/// Pins every parallel code path to one thread; call before any compute.
pub fn force_single_thread() {
    std::env::set_var("MATMUL_NUM_THREADS", "1");
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build_global();
}

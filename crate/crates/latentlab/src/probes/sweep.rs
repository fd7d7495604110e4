//! Model-depth sweep: train the stepwise regime at several layer counts
//! over identical data and seed, then run the ablation and belief probes
//! on each checkpoint.

use super::{
    run_belief_evolution, run_no_latent_ablation, AblationResult, BeliefMode, BeliefProfile,
    ProbeError,
};
use crate::decode::{AnswerRule, LatentN};
use crate::model::LensMode;
use crate::taskgen::DatasetRecord;
use crate::training::{sequence_ids, train_run, TrainConfig, TrainOutcome};

#[derive(Debug, Clone)]
pub struct DepthSweepEntry {
    pub num_layers: usize,
    pub training: TrainOutcome,
    pub ablation: Vec<AblationResult>,
    pub belief: Vec<BeliefProfile>,
}

/// Trains one model per layer count with `make_config`, evaluates the
/// latent ablation on `test`, and probes belief evolution on the tasks
/// in `belief_tasks` (usually the 4-hop subset of the test split).
pub fn run_depth_sweep(
    layer_counts: &[usize],
    train: &[DatasetRecord],
    val: &[DatasetRecord],
    test: &[DatasetRecord],
    belief_tasks: &[DatasetRecord],
    make_config: &dyn Fn(usize) -> TrainConfig,
) -> Result<Vec<DepthSweepEntry>, ProbeError> {
    let mut out = Vec::with_capacity(layer_counts.len());
    for &num_layers in layer_counts {
        let config = make_config(num_layers);
        let (_, spec, _) = sequence_ids(config.use_natural);
        let outcome = train_run(train, val, &config)?;
        let ablation = run_no_latent_ablation(
            &outcome.params,
            test,
            LatentN::Depth,
            AnswerRule::FirstToken,
            &spec,
            config.use_natural,
        )?;
        let belief = run_belief_evolution(
            &outcome.params,
            belief_tasks,
            BeliefMode::CoconutLatents,
            &spec,
            LensMode::FinalNorm,
        )?;
        out.push(DepthSweepEntry {
            num_layers,
            training: outcome,
            ablation,
            belief,
        });
    }
    Ok(out)
}

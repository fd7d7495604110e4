//! Measurement procedures over trained models: probe-layer selection,
//! distribution metrics, entropy-profile comparison, paired single-token
//! intervention, entity-belief evolution, the no-latent ablation, and the
//! synthetic uniform-superposition experiment.

mod ablation;
mod belief;
mod entropy_run;
mod intervention;
mod metrics;
pub mod report;
pub mod svg;
mod sweep;
mod uniform;

pub use ablation::{run_no_latent_ablation, AblationCondition, AblationResult};
pub use belief::{run_belief_evolution, BeliefMode, BeliefProfile, BeliefStep};
pub use entropy_run::{run_entropy_comparison, EntropyProfile, EntropyRow};
pub use intervention::{run_token_intervention, InterventionRecord, LayerMetrics};
pub use metrics::{
    cosine_similarity, kl_divergence, probe_layers, shannon_entropy, topk_overlap, KL_FLOOR,
};
pub use sweep::{run_depth_sweep, DepthSweepEntry};
pub use uniform::{row_mean, run_uniform_superposition, UniformRow};

use thiserror::Error;

/// Strictly increasing probe layer indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeLayerSet(Vec<usize>);

impl ProbeLayerSet {
    pub fn new(layers: Vec<usize>) -> Result<Self, ProbeError> {
        if layers.is_empty() || layers.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ProbeError::BadInput(
                "probe layers must be strictly increasing".into(),
            ));
        }
        Ok(Self(layers))
    }

    pub fn layers(&self) -> &[usize] {
        &self.0
    }

    pub fn first(&self) -> usize {
        self.0[0]
    }

    pub fn last(&self) -> usize {
        *self.0.last().expect("non-empty")
    }
}

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("bad probe input: {0}")]
    BadInput(String),
    #[error("metric invariant violated: {0}")]
    InvariantViolation(String),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Decode(#[from] crate::decode::DecodeError),
    #[error(transparent)]
    Train(#[from] crate::training::TrainError),
    #[error(transparent)]
    Task(#[from] crate::taskgen::TaskGenError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

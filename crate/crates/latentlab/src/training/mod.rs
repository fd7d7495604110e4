//! The three training regimes: discrete CoT supervised training,
//! staged-curriculum latent training, and the from-scratch stepwise
//! variant that never shows the model a full gold chain.

mod adamw;
mod collate;
mod example;
mod run;

pub use adamw::{adamw_update, AdamWParams, OptimizerState};
pub use collate::collate;
pub use example::{
    build_coconut_example, build_cot_example, build_stepwise_examples, ExampleItem, SegmentTag,
    TrainingExample,
};
pub use run::{
    coconut_forward_loss, cot_sft_step, sequence_ids, train_run, write_metrics_csv, EpochMetrics,
    Regime, TrainConfig, TrainOutcome,
};

use thiserror::Error;

/// Staged curriculum: at stage `k`, the first `k` chain-of-thought steps
/// are replaced by `k * c_thought` continuous latent tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CurriculumSchedule {
    pub epochs_per_stage: usize,
    /// Latent tokens substituted per replaced reasoning step.
    pub c_thought: usize,
    pub max_stage: usize,
    pub total_epochs: usize,
}

impl Default for CurriculumSchedule {
    fn default() -> Self {
        Self {
            epochs_per_stage: 5,
            c_thought: 1,
            max_stage: 6,
            total_epochs: 50,
        }
    }
}

impl CurriculumSchedule {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs_per_stage == 0 || self.c_thought == 0 {
            return Err(TrainError::BadConfig("zero-sized schedule field".into()));
        }
        if self.max_stage * self.epochs_per_stage > self.total_epochs {
            return Err(TrainError::BadConfig(format!(
                "max_stage {} x epochs_per_stage {} exceeds total_epochs {}",
                self.max_stage, self.epochs_per_stage, self.total_epochs
            )));
        }
        Ok(())
    }

    pub fn stage_at(&self, epoch: usize) -> usize {
        (epoch / self.epochs_per_stage).min(self.max_stage)
    }
}

/// Special token ids used to delimit the latent span. `init_source` is
/// the token whose embedding seeds the marker rows when extending a
/// pretrained vocabulary; from-scratch vocabularies train their marker
/// rows like any other token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatentMarkers {
    pub start: u32,
    pub latent: u32,
    pub end: u32,
    pub init_source: Option<u32>,
}

impl LatentMarkers {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.start == self.latent || self.latent == self.end || self.start == self.end {
            return Err(TrainError::BadConfig(
                "latent marker ids must be distinct".into(),
            ));
        }
        Ok(())
    }

    pub fn from_symbolic(vocab: &crate::taskgen::SymbolicVocab) -> Self {
        Self {
            start: vocab.start_latent(),
            latent: vocab.latent(),
            end: vocab.end_latent(),
            init_source: None,
        }
    }

    pub fn from_natural(vocab: &crate::taskgen::NaturalVocab) -> Self {
        Self {
            start: vocab.start_latent(),
            latent: vocab.latent(),
            end: vocab.end_latent(),
            init_source: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("bad training config: {0}")]
    BadConfig(String),
    #[error("degenerate batch: no supervised positions")]
    DegenerateBatch,
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Divergence { epoch: usize, loss: f64 },
    #[error("non-finite gradient in {0}")]
    NonFiniteGrad(String),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Decode(#[from] crate::decode::DecodeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

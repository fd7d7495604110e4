//! Generation strategies: greedy discrete decoding, latent-recurrent
//! decoding, and soft-mixture decoding, plus the synthetic
//! uniform-superposition input constructor.

mod coconut;
mod eval;
mod greedy;
mod soft;
mod trace;

pub use coconut::{coconut_decode, no_latent_decode};
pub use eval::{evaluate_tasks, AnswerRule, EvalDecode, EvalOutcome, LatentN, SeqSpec};
pub use greedy::{argmax as greedy_argmax, greedy_decode};
pub use soft::{
    soft_thinking_decode, soft_thinking_step, uniform_superposition_embed, SoftBoundary,
};
pub use trace::write_trace_file;

use crate::model::Scalar;
use ndarray::Array1;
use thiserror::Error;

/// Soft-mixture decoding hyperparameters.
#[derive(Debug, Clone)]
pub struct SoftThinkingConfig {
    /// Temperature applied to logits before top-k truncation.
    pub temperature: f64,
    /// Sampling top-k from the source configuration; recorded but inert,
    /// the thinking trajectory here is fully deterministic.
    pub sample_top_k: usize,
    /// Number of tokens kept in each soft mixture.
    pub soft_top_k: usize,
    pub weighting: SoftWeighting,
    pub max_new_tokens: usize,
    /// Cold-stop threshold c: stop thinking once max weight > 1 - c.
    pub cold_stop: f64,
}

impl Default for SoftThinkingConfig {
    fn default() -> Self {
        Self {
            temperature: 0.6,
            sample_top_k: 30,
            soft_top_k: 15,
            weighting: SoftWeighting::Softmax,
            max_new_tokens: 128,
            cold_stop: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SoftWeighting {
    Softmax,
    Uniform,
}

/// A probability-weighted mixture over vocabulary tokens and the convex
/// combination of their embeddings it induces.
#[derive(Debug, Clone)]
pub struct SoftToken<T: Scalar> {
    /// `(token id, weight)` pairs, weight-descending; weights sum to 1.
    pub support: Vec<(u32, T)>,
    pub embedding: Array1<T>,
}

impl<T: Scalar> SoftToken<T> {
    pub fn argmax_token(&self) -> u32 {
        self.support[0].0
    }

    pub fn max_weight(&self) -> T {
        self.support[0].1
    }

    /// Shannon entropy of the mixing weights, in nats.
    pub fn mixing_entropy(&self) -> f64 {
        self.support
            .iter()
            .map(|(_, w)| w.into_f64())
            .filter(|&w| w > 0.0)
            .map(|w| -w * w.ln())
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Eos,
    MaxTokens,
    ColdStop,
}

impl StopReason {
    pub fn label(&self) -> &'static str {
        match self {
            StopReason::Eos => "eos",
            StopReason::MaxTokens => "max_tokens",
            StopReason::ColdStop => "cold_stop",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepStrategy {
    Greedy,
    SoftThinking,
    LatentRecurrence,
}

impl StepStrategy {
    pub fn label(&self) -> &'static str {
        match self {
            StepStrategy::Greedy => "greedy",
            StepStrategy::SoftThinking => "soft",
            StepStrategy::LatentRecurrence => "latent",
        }
    }
}

/// One generated item.
#[derive(Debug, Clone)]
pub struct DecodeStep<T: Scalar> {
    pub index: usize,
    pub strategy: StepStrategy,
    /// The emitted or argmax token; `None` for pure latent steps.
    pub token: Option<u32>,
    pub soft: Option<SoftToken<T>>,
    /// Recorded latent vector for latent-recurrence steps.
    pub latent: Option<Array1<T>>,
    /// Logits snapshot at probe checkpoints.
    pub logits: Option<Array1<T>>,
}

/// Ordered record of one generation.
#[derive(Debug, Clone)]
pub struct DecodeTrace<T: Scalar> {
    pub steps: Vec<DecodeStep<T>>,
    /// Why generation stopped: cold stop beats eos beats the budget.
    pub stop_reason: StopReason,
}

impl<T: Scalar> DecodeTrace<T> {
    /// Mean mixing-weight entropy over the soft steps, in nats.
    pub fn mean_mixing_entropy(&self) -> Option<f64> {
        let entropies: Vec<f64> = self
            .steps
            .iter()
            .filter_map(|s| s.soft.as_ref())
            .map(|s| s.mixing_entropy())
            .collect();
        if entropies.is_empty() {
            None
        } else {
            Some(entropies.iter().sum::<f64>() / entropies.len() as f64)
        }
    }
}

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("empty prompt")]
    EmptyPrompt,
    #[error("duplicate token id {0} in superposition support")]
    DuplicateId(u32),
    #[error("empty superposition support")]
    EmptySupport,
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

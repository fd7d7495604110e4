//! A minimal decoder-only transformer with mixed discrete/continuous
//! inputs.
//!
//! GPT-2 shape: learned positional embeddings, pre-norm blocks, multi-head
//! causal attention, tanh-GELU feed-forward, weight-tied unembedding by
//! default. The forward pass accepts token ids and raw embedding vectors
//! interchangeably, exposes post-block residual-stream states per layer,
//! and decodes incrementally against a key-value cache. Training-side
//! forward/backward lives in [`batch`], written out explicitly so the
//! gradient path through latent-thought substitution is under our control
//! and checkable against finite differences.

pub mod batch;
mod checkpoint;
mod forward;
pub mod gradcheck;
mod lens;
pub(crate) mod ops;
mod params;
mod scalar;

pub use checkpoint::{
    extend_vocab_with_markers, import_gpt2_names, load_checkpoint, load_checkpoint_expecting,
    params_from_entries, save_checkpoint, TensorEntries,
};
pub use forward::{forward, DecodeCache, ForwardOutput};
pub use lens::{logit_lens, LensMode};
pub use params::{init_random, LayerParams, ModelParams};
pub use scalar::Scalar;

use ndarray::{Array1, Array2};
use thiserror::Error;

/// Shape of the transformer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub num_heads: usize,
    pub model_dim: usize,
    pub vocab_size: usize,
    pub max_positions: usize,
    pub tie_unembedding: bool,
}

impl ModelConfig {
    pub fn head_dim(&self) -> usize {
        self.model_dim / self.num_heads
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !self.model_dim.is_multiple_of(self.num_heads) {
            return Err(ModelError::BadConfig(format!(
                "model_dim {} not divisible by num_heads {}",
                self.model_dim, self.num_heads
            )));
        }
        if self.num_layers == 0 || self.vocab_size == 0 || self.max_positions == 0 {
            return Err(ModelError::BadConfig("zero-sized dimension".into()));
        }
        Ok(())
    }

    /// The shape used in the from-scratch experiments: 8 heads, 768-dim.
    pub fn from_scratch(num_layers: usize, vocab_size: usize) -> Self {
        Self {
            num_layers,
            num_heads: 8,
            model_dim: 768,
            vocab_size,
            max_positions: 128,
            tie_unembedding: true,
        }
    }
}

/// One input position: a vocabulary token or a raw embedding vector.
#[derive(Debug, Clone)]
pub enum SequenceItem<T: Scalar> {
    Token(u32),
    Vector(Array1<T>),
}

impl<T: Scalar> SequenceItem<T> {
    pub fn is_vector(&self) -> bool {
        matches!(self, SequenceItem::Vector(_))
    }
}

/// Post-block residual-stream states captured during a forward call.
#[derive(Debug, Clone)]
pub struct LayerTrace<T: Scalar> {
    /// Absolute position of the first captured item.
    pub base_position: usize,
    /// Requested layer indices, ascending.
    pub layers: Vec<usize>,
    /// One `[new_items, model_dim]` matrix per requested layer.
    pub states: Vec<Array2<T>>,
}

impl<T: Scalar> LayerTrace<T> {
    /// Hidden state for `layer` at absolute position `pos`.
    pub fn state(&self, layer: usize, pos: usize) -> Option<ndarray::ArrayView1<'_, T>> {
        let li = self.layers.iter().position(|&l| l == layer)?;
        let row = pos.checked_sub(self.base_position)?;
        if row >= self.states[li].nrows() {
            return None;
        }
        Some(self.states[li].row(row))
    }
}

/// A vocabulary distribution read off an intermediate layer.
#[derive(Debug, Clone)]
pub struct LensDistribution<T: Scalar> {
    pub layer: usize,
    pub position: usize,
    pub probs: Array1<T>,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid config: {0}")]
    BadConfig(String),
    #[error("sequence length {len} exceeds max_positions {max}")]
    LengthOverflow { len: usize, max: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("non-finite input: {0}")]
    NonFinite(String),
    #[error("degenerate batch: every position masked")]
    DegenerateBatch,
    #[error("token id {id} out of range for vocab {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },
    #[error("shape mismatch for tensor {name}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

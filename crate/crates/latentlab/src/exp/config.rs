//! Flat key=value experiment configuration.
//!
//! Every field is written to the serialized form in a fixed order, so a
//! run manifest embeds the complete configuration; parsing rejects
//! unknown keys outright.

use crate::decode::{SoftThinkingConfig, SoftWeighting};
use crate::model::ModelConfig;
use crate::taskgen::{DatasetParams, SplitSizes, SymbolicVocab};
use crate::training::{AdamWParams, CurriculumSchedule, Regime, TrainConfig};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Output root; dataset, checkpoint, and report paths live under it.
    pub out: String,
    pub data_dir: String,
    pub checkpoints_dir: String,
    pub reports_dir: String,

    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
    pub node_count_min: usize,
    pub node_count_max: usize,
    pub depth_min: usize,
    pub depth_max: usize,

    pub num_layers: usize,
    pub num_heads: usize,
    pub model_dim: usize,
    pub max_positions: usize,
    pub tie_unembedding: bool,

    pub regime: Regime,
    pub epochs_per_stage: usize,
    pub c_thought: usize,
    pub max_stage: usize,
    pub total_epochs: usize,
    pub batch_size: usize,
    pub grad_accum: usize,
    /// 0 disables early stopping.
    pub early_stop_patience: usize,
    pub cot_pretrain_epochs: usize,
    pub use_natural: bool,
    pub detach_latents: bool,

    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,

    pub soft_temperature: f64,
    pub soft_sample_top_k: usize,
    pub soft_top_k: usize,
    pub soft_weighting: String,
    pub soft_max_new_tokens: usize,
    pub soft_cold_stop: f64,

    pub probe_checkpoint_every: usize,
    pub probe_intervention_every: usize,
    pub uniform_k: Vec<usize>,
    pub uniform_samples: usize,
    /// Project intermediate states without the final norm.
    pub lens_raw: bool,

    pub tol_table2b_points: f64,
    pub tol_uniform_trained_ratio: f64,
    pub tol_uniform_random_ratio: f64,
    pub tol_belief_wrong_neighbor: f64,

    pub single_thread: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: "runs/latest".into(),
            data_dir: "data".into(),
            checkpoints_dir: "checkpoints".into(),
            reports_dir: "reports".into(),
            train_size: 16_000,
            val_size: 300,
            test_size: 500,
            node_count_min: 11,
            node_count_max: 14,
            depth_min: 3,
            depth_max: 6,
            num_layers: 2,
            num_heads: 8,
            model_dim: 768,
            max_positions: 128,
            tie_unembedding: true,
            regime: Regime::CoconutScratch,
            epochs_per_stage: 5,
            c_thought: 1,
            max_stage: 6,
            total_epochs: 40,
            batch_size: 16,
            grad_accum: 2,
            early_stop_patience: 5,
            cot_pretrain_epochs: 10,
            use_natural: false,
            detach_latents: false,
            lr: 1e-4,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            soft_temperature: 0.6,
            soft_sample_top_k: 30,
            soft_top_k: 15,
            soft_weighting: "softmax".into(),
            soft_max_new_tokens: 128,
            soft_cold_stop: 0.0,
            probe_checkpoint_every: 1,
            probe_intervention_every: 1,
            uniform_k: vec![2, 5, 10],
            uniform_samples: 50,
            lens_raw: false,
            tol_table2b_points: 10.0,
            tol_uniform_trained_ratio: 0.5,
            tol_uniform_random_ratio: 0.8,
            tol_belief_wrong_neighbor: 0.05,
            single_thread: false,
        }
    }
}

macro_rules! config_fields {
    ($m:ident) => {
        $m!(seed, u64);
        $m!(out, String);
        $m!(data_dir, String);
        $m!(checkpoints_dir, String);
        $m!(reports_dir, String);
        $m!(train_size, usize);
        $m!(val_size, usize);
        $m!(test_size, usize);
        $m!(node_count_min, usize);
        $m!(node_count_max, usize);
        $m!(depth_min, usize);
        $m!(depth_max, usize);
        $m!(num_layers, usize);
        $m!(num_heads, usize);
        $m!(model_dim, usize);
        $m!(max_positions, usize);
        $m!(tie_unembedding, bool);
        $m!(regime, Regime);
        $m!(epochs_per_stage, usize);
        $m!(c_thought, usize);
        $m!(max_stage, usize);
        $m!(total_epochs, usize);
        $m!(batch_size, usize);
        $m!(grad_accum, usize);
        $m!(early_stop_patience, usize);
        $m!(cot_pretrain_epochs, usize);
        $m!(use_natural, bool);
        $m!(detach_latents, bool);
        $m!(lr, f64);
        $m!(weight_decay, f64);
        $m!(beta1, f64);
        $m!(beta2, f64);
        $m!(eps, f64);
        $m!(soft_temperature, f64);
        $m!(soft_sample_top_k, usize);
        $m!(soft_top_k, usize);
        $m!(soft_weighting, String);
        $m!(soft_max_new_tokens, usize);
        $m!(soft_cold_stop, f64);
        $m!(probe_checkpoint_every, usize);
        $m!(probe_intervention_every, usize);
        $m!(uniform_k, VecUsize);
        $m!(uniform_samples, usize);
        $m!(lens_raw, bool);
        $m!(tol_table2b_points, f64);
        $m!(tol_uniform_trained_ratio, f64);
        $m!(tol_uniform_random_ratio, f64);
        $m!(tol_belief_wrong_neighbor, f64);
        $m!(single_thread, bool);
    };
}

impl ExperimentConfig {
    /// Serializes every field as `key=value`, one per line, fixed order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        macro_rules! emit {
            ($field:ident, Regime) => {
                out.push_str(&format!("{}={}\n", stringify!($field), self.$field.label()))
            };
            ($field:ident, VecUsize) => {
                let joined = self
                    .$field
                    .iter()
                    .map(|x| x.to_string())
                    .collect::<Vec<_>>()
                    .join(",");
                out.push_str(&format!("{}={}\n", stringify!($field), joined))
            };
            ($field:ident, $t:tt) => {
                out.push_str(&format!("{}={}\n", stringify!($field), self.$field))
            };
        }
        config_fields!(emit);
        out
    }

    /// Parses `key=value` lines. Unknown keys are rejected; keys absent
    /// from the text keep their defaults.
    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ExperimentConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Malformed {
                line: lineno + 1,
                text: raw.into(),
            })?;
            let key = key.trim();
            let value = value.trim();
            cfg.set(key, value)?;
        }
        Ok(cfg)
    }

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let parse_err = |e: String| ConfigError::BadValue {
            key: key.into(),
            reason: e,
        };
        macro_rules! try_set {
            ($field:ident, u64) => {
                if key == stringify!($field) {
                    self.$field = value
                        .parse()
                        .map_err(|e: std::num::ParseIntError| parse_err(e.to_string()))?;
                    return Ok(());
                }
            };
            ($field:ident, usize) => {
                if key == stringify!($field) {
                    self.$field = value
                        .parse()
                        .map_err(|e: std::num::ParseIntError| parse_err(e.to_string()))?;
                    return Ok(());
                }
            };
            ($field:ident, bool) => {
                if key == stringify!($field) {
                    self.$field = value
                        .parse()
                        .map_err(|e: std::str::ParseBoolError| parse_err(e.to_string()))?;
                    return Ok(());
                }
            };
            ($field:ident, f64) => {
                if key == stringify!($field) {
                    self.$field = value
                        .parse()
                        .map_err(|e: std::num::ParseFloatError| parse_err(e.to_string()))?;
                    return Ok(());
                }
            };
            ($field:ident, String) => {
                if key == stringify!($field) {
                    self.$field = value.to_string();
                    return Ok(());
                }
            };
            ($field:ident, Regime) => {
                if key == stringify!($field) {
                    self.$field = Regime::parse(value)
                        .ok_or_else(|| parse_err(format!("unknown regime {value:?}")))?;
                    return Ok(());
                }
            };
            ($field:ident, VecUsize) => {
                if key == stringify!($field) {
                    self.$field = value
                        .split(',')
                        .map(|s| s.trim().parse::<usize>())
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|e| parse_err(e.to_string()))?;
                    return Ok(());
                }
            };
        }
        config_fields!(try_set);
        Err(ConfigError::UnknownKey(key.into()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    pub fn dataset_params(&self) -> DatasetParams {
        DatasetParams {
            seed: self.seed,
            node_count_min: self.node_count_min,
            node_count_max: self.node_count_max,
            depth_weights: DatasetParams::default().depth_weights,
            splits: SplitSizes {
                train: self.train_size,
                val: self.val_size,
                test: self.test_size,
            },
        }
        .with_depth_range(self.depth_min, self.depth_max)
    }

    pub fn model_config(&self) -> ModelConfig {
        let vocab_size = if self.use_natural {
            crate::taskgen::NaturalVocab::new().size()
        } else {
            SymbolicVocab::new().size()
        };
        ModelConfig {
            num_layers: self.num_layers,
            num_heads: self.num_heads,
            model_dim: self.model_dim,
            vocab_size,
            max_positions: self.max_positions,
            tie_unembedding: self.tie_unembedding,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            regime: self.regime,
            model: self.model_config(),
            schedule: CurriculumSchedule {
                epochs_per_stage: self.epochs_per_stage,
                c_thought: self.c_thought,
                max_stage: self.max_stage,
                total_epochs: self.total_epochs,
            },
            optimizer: AdamWParams {
                lr: self.lr,
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.eps,
                weight_decay: self.weight_decay,
            },
            seed: self.seed,
            batch_size: self.batch_size,
            grad_accum: self.grad_accum,
            total_epochs: self.total_epochs,
            early_stop_patience: if self.early_stop_patience == 0 {
                None
            } else {
                Some(self.early_stop_patience)
            },
            cot_pretrain_epochs: self.cot_pretrain_epochs,
            use_natural: self.use_natural,
            detach_latents: self.detach_latents,
        }
    }

    pub fn soft_config(&self) -> SoftThinkingConfig {
        SoftThinkingConfig {
            temperature: self.soft_temperature,
            sample_top_k: self.soft_sample_top_k,
            soft_top_k: self.soft_top_k,
            weighting: if self.soft_weighting == "uniform" {
                SoftWeighting::Uniform
            } else {
                SoftWeighting::Softmax
            },
            max_new_tokens: self.soft_max_new_tokens,
            cold_stop: self.soft_cold_stop,
        }
    }

    pub fn lens_mode(&self) -> crate::model::LensMode {
        if self.lens_raw {
            crate::model::LensMode::Raw
        } else {
            crate::model::LensMode::FinalNorm
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("bad value for {key}: {reason}")]
    BadValue { key: String, reason: String },
    #[error("malformed config line {line}: {text:?}")]
    Malformed { line: usize, text: String },
    #[error("config io error: {0}")]
    Io(String),
}

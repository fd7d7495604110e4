//! The training loop: regime dispatch, gradient accumulation, per-epoch
//! optimizer reset, validation by decoding, best-checkpoint tracking.

use super::{
    adamw_update, build_coconut_example, build_cot_example, build_stepwise_examples, collate,
    AdamWParams, CurriculumSchedule, LatentMarkers, OptimizerState, TrainError, TrainingExample,
};
use crate::decode::{evaluate_tasks, AnswerRule, EvalDecode, LatentN, SeqSpec};
use crate::model::batch::{loss_and_grads, BatchInput, TrainOptions};
use crate::model::{ModelConfig, ModelError, ModelParams};
use crate::rng::{derive_seed, rng_from_seed};
use crate::taskgen::{DatasetRecord, NaturalVocab, SymbolicVocab};
use rand::seq::SliceRandom;
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Discrete chain-of-thought supervision.
    Cot,
    /// Staged curriculum progressively replacing steps with latents.
    CoconutFinetune,
    /// From-scratch stepwise latent training.
    CoconutScratch,
    /// Discrete pretraining, then the stepwise latent phase.
    CotThenCoconut,
}

impl Regime {
    pub fn label(&self) -> &'static str {
        match self {
            Regime::Cot => "cot",
            Regime::CoconutFinetune => "coconut_finetune",
            Regime::CoconutScratch => "coconut_scratch",
            Regime::CotThenCoconut => "cot_then_coconut",
        }
    }

    pub fn parse(s: &str) -> Option<Regime> {
        match s {
            "cot" => Some(Regime::Cot),
            "coconut_finetune" => Some(Regime::CoconutFinetune),
            "coconut_scratch" => Some(Regime::CoconutScratch),
            "cot_then_coconut" => Some(Regime::CotThenCoconut),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub regime: Regime,
    pub model: ModelConfig,
    pub schedule: CurriculumSchedule,
    pub optimizer: AdamWParams,
    pub seed: u64,
    pub batch_size: usize,
    pub grad_accum: usize,
    pub total_epochs: usize,
    /// Stop after this many epochs without a validation improvement.
    pub early_stop_patience: Option<usize>,
    /// Discrete epochs before the latent phase in `CotThenCoconut`.
    pub cot_pretrain_epochs: usize,
    pub use_natural: bool,
    pub detach_latents: bool,
}

impl TrainConfig {
    /// From-scratch stepwise setup over the symbolic rendering.
    pub fn scratch_symbolic(num_layers: usize, model_dim: usize, seed: u64) -> Self {
        let vocab = SymbolicVocab::new();
        Self {
            regime: Regime::CoconutScratch,
            model: ModelConfig {
                num_layers,
                num_heads: 8,
                model_dim,
                vocab_size: vocab.size(),
                max_positions: 128,
                tie_unembedding: true,
            },
            schedule: CurriculumSchedule::default(),
            optimizer: AdamWParams::default(),
            seed,
            batch_size: 16,
            grad_accum: 2,
            total_epochs: 40,
            early_stop_patience: Some(5),
            cot_pretrain_epochs: 10,
            use_natural: false,
            detach_latents: false,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        self.model.validate()?;
        if self.regime == Regime::CoconutFinetune {
            self.schedule.validate()?;
        }
        if self.batch_size == 0 || self.grad_accum == 0 || self.total_epochs == 0 {
            return Err(TrainError::BadConfig("zero-sized loop parameter".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub stage: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub lr: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the best-validation epoch.
    pub params: ModelParams<f32>,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub metrics: Vec<EpochMetrics>,
}

/// One supervised step on a latent-free batch: mean token cross-entropy
/// over unmasked positions plus a single optimizer update.
pub fn cot_sft_step(
    params: &mut ModelParams<f32>,
    batch: &BatchInput,
    opt: &mut OptimizerState,
) -> Result<f64, TrainError> {
    if !batch.latent_cols.is_empty() {
        return Err(TrainError::BadConfig(
            "cot step got latent positions".into(),
        ));
    }
    let (loss, grads, _) = match loss_and_grads(params, batch, &TrainOptions::default()) {
        Ok(v) => v,
        Err(ModelError::DegenerateBatch) => return Err(TrainError::DegenerateBatch),
        Err(e) => return Err(e.into()),
    };
    adamw_update(params, &grads, opt)?;
    Ok(loss)
}

/// Multi-pass loss with latent substitution: `n + 1` forward passes over
/// a batch with `n` latent columns, reusing the processed prefix across
/// passes, with gradients flowing through every substituted hidden state.
pub fn coconut_forward_loss(
    params: &ModelParams<f32>,
    batch: &BatchInput,
    detach_latents: bool,
) -> Result<(f64, ModelParams<f32>, usize), TrainError> {
    match loss_and_grads(params, batch, &TrainOptions { detach_latents }) {
        Ok(v) => Ok(v),
        Err(ModelError::DegenerateBatch) => Err(TrainError::DegenerateBatch),
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Cot,
    Curriculum(usize),
    Stepwise,
}

fn phase_at(config: &TrainConfig, epoch: usize) -> Phase {
    match config.regime {
        Regime::Cot => Phase::Cot,
        Regime::CoconutFinetune => Phase::Curriculum(config.schedule.stage_at(epoch)),
        Regime::CoconutScratch => Phase::Stepwise,
        Regime::CotThenCoconut => {
            if epoch < config.cot_pretrain_epochs {
                Phase::Cot
            } else {
                Phase::Stepwise
            }
        }
    }
}

fn build_epoch_examples(
    phase: Phase,
    records: &[DatasetRecord],
    config: &TrainConfig,
    markers: &LatentMarkers,
) -> Vec<TrainingExample> {
    let mut examples = Vec::new();
    for rec in records {
        let rendered = if config.use_natural {
            &rec.natural
        } else {
            &rec.symbolic
        };
        match phase {
            Phase::Cot => examples.push(build_cot_example(rendered)),
            Phase::Curriculum(stage) => examples.push(build_coconut_example(
                rendered,
                stage,
                &config.schedule,
                markers,
            )),
            Phase::Stepwise => {
                examples.extend(build_stepwise_examples(&rec.task, rendered, markers))
            }
        }
    }
    examples
}

fn val_decode_for(phase: Phase, schedule: &CurriculumSchedule) -> EvalDecode {
    match phase {
        Phase::Cot => EvalDecode::CotGreedy,
        Phase::Stepwise => EvalDecode::Coconut {
            n: LatentN::Depth,
            answer: AnswerRule::FirstToken,
        },
        Phase::Curriculum(stage) => EvalDecode::Coconut {
            n: LatentN::StageCapped {
                stage,
                c_thought: schedule.c_thought,
            },
            answer: AnswerRule::UntilEos,
        },
    }
}

fn add_grads(acc: &mut ModelParams<f32>, grads: &ModelParams<f32>) {
    let src = grads.tensors();
    for (ti, (_, dst)) in acc.tensors_mut().into_iter().enumerate() {
        for (d, s) in dst.iter_mut().zip(src[ti].2.iter()) {
            *d += *s;
        }
    }
}

fn scale_grads(acc: &mut ModelParams<f32>, factor: f32) {
    for (_, dst) in acc.tensors_mut() {
        for d in dst.iter_mut() {
            *d *= factor;
        }
    }
}

/// Token ids the trainer and evaluator need for the chosen rendering.
pub fn sequence_ids(use_natural: bool) -> (LatentMarkers, SeqSpec, u32) {
    if use_natural {
        let vocab = NaturalVocab::new();
        let markers = LatentMarkers::from_natural(&vocab);
        (
            markers,
            SeqSpec {
                eos: vocab.eos(),
                start_latent: markers.start,
                end_latent: markers.end,
            },
            vocab.pad(),
        )
    } else {
        let vocab = SymbolicVocab::new();
        let markers = LatentMarkers::from_symbolic(&vocab);
        (
            markers,
            SeqSpec {
                eos: vocab.eos(),
                start_latent: markers.start,
                end_latent: markers.end,
            },
            vocab.pad(),
        )
    }
}

/// Trains one regime end to end. The optimizer is reset at the start of
/// every epoch; examples reshuffle uniformly each epoch; the best
/// checkpoint by validation accuracy is retained, with each phase
/// validated under its own decoding mode.
pub fn train_run(
    train_records: &[DatasetRecord],
    val_records: &[DatasetRecord],
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if train_records.is_empty() || val_records.is_empty() {
        return Err(TrainError::BadConfig("empty dataset split".into()));
    }
    let (markers, spec, pad) = sequence_ids(config.use_natural);
    markers.validate()?;

    let mut params: ModelParams<f32> = crate::model::init_random(config.model, config.seed)?;
    let mut opt = OptimizerState::new(config.model, config.optimizer);
    let opts = TrainOptions {
        detach_latents: config.detach_latents,
    };

    let mut metrics = Vec::new();
    let mut best: Option<(f64, usize, ModelParams<f32>)> = None;

    for epoch in 0..config.total_epochs {
        opt.reset();
        let phase = phase_at(config, epoch);
        let mut examples = build_epoch_examples(phase, train_records, config, &markers);
        let mut rng = rng_from_seed(derive_seed(config.seed, 0xE10C + epoch as u64));
        examples.shuffle(&mut rng);

        let mut loss_weighted = 0.0f64;
        let mut token_count = 0usize;
        let mut pending: Option<ModelParams<f32>> = None;
        let mut pending_n = 0usize;
        for chunk in examples.chunks(config.batch_size) {
            let batch = collate(chunk, pad)?;
            let (loss, grads, n_tok) = match loss_and_grads(&params, &batch, &opts) {
                Ok(v) => v,
                Err(ModelError::NonFinite(_)) => {
                    return Err(TrainError::Divergence {
                        epoch,
                        loss: f64::NAN,
                    })
                }
                Err(ModelError::DegenerateBatch) => return Err(TrainError::DegenerateBatch),
                Err(e) => return Err(e.into()),
            };
            if !loss.is_finite() {
                return Err(TrainError::Divergence { epoch, loss });
            }
            loss_weighted += loss * n_tok as f64;
            token_count += n_tok;
            match &mut pending {
                None => pending = Some(grads),
                Some(acc) => add_grads(acc, &grads),
            }
            pending_n += 1;
            if pending_n == config.grad_accum {
                let mut acc = pending.take().expect("accumulated grads");
                scale_grads(&mut acc, 1.0 / pending_n as f32);
                adamw_update(&mut params, &acc, &mut opt)?;
                pending_n = 0;
            }
        }
        if let Some(mut acc) = pending.take() {
            scale_grads(&mut acc, 1.0 / pending_n as f32);
            adamw_update(&mut params, &acc, &mut opt)?;
        }

        let val_mode = val_decode_for(phase, &config.schedule);
        let val_accuracy =
            evaluate_tasks(&params, val_records, config.use_natural, &val_mode, &spec)?.accuracy();
        let stage = match phase {
            Phase::Curriculum(k) => k,
            _ => 0,
        };
        metrics.push(EpochMetrics {
            epoch,
            stage,
            train_loss: loss_weighted / token_count.max(1) as f64,
            val_accuracy,
            lr: config.optimizer.lr,
            seed: config.seed,
        });

        eprintln!(
            "[{} {}L d{}] epoch {:3}  stage {}  loss {:.4}  val {:.3}",
            config.regime.label(),
            config.model.num_layers,
            config.model.model_dim,
            epoch,
            stage,
            loss_weighted / token_count.max(1) as f64,
            val_accuracy
        );

        let improved = best.as_ref().is_none_or(|(acc, _, _)| val_accuracy > *acc);
        if improved {
            best = Some((val_accuracy, epoch, params.clone()));
        }
        if let Some(patience) = config.early_stop_patience {
            let best_epoch = best.as_ref().map(|(_, e, _)| *e).unwrap_or(0);
            if epoch.saturating_sub(best_epoch) >= patience {
                break;
            }
        }
    }

    let (best_val_accuracy, best_epoch, best_params) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        params: best_params,
        best_epoch,
        best_val_accuracy,
        metrics,
    })
}

/// CSV columns: epoch, stage, train_loss, val_accuracy, lr, seed.
pub fn write_metrics_csv(metrics: &[EpochMetrics], path: &Path) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "epoch,stage,train_loss,val_accuracy,lr,seed")?;
    for m in metrics {
        writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6e},{}",
            m.epoch, m.stage, m.train_loss, m.val_accuracy, m.lr, m.seed
        )?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::batch::MASKED;
    use crate::taskgen::{generate_record, DatasetParams, SplitSizes};
    use ndarray::Array2;

    fn tiny_records(n: usize, seed: u64) -> Vec<DatasetRecord> {
        let params = DatasetParams {
            seed,
            splits: SplitSizes {
                train: n,
                val: 0,
                test: 0,
            },
            ..DatasetParams::default()
        }
        .with_depth_range(3, 4);
        (0..n as u64)
            .map(|i| generate_record(&params, i).unwrap())
            .collect()
    }

    fn tiny_train_config(regime: Regime) -> TrainConfig {
        let mut config = TrainConfig::scratch_symbolic(1, 32, 7);
        config.regime = regime;
        config.model.num_heads = 4;
        config.total_epochs = 2;
        config.batch_size = 8;
        config.grad_accum = 2;
        config.early_stop_patience = None;
        config.cot_pretrain_epochs = 1;
        config.optimizer.lr = 3e-3;
        config
    }

    #[test]
    fn uniform_logit_model_pays_log_vocab() {
        let vocab_size = 40;
        let config = ModelConfig {
            num_layers: 1,
            num_heads: 4,
            model_dim: 32,
            vocab_size,
            max_positions: 64,
            tie_unembedding: true,
        };
        let mut params = ModelParams::<f32>::zeros(config);
        let mut opt = OptimizerState::new(config, AdamWParams::default());
        let tokens = Array2::from_shape_vec((1, 4), vec![1u32, 11, 12, 13]).unwrap();
        let mut labels = Array2::from_elem((1, 4), MASKED);
        labels[[0, 1]] = 12;
        labels[[0, 2]] = 13;
        let batch = BatchInput {
            tokens,
            is_latent: Array2::from_elem((1, 4), false),
            labels,
            row_start: vec![0],
            row_end: vec![4],
            latent_cols: vec![],
        };
        let loss = cot_sft_step(&mut params, &batch, &mut opt).unwrap();
        assert!(
            (loss - (vocab_size as f64).ln()).abs() < 1e-5,
            "loss {loss}"
        );
    }

    #[test]
    fn cot_step_rejects_latent_batches() {
        let config = ModelConfig {
            num_layers: 1,
            num_heads: 2,
            model_dim: 16,
            vocab_size: 40,
            max_positions: 32,
            tie_unembedding: true,
        };
        let mut params = ModelParams::<f32>::zeros(config);
        let mut opt = OptimizerState::new(config, AdamWParams::default());
        let tokens = Array2::from_shape_vec((1, 4), vec![1u32, 7, 0, 9]).unwrap();
        let mut is_latent = Array2::from_elem((1, 4), false);
        is_latent[[0, 2]] = true;
        let mut labels = Array2::from_elem((1, 4), MASKED);
        labels[[0, 3]] = 12;
        let batch = BatchInput {
            tokens,
            is_latent,
            labels,
            row_start: vec![0],
            row_end: vec![4],
            latent_cols: vec![2],
        };
        assert!(matches!(
            cot_sft_step(&mut params, &batch, &mut opt),
            Err(TrainError::BadConfig(_))
        ));
    }

    #[test]
    fn all_masked_batch_is_degenerate() {
        let config = ModelConfig {
            num_layers: 1,
            num_heads: 2,
            model_dim: 16,
            vocab_size: 40,
            max_positions: 32,
            tie_unembedding: true,
        };
        let mut params = ModelParams::<f32>::zeros(config);
        let mut opt = OptimizerState::new(config, AdamWParams::default());
        let batch = BatchInput {
            tokens: Array2::from_shape_vec((1, 3), vec![1u32, 2, 3]).unwrap(),
            is_latent: Array2::from_elem((1, 3), false),
            labels: Array2::from_elem((1, 3), MASKED),
            row_start: vec![0],
            row_end: vec![3],
            latent_cols: vec![],
        };
        assert!(matches!(
            cot_sft_step(&mut params, &batch, &mut opt),
            Err(TrainError::DegenerateBatch)
        ));
    }

    #[test]
    fn short_stepwise_run_learns_and_reproduces() {
        let train = tiny_records(24, 100);
        let val = tiny_records(8, 200);
        let config = tiny_train_config(Regime::CoconutScratch);
        let a = train_run(&train, &val, &config).unwrap();
        let b = train_run(&train, &val, &config).unwrap();
        assert_eq!(a.metrics, b.metrics, "training is not deterministic");
        let first = a.metrics.first().unwrap().train_loss;
        let last = a.metrics.last().unwrap().train_loss;
        assert!(last < first, "loss did not decrease: {first} -> {last}");
    }

    #[test]
    fn cot_then_coconut_switches_phase() {
        let train = tiny_records(12, 300);
        let val = tiny_records(6, 400);
        let config = tiny_train_config(Regime::CotThenCoconut);
        let out = train_run(&train, &val, &config).unwrap();
        assert_eq!(out.metrics.len(), 2);
    }

    #[test]
    fn curriculum_stage_is_logged() {
        let train = tiny_records(10, 500);
        let val = tiny_records(5, 600);
        let mut config = tiny_train_config(Regime::CoconutFinetune);
        config.schedule = CurriculumSchedule {
            epochs_per_stage: 1,
            c_thought: 1,
            max_stage: 2,
            total_epochs: 3,
        };
        config.total_epochs = 3;
        let out = train_run(&train, &val, &config).unwrap();
        let stages: Vec<usize> = out.metrics.iter().map(|m| m.stage).collect();
        assert_eq!(stages, vec![0, 1, 2]);
    }

    #[test]
    fn natural_rendering_trains_and_validates() {
        let train = tiny_records(10, 900);
        let val = tiny_records(5, 901);
        let mut config = tiny_train_config(Regime::CoconutFinetune);
        config.use_natural = true;
        config.model.vocab_size = crate::taskgen::NaturalVocab::new().size();
        config.model.max_positions = 256;
        config.schedule = CurriculumSchedule {
            epochs_per_stage: 1,
            c_thought: 1,
            max_stage: 1,
            total_epochs: 2,
        };
        config.total_epochs = 2;
        let out = train_run(&train, &val, &config).unwrap();
        assert_eq!(out.metrics.len(), 2);
        assert!(out.metrics.iter().all(|m| m.train_loss.is_finite()));
    }

    #[test]
    fn divergence_guard_fires_on_non_finite_loss() {
        let train = tiny_records(8, 700);
        let val = tiny_records(4, 800);
        let mut config = tiny_train_config(Regime::Cot);
        config.optimizer.lr = 1e18; // force the parameters to explode
        config.total_epochs = 6;
        let err = train_run(&train, &val, &config);
        assert!(
            matches!(
                err,
                Err(TrainError::Divergence { .. }) | Err(TrainError::NonFiniteGrad(_))
            ),
            "expected divergence, got {err:?}"
        );
    }

    #[test]
    fn metrics_csv_round_trips_columns() {
        let rows = vec![EpochMetrics {
            epoch: 0,
            stage: 1,
            train_loss: 2.5,
            val_accuracy: 0.75,
            lr: 1e-4,
            seed: 42,
        }];
        let path = std::env::temp_dir().join("latentlab_metrics_test.csv");
        write_metrics_csv(&rows, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "epoch,stage,train_loss,val_accuracy,lr,seed"
        );
        let fields: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(fields.len(), 6);
        assert_eq!(fields[0], "0");
        assert_eq!(fields[1], "1");
        std::fs::remove_file(&path).unwrap();
    }
}

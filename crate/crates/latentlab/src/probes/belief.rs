//! Entity-belief evolution: at each reasoning step, read the final-layer
//! lens distribution, restrict it to graph entities, renormalize, and
//! split the mass into correct-next / wrong-neighbor / target / other.

use super::ProbeError;
use crate::decode::SeqSpec;
use crate::model::{forward, logit_lens, DecodeCache, LensMode, ModelParams, SequenceItem};
use crate::taskgen::{categorize_entities, DatasetRecord, EntityCategory};
use rayon::prelude::*;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeliefMode {
    /// Probe the latent thought vectors of a latent-recurrent run.
    CoconutLatents,
    /// Probe the positions that predict each discrete reasoning token in
    /// a teacher-forced gold chain.
    CotPositions,
}

impl BeliefMode {
    pub fn label(&self) -> &'static str {
        match self {
            BeliefMode::CoconutLatents => "coconut_latents",
            BeliefMode::CotPositions => "cot_positions",
        }
    }
}

/// Per-step masses, averaged over tasks of one depth. `masses` follows
/// [`EntityCategory::ALL`] order and sums to 1; `target_entity` reports
/// the target's own mass separately (at the final step the partition
/// labels the target as correct-next).
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefStep {
    pub step: usize,
    pub masses: [f64; 4],
    pub target_entity: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeliefProfile {
    pub depth: usize,
    pub mode: BeliefMode,
    pub steps: Vec<BeliefStep>,
}

impl BeliefProfile {
    pub fn mass(&self, step: usize, cat: EntityCategory) -> Option<f64> {
        let idx = EntityCategory::ALL.iter().position(|c| *c == cat)?;
        self.steps
            .iter()
            .find(|s| s.step == step)
            .map(|s| s.masses[idx])
    }

    /// Whether correct-next carries the largest mass at `step`.
    pub fn correct_next_is_argmax(&self, step: usize) -> Option<bool> {
        let s = self.steps.iter().find(|s| s.step == step)?;
        let max = s.masses.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Some(s.masses[0] >= max - 1e-12)
    }
}

/// Per-step `(partition masses, target mass)` rows for one task.
type StepMasses = Vec<([f64; 4], f64)>;

/// Per-task, per-step entity-restricted distributions.
fn task_belief(
    params: &ModelParams<f32>,
    record: &DatasetRecord,
    mode: BeliefMode,
    spec: &SeqSpec,
    lens_mode: LensMode,
) -> Result<StepMasses, ProbeError> {
    let rendered = &record.symbolic;
    let task = &record.task;
    let final_layer = params.config.num_layers - 1;
    let depth = task.depth;

    // one lens distribution per reasoning step
    let mut step_probs: Vec<ndarray::Array1<f32>> = Vec::with_capacity(depth);
    match mode {
        BeliefMode::CoconutLatents => {
            // the thought vector entering latent slot s carries the
            // step-s frontier: it is what the pass that reads off node s
            // computes from
            let mut cache = DecodeCache::new(&params.config);
            let mut items: Vec<SequenceItem<f32>> = rendered
                .prompt_tokens
                .iter()
                .map(|&t| SequenceItem::Token(t))
                .collect();
            items.push(SequenceItem::Token(spec.start_latent));
            let mut out = forward(params, &items, &mut cache, &[])?;
            for _step in 1..=depth {
                let thought = out.final_hidden.clone();
                let lens = logit_lens(
                    params,
                    thought.view(),
                    final_layer,
                    cache.len() - 1,
                    lens_mode,
                )?;
                step_probs.push(lens.probs);
                out = forward(params, &[SequenceItem::Vector(thought)], &mut cache, &[])?;
            }
        }
        BeliefMode::CotPositions => {
            let mut items: Vec<SequenceItem<f32>> = rendered
                .prompt_tokens
                .iter()
                .map(|&t| SequenceItem::Token(t))
                .collect();
            for step in &rendered.cot_steps {
                for &t in step {
                    items.push(SequenceItem::Token(t));
                }
            }
            let mut cache = DecodeCache::new(&params.config);
            let out = forward(params, &items, &mut cache, &[final_layer])?;
            let mut pos = rendered.prompt_tokens.len() - 1;
            for step in &rendered.cot_steps {
                let h = out.trace.state(final_layer, pos).expect("captured");
                let lens = logit_lens(params, h, final_layer, pos, lens_mode)?;
                step_probs.push(lens.probs);
                pos += step.len();
            }
        }
    }

    let mut rows = Vec::with_capacity(depth);
    for (s, probs) in step_probs.iter().enumerate() {
        let step = s + 1;
        let categories = categorize_entities(task, step)?;
        // entity mass via each entity's first token
        let entity_mass: Vec<f64> = rendered
            .entity_tokens
            .iter()
            .map(|toks| probs[toks[0] as usize] as f64)
            .collect();
        let total: f64 = entity_mass.iter().sum();
        if total <= 0.0 {
            return Err(ProbeError::InvariantViolation("zero entity mass".into()));
        }
        let mut masses = [0.0f64; 4];
        for (node, &mass) in entity_mass.iter().enumerate() {
            let cat = categories.categories[node];
            let idx = EntityCategory::ALL
                .iter()
                .position(|c| *c == cat)
                .expect("category");
            masses[idx] += mass / total;
        }
        let target_entity = entity_mass[task.target] / total;
        rows.push((masses, target_entity));
    }
    Ok(rows)
}

/// Averages per-step category masses over tasks of equal depth. Returns
/// one profile per depth present in `records`, ascending.
pub fn run_belief_evolution(
    params: &ModelParams<f32>,
    records: &[DatasetRecord],
    mode: BeliefMode,
    spec: &SeqSpec,
    lens_mode: LensMode,
) -> Result<Vec<BeliefProfile>, ProbeError> {
    let per_task: Result<Vec<(usize, StepMasses)>, ProbeError> = records
        .par_iter()
        .map(|rec| {
            Ok((
                rec.task.depth,
                task_belief(params, rec, mode, spec, lens_mode)?,
            ))
        })
        .collect();
    let per_task = per_task?;

    let mut by_depth: BTreeMap<usize, Vec<&StepMasses>> = BTreeMap::new();
    for (depth, rows) in &per_task {
        by_depth.entry(*depth).or_default().push(rows);
    }
    let mut profiles = Vec::new();
    for (depth, tasks) in by_depth {
        let n = tasks.len();
        let mut steps = Vec::with_capacity(depth);
        for s in 0..depth {
            let mut masses = [0.0f64; 4];
            let mut target = 0.0f64;
            for rows in &tasks {
                for (m, v) in masses.iter_mut().zip(rows[s].0.iter()) {
                    *m += v;
                }
                target += rows[s].1;
            }
            for m in masses.iter_mut() {
                *m /= n as f64;
            }
            steps.push(BeliefStep {
                step: s + 1,
                masses,
                target_entity: target / n as f64,
                n,
            });
        }
        profiles.push(BeliefProfile { depth, mode, steps });
    }
    Ok(profiles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, ModelParams};
    use crate::taskgen::{generate_record, DatasetParams, SplitSizes, SymbolicVocab};

    fn records(n: usize, seed: u64) -> Vec<DatasetRecord> {
        let params = DatasetParams {
            seed,
            splits: SplitSizes {
                train: n,
                val: 0,
                test: 0,
            },
            ..DatasetParams::default()
        }
        .with_depth_range(4, 4);
        (0..n as u64)
            .map(|i| generate_record(&params, i).unwrap())
            .collect()
    }

    fn spec() -> SeqSpec {
        let vocab = SymbolicVocab::new();
        SeqSpec {
            eos: vocab.eos(),
            start_latent: vocab.start_latent(),
            end_latent: vocab.end_latent(),
        }
    }

    /// A rigged model whose lens output always peaks at one token: zero
    /// weights except an lnf bias aligned with that token's embedding.
    fn target_obsessed_model(target_token: u32) -> ModelParams<f32> {
        let config = ModelConfig {
            num_layers: 2,
            num_heads: 2,
            model_dim: 16,
            vocab_size: 40,
            max_positions: 128,
            tie_unembedding: true,
        };
        let mut params = ModelParams::<f32>::zeros(config);
        params.wte[[target_token as usize, 0]] = 8.0;
        params.lnf_b[0] = 4.0;
        params
    }

    #[test]
    fn masses_partition_to_one_at_every_step() {
        let recs = records(4, 9);
        let params = crate::model::init_random(
            ModelConfig {
                num_layers: 2,
                num_heads: 2,
                model_dim: 16,
                vocab_size: 40,
                max_positions: 128,
                tie_unembedding: true,
            },
            2,
        )
        .unwrap();
        for mode in [BeliefMode::CoconutLatents, BeliefMode::CotPositions] {
            let profiles =
                run_belief_evolution(&params, &recs, mode, &spec(), LensMode::FinalNorm).unwrap();
            assert_eq!(profiles.len(), 1);
            let profile = &profiles[0];
            assert_eq!(profile.depth, 4);
            assert_eq!(profile.steps.len(), 4);
            for step in &profile.steps {
                let sum: f64 = step.masses.iter().sum();
                assert!((sum - 1.0).abs() < 1e-6, "masses sum {sum}");
                assert!(step.masses.iter().all(|&m| m >= 0.0));
                assert_eq!(step.n, 4);
            }
        }
    }

    #[test]
    fn target_obsessed_model_puts_mass_on_target() {
        let recs = records(1, 31);
        let rec = &recs[0];
        let target_token = rec.symbolic.entity_tokens[rec.task.target][0];
        let params = target_obsessed_model(target_token);
        let profiles = run_belief_evolution(
            &params,
            std::slice::from_ref(rec),
            BeliefMode::CoconutLatents,
            &spec(),
            LensMode::FinalNorm,
        )
        .unwrap();
        let profile = &profiles[0];
        for step in &profile.steps {
            assert!(
                step.target_entity > 0.95,
                "step {} target mass {}",
                step.step,
                step.target_entity
            );
        }
        // at the final step the tie rule folds the target into correct-next
        let last = profile.steps.last().unwrap();
        assert!(last.masses[0] > 0.95);
    }

    #[test]
    fn belief_matches_manual_lens_computation_on_hand_built_model() {
        // single task, rigged 1-layer-ish model: recompute step-1 masses
        // by hand from the raw lens distribution
        let recs = records(1, 77);
        let rec = &recs[0];
        let params = crate::model::init_random(
            ModelConfig {
                num_layers: 2,
                num_heads: 2,
                model_dim: 16,
                vocab_size: 40,
                max_positions: 128,
                tie_unembedding: true,
            },
            51,
        )
        .unwrap();
        let sp = spec();
        let profiles = run_belief_evolution(
            &params,
            std::slice::from_ref(rec),
            BeliefMode::CoconutLatents,
            &sp,
            LensMode::FinalNorm,
        )
        .unwrap();
        let got = &profiles[0].steps[0];

        // manual: forward prompt + start_latent, lens the final hidden
        let mut cache = DecodeCache::new(&params.config);
        let mut items: Vec<SequenceItem<f32>> = rec
            .symbolic
            .prompt_tokens
            .iter()
            .map(|&t| SequenceItem::Token(t))
            .collect();
        items.push(SequenceItem::Token(sp.start_latent));
        let out = forward(&params, &items, &mut cache, &[]).unwrap();
        let lens = logit_lens(
            &params,
            out.final_hidden.view(),
            params.config.num_layers - 1,
            0,
            LensMode::FinalNorm,
        )
        .unwrap();
        let cats = categorize_entities(&rec.task, 1).unwrap();
        let mut masses = [0.0f64; 4];
        let mut total = 0.0;
        for node in 0..rec.task.graph.node_count {
            total += lens.probs[rec.symbolic.entity_tokens[node][0] as usize] as f64;
        }
        for node in 0..rec.task.graph.node_count {
            let p = lens.probs[rec.symbolic.entity_tokens[node][0] as usize] as f64 / total;
            let idx = EntityCategory::ALL
                .iter()
                .position(|c| *c == cats.categories[node])
                .unwrap();
            masses[idx] += p;
        }
        for (i, (a, b)) in got.masses.iter().zip(masses.iter()).enumerate() {
            assert!((a - b).abs() < 1e-6, "category {i}");
        }
    }
}

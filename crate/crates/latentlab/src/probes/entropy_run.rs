//! Side-by-side entropy profiles: soft-mixture vs discrete generation.

use super::{shannon_entropy, ProbeError, ProbeLayerSet};
use crate::decode::{soft_thinking_step, SoftThinkingConfig};
use crate::model::{forward, logit_lens, DecodeCache, LensMode, ModelParams, SequenceItem};
use crate::taskgen::DatasetRecord;
use rayon::prelude::*;
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq)]
pub struct EntropyRow {
    pub layer: usize,
    /// Checkpoint index along the generation; `None` pools every step
    /// (both aggregations are reported).
    pub checkpoint: Option<usize>,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntropyProfile {
    pub strategy: &'static str,
    pub rows: Vec<EntropyRow>,
}

impl EntropyProfile {
    pub fn row(&self, layer: usize, checkpoint: Option<usize>) -> Option<&EntropyRow> {
        self.rows
            .iter()
            .find(|r| r.layer == layer && r.checkpoint == checkpoint)
    }

    /// Pooled mean entropy for one layer.
    pub fn layer_mean(&self, layer: usize) -> Option<f64> {
        self.row(layer, None).map(|r| r.mean)
    }
}

fn mean_std(samples: &[f64]) -> (f64, f64, usize) {
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    (mean, var.sqrt(), n)
}

/// (checkpoint, layer, entropy) samples from one generation.
type StepSamples = Vec<(usize, usize, f64)>;

#[allow(clippy::too_many_arguments)]
fn generate_with_lens<F>(
    params: &ModelParams<f32>,
    prompt: &[u32],
    max_steps: usize,
    eos: u32,
    checkpoint_every: usize,
    layers: &ProbeLayerSet,
    lens_mode: LensMode,
    mut next_item: F,
) -> Result<StepSamples, ProbeError>
where
    F: FnMut(&ndarray::Array1<f32>, usize) -> (SequenceItem<f32>, u32),
{
    let mut cache = DecodeCache::new(&params.config);
    let items: Vec<SequenceItem<f32>> = prompt.iter().map(|&t| SequenceItem::Token(t)).collect();
    let mut out = forward(params, &items, &mut cache, &[])?;
    let mut samples = Vec::new();
    for step in 0..max_steps {
        let (item, token) = next_item(&out.logits, step);
        out = forward(params, &[item], &mut cache, layers.layers())?;
        if step % checkpoint_every == 0 {
            let checkpoint = step / checkpoint_every;
            let pos = cache.len() - 1;
            for &layer in layers.layers() {
                let h = out.trace.state(layer, pos).expect("captured layer state");
                let lens = logit_lens(params, h, layer, pos, lens_mode)?;
                samples.push((checkpoint, layer, shannon_entropy(lens.probs.view())?));
            }
        }
        if token == eos {
            break;
        }
    }
    Ok(samples)
}

/// Runs soft and discrete generations independently per task, applying
/// the lens at each probe layer every `checkpoint_every` steps, and
/// aggregates mean and std per (layer, checkpoint) and pooled per layer.
#[allow(clippy::too_many_arguments)]
pub fn run_entropy_comparison(
    params: &ModelParams<f32>,
    records: &[DatasetRecord],
    cfg: &SoftThinkingConfig,
    eos: u32,
    checkpoint_every: usize,
    layers: &ProbeLayerSet,
    lens_mode: LensMode,
) -> Result<(EntropyProfile, EntropyProfile), ProbeError> {
    if checkpoint_every == 0 {
        return Err(ProbeError::BadInput(
            "checkpoint_every must be at least 1".into(),
        ));
    }
    let per_task: Result<Vec<(StepSamples, StepSamples)>, ProbeError> = records
        .par_iter()
        .map(|rec| {
            let rendered = &rec.symbolic;
            let prompt = &rendered.prompt_tokens;
            let budget = rec.task.depth
                + rendered.answer_tokens.len()
                + rendered.cot_steps.iter().map(|s| s.len()).sum::<usize>()
                + 2;
            let thinking_budget = rec.task.depth;

            let mut soft_step = 0usize;
            let soft = generate_with_lens(
                params,
                prompt,
                budget,
                eos,
                checkpoint_every,
                layers,
                lens_mode,
                |logits, _| {
                    soft_step += 1;
                    if soft_step <= thinking_budget {
                        let (tok, _) = soft_thinking_step(params, logits.view(), cfg);
                        let id = tok.argmax_token();
                        (SequenceItem::Vector(tok.embedding), id)
                    } else {
                        let id = crate::decode::greedy_argmax(logits.view());
                        (SequenceItem::Token(id), id)
                    }
                },
            )?;
            let discrete = generate_with_lens(
                params,
                prompt,
                budget,
                eos,
                checkpoint_every,
                layers,
                lens_mode,
                |logits, _| {
                    let id = crate::decode::greedy_argmax(logits.view());
                    (SequenceItem::Token(id), id)
                },
            )?;
            Ok((soft, discrete))
        })
        .collect();
    let per_task = per_task?;

    let build = |pick: &dyn Fn(&(StepSamples, StepSamples)) -> &StepSamples,
                 strategy: &'static str|
     -> EntropyProfile {
        let mut by_key: BTreeMap<(usize, Option<usize>), Vec<f64>> = BTreeMap::new();
        for pair in &per_task {
            for &(checkpoint, layer, entropy) in pick(pair) {
                by_key
                    .entry((layer, Some(checkpoint)))
                    .or_default()
                    .push(entropy);
                by_key.entry((layer, None)).or_default().push(entropy);
            }
        }
        let rows = by_key
            .into_iter()
            .map(|((layer, checkpoint), samples)| {
                let (mean, std, n) = mean_std(&samples);
                EntropyRow {
                    layer,
                    checkpoint,
                    mean,
                    std,
                    n,
                }
            })
            .collect();
        EntropyProfile { strategy, rows }
    };
    Ok((build(&|p| &p.0, "soft"), build(&|p| &p.1, "discrete")))
}

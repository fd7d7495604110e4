//! Paired single-token intervention during soft-mixture generation: two
//! forward passes off the same cached soft prefix, one fed the mixture
//! embedding and one the discrete argmax embedding.

use super::{
    cosine_similarity, kl_divergence, shannon_entropy, topk_overlap, ProbeError, ProbeLayerSet,
};
use crate::decode::{soft_thinking_step, SoftThinkingConfig};
use crate::model::{forward, logit_lens, DecodeCache, LensMode, ModelParams, SequenceItem};

#[derive(Debug, Clone, PartialEq)]
pub struct LayerMetrics {
    pub layer: usize,
    pub kl: f64,
    pub cosine: f64,
    pub entropy_diff: f64,
    pub top10_overlap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterventionRecord {
    pub step: usize,
    /// Shannon entropy of the mixture weights at this step.
    pub mixing_entropy: f64,
    pub layers: Vec<LayerMetrics>,
}

/// Runs a soft-thinking generation from `prompt` for `budget` steps,
/// intervening every `every` steps. At each intervention the soft prefix
/// cache is shared bitwise between the two passes; only the current
/// item differs.
#[allow(clippy::too_many_arguments)]
pub fn run_token_intervention(
    params: &ModelParams<f32>,
    prompt: &[u32],
    cfg: &SoftThinkingConfig,
    budget: usize,
    every: usize,
    layers: &ProbeLayerSet,
    lens_mode: LensMode,
) -> Result<Vec<InterventionRecord>, ProbeError> {
    if every == 0 {
        return Err(ProbeError::BadInput(
            "intervention cadence must be at least 1".into(),
        ));
    }
    let mut cache = DecodeCache::new(&params.config);
    let items: Vec<SequenceItem<f32>> = prompt.iter().map(|&t| SequenceItem::Token(t)).collect();
    let mut out = forward(params, &items, &mut cache, &[])?;

    let mut records = Vec::new();
    for step in 0..budget {
        let (soft, _) = soft_thinking_step(params, out.logits.view(), cfg);
        if step % every == 0 {
            let argmax_id = soft.argmax_token();
            let pos = cache.len();

            let mut soft_cache = cache.clone();
            let soft_out = forward(
                params,
                &[SequenceItem::Vector(soft.embedding.clone())],
                &mut soft_cache,
                layers.layers(),
            )?;
            let mut arg_cache = cache.clone();
            let arg_out = forward(
                params,
                &[SequenceItem::Token(argmax_id)],
                &mut arg_cache,
                layers.layers(),
            )?;

            let mut layer_metrics = Vec::with_capacity(layers.layers().len());
            for &layer in layers.layers() {
                let h_soft = soft_out.trace.state(layer, pos).expect("captured");
                let h_arg = arg_out.trace.state(layer, pos).expect("captured");
                let p_soft = logit_lens(params, h_soft, layer, pos, lens_mode)?.probs;
                let p_arg = logit_lens(params, h_arg, layer, pos, lens_mode)?.probs;
                layer_metrics.push(LayerMetrics {
                    layer,
                    kl: kl_divergence(p_soft.view(), p_arg.view())?,
                    cosine: cosine_similarity(h_soft, h_arg)?,
                    entropy_diff: shannon_entropy(p_soft.view())? - shannon_entropy(p_arg.view())?,
                    top10_overlap: topk_overlap(p_soft.view(), p_arg.view(), 10)?,
                });
            }
            records.push(InterventionRecord {
                step,
                mixing_entropy: soft.mixing_entropy(),
                layers: layer_metrics,
            });
            // the soft pass extends the real trajectory
            cache = soft_cache;
            out = soft_out;
        } else {
            out = forward(
                params,
                &[SequenceItem::Vector(soft.embedding.clone())],
                &mut cache,
                &[],
            )?;
        }
    }
    Ok(records)
}

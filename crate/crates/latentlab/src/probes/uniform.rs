//! Synthetic uniform-superposition experiment: place an equal-weight
//! mixture of k random token embeddings after a bos-only context and
//! trace lens entropy across layers, trained weights against random
//! initialization.

use super::{shannon_entropy, ProbeError, ProbeLayerSet};
use crate::decode::uniform_superposition_embed;
use crate::model::{forward, logit_lens, DecodeCache, LensMode, ModelParams, SequenceItem};
use crate::rng::{derive_seed, rng_from_seed};
use rand::seq::SliceRandom;
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq)]
pub struct UniformRow {
    /// "trained" or "random".
    pub weights: &'static str,
    pub k: usize,
    pub layer: usize,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

/// Lens entropy of one probe layer at the superposed position.
fn sample_entropies(
    params: &ModelParams<f32>,
    ids: &[u32],
    bos: u32,
    layers: &ProbeLayerSet,
    lens_mode: LensMode,
) -> Result<Vec<(usize, f64)>, ProbeError> {
    let soft = uniform_superposition_embed(params, ids)?;
    let mut cache = DecodeCache::new(&params.config);
    let items = vec![
        SequenceItem::Token(bos),
        SequenceItem::Vector(soft.embedding),
    ];
    let out = forward(params, &items, &mut cache, layers.layers())?;
    let pos = 1;
    let mut rows = Vec::with_capacity(layers.layers().len());
    for &layer in layers.layers() {
        let h = out.trace.state(layer, pos).expect("captured");
        let lens = logit_lens(params, h, layer, pos, lens_mode)?;
        rows.push((layer, shannon_entropy(lens.probs.view())?));
    }
    Ok(rows)
}

/// For each k, draws `samples_per_k` random distinct token sets (the
/// same sets for both models, isolating the weights) and aggregates lens
/// entropy per probe layer.
#[allow(clippy::too_many_arguments)]
pub fn run_uniform_superposition(
    params_trained: &ModelParams<f32>,
    params_random: &ModelParams<f32>,
    k_values: &[usize],
    samples_per_k: usize,
    seed: u64,
    bos: u32,
    layers: &ProbeLayerSet,
    lens_mode: LensMode,
) -> Result<Vec<UniformRow>, ProbeError> {
    if params_trained.config != params_random.config {
        return Err(ProbeError::BadInput("model configs differ".into()));
    }
    let vocab = params_trained.config.vocab_size;
    let mut rows = Vec::new();
    for (mi, (label, params)) in [("trained", params_trained), ("random", params_random)]
        .iter()
        .enumerate()
    {
        let mut by_key: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
        for &k in k_values {
            if k == 0 || k > vocab {
                return Err(ProbeError::BadInput(format!("k = {k} out of range")));
            }
            for sample in 0..samples_per_k {
                // identical id draws for both models
                let mut rng = rng_from_seed(derive_seed(seed, (k as u64) << 32 | sample as u64));
                let mut ids: Vec<u32> = (0..vocab as u32).collect();
                ids.shuffle(&mut rng);
                ids.truncate(k);
                for (layer, entropy) in sample_entropies(params, &ids, bos, layers, lens_mode)? {
                    by_key.entry((k, layer)).or_default().push(entropy);
                }
            }
        }
        let _ = mi;
        for ((k, layer), samples) in by_key {
            let n = samples.len();
            let mean = samples.iter().sum::<f64>() / n as f64;
            let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            rows.push(UniformRow {
                weights: label,
                k,
                layer,
                mean,
                std: var.sqrt(),
                n,
            });
        }
    }
    Ok(rows)
}

/// Mean entropy for one (weights, k, layer) cell.
pub fn row_mean(rows: &[UniformRow], weights: &str, k: usize, layer: usize) -> Option<f64> {
    rows.iter()
        .find(|r| r.weights == weights && r.k == k && r.layer == layer)
        .map(|r| r.mean)
}

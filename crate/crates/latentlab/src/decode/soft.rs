//! Soft-mixture decoding: each thinking step feeds a probability-weighted
//! convex combination of token embeddings instead of a single token.

use super::greedy::argmax;
use super::{
    DecodeError, DecodeStep, DecodeTrace, SoftThinkingConfig, SoftToken, SoftWeighting,
    StepStrategy, StopReason,
};
use crate::model::{forward, DecodeCache, ModelParams, Scalar, SequenceItem};
use ndarray::{Array1, ArrayView1};

/// Builds the soft token for one step from raw logits: divide by the
/// temperature, keep the top `soft_top_k` logits, normalize those with a
/// softmax (or uniform weights), and mix the corresponding embedding
/// rows. The cold-stop flag is set when the top weight exceeds `1 - c`.
pub fn soft_thinking_step<T: Scalar>(
    params: &ModelParams<T>,
    logits: ArrayView1<T>,
    cfg: &SoftThinkingConfig,
) -> (SoftToken<T>, bool) {
    let tau = T::from_f64(cfg.temperature);
    let k = cfg.soft_top_k.max(1).min(logits.len());

    // rank by scaled logit, ties toward the lower id
    let mut order: Vec<usize> = (0..logits.len()).collect();
    order.sort_by(|&a, &b| {
        (logits[b] / tau)
            .partial_cmp(&(logits[a] / tau))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let kept = &order[..k];

    let weights: Vec<T> = match cfg.weighting {
        SoftWeighting::Softmax => {
            let max = logits[kept[0]] / tau;
            let exps: Vec<T> = kept
                .iter()
                .map(|&i| (logits[i] / tau - max).exp())
                .collect();
            let sum = exps.iter().fold(T::zero(), |acc, &v| acc + v);
            exps.into_iter().map(|v| v / sum).collect()
        }
        SoftWeighting::Uniform => {
            let w = T::from_f64(1.0 / k as f64);
            vec![w; k]
        }
    };

    let support: Vec<(u32, T)> = kept.iter().map(|&i| i as u32).zip(weights).collect();
    let embedding = mix(params, &support);
    let token = SoftToken { support, embedding };
    let cold = token.max_weight().into_f64() > 1.0 - cfg.cold_stop;
    (token, cold)
}

/// The convex combination of embedding rows for a support set. A
/// singleton support copies the embedding row exactly, which makes the
/// `soft_top_k = 1` trajectory bit-identical to greedy decoding.
pub fn mix<T: Scalar>(params: &ModelParams<T>, support: &[(u32, T)]) -> Array1<T> {
    if support.len() == 1 {
        return params.wte.row(support[0].0 as usize).to_owned();
    }
    let d = params.config.model_dim;
    let mut out = Array1::<T>::zeros(d);
    for (id, w) in support {
        let row = params.wte.row(*id as usize);
        for j in 0..d {
            out[j] = out[j] + *w * row[j];
        }
    }
    out
}

/// Equal-weight superposition of `k` distinct token embeddings.
pub fn uniform_superposition_embed<T: Scalar>(
    params: &ModelParams<T>,
    token_ids: &[u32],
) -> Result<SoftToken<T>, DecodeError> {
    if token_ids.is_empty() {
        return Err(DecodeError::EmptySupport);
    }
    let mut seen = std::collections::BTreeSet::new();
    for &id in token_ids {
        if !seen.insert(id) {
            return Err(DecodeError::DuplicateId(id));
        }
    }
    let w = T::from_f64(1.0 / token_ids.len() as f64);
    let support: Vec<(u32, T)> = token_ids.iter().map(|&id| (id, w)).collect();
    let embedding = mix(params, &support);
    Ok(SoftToken { support, embedding })
}

/// Phase boundary for the thinking loop.
#[derive(Debug, Clone)]
pub struct SoftBoundary {
    /// Tokens that end the thinking phase when they become the argmax
    /// (the latent-end or answer markers, or eos itself).
    pub end_thinking_tokens: Vec<u32>,
    /// Maximum number of soft steps before switching to the answer phase.
    pub thinking_budget: usize,
    pub eos: u32,
}

/// Runs the thinking phase with soft tokens, then greedy-decodes the
/// answer with discrete tokens. Phase transitions never insert tokens,
/// so with `soft_top_k = 1` the emitted token sequence is exactly the
/// greedy sequence.
pub fn soft_thinking_decode<T: Scalar>(
    params: &ModelParams<T>,
    prompt: &[u32],
    cfg: &SoftThinkingConfig,
    boundary: &SoftBoundary,
) -> Result<(Vec<u32>, DecodeTrace<T>), DecodeError> {
    if prompt.is_empty() {
        return Err(DecodeError::EmptyPrompt);
    }
    let mut cache = DecodeCache::new(&params.config);
    let items: Vec<SequenceItem<T>> = prompt.iter().map(|&t| SequenceItem::Token(t)).collect();
    let mut out = forward(params, &items, &mut cache, &[])?;

    let mut generated = Vec::new();
    let mut steps: Vec<DecodeStep<T>> = Vec::new();
    let mut stop = StopReason::MaxTokens;
    let mut cold_stopped = false;
    let mut thinking = boundary.thinking_budget > 0;
    let mut soft_steps = 0usize;

    for index in 0..cfg.max_new_tokens {
        if thinking {
            let (soft, cold) = soft_thinking_step(params, out.logits.view(), cfg);
            let token = soft.argmax_token();
            generated.push(token);
            let boundary_hit = boundary.end_thinking_tokens.contains(&token);
            steps.push(DecodeStep {
                index,
                strategy: StepStrategy::SoftThinking,
                token: Some(token),
                soft: Some(soft.clone()),
                latent: None,
                logits: Some(out.logits.clone()),
            });
            soft_steps += 1;
            if cold {
                cold_stopped = true;
            }
            if token == boundary.eos {
                stop = StopReason::Eos;
                break;
            }
            if boundary_hit || cold || soft_steps >= boundary.thinking_budget {
                // leave the thinking phase; the boundary token itself is
                // fed discretely, a cold-stopped or budget-exhausted
                // mixture token likewise continues as its argmax
                thinking = false;
                if index + 1 == cfg.max_new_tokens {
                    break;
                }
                out = forward(params, &[SequenceItem::Token(token)], &mut cache, &[])?;
                continue;
            }
            if index + 1 == cfg.max_new_tokens {
                break;
            }
            out = forward(
                params,
                &[SequenceItem::Vector(soft.embedding.clone())],
                &mut cache,
                &[],
            )?;
        } else {
            let token = argmax(out.logits.view());
            generated.push(token);
            steps.push(DecodeStep {
                index,
                strategy: StepStrategy::Greedy,
                token: Some(token),
                soft: None,
                latent: None,
                logits: Some(out.logits.clone()),
            });
            if token == boundary.eos {
                stop = StopReason::Eos;
                break;
            }
            if index + 1 == cfg.max_new_tokens {
                break;
            }
            out = forward(params, &[SequenceItem::Token(token)], &mut cache, &[])?;
        }
    }
    if cold_stopped {
        stop = StopReason::ColdStop;
    }
    Ok((
        generated,
        DecodeTrace {
            steps,
            stop_reason: stop,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decode::greedy_decode;
    use crate::model::{init_random, ModelConfig};

    fn tiny() -> ModelParams<f32> {
        init_random(
            ModelConfig {
                num_layers: 2,
                num_heads: 2,
                model_dim: 16,
                vocab_size: 11,
                max_positions: 64,
                tie_unembedding: true,
            },
            31,
        )
        .unwrap()
    }

    fn logits_from(values: &[f32]) -> Array1<f32> {
        Array1::from_vec(values.to_vec())
    }

    #[test]
    fn singleton_soft_token_is_exact_embedding_row() {
        let params = tiny();
        let cfg = SoftThinkingConfig {
            soft_top_k: 1,
            ..Default::default()
        };
        let logits = logits_from(&[0.0, 3.0, 1.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let (soft, _) = soft_thinking_step(&params, logits.view(), &cfg);
        assert_eq!(soft.support.len(), 1);
        assert_eq!(soft.argmax_token(), 1);
        assert_eq!(soft.embedding, params.wte.row(1).to_owned());
    }

    #[test]
    fn kept_softmax_mixing_entropy_matches_direct_evaluation() {
        let params = tiny();
        // logits chosen so the kept softmax is exactly (0.5, 0.25, 0.25)
        let l2 = (2.0f32).ln();
        let logits = logits_from(&[
            0.6 * l2,
            0.0,
            0.0,
            -30.0,
            -30.0,
            -30.0,
            -30.0,
            -30.0,
            -30.0,
            -30.0,
            -30.0,
        ]);
        let cfg = SoftThinkingConfig {
            soft_top_k: 3,
            temperature: 0.6,
            ..Default::default()
        };
        let (soft, _) = soft_thinking_step(&params, logits.view(), &cfg);
        let weights: Vec<f32> = soft.support.iter().map(|(_, w)| *w).collect();
        assert!((weights[0] - 0.5).abs() < 1e-5, "{weights:?}");
        assert!((weights[1] - 0.25).abs() < 1e-5);
        assert!((weights[2] - 0.25).abs() < 1e-5);
        // direct -sum p ln p evaluation
        assert!((soft.mixing_entropy() - 1.0397).abs() < 1e-3);
    }

    #[test]
    fn zero_cold_stop_never_fires() {
        let params = tiny();
        let cfg = SoftThinkingConfig {
            soft_top_k: 1,
            cold_stop: 0.0,
            ..Default::default()
        };
        let logits = logits_from(&[9.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let (soft, cold) = soft_thinking_step(&params, logits.view(), &cfg);
        assert_eq!(soft.max_weight(), 1.0);
        assert!(!cold, "weight 1.0 must not exceed 1 - 0.0");
    }

    #[test]
    fn cold_stop_monotone_in_threshold() {
        let params = tiny();
        let logits = logits_from(&[2.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let mut fired_at: Vec<f64> = Vec::new();
        for c in [0.0, 0.2, 0.5, 0.9] {
            let cfg = SoftThinkingConfig {
                soft_top_k: 5,
                cold_stop: c,
                ..Default::default()
            };
            let (_, cold) = soft_thinking_step(&params, logits.view(), &cfg);
            if cold {
                fired_at.push(c);
            }
        }
        // once it fires it keeps firing for every larger threshold
        if let Some(&first) = fired_at.first() {
            for c in [0.0, 0.2, 0.5, 0.9].iter().filter(|&&c| c >= first) {
                assert!(fired_at.contains(c));
            }
        }
    }

    #[test]
    fn uniform_weighting_gives_equal_thirds() {
        let params = tiny();
        let cfg = SoftThinkingConfig {
            soft_top_k: 3,
            weighting: SoftWeighting::Uniform,
            ..Default::default()
        };
        let logits = logits_from(&[5.0, 4.0, 3.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let (soft, _) = soft_thinking_step(&params, logits.view(), &cfg);
        for (_, w) in &soft.support {
            assert!((w - 1.0 / 3.0).abs() < 1e-6);
        }
        assert!((soft.mixing_entropy() - (3.0f64).ln()).abs() < 1e-6);
    }

    #[test]
    fn k1_reduction_reproduces_greedy_exactly() {
        let params = tiny();
        let eos = 10u32;
        for seed_prompt in [[1u32, 2, 3].as_slice(), &[4, 5], &[7, 0, 2, 9]] {
            let (greedy, _) = greedy_decode(&params, seed_prompt, eos, 24).unwrap();
            let cfg = SoftThinkingConfig {
                soft_top_k: 1,
                max_new_tokens: 24,
                ..Default::default()
            };
            let boundary = SoftBoundary {
                end_thinking_tokens: vec![],
                thinking_budget: 6,
                eos,
            };
            let (soft, _) = soft_thinking_decode(&params, seed_prompt, &cfg, &boundary).unwrap();
            assert_eq!(soft, greedy, "prompt {seed_prompt:?}");
        }
    }

    #[test]
    fn convexity_reconstruction_matches_stored_embedding() {
        let params = tiny();
        let cfg = SoftThinkingConfig {
            soft_top_k: 4,
            ..Default::default()
        };
        let logits = logits_from(&[1.0, 0.8, 0.6, 0.4, 0.2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let (soft, _) = soft_thinking_step(&params, logits.view(), &cfg);
        let rebuilt = mix(&params, &soft.support);
        for (a, b) in soft.embedding.iter().zip(rebuilt.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
        let wsum: f32 = soft.support.iter().map(|(_, w)| *w).sum();
        assert!((wsum - 1.0).abs() < 1e-6);
    }

    #[test]
    fn uniform_superposition_basics() {
        let params = tiny();
        let one = uniform_superposition_embed(&params, &[3]).unwrap();
        assert_eq!(one.embedding, params.wte.row(3).to_owned());
        let two = uniform_superposition_embed(&params, &[2, 5]).unwrap();
        for j in 0..16 {
            let expected = 0.5 * params.wte[[2, j]] + 0.5 * params.wte[[5, j]];
            assert!((two.embedding[j] - expected).abs() < 1e-7);
        }
        assert!((two.mixing_entropy() - (2.0f64).ln()).abs() < 1e-9);
        assert!(matches!(
            uniform_superposition_embed(&params, &[1, 1]),
            Err(DecodeError::DuplicateId(1))
        ));
    }
}

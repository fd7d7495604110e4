//! Latent-recurrent decoding: the model's own final-layer hidden state
//! becomes the next input embedding.

use super::greedy::argmax;
use super::{DecodeError, DecodeStep, DecodeTrace, StepStrategy, StopReason};
use crate::model::{forward, DecodeCache, ModelParams, Scalar, SequenceItem};

/// Appends `start_latent`, runs `n_latent` recurrence steps feeding each
/// final hidden state back as the next input vector, appends
/// `end_latent`, then greedy-decodes the answer. Latent vectors are
/// recorded in the trace.
pub fn coconut_decode<T: Scalar>(
    params: &ModelParams<T>,
    prompt: &[u32],
    n_latent: usize,
    start_latent: u32,
    end_latent: u32,
    eos: u32,
    max_answer: usize,
) -> Result<(Vec<u32>, DecodeTrace<T>), DecodeError> {
    if prompt.is_empty() {
        return Err(DecodeError::EmptyPrompt);
    }
    let mut cache = DecodeCache::new(&params.config);
    let mut items: Vec<SequenceItem<T>> = prompt.iter().map(|&t| SequenceItem::Token(t)).collect();
    items.push(SequenceItem::Token(start_latent));
    let mut out = forward(params, &items, &mut cache, &[])?;

    let mut steps: Vec<DecodeStep<T>> = Vec::new();
    for j in 0..n_latent {
        let latent = out.final_hidden.clone();
        steps.push(DecodeStep {
            index: j,
            strategy: StepStrategy::LatentRecurrence,
            token: None,
            soft: None,
            latent: Some(latent.clone()),
            logits: Some(out.logits.clone()),
        });
        out = forward(params, &[SequenceItem::Vector(latent)], &mut cache, &[])?;
    }
    out = forward(params, &[SequenceItem::Token(end_latent)], &mut cache, &[])?;

    let mut generated = Vec::new();
    let mut stop = StopReason::MaxTokens;
    for a in 0..max_answer {
        let token = argmax(out.logits.view());
        generated.push(token);
        steps.push(DecodeStep {
            index: n_latent + a,
            strategy: StepStrategy::Greedy,
            token: Some(token),
            soft: None,
            latent: None,
            logits: Some(out.logits.clone()),
        });
        if token == eos {
            stop = StopReason::Eos;
            break;
        }
        if a + 1 == max_answer {
            break;
        }
        out = forward(params, &[SequenceItem::Token(token)], &mut cache, &[])?;
    }
    Ok((
        generated,
        DecodeTrace {
            steps,
            stop_reason: stop,
        },
    ))
}

/// The zero-latent ablation. With `keep_markers` the prompt is followed
/// by `start_latent end_latent` before greedy decoding; without, the
/// markers are dropped entirely. Both forms exist because reports state
/// which one produced each number.
pub fn no_latent_decode<T: Scalar>(
    params: &ModelParams<T>,
    prompt: &[u32],
    keep_markers: bool,
    start_latent: u32,
    end_latent: u32,
    eos: u32,
    max_answer: usize,
) -> Result<(Vec<u32>, DecodeTrace<T>), DecodeError> {
    if keep_markers {
        coconut_decode(params, prompt, 0, start_latent, end_latent, eos, max_answer)
    } else {
        super::greedy_decode(params, prompt, eos, max_answer)
    }
}

//! Greedy discrete decoding.

use super::{DecodeError, DecodeStep, DecodeTrace, StepStrategy, StopReason};
use crate::model::{forward, DecodeCache, ModelParams, Scalar, SequenceItem};
use ndarray::ArrayView1;

/// Argmax over logits; ties break toward the lower token id.
pub fn argmax<T: Scalar>(logits: ArrayView1<T>) -> u32 {
    let mut best = 0usize;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    best as u32
}

/// Appends the argmax token until `eos` or `max_new` tokens. Returns the
/// generated continuation (including the eos when reached).
pub fn greedy_decode<T: Scalar>(
    params: &ModelParams<T>,
    prompt: &[u32],
    eos: u32,
    max_new: usize,
) -> Result<(Vec<u32>, DecodeTrace<T>), DecodeError> {
    if prompt.is_empty() {
        return Err(DecodeError::EmptyPrompt);
    }
    let mut cache = DecodeCache::new(&params.config);
    let items: Vec<SequenceItem<T>> = prompt.iter().map(|&t| SequenceItem::Token(t)).collect();
    let mut out = forward(params, &items, &mut cache, &[])?;

    let mut generated = Vec::new();
    let mut steps = Vec::new();
    let mut stop = StopReason::MaxTokens;
    for index in 0..max_new {
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
        if token == eos {
            stop = StopReason::Eos;
            break;
        }
        if index + 1 == max_new {
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

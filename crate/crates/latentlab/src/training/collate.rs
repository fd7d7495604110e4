//! Left-pad collation aligning latent columns across a batch.

use super::{ExampleItem, TrainError, TrainingExample};
use crate::model::batch::{BatchInput, MASKED};
use ndarray::Array2;

/// Left-pads each row so every latent span starts in the same column,
/// then right-pads the tails to a common length. Rows without latents
/// (or with shorter spans) carry ordinary tokens in those columns.
pub fn collate(examples: &[TrainingExample], pad_token: u32) -> Result<BatchInput, TrainError> {
    if examples.is_empty() {
        return Err(TrainError::BadConfig("empty batch".into()));
    }
    for ex in examples {
        if ex.is_empty() {
            return Err(TrainError::BadConfig("empty example".into()));
        }
        // latent placeholders must form one contiguous run
        if let Some(first) = ex.first_latent_index() {
            let n = ex.latent_count();
            let contiguous = ex.items[first..first + n]
                .iter()
                .all(|i| matches!(i, ExampleItem::Latent));
            if !contiguous {
                return Err(TrainError::BadConfig("non-contiguous latent span".into()));
            }
        }
    }

    let anchor = examples.iter().filter_map(|e| e.first_latent_index()).max();
    let left_pad: Vec<usize> = examples
        .iter()
        .map(|e| match (anchor, e.first_latent_index()) {
            (Some(a), Some(f)) => a - f,
            _ => 0,
        })
        .collect();
    let total_len = examples
        .iter()
        .zip(&left_pad)
        .map(|(e, &lp)| lp + e.len())
        .max()
        .expect("non-empty");

    let b = examples.len();
    let mut tokens = Array2::<u32>::from_elem((b, total_len), pad_token);
    let mut is_latent = Array2::<bool>::from_elem((b, total_len), false);
    let mut labels = Array2::<i64>::from_elem((b, total_len), MASKED);
    let mut row_start = Vec::with_capacity(b);
    let mut row_end = Vec::with_capacity(b);
    let mut latent_cols_set = std::collections::BTreeSet::new();

    for (bi, (ex, &lp)) in examples.iter().zip(&left_pad).enumerate() {
        row_start.push(lp);
        row_end.push(lp + ex.len());
        for (t, item) in ex.items.iter().enumerate() {
            let col = lp + t;
            match item {
                ExampleItem::Token(id) => tokens[[bi, col]] = *id,
                ExampleItem::Latent => {
                    is_latent[[bi, col]] = true;
                    latent_cols_set.insert(col);
                }
            }
            labels[[bi, col]] = ex.labels[t];
        }
    }

    let latent_cols: Vec<usize> = latent_cols_set.into_iter().collect();
    for w in latent_cols.windows(2) {
        if w[1] != w[0] + 1 {
            return Err(TrainError::BadConfig(
                "collated latent columns not contiguous".into(),
            ));
        }
    }
    Ok(BatchInput {
        tokens,
        is_latent,
        labels,
        row_start,
        row_end,
        latent_cols,
    })
}

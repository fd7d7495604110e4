//! Finite-difference oracle for the training gradients.
//!
//! Central differences over the batched loss, evaluated in f64. The
//! oracle touches only [`forward_batch`], so it stays independent of the
//! hand-written backward pass it is checking.

use super::batch::{forward_batch, loss_and_grads, BatchInput, TrainOptions};
use super::{ModelError, ModelParams};
use crate::rng::rng_from_seed;
use rand::Rng;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub sampled: usize,
    pub within_tol: usize,
    pub worst_rel_err: f64,
    pub tolerance: f64,
    /// Fraction of sampled coordinates required inside tolerance.
    pub required_fraction: f64,
}

impl GradCheckReport {
    pub fn fraction_ok(&self) -> f64 {
        self.within_tol as f64 / self.sampled as f64
    }

    pub fn passed(&self) -> bool {
        self.fraction_ok() >= self.required_fraction
    }
}

/// Compares reverse-mode gradients against central finite differences
/// (step `step`) on `n_coords` coordinates sampled across all parameter
/// tensors. Relative error uses `max(|analytic|, |numeric|, 1e-8)` as the
/// denominator.
pub fn finite_difference_check(
    params: &ModelParams<f64>,
    batch: &BatchInput,
    opts: &TrainOptions,
    n_coords: usize,
    step: f64,
    tolerance: f64,
    seed: u64,
) -> Result<GradCheckReport, ModelError> {
    let (_, grads, _) = loss_and_grads(params, batch, opts)?;

    let sizes: Vec<usize> = params.tensors().iter().map(|(_, _, d)| d.len()).collect();
    let total: usize = sizes.iter().sum();
    let mut rng = rng_from_seed(seed);
    let mut flat_indices: Vec<usize> = (0..n_coords).map(|_| rng.random_range(0..total)).collect();
    flat_indices.sort_unstable();
    flat_indices.dedup();

    let locate = |flat: usize| -> (usize, usize) {
        let mut remaining = flat;
        for (ti, &size) in sizes.iter().enumerate() {
            if remaining < size {
                return (ti, remaining);
            }
            remaining -= size;
        }
        unreachable!("flat index out of range");
    };

    let mut within = 0usize;
    let mut worst = 0.0f64;
    let mut work = params.clone();
    for &flat in &flat_indices {
        let (ti, offset) = locate(flat);
        let original = work.tensors()[ti].2[offset];
        let loss_at = |work: &mut ModelParams<f64>, value: f64| -> Result<f64, ModelError> {
            {
                let mut tensors = work.tensors_mut();
                tensors[ti].1[offset] = value;
            }
            Ok(forward_batch(work, batch)?.loss)
        };
        let plus = loss_at(&mut work, original + step)?;
        let minus = loss_at(&mut work, original - step)?;
        {
            let mut tensors = work.tensors_mut();
            tensors[ti].1[offset] = original;
        }
        let numeric = (plus - minus) / (2.0 * step);
        let analytic = grads.tensors()[ti].2[offset];
        let denom = analytic.abs().max(numeric.abs()).max(1e-8);
        let rel = (analytic - numeric).abs() / denom;
        if rel <= tolerance {
            within += 1;
        }
        if rel > worst {
            worst = rel;
        }
    }

    Ok(GradCheckReport {
        sampled: flat_indices.len(),
        within_tol: within,
        worst_rel_err: worst,
        tolerance,
        required_fraction: 0.99,
    })
}

//! Distribution and vector metrics.

use super::{ProbeError, ProbeLayerSet};
use crate::model::Scalar;
use ndarray::ArrayView1;

/// Five evenly spaced probe layers: 0, L/4, L/2, 3L/4, L-1 (floor
/// division), deduplicated in order. For L=28 this is {0, 7, 14, 21, 27}.
pub fn probe_layers(num_layers: usize) -> Result<ProbeLayerSet, ProbeError> {
    if num_layers < 2 {
        return Err(ProbeError::BadInput(format!(
            "need at least 2 layers, got {num_layers}"
        )));
    }
    let raw = [
        0,
        num_layers / 4,
        num_layers / 2,
        3 * num_layers / 4,
        num_layers - 1,
    ];
    let mut layers = Vec::new();
    for l in raw {
        if layers.last() != Some(&l) {
            layers.push(l);
        }
    }
    ProbeLayerSet::new(layers)
}

fn check_simplex<T: Scalar>(p: ArrayView1<T>, what: &str) -> Result<(), ProbeError> {
    let mut sum = 0.0f64;
    for &v in p.iter() {
        let v = v.into_f64();
        if v < -1e-6 || !v.is_finite() {
            return Err(ProbeError::InvariantViolation(format!(
                "{what} has mass {v}"
            )));
        }
        sum += v;
    }
    if (sum - 1.0).abs() > 1e-4 {
        return Err(ProbeError::InvariantViolation(format!(
            "{what} sums to {sum}"
        )));
    }
    Ok(())
}

/// Shannon entropy in nats, with 0 ln 0 := 0.
pub fn shannon_entropy<T: Scalar>(p: ArrayView1<T>) -> Result<f64, ProbeError> {
    check_simplex(p, "entropy input")?;
    Ok(p.iter()
        .map(|v| v.into_f64())
        .filter(|&v| v > 0.0)
        .map(|v| -v * v.ln())
        .sum())
}

/// Flooring applied before KL so 32-bit softmax underflow never yields
/// an infinite divergence; recorded in report metadata.
pub const KL_FLOOR: f64 = 1e-12;

fn floor_and_normalize<T: Scalar>(p: ArrayView1<T>) -> Vec<f64> {
    let floored: Vec<f64> = p.iter().map(|v| v.into_f64().max(KL_FLOOR)).collect();
    let sum: f64 = floored.iter().sum();
    floored.into_iter().map(|v| v / sum).collect()
}

/// KL(p || q) in nats over floored, renormalized distributions.
pub fn kl_divergence<T: Scalar>(p: ArrayView1<T>, q: ArrayView1<T>) -> Result<f64, ProbeError> {
    if p.len() != q.len() {
        return Err(ProbeError::BadInput(format!(
            "distribution lengths differ: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    check_simplex(p, "kl p")?;
    check_simplex(q, "kl q")?;
    let pf = floor_and_normalize(p);
    let qf = floor_and_normalize(q);
    let kl: f64 = pf.iter().zip(&qf).map(|(&a, &b)| a * (a / b).ln()).sum();
    // Gibbs' inequality up to floating noise
    Ok(kl.max(0.0))
}

pub fn cosine_similarity<T: Scalar>(
    h1: ArrayView1<T>,
    h2: ArrayView1<T>,
) -> Result<f64, ProbeError> {
    if h1.len() != h2.len() {
        return Err(ProbeError::BadInput("vector lengths differ".into()));
    }
    let mut dot = 0.0f64;
    let mut n1 = 0.0f64;
    let mut n2 = 0.0f64;
    for (&a, &b) in h1.iter().zip(h2.iter()) {
        let (a, b) = (a.into_f64(), b.into_f64());
        dot += a * b;
        n1 += a * a;
        n2 += b * b;
    }
    if n1 == 0.0 || n2 == 0.0 {
        return Err(ProbeError::BadInput("zero vector in cosine".into()));
    }
    Ok(dot / (n1.sqrt() * n2.sqrt()))
}

/// Indices of the `k` largest entries, ties toward the lower index.
fn top_k_ids<T: Scalar>(p: ArrayView1<T>, k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| {
        p[b].partial_cmp(&p[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order.truncate(k);
    order
}

/// Fraction of shared top-k token ids between two distributions.
pub fn topk_overlap<T: Scalar>(
    p: ArrayView1<T>,
    q: ArrayView1<T>,
    k: usize,
) -> Result<f64, ProbeError> {
    if p.len() != q.len() {
        return Err(ProbeError::BadInput("distribution lengths differ".into()));
    }
    let k = k.min(p.len());
    if k == 0 {
        return Err(ProbeError::BadInput("overlap with k = 0".into()));
    }
    let sp: std::collections::BTreeSet<usize> = top_k_ids(p, k).into_iter().collect();
    let sq: std::collections::BTreeSet<usize> = top_k_ids(q, k).into_iter().collect();
    Ok(sp.intersection(&sq).count() as f64 / k as f64)
}

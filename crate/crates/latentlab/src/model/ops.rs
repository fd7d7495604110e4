//! Shared numeric primitives for the forward and backward passes.

use super::Scalar;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

pub const LN_EPS: f64 = 1e-5;

/// Row-wise layer norm. Returns the normalized output plus per-row mean
/// and reciprocal std, which the backward pass consumes.
pub fn layer_norm<T: Scalar>(
    x: ArrayView2<T>,
    g: &Array1<T>,
    b: &Array1<T>,
) -> (Array2<T>, Array1<T>, Array1<T>) {
    let (m, d) = x.dim();
    let dn = T::from_f64(d as f64);
    let eps = T::from_f64(LN_EPS);
    let mut out = Array2::<T>::zeros((m, d));
    let mut means = Array1::<T>::zeros(m);
    let mut rstds = Array1::<T>::zeros(m);
    for i in 0..m {
        let row = x.row(i);
        let mut mean = T::zero();
        for &v in row.iter() {
            mean = mean + v;
        }
        mean = mean / dn;
        let mut var = T::zero();
        for &v in row.iter() {
            let c = v - mean;
            var = var + c * c;
        }
        var = var / dn;
        let rstd = (var + eps).sqrt().recip();
        means[i] = mean;
        rstds[i] = rstd;
        let mut out_row = out.row_mut(i);
        for j in 0..d {
            out_row[j] = (row[j] - mean) * rstd * g[j] + b[j];
        }
    }
    (out, means, rstds)
}

/// Backward of [`layer_norm`]. Accumulates into `dg`/`db`, returns `dx`.
pub fn layer_norm_backward<T: Scalar>(
    dout: ArrayView2<T>,
    x: ArrayView2<T>,
    means: &Array1<T>,
    rstds: &Array1<T>,
    g: &Array1<T>,
    dg: &mut Array1<T>,
    db: &mut Array1<T>,
) -> Array2<T> {
    let (m, d) = x.dim();
    let dn = T::from_f64(d as f64);
    let mut dx = Array2::<T>::zeros((m, d));
    for i in 0..m {
        let mean = means[i];
        let rstd = rstds[i];
        let xrow = x.row(i);
        let drow = dout.row(i);
        // two reduction passes, then the fused pointwise update
        let mut mean_dxhat = T::zero();
        let mut mean_dxhat_xhat = T::zero();
        for j in 0..d {
            let xhat = (xrow[j] - mean) * rstd;
            let dxhat = drow[j] * g[j];
            mean_dxhat = mean_dxhat + dxhat;
            mean_dxhat_xhat = mean_dxhat_xhat + dxhat * xhat;
            dg[j] = dg[j] + drow[j] * xhat;
            db[j] = db[j] + drow[j];
        }
        mean_dxhat = mean_dxhat / dn;
        mean_dxhat_xhat = mean_dxhat_xhat / dn;
        let mut dxrow = dx.row_mut(i);
        for j in 0..d {
            let xhat = (xrow[j] - mean) * rstd;
            let dxhat = drow[j] * g[j];
            dxrow[j] = rstd * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
        }
    }
    dx
}

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_C: f64 = 0.044_715;

/// tanh-approximation GELU, elementwise.
pub fn gelu<T: Scalar>(x: &Array2<T>) -> Array2<T> {
    let k = T::from_f64(GELU_K);
    let c = T::from_f64(GELU_C);
    let half = T::from_f64(0.5);
    x.mapv(|v| {
        let u = k * (v + c * v * v * v);
        half * v * (T::one() + u.tanh())
    })
}

/// Elementwise GELU derivative evaluated at the pre-activation `x`,
/// multiplied into `dy`.
pub fn gelu_backward<T: Scalar>(dy: &Array2<T>, x: &Array2<T>) -> Array2<T> {
    let k = T::from_f64(GELU_K);
    let c = T::from_f64(GELU_C);
    let half = T::from_f64(0.5);
    let three_c = T::from_f64(3.0 * GELU_C);
    let mut out = dy.clone();
    ndarray::Zip::from(&mut out).and(x).for_each(|d, &v| {
        let u = k * (v + c * v * v * v);
        let t = u.tanh();
        let grad = half * (T::one() + t)
            + half * v * (T::one() - t * t) * k * (T::one() + three_c * v * v);
        *d = *d * grad;
    });
    out
}

/// In-place stable softmax over a mutable row slice; entries already set
/// to -inf stay exactly zero.
pub fn softmax_row_inplace<T: Scalar>(row: &mut [T]) {
    let mut max = T::neg_infinity();
    for &v in row.iter() {
        if v > max {
            max = v;
        }
    }
    if !max.is_finite() {
        // fully masked row: leave a uniform-free zero row
        for v in row.iter_mut() {
            *v = T::zero();
        }
        return;
    }
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum = sum + *v;
    }
    for v in row.iter_mut() {
        *v = *v / sum;
    }
}

/// Stable softmax of a logits vector.
pub fn softmax_vec<T: Scalar>(logits: ArrayView1<T>) -> Array1<T> {
    let mut out = logits.to_owned();
    softmax_row_inplace(out.as_slice_mut().expect("contiguous"));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn layer_norm_zero_mean_unit_var() {
        let x = array![[1.0f64, 2.0, 3.0, 4.0]];
        let g = Array1::ones(4);
        let b = Array1::zeros(4);
        let (out, means, rstds) = layer_norm(x.view(), &g, &b);
        assert!((means[0] - 2.5).abs() < 1e-12);
        let m: f64 = out.row(0).sum() / 4.0;
        assert!(m.abs() < 1e-12);
        assert!(rstds[0] > 0.0);
    }

    #[test]
    fn softmax_sums_to_one_and_respects_mask() {
        let mut row = vec![1.0f32, 2.0, f32::NEG_INFINITY, 0.5];
        softmax_row_inplace(&mut row);
        let sum: f32 = row.iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
        assert_eq!(row[2], 0.0);
    }

    #[test]
    fn gelu_matches_reference_points() {
        let x = array![[0.0f64, 1.0, -1.0]];
        let y = gelu(&x);
        assert!((y[[0, 0]]).abs() < 1e-12);
        assert!((y[[0, 1]] - 0.841192).abs() < 1e-5);
        assert!((y[[0, 2]] + 0.158808).abs() < 1e-5);
    }

    #[test]
    fn gelu_backward_matches_finite_difference() {
        let x = array![[0.3f64, -0.7, 1.9, -2.5]];
        let dy = Array2::ones(x.dim());
        let analytic = gelu_backward(&dy, &x);
        let h = 1e-6;
        for j in 0..4 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[[0, j]] += h;
            xm[[0, j]] -= h;
            let fd = (gelu(&xp)[[0, j]] - gelu(&xm)[[0, j]]) / (2.0 * h);
            assert!((analytic[[0, j]] - fd).abs() < 1e-8, "coord {j}");
        }
    }

    #[test]
    fn layer_norm_backward_matches_finite_difference() {
        let x = array![[0.5f64, -1.0, 2.0, 0.1], [1.5, 0.3, -0.2, -2.0]];
        let g = array![1.1f64, 0.9, 1.0, 1.3];
        let b = array![0.0f64, 0.1, -0.1, 0.2];
        let dout = array![[0.7f64, -0.3, 0.2, 1.0], [-0.5, 0.8, 0.1, 0.4]];
        let (_, means, rstds) = layer_norm(x.view(), &g, &b);
        let mut dg = Array1::zeros(4);
        let mut db = Array1::zeros(4);
        let dx = layer_norm_backward(dout.view(), x.view(), &means, &rstds, &g, &mut dg, &mut db);
        let h = 1e-6;
        let loss = |x: &Array2<f64>| -> f64 {
            let (out, _, _) = layer_norm(x.view(), &g, &b);
            (&out * &dout).sum()
        };
        for i in 0..2 {
            for j in 0..4 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[[i, j]] += h;
                xm[[i, j]] -= h;
                let fd = (loss(&xp) - loss(&xm)) / (2.0 * h);
                assert!(
                    (dx[[i, j]] - fd).abs() < 1e-7,
                    "({i},{j}): {} vs {fd}",
                    dx[[i, j]]
                );
            }
        }
    }
}

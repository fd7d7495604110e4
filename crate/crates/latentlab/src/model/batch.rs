//! Batched training forward/backward.
//!
//! A batch runs as `n + 1` passes over column segments, where `n` is the
//! number of latent-thought columns: each latent column's input embedding
//! is the final-layer residual state of the immediately preceding column
//! from the pass before, so segment `j` cannot start until segment `j-1`
//! has finished. Within a segment all rows advance together (the collator
//! aligns latent columns across the batch), queries attend over the full
//! processed prefix, and activations persist in whole-sequence buffers so
//! the backward pass can walk segments right-to-left, routing gradients
//! back through each substitution and through cross-segment attention.
//!
//! Everything is written out explicitly rather than through an autograd
//! framework: the substitution recurrence is the object of study and its
//! gradient path has to be inspectable and checkable against finite
//! differences.

use super::ops::{gelu, gelu_backward, layer_norm, layer_norm_backward, softmax_row_inplace};
use super::{ModelError, ModelParams, Scalar};
use ndarray::{s, Array1, Array2, Array3, Array4, Axis};

/// Label value marking an unsupervised position.
pub const MASKED: i64 = -1;

/// A collated batch. `labels[b][t]` is the token id the logits at column
/// `t` must predict (already shifted), or [`MASKED`]. Latent columns are
/// contiguous and column-aligned across rows; rows with fewer latents
/// simply carry discrete tokens in the tail of the latent block.
#[derive(Debug, Clone)]
pub struct BatchInput {
    /// `[B, T]` token ids; ignored at latent columns.
    pub tokens: Array2<u32>,
    /// `[B, T]` marks the columns whose input embedding is substituted.
    pub is_latent: Array2<bool>,
    /// `[B, T]` supervision targets, `MASKED` where no loss applies.
    pub labels: Array2<i64>,
    /// First real (non-pad) column per row; everything left of it is pad.
    pub row_start: Vec<usize>,
    /// One past the last real column per row.
    pub row_end: Vec<usize>,
    /// Columns containing a latent slot in at least one row; ascending,
    /// contiguous.
    pub latent_cols: Vec<usize>,
}

impl BatchInput {
    pub fn batch_size(&self) -> usize {
        self.tokens.nrows()
    }

    pub fn seq_len(&self) -> usize {
        self.tokens.ncols()
    }

    pub fn supervised_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != MASKED).count()
    }

    pub fn validate(&self, vocab_size: usize) -> Result<(), ModelError> {
        let (b, t) = self.tokens.dim();
        if self.is_latent.dim() != (b, t) || self.labels.dim() != (b, t) {
            return Err(ModelError::BadConfig(
                "batch grids disagree on shape".into(),
            ));
        }
        if self.row_start.len() != b || self.row_end.len() != b {
            return Err(ModelError::BadConfig("row bounds length mismatch".into()));
        }
        for w in self.latent_cols.windows(2) {
            if w[1] != w[0] + 1 {
                return Err(ModelError::BadConfig(
                    "latent columns not contiguous".into(),
                ));
            }
        }
        if let Some(&first) = self.latent_cols.first() {
            if first == 0 {
                return Err(ModelError::BadConfig(
                    "latent column at sequence start".into(),
                ));
            }
        }
        for bi in 0..b {
            if self.row_start[bi] >= self.row_end[bi] || self.row_end[bi] > t {
                return Err(ModelError::BadConfig(format!(
                    "bad row bounds for row {bi}"
                )));
            }
            for ti in 0..t {
                if self.is_latent[[bi, ti]] {
                    if !self.latent_cols.contains(&ti) {
                        return Err(ModelError::BadConfig(format!(
                            "latent at ({bi},{ti}) outside declared latent columns"
                        )));
                    }
                    if ti < self.row_start[bi] || ti >= self.row_end[bi] {
                        return Err(ModelError::BadConfig("latent in padded region".into()));
                    }
                } else if (self.tokens[[bi, ti]] as usize) >= vocab_size {
                    return Err(ModelError::TokenOutOfRange {
                        id: self.tokens[[bi, ti]],
                        vocab: vocab_size,
                    });
                }
            }
        }
        Ok(())
    }

    /// Column segments of the multi-pass forward: prompt, one segment per
    /// latent column, with the last segment running to the end.
    fn segments(&self) -> Vec<(usize, usize)> {
        let t = self.seq_len();
        if self.latent_cols.is_empty() {
            return vec![(0, t)];
        }
        let mut segs = vec![(0, self.latent_cols[0])];
        for (i, &c) in self.latent_cols.iter().enumerate() {
            let end = if i + 1 < self.latent_cols.len() {
                self.latent_cols[i + 1]
            } else {
                t
            };
            segs.push((c, end));
        }
        segs
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TrainOptions {
    /// Cut the gradient path at each latent substitution (ablation).
    pub detach_latents: bool,
}

struct LayerActs<T: Scalar> {
    ln1_out: Array3<T>,
    ln1_mean: Array2<T>,
    ln1_rstd: Array2<T>,
    qkv: Array3<T>,
    probs: Array4<T>,
    att: Array3<T>,
    res1: Array3<T>,
    ln2_out: Array3<T>,
    ln2_mean: Array2<T>,
    ln2_rstd: Array2<T>,
    fc: Array3<T>,
    act: Array3<T>,
    res2: Array3<T>,
}

struct Acts<T: Scalar> {
    x0: Array3<T>,
    layers: Vec<LayerActs<T>>,
    lnf_out: Array3<T>,
    lnf_mean: Array2<T>,
    lnf_rstd: Array2<T>,
    logits: Array3<T>,
}

/// Forward result of [`forward_batch`].
pub struct BatchForward<T: Scalar> {
    acts: Acts<T>,
    pub loss: f64,
    pub supervised_tokens: usize,
}

impl<T: Scalar> BatchForward<T> {
    /// `[B, T, V]` logits, for tests and probes that replay batches.
    pub fn logits(&self) -> &Array3<T> {
        &self.acts.logits
    }

    /// Final-layer post-block residual states `[B, T, d]`.
    pub fn final_residual(&self) -> &Array3<T> {
        &self.acts.layers.last().expect("at least one layer").res2
    }
}

fn gather<T: Scalar>(src: &Array3<T>, sc: usize, ec: usize) -> Array2<T> {
    let (b, _, inner) = src.dim();
    let m = ec - sc;
    let mut out = Array2::<T>::zeros((b * m, inner));
    for bi in 0..b {
        out.slice_mut(s![bi * m..(bi + 1) * m, ..])
            .assign(&src.slice(s![bi, sc..ec, ..]));
    }
    out
}

fn scatter<T: Scalar>(dst: &mut Array3<T>, sc: usize, ec: usize, src: &Array2<T>) {
    let (b, _, _) = dst.dim();
    let m = ec - sc;
    for bi in 0..b {
        dst.slice_mut(s![bi, sc..ec, ..])
            .assign(&src.slice(s![bi * m..(bi + 1) * m, ..]));
    }
}

fn scatter2<T: Scalar>(dst: &mut Array2<T>, sc: usize, ec: usize, src: &Array1<T>) {
    let b = dst.nrows();
    let m = ec - sc;
    for bi in 0..b {
        dst.slice_mut(s![bi, sc..ec])
            .assign(&src.slice(s![bi * m..(bi + 1) * m]));
    }
}

/// Runs the segmented multi-pass forward and the cross-entropy loss over
/// supervised positions. Pure function of (params, batch).
pub fn forward_batch<T: Scalar>(
    params: &ModelParams<T>,
    batch: &BatchInput,
) -> Result<BatchForward<T>, ModelError> {
    let config = &params.config;
    batch.validate(config.vocab_size)?;
    let (b, t) = batch.tokens.dim();
    let d = config.model_dim;
    let v = config.vocab_size;
    let heads = config.num_heads;
    let hd = config.head_dim();
    let scale = T::from_f64(1.0 / (hd as f64).sqrt());
    if t > config.max_positions {
        return Err(ModelError::LengthOverflow {
            len: t,
            max: config.max_positions,
        });
    }

    let mut acts = Acts {
        x0: Array3::zeros((b, t, d)),
        layers: (0..config.num_layers)
            .map(|_| LayerActs {
                ln1_out: Array3::zeros((b, t, d)),
                ln1_mean: Array2::zeros((b, t)),
                ln1_rstd: Array2::zeros((b, t)),
                qkv: Array3::zeros((b, t, 3 * d)),
                probs: Array4::zeros((b, heads, t, t)),
                att: Array3::zeros((b, t, d)),
                res1: Array3::zeros((b, t, d)),
                ln2_out: Array3::zeros((b, t, d)),
                ln2_mean: Array2::zeros((b, t)),
                ln2_rstd: Array2::zeros((b, t)),
                fc: Array3::zeros((b, t, 4 * d)),
                act: Array3::zeros((b, t, 4 * d)),
                res2: Array3::zeros((b, t, d)),
            })
            .collect(),
        lnf_out: Array3::zeros((b, t, d)),
        lnf_mean: Array2::zeros((b, t)),
        lnf_rstd: Array2::zeros((b, t)),
        logits: Array3::zeros((b, t, v)),
    };

    for (sc, ec) in batch.segments() {
        debug_assert!(ec > sc);
        let m = ec - sc;
        // input embeddings for this segment; latent columns read the
        // final-layer residual of the preceding column
        for bi in 0..b {
            for ti in sc..ec {
                let pos = ti.saturating_sub(batch.row_start[bi]);
                let pe = params.wpe.row(pos);
                if batch.is_latent[[bi, ti]] {
                    let src = acts.layers[config.num_layers - 1]
                        .res2
                        .slice(s![bi, ti - 1, ..])
                        .to_owned();
                    let mut row = acts.x0.slice_mut(s![bi, ti, ..]);
                    for j in 0..d {
                        row[j] = src[j] + pe[j];
                    }
                } else {
                    let e = params.wte.row(batch.tokens[[bi, ti]] as usize);
                    let mut row = acts.x0.slice_mut(s![bi, ti, ..]);
                    for j in 0..d {
                        row[j] = e[j] + pe[j];
                    }
                }
            }
        }

        for li in 0..config.num_layers {
            let x_in_seg = if li == 0 {
                gather(&acts.x0, sc, ec)
            } else {
                gather(&acts.layers[li - 1].res2, sc, ec)
            };
            let layer = &params.layers[li];

            let (ln1_seg, ln1_mean, ln1_rstd) =
                layer_norm(x_in_seg.view(), &layer.ln1_g, &layer.ln1_b);
            let qkv_seg = ln1_seg.dot(&layer.w_qkv) + &layer.b_qkv;
            {
                let la = &mut acts.layers[li];
                scatter(&mut la.ln1_out, sc, ec, &ln1_seg);
                scatter2(&mut la.ln1_mean, sc, ec, &ln1_mean);
                scatter2(&mut la.ln1_rstd, sc, ec, &ln1_rstd);
                scatter(&mut la.qkv, sc, ec, &qkv_seg);
            }

            let mut att_seg = Array2::<T>::zeros((b * m, d));
            for bi in 0..b {
                for h in 0..heads {
                    let qc = h * hd..(h + 1) * hd;
                    let kc = d + h * hd..d + (h + 1) * hd;
                    let vc = 2 * d + h * hd..2 * d + (h + 1) * hd;
                    let la = &acts.layers[li];
                    let q = la.qkv.slice(s![bi, sc..ec, qc]);
                    let k_all = la.qkv.slice(s![bi, 0..ec, kc]);
                    let v_all = la.qkv.slice(s![bi, 0..ec, vc]);
                    let mut scores = q.dot(&k_all.t());
                    scores.mapv_inplace(|val| val * scale);
                    for i in 0..m {
                        let ti = sc + i;
                        let mut row = scores.row_mut(i);
                        if ti < batch.row_start[bi] || ti >= batch.row_end[bi] {
                            // pad query: attend only to itself, keeping
                            // everything finite and gradient-free
                            for j in 0..ec {
                                row[j] = if j == ti { T::one() } else { T::zero() };
                            }
                            continue;
                        }
                        for j in 0..batch.row_start[bi].min(ti + 1) {
                            row[j] = T::neg_infinity();
                        }
                        for j in (ti + 1)..ec {
                            row[j] = T::neg_infinity();
                        }
                        softmax_row_inplace(row.as_slice_mut().expect("contiguous"));
                    }
                    let out_h = scores.dot(&v_all);
                    acts.layers[li]
                        .probs
                        .slice_mut(s![bi, h, sc..ec, 0..ec])
                        .assign(&scores);
                    att_seg
                        .slice_mut(s![bi * m..(bi + 1) * m, h * hd..(h + 1) * hd])
                        .assign(&out_h);
                }
            }

            let layer = &params.layers[li];
            let attn_proj = att_seg.dot(&layer.w_attn_proj) + &layer.b_attn_proj;
            let res1_seg = &x_in_seg + &attn_proj;
            let (ln2_seg, ln2_mean, ln2_rstd) =
                layer_norm(res1_seg.view(), &layer.ln2_g, &layer.ln2_b);
            let fc_seg = ln2_seg.dot(&layer.w_fc) + &layer.b_fc;
            let act_seg = gelu(&fc_seg);
            let mlp_proj = act_seg.dot(&layer.w_fc_proj) + &layer.b_fc_proj;
            let res2_seg = &res1_seg + &mlp_proj;

            let la = &mut acts.layers[li];
            scatter(&mut la.att, sc, ec, &att_seg);
            scatter(&mut la.res1, sc, ec, &res1_seg);
            scatter(&mut la.ln2_out, sc, ec, &ln2_seg);
            scatter2(&mut la.ln2_mean, sc, ec, &ln2_mean);
            scatter2(&mut la.ln2_rstd, sc, ec, &ln2_rstd);
            scatter(&mut la.fc, sc, ec, &fc_seg);
            scatter(&mut la.act, sc, ec, &act_seg);
            scatter(&mut la.res2, sc, ec, &res2_seg);
        }
    }

    // final norm and logits over the whole grid
    let res_all = gather(&acts.layers[config.num_layers - 1].res2, 0, t);
    let (lnf_all, lnf_mean, lnf_rstd) = layer_norm(res_all.view(), &params.lnf_g, &params.lnf_b);
    let logits_all = lnf_all.dot(&params.unembedding().t());
    scatter(&mut acts.lnf_out, 0, t, &lnf_all);
    scatter2(&mut acts.lnf_mean, 0, t, &lnf_mean);
    scatter2(&mut acts.lnf_rstd, 0, t, &lnf_rstd);
    scatter(&mut acts.logits, 0, t, &logits_all);

    // mean cross-entropy over supervised positions
    let mut loss = 0.0f64;
    let mut count = 0usize;
    for bi in 0..b {
        for ti in 0..t {
            let label = batch.labels[[bi, ti]];
            if label == MASKED {
                continue;
            }
            if label < 0 || label as usize >= v {
                return Err(ModelError::TokenOutOfRange {
                    id: label as u32,
                    vocab: v,
                });
            }
            let row = acts.logits.slice(s![bi, ti, ..]);
            let mut max = T::neg_infinity();
            for &val in row.iter() {
                if val > max {
                    max = val;
                }
            }
            let mut lse = 0.0f64;
            for &val in row.iter() {
                lse += (val - max).into_f64().exp();
            }
            let logp = (row[label as usize] - max).into_f64() - lse.ln();
            loss -= logp;
            count += 1;
        }
    }
    if count == 0 {
        return Err(ModelError::DegenerateBatch);
    }
    loss /= count as f64;
    if !loss.is_finite() {
        return Err(ModelError::NonFinite("training loss".into()));
    }
    Ok(BatchForward {
        acts,
        loss,
        supervised_tokens: count,
    })
}

/// Loss plus parameter gradients. Gradients flow through the latent
/// substitutions across all passes unless `opts.detach_latents` is set.
pub fn loss_and_grads<T: Scalar>(
    params: &ModelParams<T>,
    batch: &BatchInput,
    opts: &TrainOptions,
) -> Result<(f64, ModelParams<T>, usize), ModelError> {
    let fwd = forward_batch(params, batch)?;
    let grads = backward_batch(params, batch, &fwd, opts);
    Ok((fwd.loss, grads, fwd.supervised_tokens))
}

fn backward_batch<T: Scalar>(
    params: &ModelParams<T>,
    batch: &BatchInput,
    fwd: &BatchForward<T>,
    opts: &TrainOptions,
) -> ModelParams<T> {
    let config = &params.config;
    let (b, t) = batch.tokens.dim();
    let d = config.model_dim;
    let v = config.vocab_size;
    let heads = config.num_heads;
    let hd = config.head_dim();
    let scale = T::from_f64(1.0 / (hd as f64).sqrt());
    let acts = &fwd.acts;
    let count = fwd.supervised_tokens;
    let inv_count = T::from_f64(1.0 / count as f64);

    let mut grads = ModelParams::<T>::zeros(*config);

    // d loss / d logits at supervised positions: (softmax - onehot) / N
    let mut d_logits = Array2::<T>::zeros((b * t, v));
    for bi in 0..b {
        for ti in 0..t {
            let label = batch.labels[[bi, ti]];
            if label == MASKED {
                continue;
            }
            let row = acts.logits.slice(s![bi, ti, ..]);
            let mut probs = row.to_owned();
            softmax_row_inplace(probs.as_slice_mut().expect("contiguous"));
            let mut out = d_logits.row_mut(bi * t + ti);
            for j in 0..v {
                out[j] = probs[j] * inv_count;
            }
            out[label as usize] = out[label as usize] - inv_count;
        }
    }

    // unembedding and final norm backward (positionwise, whole grid)
    let lnf_all = gather(&acts.lnf_out, 0, t);
    let d_lnf_out = d_logits.dot(params.unembedding());
    let d_unembed = d_logits.t().dot(&lnf_all);
    let res_all = gather(&acts.layers[config.num_layers - 1].res2, 0, t);
    let lnf_mean_flat = Array1::from_iter(acts.lnf_mean.iter().copied());
    let lnf_rstd_flat = Array1::from_iter(acts.lnf_rstd.iter().copied());
    let d_res_top_flat = layer_norm_backward(
        d_lnf_out.view(),
        res_all.view(),
        &lnf_mean_flat,
        &lnf_rstd_flat,
        &params.lnf_g,
        &mut grads.lnf_g,
        &mut grads.lnf_b,
    );
    match &mut grads.lm_head {
        Some(head) => *head = &*head + &d_unembed,
        None => grads.wte = &grads.wte + &d_unembed,
    }

    // gradient arriving at the top of the block stack, per column;
    // latent substitutions add carries into earlier columns as segments
    // unwind right-to-left
    let mut d_out_top = Array3::<T>::zeros((b, t, d));
    scatter(&mut d_out_top, 0, t, &d_res_top_flat);

    // accumulated dK/dV from later segments, per layer
    let mut dk_acc: Vec<Array3<T>> = (0..config.num_layers)
        .map(|_| Array3::zeros((b, t, d)))
        .collect();
    let mut dv_acc: Vec<Array3<T>> = (0..config.num_layers)
        .map(|_| Array3::zeros((b, t, d)))
        .collect();

    let segments = batch.segments();
    for &(sc, ec) in segments.iter().rev() {
        let m = ec - sc;
        let mut d_x = gather(&d_out_top, sc, ec);

        for li in (0..config.num_layers).rev() {
            let layer = &params.layers[li];
            let la = &acts.layers[li];

            // MLP block: res2 = res1 + gelu(ln2(res1) Wfc + b) Wproj + b
            let act_seg = gather(&la.act, sc, ec);
            let fc_seg = gather(&la.fc, sc, ec);
            let ln2_seg = gather(&la.ln2_out, sc, ec);
            let res1_seg = gather(&la.res1, sc, ec);
            let d_act = d_x.dot(&layer.w_fc_proj.t());
            grads.layers[li].w_fc_proj = &grads.layers[li].w_fc_proj + &act_seg.t().dot(&d_x);
            grads.layers[li].b_fc_proj = &grads.layers[li].b_fc_proj + &d_x.sum_axis(Axis(0));
            let d_fc = gelu_backward(&d_act, &fc_seg);
            let d_ln2_out = d_fc.dot(&layer.w_fc.t());
            grads.layers[li].w_fc = &grads.layers[li].w_fc + &ln2_seg.t().dot(&d_fc);
            grads.layers[li].b_fc = &grads.layers[li].b_fc + &d_fc.sum_axis(Axis(0));
            let ln2_mean = Array1::from_iter(
                (0..b)
                    .flat_map(|bi| (sc..ec).map(move |ti| (bi, ti)))
                    .map(|(bi, ti)| la.ln2_mean[[bi, ti]]),
            );
            let ln2_rstd = Array1::from_iter(
                (0..b)
                    .flat_map(|bi| (sc..ec).map(move |ti| (bi, ti)))
                    .map(|(bi, ti)| la.ln2_rstd[[bi, ti]]),
            );
            let d_res1_ln = {
                let gl = &mut grads.layers[li];
                layer_norm_backward(
                    d_ln2_out.view(),
                    res1_seg.view(),
                    &ln2_mean,
                    &ln2_rstd,
                    &layer.ln2_g,
                    &mut gl.ln2_g,
                    &mut gl.ln2_b,
                )
            };
            d_x = &d_x + &d_res1_ln; // now d(res1)

            // attention block: res1 = x_in + att Wproj + b
            let att_seg = gather(&la.att, sc, ec);
            let d_att = d_x.dot(&layer.w_attn_proj.t());
            grads.layers[li].w_attn_proj = &grads.layers[li].w_attn_proj + &att_seg.t().dot(&d_x);
            grads.layers[li].b_attn_proj = &grads.layers[li].b_attn_proj + &d_x.sum_axis(Axis(0));

            let mut d_qkv_seg = Array2::<T>::zeros((b * m, 3 * d));
            for bi in 0..b {
                for h in 0..heads {
                    let qc = h * hd..(h + 1) * hd;
                    let kc = d + h * hd..d + (h + 1) * hd;
                    let vc = 2 * d + h * hd..2 * d + (h + 1) * hd;
                    let p = la.probs.slice(s![bi, h, sc..ec, 0..ec]);
                    let d_att_h = d_att.slice(s![bi * m..(bi + 1) * m, qc.clone()]);
                    let v_all = la.qkv.slice(s![bi, 0..ec, vc]);
                    let k_all = la.qkv.slice(s![bi, 0..ec, kc]);
                    let q_rows = la.qkv.slice(s![bi, sc..ec, qc.clone()]);

                    // dV over the whole prefix, dP locally
                    let d_p = d_att_h.dot(&v_all.t()); // [m, ec]
                    let dv_contrib = p.t().dot(&d_att_h); // [ec, hd]
                    {
                        let mut dv_slice =
                            dv_acc[li].slice_mut(s![bi, 0..ec, h * hd..(h + 1) * hd]);
                        ndarray::Zip::from(&mut dv_slice)
                            .and(&dv_contrib)
                            .for_each(|a, &v| *a = *a + v);
                    }

                    // softmax backward: dS = P o (dP - rowsum(P o dP))
                    let mut d_scores = d_p;
                    for i in 0..m {
                        let p_row = p.row(i);
                        let mut dot = T::zero();
                        for j in 0..ec {
                            dot = dot + p_row[j] * d_scores[[i, j]];
                        }
                        for j in 0..ec {
                            d_scores[[i, j]] = p_row[j] * (d_scores[[i, j]] - dot);
                        }
                    }

                    let mut d_q_h = d_scores.dot(&k_all); // [m, hd]
                    d_q_h.mapv_inplace(|x| x * scale);
                    d_qkv_seg
                        .slice_mut(s![bi * m..(bi + 1) * m, h * hd..(h + 1) * hd])
                        .assign(&d_q_h);
                    let mut dk_contrib = d_scores.t().dot(&q_rows); // [ec, hd]
                    dk_contrib.mapv_inplace(|x| x * scale);
                    let mut dk_slice = dk_acc[li].slice_mut(s![bi, 0..ec, h * hd..(h + 1) * hd]);
                    ndarray::Zip::from(&mut dk_slice)
                        .and(&dk_contrib)
                        .for_each(|a, &v| *a = *a + v);
                }
            }
            // fold this segment's accumulated dK/dV into its qkv gradient
            for bi in 0..b {
                d_qkv_seg
                    .slice_mut(s![bi * m..(bi + 1) * m, d..2 * d])
                    .assign(&dk_acc[li].slice(s![bi, sc..ec, ..]));
                d_qkv_seg
                    .slice_mut(s![bi * m..(bi + 1) * m, 2 * d..3 * d])
                    .assign(&dv_acc[li].slice(s![bi, sc..ec, ..]));
            }

            let ln1_seg = gather(&la.ln1_out, sc, ec);
            let x_in_seg = if li == 0 {
                gather(&acts.x0, sc, ec)
            } else {
                gather(&acts.layers[li - 1].res2, sc, ec)
            };
            let d_ln1_out = d_qkv_seg.dot(&layer.w_qkv.t());
            grads.layers[li].w_qkv = &grads.layers[li].w_qkv + &ln1_seg.t().dot(&d_qkv_seg);
            grads.layers[li].b_qkv = &grads.layers[li].b_qkv + &d_qkv_seg.sum_axis(Axis(0));
            let ln1_mean = Array1::from_iter(
                (0..b)
                    .flat_map(|bi| (sc..ec).map(move |ti| (bi, ti)))
                    .map(|(bi, ti)| la.ln1_mean[[bi, ti]]),
            );
            let ln1_rstd = Array1::from_iter(
                (0..b)
                    .flat_map(|bi| (sc..ec).map(move |ti| (bi, ti)))
                    .map(|(bi, ti)| la.ln1_rstd[[bi, ti]]),
            );
            let d_xin_ln = {
                let gl = &mut grads.layers[li];
                layer_norm_backward(
                    d_ln1_out.view(),
                    x_in_seg.view(),
                    &ln1_mean,
                    &ln1_rstd,
                    &layer.ln1_g,
                    &mut gl.ln1_g,
                    &mut gl.ln1_b,
                )
            };
            d_x = &d_x + &d_xin_ln; // now d(x_in) for this layer
        }

        // d_x is the gradient w.r.t. the input embeddings of this segment
        for bi in 0..b {
            for (i, ti) in (sc..ec).enumerate() {
                if ti < batch.row_start[bi] || ti >= batch.row_end[bi] {
                    continue; // pad: provably zero, skip the writes
                }
                let row = d_x.slice(s![bi * m + i, ..]);
                let pos = ti - batch.row_start[bi];
                {
                    let mut wpe_row = grads.wpe.row_mut(pos);
                    for j in 0..d {
                        wpe_row[j] = wpe_row[j] + row[j];
                    }
                }
                if batch.is_latent[[bi, ti]] {
                    if !opts.detach_latents {
                        let mut carry = d_out_top.slice_mut(s![bi, ti - 1, ..]);
                        for j in 0..d {
                            carry[j] = carry[j] + row[j];
                        }
                    }
                } else {
                    let tok = batch.tokens[[bi, ti]] as usize;
                    let mut wte_row = grads.wte.row_mut(tok);
                    for j in 0..d {
                        wte_row[j] = wte_row[j] + row[j];
                    }
                }
            }
        }
    }

    grads
}

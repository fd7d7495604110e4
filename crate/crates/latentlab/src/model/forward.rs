//! Incremental inference forward pass with a key-value cache.

use super::ops::{gelu, layer_norm, softmax_row_inplace};
use super::{LayerTrace, ModelConfig, ModelError, ModelParams, Scalar, SequenceItem};
use ndarray::{s, Array1, Array2, ArrayView2};

/// Per-layer cached attention keys/values for a processed prefix.
///
/// Single-owner: one cache per decoded sequence. Appending items through
/// [`forward`] advances the prefix; the cached prefix itself is never
/// rewritten. Clone to branch a paired run off a shared prefix.
#[derive(Debug, Clone)]
pub struct DecodeCache<T: Scalar> {
    k: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    len: usize,
}

impl<T: Scalar> DecodeCache<T> {
    pub fn new(config: &ModelConfig) -> Self {
        Self {
            k: vec![Vec::new(); config.num_layers],
            v: vec![Vec::new(); config.num_layers],
            len: 0,
        }
    }

    /// Number of cached prefix positions.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn clear(&mut self) {
        for buf in self.k.iter_mut().chain(self.v.iter_mut()) {
            buf.clear();
        }
        self.len = 0;
    }
}

/// Result of one forward call over appended items.
#[derive(Debug, Clone)]
pub struct ForwardOutput<T: Scalar> {
    /// Logits over the vocabulary at the final appended position.
    pub logits: Array1<T>,
    /// Final-layer post-block residual state at the final position, i.e.
    /// the vector a latent-recurrent decoder feeds back as the next input.
    pub final_hidden: Array1<T>,
    pub trace: LayerTrace<T>,
}

/// Runs the model over `items`, extending `cache`. Causal masking covers
/// the cached prefix plus the new chunk; captured states are the
/// post-block residual-stream states at the requested layers.
pub fn forward<T: Scalar>(
    params: &ModelParams<T>,
    items: &[SequenceItem<T>],
    cache: &mut DecodeCache<T>,
    capture_layers: &[usize],
) -> Result<ForwardOutput<T>, ModelError> {
    let config = &params.config;
    let d = config.model_dim;
    let m = items.len();
    if m == 0 {
        return Err(ModelError::BadConfig("empty item list".into()));
    }
    let base = cache.len;
    let total = base + m;
    if total > config.max_positions {
        return Err(ModelError::LengthOverflow {
            len: total,
            max: config.max_positions,
        });
    }
    for &l in capture_layers {
        if l >= config.num_layers {
            return Err(ModelError::BadConfig(format!(
                "capture layer {l} out of range"
            )));
        }
    }

    // input embeddings: token rows or raw vectors, plus positions
    let mut x = Array2::<T>::zeros((m, d));
    for (i, item) in items.iter().enumerate() {
        let pos = base + i;
        match item {
            SequenceItem::Token(id) => {
                if *id as usize >= config.vocab_size {
                    return Err(ModelError::TokenOutOfRange {
                        id: *id,
                        vocab: config.vocab_size,
                    });
                }
                let e = params.wte.row(*id as usize);
                let p = params.wpe.row(pos);
                let mut row = x.row_mut(i);
                for j in 0..d {
                    row[j] = e[j] + p[j];
                }
            }
            SequenceItem::Vector(v) => {
                if v.len() != d {
                    return Err(ModelError::DimMismatch {
                        expected: d,
                        got: v.len(),
                    });
                }
                if v.iter().any(|u| !u.is_finite()) {
                    return Err(ModelError::NonFinite(format!(
                        "vector item at position {pos}"
                    )));
                }
                let p = params.wpe.row(pos);
                let mut row = x.row_mut(i);
                for j in 0..d {
                    row[j] = v[j] + p[j];
                }
            }
        }
    }

    let heads = config.num_heads;
    let hd = config.head_dim();
    let scale = T::from_f64(1.0 / (hd as f64).sqrt());
    let mut captured: Vec<(usize, Array2<T>)> = Vec::new();

    for (li, layer) in params.layers.iter().enumerate() {
        let (xn, _, _) = layer_norm(x.view(), &layer.ln1_g, &layer.ln1_b);
        let qkv = xn.dot(&layer.w_qkv) + &layer.b_qkv;

        // commit new keys/values, then attend over the whole prefix
        for i in 0..m {
            cache.k[li].extend(qkv.slice(s![i, d..2 * d]).iter().copied());
            cache.v[li].extend(qkv.slice(s![i, 2 * d..3 * d]).iter().copied());
        }
        let t_total = base + m;
        let k_all = ArrayView2::from_shape((t_total, d), &cache.k[li]).expect("cache shape");
        let v_all = ArrayView2::from_shape((t_total, d), &cache.v[li]).expect("cache shape");

        let mut att = Array2::<T>::zeros((m, d));
        for h in 0..heads {
            let cols = h * hd..(h + 1) * hd;
            let q_h = qkv.slice(s![.., cols.clone()]);
            let k_h = k_all.slice(s![.., cols.clone()]);
            let v_h = v_all.slice(s![.., cols.clone()]);
            let mut scores = q_h.dot(&k_h.t());
            scores.mapv_inplace(|v| v * scale);
            for i in 0..m {
                let limit = base + i;
                let mut row = scores.row_mut(i);
                for j in (limit + 1)..t_total {
                    row[j] = T::neg_infinity();
                }
                softmax_row_inplace(row.as_slice_mut().expect("contiguous"));
            }
            let out_h = scores.dot(&v_h);
            att.slice_mut(s![.., cols]).assign(&out_h);
        }

        let attn_proj = att.dot(&layer.w_attn_proj) + &layer.b_attn_proj;
        x = x + attn_proj;

        let (xn2, _, _) = layer_norm(x.view(), &layer.ln2_g, &layer.ln2_b);
        let fc = xn2.dot(&layer.w_fc) + &layer.b_fc;
        let act = gelu(&fc);
        let mlp_proj = act.dot(&layer.w_fc_proj) + &layer.b_fc_proj;
        x = x + mlp_proj;

        if capture_layers.contains(&li) {
            captured.push((li, x.clone()));
        }
    }
    cache.len = total;

    let final_hidden = x.row(m - 1).to_owned();
    let last = final_hidden.clone().insert_axis(ndarray::Axis(0));
    let (lnf_out, _, _) = layer_norm(last.view(), &params.lnf_g, &params.lnf_b);
    let logits = params.unembedding().dot(&lnf_out.row(0));

    captured.sort_by_key(|(l, _)| *l);
    let trace = LayerTrace {
        base_position: base,
        layers: captured.iter().map(|(l, _)| *l).collect(),
        states: captured.into_iter().map(|(_, s)| s).collect(),
    };
    Ok(ForwardOutput {
        logits,
        final_hidden,
        trace,
    })
}

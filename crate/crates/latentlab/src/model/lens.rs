//! Projection of intermediate hidden states to vocabulary distributions.

use super::ops::{layer_norm, softmax_vec};
use super::{LensDistribution, ModelError, ModelParams, Scalar};
use ndarray::ArrayView1;

/// Whether to apply the final layer norm before projecting. `FinalNorm`
/// is the default; at the last layer it reproduces the model's own output
/// distribution exactly. `Raw` projects the residual state as-is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LensMode {
    #[default]
    FinalNorm,
    Raw,
}

impl LensMode {
    pub fn label(&self) -> &'static str {
        match self {
            LensMode::FinalNorm => "final_norm",
            LensMode::Raw => "raw",
        }
    }
}

/// softmax(U · norm(h)): the vocabulary distribution an intermediate
/// hidden state would produce if decoded directly.
pub fn logit_lens<T: Scalar>(
    params: &ModelParams<T>,
    h: ArrayView1<T>,
    layer: usize,
    position: usize,
    mode: LensMode,
) -> Result<LensDistribution<T>, ModelError> {
    if h.len() != params.config.model_dim {
        return Err(ModelError::DimMismatch {
            expected: params.config.model_dim,
            got: h.len(),
        });
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite("lens input".into()));
    }
    let logits = match mode {
        LensMode::FinalNorm => {
            let row = h.to_owned().insert_axis(ndarray::Axis(0));
            let (normed, _, _) = layer_norm(row.view(), &params.lnf_g, &params.lnf_b);
            params.unembedding().dot(&normed.row(0))
        }
        LensMode::Raw => params.unembedding().dot(&h),
    };
    Ok(LensDistribution {
        layer,
        position,
        probs: softmax_vec(logits.view()),
    })
}

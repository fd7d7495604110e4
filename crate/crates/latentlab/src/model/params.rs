//! Parameter storage, initialization, and tensor enumeration.

use super::{ModelConfig, ModelError, Scalar};
use crate::rng::rng_from_seed;
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T: Scalar> {
    pub ln1_g: Array1<T>,
    pub ln1_b: Array1<T>,
    /// `[d, 3d]`, columns ordered q, k, v.
    pub w_qkv: Array2<T>,
    pub b_qkv: Array1<T>,
    /// `[d, d]` output projection.
    pub w_attn_proj: Array2<T>,
    pub b_attn_proj: Array1<T>,
    pub ln2_g: Array1<T>,
    pub ln2_b: Array1<T>,
    /// `[d, 4d]`.
    pub w_fc: Array2<T>,
    pub b_fc: Array1<T>,
    /// `[4d, d]`.
    pub w_fc_proj: Array2<T>,
    pub b_fc_proj: Array1<T>,
}

/// Full parameter set. `lm_head` is `None` when the unembedding is tied
/// to the embedding table.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T: Scalar> {
    pub config: ModelConfig,
    /// `[vocab, d]` embedding table.
    pub wte: Array2<T>,
    /// `[max_positions, d]` learned positional table.
    pub wpe: Array2<T>,
    pub layers: Vec<LayerParams<T>>,
    pub lnf_g: Array1<T>,
    pub lnf_b: Array1<T>,
    pub lm_head: Option<Array2<T>>,
}

impl<T: Scalar> ModelParams<T> {
    /// The `[vocab, d]` unembedding matrix (the embedding table when tied).
    pub fn unembedding(&self) -> &Array2<T> {
        self.lm_head.as_ref().unwrap_or(&self.wte)
    }

    pub fn zeros(config: ModelConfig) -> Self {
        let d = config.model_dim;
        let layer = || LayerParams {
            ln1_g: Array1::zeros(d),
            ln1_b: Array1::zeros(d),
            w_qkv: Array2::zeros((d, 3 * d)),
            b_qkv: Array1::zeros(3 * d),
            w_attn_proj: Array2::zeros((d, d)),
            b_attn_proj: Array1::zeros(d),
            ln2_g: Array1::zeros(d),
            ln2_b: Array1::zeros(d),
            w_fc: Array2::zeros((d, 4 * d)),
            b_fc: Array1::zeros(4 * d),
            w_fc_proj: Array2::zeros((4 * d, d)),
            b_fc_proj: Array1::zeros(d),
        };
        ModelParams {
            config,
            wte: Array2::zeros((config.vocab_size, d)),
            wpe: Array2::zeros((config.max_positions, d)),
            layers: (0..config.num_layers).map(|_| layer()).collect(),
            lnf_g: Array1::zeros(d),
            lnf_b: Array1::zeros(d),
            lm_head: if config.tie_unembedding {
                None
            } else {
                Some(Array2::zeros((config.vocab_size, d)))
            },
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, _, data)| data.len()).sum()
    }

    /// Named tensors in a fixed order. Names follow the GPT-2 layout so
    /// external checkpoints map on with a prefix strip.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[T])> {
        let mut out: Vec<(String, Vec<usize>, &[T])> = Vec::new();
        macro_rules! push {
            ($name:expr, $a:expr) => {
                out.push((
                    $name,
                    $a.shape().to_vec(),
                    $a.as_slice().expect("standard layout"),
                ))
            };
        }
        push!("wte".into(), self.wte);
        push!("wpe".into(), self.wpe);
        for (i, l) in self.layers.iter().enumerate() {
            push!(format!("h.{i}.ln_1.weight"), l.ln1_g);
            push!(format!("h.{i}.ln_1.bias"), l.ln1_b);
            push!(format!("h.{i}.attn.c_attn.weight"), l.w_qkv);
            push!(format!("h.{i}.attn.c_attn.bias"), l.b_qkv);
            push!(format!("h.{i}.attn.c_proj.weight"), l.w_attn_proj);
            push!(format!("h.{i}.attn.c_proj.bias"), l.b_attn_proj);
            push!(format!("h.{i}.ln_2.weight"), l.ln2_g);
            push!(format!("h.{i}.ln_2.bias"), l.ln2_b);
            push!(format!("h.{i}.mlp.c_fc.weight"), l.w_fc);
            push!(format!("h.{i}.mlp.c_fc.bias"), l.b_fc);
            push!(format!("h.{i}.mlp.c_proj.weight"), l.w_fc_proj);
            push!(format!("h.{i}.mlp.c_proj.bias"), l.b_fc_proj);
        }
        push!("ln_f.weight".into(), self.lnf_g);
        push!("ln_f.bias".into(), self.lnf_b);
        if let Some(head) = &self.lm_head {
            push!("lm_head".into(), head);
        }
        out
    }

    /// Mutable flat views in the same order as [`tensors`](Self::tensors).
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [T])> {
        let mut out: Vec<(String, &mut [T])> = Vec::new();
        macro_rules! push {
            ($name:expr, $a:expr) => {
                out.push(($name, $a.as_slice_mut().expect("standard layout")))
            };
        }
        push!("wte".into(), self.wte);
        push!("wpe".into(), self.wpe);
        for (i, l) in self.layers.iter_mut().enumerate() {
            push!(format!("h.{i}.ln_1.weight"), l.ln1_g);
            push!(format!("h.{i}.ln_1.bias"), l.ln1_b);
            push!(format!("h.{i}.attn.c_attn.weight"), l.w_qkv);
            push!(format!("h.{i}.attn.c_attn.bias"), l.b_qkv);
            push!(format!("h.{i}.attn.c_proj.weight"), l.w_attn_proj);
            push!(format!("h.{i}.attn.c_proj.bias"), l.b_attn_proj);
            push!(format!("h.{i}.ln_2.weight"), l.ln2_g);
            push!(format!("h.{i}.ln_2.bias"), l.ln2_b);
            push!(format!("h.{i}.mlp.c_fc.weight"), l.w_fc);
            push!(format!("h.{i}.mlp.c_fc.bias"), l.b_fc);
            push!(format!("h.{i}.mlp.c_proj.weight"), l.w_fc_proj);
            push!(format!("h.{i}.mlp.c_proj.bias"), l.b_fc_proj);
        }
        push!("ln_f.weight".into(), self.lnf_g);
        push!("ln_f.bias".into(), self.lnf_b);
        if let Some(head) = &mut self.lm_head {
            push!("lm_head".into(), head);
        }
        out
    }

    pub fn assert_finite(&self) -> Result<(), ModelError> {
        for (name, _, data) in self.tensors() {
            if data.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::NonFinite(format!("parameter {name}")));
            }
        }
        Ok(())
    }

    /// Widens/narrows precision; used by the finite-difference oracle.
    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let mut out = ModelParams::<U>::zeros(self.config);
        let src = self.tensors();
        for ((_, dst), (_, _, s)) in out.tensors_mut().into_iter().zip(src.iter()) {
            for (d, v) in dst.iter_mut().zip(s.iter()) {
                *d = U::from_f64(v.into_f64());
            }
        }
        out
    }
}

const INIT_STD: f64 = 0.02;

/// GPT-2-style initialization: normal(0, 0.02) for embeddings and
/// projections, residual projections scaled by 1/sqrt(2L), zero biases,
/// unit layer-norm gains. Deterministic in `seed`.
pub fn init_random<T: Scalar>(
    config: ModelConfig,
    seed: u64,
) -> Result<ModelParams<T>, ModelError> {
    config.validate()?;
    let mut rng = rng_from_seed(seed);
    let normal = Normal::new(0.0f64, INIT_STD).expect("valid std");
    let resid_std = INIT_STD / ((2 * config.num_layers) as f64).sqrt();
    let resid = Normal::new(0.0f64, resid_std).expect("valid std");

    let mut params = ModelParams::<T>::zeros(config);
    let fill = |a: &mut [T], dist: &Normal<f64>, rng: &mut rand_chacha::ChaCha8Rng| {
        for v in a.iter_mut() {
            *v = T::from_f64(dist.sample(rng));
        }
    };
    let ones = |a: &mut [T]| {
        for v in a.iter_mut() {
            *v = T::one();
        }
    };

    fill(params.wte.as_slice_mut().unwrap(), &normal, &mut rng);
    fill(params.wpe.as_slice_mut().unwrap(), &normal, &mut rng);
    for l in params.layers.iter_mut() {
        ones(l.ln1_g.as_slice_mut().unwrap());
        fill(l.w_qkv.as_slice_mut().unwrap(), &normal, &mut rng);
        fill(l.w_attn_proj.as_slice_mut().unwrap(), &resid, &mut rng);
        ones(l.ln2_g.as_slice_mut().unwrap());
        fill(l.w_fc.as_slice_mut().unwrap(), &normal, &mut rng);
        fill(l.w_fc_proj.as_slice_mut().unwrap(), &resid, &mut rng);
    }
    ones(params.lnf_g.as_slice_mut().unwrap());
    if let Some(head) = &mut params.lm_head {
        fill(head.as_slice_mut().unwrap(), &normal, &mut rng);
    }
    // burn one draw so distinct seeds always diverge even for tiny models
    let _: u64 = rng.random();
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            num_layers: 2,
            num_heads: 2,
            model_dim: 16,
            vocab_size: 11,
            max_positions: 32,
            tie_unembedding: true,
        }
    }

    #[test]
    fn same_seed_identical_params() {
        let a: ModelParams<f32> = init_random(tiny_config(), 5).unwrap();
        let b: ModelParams<f32> = init_random(tiny_config(), 5).unwrap();
        assert_eq!(a, b);
        let c: ModelParams<f32> = init_random(tiny_config(), 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn embedding_std_near_init_scale() {
        let config = ModelConfig {
            num_layers: 1,
            num_heads: 8,
            model_dim: 768,
            vocab_size: 40,
            max_positions: 64,
            tie_unembedding: true,
        };
        let params: ModelParams<f32> = init_random(config, 0).unwrap();
        let data = params.wte.as_slice().unwrap();
        let n = data.len() as f64;
        let mean: f64 = data.iter().map(|v| *v as f64).sum::<f64>() / n;
        let var: f64 = data.iter().map(|v| (*v as f64 - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        assert!(
            (std - 0.02).abs() < 0.2 * 0.02,
            "std {std} too far from 0.02"
        );
    }

    #[test]
    fn tied_unembedding_aliases_embedding() {
        let params: ModelParams<f32> = init_random(tiny_config(), 1).unwrap();
        assert!(params.lm_head.is_none());
        // U = E: projecting embedding rows gives the Gram matrix of E
        let gram = params.wte.dot(&params.unembedding().t());
        assert_eq!(gram.shape(), &[11, 11]);
        let direct = params.wte.dot(&params.wte.t());
        assert_eq!(gram, direct);
    }

    #[test]
    fn untied_mode_has_separate_head() {
        let config = ModelConfig {
            tie_unembedding: false,
            ..tiny_config()
        };
        let params: ModelParams<f32> = init_random(config, 1).unwrap();
        assert!(params.lm_head.is_some());
        assert_eq!(params.unembedding().shape(), &[11, 16]);
    }

    #[test]
    fn tensor_enumeration_covers_every_parameter() {
        let params: ModelParams<f32> = init_random(tiny_config(), 2).unwrap();
        let tensors = params.tensors();
        // 2 embeddings + 12 per layer * 2 + 2 final-norm
        assert_eq!(tensors.len(), 2 + 12 * 2 + 2);
        let total: usize = tensors.iter().map(|(_, _, d)| d.len()).sum();
        assert_eq!(total, params.num_parameters());
        let names: std::collections::BTreeSet<&str> =
            tensors.iter().map(|(n, _, _)| n.as_str()).collect();
        assert_eq!(names.len(), tensors.len(), "duplicate tensor names");
    }

    #[test]
    fn cast_round_trips_values() {
        let params: ModelParams<f32> = init_random(tiny_config(), 3).unwrap();
        let wide = params.cast::<f64>();
        let back = wide.cast::<f32>();
        assert_eq!(params, back);
    }
}

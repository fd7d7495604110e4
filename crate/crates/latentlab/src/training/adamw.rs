//! Decoupled-weight-decay Adam.

use super::TrainError;
use crate::model::{ModelConfig, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWParams {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// First/second moment accumulators plus the step counter.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub m: ModelParams<f32>,
    pub v: ModelParams<f32>,
    pub step: u64,
    pub hyper: AdamWParams,
}

impl OptimizerState {
    pub fn new(config: ModelConfig, hyper: AdamWParams) -> Self {
        Self {
            m: ModelParams::zeros(config),
            v: ModelParams::zeros(config),
            step: 0,
            hyper,
        }
    }

    /// Zeroes both moments and the step counter.
    pub fn reset(&mut self) {
        for (_, slice) in self.m.tensors_mut() {
            slice.fill(0.0);
        }
        for (_, slice) in self.v.tensors_mut() {
            slice.fill(0.0);
        }
        self.step = 0;
    }

    pub fn moments_all_zero(&self) -> bool {
        self.m
            .tensors()
            .iter()
            .all(|(_, _, d)| d.iter().all(|&x| x == 0.0))
            && self
                .v
                .tensors()
                .iter()
                .all(|(_, _, d)| d.iter().all(|&x| x == 0.0))
    }
}

/// One update: standard bias-corrected moment estimates, then
/// `w -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * w)`.
pub fn adamw_update(
    params: &mut ModelParams<f32>,
    grads: &ModelParams<f32>,
    state: &mut OptimizerState,
) -> Result<(), TrainError> {
    for (name, _, g) in grads.tensors() {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(TrainError::NonFiniteGrad(name));
        }
    }
    state.step += 1;
    let h = state.hyper;
    let bc1 = 1.0 - h.beta1.powi(state.step as i32);
    let bc2 = 1.0 - h.beta2.powi(state.step as i32);
    let (b1, b2) = (h.beta1 as f32, h.beta2 as f32);
    let lr = h.lr as f32;
    let eps = h.eps as f32;
    let wd = h.weight_decay as f32;
    let inv_bc1 = (1.0 / bc1) as f32;
    let inv_bc2 = (1.0 / bc2) as f32;

    let grads_t = grads.tensors();
    let mut m_t = state.m.tensors_mut();
    let mut v_t = state.v.tensors_mut();
    for (ti, (_, w)) in params.tensors_mut().into_iter().enumerate() {
        let g = grads_t[ti].2;
        let m = &mut m_t[ti].1;
        let v = &mut v_t[ti].1;
        for i in 0..w.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] * inv_bc1;
            let v_hat = v[i] * inv_bc2;
            w[i] -= lr * (m_hat / (v_hat.sqrt() + eps) + wd * w[i]);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_random;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            num_layers: 1,
            num_heads: 2,
            model_dim: 8,
            vocab_size: 5,
            max_positions: 8,
            tie_unembedding: true,
        }
    }

    #[test]
    fn zero_grads_zero_decay_leave_params_unchanged() {
        let config = tiny_config();
        let mut params: ModelParams<f32> = init_random(config, 1).unwrap();
        let before = params.clone();
        let grads = ModelParams::zeros(config);
        let mut state = OptimizerState::new(
            config,
            AdamWParams {
                weight_decay: 0.0,
                ..Default::default()
            },
        );
        adamw_update(&mut params, &grads, &mut state).unwrap();
        assert_eq!(params, before);
    }

    #[test]
    fn single_step_moves_scalar_by_learning_rate() {
        let config = tiny_config();
        let mut params: ModelParams<f32> = ModelParams::zeros(config);
        params.wte[[0, 0]] = 1.0;
        let mut grads = ModelParams::zeros(config);
        grads.wte[[0, 0]] = 1.0;
        let hyper = AdamWParams {
            lr: 1e-4,
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut state = OptimizerState::new(config, hyper);
        adamw_update(&mut params, &grads, &mut state).unwrap();
        // bias-corrected first step is lr * sign(g), up to eps rounding
        let moved = 1.0 - params.wte[[0, 0]];
        assert!((moved - 1e-4).abs() < 1e-7, "moved {moved}");
    }

    #[test]
    fn decoupled_decay_shrinks_zero_gradient_params() {
        let config = tiny_config();
        let mut params: ModelParams<f32> = ModelParams::zeros(config);
        params.wte[[1, 1]] = 2.0;
        let grads = ModelParams::zeros(config);
        let hyper = AdamWParams {
            lr: 1e-2,
            weight_decay: 0.01,
            ..Default::default()
        };
        let mut state = OptimizerState::new(config, hyper);
        adamw_update(&mut params, &grads, &mut state).unwrap();
        let expected = 2.0 * (1.0 - 0.01f32 * 0.01);
        assert!((params.wte[[1, 1]] - expected).abs() < 1e-7);
    }

    #[test]
    fn reset_zeroes_moments_and_counter() {
        let config = tiny_config();
        let mut params: ModelParams<f32> = init_random(config, 2).unwrap();
        let mut grads = ModelParams::zeros(config);
        grads.wte[[0, 0]] = 0.5;
        let mut state = OptimizerState::new(config, AdamWParams::default());
        adamw_update(&mut params, &grads, &mut state).unwrap();
        assert!(!state.moments_all_zero());
        assert_eq!(state.step, 1);
        state.reset();
        assert!(state.moments_all_zero());
        assert_eq!(state.step, 0);
    }

    #[test]
    fn non_finite_gradients_are_rejected() {
        let config = tiny_config();
        let mut params: ModelParams<f32> = init_random(config, 3).unwrap();
        let mut grads = ModelParams::zeros(config);
        grads.wte[[0, 0]] = f32::NAN;
        let mut state = OptimizerState::new(config, AdamWParams::default());
        assert!(matches!(
            adamw_update(&mut params, &grads, &mut state),
            Err(TrainError::NonFiniteGrad(_))
        ));
    }
}

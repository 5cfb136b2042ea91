use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, ScrcError};
use crate::nncore::{Matrix, ParamTensor, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    /// Global L2 gradient norm above which gradients are rescaled. `f64::INFINITY` disables clipping.
    pub clip_norm: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            lr: 0.01,
            momentum: 0.9,
            clip_norm: 10.0,
        }
    }
}

/// Momentum SGD with global-norm clipping. Velocities are keyed by parameter name.
#[derive(Debug, Clone)]
pub struct Sgd<F> {
    pub config: SgdConfig,
    velocities: BTreeMap<String, Matrix<F>>,
}

impl<F: Scalar> Sgd<F> {
    pub fn new(config: SgdConfig) -> Result<Self> {
        if !(config.lr >= 0.0 && config.lr.is_finite()) {
            return Err(ScrcError::Config(format!(
                "learning rate must be finite and >= 0, got {}",
                config.lr
            )));
        }
        if !(0.0..1.0).contains(&config.momentum) {
            return Err(ScrcError::Config(format!(
                "momentum must be in [0, 1), got {}",
                config.momentum
            )));
        }
        if config.clip_norm.is_nan() || config.clip_norm <= 0.0 {
            return Err(ScrcError::Config(format!(
                "clip norm must be positive, got {}",
                config.clip_norm
            )));
        }
        Ok(Sgd {
            config,
            velocities: BTreeMap::new(),
        })
    }

    /// Applies one update to every tensor in `params` and zeroes their gradients.
    /// Returns the global gradient norm before clipping.
    pub fn step(&mut self, params: Vec<(String, &mut ParamTensor<F>)>) -> Result<f64> {
        for (name, p) in &params {
            if !p.grad.all_finite() {
                return Err(ScrcError::NonFiniteGradient { param: name.clone() });
            }
        }
        let norm = params.iter().map(|(_, p)| p.grad.sum_squares()).sum::<f64>().sqrt();
        let scale = if norm > self.config.clip_norm {
            F::from_f64(self.config.clip_norm / norm)
        } else {
            F::one()
        };
        let lr = F::from_f64(self.config.lr);
        let momentum = F::from_f64(self.config.momentum);

        for (name, p) in params {
            let velocity = self
                .velocities
                .entry(name)
                .or_insert_with(|| Matrix::zeros(p.value.rows(), p.value.cols()));
            for ((v, x), &g) in velocity
                .data_mut()
                .iter_mut()
                .zip(p.value.data_mut().iter_mut())
                .zip(p.grad.data())
            {
                *v = momentum * *v - lr * (g * scale);
                *x = *x + *v;
            }
            p.zero_grad();
        }
        Ok(norm)
    }
}

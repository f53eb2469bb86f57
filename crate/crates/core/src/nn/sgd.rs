//! Stochastic gradient descent with Nesterov momentum.
//!
//! Per step `t` (0-based), with L2 decay folded into the gradient:
//!
//! ```text
//! g     = grad + weight_decay * p
//! lr_t  = lr / (1 + decay * t)
//! v     = momentum * v - lr_t * g
//! p     = p + momentum * v - lr_t * g
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdConfig {
    pub learning_rate: f64,
    /// Inverse-time learning-rate decay constant.
    pub decay: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            decay: 0.0001,
            momentum: 0.9,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SgdState<T> {
    pub config: SgdConfig,
    velocity: Vec<Tensor<T>>,
    steps: u64,
}

impl<T: Scalar> SgdState<T> {
    pub fn new(config: SgdConfig) -> Self {
        Self {
            config,
            velocity: Vec::new(),
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Learning rate the next step will use.
    pub fn current_lr(&self) -> f64 {
        self.config.learning_rate / (1.0 + self.config.decay * self.steps as f64)
    }

    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[&Tensor<T>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::InvalidArgument(format!(
                "{} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::shape(p.shape(), g.shape()));
            }
        }
        if self.velocity.is_empty() {
            self.velocity = params.iter().map(|p| p.zeros_like()).collect();
        } else if self.velocity.len() != params.len()
            || self.velocity.iter().zip(params.iter()).any(|(v, p)| v.shape() != p.shape())
        {
            return Err(Error::InvalidArgument(
                "parameter set changed between optimizer steps".into(),
            ));
        }
        let lr = T::from_f64_lossy(self.current_lr());
        let mu = T::from_f64_lossy(self.config.momentum);
        let wd = T::from_f64_lossy(self.config.weight_decay);
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            for ((pv, &gv), vv) in p
                .as_mut_slice()
                .iter_mut()
                .zip(g.as_slice())
                .zip(v.as_mut_slice())
            {
                let grad = gv + wd * *pv;
                *vv = mu * *vv - lr * grad;
                *pv = *pv + mu * *vv - lr * grad;
            }
        }
        self.steps += 1;
        Ok(())
    }
}

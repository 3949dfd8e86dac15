//! Stochastic gradient descent with classical momentum.

use crate::error::{Error, Result};

/// Training hyperparameters. The defaults are the shipped protocol:
/// learning rate 0.001, batch size 20, momentum 0.9, 50 epochs, seed 42.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            learning_rate: 0.001,
            momentum: 0.9,
            batch_size: 20,
            epochs: 50,
            seed: 42,
        }
    }
}

/// Classical momentum: v <- momentum*v - lr*g; theta <- theta + v.
pub fn sgd_momentum_step(
    params: &mut [f64],
    grads: &[f64],
    velocity: &mut [f64],
    cfg: &SgdConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != velocity.len() {
        return Err(Error::ShapeMismatch(format!(
            "sgd step: params {} grads {} velocity {}",
            params.len(),
            grads.len(),
            velocity.len()
        )));
    }
    for i in 0..params.len() {
        velocity[i] = cfg.momentum * velocity[i] - cfg.learning_rate * grads[i];
        params[i] += velocity[i];
    }
    Ok(())
}

//! ADADELTA with a global learning-rate multiplier.
//!
//! ```text
//! E[g²]  ← ρ E[g²] + (1-ρ) g²
//! Δ      = sqrt(E[Δ²] + ε) / sqrt(E[g²] + ε) · g
//! E[Δ²]  ← ρ E[Δ²] + (1-ρ) Δ²
//! θ      ← θ - lr · Δ
//! ```

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use super::tensor::ParamTensor;
use crate::error::{Error, Result};

pub const DEFAULT_RHO: f64 = 0.95;
pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const DEFAULT_LEARNING_RATE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdadeltaConfig {
    pub rho: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
}

impl Default for AdadeltaConfig {
    fn default() -> Self {
        AdadeltaConfig {
            rho: DEFAULT_RHO,
            epsilon: DEFAULT_EPSILON,
            learning_rate: DEFAULT_LEARNING_RATE,
        }
    }
}

/// Running averages for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Accumulators {
    pub sq_grad: Array2<f64>,
    pub sq_update: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdadeltaState {
    pub config: AdadeltaConfig,
    /// One entry per parameter tensor, created lazily on the first step.
    pub accumulators: Vec<Accumulators>,
}

impl AdadeltaState {
    pub fn new(config: AdadeltaConfig) -> Self {
        AdadeltaState {
            config,
            accumulators: Vec::new(),
        }
    }

    /// Apply one update using the gradients stored in `params`.
    pub fn step(&mut self, params: &mut [&mut ParamTensor]) -> Result<()> {
        if self.accumulators.is_empty() {
            self.accumulators = params
                .iter()
                .map(|p| Accumulators {
                    sq_grad: Array2::zeros(p.value.raw_dim()),
                    sq_update: Array2::zeros(p.value.raw_dim()),
                })
                .collect();
        }
        if self.accumulators.len() != params.len() {
            return Err(Error::Shape {
                context: "adadelta parameter count",
                expected: self.accumulators.len(),
                got: params.len(),
            });
        }
        let AdadeltaConfig {
            rho,
            epsilon,
            learning_rate,
        } = self.config;
        for (p, acc) in params.iter_mut().zip(&mut self.accumulators) {
            if acc.sq_grad.dim() != p.value.dim() {
                return Err(Error::Checkpoint(format!(
                    "optimizer state for {} has shape {:?}, parameter has {:?}",
                    p.name(),
                    acc.sq_grad.dim(),
                    p.value.dim()
                )));
            }
            let update = |theta: &mut f64, g: f64, eg: &mut f64, edx: &mut f64| {
                *eg = rho * *eg + (1.0 - rho) * g * g;
                let delta = ((*edx + epsilon) / (*eg + epsilon)).sqrt() * g;
                *edx = rho * *edx + (1.0 - rho) * delta * delta;
                *theta -= learning_rate * delta;
            };
            let p = &mut **p;
            match (
                p.value.as_slice_mut(),
                p.grad.as_slice(),
                acc.sq_grad.as_slice_mut(),
                acc.sq_update.as_slice_mut(),
            ) {
                (Some(theta), Some(grad), Some(eg), Some(edx)) => {
                    for i in 0..theta.len() {
                        update(&mut theta[i], grad[i], &mut eg[i], &mut edx[i]);
                    }
                }
                _ => Zip::from(&mut p.value)
                    .and(&p.grad)
                    .and(&mut acc.sq_grad)
                    .and(&mut acc.sq_update)
                    .for_each(|theta, &g, eg, edx| update(theta, g, eg, edx)),
            }
        }
        Ok(())
    }
}

/// Functional form over a single tensor.
pub fn adadelta_step(param: &mut ParamTensor, state: &mut AdadeltaState) -> Result<()> {
    state.step(&mut [param])
}

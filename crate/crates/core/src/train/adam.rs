use alloc::vec::Vec;

use crate::autodiff::{ParameterSet, Tensor};
use crate::math::{pow, sqrt};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction; one moment pair per parameter tensor.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParameterSet) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        Self {
            config,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies stored gradients to every trainable parameter.
    pub fn update(&mut self, params: &mut ParameterSet) {
        self.step += 1;
        let c = self.config;
        let t = self.step as f64;
        let bc1 = 1.0 - pow(c.beta1, t);
        let bc2 = 1.0 - pow(c.beta2, t);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let Some(g) = p.grad.as_ref() else { continue };
            if !p.trainable {
                continue;
            }
            let (m, v) = (m.data_mut(), v.data_mut());
            for (((x, &gi), mi), vi) in p.value.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mi = c.beta1 * *mi + (1.0 - c.beta1) * gi;
                *vi = c.beta2 * *vi + (1.0 - c.beta2) * gi * gi;
                let mh = *mi / bc1;
                let vh = *vi / bc2;
                *x -= c.learning_rate * mh / (sqrt(vh) + c.eps);
            }
        }
    }
}

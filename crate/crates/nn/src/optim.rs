use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::real::Real;
use crate::tensor::Param;
use crate::{NnError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0 && (0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.eps > 0.0;
        if ok { Ok(()) } else { Err(NnError::Config(format!("invalid Adam settings {self:?}"))) }
    }
}

/// Adam with bias correction. Moments are keyed by parameter name, so the
/// same optimizer must always see the same naming.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    moments: BTreeMap<String, (Vec<T>, Vec<T>)>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, step: 0, moments: BTreeMap::new() })
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update of every trainable parameter. Nothing changes if any
    /// gradient is non-finite.
    pub fn step(&mut self, params: Vec<(String, &mut Param<T>)>) -> Result<()> {
        let params: Vec<_> = params.into_iter().filter(|(_, p)| p.is_trainable()).collect();
        for (name, p) in &params {
            if p.grad.len() != p.value.len() {
                return Err(NnError::Shape(format!("{name}: gradient length {} != {}", p.grad.len(), p.value.len())));
            }
            if !p.grad.iter().all(|g| g.is_finite()) {
                return Err(NnError::NonFinite("gradient"));
            }
        }
        self.step += 1;
        let c = self.config;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let bc1 = T::of(1.0 - c.beta1.powi(self.step as i32));
        let bc2 = T::of(1.0 - c.beta2.powi(self.step as i32));
        let (lr, eps) = (T::of(c.lr), T::of(c.eps));
        for (name, p) in params {
            let (m, v) = self.moments.entry(name).or_insert_with(|| (vec![T::zero(); p.grad.len()], vec![T::zero(); p.grad.len()]));
            for (((w, &g), mi), vi) in p.value.data.iter_mut().zip(&p.grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (T::one() - b1) * g;
                *vi = b2 * *vi + (T::one() - b2) * g * g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

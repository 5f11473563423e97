//! Projection head (to the unit sphere) and linear classification heads.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::REPRESENTATION_DIM;
use crate::layers::{join, relu_backward, relu_inplace, Linear, Mode, Module};
use crate::real::Real;
use crate::tensor::Param;
use crate::{NnError, Result};

pub const PROJECTION_DIM: usize = 128;
pub const NUM_CLASSES: usize = 4;

/// What to do when `W2 relu(W1 v)` is exactly zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroNormPolicy {
    /// A dead head is an error (training).
    #[default]
    Error,
    /// Map to the zero vector.
    Zero,
}

/// `z = normalize(W2 relu(W1 v))`, no biases.
#[derive(Debug, Clone)]
pub struct ProjectionHead<T> {
    pub w1: Linear<T>,
    pub w2: Linear<T>,
    pub zero_norm: ZeroNormPolicy,
    cache: Option<(Vec<bool>, Vec<T>, Vec<T>)>,
}

impl<T: Real> ProjectionHead<T> {
    pub fn new(rng: &mut ChaCha8Rng) -> Self {
        Self {
            w1: Linear::new(REPRESENTATION_DIM, REPRESENTATION_DIM, false, rng),
            w2: Linear::new(REPRESENTATION_DIM, PROJECTION_DIM, false, rng),
            zero_norm: ZeroNormPolicy::Error,
            cache: None,
        }
    }

    /// Row-wise normalization; returns the unit rows and the norms.
    fn normalize(&self, mut u: Vec<T>) -> Result<(Vec<T>, Vec<T>)> {
        let mut norms = Vec::with_capacity(u.len() / PROJECTION_DIM);
        for row in u.chunks_mut(PROJECTION_DIM) {
            let norm = row.iter().map(|&x| x * x).sum::<T>().sqrt();
            if norm == T::zero() {
                if self.zero_norm == ZeroNormPolicy::Error {
                    return Err(NnError::ZeroNorm);
                }
            } else {
                row.iter_mut().for_each(|x| *x /= norm);
            }
            if !norm.is_finite() {
                return Err(NnError::NonFinite("projection"));
            }
            norms.push(norm);
        }
        Ok((u, norms))
    }

    /// Stateless projection of `n x 512` rows to `n x 128` unit rows.
    pub fn infer(&self, v: &[T]) -> Result<Vec<T>> {
        let mut h = self.w1.apply(v)?;
        relu_inplace(&mut h, Mode::Eval);
        Ok(self.normalize(self.w2.apply(&h)?)?.0)
    }

    pub fn forward(&mut self, v: &[T], mode: Mode) -> Result<Vec<T>> {
        let mut h = self.w1.forward(v, mode)?;
        let mask = relu_inplace(&mut h, mode);
        let u = self.w2.forward(&h, mode)?;
        let (z, norms) = self.normalize(u)?;
        self.cache = mask.map(|m| (m, z.clone(), norms));
        Ok(z)
    }

    /// Returns `dL/dv` and accumulates `W1`, `W2` gradients.
    pub fn backward(&mut self, dz: &[T]) -> Result<Vec<T>> {
        let (mask, z, norms) = self.cache.take().ok_or_else(|| NnError::State("projection backward without forward".into()))?;
        if dz.len() != z.len() {
            return Err(NnError::Shape(format!("projection gradient has {} values, expected {}", dz.len(), z.len())));
        }
        // d/du of u/|u| applied to g: (g - z (z.g)) / |u|.
        let mut du = vec![T::zero(); z.len()];
        for ((out, (zr, gr)), &norm) in du.chunks_mut(PROJECTION_DIM).zip(z.chunks(PROJECTION_DIM).zip(dz.chunks(PROJECTION_DIM))).zip(&norms) {
            if norm == T::zero() {
                continue;
            }
            let dot = zr.iter().zip(gr).map(|(&a, &b)| a * b).sum::<T>();
            for ((o, &zi), &gi) in out.iter_mut().zip(zr).zip(gr) {
                *o = (gi - zi * dot) / norm;
            }
        }
        let mut dh = self.w2.backward(&du)?;
        relu_backward(&mut dh, &mask);
        self.w1.backward(&dh)
    }
}

impl<T: Real> Module<T> for ProjectionHead<T> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<T>)>) {
        self.w1.visit(&join(prefix, "w1"), out);
        self.w2.visit(&join(prefix, "w2"), out);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<T>)>) {
        self.w1.visit_mut(&join(prefix, "w1"), out);
        self.w2.visit_mut(&join(prefix, "w2"), out);
    }
}

/// `4 x 512` weights plus bias; produces logits.
#[derive(Debug, Clone)]
pub struct LinearHead<T> {
    pub linear: Linear<T>,
}

impl<T: Real> LinearHead<T> {
    pub fn new(rng: &mut ChaCha8Rng) -> Self {
        Self { linear: Linear::new(REPRESENTATION_DIM, NUM_CLASSES, true, rng) }
    }

    pub fn logits(&self, v: &[T]) -> Result<Vec<T>> {
        self.linear.apply(v)
    }

    pub fn forward(&mut self, v: &[T], mode: Mode) -> Result<Vec<T>> {
        self.linear.forward(v, mode)
    }

    pub fn backward(&mut self, d_logits: &[T]) -> Result<Vec<T>> {
        self.linear.backward(d_logits)
    }

    /// Class probabilities per row.
    pub fn probabilities(&self, v: &[T]) -> Result<Vec<T>> {
        let logits = self.logits(v)?;
        Ok(logits.chunks(NUM_CLASSES).flat_map(softmax).collect())
    }
}

impl<T: Real> Module<T> for LinearHead<T> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<T>)>) {
        self.linear.visit(prefix, out);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<T>)>) {
        self.linear.visit_mut(prefix, out);
    }
}

/// Max-shifted softmax.
pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum = exps.iter().copied().sum::<T>();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Pulls `dL/dp` back through `p = softmax(l)`: `p * (g - p.g)`.
pub fn softmax_backward<T: Real>(p: &[T], dp: &[T]) -> Vec<T> {
    let dot = p.iter().zip(dp).map(|(&a, &b)| a * b).sum::<T>();
    p.iter().zip(dp).map(|(&pi, &gi)| pi * (gi - dot)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_is_shift_invariant_and_stable() {
        let p = softmax(&[1000.0f64, 1001.0, 999.0, 1000.0]);
        let q = softmax(&[0.0f64, 1.0, -1.0, 0.0]);
        for (a, b) in p.iter().zip(&q) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

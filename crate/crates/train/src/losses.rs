//! Supervised contrastive, consultation and cross-entropy losses, each with
//! its gradient with respect to its inputs.

use log::warn;
use presence_csi::Case;
use presence_nn::Real;
use serde::{Deserialize, Serialize};

use crate::{Result, TrainError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    Sum,
    #[default]
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Temperature of the contrastive softmax.
    pub temperature: f64,
    /// Weight of the consultation term in stage 2.
    pub lambda: f64,
    /// Anchors are averaged (`mean`, over anchors with positives) or summed.
    pub supcon_reduction: Reduction,
    /// Batch reduction of the stage-3 cross entropy.
    pub ce_reduction: Reduction,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { temperature: 0.07, lambda: 0.5, supcon_reduction: Reduction::Mean, ce_reduction: Reduction::Mean }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(TrainError::Config("temperature must be positive".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(TrainError::Config("lambda must be non-negative".into()));
        }
        Ok(())
    }
}

/// Loss value, gradient with respect to the input rows, and how many
/// degenerate terms were dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput<T> {
    pub loss: T,
    pub grad: Vec<T>,
    pub skipped: usize,
}

fn check_rows<T: Real>(z: &[T], dim: usize, labels: usize) -> Result<usize> {
    if dim == 0 || z.len() != labels * dim {
        return Err(TrainError::Shape(format!("{} values for {labels} rows of {dim}", z.len())));
    }
    if !z.iter().all(|v| v.is_finite()) {
        return Err(TrainError::NonFinite("projections".into()));
    }
    Ok(labels)
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Supervised contrastive loss over all `2B` rows of `z`: every row is an
/// anchor, its positives are the other rows with the same label and its
/// contrast set is every other row. Anchors without positives are skipped.
pub fn supcon_loss<T: Real>(z: &[T], labels: &[Case], dim: usize, temperature: f64, reduction: Reduction) -> Result<LossOutput<T>> {
    let n = check_rows(z, dim, labels.len())?;
    let inv_t = T::of(1.0 / temperature);
    let row = |i: usize| &z[i * dim..(i + 1) * dim];
    let mut sim = vec![T::zero(); n * n];
    for i in 0..n {
        for j in i..n {
            let s = dot(row(i), row(j)) * inv_t;
            sim[i * n + j] = s;
            sim[j * n + i] = s;
        }
    }
    // Coefficient of s_ij in the loss, accumulated per anchor.
    let mut coef = vec![T::zero(); n * n];
    let mut total = T::zero();
    let mut used = 0usize;
    for i in 0..n {
        let positives: Vec<usize> = (0..n).filter(|&p| p != i && labels[p] == labels[i]).collect();
        if positives.is_empty() {
            continue;
        }
        used += 1;
        let s = &sim[i * n..(i + 1) * n];
        let max = (0..n).filter(|&a| a != i).map(|a| s[a]).fold(T::neg_infinity(), T::max);
        let denom: T = (0..n).filter(|&a| a != i).map(|a| (s[a] - max).exp()).sum();
        let log_denom = max + denom.ln();
        let inv_p = T::one() / T::of(positives.len() as f64);
        total += positives.iter().map(|&p| log_denom - s[p]).sum::<T>() * inv_p;
        for a in (0..n).filter(|&a| a != i) {
            coef[i * n + a] += (s[a] - max).exp() / denom;
        }
        for &p in &positives {
            coef[i * n + p] -= inv_p;
        }
    }
    let skipped = n - used;
    if skipped > 0 {
        warn!("supcon: {skipped} of {n} anchors have no positive and were skipped");
    }
    let scale = match reduction {
        Reduction::Mean if used > 0 => T::one() / T::of(used as f64),
        _ => T::one(),
    };
    // d s_ij / d z_i = z_j / t and d s_ij / d z_j = z_i / t.
    let mut grad = vec![T::zero(); z.len()];
    for i in 0..n {
        for j in 0..n {
            let c = coef[i * n + j];
            if c == T::zero() {
                continue;
            }
            let c = c * scale * inv_t;
            for k in 0..dim {
                grad[i * dim + k] += c * z[j * dim + k];
                grad[j * dim + k] += c * z[i * dim + k];
            }
        }
    }
    let loss = total * scale;
    if !loss.is_finite() {
        return Err(TrainError::NonFinite("supcon loss".into()));
    }
    Ok(LossOutput { loss, grad, skipped })
}

/// Label pairs `(1,2), (1,3), (2,3)`: two different static cases.
pub fn is_static_pair(a: Case, b: Case) -> bool {
    a != b && a.is_static() && b.is_static()
}

/// Label pairs `(1,4), (2,4), (3,4)`: a static case against the dynamic one.
pub fn is_dynamic_pair(a: Case, b: Case) -> bool {
    a.is_static() != b.is_static()
}

fn distance<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>().sqrt()
}

/// `| mean_{S_s} |z_ratio,i - z_ratio,j| - mean_{S_ds} |z_rp,i - z_rp,j| |`
/// over unordered pairs; the gradient is with respect to `z_ratio` only (the
/// reference comes from a frozen encoder). An empty pair set contributes a
/// zero mean and counts as skipped.
pub fn consultation_loss<T: Real>(z_ratio: &[T], z_rp_ref: &[T], labels: &[Case], dim: usize) -> Result<LossOutput<T>> {
    let n = check_rows(z_ratio, dim, labels.len())?;
    check_rows(z_rp_ref, dim, labels.len())?;
    let row = |z: &[T], i: usize| z[i * dim..(i + 1) * dim].to_vec();
    let (mut sum_s, mut count_s, mut sum_ds, mut count_ds) = (T::zero(), 0usize, T::zero(), 0usize);
    for i in 0..n {
        for j in i + 1..n {
            if is_static_pair(labels[i], labels[j]) {
                sum_s += distance(&row(z_ratio, i), &row(z_ratio, j));
                count_s += 1;
            } else if is_dynamic_pair(labels[i], labels[j]) {
                sum_ds += distance(&row(z_rp_ref, i), &row(z_rp_ref, j));
                count_ds += 1;
            }
        }
    }
    let skipped = usize::from(count_s == 0) + usize::from(count_ds == 0);
    if skipped > 0 {
        warn!("consultation: empty pair set (static pairs {count_s}, static-dynamic pairs {count_ds})");
    }
    let mean = |s: T, c: usize| if c == 0 { T::zero() } else { s / T::of(c as f64) };
    let diff = mean(sum_s, count_s) - mean(sum_ds, count_ds);
    let mut grad = vec![T::zero(); z_ratio.len()];
    if count_s > 0 && diff != T::zero() {
        let sign = diff.signum() / T::of(count_s as f64);
        for i in 0..n {
            for j in i + 1..n {
                if !is_static_pair(labels[i], labels[j]) {
                    continue;
                }
                let (zi, zj) = (row(z_ratio, i), row(z_ratio, j));
                let d = distance(&zi, &zj);
                if d == T::zero() {
                    continue;
                }
                for k in 0..dim {
                    let g = sign * (zi[k] - zj[k]) / d;
                    grad[i * dim + k] += g;
                    grad[j * dim + k] -= g;
                }
            }
        }
    }
    Ok(LossOutput { loss: diff.abs(), grad, skipped })
}

/// Stage-2 objective on a `2B`-row batch (originals first): supervised
/// contrastive loss on all rows plus `lambda` times the consultation loss on
/// the `B` originals against their stage-1 reference projections.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage2Output<T> {
    pub loss: T,
    pub supcon: T,
    pub consultation: T,
    pub grad: Vec<T>,
}

pub fn stage2_loss<T: Real>(z_ratio: &[T], labels: &[Case], z_rp_ref: &[T], dim: usize, config: &LossConfig) -> Result<Stage2Output<T>> {
    let b = labels.len() / 2;
    if labels.len() != 2 * b || labels[..b] != labels[b..] {
        return Err(TrainError::Shape("stage-2 batch must be originals followed by their views".into()));
    }
    let sc = supcon_loss(z_ratio, labels, dim, config.temperature, config.supcon_reduction)?;
    let cs = consultation_loss(&z_ratio[..b * dim], z_rp_ref, &labels[..b], dim)?;
    let lambda = T::of(config.lambda);
    let mut grad = sc.grad;
    for (g, &c) in grad.iter_mut().zip(&cs.grad) {
        *g += lambda * c;
    }
    Ok(Stage2Output { loss: sc.loss + lambda * cs.loss, supcon: sc.loss, consultation: cs.loss, grad })
}

pub const PROBABILITY_FLOOR: f64 = 1e-12;

/// `-sum_i log p_i[label_i]` (divided by the batch size for `Mean`); the
/// gradient is with respect to the probabilities. Probabilities below
/// [`PROBABILITY_FLOOR`] are clamped (zero gradient there).
pub fn cross_entropy<T: Real>(probs: &[T], labels: &[Case], classes: usize, reduction: Reduction) -> Result<LossOutput<T>> {
    let n = check_rows(probs, classes, labels.len())?;
    let scale = match reduction {
        Reduction::Mean if n > 0 => T::one() / T::of(n as f64),
        _ => T::one(),
    };
    let floor = T::of(PROBABILITY_FLOOR);
    let mut loss = T::zero();
    let mut grad = vec![T::zero(); probs.len()];
    let mut skipped = 0;
    for (i, label) in labels.iter().enumerate() {
        let idx = i * classes + label.index();
        let p = probs[idx];
        if p < floor {
            skipped += 1;
            loss -= floor.ln() * scale;
        } else {
            loss -= p.ln() * scale;
            grad[idx] = -scale / p;
        }
    }
    if skipped > 0 {
        warn!("cross entropy: {skipped} true-class probabilities clamped at {PROBABILITY_FLOOR:e}");
    }
    Ok(LossOutput { loss, grad, skipped })
}

//! Switch fusion of the dynamic (RP) and static (ratio) class probabilities.
//!
//! The dynamic head's case-4 probability replaces the ratio head's, the
//! resulting 4-vector goes through a second softmax, and a hard switch picks
//! the dynamic distribution whenever case 4 is its strict unique maximum.

use presence_csi::Case;
use presence_nn::{softmax, softmax_backward, Real, NUM_CLASSES};
use serde::Serialize;

use crate::{Result, TrainError};

const DYNAMIC: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassProbabilities<T> {
    /// Dynamic-branch distribution.
    pub y_d: Vec<T>,
    /// Static-branch distribution.
    pub y_ratio: Vec<T>,
    /// `y_ratio` with its case-4 entry replaced by `y_d`'s.
    pub y_prime: Vec<T>,
    pub y_s: Vec<T>,
    pub omega: u8,
    pub y_final: Vec<T>,
}

impl<T: Real> ClassProbabilities<T> {
    /// Arg-max of the final distribution, ties to the lowest case.
    pub fn case(&self) -> Case {
        Case::from_index(argmax(&self.y_final)).expect("four classes")
    }
}

/// Index of the first maximum.
pub fn argmax<T: Real>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// `1` iff the case-4 entry is strictly larger than every other entry.
pub fn switch_value<T: Real>(y_d: &[T]) -> u8 {
    u8::from((0..y_d.len()).filter(|&i| i != DYNAMIC).all(|i| y_d[DYNAMIC] > y_d[i]))
}

fn check<T>(logits: &[T]) -> Result<()> {
    if logits.len() != NUM_CLASSES {
        return Err(TrainError::Shape(format!("expected {NUM_CLASSES} logits, got {}", logits.len())));
    }
    Ok(())
}

/// Combines two already-normalized distributions.
pub fn fuse<T: Real>(y_d: Vec<T>, y_ratio: Vec<T>) -> ClassProbabilities<T> {
    let mut y_prime = y_ratio.clone();
    y_prime[DYNAMIC] = y_d[DYNAMIC];
    let y_s = softmax(&y_prime);
    let omega = switch_value(&y_d);
    let y_final = if omega == 1 { y_d.clone() } else { y_s.clone() };
    ClassProbabilities { y_d, y_ratio, y_prime, y_s, omega, y_final }
}

pub fn s3fec_forward<T: Real>(logits_rp: &[T], logits_ratio: &[T]) -> Result<ClassProbabilities<T>> {
    check(logits_rp)?;
    check(logits_ratio)?;
    Ok(fuse(softmax(logits_rp), softmax(logits_ratio)))
}

/// Pulls `dL/dy_final` back to both heads' logits through the branch the
/// switch selected; the switch itself passes no gradient.
pub fn s3fec_backward<T: Real>(p: &ClassProbabilities<T>, d_final: &[T]) -> (Vec<T>, Vec<T>) {
    let zeros = vec![T::zero(); NUM_CLASSES];
    if p.omega == 1 {
        return (softmax_backward(&p.y_d, d_final), zeros);
    }
    let d_prime = softmax_backward(&p.y_s, d_final);
    let mut d_ratio = d_prime.clone();
    d_ratio[DYNAMIC] = T::zero();
    let mut d_d = zeros;
    d_d[DYNAMIC] = d_prime[DYNAMIC];
    (softmax_backward(&p.y_d, &d_d), softmax_backward(&p.y_ratio, &d_ratio))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dynamic_maximum_selects_the_rp_branch() {
        let p = fuse(vec![0.1, 0.1, 0.1, 0.7], vec![0.4, 0.3, 0.2, 0.1]);
        assert_eq!(p.omega, 1);
        assert_eq!(p.y_final, p.y_d);
        assert_eq!(p.case(), Case::Dynamic);
    }

    #[test]
    fn static_maximum_uses_the_fused_softmax() {
        let p = fuse(vec![0.7, 0.1, 0.1, 0.1], vec![0.5, 0.3, 0.1, 0.1]);
        assert_eq!(p.omega, 0);
        // y' keeps the ratio entries and takes y_d's case-4 entry (also 0.1).
        let e: Vec<f64> = [0.5f64, 0.3, 0.1, 0.1].iter().map(|v| v.exp()).collect();
        let sum: f64 = e.iter().sum();
        for (got, want) in p.y_final.iter().zip(e.iter().map(|v| v / sum)) {
            assert!((got - want).abs() < 1e-15);
        }
        assert_eq!(p.case(), Case::Empty);
    }

    #[test]
    fn ties_do_not_switch_and_argmax_prefers_lower_cases() {
        assert_eq!(switch_value(&[0.25, 0.25, 0.25, 0.25]), 0);
        assert_eq!(switch_value(&[0.1, 0.0, 0.45, 0.45]), 0);
        assert_eq!(argmax(&[0.2, 0.35, 0.35, 0.1]), 1);
    }
}

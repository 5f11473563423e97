//! Central finite-difference check of analytic gradients (64-bit).

use crate::{NnError, Result};

/// `|a - n| / max(|a|, |n|, 1e-7)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7)
}

/// Compares `grad(params)` with central differences of `loss` at step `eps`
/// and returns the largest relative error over all coordinates.
pub fn grad_check(
    mut loss: impl FnMut(&[f64]) -> Result<f64>,
    grad: impl FnOnce(&[f64]) -> Result<Vec<f64>>,
    params: &[f64],
    eps: f64,
) -> Result<f64> {
    let analytic = grad(params)?;
    if analytic.len() != params.len() {
        return Err(NnError::Shape(format!("gradient has {} entries for {} parameters", analytic.len(), params.len())));
    }
    let mut probe = params.to_vec();
    let mut worst = 0.0f64;
    for i in 0..params.len() {
        probe[i] = params[i] + eps;
        let plus = loss(&probe)?;
        probe[i] = params[i] - eps;
        let minus = loss(&probe)?;
        probe[i] = params[i];
        if !plus.is_finite() || !minus.is_finite() || !analytic[i].is_finite() {
            return Err(NnError::NonFinite("loss"));
        }
        worst = worst.max(relative_error(analytic[i], (plus - minus) / (2.0 * eps)));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let w = [0.3, -1.2, 2.5, 0.0, 7.0];
        let err = grad_check(
            |p| Ok(p.iter().map(|x| x * x).sum()),
            |p| Ok(p.iter().map(|x| 2.0 * x).collect()),
            &w,
            1e-4,
        )
        .unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let r = grad_check(|p| Ok(p[0].ln()), |_| Ok(vec![1.0]), &[0.0], 1e-4);
        assert!(matches!(r, Err(NnError::NonFinite(_))));
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let err = grad_check(|p| Ok(p[0].powi(3)), |p| Ok(vec![2.0 * p[0]]), &[1.5], 1e-4).unwrap();
        assert!(err > 0.1);
    }
}

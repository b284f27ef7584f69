//! Curvature-based stepsizes: the secant curvature estimate, its noise
//! correction for batch gradients, and the smoothing across iterations.

use crate::scalar::{vec, Scalar};

use super::OptError;

/// Secant curvature `<x_t - x_prev, g_t - g_prev> / ||x_t - x_prev||^2`.
/// Both gradients must come from the same batch.
pub fn bb_curvature<S: Scalar>(
    x_t: &[S],
    x_prev: &[S],
    g_t: &[S],
    g_prev: &[S],
) -> Result<S, OptError> {
    let dx = vec::sub(x_t, x_prev);
    let dx2 = vec::norm_sq(&dx);
    if !(dx2 > S::zero()) {
        return Err(OptError::ZeroDisplacement);
    }
    let dg = vec::sub(g_t, g_prev);
    let nu = vec::dot(&dx, &dg) / dx2;
    if !(nu > S::zero()) || !nu.is_finite() {
        return Err(OptError::NonPositiveCurvature(nu.to_f64_lossy()));
    }
    Ok(nu)
}

/// Stepsize minimizing the expected loss of a quadratic model with curvature
/// `nu` under batch noise: `(1/nu)(1 - V_B / (K ||G_B||^2))` for a partial
/// batch, `1/nu` when the batch is the whole dataset.
pub fn bb_stepsize<S: Scalar>(
    nu: S,
    var_est: S,
    k: usize,
    grad_norm_sq: S,
    n: usize,
) -> Result<S, OptError> {
    if !(nu > S::zero()) {
        return Err(OptError::NonPositiveCurvature(nu.to_f64_lossy()));
    }
    if k >= n {
        return Ok(S::one() / nu);
    }
    if k < 2 {
        return Err(OptError::InvalidConfig(format!(
            "noise-corrected stepsize needs K >= 2, got {k}"
        )));
    }
    if !(grad_norm_sq > S::zero()) {
        return Err(OptError::InvalidConfig(
            "noise-corrected stepsize needs a nonzero batch gradient".into(),
        ));
    }
    let ratio = var_est / (S::from_count(k) * grad_norm_sq);
    Ok((S::one() - ratio) / nu)
}

/// `(1 - K/n) alpha_prev + (K/n) alpha_tilde`
pub fn smooth_stepsize<S: Scalar>(alpha_prev: S, alpha_tilde: S, k: usize, n: usize) -> S {
    if k >= n {
        return alpha_tilde;
    }
    let w = S::from_count(k) / S::from_count(n);
    (S::one() - w) * alpha_prev + w * alpha_tilde
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curvature_of_scaled_identity() {
        let xp = [1.0, -1.0, 0.5];
        let xt = [0.5, 0.0, 2.0];
        let gp = [0.3, 0.1, -0.2];
        let gt: Vec<f64> = (0..3).map(|i| gp[i] + 2.0 * (xt[i] - xp[i])).collect();
        let nu = bb_curvature(&xt, &xp, &gt, &gp).unwrap();
        assert!((nu - 2.0).abs() < 1e-15);
    }

    #[test]
    fn curvature_error_paths() {
        assert!(matches!(
            bb_curvature(&[1.0, 2.0], &[1.0, 2.0], &[0.0, 1.0], &[1.0, 0.0]),
            Err(OptError::ZeroDisplacement)
        ));
        // gradient decreased along the displacement: negative curvature
        assert!(matches!(
            bb_curvature(&[1.0], &[0.0], &[-1.0], &[1.0]),
            Err(OptError::NonPositiveCurvature(v)) if v == -2.0
        ));
    }

    #[test]
    fn stepsize_examples() {
        assert_eq!(bb_stepsize(2.0, 0.0, 10, 1.0, 100).unwrap(), 0.5);
        // V / (K g2) = 0.25
        assert_eq!(bb_stepsize(2.0, 2.5, 10, 1.0, 100).unwrap(), 0.375);
        // full batch ignores the noise terms
        assert_eq!(bb_stepsize(4.0, 123.0, 100, 0.0, 100).unwrap(), 0.25);
        assert!(bb_stepsize(0.0, 0.0, 10, 1.0, 100).is_err());
        assert!(bb_stepsize(1.0, 0.0, 10, 0.0, 100).is_err());
    }

    #[test]
    fn smoothing_examples() {
        assert_eq!(smooth_stepsize(3.0, 0.7, 50, 50), 0.7);
        assert!((smooth_stepsize(1.0f64, 0.0, 10, 100) - 0.9).abs() < 1e-15);
        // repeated smoothing towards a constant contracts by (1 - K/n)
        let (k, n, target) = (20, 100, 0.25);
        let mut a: f64 = 2.0;
        let mut gap = a - target;
        for _ in 0..50 {
            a = smooth_stepsize(a, target, k, n);
            let g = a - target;
            assert!((g - 0.8 * gap).abs() < 1e-14);
            gap = g;
        }
    }
}

use crate::problems::ProblemError;
use crate::scalar::{vec, Scalar};

use super::OptError;

/// Backtracking parameters. The stepsize is halved on every failed test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmijoConfig<S> {
    /// Sufficient-decrease constant, `0 < c <= 0.5`.
    pub c: S,
    pub max_halvings: u32,
}

impl<S: Scalar> Default for ArmijoConfig<S> {
    fn default() -> Self {
        Self {
            c: S::lit(0.1),
            max_halvings: 60,
        }
    }
}

impl<S: Scalar> ArmijoConfig<S> {
    pub fn validate(&self) -> Result<(), OptError> {
        if !(self.c > S::zero() && self.c <= S::lit(0.5)) {
            return Err(OptError::InvalidConfig(format!(
                "c must lie in (0, 0.5], got {}",
                self.c
            )));
        }
        if self.max_halvings == 0 {
            return Err(OptError::InvalidConfig(
                "max_halvings must be positive".into(),
            ));
        }
        Ok(())
    }

    /// `l(x - alpha g) <= l(x) - c alpha ||g||^2`
    #[inline]
    pub fn accepts(&self, candidate: S, current: S, alpha: S, grad_norm_sq: S) -> bool {
        candidate <= current - self.c * alpha * grad_norm_sq
    }
}

/// Returns the largest `alpha` in `alpha0, alpha0/2, alpha0/4, ...` that
/// satisfies the sufficient-decrease test for `loss_at`, which must evaluate
/// the same batch that produced `grad` and `loss_x = loss_at(x)`.
pub fn armijo_search<S, F>(
    mut loss_at: F,
    x: &[S],
    loss_x: S,
    grad: &[S],
    alpha0: S,
    cfg: &ArmijoConfig<S>,
) -> Result<S, OptError>
where
    S: Scalar,
    F: FnMut(&[S]) -> Result<S, ProblemError>,
{
    let g2 = vec::norm_sq(grad);
    let half = S::lit(0.5);
    let mut alpha = alpha0;
    for halvings in 0..=cfg.max_halvings {
        let cand = vec::step(x, alpha, grad);
        if vec::all_finite(&cand) {
            let v = loss_at(&cand)?;
            if cfg.accepts(v, loss_x, alpha, g2) {
                return Ok(alpha);
            }
        }
        if halvings < cfg.max_halvings {
            alpha *= half;
        }
    }
    Err(OptError::LineSearchFailed {
        last_alpha: alpha.to_f64_lossy(),
        halvings: cfg.max_halvings,
    })
}

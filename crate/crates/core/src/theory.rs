//! Closed-form constants for big-batch convergence, and the reference
//! quantities (`mu`, `L`, `l*`) the empirical checks compare against.
//!
//! All rate formulas take `0 < theta < 1`; at `theta = 1` the noise
//! inflation factor `beta` is unbounded.

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

use crate::problems::{Problem, ProblemError, ProblemKind};
use crate::scalar::{vec, Scalar};

#[derive(Debug, Error, PartialEq)]
pub enum TheoryError {
    #[error("{name} = {value} outside its admissible range {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
}

pub type Result<T> = std::result::Result<T, TheoryError>;

fn out_of_range<S: Scalar>(name: &'static str, value: S, range: &'static str) -> TheoryError {
    TheoryError::OutOfRange {
        name,
        value: value.to_f64_lossy(),
        range,
    }
}

/// Constants of a smooth objective satisfying the PL inequality, plus the
/// batch and line-search parameters the rates depend on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateParams<S> {
    /// PL / strong convexity constant.
    pub mu: S,
    /// Lipschitz constant of the gradient.
    pub lipschitz: S,
    pub theta: S,
    /// Lipschitz constant of the gradient with respect to the data.
    pub data_lipschitz: S,
    /// Armijo sufficient-decrease constant.
    pub c: S,
}

impl<S: Scalar> RateParams<S> {
    pub fn new(mu: S, lipschitz: S, theta: S, data_lipschitz: S, c: S) -> Result<Self> {
        let p = Self {
            mu,
            lipschitz,
            theta,
            data_lipschitz,
            c,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > S::zero()) {
            return Err(out_of_range("mu", self.mu, "(0, inf)"));
        }
        if !(self.lipschitz >= self.mu) || !self.lipschitz.is_finite() {
            return Err(out_of_range("L", self.lipschitz, "[mu, inf)"));
        }
        if !(self.data_lipschitz >= S::zero()) {
            return Err(out_of_range("Lz", self.data_lipschitz, "[0, inf)"));
        }
        if !(self.c > S::zero() && self.c <= S::lit(0.5)) {
            return Err(out_of_range("c", self.c, "(0, 0.5]"));
        }
        beta(self.theta).map(|_| ())
    }

    pub fn beta(&self) -> S {
        beta(self.theta).expect("validated theta")
    }
}

/// Noise inflation factor `(theta^2 + (1 - theta)^2) / (1 - theta)^2`.
pub fn beta<S: Scalar>(theta: S) -> Result<S> {
    if !(theta > S::zero() && theta < S::one()) {
        return Err(out_of_range("theta", theta, "(0, 1)"));
    }
    let r = S::one() - theta;
    Ok((theta * theta + r * r) / (r * r))
}

/// Per-iteration contraction `1 - 2 mu (alpha - L alpha^2 beta / 2)` for a
/// fixed stepsize `0 <= alpha < 2 / (L beta)`.
pub fn linear_rate_gamma<S: Scalar>(params: &RateParams<S>, alpha: S) -> Result<S> {
    params.validate()?;
    let b = params.beta();
    let l = params.lipschitz;
    let two = S::lit(2.0);
    if !(alpha >= S::zero() && alpha < two / (l * b)) {
        return Err(out_of_range("alpha", alpha, "[0, 2/(L beta))"));
    }
    Ok(S::one() - two * params.mu * (alpha - l * alpha * alpha * b / two))
}

/// Contraction of the backtracking variant:
/// `1 - 2 c mu min(alpha0, 1 / (2 beta L))`.
pub fn armijo_rate_gamma<S: Scalar>(params: &RateParams<S>, alpha0: S) -> Result<S> {
    params.validate()?;
    if !(alpha0 > S::zero()) {
        return Err(out_of_range("alpha0", alpha0, "(0, inf)"));
    }
    let two = S::lit(2.0);
    let floor = S::one() / (two * params.beta() * params.lipschitz);
    Ok(S::one() - two * params.c * params.mu * alpha0.min(floor))
}

/// `2 L beta ||x0 - x*||^2 / (t + 1)`, the convex-case bound at the optimal
/// fixed stepsize.
pub fn sublinear_bound<S: Scalar>(lipschitz: S, beta: S, x0_dist_sq: S, t: usize) -> S {
    S::lit(2.0) * lipschitz * beta * x0_dist_sq / S::from_count(t + 1)
}

/// Uniform bound `4 Lz^2 TrVar(z) / K` on the batch-gradient error.
pub fn variance_bound<S: Scalar>(data_lipschitz: S, trace_var_z: S, k: usize) -> Result<S> {
    if !(data_lipschitz >= S::zero()) {
        return Err(out_of_range("Lz", data_lipschitz, "[0, inf)"));
    }
    if !(trace_var_z >= S::zero()) {
        return Err(out_of_range("TrVar(z)", trace_var_z, "[0, inf)"));
    }
    if k == 0 {
        return Err(out_of_range("K", S::zero(), "[1, inf)"));
    }
    Ok(S::lit(4.0) * data_lipschitz * data_lipschitz * trace_var_z / S::from_count(k))
}

/// `||g_B - g||^2 < ||g_B||^2`: sufficient for `-g_B` to be a descent
/// direction of the objective whose true gradient is `g`.
pub fn descent_condition_holds<S: Scalar>(batch_grad: &[S], true_grad: &[S]) -> bool {
    vec::dist_sq(batch_grad, true_grad) < vec::norm_sq(batch_grad)
}

/// Isotropic quadratic model `(nu/2) ||x - phi||^2`, `phi ~ N(x*, sigma^2 I)`,
/// with a batch of `k` samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadModel<S> {
    pub nu: S,
    pub sigma: S,
    pub d: usize,
    pub k: usize,
}

impl<S: Scalar> QuadModel<S> {
    pub fn new(nu: S, sigma: S, d: usize, k: usize) -> Result<Self> {
        if !(nu > S::zero()) {
            return Err(out_of_range("nu", nu, "(0, inf)"));
        }
        if !(sigma >= S::zero()) {
            return Err(out_of_range("sigma", sigma, "[0, inf)"));
        }
        if d == 0 {
            return Err(out_of_range("d", S::zero(), "[1, inf)"));
        }
        if k == 0 {
            return Err(out_of_range("K", S::zero(), "[1, inf)"));
        }
        Ok(Self { nu, sigma, d, k })
    }

    /// Per-sample gradient trace variance `d nu^2 sigma^2`.
    pub fn trace_variance(&self) -> S {
        S::from_count(self.d) * self.nu * self.nu * self.sigma * self.sigma
    }
}

/// Expected objective after one batch step of size `alpha` from a point at
/// squared distance `dist_sq` from the optimum:
/// `(nu/2) (||(1 - nu alpha)(x - x*)||^2 + (1 + nu^2 alpha^2 / K) d sigma^2)`.
pub fn quad_expected_loss<S: Scalar>(model: &QuadModel<S>, alpha: S, dist_sq: S) -> S {
    let nu = model.nu;
    let shrink = S::one() - nu * alpha;
    let noise = S::from_count(model.d) * model.sigma * model.sigma;
    let k = S::from_count(model.k);
    nu / S::lit(2.0)
        * (shrink * shrink * dist_sq + (S::one() + nu * nu * alpha * alpha / k) * noise)
}

/// Analytic minimizer of [`quad_expected_loss`] over `alpha`:
/// `dist_sq / (nu (dist_sq + d sigma^2 / K))`.
pub fn quad_optimal_stepsize<S: Scalar>(model: &QuadModel<S>, dist_sq: S) -> S {
    let noise = S::from_count(model.d) * model.sigma * model.sigma / S::from_count(model.k);
    dist_sq / (model.nu * (dist_sq + noise))
}

/// `(1 - theta^2) / nu`, the smallest noise-corrected curvature stepsize when
/// the noise ratio is at most `theta^2`.
pub fn bb_lower_bound<S: Scalar>(nu: S, theta: S) -> Result<S> {
    if !(nu > S::zero()) {
        return Err(out_of_range("nu", nu, "(0, inf)"));
    }
    if !(theta >= S::zero() && theta < S::one()) {
        return Err(out_of_range("theta", theta, "[0, 1)"));
    }
    Ok((S::one() - theta * theta) / nu)
}

/// Extreme eigenvalues of a problem's Hessian, or a bound on them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Curvature {
    /// Smallest eigenvalue; `None` where no strong convexity constant is
    /// claimed (logistic).
    pub mu: Option<f64>,
    pub lipschitz: f64,
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Gram matrix `A^T A` of the features.
pub fn gram_matrix<S: Scalar>(problem: &Problem<S>) -> DMatrix<f64> {
    let data = problem.dataset();
    let (n, d) = (data.n(), data.d());
    let a = DMatrix::from_fn(n, d, |i, j| data.row(i)[j].to_f64_lossy());
    a.transpose() * a
}

/// Exact Hessian spectrum for least squares (`(2/n) A^T A + 2 lambda I`) and
/// the synthetic quadratic (`nu I`). For logistic, `L = lambda_max(A^T A) /
/// (2n) + 2 lambda`, an upper bound, and no `mu`.
pub fn curvature<S: Scalar>(problem: &Problem<S>) -> Curvature {
    let n = problem.n() as f64;
    let reg = 2.0 * problem.lambda().to_f64_lossy();
    match problem.kind() {
        ProblemKind::Quadratic { curvature, .. } => {
            let nu = curvature.to_f64_lossy();
            Curvature {
                mu: Some(nu),
                lipschitz: nu,
            }
        }
        ProblemKind::LeastSquares => {
            let ev = symmetric_eigenvalues(gram_matrix(problem) * (2.0 / n));
            Curvature {
                mu: Some(ev[0] + reg),
                lipschitz: ev[ev.len() - 1] + reg,
            }
        }
        ProblemKind::Logistic => {
            let ev = symmetric_eigenvalues(gram_matrix(problem));
            Curvature {
                mu: None,
                lipschitz: ev[ev.len() - 1] / (2.0 * n) + reg,
            }
        }
    }
}

/// Approximate minimizer from full-gradient descent with Armijo backtracking
/// (`c = 0.5`, stepsize doubled before each search).
#[derive(Debug, Clone)]
pub struct ReferenceMinimum<S> {
    pub x: Vec<S>,
    pub loss: S,
    pub grad_norm: S,
    pub iterations: usize,
}

pub fn reference_minimum<S: Scalar>(
    problem: &Problem<S>,
    x0: &[S],
    tol: S,
    max_iter: usize,
) -> std::result::Result<ReferenceMinimum<S>, ProblemError> {
    let half = S::lit(0.5);
    let mut x = x0.to_vec();
    let mut cur = problem.full_loss(&x)?;
    let mut alpha = S::one();
    let all: Vec<usize> = (0..problem.n()).collect();
    let mut iterations = 0;
    while iterations < max_iter {
        let g2 = vec::norm_sq(&cur.gradient);
        if g2.sqrt() <= tol {
            break;
        }
        alpha *= S::lit(2.0);
        let mut accepted = None;
        let slack = S::lit(16.0) * S::epsilon() * cur.value.abs().max(S::one());
        for _ in 0..80 {
            let cand = vec::step(&x, alpha, &cur.gradient);
            let v = problem.batch_value(&cand, &all)?;
            let decrease = half * alpha * g2;
            if decrease > slack && v <= cur.value - decrease {
                accepted = Some(problem.full_loss(&cand).map(|s| (cand, s))?);
                break;
            }
            // below rounding the loss cannot certify progress; require a
            // smaller gradient at a loss equal up to rounding
            if decrease <= slack && v <= cur.value + slack {
                let s = problem.full_loss(&cand)?;
                if vec::norm_sq(&s.gradient) < g2 {
                    accepted = Some((cand, s));
                    break;
                }
            }
            alpha *= half;
        }
        let Some((next, sample)) = accepted else {
            break;
        };
        x = next;
        cur = sample;
        iterations += 1;
    }
    let grad_norm = vec::norm(&cur.gradient);
    Ok(ReferenceMinimum {
        x,
        loss: cur.value,
        grad_norm,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{generate_quadratic, Dataset};

    fn params(mu: f64, l: f64, theta: f64, c: f64) -> RateParams<f64> {
        RateParams::new(mu, l, theta, 0.0, c).unwrap()
    }

    #[test]
    fn beta_values() {
        assert_eq!(beta(0.5).unwrap(), 2.0);
        assert!((beta(1e-9f64).unwrap() - 1.0).abs() < 1e-8);
        assert!((beta(0.9f64).unwrap() - 82.0).abs() < 1e-9);
        assert!(beta(1.0).is_err());
        assert!(beta(0.0).is_err());
    }

    #[test]
    fn beta_at_least_one_on_grid() {
        for i in 1..1000 {
            let t = i as f64 / 1000.0;
            assert!(beta(t).unwrap() >= 1.0 - 1e-12);
        }
    }

    #[test]
    fn linear_gamma_values() {
        let p = params(2.0, 2.0, 0.5, 0.5);
        assert_eq!(linear_rate_gamma(&p, 0.0).unwrap(), 1.0);
        assert!((linear_rate_gamma(&p, 0.25).unwrap() - 0.5).abs() < 1e-15);
        assert!(linear_rate_gamma(&p, 0.5).is_err());
        assert!(linear_rate_gamma(&p, -0.1).is_err());
    }

    #[test]
    fn linear_gamma_minimized_at_inverse_beta_l() {
        let p = params(0.3, 4.0, 0.5, 0.5);
        let b = p.beta();
        let best = 1.0 / (b * p.lipschitz);
        let floor = 1.0 - p.mu / (b * p.lipschitz);
        let at_best = linear_rate_gamma(&p, best).unwrap();
        assert!((at_best - floor).abs() < 1e-12);
        let hi = 2.0 / (p.lipschitz * b);
        for i in 0..2000 {
            let a = hi * i as f64 / 2000.0;
            let g = linear_rate_gamma(&p, a).unwrap();
            assert!(g >= floor - 1e-12 && g <= 1.0 + 1e-12, "alpha {a}: {g}");
        }
    }

    #[test]
    fn armijo_gamma_values() {
        let p = params(1.0, 1.0, 0.5, 0.5);
        assert!((armijo_rate_gamma(&p, 100.0).unwrap() - 0.75).abs() < 1e-15);
        assert!(armijo_rate_gamma(&p, 1e-12).unwrap() > 1.0 - 1e-11);
        let mut prev = 1.0;
        for i in 1..=50 {
            let c = 0.5 * i as f64 / 50.0;
            let g = armijo_rate_gamma(&params(0.5, 2.0, 0.5, c), 1.0).unwrap();
            assert!(g <= prev);
            prev = g;
        }
        assert!(RateParams::new(1.0, 1.0, 0.5, 0.0, 0.7).is_err());
        assert!(RateParams::new(1.0, 0.5, 0.5, 0.0, 0.1).is_err());
    }

    #[test]
    fn sublinear_bound_decay() {
        let b = sublinear_bound(2.0, 2.0, 3.0, 0);
        assert_eq!(b, 24.0);
        assert_eq!(sublinear_bound(2.0, 2.0, 3.0, 1), 12.0);
        assert!(sublinear_bound(2.0, 2.0, 3.0, 1 << 40) < 1e-10);
    }

    #[test]
    fn variance_bound_values() {
        assert_eq!(variance_bound(0.0, 5.0, 3).unwrap(), 0.0);
        let a = variance_bound(1.5f64, 2.0, 10).unwrap();
        let b = variance_bound(1.5, 2.0, 20).unwrap();
        assert!((a - 2.0 * b).abs() < 1e-15);
        assert!(variance_bound(1.0, 1.0, 0).is_err());
        // dominates the exact isotropic variance d nu^2 sigma^2 / K
        for &(nu, sigma, d, k) in &[
            (1.0, 0.1, 10usize, 7usize),
            (3.0, 2.0, 1, 1),
            (0.2, 5.0, 50, 1000),
        ] {
            let exact = QuadModel::new(nu, sigma, d, k).unwrap().trace_variance() / k as f64;
            assert!(variance_bound(nu, d as f64 * sigma * sigma, k).unwrap() >= exact);
        }
    }

    #[test]
    fn descent_condition_examples() {
        let g = [1.0, -2.0, 0.5];
        assert!(descent_condition_holds(&g, &g));
        let neg: Vec<f64> = g.iter().map(|v| -v).collect();
        assert!(!descent_condition_holds(&neg, &g));
    }

    #[test]
    fn quad_expected_loss_examples() {
        let m = QuadModel::new(2.0f64, 0.3, 4, 10).unwrap();
        let now = quad_expected_loss(&m, 0.0, 1.5);
        assert!((now - 1.0 * (1.5 + 4.0 * 0.09)).abs() < 1e-15);
        let clean = QuadModel::new(2.0, 0.0, 4, 10).unwrap();
        assert_eq!(quad_expected_loss(&clean, 0.5, 1.5), 0.0);
    }

    #[test]
    fn quad_expected_loss_is_strictly_convex_in_alpha() {
        let m = QuadModel::new(1.3, 0.2, 7, 25).unwrap();
        let h = 1e-3;
        for i in 1..1500 {
            let a = i as f64 * h;
            let second = quad_expected_loss(&m, a + h, 0.4) - 2.0 * quad_expected_loss(&m, a, 0.4)
                + quad_expected_loss(&m, a - h, 0.4);
            assert!(second > 0.0);
        }
    }

    #[test]
    fn bb_lower_bound_values() {
        assert_eq!(bb_lower_bound(4.0, 0.0).unwrap(), 0.25);
        assert!((bb_lower_bound(1.0, 0.5f64.sqrt()).unwrap() - 0.5).abs() < 1e-15);
        assert!(bb_lower_bound(0.0, 0.5).is_err());
        assert!(bb_lower_bound(1.0, 1.0).is_err());
    }

    #[test]
    fn curvature_of_quadratic_and_least_squares() {
        let q = generate_quadratic(3, 10, 2.5, 0.1, &[0.0; 3], 1).unwrap();
        assert_eq!(
            curvature(&q),
            Curvature {
                mu: Some(2.5),
                lipschitz: 2.5
            }
        );
        // A = diag-ish: rows (1,0), (0,2) -> (2/2) A^T A = diag(1, 4)
        let data = Dataset::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0]], vec![0.0, 0.0]).unwrap();
        let p = Problem::least_squares(data, 0.0).unwrap();
        let c = curvature(&p);
        assert!((c.mu.unwrap() - 1.0).abs() < 1e-12);
        assert!((c.lipschitz - 4.0).abs() < 1e-12);
    }

    #[test]
    fn reference_minimum_solves_least_squares() {
        let data = Dataset::from_rows(
            &[
                vec![1.0f64, 0.5],
                vec![-0.3, 2.0],
                vec![0.7, -1.0],
                vec![2.0, 0.1],
            ],
            vec![1.0, -2.0, 0.5, 3.0],
        )
        .unwrap();
        let p = Problem::least_squares(data, 0.0).unwrap();
        let r = reference_minimum(&p, &[0.0, 0.0], 1e-12, 100_000).unwrap();
        assert!(
            r.grad_norm <= 1e-12,
            "{} {} {}",
            r.grad_norm,
            r.iterations,
            r.loss
        );
        // normal equations
        let a =
            nalgebra::DMatrix::from_row_slice(4, 2, &[1.0, 0.5, -0.3, 2.0, 0.7, -1.0, 2.0, 0.1]);
        let b = nalgebra::DVector::from_row_slice(&[1.0, -2.0, 0.5, 3.0]);
        let xs = (a.transpose() * &a)
            .cholesky()
            .unwrap()
            .solve(&(a.transpose() * b));
        assert!((r.x[0] - xs[0]).abs() < 1e-10 && (r.x[1] - xs[1]).abs() < 1e-10);
    }
}

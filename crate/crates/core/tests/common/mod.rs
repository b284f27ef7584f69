#![allow(dead_code)]

use bigbatch::{Dataset, Problem};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

/// Rows `a_i ~ N(0, I)`, labels `a_i . w + noise * xi`.
pub fn regression_data(seed: u64, n: usize, d: usize, noise: f64) -> Dataset<f64> {
    let mut r = rng(seed);
    let w = gaussian_vec(&mut r, d);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let a = gaussian_vec(&mut r, d);
        let xi: f64 = r.sample(StandardNormal);
        labels.push(a.iter().zip(&w).map(|(p, q)| p * q).sum::<f64>() + noise * xi);
        rows.push(a);
    }
    Dataset::from_rows(&rows, labels).unwrap()
}

/// Linearly generated +/-1 labels with a fraction `flip` flipped, so the
/// data are not separable.
pub fn classification_data(seed: u64, n: usize, d: usize, flip: f64) -> Dataset<f64> {
    let mut r = rng(seed);
    let w = gaussian_vec(&mut r, d);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let a: Vec<f64> = gaussian_vec(&mut r, d)
            .iter()
            .map(|v| v * 2.0 + 0.5)
            .collect();
        let s: f64 = a.iter().zip(&w).map(|(p, q)| p * q).sum();
        let mut y = if s >= 0.0 { 1.0 } else { -1.0 };
        if r.random::<f64>() < flip {
            y = -y;
        }
        labels.push(y);
        rows.push(a);
    }
    Dataset::from_rows(&rows, labels).unwrap()
}

pub fn design_matrix(data: &Dataset<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(data.n(), data.d(), data.features())
}

/// Extreme eigenvalues of the least-squares Hessian `(2/n) A^T A + 2 lambda I`.
pub fn ls_hessian_extremes(data: &Dataset<f64>, lambda: f64) -> (f64, f64) {
    let a = design_matrix(data);
    let h = a.transpose() * &a * (2.0 / data.n() as f64)
        + DMatrix::identity(data.d(), data.d()) * (2.0 * lambda);
    let ev = h.symmetric_eigen().eigenvalues;
    (ev.min(), ev.max())
}

/// Exact least-squares minimizer and minimum from the normal equations.
pub fn ls_solution(data: &Dataset<f64>, lambda: f64) -> (Vec<f64>, f64) {
    let a = design_matrix(data);
    let b = DVector::from_row_slice(data.labels());
    let n = data.n() as f64;
    let lhs = a.transpose() * &a / n + DMatrix::identity(data.d(), data.d()) * lambda;
    let rhs = a.transpose() * &b / n;
    let x = lhs.cholesky().expect("positive definite").solve(&rhs);
    let r = &a * &x - &b;
    let value = r.norm_squared() / n + lambda * x.norm_squared();
    (x.iter().copied().collect(), value)
}

/// Least-squares loss and gradient written out independently of the library.
pub fn ls_loss(data: &Dataset<f64>, x: &[f64]) -> (f64, Vec<f64>) {
    let n = data.n();
    let mut value = 0.0;
    let mut grad = vec![0.0; x.len()];
    for i in 0..n {
        let a = data.row(i);
        let r = a.iter().zip(x).map(|(p, q)| p * q).sum::<f64>() - data.label(i);
        value += r * r;
        for j in 0..x.len() {
            grad[j] += 2.0 * r * a[j];
        }
    }
    let nf = n as f64;
    (value / nf, grad.iter().map(|g| g / nf).collect())
}

pub fn logistic(data: Dataset<f64>, lambda: f64) -> Problem<f64> {
    Problem::logistic(data, lambda).unwrap()
}

pub fn least_squares(data: Dataset<f64>, lambda: f64) -> Problem<f64> {
    Problem::least_squares(data, lambda).unwrap()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Norm-wise relative error between the analytic full gradient and central
/// differences of the full loss value with step `h`.
pub fn fd_relative_error(problem: &Problem<f64>, x: &[f64], h: f64) -> f64 {
    let g = problem.full_loss(x).unwrap().gradient;
    let mut fd = vec![0.0; x.len()];
    let mut z = x.to_vec();
    for j in 0..x.len() {
        z[j] = x[j] + h;
        let up = problem.full_loss(&z).unwrap().value;
        z[j] = x[j] - h;
        let down = problem.full_loss(&z).unwrap().value;
        z[j] = x[j];
        fd[j] = (up - down) / (2.0 * h);
    }
    let diff: Vec<f64> = g.iter().zip(&fd).map(|(a, b)| a - b).collect();
    norm(&diff) / norm(&fd).max(norm(&g)).max(1e-300)
}

//! Batch sampling, the per-batch gradient variance estimate and the growth
//! loop that keeps the batch gradient's signal above its noise.
//!
//! A batch is accepted once `||G_B||^2 > theta^2 V_B / K`, where `G_B` is the
//! mean of the per-sample gradients and
//! `V_B = 1/(K-1) sum_i ||g_i - G_B||^2` their sample variance. Otherwise the
//! batch is extended with fresh samples, without replacement, until the test
//! passes or every sample is in the batch.

use rand::seq::index;
use rand::Rng;
use thiserror::Error;

use crate::problems::{Problem, ProblemError};
use crate::scalar::{tolerant_ceil, vec, Scalar};

#[derive(Debug, Error)]
pub enum BatchError {
    #[error("batch size {k} exceeds sample count {n}")]
    TooLarge { k: usize, n: usize },
    #[error("batch size {k} below the minimum of 2")]
    TooSmall { k: usize },
    #[error("cannot add {requested} samples, only {available} remain outside the batch")]
    ComplementExhausted { requested: usize, available: usize },
    #[error("variance needs at least 2 gradients, got {0}")]
    NotEnoughGradients(usize),
    #[error("invalid growth policy: {0}")]
    InvalidPolicy(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

pub type Result<T> = std::result::Result<T, BatchError>;

/// Batch growth parameters: `delta_K = max(1, ceil(increment_fraction * K))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthPolicy<S> {
    pub increment_fraction: S,
    pub theta: S,
}

impl<S: Scalar> Default for GrowthPolicy<S> {
    fn default() -> Self {
        Self {
            increment_fraction: S::lit(0.1),
            theta: S::one(),
        }
    }
}

impl<S: Scalar> GrowthPolicy<S> {
    pub fn new(increment_fraction: S, theta: S) -> Result<Self> {
        let p = Self {
            increment_fraction,
            theta,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: S| v > S::zero() && v <= S::one();
        if !unit(self.increment_fraction) {
            return Err(BatchError::InvalidPolicy(format!(
                "increment_fraction must lie in (0, 1], got {}",
                self.increment_fraction
            )));
        }
        if !unit(self.theta) {
            return Err(BatchError::InvalidPolicy(format!(
                "theta must lie in (0, 1], got {}",
                self.theta
            )));
        }
        Ok(())
    }

    /// Growth step for a batch of size `k`, before clamping at the cap.
    pub fn increment(&self, k: usize) -> usize {
        let raw = self.increment_fraction.to_f64_lossy() * k as f64;
        tolerant_ceil(raw).max(1)
    }
}

/// Samples `k` distinct indices from `0..n` uniformly without replacement.
/// A full batch (`k == n`) is returned in ascending order.
pub fn draw_batch<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> Result<Vec<usize>> {
    if k > n {
        return Err(BatchError::TooLarge { k, n });
    }
    if k < 2 {
        return Err(BatchError::TooSmall { k });
    }
    if k == n {
        return Ok((0..n).collect());
    }
    Ok(index::sample(rng, n, k).into_vec())
}

/// Samples `k` indices from `0..n` uniformly with replacement.
pub fn draw_with_replacement<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|_| rng.random_range(0..n)).collect()
}

/// Picks `delta` indices from the complement of `current` in `0..n`.
fn sample_complement<R: Rng + ?Sized>(
    rng: &mut R,
    current: &[usize],
    n: usize,
    delta: usize,
) -> Result<Vec<usize>> {
    let mut taken = vec![false; n];
    for &i in current {
        taken[i] = true;
    }
    let complement: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
    if delta > complement.len() {
        return Err(BatchError::ComplementExhausted {
            requested: delta,
            available: complement.len(),
        });
    }
    Ok(index::sample(rng, complement.len(), delta)
        .into_iter()
        .map(|j| complement[j])
        .collect())
}

/// Sample variance `1/(K-1) sum ||g_i - mean||^2` of a set of gradients.
pub fn estimate_variance<S: Scalar, G: AsRef<[S]>>(grads: &[G], mean: &[S]) -> Result<S> {
    if grads.len() < 2 {
        return Err(BatchError::NotEnoughGradients(grads.len()));
    }
    let ss: S = grads.iter().map(|g| vec::dist_sq(g.as_ref(), mean)).sum();
    Ok(ss / S::from_count(grads.len() - 1))
}

/// A batch evaluated at one iterate.
///
/// The gradient and loss sums are accumulated in insertion order, so
/// `mean_grad` and `mean_loss` equal `Problem::batch_loss` over `indices()`
/// exactly. The squared-deviation sum is merged group by group as samples are
/// added.
#[derive(Debug, Clone)]
pub struct BatchState<S> {
    indices: Vec<usize>,
    d: usize,
    grads: Vec<S>,
    grad_sum: Vec<S>,
    loss_sum: S,
    mean_grad: Vec<S>,
    sq_dev: S,
}

impl<S: Scalar> BatchState<S> {
    /// Evaluates every sample of `indices` at `x` (`indices.len()` gradient
    /// evaluations).
    pub fn evaluate(problem: &Problem<S>, x: &[S], indices: Vec<usize>) -> Result<Self> {
        if indices.len() < 2 {
            return Err(BatchError::TooSmall { k: indices.len() });
        }
        let d = problem.dim();
        let mut state = Self {
            indices: Vec::with_capacity(indices.len()),
            d,
            grads: Vec::with_capacity(indices.len() * d),
            grad_sum: vec![S::zero(); d],
            loss_sum: S::zero(),
            mean_grad: vec![S::zero(); d],
            sq_dev: S::zero(),
        };
        state.absorb(problem, x, &indices)?;
        Ok(state)
    }

    /// Draws a fresh batch of size `k` and evaluates it.
    pub fn sample<R: Rng + ?Sized>(
        problem: &Problem<S>,
        x: &[S],
        rng: &mut R,
        k: usize,
    ) -> Result<Self> {
        let indices = draw_batch(rng, problem.n(), k)?;
        Self::evaluate(problem, x, indices)
    }

    fn absorb(&mut self, problem: &Problem<S>, x: &[S], new: &[usize]) -> Result<()> {
        if new.is_empty() {
            return Ok(());
        }
        problem.check_iterate(x)?;
        for &i in new {
            if i >= problem.n() {
                return Err(ProblemError::IndexOutOfRange {
                    index: i,
                    n: problem.n(),
                }
                .into());
            }
        }

        let d = self.d;
        let old_k = self.indices.len();
        let old_mean: Vec<S> = if old_k > 0 {
            let k = S::from_count(old_k);
            self.grad_sum.iter().map(|&s| s / k).collect()
        } else {
            vec![S::zero(); d]
        };

        let start = self.grads.len();
        self.grads.resize(start + new.len() * d, S::zero());
        let mut new_sum = vec![S::zero(); d];
        for (j, &i) in new.iter().enumerate() {
            let g = &mut self.grads[start + j * d..start + (j + 1) * d];
            self.loss_sum += problem.eval_sample(x, i, Some(g));
            for ((s, ns), &gv) in self.grad_sum.iter_mut().zip(&mut new_sum).zip(g.iter()) {
                *s += gv;
                *ns += gv;
            }
        }
        self.indices.extend_from_slice(new);

        let m = S::from_count(new.len());
        let new_mean: Vec<S> = new_sum.iter().map(|&s| s / m).collect();
        let new_sq: S = self.grads[start..]
            .chunks_exact(d)
            .map(|g| vec::dist_sq(g, &new_mean))
            .sum();
        let total = S::from_count(old_k + new.len());
        let cross = if old_k > 0 {
            vec::dist_sq(&new_mean, &old_mean) * S::from_count(old_k) * m / total
        } else {
            S::zero()
        };
        self.sq_dev += new_sq + cross;
        for (mg, &s) in self.mean_grad.iter_mut().zip(&self.grad_sum) {
            *mg = s / total;
        }
        Ok(())
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// `G_B`, the batch-mean gradient.
    pub fn mean_grad(&self) -> &[S] {
        &self.mean_grad
    }

    /// `l_B(x)`, the batch-mean loss.
    pub fn mean_loss(&self) -> S {
        self.loss_sum / S::from_count(self.k())
    }

    /// `V_B`, the sample variance of the per-sample gradients.
    pub fn var_est(&self) -> S {
        (self.sq_dev / S::from_count(self.k() - 1)).max(S::zero())
    }

    pub fn grad_norm_sq(&self) -> S {
        vec::norm_sq(&self.mean_grad)
    }

    /// `V_B / (K ||G_B||^2)`; infinite when the batch gradient vanishes.
    pub fn noise_ratio(&self) -> S {
        let g2 = self.grad_norm_sq();
        let v = self.var_est();
        if g2 > S::zero() {
            v / (S::from_count(self.k()) * g2)
        } else if v > S::zero() {
            S::infinity()
        } else {
            S::nan()
        }
    }

    pub fn per_sample_grad(&self, j: usize) -> &[S] {
        &self.grads[j * self.d..(j + 1) * self.d]
    }

    pub fn per_sample_grads(&self) -> impl Iterator<Item = &[S]> {
        self.grads.chunks_exact(self.d)
    }

    /// `||G_B||^2 > theta^2 V_B / K`
    pub fn signal_dominates(&self, theta: S) -> bool {
        self.grad_norm_sq() > theta * theta * self.var_est() / S::from_count(self.k())
    }
}

/// Adds `delta` new distinct samples drawn uniformly from outside the batch,
/// evaluated at `x`. Returns the number of gradient evaluations made.
pub fn extend_batch<S: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    state: &mut BatchState<S>,
    delta: usize,
    problem: &Problem<S>,
    x: &[S],
) -> Result<usize> {
    if delta == 0 {
        return Ok(0);
    }
    let new = sample_complement(rng, state.indices(), problem.n(), delta)?;
    state.absorb(problem, x, &new)?;
    Ok(delta)
}

/// Result of [`grow_until_condition`].
#[derive(Debug, Clone)]
pub struct Growth<S> {
    pub state: BatchState<S>,
    /// Per-sample gradient evaluations spent on growth.
    pub evals: usize,
    pub grew: bool,
    /// The batch reached every sample.
    pub capped: bool,
}

/// Extends the batch by the policy's increments until
/// `||G_B||^2 > theta^2 V_B / K` or the batch holds all `n` samples.
pub fn grow_until_condition<S: Scalar, R: Rng + ?Sized>(
    problem: &Problem<S>,
    x: &[S],
    mut state: BatchState<S>,
    policy: &GrowthPolicy<S>,
    rng: &mut R,
) -> Result<Growth<S>> {
    let n = problem.n();
    let mut evals = 0;
    let mut grew = false;
    while state.k() < n && !state.signal_dominates(policy.theta) {
        let delta = policy.increment(state.k()).min(n - state.k());
        evals += extend_batch(rng, &mut state, delta, problem, x)?;
        grew = true;
    }
    let capped = state.k() == n;
    Ok(Growth {
        state,
        evals,
        grew,
        capped,
    })
}

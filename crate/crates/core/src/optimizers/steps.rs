//! One iteration of each optimizer. Every function advances `state` and
//! returns the parameter updates it performed.

use rand::Rng;

use crate::batching::{
    draw_batch, draw_with_replacement, grow_until_condition, BatchState, GrowthPolicy,
};
use crate::problems::Problem;
use crate::scalar::{vec, Scalar};

use super::{
    armijo_search, bb_curvature, bb_stepsize, check_divergence, smooth_stepsize, ArmijoConfig,
    DecaySchedule, OptError, OptimizerState, SfPolicy, Update,
};

struct Move<'a, S> {
    k: usize,
    alpha: S,
    direction: &'a [S],
    batch: &'a [usize],
    loss_before: S,
    line_search: bool,
    grew: bool,
}

/// Applies `x <- x - alpha * direction`, charges `k` gradient evaluations and
/// checks for divergence.
fn apply<S: Scalar>(state: &mut OptimizerState<S>, m: Move<'_, S>) -> Result<Update<S>, OptError> {
    let t = state.t + 1;
    check_divergence(t, &state.x, m.loss_before)?;
    let x_after = vec::step(&state.x, m.alpha, m.direction);
    check_divergence(t, &x_after, m.loss_before)?;
    let x_before = std::mem::replace(&mut state.x, x_after.clone());
    state.t = t;
    state.grad_evals += m.k as u64;
    state.alpha = m.alpha;
    Ok(Update {
        t,
        k: m.k,
        alpha: m.alpha,
        x_before,
        direction: m.direction.to_vec(),
        x_after,
        batch: m.batch.to_vec(),
        loss_before: m.loss_before,
        line_search: m.line_search,
        curvature: None,
        grew: m.grew,
        grad_evals: state.grad_evals,
    })
}

/// Draws a batch of the current size at `state.x` and grows it until the
/// signal-to-noise test passes. Updates `state.k`.
fn grown_batch<S: Scalar, R: Rng + ?Sized>(
    problem: &Problem<S>,
    state: &mut OptimizerState<S>,
    policy: &GrowthPolicy<S>,
    rng: &mut R,
) -> Result<(BatchState<S>, bool), OptError> {
    let k = state.k.min(problem.n());
    let batch = BatchState::sample(problem, &state.x, rng, k)?;
    let growth = grow_until_condition(problem, &state.x, batch, policy, rng)?;
    debug_assert_eq!(k + growth.evals, growth.state.k());
    state.k = growth.state.k();
    Ok((growth.state, growth.grew))
}

/// Full-batch gradient step with fixed `alpha`.
pub fn step_gd<S: Scalar>(
    problem: &Problem<S>,
    state: &mut OptimizerState<S>,
    alpha: S,
) -> Result<Vec<Update<S>>, OptError> {
    let full = problem.full_loss(&state.x)?;
    let all: Vec<usize> = (0..problem.n()).collect();
    state.k = problem.n();
    let u = apply(
        state,
        Move {
            k: problem.n(),
            alpha,
            direction: &full.gradient,
            batch: &all,
            loss_before: full.value,
            line_search: false,
            grew: false,
        },
    )?;
    Ok(vec![u])
}

/// Small-batch SGD (with replacement) with `alpha_t = a / (b + t)`.
pub fn step_sgd_decay<S: Scalar, R: Rng + ?Sized>(
    problem: &Problem<S>,
    state: &mut OptimizerState<S>,
    schedule: &DecaySchedule<S>,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<Update<S>>, OptError> {
    let batch = draw_with_replacement(rng, problem.n(), batch_size);
    let bl = problem.batch_loss(&state.x, &batch)?;
    state.k = batch_size;
    let alpha = schedule.alpha(state.t + 1);
    let u = apply(
        state,
        Move {
            k: batch_size,
            alpha,
            direction: &bl.gradient,
            batch: &batch,
            loss_before: bl.value,
            line_search: false,
            grew: false,
        },
    )?;
    Ok(vec![u])
}

/// Growing-batch baseline: the batch is redrawn each iteration at the
/// current size, which then grows by a constant factor.
pub fn step_sf<S: Scalar, R: Rng + ?Sized>(
    problem: &Problem<S>,
    state: &mut OptimizerState<S>,
    policy: &SfPolicy<S>,
    alpha: S,
    rng: &mut R,
) -> Result<Vec<Update<S>>, OptError> {
    let n = problem.n();
    let k = state.k.min(n);
    let batch = draw_batch(rng, n, k)?;
    let bl = problem.batch_loss(&state.x, &batch)?;
    let u = apply(
        state,
        Move {
            k,
            alpha,
            direction: &bl.gradient,
            batch: &batch,
            loss_before: bl.value,
            line_search: false,
            grew: false,
        },
    )?;
    state.k = policy.next(k, n);
    Ok(vec![u])
}

/// Big batch with a fixed stepsize.
pub fn step_bbs_fixed<S: Scalar, R: Rng + ?Sized>(
    problem: &Problem<S>,
    state: &mut OptimizerState<S>,
    policy: &GrowthPolicy<S>,
    alpha: S,
    rng: &mut R,
) -> Result<Vec<Update<S>>, OptError> {
    let (batch, grew) = grown_batch(problem, state, policy, rng)?;
    let u = apply(
        state,
        Move {
            k: batch.k(),
            alpha,
            direction: batch.mean_grad(),
            batch: batch.indices(),
            loss_before: batch.mean_loss(),
            line_search: false,
            grew,
        },
    )?;
    Ok(vec![u])
}

/// Big batch with backtracking. The trial stepsize starts from the last
/// accepted one and is doubled after any iteration whose batch grew.
pub fn step_bbs_armijo<S: Scalar, R: Rng + ?Sized>(
    problem: &Problem<S>,
    state: &mut OptimizerState<S>,
    policy: &GrowthPolicy<S>,
    cfg: &ArmijoConfig<S>,
    rng: &mut R,
) -> Result<Vec<Update<S>>, OptError> {
    let (batch, grew) = grown_batch(problem, state, policy, rng)?;
    if grew {
        state.grew_flag = true;
    }
    let mut alpha = state.alpha;
    if state.grew_flag {
        alpha *= S::lit(2.0);
        state.grew_flag = false;
    }
    let idx = batch.indices();
    let loss = batch.mean_loss();
    let alpha = armijo_search(
        |z| problem.batch_value(z, idx),
        &state.x,
        loss,
        batch.mean_grad(),
        alpha,
        cfg,
    )?;
    let u = apply(
        state,
        Move {
            k: batch.k(),
            alpha,
            direction: batch.mean_grad(),
            batch: idx,
            loss_before: loss,
            line_search: true,
            grew,
        },
    )?;
    Ok(vec![u])
}

/// Big batch with noise-corrected Barzilai-Borwein stepsizes: one batch,
/// two safeguarded updates. The curvature is measured on the batch between
/// the first update's endpoints, the stepsize is blended with the previous
/// one in proportion `K/n`, then backtracked before the second update. A
/// failed curvature estimate keeps the current stepsize.
pub fn step_bbs_bb<S: Scalar, R: Rng + ?Sized>(
    problem: &Problem<S>,
    state: &mut OptimizerState<S>,
    policy: &GrowthPolicy<S>,
    cfg: &ArmijoConfig<S>,
    rng: &mut R,
) -> Result<Vec<Update<S>>, OptError> {
    let n = problem.n();
    let (batch, grew) = grown_batch(problem, state, policy, rng)?;
    let idx = batch.indices();
    let k = batch.k();

    let alpha = armijo_search(
        |z| problem.batch_value(z, idx),
        &state.x,
        batch.mean_loss(),
        batch.mean_grad(),
        state.alpha,
        cfg,
    )?;
    let mut first = apply(
        state,
        Move {
            k,
            alpha,
            direction: batch.mean_grad(),
            batch: idx,
            loss_before: batch.mean_loss(),
            line_search: true,
            grew,
        },
    )?;

    let moved = BatchState::evaluate(problem, &state.x, idx.to_vec())?;
    state.prev_x = Some(first.x_before.clone());
    state.prev_batch_grad = Some(batch.mean_grad().to_vec());
    let mut alpha = state.alpha;
    if let Ok(nu) = bb_curvature(
        &state.x,
        &first.x_before,
        moved.mean_grad(),
        batch.mean_grad(),
    ) {
        let tilde = bb_stepsize(nu, batch.var_est(), k, batch.grad_norm_sq(), n)?;
        alpha = smooth_stepsize(alpha, tilde, k, n);
        first.curvature = Some(nu);
    }

    let alpha = armijo_search(
        |z| problem.batch_value(z, idx),
        &state.x,
        moved.mean_loss(),
        moved.mean_grad(),
        alpha,
        cfg,
    )?;
    let second = apply(
        state,
        Move {
            k,
            alpha,
            direction: moved.mean_grad(),
            batch: idx,
            loss_before: moved.mean_loss(),
            line_search: true,
            grew: false,
        },
    )?;
    Ok(vec![first, second])
}

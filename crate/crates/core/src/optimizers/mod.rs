//! Big-batch optimizers and their baselines, as stepwise state machines.
//!
//! | method       | batch                                   | stepsize                      |
//! |--------------|-----------------------------------------|-------------------------------|
//! | `gd`         | all samples                             | fixed                         |
//! | `sgd-decay`  | fixed size, with replacement            | `a / (b + t)`                 |
//! | `sf`         | multiplied by a constant factor         | fixed                         |
//! | `bbs-fixed`  | grown until signal dominates noise      | fixed                         |
//! | `bbs-armijo` | grown until signal dominates noise      | backtracking, doubled on growth |
//! | `bbs-bb`     | grown until signal dominates noise      | noise-corrected BB, smoothed, safeguarded |
//!
//! Every parameter update is reported as an [`Update`]; [`run`] turns them
//! into [`TraceRecord`]s with full-objective diagnostics.

mod bb;
mod line_search;
mod steps;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::batching::{BatchError, GrowthPolicy};
use crate::problems::{Problem, ProblemError};
use crate::scalar::{tolerant_ceil, vec, Scalar};

pub use bb::{bb_curvature, bb_stepsize, smooth_stepsize};
pub use line_search::{armijo_search, ArmijoConfig};
pub use steps::{step_bbs_armijo, step_bbs_bb, step_bbs_fixed, step_gd, step_sf, step_sgd_decay};

/// Iterates or losses beyond this magnitude abort a run.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Error)]
pub enum OptError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("diverged at update {t}: {detail}")]
    Divergence { t: u64, detail: String },
    #[error("line search failed after {halvings} halvings (last alpha {last_alpha:e})")]
    LineSearchFailed { last_alpha: f64, halvings: u32 },
    #[error("zero displacement between iterates")]
    ZeroDisplacement,
    #[error("non-positive curvature estimate {0}")]
    NonPositiveCurvature(f64),
    #[error(transparent)]
    Batch(#[from] BatchError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Gd,
    SgdDecay,
    Sf,
    BbsFixed,
    BbsArmijo,
    BbsBb,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Gd,
        Method::SgdDecay,
        Method::Sf,
        Method::BbsFixed,
        Method::BbsArmijo,
        Method::BbsBb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Gd => "gd",
            Self::SgdDecay => "sgd-decay",
            Self::Sf => "sf",
            Self::BbsFixed => "bbs-fixed",
            Self::BbsArmijo => "bbs-armijo",
            Self::BbsBb => "bbs-bb",
        }
    }

    /// Methods whose batch grows with the signal-to-noise test.
    pub fn is_big_batch(self) -> bool {
        matches!(self, Self::BbsFixed | Self::BbsArmijo | Self::BbsBb)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method `{s}`"))
    }
}

/// `alpha_t = a / (b + t)` for update number `t = 1, 2, ...`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecaySchedule<S> {
    pub a: S,
    pub b: S,
}

impl<S: Scalar> DecaySchedule<S> {
    pub fn alpha(&self, t: u64) -> S {
        self.a / (self.b + S::lit(t as f64))
    }

    fn validate(&self) -> Result<(), OptError> {
        if !(self.a > S::zero()) || !self.a.is_finite() {
            return Err(OptError::InvalidConfig(format!(
                "decay_a must be positive, got {}",
                self.a
            )));
        }
        if !(self.b >= S::zero()) || !self.b.is_finite() {
            return Err(OptError::InvalidConfig(format!(
                "decay_b must be nonnegative, got {}",
                self.b
            )));
        }
        Ok(())
    }
}

/// Constant-factor batch growth: `K <- min(n, ceil(growth_factor * K))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SfPolicy<S> {
    pub growth_factor: S,
}

impl<S: Scalar> SfPolicy<S> {
    pub fn next(&self, k: usize, n: usize) -> usize {
        tolerant_ceil(self.growth_factor.to_f64_lossy() * k as f64).min(n)
    }
}

/// Everything a run needs besides the problem and the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig<S> {
    pub method: Method,
    /// Fixed stepsize (`gd`, `sf`, `bbs-fixed`) or initial stepsize
    /// (`bbs-armijo`, `bbs-bb`).
    pub alpha: S,
    /// Initial batch size for the growing methods.
    pub k0: usize,
    pub growth: GrowthPolicy<S>,
    pub armijo: ArmijoConfig<S>,
    pub decay: DecaySchedule<S>,
    /// Batch size of `sgd-decay`.
    pub sgd_batch: usize,
    pub sf: SfPolicy<S>,
    /// Budget in passes over the data (`epochs * n` gradient evaluations).
    pub epochs: f64,
    /// Stop once the batch is the whole dataset and `||grad l(x)|| <= tol`.
    pub tol: S,
    /// Record every `diag_every`-th update (the last update is always kept).
    pub diag_every: u64,
    /// Starting point; zeros when absent.
    pub x0: Option<Vec<S>>,
}

impl<S: Scalar> Default for OptimizerConfig<S> {
    fn default() -> Self {
        Self {
            method: Method::BbsArmijo,
            alpha: S::one(),
            k0: 10,
            growth: GrowthPolicy::default(),
            armijo: ArmijoConfig::default(),
            decay: DecaySchedule {
                a: S::one(),
                b: S::one(),
            },
            sgd_batch: 10,
            sf: SfPolicy {
                growth_factor: S::lit(1.1),
            },
            epochs: 10.0,
            tol: S::lit(1e-6),
            diag_every: 1,
            x0: None,
        }
    }
}

impl<S: Scalar> OptimizerConfig<S> {
    pub fn for_method(method: Method) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn validate(&self, n: usize, d: usize) -> Result<(), OptError> {
        let bad = |m: String| Err(OptError::InvalidConfig(m));
        if !(self.alpha > S::zero()) || !self.alpha.is_finite() {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.epochs >= 0.0) || !self.epochs.is_finite() {
            return bad(format!("epochs must be nonnegative, got {}", self.epochs));
        }
        if !(self.tol >= S::zero()) {
            return bad(format!("tol must be nonnegative, got {}", self.tol));
        }
        if self.diag_every == 0 {
            return bad("diag_every must be at least 1".into());
        }
        if let Some(x0) = &self.x0 {
            if x0.len() != d {
                return bad(format!("x0 has dimension {}, expected {d}", x0.len()));
            }
            if !vec::all_finite(x0) {
                return bad("x0 must be finite".into());
            }
        }
        match self.method {
            Method::Gd => {}
            Method::SgdDecay => {
                self.decay.validate()?;
                if self.sgd_batch == 0 {
                    return bad("sgd_batch must be at least 1".into());
                }
            }
            Method::Sf => {
                if !(self.sf.growth_factor > S::one()) {
                    return bad(format!(
                        "sf_growth must exceed 1, got {}",
                        self.sf.growth_factor
                    ));
                }
                self.check_k0(n)?;
            }
            Method::BbsFixed | Method::BbsArmijo | Method::BbsBb => {
                self.growth
                    .validate()
                    .map_err(|e| OptError::InvalidConfig(e.to_string()))?;
                self.check_k0(n)?;
                if self.method != Method::BbsFixed {
                    self.armijo.validate()?;
                }
            }
        }
        Ok(())
    }

    fn check_k0(&self, n: usize) -> Result<(), OptError> {
        if self.k0 < 2 {
            return Err(OptError::InvalidConfig(format!(
                "k0 must be at least 2, got {}",
                self.k0
            )));
        }
        if n < 2 {
            return Err(OptError::InvalidConfig(format!(
                "growing batches need at least 2 samples, have {n}"
            )));
        }
        Ok(())
    }
}

/// Mutable state of one optimizer run.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<S> {
    pub x: Vec<S>,
    pub alpha: S,
    /// Parameter updates performed so far.
    pub t: u64,
    /// Set when the last batch had to grow; doubles the next trial stepsize.
    pub grew_flag: bool,
    pub prev_x: Option<Vec<S>>,
    pub prev_batch_grad: Option<Vec<S>>,
    /// Cumulative per-sample gradient evaluations.
    pub grad_evals: u64,
    /// Current batch size.
    pub k: usize,
}

impl<S: Scalar> OptimizerState<S> {
    pub fn new(x: Vec<S>, alpha: S, k: usize) -> Self {
        Self {
            x,
            alpha,
            t: 0,
            grew_flag: false,
            prev_x: None,
            prev_batch_grad: None,
            grad_evals: 0,
            k,
        }
    }

    fn initial(problem: &Problem<S>, cfg: &OptimizerConfig<S>) -> Self {
        let n = problem.n();
        let x = cfg
            .x0
            .clone()
            .unwrap_or_else(|| vec![S::zero(); problem.dim()]);
        let (alpha, k) = match cfg.method {
            Method::Gd => (cfg.alpha, n),
            Method::SgdDecay => (cfg.decay.alpha(1), cfg.sgd_batch),
            _ => (cfg.alpha, cfg.k0.min(n)),
        };
        Self::new(x, alpha, k)
    }
}

/// One parameter update `x_after = x_before - alpha * direction`.
#[derive(Debug, Clone, PartialEq)]
pub struct Update<S> {
    /// Update number, starting at 1.
    pub t: u64,
    pub k: usize,
    pub alpha: S,
    pub x_before: Vec<S>,
    /// Batch gradient at `x_before`.
    pub direction: Vec<S>,
    pub x_after: Vec<S>,
    /// Batch the direction was computed on.
    pub batch: Vec<usize>,
    /// Batch loss at `x_before`.
    pub loss_before: S,
    /// Whether `alpha` was accepted by the sufficient-decrease test.
    pub line_search: bool,
    /// Curvature estimate computed after this update, when one was accepted.
    pub curvature: Option<S>,
    /// The batch grew before this update.
    pub grew: bool,
    /// Cumulative gradient evaluations after this update.
    pub grad_evals: u64,
}

/// One row of convergence diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub method: Method,
    pub seed: u64,
    pub t: u64,
    /// `grad_evals / n`
    pub epoch: f64,
    pub k: usize,
    pub alpha: f64,
    pub loss_full: f64,
    pub grad_norm_full: f64,
    pub elapsed_ms: f64,
    pub grad_evals: u64,
}

#[derive(Debug)]
pub enum StopReason {
    Budget,
    Converged,
    Failed(OptError),
}

#[derive(Debug)]
pub struct RunReport<S> {
    pub records: Vec<TraceRecord>,
    pub stop: StopReason,
    pub state: OptimizerState<S>,
}

impl<S> RunReport<S> {
    pub fn last(&self) -> &TraceRecord {
        self.records
            .last()
            .expect("a run always has its initial record")
    }

    pub fn error(&self) -> Option<&OptError> {
        match &self.stop {
            StopReason::Failed(e) => Some(e),
            _ => None,
        }
    }
}

pub(crate) fn check_divergence<S: Scalar>(t: u64, x: &[S], loss: S) -> Result<(), OptError> {
    let limit = S::lit(DIVERGENCE_LIMIT);
    if !loss.is_finite() || loss.abs() > limit {
        return Err(OptError::Divergence {
            t,
            detail: format!("batch loss {loss:e}"),
        });
    }
    let norm = vec::norm(x);
    if !norm.is_finite() || norm > limit {
        return Err(OptError::Divergence {
            t,
            detail: format!("iterate norm {norm:e}"),
        });
    }
    Ok(())
}

/// Runs `cfg.method` until the gradient-evaluation budget is spent, the
/// stopping rule fires, or an error aborts the run.
pub fn run<S: Scalar>(
    problem: &Problem<S>,
    cfg: &OptimizerConfig<S>,
    seed: u64,
) -> Result<RunReport<S>, OptError> {
    run_observed(problem, cfg, seed, |_| {})
}

/// [`run`], passing every parameter update to `observer`.
pub fn run_observed<S, F>(
    problem: &Problem<S>,
    cfg: &OptimizerConfig<S>,
    seed: u64,
    mut observer: F,
) -> Result<RunReport<S>, OptError>
where
    S: Scalar,
    F: FnMut(&Update<S>),
{
    let n = problem.n();
    cfg.validate(n, problem.dim())?;
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = OptimizerState::initial(problem, cfg);
    let budget = (cfg.epochs * n as f64).ceil() as u64;

    let record = |t: u64, k: usize, alpha: S, grad_evals: u64, diag: (S, S)| TraceRecord {
        method: cfg.method,
        seed,
        t,
        epoch: grad_evals as f64 / n as f64,
        k,
        alpha: alpha.to_f64_lossy(),
        loss_full: diag.0.to_f64_lossy(),
        grad_norm_full: diag.1.to_f64_lossy(),
        elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
        grad_evals,
    };
    let diagnose = |x: &[S]| -> Result<(S, S), OptError> {
        let full = problem.full_loss(x)?;
        Ok((full.value, vec::norm(&full.gradient)))
    };

    let mut diag = diagnose(&state.x)?;
    let mut diag_t = 0u64;
    let mut records = vec![record(0, state.k, state.alpha, 0, diag)];
    let mut pending: Option<Update<S>> = None;

    let stop = loop {
        if state.grad_evals >= budget {
            break StopReason::Budget;
        }
        if state.k >= n && cfg.method != Method::SgdDecay {
            if diag_t != state.t {
                diag = diagnose(&state.x)?;
                diag_t = state.t;
            }
            if diag.1 <= cfg.tol {
                break StopReason::Converged;
            }
        }
        let updates = match cfg.method {
            Method::Gd => step_gd(problem, &mut state, cfg.alpha),
            Method::SgdDecay => {
                step_sgd_decay(problem, &mut state, &cfg.decay, cfg.sgd_batch, &mut rng)
            }
            Method::Sf => step_sf(problem, &mut state, &cfg.sf, cfg.alpha, &mut rng),
            Method::BbsFixed => {
                step_bbs_fixed(problem, &mut state, &cfg.growth, cfg.alpha, &mut rng)
            }
            Method::BbsArmijo => {
                step_bbs_armijo(problem, &mut state, &cfg.growth, &cfg.armijo, &mut rng)
            }
            Method::BbsBb => step_bbs_bb(problem, &mut state, &cfg.growth, &cfg.armijo, &mut rng),
        };
        let updates = match updates {
            Ok(u) => u,
            Err(e) => break StopReason::Failed(e),
        };
        for u in updates {
            observer(&u);
            if u.t % cfg.diag_every == 0 {
                diag = diagnose(&u.x_after)?;
                diag_t = u.t;
                records.push(record(u.t, u.k, u.alpha, u.grad_evals, diag));
                pending = None;
            } else {
                pending = Some(u);
            }
        }
    };

    if let Some(u) = pending {
        let d = diagnose(&u.x_after)?;
        records.push(record(u.t, u.k, u.alpha, u.grad_evals, d));
    }
    Ok(RunReport {
        records,
        stop,
        state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{generate_quadratic, Dataset};

    fn noiseless_quadratic() -> Problem<f64> {
        generate_quadratic(4, 50, 1.0, 0.0, &[1.0, -2.0, 0.5, 3.0], 0).unwrap()
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("adam".parse::<Method>().is_err());
    }

    #[test]
    fn sf_and_decay_rules() {
        let sf = SfPolicy { growth_factor: 1.1 };
        assert_eq!(sf.next(10, 100), 11);
        assert_eq!(sf.next(2, 100), 3);
        assert_eq!(sf.next(95, 100), 100);
        let d = DecaySchedule { a: 2.0, b: 0.0 };
        assert_eq!(d.alpha(1), 2.0);
        assert_eq!(d.alpha(4), 0.5);
    }

    #[test]
    fn zero_budget_returns_initial_record_only() {
        let p = noiseless_quadratic();
        for m in Method::ALL {
            let cfg = OptimizerConfig {
                epochs: 0.0,
                ..OptimizerConfig::for_method(m)
            };
            let r = run(&p, &cfg, 1).unwrap();
            assert_eq!(r.records.len(), 1);
            assert_eq!(r.records[0].t, 0);
            assert_eq!(r.state.x, vec![0.0; 4]);
            assert!(matches!(r.stop, StopReason::Budget));
        }
    }

    #[test]
    fn gd_converges_in_one_step_on_noiseless_quadratic() {
        let p = noiseless_quadratic();
        let cfg = OptimizerConfig {
            alpha: 1.0,
            epochs: 5.0,
            ..OptimizerConfig::for_method(Method::Gd)
        };
        let r = run(&p, &cfg, 0).unwrap();
        assert!(matches!(r.stop, StopReason::Converged));
        assert_eq!(r.records.len(), 2);
        assert_eq!(r.state.x, vec![1.0, -2.0, 0.5, 3.0]);
        assert_eq!(r.last().grad_norm_full, 0.0);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let p = noiseless_quadratic();
        let cases: Vec<OptimizerConfig<f64>> = vec![
            OptimizerConfig {
                alpha: 0.0,
                ..OptimizerConfig::for_method(Method::BbsFixed)
            },
            OptimizerConfig {
                k0: 1,
                ..OptimizerConfig::for_method(Method::BbsFixed)
            },
            OptimizerConfig {
                armijo: ArmijoConfig {
                    c: 0.7,
                    max_halvings: 60,
                },
                ..OptimizerConfig::for_method(Method::BbsArmijo)
            },
            OptimizerConfig {
                sf: SfPolicy { growth_factor: 1.0 },
                ..OptimizerConfig::for_method(Method::Sf)
            },
            OptimizerConfig {
                decay: DecaySchedule { a: 0.0, b: 1.0 },
                ..OptimizerConfig::for_method(Method::SgdDecay)
            },
            OptimizerConfig {
                x0: Some(vec![0.0; 3]),
                ..OptimizerConfig::for_method(Method::Gd)
            },
            OptimizerConfig {
                epochs: -1.0,
                ..OptimizerConfig::for_method(Method::Gd)
            },
        ];
        for cfg in cases {
            assert!(
                matches!(run(&p, &cfg, 0), Err(OptError::InvalidConfig(_))),
                "{cfg:?}"
            );
        }
    }

    #[test]
    fn divergence_aborts_with_partial_trace() {
        let data =
            Dataset::from_rows(&[vec![1.0], vec![2.0], vec![3.0]], vec![1.0, 2.0, 3.0]).unwrap();
        let p = Problem::least_squares(data, 0.0).unwrap();
        let cfg = OptimizerConfig {
            alpha: 10.0,
            epochs: 1000.0,
            ..OptimizerConfig::for_method(Method::Gd)
        };
        let r = run(&p, &cfg, 0).unwrap();
        assert!(matches!(r.error(), Some(OptError::Divergence { .. })));
        assert!(r.records.len() > 1);
        assert!(r.records.iter().all(|rec| rec.loss_full.is_finite()));
    }

    #[test]
    fn thinned_records_keep_the_last_update() {
        let p = generate_quadratic(3, 200, 1.0, 0.5, &[1.0; 3], 4).unwrap();
        let cfg = OptimizerConfig {
            alpha: 0.05,
            epochs: 0.5,
            diag_every: 7,
            decay: DecaySchedule { a: 1.0, b: 10.0 },
            ..OptimizerConfig::for_method(Method::SgdDecay)
        };
        let mut updates = 0;
        let r = run_observed(&p, &cfg, 3, |_| updates += 1).unwrap();
        assert_eq!(updates, 10);
        let ts: Vec<u64> = r.records.iter().map(|r| r.t).collect();
        assert_eq!(ts, vec![0, 7, 10]);
        assert_eq!(r.last().grad_evals, 100);
    }
}

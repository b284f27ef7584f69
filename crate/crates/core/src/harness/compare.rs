//! Multi-run comparisons on one shared problem.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::optimizers::{self, Method, RunReport, StopReason};
use crate::problems::Problem;

use super::analysis::log_grad_area;
use super::config::RunConfig;
use super::{build_problem, HarnessError};

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    /// Tuned hyperparameters, empty unless produced by a grid search.
    pub params: String,
    pub seed: u64,
    pub updates: u64,
    pub epochs: f64,
    pub final_loss: f64,
    pub final_grad_norm: f64,
    pub log_grad_area: f64,
    pub stop: String,
}

pub const SUMMARY_HEADER: &str =
    "method,params,seed,updates,epochs,final_loss,final_grad_norm,log_grad_area,stop";

impl SummaryRow {
    pub fn from_report(report: &RunReport<f64>, params: String) -> Self {
        let last = report.last();
        Self {
            method: last.method,
            params,
            seed: last.seed,
            updates: last.t,
            epochs: last.epoch,
            final_loss: last.loss_full,
            final_grad_norm: last.grad_norm_full,
            log_grad_area: log_grad_area(&report.records),
            stop: match &report.stop {
                StopReason::Budget => "budget".into(),
                StopReason::Converged => "converged".into(),
                StopReason::Failed(e) => format!("failed: {e}"),
            },
        }
    }

    fn failed(&self) -> bool {
        self.stop.starts_with("failed")
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            self.method,
            self.params.replace(',', ";"),
            self.seed,
            self.updates,
            self.epochs,
            self.final_loss,
            self.final_grad_norm,
            self.log_grad_area,
            self.stop.replace(',', ";")
        )
    }
}

fn by_grad_norm(a: &SummaryRow, b: &SummaryRow) -> Ordering {
    a.failed()
        .cmp(&b.failed())
        .then(a.final_grad_norm.total_cmp(&b.final_grad_norm))
        .then(a.method.cmp(&b.method))
        .then(a.params.cmp(&b.params))
        .then(a.seed.cmp(&b.seed))
}

fn run_all(
    problem: &Problem<f64>,
    configs: &[(RunConfig, String)],
) -> Result<Vec<SummaryRow>, HarnessError> {
    configs
        .par_iter()
        .map(|(cfg, params)| {
            let report = optimizers::run(problem, &cfg.optimizer, cfg.seed)?;
            Ok(SummaryRow::from_report(&report, params.clone()))
        })
        .collect()
}

fn check_shared(configs: &[RunConfig]) -> Result<(), HarnessError> {
    if let Some(first) = configs.first() {
        if let Some(i) = configs.iter().position(|c| !c.same_problem(first)) {
            return Err(HarnessError::Mismatch(format!(
                "config {i} describes a different problem or budget than config 0"
            )));
        }
    }
    Ok(())
}

/// Runs every config on their common problem and returns one row per run,
/// best final gradient norm first. Failed runs sort last.
pub fn compare_methods(configs: &[RunConfig]) -> Result<Vec<SummaryRow>, HarnessError> {
    check_shared(configs)?;
    let Some(first) = configs.first() else {
        return Ok(Vec::new());
    };
    let problem = build_problem(first)?;
    let tagged: Vec<(RunConfig, String)> =
        configs.iter().map(|c| (c.clone(), String::new())).collect();
    let mut rows = run_all(&problem, &tagged)?;
    rows.sort_by(by_grad_norm);
    Ok(rows)
}

/// Hyperparameter values to search. An empty axis keeps the base value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Grid {
    pub alpha: Vec<f64>,
    pub decay_a: Vec<f64>,
    pub decay_b: Vec<f64>,
}

fn axis(values: &[f64], base: f64) -> Vec<f64> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

fn grid_points(base: &RunConfig, method: Method, grid: &Grid) -> Vec<(RunConfig, String)> {
    let mut out = Vec::new();
    let mut cfg = base.clone();
    cfg.optimizer.method = method;
    if method == Method::SgdDecay {
        for &a in &axis(&grid.decay_a, base.optimizer.decay.a) {
            for &b in &axis(&grid.decay_b, base.optimizer.decay.b) {
                let mut c = cfg.clone();
                c.optimizer.decay.a = a;
                c.optimizer.decay.b = b;
                out.push((c, format!("a={a} b={b}")));
            }
        }
    } else {
        for &alpha in &axis(&grid.alpha, base.optimizer.alpha) {
            let mut c = cfg.clone();
            c.optimizer.alpha = alpha;
            out.push((c, format!("alpha={alpha}")));
        }
    }
    out
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

/// Outcome of tuning one method.
#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub method: Method,
    pub best_params: String,
    /// Rows of the best grid point, one per seed.
    pub rows: Vec<SummaryRow>,
    /// Median final gradient norm of every grid point, in grid order.
    pub scores: Vec<(String, f64)>,
}

/// Picks the grid point with the lowest median final gradient norm over
/// `seeds`. Failed runs score as infinity.
pub fn grid_search(
    problem: &Problem<f64>,
    base: &RunConfig,
    method: Method,
    grid: &Grid,
    seeds: &[u64],
) -> Result<GridResult, HarnessError> {
    if seeds.is_empty() {
        return Err(HarnessError::Config(
            "seeds: at least one is required".into(),
        ));
    }
    let points = grid_points(base, method, grid);
    let mut runs = Vec::with_capacity(points.len() * seeds.len());
    for (cfg, params) in &points {
        for &s in seeds {
            let mut c = cfg.clone();
            c.seed = s;
            runs.push((c, params.clone()));
        }
    }
    let rows = run_all(problem, &runs)?;
    let mut scores = Vec::with_capacity(points.len());
    let mut best: Option<(usize, f64)> = None;
    for (p, chunk) in rows.chunks(seeds.len()).enumerate() {
        let score = median(
            chunk
                .iter()
                .map(|r| {
                    if r.failed() {
                        f64::INFINITY
                    } else {
                        r.final_grad_norm
                    }
                })
                .collect(),
        );
        scores.push((points[p].1.clone(), score));
        if best.is_none_or(|(_, s)| score < s) {
            best = Some((p, score));
        }
    }
    let (bp, _) = best.expect("grid has at least one point");
    Ok(GridResult {
        method,
        best_params: points[bp].1.clone(),
        rows: rows[bp * seeds.len()..(bp + 1) * seeds.len()].to_vec(),
        scores,
    })
}

/// Tunes every method over `grid` and returns the rows of each method's best
/// grid point, sorted as in [`compare_methods`].
pub fn compare_with_grids(
    base: &RunConfig,
    methods: &[Method],
    seeds: &[u64],
    grid: &Grid,
) -> Result<Vec<SummaryRow>, HarnessError> {
    let problem = build_problem(base)?;
    let mut rows = Vec::new();
    for &m in methods {
        rows.extend(grid_search(&problem, base, m, grid, seeds)?.rows);
    }
    rows.sort_by(by_grad_norm);
    Ok(rows)
}

//! Experiment harness: configuration, problem construction, trace CSVs and
//! multi-run comparisons.

mod analysis;
mod compare;
mod config;
mod trace;

use std::io;

use thiserror::Error;

use crate::optimizers::{self, OptError, RunReport};
use crate::problems::{
    generate_quadratic, load_dataset, normalize_features, LabelKind, Problem, ProblemError,
};

pub use analysis::{fit_linear_rate, log_grad_area, log_linear_slope};
pub use compare::{
    compare_methods, compare_with_grids, grid_search, Grid, GridResult, SummaryRow, SUMMARY_HEADER,
};
pub use config::{parse_config, DataSource, ProblemChoice, RawConfig, RunConfig};
pub use trace::{
    parse_trace, write_error, write_header, write_record, write_trace, ParsedTrace, CSV_HEADER,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Run(#[from] OptError),
    #[error("trace line {line}: {msg}")]
    Trace { line: usize, msg: String },
    #[error("comparison: {0}")]
    Mismatch(String),
    #[error("rate fit: {0}")]
    Fit(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Process exit status for a failed run.
pub fn opt_exit_code(e: &OptError) -> u8 {
    match e {
        OptError::InvalidConfig(_) => 2,
        OptError::Divergence { .. } => 3,
        OptError::LineSearchFailed { .. } => 4,
        _ => 1,
    }
}

impl HarnessError {
    /// 2 for configuration errors, 3 for divergence, 4 for line-search
    /// failure, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::Config(_) | HarnessError::Mismatch(_) => 2,
            HarnessError::Problem(ProblemError::InvalidParameter { .. }) => 2,
            HarnessError::Run(e) => opt_exit_code(e),
            _ => 1,
        }
    }
}

/// Loads or synthesizes the objective a config describes.
pub fn build_problem(cfg: &RunConfig) -> Result<Problem<f64>, HarnessError> {
    match &cfg.source {
        DataSource::Synthetic {
            d,
            n,
            nu,
            sigma,
            xstar,
            data_seed,
        } => Ok(generate_quadratic(
            *d,
            *n,
            *nu,
            *sigma,
            &vec![*xstar; *d],
            *data_seed,
        )?),
        DataSource::File {
            path,
            format,
            normalize,
        } => {
            let labels = match cfg.problem {
                ProblemChoice::Logistic => LabelKind::Binary,
                _ => LabelKind::Real,
            };
            let mut data = load_dataset(path, *format, labels)?;
            if *normalize {
                data = normalize_features(&data)?;
            }
            Ok(match cfg.problem {
                ProblemChoice::Logistic => Problem::logistic(data, cfg.lambda)?,
                _ => Problem::least_squares(data, cfg.lambda)?,
            })
        }
    }
}

/// Builds the problem and runs the configured optimizer. A run that aborts
/// part way still returns its report; see [`RunReport::error`].
pub fn run_experiment(cfg: &RunConfig) -> Result<RunReport<f64>, HarnessError> {
    let problem = build_problem(cfg)?;
    Ok(optimizers::run(&problem, &cfg.optimizer, cfg.seed)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizers::Method;
    use crate::problems::{write_dataset, DataFormat, Dataset};

    #[test]
    fn runs_from_a_data_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toy.svm");
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()])
            .collect();
        let labels: Vec<f64> = rows
            .iter()
            .map(|r| if r[0] > 0.0 { 1.0 } else { -1.0 })
            .collect();
        let data = Dataset::from_rows(&rows, labels).unwrap();
        write_dataset(
            &data,
            DataFormat::SvmSparse,
            std::fs::File::create(&path).unwrap(),
        )
        .unwrap();

        let raw = RawConfig {
            method: Some(Method::BbsArmijo),
            problem: Some(ProblemChoice::Logistic),
            data: Some(path),
            lambda: Some(1e-3),
            epochs: Some(5.0),
            ..Default::default()
        };
        let report = run_experiment(&raw.validate().unwrap()).unwrap();
        assert!(report.error().is_none());
        assert!(report.last().loss_full < report.records[0].loss_full);
    }

    #[test]
    fn missing_file_is_reported() {
        let raw = RawConfig {
            method: Some(Method::Gd),
            problem: Some(ProblemChoice::LeastSquares),
            data: Some("/nonexistent/file.csv".into()),
            ..Default::default()
        };
        let e = run_experiment(&raw.validate().unwrap()).unwrap_err();
        assert_eq!(e.exit_code(), 1);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(HarnessError::Config("x".into()).exit_code(), 2);
        let d = OptError::Divergence {
            t: 3,
            detail: "x".into(),
        };
        assert_eq!(HarnessError::Run(d).exit_code(), 3);
        let l = OptError::LineSearchFailed {
            last_alpha: 1.0,
            halvings: 1,
        };
        assert_eq!(HarnessError::Run(l).exit_code(), 4);
    }
}

//! Run configuration: command-line flags layered over an optional flat
//! `key = value` file, validated before any computation starts.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, CommandFactory, Parser};

use crate::batching::GrowthPolicy;
use crate::optimizers::{ArmijoConfig, DecaySchedule, Method, OptimizerConfig, SfPolicy};
use crate::problems::DataFormat;

use super::HarnessError;

/// Objective family selected on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemChoice {
    Logistic,
    LeastSquares,
    Quadratic,
}

impl FromStr for ProblemChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "logistic" => Ok(Self::Logistic),
            "least-squares" | "ridge" | "linear" => Ok(Self::LeastSquares),
            "quadratic" | "synthetic-quadratic" => Ok(Self::Quadratic),
            other => Err(format!("unknown problem `{other}`")),
        }
    }
}

/// Every tunable of a run. All fields are optional so that a config file
/// and the command line can be merged; see [`RawConfig::merge`].
#[derive(Debug, Clone, Default, PartialEq, Args)]
pub struct RawConfig {
    /// gd | sgd-decay | sf | bbs-fixed | bbs-armijo | bbs-bb
    #[arg(long)]
    pub method: Option<Method>,
    /// logistic | least-squares | quadratic
    #[arg(long)]
    pub problem: Option<ProblemChoice>,
    /// Dataset path (logistic and least-squares)
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// svm-sparse | dense-csv (default: from the file extension)
    #[arg(long)]
    pub format: Option<DataFormat>,
    /// Z-score the feature columns after loading (default true)
    #[arg(long)]
    pub normalize: Option<bool>,
    /// Synthetic quadratic: dimension
    #[arg(long)]
    pub d: Option<usize>,
    /// Synthetic quadratic: sample count
    #[arg(long)]
    pub n: Option<usize>,
    /// Synthetic quadratic: curvature
    #[arg(long)]
    pub nu: Option<f64>,
    /// Synthetic quadratic: noise scale
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Synthetic quadratic: every coordinate of the optimum
    #[arg(long)]
    pub xstar: Option<f64>,
    /// Synthetic quadratic: sampling seed, independent of the run seed
    #[arg(long)]
    pub data_seed: Option<u64>,
    /// Ridge weight on ||x||^2
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Budget in passes over the data
    #[arg(long)]
    pub epochs: Option<f64>,
    /// Run seed for batch sampling
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fixed stepsize, or the initial stepsize of the line-search methods
    #[arg(long)]
    pub alpha: Option<f64>,
    /// sgd-decay numerator a in a/(b+t)
    #[arg(long)]
    pub decay_a: Option<f64>,
    /// sgd-decay offset b in a/(b+t)
    #[arg(long)]
    pub decay_b: Option<f64>,
    /// Armijo sufficient-decrease constant, in (0, 0.5]
    #[arg(long)]
    pub c: Option<f64>,
    /// Line-search halvings before the run fails
    #[arg(long)]
    pub max_halvings: Option<u32>,
    /// Initial batch size
    #[arg(long)]
    pub k0: Option<usize>,
    /// Batch growth step as a fraction of the batch
    #[arg(long)]
    pub increment_fraction: Option<f64>,
    /// Signal-to-noise threshold, in (0, 1]
    #[arg(long)]
    pub theta: Option<f64>,
    /// sf batch growth factor
    #[arg(long)]
    pub sf_growth: Option<f64>,
    /// sgd-decay batch size
    #[arg(long)]
    pub sgd_batch: Option<usize>,
    /// Gradient-norm tolerance of the stopping rule
    #[arg(long)]
    pub tol: Option<f64>,
    /// Record every k-th update
    #[arg(long)]
    pub diag_every: Option<u64>,
    /// Output CSV path (default: stdout)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Parser)]
#[command(no_binary_name = true, disable_help_flag = true)]
struct FileArgs {
    #[command(flatten)]
    raw: RawConfig,
}

macro_rules! merge_fields {
    ($hi:ident, $lo:ident; $($f:ident),* $(,)?) => {
        RawConfig { $($f: $hi.$f.or($lo.$f)),* }
    };
}

impl RawConfig {
    /// Values of `self` win over `lower`.
    pub fn merge(self, lower: RawConfig) -> RawConfig {
        let hi = self;
        let lo = lower;
        merge_fields!(hi, lo;
            method, problem, data, format, normalize, d, n, nu, sigma, xstar, data_seed, lambda,
            epochs, seed, alpha, decay_a, decay_b, c, max_halvings, k0,
            increment_fraction, theta, sf_growth, sgd_batch, tol, diag_every, out)
    }

    /// Parses a flat `key = value` file. Keys are flag names with dashes
    /// written as underscores; `#` starts a comment line.
    pub fn parse_file_text(text: &str) -> Result<RawConfig, HarnessError> {
        let known: Vec<String> = FileArgs::command()
            .get_arguments()
            .filter_map(|a| a.get_long().map(str::to_string))
            .collect();
        let mut argv: Vec<String> = Vec::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                HarnessError::Config(format!("config line {}: expected `key = value`", no + 1))
            })?;
            let flag = key.trim().replace('_', "-");
            if !known.contains(&flag) {
                return Err(HarnessError::Config(format!(
                    "config line {}: unknown key `{}`",
                    no + 1,
                    key.trim()
                )));
            }
            argv.push(format!("--{flag}"));
            argv.push(value.trim().trim_matches('"').to_string());
        }
        FileArgs::try_parse_from(argv).map(|f| f.raw).map_err(|e| {
            HarnessError::Config(format!("config file: {}", e.render().to_string().trim()))
        })
    }

    pub fn from_file(path: &Path) -> Result<RawConfig, HarnessError> {
        let text = fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::parse_file_text(&text)
    }

    pub fn validate(&self) -> Result<RunConfig, HarnessError> {
        RunConfig::from_raw(self)
    }
}

/// Where the problem's data comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    File {
        path: PathBuf,
        format: DataFormat,
        normalize: bool,
    },
    Synthetic {
        d: usize,
        n: usize,
        nu: f64,
        sigma: f64,
        xstar: f64,
        data_seed: u64,
    },
}

/// A validated run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemChoice,
    pub source: DataSource,
    pub lambda: f64,
    pub seed: u64,
    pub optimizer: OptimizerConfig<f64>,
    pub out: Option<PathBuf>,
}

fn range_err(field: &str, msg: &str, v: impl std::fmt::Display) -> HarnessError {
    HarnessError::Config(format!("{field}: must be {msg}, got {v}"))
}

fn positive(field: &str, v: f64) -> Result<f64, HarnessError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(range_err(field, "positive", v))
    }
}

fn nonnegative(field: &str, v: f64) -> Result<f64, HarnessError> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(range_err(field, "nonnegative", v))
    }
}

fn unit_interval(field: &str, v: f64) -> Result<f64, HarnessError> {
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(range_err(field, "in (0, 1]", v))
    }
}

impl RunConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self, HarnessError> {
        let method = raw
            .method
            .ok_or_else(|| HarnessError::Config("method: required".into()))?;
        let problem = raw
            .problem
            .ok_or_else(|| HarnessError::Config("problem: required".into()))?;

        let source = match problem {
            ProblemChoice::Quadratic => {
                if raw.data.is_some() {
                    return Err(HarnessError::Config(
                        "data: the quadratic problem is synthesized, use gen-quadratic to export it"
                            .into(),
                    ));
                }
                let d = raw.d.unwrap_or(10);
                let n = raw.n.unwrap_or(1000);
                if d == 0 {
                    return Err(range_err("d", "at least 1", d));
                }
                if n < 2 {
                    return Err(range_err("n", "at least 2", n));
                }
                DataSource::Synthetic {
                    d,
                    n,
                    nu: positive("nu", raw.nu.unwrap_or(1.0))?,
                    sigma: nonnegative("sigma", raw.sigma.unwrap_or(0.1))?,
                    xstar: {
                        let v = raw.xstar.unwrap_or(1.0);
                        if !v.is_finite() {
                            return Err(range_err("xstar", "finite", v));
                        }
                        v
                    },
                    data_seed: raw.data_seed.unwrap_or(0),
                }
            }
            ProblemChoice::Logistic | ProblemChoice::LeastSquares => {
                let path = raw.data.clone().ok_or_else(|| {
                    HarnessError::Config("data: required for this problem".into())
                })?;
                let format =
                    raw.format
                        .unwrap_or_else(|| match path.extension().and_then(|e| e.to_str()) {
                            Some("csv") => DataFormat::DenseCsv,
                            _ => DataFormat::SvmSparse,
                        });
                DataSource::File {
                    path,
                    format,
                    normalize: raw.normalize.unwrap_or(true),
                }
            }
        };

        let lambda = nonnegative("lambda", raw.lambda.unwrap_or(0.0))?;
        if problem == ProblemChoice::Quadratic && lambda != 0.0 {
            return Err(range_err("lambda", "0 for the quadratic problem", lambda));
        }

        let c = raw.c.unwrap_or(0.1);
        if !(c > 0.0 && c <= 0.5) {
            return Err(range_err("c", "in (0, 0.5]", c));
        }
        let max_halvings = raw.max_halvings.unwrap_or(60);
        if max_halvings == 0 {
            return Err(range_err("max_halvings", "positive", max_halvings));
        }
        let k0 = raw.k0.unwrap_or(10);
        if k0 < 2 {
            return Err(range_err("k0", "at least 2", k0));
        }
        let sgd_batch = raw.sgd_batch.unwrap_or(10);
        if sgd_batch == 0 {
            return Err(range_err("sgd_batch", "at least 1", sgd_batch));
        }
        let sf_growth = raw.sf_growth.unwrap_or(1.1);
        if !(sf_growth > 1.0) || !sf_growth.is_finite() {
            return Err(range_err("sf_growth", "greater than 1", sf_growth));
        }
        let diag_every = raw.diag_every.unwrap_or(1);
        if diag_every == 0 {
            return Err(range_err("diag_every", "at least 1", diag_every));
        }

        let optimizer = OptimizerConfig {
            method,
            alpha: positive("alpha", raw.alpha.unwrap_or(1.0))?,
            k0,
            growth: GrowthPolicy {
                increment_fraction: unit_interval(
                    "increment_fraction",
                    raw.increment_fraction.unwrap_or(0.1),
                )?,
                theta: unit_interval("theta", raw.theta.unwrap_or(1.0))?,
            },
            armijo: ArmijoConfig { c, max_halvings },
            decay: DecaySchedule {
                a: positive("decay_a", raw.decay_a.unwrap_or(1.0))?,
                b: nonnegative("decay_b", raw.decay_b.unwrap_or(1.0))?,
            },
            sgd_batch,
            sf: SfPolicy {
                growth_factor: sf_growth,
            },
            epochs: nonnegative("epochs", raw.epochs.unwrap_or(10.0))?,
            tol: nonnegative("tol", raw.tol.unwrap_or(1e-6))?,
            diag_every,
            x0: None,
        };

        Ok(Self {
            problem,
            source,
            lambda,
            seed: raw.seed.unwrap_or(0),
            optimizer,
            out: raw.out.clone(),
        })
    }

    /// Whether two configs describe the same objective and budget.
    pub fn same_problem(&self, other: &RunConfig) -> bool {
        self.problem == other.problem
            && self.source == other.source
            && self.lambda == other.lambda
            && self.optimizer.epochs == other.optimizer.epochs
    }
}

/// Merges command-line values over an optional file and validates the result.
pub fn parse_config(cli: RawConfig, file: Option<&Path>) -> Result<RunConfig, HarnessError> {
    let raw = match file {
        Some(p) => cli.merge(RawConfig::from_file(p)?),
        None => cli,
    };
    raw.validate()
}

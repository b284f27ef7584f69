//! Finite-sum objectives `l(x) = (1/n) sum_i f(x; z_i)`, their datasets and
//! per-sample gradients.
//!
//! Three losses are provided:
//!
//! * logistic: `log(1 + exp(-b_i a_i^T x)) + lambda ||x||^2`
//! * least squares: `(a_i^T x - b_i)^2 + lambda ||x||^2` (no 1/2 factor)
//! * synthetic quadratic: `(nu/2) ||x - phi_i||^2` with `phi_i ~ N(x*, sigma^2 I)`
//!
//! Every batch reduction sums in the order of the supplied index list, so a
//! run is bit-for-bit reproducible.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::scalar::{vec, Scalar};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("sample index {index} out of range for {n} samples")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("iterate contains non-finite entries")]
    NonFiniteIterate,
    #[error("iterate has dimension {got}, problem expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty index list")]
    EmptyBatch,
    #[error("no samples")]
    NoSamples,
    #[error("need at least {needed} samples, have {n}")]
    TooFewSamples { needed: usize, n: usize },
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("line {line}: dimension {got} inconsistent with {expected}")]
    InconsistentDimension {
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("line {line}: unknown label {value} for a binary task")]
    UnknownLabel { line: usize, value: String },
    #[error("feature or label entry is not finite")]
    NonFiniteData,
    #[error("invalid parameter {name}: {msg}")]
    InvalidParameter { name: &'static str, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, ProblemError>;

/// `n` samples of `d` features (row-major) with one scalar label each.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<S> {
    features: Vec<S>,
    labels: Vec<S>,
    n: usize,
    d: usize,
}

impl<S: Scalar> Dataset<S> {
    pub fn new(features: Vec<S>, labels: Vec<S>, d: usize) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(ProblemError::NoSamples);
        }
        if d == 0 {
            return Err(ProblemError::InvalidParameter {
                name: "d",
                msg: "dimension must be at least 1".into(),
            });
        }
        if features.len() != n * d {
            return Err(ProblemError::InconsistentDimension {
                line: 0,
                expected: n * d,
                got: features.len(),
            });
        }
        if !vec::all_finite(&features) || !vec::all_finite(&labels) {
            return Err(ProblemError::NonFiniteData);
        }
        Ok(Self {
            features,
            labels,
            n,
            d,
        })
    }

    pub fn from_rows(rows: &[Vec<S>], labels: Vec<S>) -> Result<Self> {
        let d = rows.first().map(Vec::len).ok_or(ProblemError::NoSamples)?;
        let mut features = Vec::with_capacity(rows.len() * d);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(ProblemError::InconsistentDimension {
                    line: i + 1,
                    expected: d,
                    got: r.len(),
                });
            }
            features.extend_from_slice(r);
        }
        Self::new(features, labels, d)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[S] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    #[inline]
    pub fn label(&self, i: usize) -> S {
        self.labels[i]
    }

    pub fn labels(&self) -> &[S] {
        &self.labels
    }

    /// Row-major feature matrix.
    pub fn features(&self) -> &[S] {
        &self.features
    }

    /// Column mean and population standard deviation.
    pub fn column_stats(&self, j: usize) -> (S, S) {
        let n = S::from_count(self.n);
        let mean = (0..self.n).map(|i| self.row(i)[j]).sum::<S>() / n;
        let var = (0..self.n)
            .map(|i| {
                let c = self.row(i)[j] - mean;
                c * c
            })
            .sum::<S>()
            / n;
        (mean, var.sqrt())
    }
}

/// On-disk dataset layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    /// `<label> <idx>:<val> ...` with 1-based feature indices.
    SvmSparse,
    /// Header-free comma separated values, label in the last column.
    DenseCsv,
}

impl FromStr for DataFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "svm" | "svm-sparse" | "libsvm" => Ok(Self::SvmSparse),
            "csv" | "dense-csv" => Ok(Self::DenseCsv),
            other => Err(format!("unknown data format `{other}`")),
        }
    }
}

impl fmt::Display for DataFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::SvmSparse => "svm-sparse",
            Self::DenseCsv => "dense-csv",
        })
    }
}

/// How labels are interpreted at load time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    /// Classification labels canonicalized to {-1, +1}; 0/1 is remapped.
    Binary,
    /// Regression targets, kept as read.
    Real,
}

fn parse_label<S: Scalar>(tok: &str, kind: LabelKind, line: usize) -> Result<S> {
    let v: f64 = tok.parse().map_err(|_| ProblemError::Malformed {
        line,
        msg: format!("bad label `{tok}`"),
    })?;
    if !v.is_finite() {
        return Err(ProblemError::Malformed {
            line,
            msg: format!("non-finite label `{tok}`"),
        });
    }
    match kind {
        LabelKind::Real => Ok(S::lit(v)),
        LabelKind::Binary => {
            if v == 1.0 {
                Ok(S::one())
            } else if v == -1.0 || v == 0.0 {
                Ok(-S::one())
            } else {
                Err(ProblemError::UnknownLabel {
                    line,
                    value: tok.to_string(),
                })
            }
        }
    }
}

fn parse_value(tok: &str, line: usize) -> Result<f64> {
    match tok.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(ProblemError::Malformed {
            line,
            msg: format!("bad value `{tok}`"),
        }),
    }
}

/// Parses dataset text. For the sparse format `dim` fixes the feature count;
/// when absent it is the largest index seen.
pub fn parse_dataset<S: Scalar>(
    text: &str,
    format: DataFormat,
    labels: LabelKind,
    dim: Option<usize>,
) -> Result<Dataset<S>> {
    let lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    match format {
        DataFormat::SvmSparse => {
            let mut rows: Vec<(usize, Vec<(usize, f64)>)> = Vec::new();
            let mut ys = Vec::new();
            let mut max_idx = 0usize;
            for (line, l) in lines {
                let mut toks = l.split_whitespace();
                let y = toks.next().expect("non-empty line");
                ys.push(parse_label::<S>(y, labels, line)?);
                let mut entries = Vec::new();
                for tok in toks {
                    let (idx, val) =
                        tok.split_once(':').ok_or_else(|| ProblemError::Malformed {
                            line,
                            msg: format!("expected <idx>:<val>, got `{tok}`"),
                        })?;
                    let idx: usize = idx.parse().map_err(|_| ProblemError::Malformed {
                        line,
                        msg: format!("bad feature index `{idx}`"),
                    })?;
                    if idx == 0 {
                        return Err(ProblemError::Malformed {
                            line,
                            msg: "feature indices are 1-based".into(),
                        });
                    }
                    if let Some(d) = dim {
                        if idx > d {
                            return Err(ProblemError::InconsistentDimension {
                                line,
                                expected: d,
                                got: idx,
                            });
                        }
                    }
                    max_idx = max_idx.max(idx);
                    entries.push((idx - 1, parse_value(val, line)?));
                }
                rows.push((line, entries));
            }
            if ys.is_empty() {
                return Err(ProblemError::NoSamples);
            }
            let d = dim.unwrap_or(max_idx).max(1);
            let mut features = vec![S::zero(); ys.len() * d];
            for (r, (_, entries)) in rows.iter().enumerate() {
                for &(j, v) in entries {
                    features[r * d + j] = S::lit(v);
                }
            }
            Dataset::new(features, ys, d)
        }
        DataFormat::DenseCsv => {
            let mut features = Vec::new();
            let mut ys = Vec::new();
            let mut width: Option<usize> = None;
            for (line, l) in lines {
                let toks: Vec<&str> = l.split(',').map(str::trim).collect();
                if toks.len() < 2 {
                    return Err(ProblemError::Malformed {
                        line,
                        msg: "need at least one feature and a label".into(),
                    });
                }
                let w = *width.get_or_insert(toks.len());
                if toks.len() != w {
                    return Err(ProblemError::InconsistentDimension {
                        line,
                        expected: w - 1,
                        got: toks.len() - 1,
                    });
                }
                if let Some(d) = dim {
                    if w - 1 != d {
                        return Err(ProblemError::InconsistentDimension {
                            line,
                            expected: d,
                            got: w - 1,
                        });
                    }
                }
                for tok in &toks[..w - 1] {
                    features.push(S::lit(parse_value(tok, line)?));
                }
                ys.push(parse_label::<S>(toks[w - 1], labels, line)?);
            }
            let d = width.ok_or(ProblemError::NoSamples)? - 1;
            Dataset::new(features, ys, d)
        }
    }
}

pub fn load_dataset<S: Scalar>(
    path: impl AsRef<Path>,
    format: DataFormat,
    labels: LabelKind,
) -> Result<Dataset<S>> {
    let text = fs::read_to_string(path)?;
    parse_dataset(&text, format, labels, None)
}

/// Writes a dataset in either format using shortest round-trip float text.
pub fn write_dataset<S: Scalar, W: Write>(
    data: &Dataset<S>,
    format: DataFormat,
    mut out: W,
) -> io::Result<()> {
    for i in 0..data.n() {
        let row = data.row(i);
        match format {
            DataFormat::SvmSparse => {
                write!(out, "{}", data.label(i))?;
                for (j, v) in row.iter().enumerate() {
                    if !v.is_zero() {
                        write!(out, " {}:{}", j + 1, v)?;
                    }
                }
            }
            DataFormat::DenseCsv => {
                for v in row {
                    write!(out, "{v},")?;
                }
                write!(out, "{}", data.label(i))?;
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Z-scores every feature column with the population standard deviation.
/// Constant columns become all zeros.
pub fn normalize_features<S: Scalar>(data: &Dataset<S>) -> Result<Dataset<S>> {
    if data.n() < 2 {
        return Err(ProblemError::TooFewSamples {
            needed: 2,
            n: data.n(),
        });
    }
    let (n, d) = (data.n(), data.d());
    let mut features = data.features.clone();
    for j in 0..d {
        let (mean, sd) = data.column_stats(j);
        for i in 0..n {
            let v = &mut features[i * d + j];
            *v = if sd > S::zero() {
                (*v - mean) / sd
            } else {
                S::zero()
            };
        }
    }
    Dataset::new(features, data.labels.clone(), d)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemKind<S> {
    Logistic,
    LeastSquares,
    /// `f(x; phi_i) = (curvature/2) ||x - phi_i||^2`; the dataset rows hold `phi_i`.
    Quadratic {
        curvature: S,
        noise: S,
        optimum: Vec<S>,
    },
}

impl<S> ProblemKind<S> {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Logistic => "logistic",
            Self::LeastSquares => "least-squares",
            Self::Quadratic { .. } => "quadratic",
        }
    }
}

/// Per-sample or batch loss value with its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct GradSample<S> {
    pub value: S,
    pub gradient: Vec<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Problem<S> {
    kind: ProblemKind<S>,
    data: Dataset<S>,
    lambda: S,
}

impl<S: Scalar> Problem<S> {
    pub fn logistic(data: Dataset<S>, lambda: S) -> Result<Self> {
        Self::with_kind(ProblemKind::Logistic, data, lambda)
    }

    pub fn least_squares(data: Dataset<S>, lambda: S) -> Result<Self> {
        Self::with_kind(ProblemKind::LeastSquares, data, lambda)
    }

    fn with_kind(kind: ProblemKind<S>, data: Dataset<S>, lambda: S) -> Result<Self> {
        if !(lambda >= S::zero()) || !lambda.is_finite() {
            return Err(ProblemError::InvalidParameter {
                name: "lambda",
                msg: "must be finite and nonnegative".into(),
            });
        }
        Ok(Self { kind, data, lambda })
    }

    pub fn kind(&self) -> &ProblemKind<S> {
        &self.kind
    }

    pub fn dataset(&self) -> &Dataset<S> {
        &self.data
    }

    pub fn lambda(&self) -> S {
        self.lambda
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.data.n()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.data.d()
    }

    pub(crate) fn check_iterate(&self, x: &[S]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(ProblemError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if !vec::all_finite(x) {
            return Err(ProblemError::NonFiniteIterate);
        }
        Ok(())
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.n() {
            return Err(ProblemError::IndexOutOfRange {
                index: i,
                n: self.n(),
            });
        }
        Ok(())
    }

    /// Unchecked per-sample evaluation. When `grad` is given it is overwritten
    /// with the gradient. Value and gradient paths share every operation, so
    /// value-only and value+gradient calls agree bit for bit.
    pub(crate) fn eval_sample(&self, x: &[S], i: usize, grad: Option<&mut [S]>) -> S {
        let two = S::lit(2.0);
        let reg = if self.lambda > S::zero() {
            self.lambda * vec::norm_sq(x)
        } else {
            S::zero()
        };
        let (value, coef) = match &self.kind {
            ProblemKind::Logistic => {
                let a = self.data.row(i);
                let b = self.data.label(i);
                let m = b * vec::dot(a, x);
                // softplus(-m) and sigmoid(-m), each on its overflow-free branch
                let (loss, sig) = if m >= S::zero() {
                    let e = (-m).exp();
                    (e.ln_1p(), e / (S::one() + e))
                } else {
                    let e = m.exp();
                    (-m + e.ln_1p(), S::one() / (S::one() + e))
                };
                (loss, -b * sig)
            }
            ProblemKind::LeastSquares => {
                let a = self.data.row(i);
                let r = vec::dot(a, x) - self.data.label(i);
                (r * r, two * r)
            }
            ProblemKind::Quadratic { curvature, .. } => {
                let phi = self.data.row(i);
                let half = *curvature / two;
                let value = half * vec::dist_sq(x, phi);
                if let Some(g) = grad {
                    for ((gj, &xj), &pj) in g.iter_mut().zip(x).zip(phi) {
                        *gj = *curvature * (xj - pj);
                    }
                }
                return value;
            }
        };
        if let Some(g) = grad {
            let a = self.data.row(i);
            if self.lambda > S::zero() {
                let l2 = two * self.lambda;
                for ((gj, &aj), &xj) in g.iter_mut().zip(a).zip(x) {
                    *gj = coef * aj + l2 * xj;
                }
            } else {
                for (gj, &aj) in g.iter_mut().zip(a) {
                    *gj = coef * aj;
                }
            }
        }
        value + reg
    }

    /// `f(x; z_i)` and its gradient.
    pub fn sample_loss(&self, x: &[S], i: usize) -> Result<GradSample<S>> {
        self.check_iterate(x)?;
        self.check_index(i)?;
        let mut gradient = vec![S::zero(); self.dim()];
        let value = self.eval_sample(x, i, Some(&mut gradient));
        Ok(GradSample { value, gradient })
    }

    /// Mean loss and gradient over `indices`, summed in list order.
    pub fn batch_loss(&self, x: &[S], indices: &[usize]) -> Result<GradSample<S>> {
        self.check_iterate(x)?;
        if indices.is_empty() {
            return Err(ProblemError::EmptyBatch);
        }
        let d = self.dim();
        let mut value = S::zero();
        let mut gradient = vec![S::zero(); d];
        let mut scratch = vec![S::zero(); d];
        for &i in indices {
            self.check_index(i)?;
            value += self.eval_sample(x, i, Some(&mut scratch));
            for (g, &s) in gradient.iter_mut().zip(&scratch) {
                *g += s;
            }
        }
        let k = S::from_count(indices.len());
        for g in &mut gradient {
            *g /= k;
        }
        Ok(GradSample {
            value: value / k,
            gradient,
        })
    }

    /// Mean loss over `indices` without gradients. Equal bit for bit to
    /// `batch_loss(..).value`.
    pub fn batch_value(&self, x: &[S], indices: &[usize]) -> Result<S> {
        self.check_iterate(x)?;
        if indices.is_empty() {
            return Err(ProblemError::EmptyBatch);
        }
        let mut value = S::zero();
        for &i in indices {
            self.check_index(i)?;
            value += self.eval_sample(x, i, None);
        }
        Ok(value / S::from_count(indices.len()))
    }

    /// `l(x)` and `grad l(x)` over all samples in ascending order.
    pub fn full_loss(&self, x: &[S]) -> Result<GradSample<S>> {
        let all: Vec<usize> = (0..self.n()).collect();
        self.batch_loss(x, &all)
    }
}

/// Draws `n` samples `phi_i = x* + sigma * xi_i`, `xi_i ~ N(0, I)`, and
/// returns the quadratic problem `(nu/2) ||x - phi_i||^2` over them.
pub fn generate_quadratic<S: Scalar>(
    d: usize,
    n: usize,
    curvature: S,
    noise: S,
    optimum: &[S],
    seed: u64,
) -> Result<Problem<S>> {
    if d == 0 || n == 0 {
        return Err(ProblemError::InvalidParameter {
            name: "d/n",
            msg: "must be at least 1".into(),
        });
    }
    if !(curvature > S::zero()) || !curvature.is_finite() {
        return Err(ProblemError::InvalidParameter {
            name: "nu",
            msg: format!("curvature must be positive, got {curvature}"),
        });
    }
    if !(noise >= S::zero()) || !noise.is_finite() {
        return Err(ProblemError::InvalidParameter {
            name: "sigma",
            msg: format!("noise scale must be nonnegative, got {noise}"),
        });
    }
    if optimum.len() != d {
        return Err(ProblemError::DimensionMismatch {
            expected: d,
            got: optimum.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(n * d);
    for _ in 0..n {
        for &c in optimum {
            let xi: f64 = StandardNormal.sample(&mut rng);
            features.push(c + noise * S::lit(xi));
        }
    }
    let data = Dataset::new(features, vec![S::zero(); n], d)?;
    Ok(Problem {
        kind: ProblemKind::Quadratic {
            curvature,
            noise,
            optimum: optimum.to_vec(),
        },
        data,
        lambda: S::zero(),
    })
}

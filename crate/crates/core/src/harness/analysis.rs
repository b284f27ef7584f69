//! Post-processing of traces: linear-rate fits and summary statistics.

use std::ops::Range;

use crate::optimizers::TraceRecord;

use super::HarnessError;

/// Least-squares slope of `ln(values)` against `ts`.
pub fn log_linear_slope(ts: &[f64], values: &[f64]) -> Result<f64, HarnessError> {
    if ts.len() != values.len() {
        return Err(HarnessError::Fit(format!(
            "{} abscissae for {} values",
            ts.len(),
            values.len()
        )));
    }
    if ts.len() < 3 {
        return Err(HarnessError::Fit("need at least three points".into()));
    }
    if let Some(v) = values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(HarnessError::Fit(format!(
            "suboptimality must be positive, got {v:e}"
        )));
    }
    let m = ts.len() as f64;
    let logs: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let tm = ts.iter().sum::<f64>() / m;
    let lm = logs.iter().sum::<f64>() / m;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, l) in ts.iter().zip(&logs) {
        sxy += (t - tm) * (l - lm);
        sxx += (t - tm) * (t - tm);
    }
    if sxx == 0.0 {
        return Err(HarnessError::Fit("all abscissae coincide".into()));
    }
    Ok(sxy / sxx)
}

/// Slope of `ln(loss_full - l_star)` against the update counter over
/// `records[window]`. `exp(slope)` is the per-update contraction factor.
pub fn fit_linear_rate(
    records: &[TraceRecord],
    l_star: f64,
    window: Range<usize>,
) -> Result<f64, HarnessError> {
    let w = records.get(window.clone()).ok_or_else(|| {
        HarnessError::Fit(format!(
            "window {window:?} exceeds the {} records",
            records.len()
        ))
    })?;
    let ts: Vec<f64> = w.iter().map(|r| r.t as f64).collect();
    let gaps: Vec<f64> = w.iter().map(|r| r.loss_full - l_star).collect();
    log_linear_slope(&ts, &gaps)
}

/// Trapezoidal area under `log10(grad_norm_full)` against epochs.
pub fn log_grad_area(records: &[TraceRecord]) -> f64 {
    let lg = |r: &TraceRecord| r.grad_norm_full.max(f64::MIN_POSITIVE).log10();
    records
        .windows(2)
        .map(|w| 0.5 * (lg(&w[0]) + lg(&w[1])) * (w[1].epoch - w[0].epoch))
        .sum()
}

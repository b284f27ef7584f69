//! Trace CSV encoding. Floats are written with 17 significant digits so a
//! trace parses back to the exact values that produced it.

use std::io::{self, Write};

use crate::optimizers::{Method, OptError, TraceRecord};

use super::HarnessError;

pub const CSV_HEADER: &str = "method,seed,t,epoch,K,alpha,loss_full,grad_norm_full,elapsed_ms";

pub fn write_header<W: Write>(mut out: W) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")
}

pub fn write_record<W: Write>(mut out: W, r: &TraceRecord) -> io::Result<()> {
    writeln!(
        out,
        "{},{},{},{:.16e},{},{:.16e},{:.16e},{:.16e},{:.3}",
        r.method, r.seed, r.t, r.epoch, r.k, r.alpha, r.loss_full, r.grad_norm_full, r.elapsed_ms
    )
}

/// Comment row closing a trace whose run aborted.
pub fn write_error<W: Write>(mut out: W, err: &OptError) -> io::Result<()> {
    let msg = err.to_string().replace('\n', " ");
    writeln!(out, "# error: {msg}")
}

pub fn write_trace<W: Write>(
    mut out: W,
    records: &[TraceRecord],
    err: Option<&OptError>,
) -> io::Result<()> {
    write_header(&mut out)?;
    for r in records {
        write_record(&mut out, r)?;
    }
    if let Some(e) = err {
        write_error(&mut out, e)?;
    }
    Ok(())
}

/// A parsed trace: its records and the error comment, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTrace {
    pub records: Vec<TraceRecord>,
    pub error: Option<String>,
}

/// Parses text written by [`write_trace`]. The header must match exactly.
/// `grad_evals` is not stored and comes back as 0.
pub fn parse_trace(text: &str) -> Result<ParsedTrace, HarnessError> {
    let bad = |line: usize, msg: String| HarnessError::Trace { line, msg };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == CSV_HEADER => {}
        Some((_, h)) => return Err(bad(1, format!("unexpected header `{h}`"))),
        None => return Err(bad(1, "empty trace".into())),
    }
    let mut records = Vec::new();
    let mut error = None;
    for (i, line) in lines {
        let no = i + 1;
        if let Some(msg) = line.strip_prefix("# error: ") {
            error = Some(msg.to_string());
            continue;
        }
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(bad(no, format!("expected 9 fields, got {}", f.len())));
        }
        let float = |s: &str| s.parse::<f64>().map_err(|e| bad(no, format!("`{s}`: {e}")));
        let int = |s: &str| s.parse::<u64>().map_err(|e| bad(no, format!("`{s}`: {e}")));
        records.push(TraceRecord {
            method: f[0].parse::<Method>().map_err(|e| bad(no, e))?,
            seed: int(f[1])?,
            t: int(f[2])?,
            epoch: float(f[3])?,
            k: int(f[4])? as usize,
            alpha: float(f[5])?,
            loss_full: float(f[6])?,
            grad_norm_full: float(f[7])?,
            elapsed_ms: float(f[8])?,
            grad_evals: 0,
        });
    }
    Ok(ParsedTrace { records, error })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(t: u64, loss: f64) -> TraceRecord {
        TraceRecord {
            method: Method::BbsBb,
            seed: 7,
            t,
            epoch: t as f64 / 3.0,
            k: 12,
            alpha: 0.1 + 0.2,
            loss_full: loss,
            grad_norm_full: std::f64::consts::PI * 1e-9,
            elapsed_ms: 1.25,
            grad_evals: 0,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let records = vec![
            rec(0, std::f64::consts::LN_2),
            rec(1, 1.0 / 3.0),
            rec(2, 5e-300),
        ];
        let mut buf = Vec::new();
        write_trace(&mut buf, &records, None).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(
            text.starts_with("method,seed,t,epoch,K,alpha,loss_full,grad_norm_full,elapsed_ms\n")
        );
        let parsed = parse_trace(&text).unwrap();
        assert_eq!(parsed.records, records);
        assert_eq!(parsed.error, None);
    }

    #[test]
    fn error_row_is_kept() {
        let mut buf = Vec::new();
        let err = OptError::LineSearchFailed {
            last_alpha: 1e-18,
            halvings: 60,
        };
        write_trace(&mut buf, &[rec(0, 1.0)], Some(&err)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text
            .lines()
            .last()
            .unwrap()
            .starts_with("# error: line search failed"));
        let parsed = parse_trace(&text).unwrap();
        assert_eq!(parsed.records.len(), 1);
        assert!(parsed.error.unwrap().contains("60 halvings"));
    }

    #[test]
    fn header_mismatch_is_rejected() {
        let e = parse_trace("method,seed,t\n").unwrap_err();
        assert!(e.to_string().contains("header"));
        assert!(parse_trace("").is_err());
    }
}

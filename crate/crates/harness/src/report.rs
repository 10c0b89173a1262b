//! Deterministic report serialization: sorted JSON keys, floats rounded
//! to 9 significant digits.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use hypersel_core::mht::Evidence;
use hypersel_core::risk::{empirical_average_risk, empirical_quantile, CandidateSet, LossTable};
use serde::Serialize;
use serde_json::Value;

use crate::error::{HarnessError, Result};
use crate::run::CalibrationOutput;
use crate::validate::ValidationReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Json,
    CsvSummary,
}

pub fn round_sig9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().unwrap_or(x)
}

/// Shortest round-trip form of the rounded value, with an exponent for
/// very small or large magnitudes.
pub fn fmt_sig9(x: f64) -> String {
    format!("{:?}", round_sig9(x))
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if !(n.is_u64() || n.is_i64()) => {
            if let Some(r) = n.as_f64().map(round_sig9).and_then(serde_json::Number::from_f64) {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

pub fn to_json<T: Serialize>(x: &T) -> Result<String> {
    let mut v = serde_json::to_value(x).map_err(|e| HarnessError::Invariant(format!("serialization: {e}")))?;
    round_value(&mut v);
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| HarnessError::Invariant(format!("serialization: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// Something that can be written as a JSON document or a CSV summary.
pub trait Report: Serialize {
    fn csv_summary(&self) -> String;
}

pub fn render<R: Report>(r: &R, format: Format) -> Result<String> {
    match format {
        Format::Json => to_json(r),
        Format::CsvSummary => Ok(r.csv_summary()),
    }
}

/// Writes `contents` to `path`, or to stdout when no path is given.
pub fn write_output(path: Option<&Path>, contents: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, contents).map_err(|e| HarnessError::io(p, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(contents.as_bytes()).and_then(|_| out.flush()).map_err(|e| HarnessError::io("<stdout>", e))
        }
    }
}

pub fn emit_report<R: Report>(r: &R, path: Option<&Path>, format: Format) -> Result<()> {
    write_output(path, &render(r, format)?)
}

impl Report for CalibrationOutput {
    fn csv_summary(&self) -> String {
        let mut s = String::from("candidate_id,evidence,value,selected\n");
        for e in &self.selection.evidence {
            let (kind, value) = match e.evidence {
                Evidence::PValue { value, .. } => ("p_value", value),
                Evidence::UpperBound { value, .. } => ("upper_bound", value),
                Evidence::Wealth { wealth, .. } => ("wealth", wealth),
            };
            let _ = writeln!(s, "{},{kind},{},{}", e.candidate, fmt_sig9(value), self.selection.contains(&e.candidate));
        }
        s
    }
}

impl Report for ValidationReport {
    fn csv_summary(&self) -> String {
        let mut s = String::from("metric,value\n");
        let rows: [(&str, String); 12] = [
            ("method", self.method.info().name.into()),
            ("guarantee", self.guarantee.as_str().into()),
            ("delta", fmt_sig9(self.delta)),
            ("trials", self.trials.to_string()),
            ("error_total", fmt_sig9(self.error_total)),
            ("empirical_rate", fmt_sig9(self.empirical_rate)),
            ("wilson_95_low", fmt_sig9(self.wilson_95[0])),
            ("wilson_95_high", fmt_sig9(self.wilson_95[1])),
            ("wilson_3_sigma_low", fmt_sig9(self.wilson_3_sigma[0])),
            ("certified", self.certified.to_string()),
            ("power", fmt_sig9(self.power)),
            ("n_reliable", self.reliable.len().to_string()),
        ];
        for (k, v) in rows {
            let _ = writeln!(s, "{k},{v}");
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateSummary {
    pub candidate_id: String,
    pub mean: f64,
    pub quantile: f64,
    pub histogram: Vec<u64>,
}

/// Empirical distribution of one objective's losses per candidate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DataSummary {
    pub objective: usize,
    pub n_samples: usize,
    pub quantile_q: f64,
    /// Equal-width bins over [0, 1]; the last bin includes 1.
    pub bin_edges: Vec<f64>,
    pub candidates: Vec<CandidateSummary>,
}

pub fn histogram(losses: &[f64], bins: usize) -> Vec<u64> {
    let mut h = vec![0u64; bins];
    for &l in losses {
        h[((l * bins as f64) as usize).min(bins - 1)] += 1;
    }
    h
}

pub fn summarize(table: &LossTable, candidates: &CandidateSet, objective: usize, bins: usize, q: f64) -> Result<DataSummary> {
    if objective >= table.n_objectives() {
        return Err(HarnessError::data(format!("objective {objective} not in table")));
    }
    if bins == 0 {
        return Err(HarnessError::config("histogram needs at least one bin"));
    }
    let summaries = (0..table.n_candidates())
        .map(|c| {
            let l = table.losses(c, objective);
            Ok(CandidateSummary {
                candidate_id: candidates.id(c).to_string(),
                mean: empirical_average_risk(l)?,
                quantile: empirical_quantile(l, q)?,
                histogram: histogram(l, bins),
            })
        })
        .collect::<Result<_>>()?;
    Ok(DataSummary {
        objective,
        n_samples: table.n_samples(),
        quantile_q: q,
        bin_edges: (0..=bins).map(|b| b as f64 / bins as f64).collect(),
        candidates: summaries,
    })
}

impl Report for DataSummary {
    /// One row per (candidate, bin).
    fn csv_summary(&self) -> String {
        let mut s = String::from("candidate_id,bin,bin_low,bin_high,count,density\n");
        let n = self.n_samples.max(1) as f64;
        let width = 1.0 / (self.bin_edges.len() - 1) as f64;
        for c in &self.candidates {
            for (b, &count) in c.histogram.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "{},{b},{},{},{count},{}",
                    c.candidate_id,
                    fmt_sig9(self.bin_edges[b]),
                    fmt_sig9(self.bin_edges[b + 1]),
                    fmt_sig9(count as f64 / n / width)
                );
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_keeps_nine_digits() {
        assert_eq!(round_sig9(0.123456789123), 0.123456789);
        assert_eq!(round_sig9(2.0611536224385576e-9), 2.06115362e-9);
        assert_eq!(fmt_sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_sig9(4.093812471e-41), "4.09381247e-41");
        assert_eq!(round_sig9(0.0), 0.0);
    }

    #[test]
    fn json_is_sorted_and_rounded() {
        #[derive(Serialize)]
        struct S {
            zeta: f64,
            alpha: u64,
        }
        let s = to_json(&S { zeta: std::f64::consts::PI, alpha: 3 }).unwrap();
        assert_eq!(s, "{\n  \"alpha\": 3,\n  \"zeta\": 3.14159265\n}\n");
    }

    #[test]
    fn histogram_rows_are_bins_times_candidates() {
        let t = LossTable::from_fn(50, 3, 1, |s, c, _| ((s * (c + 1)) % 11) as f64 / 10.0).unwrap();
        let sum = summarize(&t, &CandidateSet::numbered(3), 0, 7, 0.9).unwrap();
        let csv = sum.csv_summary();
        assert_eq!(csv.lines().count(), 1 + 7 * 3);
        for c in &sum.candidates {
            assert_eq!(c.histogram.iter().sum::<u64>(), 50);
        }
        assert_eq!(histogram(&[0.0, 1.0, 0.5], 2), vec![1, 2]);
    }
}

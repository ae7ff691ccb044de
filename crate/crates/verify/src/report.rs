//! Check records and the JSON-lines report stream.

use std::io::Write;

use anyhow::Result;
use bkcert::BkReport;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// One checked instance. `margin = rhs - lhs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub id: String,
    pub params: Value,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub skipped: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<f64>,
}

impl CheckRecord {
    /// Inequality record under the `lhs <= rhs + tol * max(1, |rhs|)` policy.
    pub fn new(id: String, params: Value, lhs: f64, rhs: f64, tol: f64) -> CheckRecord {
        let r = BkReport::new(lhs, rhs, tol);
        CheckRecord {
            id,
            params,
            lhs,
            rhs,
            margin: r.margin,
            pass: r.pass,
            skipped: false,
            detail: None,
            elapsed_ms: None,
        }
    }

    /// Record for a yes/no check; `lhs`/`rhs` carry the measured quantity and
    /// its bound.
    pub fn flag(id: String, params: Value, pass: bool, lhs: f64, rhs: f64) -> CheckRecord {
        CheckRecord {
            id,
            params,
            lhs,
            rhs,
            margin: rhs - lhs,
            pass,
            skipped: false,
            detail: None,
            elapsed_ms: None,
        }
    }

    pub fn skip(id: String, params: Value, reason: Value) -> CheckRecord {
        CheckRecord {
            id,
            params,
            lhs: 0.0,
            rhs: 0.0,
            margin: 0.0,
            pass: true,
            skipped: true,
            detail: Some(reason),
            elapsed_ms: None,
        }
    }

    pub fn with_detail(mut self, detail: Value) -> CheckRecord {
        self.detail = Some(detail);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub suite: String,
    pub seed: u64,
    pub tolerance: f64,
    pub records: usize,
    pub passed: usize,
    pub failed: usize,
    pub skipped: usize,
    pub min_margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_elapsed_ms: Option<f64>,
}

impl Summary {
    pub fn from_records(
        suite: &str,
        seed: u64,
        tolerance: f64,
        records: &[CheckRecord],
    ) -> Summary {
        let checked = records.iter().filter(|r| !r.skipped);
        Summary {
            suite: suite.to_string(),
            seed,
            tolerance,
            records: records.len(),
            passed: records.iter().filter(|r| r.pass && !r.skipped).count(),
            failed: records.iter().filter(|r| !r.pass).count(),
            skipped: records.iter().filter(|r| r.skipped).count(),
            min_margin: checked
                .map(|r| r.margin)
                .fold(None, |m, x| Some(m.map_or(x, |m: f64| m.min(x)))),
            max_elapsed_ms: records
                .iter()
                .filter_map(|r| r.elapsed_ms)
                .fold(None, |m, x| Some(m.map_or(x, |m: f64| m.max(x)))),
        }
    }

    pub fn all_pass(&self) -> bool {
        self.failed == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum RecordMode {
    #[default]
    All,
    Failures,
    None,
}

/// Writes records sorted by id (filtered by `mode`), then one summary line.
/// Timings are dropped unless `timings` is set, so reports are byte-identical
/// across runs.
pub fn write_report(
    out: &mut dyn Write,
    records: &mut [CheckRecord],
    summary: &Summary,
    mode: RecordMode,
    timings: bool,
) -> Result<()> {
    records.sort_by(|a, b| a.id.cmp(&b.id));
    for r in records.iter_mut() {
        if !timings {
            r.elapsed_ms = None;
        }
        let keep = match mode {
            RecordMode::All => true,
            RecordMode::Failures => !r.pass,
            RecordMode::None => false,
        };
        if keep {
            serde_json::to_writer(&mut *out, r)?;
            out.write_all(b"\n")?;
        }
    }
    let mut s = summary.clone();
    if !timings {
        s.max_elapsed_ms = None;
    }
    serde_json::to_writer(&mut *out, &serde_json::json!({ "summary": s }))?;
    out.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn margin_and_policy() {
        let r = CheckRecord::new("a".into(), json!({}), 0.3, 0.25, 1e-9);
        assert!(!r.pass);
        assert!((r.margin + 0.05).abs() < 1e-15);
        assert!(CheckRecord::new("b".into(), json!({}), 0.25 + 1e-12, 0.25, 1e-9).pass);
    }

    #[test]
    fn report_is_sorted_and_summarised() {
        let mut recs = vec![
            CheckRecord::new("b".into(), json!({}), 0.1, 0.2, 0.0),
            CheckRecord::new("a".into(), json!({}), 0.3, 0.2, 0.0),
            CheckRecord::skip("c".into(), json!({}), json!("filtered")),
        ];
        recs[0].elapsed_ms = Some(3.0);
        let s = Summary::from_records("t", 7, 0.0, &recs);
        assert_eq!((s.records, s.passed, s.failed, s.skipped), (3, 1, 1, 1));
        assert!((s.min_margin.unwrap() + 0.1).abs() < 1e-15);
        let mut buf = Vec::new();
        write_report(&mut buf, &mut recs, &s, RecordMode::All, false).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].contains("\"id\":\"a\""));
        assert!(!text.contains("elapsed"));
        let mut buf = Vec::new();
        write_report(&mut buf, &mut recs, &s, RecordMode::Failures, false).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 2);
    }
}

//! Suite reports and file emission.
//!
//! Reports hold only numbers that are deterministic for a fixed seed and
//! worker count; wall-clock timings go to a sidecar log so payload files are
//! byte-identical across reruns.

use serde::{Deserialize, Serialize};
use sle_lab_core::ensemble::Side;
use sle_lab_core::{MartingaleRecord64, Trace64};
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

/// One named check inside a suite.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TestReport {
    pub name: String,
    /// Primary quantity (a mean, a residual, a p-value...), when meaningful.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
    /// Decision statistic compared against `threshold`.
    pub statistic: f64,
    pub threshold: f64,
    /// Number of retained samples or evaluation points behind the statistic.
    pub n_used: usize,
    pub pass: bool,
}

impl TestReport {
    /// A check that passes when `statistic <= threshold`.
    pub fn bounded(name: &str, statistic: f64, threshold: f64, n_used: usize) -> Self {
        TestReport {
            name: name.into(),
            estimate: None,
            stderr: None,
            statistic,
            threshold,
            n_used,
            pass: statistic <= threshold,
        }
    }

    /// A check that passes when `statistic >= threshold` (p-values, floors).
    pub fn at_least(name: &str, statistic: f64, threshold: f64, n_used: usize) -> Self {
        TestReport {
            name: name.into(),
            estimate: None,
            stderr: None,
            statistic,
            threshold,
            n_used,
            pass: statistic >= threshold,
        }
    }

    pub fn with_estimate(mut self, estimate: f64, stderr: f64) -> Self {
        self.estimate = Some(estimate);
        self.stderr = Some(stderr);
        self
    }

    pub fn with_point_estimate(mut self, estimate: f64) -> Self {
        self.estimate = Some(estimate);
        self
    }
}

/// Full outcome of one experiment suite.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SuiteReport {
    pub suite: String,
    pub kappa: f64,
    pub seed: u64,
    /// Samples drawn, including discarded ones.
    pub n_samples: usize,
    /// Samples flagged invalid and excluded from statistics.
    pub n_discarded: usize,
    pub tests: Vec<TestReport>,
    /// Conjunction of all member tests.
    pub pass: bool,
}

impl SuiteReport {
    pub fn new(suite: &str, kappa: f64, seed: u64, n_samples: usize) -> Self {
        SuiteReport {
            suite: suite.into(),
            kappa,
            seed,
            n_samples,
            n_discarded: 0,
            tests: Vec::new(),
            pass: true,
        }
    }

    pub fn push(&mut self, test: TestReport) {
        self.pass &= test.pass;
        self.tests.push(test);
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports hold finite numbers");
        s.push('\n');
        s
    }

    /// One row per test with a fixed header; numeric formatting is the
    /// shortest roundtrip form, so files are byte-stable.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("suite,kappa,seed,test,estimate,stderr,statistic,threshold,n_used,pass\n");
        for t in &self.tests {
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                self.suite,
                self.kappa,
                self.seed,
                t.name,
                opt(t.estimate),
                opt(t.stderr),
                t.statistic,
                t.threshold,
                t.n_used,
                t.pass
            )
            .unwrap();
        }
        out
    }
}

/// Trace table: one row per sample point.
pub fn trace_csv(trace: &Trace64) -> String {
    let mut out = String::from("t,re,im\n");
    for (t, p) in trace.times.iter().zip(&trace.points) {
        writeln!(out, "{},{},{}", t, p.re, p.im).unwrap();
    }
    out
}

/// Weight-surface grid table.
pub fn martingale_grid_csv(records: &[MartingaleRecord64]) -> String {
    let mut out = String::from("t1,t2,A10,A11,A12,A13,A20,A21,A22,A23,E,N,I,M,valid\n");
    for r in records {
        let a = |s: Side, h: usize| r.a.a(s, h);
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.t1,
            r.t2,
            a(Side::One, 0),
            a(Side::One, 1),
            a(Side::One, 2),
            a(Side::One, 3),
            a(Side::Two, 0),
            a(Side::Two, 1),
            a(Side::Two, 2),
            a(Side::Two, 3),
            r.a.e,
            r.n,
            r.integral,
            r.m,
            r.valid
        )
        .unwrap();
    }
    out
}

/// Append a timing line to the sidecar log (never part of report payloads).
pub fn log_wall_time(out_dir: &Path, suite: &str, wall: std::time::Duration) {
    let path = out_dir.join("run.log");
    if let Ok(mut f) = fs::OpenOptions::new().create(true).append(true).open(path) {
        let unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let _ = writeln!(f, "{suite} wall_ms={} finished_unix={unix}", wall.as_millis());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_roundtrips_and_is_stable() {
        let mut rep = SuiteReport::new("demo", 2.5, 7, 4);
        rep.n_samples = 10;
        rep.push(TestReport::bounded("residual", 0.5, 1.0, 10).with_estimate(0.98, 0.01));
        rep.push(TestReport::bounded("overshoot", 2.0, 1.0, 10));
        assert!(!rep.pass);
        let json = rep.to_json();
        let back: SuiteReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rep);
        assert_eq!(rep.to_json(), json);
    }

    #[test]
    fn csv_has_one_row_per_test() {
        let mut rep = SuiteReport::new("demo", 2.5, 7, 4);
        rep.push(TestReport::bounded("a", 0.1, 1.0, 3));
        rep.push(TestReport::bounded("b", 0.2, 1.0, 4));
        let csv = rep.to_csv();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().nth(1).unwrap().starts_with("demo,2.5,7,a,"));
    }

    #[test]
    fn trace_csv_rows_match_points() {
        let tr = Trace64 {
            times: vec![0.0, 0.5],
            points: vec![sle_lab_core::C64::new(0.0, 0.0), sle_lab_core::C64::new(0.1, 0.9)],
        };
        let csv = trace_csv(&tr);
        assert_eq!(csv, "t,re,im\n0,0,0\n0.5,0.1,0.9\n");
    }
}

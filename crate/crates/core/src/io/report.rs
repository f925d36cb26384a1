//! CSV writers. Floats use Rust's shortest round-trip formatting, so output
//! is byte-stable for identical inputs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use super::IoError;
use crate::choice::ChoiceTables;
use crate::sim::{AggregateSeries, SweepResult, TrialTrace};

pub const EXPERIMENT_HEADER: &str = "policy,year,mean_reward,ci_halfwidth,trials,seed";
pub const SWEEP_HEADER: &str = "param,value,policy,year,mean_reward,ci_halfwidth,trials,seed";
pub const TOTALS_HEADER: &str = "param,value,policy,total_years,total_reward,ci_halfwidth,trials,seed";
pub const TABLES_HEADER: &str = "state,theta,weight";
pub const TRACE_HEADER: &str = "t,state,action_kind,weight,theta_tilde,theta_hat";
pub const BOUNDS_HEADER: &str = "state,sigma2,range,chebyshev,hoeffding_stated,hoeffding_proof,empirical";

/// Comment lines written ahead of a CSV body.
#[derive(Debug, Clone, Default)]
pub struct Meta {
    pub config_hash: String,
    /// Add a `generated_unix` timestamp line.
    pub timestamp: bool,
    pub extra: Vec<(String, String)>,
}

impl Meta {
    pub fn new(config_hash: impl Into<String>, timestamp: bool) -> Self {
        Self {
            config_hash: config_hash.into(),
            timestamp,
            extra: Vec::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.extra.push((key.into(), value.to_string()));
        self
    }

    fn write(&self, out: &mut String) {
        let _ = writeln!(out, "# config_hash={}", self.config_hash);
        for (k, v) in &self.extra {
            let _ = writeln!(out, "# {k}={v}");
        }
        if self.timestamp {
            let secs = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            let _ = writeln!(out, "# generated_unix={secs}");
        }
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn series_rows(out: &mut String, prefix: &str, series: &AggregateSeries) {
    for p in &series.policies {
        for (y, s) in p.years.iter().enumerate() {
            let _ = writeln!(
                out,
                "{prefix}{},{},{},{},{},{}",
                p.policy.label(),
                y + 1,
                s.mean,
                s.half_width,
                series.trials,
                series.seed
            );
        }
    }
}

pub fn experiment_csv(series: &AggregateSeries, meta: &Meta) -> String {
    let mut out = String::new();
    meta.write(&mut out);
    out.push_str(EXPERIMENT_HEADER);
    out.push('\n');
    series_rows(&mut out, "", series);
    out
}

/// Yearly series for every sweep value, one block per value.
pub fn sweep_csv(result: &SweepResult, meta: &Meta) -> String {
    let mut out = String::new();
    meta.write(&mut out);
    out.push_str(SWEEP_HEADER);
    out.push('\n');
    for e in &result.entries {
        let prefix = format!("{},{},", result.parameter.name(), e.value);
        series_rows(&mut out, &prefix, &e.result.series);
    }
    out
}

/// Whole-horizon totals for every sweep value.
pub fn totals_csv(result: &SweepResult, meta: &Meta) -> String {
    let mut out = String::new();
    meta.write(&mut out);
    out.push_str(TOTALS_HEADER);
    out.push('\n');
    for e in &result.entries {
        let series = &e.result.series;
        for p in &series.policies {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                result.parameter.name(),
                e.value,
                p.policy.label(),
                series.months as f64 / 12.0,
                p.total.mean,
                p.total.half_width,
                series.trials,
                series.seed
            );
        }
    }
    out
}

pub fn tables_csv(tables: &ChoiceTables) -> String {
    let mut out = String::from(TABLES_HEADER);
    out.push('\n');
    for (s, theta, w) in tables.rows() {
        let _ = writeln!(out, "{s},{theta},{w}");
    }
    out
}

pub fn trace_csv(trace: &TrialTrace, meta: &Meta) -> String {
    let mut out = String::new();
    meta.write(&mut out);
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for m in &trace.months {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            m.t,
            m.state,
            m.action.as_str(),
            m.weight,
            opt(m.theta_tilde),
            opt(m.theta_hat)
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsRow {
    pub state: usize,
    pub sigma2: f64,
    pub range: f64,
    pub chebyshev: u64,
    pub hoeffding_stated: u64,
    pub hoeffding_proof: u64,
    /// `None` when the empirical search hit its cap.
    pub empirical: Option<u64>,
}

pub fn bounds_csv(rows: &[BoundsRow], meta: &Meta) -> String {
    let mut out = String::new();
    meta.write(&mut out);
    out.push_str(BOUNDS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.state,
            r.sigma2,
            r.range,
            r.chebyshev,
            r.hoeffding_stated,
            r.hoeffding_proof,
            opt(r.empirical)
        );
    }
    out
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), IoError> {
    let err = |source| IoError::Write {
        path: path.display().to_string(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(err)?;
    }
    fs::write(path, contents).map_err(err)
}

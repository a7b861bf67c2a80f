use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::Experiment;
use crate::error::Result;

/// One `(n, x)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment: String,
    pub n: u64,
    pub x: f64,
    pub estimate: f64,
    pub se: f64,
    pub normalizer: f64,
    pub ratio: f64,
    pub ratio_se: f64,
    pub replicas: u64,
    pub flags: String,
}

impl ReportRow {
    pub fn new(experiment: Experiment, n: u64, x: f64, estimate: f64, se: f64, normalizer: f64, replicas: u64) -> Self {
        Self {
            experiment: experiment.as_str().into(),
            n,
            x,
            estimate,
            se,
            normalizer,
            ratio: estimate / normalizer,
            ratio_se: se / normalizer,
            replicas,
            flags: String::new(),
        }
    }

    pub fn flag(&mut self, f: impl AsRef<str>) {
        if !self.flags.is_empty() {
            self.flags.push(';');
        }
        self.flags.push_str(f.as_ref());
    }

    pub fn has_flag(&self, f: &str) -> bool {
        self.flags.split(';').any(|x| x == f)
    }
}

/// Hits below which a row is flagged low-confidence.
pub const MIN_HITS: u64 = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: Experiment,
    pub rows: Vec<ReportRow>,
    /// Named summary statistics (slopes, flatness, comparisons).
    pub summary: BTreeMap<String, f64>,
    /// Per-check outcomes where the experiment defines them.
    pub checks: BTreeMap<String, bool>,
    /// Free-form notes: refused cells, window parameters, limitations.
    pub notes: Vec<String>,
}

impl ExperimentReport {
    pub fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            rows: Vec::new(),
            summary: BTreeMap::new(),
            checks: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    pub fn all_checks_pass(&self) -> bool {
        self.checks.values().all(|&b| b)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Largest over smallest value.
pub fn max_min_ratio(values: &[f64]) -> f64 {
    let hi = values.iter().copied().fold(f64::MIN, f64::max);
    let lo = values.iter().copied().fold(f64::MAX, f64::min);
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_columns_are_fixed() {
        let mut rep = ExperimentReport::new(Experiment::ThmWn);
        let mut row = ReportRow::new(Experiment::ThmWn, 100, 2000.0, 0.01, 0.001, 0.02, 1000);
        row.flag("low_confidence");
        row.flag("outside_window");
        rep.rows.push(row);
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let mut lines = s.lines();
        assert_eq!(
            lines.next().unwrap(),
            "experiment,n,x,estimate,se,normalizer,ratio,ratio_se,replicas,flags"
        );
        assert_eq!(lines.next().unwrap(), "thm-wn,100,2000.0,0.01,0.001,0.02,0.5,0.05,1000,low_confidence;outside_window");
    }

    #[test]
    fn ratio_statistic() {
        assert_eq!(max_min_ratio(&[2.0, 1.0, 4.0]), 4.0);
        assert!(max_min_ratio(&[0.0, 1.0]).is_infinite());
    }
}

//! Serializable experiment reports.

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use std::collections::BTreeMap;

/// One named boolean check, always tied to a metric present in the report
/// and to the threshold it was judged against.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Verdict {
    pub name: String,
    /// Key into [`VerifyReport::metrics`].
    pub metric: String,
    pub threshold: f64,
    pub pass: bool,
}

/// Self-describing result of one experiment.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct VerifyReport {
    pub experiment: String,
    /// Echoed configuration, stringified, in deterministic key order.
    pub params: BTreeMap<String, String>,
    pub metrics: BTreeMap<String, f64>,
    /// Named sequences (e.g. error versus sigma).
    pub trends: BTreeMap<String, Vec<f64>>,
    pub verdicts: Vec<Verdict>,
    /// Wall-clock duration; the single field exempt from bit-for-bit
    /// reproducibility.
    pub runtime_seconds: f64,
}

impl VerifyReport {
    pub fn new(experiment: impl Into<String>) -> Self {
        VerifyReport {
            experiment: experiment.into(),
            params: BTreeMap::new(),
            metrics: BTreeMap::new(),
            trends: BTreeMap::new(),
            verdicts: Vec::new(),
            runtime_seconds: 0.0,
        }
    }

    pub fn param(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }

    pub fn metric(&mut self, key: &str, value: f64) -> &mut Self {
        self.metrics.insert(key.to_string(), value);
        self
    }

    pub fn trend(&mut self, key: &str, values: Vec<f64>) -> &mut Self {
        self.trends.insert(key.to_string(), values);
        self
    }

    /// Record a verdict; the metric key must already be present.
    pub fn verdict(&mut self, name: &str, metric: &str, threshold: f64, pass: bool) -> &mut Self {
        debug_assert!(self.metrics.contains_key(metric), "verdict {name} references unknown metric {metric}");
        self.verdicts.push(Verdict {
            name: name.to_string(),
            metric: metric.to_string(),
            threshold,
            pass,
        });
        self
    }

    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    /// Structural invariant: every verdict references a recorded metric.
    pub fn validate(&self) -> Result<()> {
        for v in &self.verdicts {
            if !self.metrics.contains_key(&v.metric) {
                return Err(Error::ConfigMismatch(format!(
                    "verdict {} references missing metric {}",
                    v.name, v.metric
                )));
            }
            if !v.threshold.is_finite() {
                return Err(Error::ConfigMismatch(format!(
                    "verdict {} has non-finite threshold",
                    v.name
                )));
            }
        }
        Ok(())
    }
}

/// Per-trial rows backing the CSV output; columns are fixed per experiment.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrialTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl TrialTable {
    pub fn new(columns: &[&str]) -> Self {
        TrialTable { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

/// Everything one experiment run hands to the writers.
#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub report: VerifyReport,
    pub table: TrialTable,
    /// Optional named trajectories (populated when trajectory dumping is on).
    pub trajectories: Vec<(String, Trajectory)>,
}

impl ExperimentRun {
    pub fn new(report: VerifyReport, table: TrialTable) -> Self {
        ExperimentRun { report, table, trajectories: Vec::new() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdicts_must_reference_metrics() {
        let mut r = VerifyReport::new("demo");
        r.metric("err", 0.01);
        r.verdict("small", "err", 0.05, true);
        assert!(r.validate().is_ok());
        assert!(r.all_pass());

        r.verdicts.push(Verdict {
            name: "bogus".into(),
            metric: "missing".into(),
            threshold: 1.0,
            pass: true,
        });
        assert!(r.validate().is_err());
    }
}

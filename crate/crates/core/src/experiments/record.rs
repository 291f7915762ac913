use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Experiment, ExperimentConfig};
use crate::dos::DosEstimate;
use crate::error::Result;
use crate::stats::{format_sample, PointEstimate, Summary, TestReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Partial,
}

/// Rows of numbers under fixed column names.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl SampleTable {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(&self.columns)?;
        for row in &self.rows {
            wr.write_record(row.iter().map(|&x| format_sample(x)))?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Results at one system size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub half_width: u64,
    /// Nominal volume `(2L + 1)^d`.
    pub volume: usize,
    /// Normalization used for the statistic (`|Λ|^{1-η}`, or `M` cells in
    /// synthetic mode); `1` where no normalization applies.
    pub scale: f64,
    pub summary: Summary,
    pub reports: Vec<TestReport>,
    pub diagnostics: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
    #[serde(skip)]
    pub table: SampleTable,
}

impl LevelRecord {
    pub fn new(half_width: u64, volume: usize, scale: f64, table: SampleTable) -> Self {
        Self {
            half_width,
            volume,
            scale,
            summary: Summary::new(),
            reports: Vec::new(),
            diagnostics: BTreeMap::new(),
            notes: Vec::new(),
            table,
        }
    }

    /// Record a diagnostic, dropping non-finite values (JSON has no NaN).
    pub fn diag(&mut self, name: &str, value: f64) {
        if value.is_finite() {
            self.diagnostics.insert(name.to_string(), value);
        } else {
            self.notes.push(format!("{name} is not finite ({value})"));
        }
    }

    pub fn report(&self, name: &str) -> Option<&TestReport> {
        self.reports.iter().find(|r| r.name == name)
    }

    pub fn csv_name(&self) -> String {
        format!("samples_L{}.csv", self.half_width)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SeedManifest {
    pub master: u64,
    pub scheme: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dos: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub experiment: Experiment,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub status: RunStatus,
    pub synthetic_null: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_hat: Option<PointEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dos: Option<DosEstimate>,
    pub levels: Vec<LevelRecord>,
    /// The reports that decide pass/fail.
    pub reports: Vec<TestReport>,
    pub diagnostics: BTreeMap<String, f64>,
    pub seeds: SeedManifest,
    pub wall_clock_secs: f64,
}

impl ExperimentRecord {
    pub(crate) fn new(experiment: Experiment, config: &ExperimentConfig, scheme: &str) -> Self {
        Self {
            experiment,
            config: config.clone(),
            config_hash: config.hash(experiment.name()),
            status: RunStatus::Complete,
            synthetic_null: config.synthetic_null.enabled,
            lambda_hat: None,
            dos: None,
            levels: Vec::new(),
            reports: Vec::new(),
            diagnostics: BTreeMap::new(),
            seeds: SeedManifest {
                master: config.schedule.seed,
                scheme: scheme.to_string(),
                dos: None,
            },
            wall_clock_secs: 0.0,
        }
    }

    /// True iff the run completed and every deciding report passed.
    pub fn passed(&self) -> bool {
        self.status == RunStatus::Complete && !self.reports.is_empty() && self.reports.iter().all(|r| r.pass)
    }

    pub fn report(&self, name: &str) -> Option<&TestReport> {
        self.reports.iter().find(|r| r.name == name)
    }

    pub(crate) fn diag(&mut self, name: &str, value: f64) {
        if value.is_finite() {
            self.diagnostics.insert(name.to_string(), value);
        }
    }
}

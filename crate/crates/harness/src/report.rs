//! Check records, reports and their JSON/CSV forms.

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::tolerances::{spec, Bound};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckRecord {
    pub check_id: String,
    pub anchor: String,
    pub scenario: String,
    /// `None` when the check could not be evaluated.
    pub value: Option<f64>,
    pub tol: f64,
    pub bound: Bound,
    pub pass: bool,
    pub seed: u64,
    pub note: String,
}

impl CheckRecord {
    /// A record compared against its bound; panics on an id missing from
    /// the check table.
    pub fn measured(id: &str, scenario: &str, value: f64, tol: f64, seed: u64) -> Self {
        let s = spec(id).expect("check ids are static");
        let pass = match s.bound {
            Bound::Upper => value <= tol,
            Bound::Lower => value >= tol,
        };
        Self {
            check_id: s.id.to_string(),
            anchor: s.anchor.to_string(),
            scenario: scenario.to_string(),
            value: Some(value),
            tol,
            bound: s.bound,
            pass,
            seed,
            note: String::new(),
        }
    }

    /// A record whose pass state is decided by the caller.
    pub fn decided(id: &str, scenario: &str, value: f64, tol: f64, seed: u64, pass: bool) -> Self {
        Self { pass, ..Self::measured(id, scenario, value, tol, seed) }
    }

    pub fn failed(id: &str, scenario: &str, tol: f64, seed: u64, note: String) -> Self {
        Self { value: None, pass: false, note, ..Self::measured(id, scenario, 0.0, tol, seed) }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }

    pub fn line(&self) -> String {
        let v = self.value.map_or("n/a".to_string(), |v| format!("{v:.3e}"));
        let op = match self.bound {
            Bound::Upper => "<=",
            Bound::Lower => ">=",
        };
        let status = if self.pass { "PASS" } else { "FAIL" };
        let note = if self.note.is_empty() { String::new() } else { format!("  ({})", self.note) };
        format!("{status} {:<38} {:<20} {v} {op} {:.3e}{note}", self.check_id, self.scenario, self.tol)
    }
}

/// A per-step or per-path data series written as CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Trace {
    pub fn new(name: impl Into<String>, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub command: String,
    pub seed: u64,
    pub git_stamp: String,
    pub records: Vec<CheckRecord>,
    /// Checks that do not apply to the scenario, with the reason.
    pub skipped: Vec<String>,
    #[serde(skip)]
    pub traces: Vec<Trace>,
}

impl Report {
    pub fn new(command: &str, seed: u64) -> Self {
        Self { command: command.to_string(), seed, git_stamp: git_stamp(), records: Vec::new(), skipped: Vec::new(), traces: Vec::new() }
    }

    pub fn passed(&self) -> bool {
        self.records.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRecord> {
        self.records.iter().filter(|r| !r.pass)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// SHA-256 of the JSON form, hex encoded.
    pub fn digest(&self) -> Result<String> {
        let bytes = Sha256::digest(self.to_json()?.as_bytes());
        Ok(bytes.iter().map(|b| format!("{b:02x}")).collect())
    }

    /// Writes `report.json`, `report.csv` and one CSV per trace into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.to_json()?)?;
        let mut w = csv::Writer::from_path(dir.join("report.csv"))?;
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        for t in &self.traces {
            let mut w = csv::Writer::from_path(dir.join(format!("{}.csv", t.name)))?;
            w.write_record(&t.header)?;
            for row in &t.rows {
                w.write_record(row.iter().map(|v| format!("{v:e}")))?;
            }
            w.flush()?;
        }
        Ok(())
    }
}

/// `git describe --always --dirty` of the working directory, or `unknown`.
pub fn git_stamp() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".to_string())
}

//! Check groups. Each group evaluates its checks on the configured
//! scenario and appends one record per check (several for per-form or
//! per-path checks). Errors inside a check become failed records.

mod decompose;
mod diffeo;
mod geometry;
mod skew;

use eqdiff::bundle::{decompose as decompose_bundle, BundleSystem, Completion, Decomposition};
use eqdiff::sde::{stream_rng, RefinementStudy};
use rand_chacha::ChaCha20Rng;

use crate::config::RunConfig;
use crate::error::{HarnessError, Result};
use crate::report::{CheckRecord, Report, Trace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Group {
    Geometry,
    Decompose,
    Skew,
    SmallTime,
    Diffeo,
}

impl Group {
    pub const ALL: [Group; 5] = [Group::Geometry, Group::Decompose, Group::Skew, Group::SmallTime, Group::Diffeo];

    pub fn name(self) -> &'static str {
        match self {
            Group::Geometry => "verify-geometry",
            Group::Decompose => "decompose",
            Group::Skew => "skew",
            Group::SmallTime => "small-time",
            Group::Diffeo => "diffeo",
        }
    }

    fn stream(self) -> u64 {
        (1 << 48) + self as u64
    }
}

/// What a check measured.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub value: Option<f64>,
    pub tol: f64,
    /// Overrides the bound comparison when set.
    pub pass: Option<bool>,
    pub note: String,
}

impl Outcome {
    pub fn new(value: f64, tol: f64) -> Self {
        Self { value: Some(value), tol, pass: None, note: String::new() }
    }

    /// Appends to the note.
    pub fn note(mut self, note: impl Into<String>) -> Self {
        let note = note.into();
        if !note.is_empty() {
            self.note = if self.note.is_empty() { note } else { format!("{}; {note}", self.note) };
        }
        self
    }

    /// A refinement order under the pass rule of [`RefinementStudy::passes`]:
    /// either every defect is at rounding level or the order clears `min`.
    pub fn order(study: &RefinementStudy, min: f64) -> Self {
        let pass = Some(study.passes(min));
        let errors: Vec<String> = study.errors.iter().map(|e| format!("{e:.2e}")).collect();
        let mut note = format!("defects [{}]", errors.join(", "));
        if study.at_rounding() {
            note = format!("at rounding level; {note}");
        }
        match &study.order {
            Ok(o) => Self { value: Some(*o), tol: min, pass, note },
            Err(_) if study.at_rounding() => Self { value: None, tol: min, pass, note },
            Err(e) => Self { value: None, tol: min, pass, note: format!("{note}; {e}") },
        }
    }
}

/// Accumulates the records of one run.
pub struct Suite<'a> {
    pub cfg: &'a RunConfig,
    pub report: Report,
}

impl<'a> Suite<'a> {
    pub fn new(cfg: &'a RunConfig, command: &str) -> Self {
        Self { cfg, report: Report::new(command, cfg.seed) }
    }

    pub fn run(&mut self, group: Group) {
        match group {
            Group::Geometry => geometry::run(self),
            Group::Decompose => decompose::run(self),
            Group::Skew => skew::run(self),
            Group::SmallTime => skew::run_small_time(self),
            Group::Diffeo => diffeo::run(self),
        }
    }

    pub fn finish(self) -> Report {
        self.report
    }

    fn scenario(&self) -> &'static str {
        self.cfg.scenario.name
    }

    fn rng(&self, group: Group) -> ChaCha20Rng {
        stream_rng(self.cfg.seed, group.stream())
    }

    /// Configured tolerance (or tolerance factor) of a check.
    fn tol(&self, id: &str) -> f64 {
        self.cfg.tolerances.get(id)
    }

    fn check(&mut self, id: &str, f: impl FnOnce(f64) -> Result<Outcome>) {
        let tol = self.tol(id);
        let (scenario, seed) = (self.scenario(), self.cfg.seed);
        let record = match f(tol) {
            Ok(o) => {
                let mut r = CheckRecord::measured(id, scenario, o.value.unwrap_or(f64::NAN), o.tol, seed);
                r.value = o.value;
                if let Some(p) = o.pass {
                    r.pass = p;
                }
                r.pass &= o.value.is_some() || o.pass == Some(true);
                r.with_note(o.note)
            }
            Err(e) => CheckRecord::failed(id, scenario, tol, seed, e.to_string()),
        };
        self.report.records.push(record);
    }

    fn fail(&mut self, id: &str, err: &HarnessError) {
        let tol = self.tol(id);
        self.report.records.push(CheckRecord::failed(id, self.scenario(), tol, self.cfg.seed, err.to_string()));
    }

    fn skip(&mut self, what: &str, why: &str) {
        self.report.skipped.push(format!("{what}: {why}"));
    }

    fn trace(&mut self, trace: Trace) {
        self.report.traces.push(trace);
    }
}

/// The scenario's bundle, or the frame bundle of its base when it has
/// none, decomposed with the transport completion.
fn decomposition(cfg: &RunConfig, rng: &mut ChaCha20Rng) -> Result<(BundleSystem, Decomposition)> {
    let bs = match cfg.scenario.bundle {
        Some(_) => cfg.scenario.bundle_system(rng)?,
        None => cfg.scenario.frame_system(rng)?,
    };
    let dec = decompose_bundle(&bs, Completion::Transport, rng)?;
    Ok((bs, dec))
}

/// Runs the groups in order and returns the report.
pub fn run_suite(cfg: &RunConfig, command: &str, groups: &[Group]) -> Report {
    let mut suite = Suite::new(cfg, command);
    for g in groups {
        suite.run(*g);
    }
    suite.finish()
}

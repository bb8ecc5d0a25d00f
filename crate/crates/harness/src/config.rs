//! Run configuration: a TOML file with sections `integrator`, `batch` and
//! `tolerances`, overridden by command-line flags.
//!
//! ```toml
//! scenario = "s2-frames"
//! seed = 7
//!
//! [integrator]
//! dt = 1e-3        # finest step of refinement studies
//! t_end = 0.4
//! levels = 4       # dyadic levels, coarsest dt = dt * 2^(levels - 1)
//!
//! [batch]
//! paths = 16              # paths per refinement level
//! mc_paths = 100000       # small-time Monte Carlo
//! correlation_paths = 10000
//! cloud = 256             # diffeo grid size J
//! small_time = 0.01
//! split = 0.5             # concatenation split as a fraction of t_end
//!
//! [tolerances]
//! "skew.reconstruction-order" = 0.8
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::error::{HarnessError, Result};
use crate::scenario::{lookup, Scenario};
use crate::tolerances::Tolerances;

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub scenario: Option<String>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub batch: BatchSection,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub levels: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchSection {
    pub paths: Option<usize>,
    pub mc_paths: Option<usize>,
    pub correlation_paths: Option<usize>,
    pub cloud: Option<usize>,
    pub small_time: Option<f64>,
    pub split: Option<f64>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(toml::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Fields set in `other` win.
    pub fn merged(mut self, other: ConfigFile) -> Self {
        self.scenario = other.scenario.or(self.scenario);
        self.seed = other.seed.or(self.seed);
        let (i, o) = (&mut self.integrator, other.integrator);
        i.dt = o.dt.or(i.dt);
        i.t_end = o.t_end.or(i.t_end);
        i.levels = o.levels.or(i.levels);
        let (b, o) = (&mut self.batch, other.batch);
        b.paths = o.paths.or(b.paths);
        b.mc_paths = o.mc_paths.or(b.mc_paths);
        b.correlation_paths = o.correlation_paths.or(b.correlation_paths);
        b.cloud = o.cloud.or(b.cloud);
        b.small_time = o.small_time.or(b.small_time);
        b.split = o.split.or(b.split);
        self.tolerances.extend(other.tolerances);
        self
    }
}

/// A fully resolved configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub seed: u64,
    pub dt: f64,
    pub t_end: f64,
    pub levels: usize,
    pub paths: usize,
    pub mc_paths: usize,
    pub correlation_paths: usize,
    pub cloud: usize,
    pub small_time: f64,
    pub split: f64,
    pub tolerances: Tolerances,
}

impl RunConfig {
    pub fn resolve(file: ConfigFile, default_scenario: &str) -> Result<Self> {
        let scenario = lookup(file.scenario.as_deref().unwrap_or(default_scenario))?;
        let d = scenario.defaults;
        let cfg = Self {
            seed: file.seed.unwrap_or(d.seed),
            dt: file.integrator.dt.unwrap_or(d.dt),
            t_end: file.integrator.t_end.unwrap_or(d.t_end),
            levels: file.integrator.levels.unwrap_or(4),
            paths: file.batch.paths.unwrap_or(d.paths),
            mc_paths: file.batch.mc_paths.unwrap_or(100_000),
            correlation_paths: file.batch.correlation_paths.unwrap_or(10_000),
            cloud: file.batch.cloud.unwrap_or(d.cloud),
            small_time: file.batch.small_time.unwrap_or(0.01),
            split: file.batch.split.unwrap_or(0.5),
            tolerances: Tolerances::with_overrides(&file.tolerances)?,
            scenario,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(HarnessError::Usage(what.to_string()));
        if !(self.dt > 0.0 && self.t_end > 0.0 && self.small_time > 0.0) {
            return bad("dt, t_end and small_time must be positive");
        }
        if self.levels < 3 {
            return bad("need at least 3 refinement levels");
        }
        if self.paths < 1 || self.mc_paths < 2 || self.correlation_paths < 1 {
            return bad("path counts must be positive (mc_paths at least 2)");
        }
        if !(0.0..=1.0).contains(&self.split) {
            return bad("split must lie in [0, 1]");
        }
        Ok(())
    }

    /// Horizon of the refinement studies: `t_end` rounded down to a whole
    /// number of coarsest steps so every level shares the same grid end.
    pub fn refinement_t_end(&self) -> f64 {
        let coarse = self.coarsest_dt();
        (self.t_end / coarse + 1e-9).floor().max(1.0) * coarse
    }

    /// Step of the coarsest refinement level.
    pub fn coarsest_dt(&self) -> f64 {
        self.dt * (1u64 << (self.levels - 1)) as f64
    }
}

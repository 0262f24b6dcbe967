//! Run configuration: a JSON file whose keys can all be overridden by flags.

use std::path::{Path, PathBuf};

use hoc_core::{ContinuationSettings, IntegratorOptions};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Where a trace starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StartSpec {
    /// A named point of the model; only `"u0"` exists.
    Named(String),
    /// Unknowns in branch-file column order: `t_1..t_{m+1}`, the phase
    /// starts, `xi`, `H`.
    Inline(Vec<f64>),
}

impl Default for StartSpec {
    fn default() -> Self {
        StartSpec::Named("u0".into())
    }
}

impl StartSpec {
    /// `u0` or a comma-separated list of numbers.
    pub fn parse(s: &str) -> CliResult<Self> {
        if s == "u0" {
            return Ok(StartSpec::Named(s.into()));
        }
        s.split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::Usage(format!("bad start value '{v}'")))
            })
            .collect::<CliResult<Vec<_>>>()
            .map(StartSpec::Inline)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Limits {
    pub max_steps: usize,
    pub level_min: Option<f64>,
    pub level_max: Option<f64>,
    pub arclength_max: Option<f64>,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            max_steps: 100,
            level_min: None,
            level_max: None,
            arclength_max: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepConfig {
    pub h0: f64,
    pub h_min: f64,
    pub h_max: f64,
}

impl Default for StepConfig {
    fn default() -> Self {
        let s = ContinuationSettings::default();
        Self {
            h0: s.initial_step,
            h_min: s.min_step,
            h_max: s.max_step,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub ode_rel: f64,
    pub ode_abs: f64,
    pub newton: f64,
    pub event: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        // Tighter than the library default: at 1e-7 the dissipation
        // parameter drifts to ~1e-7 on long SLIP and block branches.
        Self {
            ode_rel: 1e-10,
            ode_abs: 1e-10,
            newton: ContinuationSettings::default().residual_tol,
            event: IntegratorOptions::default().event_tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Outputs {
    /// Defaults to `<model>_branch.csv`.
    pub branch_path: Option<PathBuf>,
    pub format: OutputFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: String,
    pub start: StartSpec,
    /// Emanating branch at a singular named start; the model's canonical
    /// branch if absent.
    pub branch: Option<usize>,
    pub direction: i8,
    pub limits: Limits,
    pub step: StepConfig,
    pub tolerances: Tolerances,
    pub outputs: Outputs,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: String::new(),
            start: StartSpec::default(),
            branch: None,
            direction: 1,
            limits: Limits::default(),
            step: StepConfig::default(),
            tolerances: Tolerances::default(),
            outputs: Outputs::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.model.is_empty() {
            return Err(CliError::Usage("no model given".into()));
        }
        if self.direction != 1 && self.direction != -1 {
            return Err(CliError::Usage(format!("direction must be 1 or -1, got {}", self.direction)));
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("ode_rel", t.ode_rel),
            ("ode_abs", t.ode_abs),
            ("newton", t.newton),
            ("event", t.event),
        ] {
            if !(v > 0.0) {
                return Err(CliError::Usage(format!("tolerance {name} must be positive, got {v}")));
            }
        }
        let s = &self.step;
        if !(s.h_min > 0.0 && s.h_min <= s.h0 && s.h0 <= s.h_max) {
            return Err(CliError::Usage(format!(
                "steps must satisfy 0 < h_min <= h0 <= h_max, got {} / {} / {}",
                s.h_min, s.h0, s.h_max
            )));
        }
        if let (Some(lo), Some(hi)) = (self.limits.level_min, self.limits.level_max) {
            if !(lo < hi) {
                return Err(CliError::Usage(format!("level_min {lo} must be below level_max {hi}")));
            }
        }
        Ok(())
    }

    pub fn settings(&self) -> ContinuationSettings {
        let l = &self.limits;
        let level_bounds = match (l.level_min, l.level_max) {
            (None, None) => None,
            // Finite sentinels keep the settings JSON-serializable.
            (lo, hi) => Some((lo.unwrap_or(f64::MIN), hi.unwrap_or(f64::MAX))),
        };
        ContinuationSettings {
            initial_step: self.step.h0,
            min_step: self.step.h_min,
            max_step: self.step.h_max,
            max_steps: l.max_steps,
            residual_tol: self.tolerances.newton,
            newton_step_tol: 0.1 * self.tolerances.newton,
            level_bounds,
            max_arclength: l.arclength_max,
            direction: self.direction,
            integrator: IntegratorOptions {
                rtol: self.tolerances.ode_rel,
                atol: self.tolerances.ode_abs,
                event_tol: self.tolerances.event,
                ..IntegratorOptions::default()
            },
            ..ContinuationSettings::default()
        }
    }

    pub fn branch_path(&self) -> PathBuf {
        self.outputs
            .branch_path
            .clone()
            .unwrap_or_else(|| PathBuf::from(format!("{}_branch.csv", self.model)))
    }
}

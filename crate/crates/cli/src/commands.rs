//! The verbs behind the `hoc` binary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use hoc_core::zoo::{self, orient_forward, MODEL_NAMES};
use hoc_core::{
    branch_switch, trace, BranchF64, ContinuationSettings, Layout, PointClass, Termination, TimeBasedProblem,
    ZooModel,
};
use log::info;
use nalgebra::DVector;

use crate::branch_file::{self, from_columns, Metadata};
use crate::checks::{run_checks, CheckOutcome};
use crate::config::{RunConfig, StartSpec};
use crate::error::{CliError, CliResult};

fn model(name: &str) -> CliResult<ZooModel> {
    zoo::entry(name).map_err(|e| CliError::Usage(e.to_string()))
}

fn default_parameters(name: &str) -> String {
    match name {
        "ball" => format!("{:?}", zoo::ball::BallParams::default()),
        "block" => format!("{:?}", zoo::block::BlockParams::default()),
        "rod" => format!("{:?}", zoo::rod::RodParams::default()),
        "slip" => format!("{:?}", zoo::slip::SlipParams::default()),
        _ => String::new(),
    }
}

/// One line per zoo model with its phase dimensions, then its defaults.
pub fn list_models() -> CliResult<String> {
    let mut out = String::new();
    for name in MODEL_NAMES {
        let entry = model(name)?;
        let _ = writeln!(out, "{}", entry.summary);
        let _ = writeln!(out, "    dims {:?}, defaults {}", entry.system.dims(), default_parameters(name));
    }
    Ok(out)
}

/// Result of a trace-like command, already written to `path`.
#[derive(Debug, Clone)]
pub struct TraceOutcome {
    pub layout: Layout,
    pub branch: BranchF64,
    pub path: PathBuf,
}

impl TraceOutcome {
    pub fn summary(&self) -> String {
        let b = &self.branch;
        format!(
            "{} points, {} simple bifurcations, {} turning points, termination {}; wrote {}",
            b.points.len(),
            b.count(PointClass::SimpleBifurcation),
            b.count(PointClass::Turning),
            termination_label(&b.termination),
            self.path.display()
        )
    }

    /// Clean terminations stop on a limit the user set.
    pub fn is_clean(&self) -> bool {
        !matches!(self.branch.termination, Termination::StepUnderflow { .. })
    }
}

fn termination_label(t: &Termination) -> String {
    match t {
        Termination::MaxSteps => "max_steps".into(),
        Termination::LevelBound => "level_bound".into(),
        Termination::ArclengthBound => "arclength_bound".into(),
        Termination::StepUnderflow { reason } => format!("step_underflow ({reason})"),
    }
}

/// Start vector and, for singular named starts, the branch direction.
fn start_of(
    cfg: &RunConfig,
    entry: &ZooModel,
    settings: &ContinuationSettings,
) -> CliResult<(DVector<f64>, Option<DVector<f64>>)> {
    let layout = entry.layout();
    match &cfg.start {
        StartSpec::Named(name) if name == "u0" => {
            let u0 = entry.start_vector();
            let dirs = entry.start_directions(settings)?;
            let tangent = match cfg.branch {
                Some(i) => dirs.get(i).cloned().ok_or_else(|| {
                    CliError::Usage(format!("branch {i} out of range: u0 has {} branches", dirs.len()))
                })?,
                None => entry.start_tangent(settings)?,
            };
            Ok((u0, Some(tangent)))
        }
        StartSpec::Named(other) => Err(CliError::Usage(format!("unknown start point '{other}' (only u0)"))),
        StartSpec::Inline(values) => {
            if cfg.branch.is_some() {
                return Err(CliError::Usage("a branch index needs the named start u0".into()));
            }
            Ok((from_columns(&layout, values)?, None))
        }
    }
}

fn finish(cfg: &RunConfig, layout: Layout, branch: BranchF64) -> CliResult<TraceOutcome> {
    let path = cfg.branch_path();
    branch_file::save(&path, &layout, &branch, &Metadata::new(cfg, &layout, &branch))?;
    Ok(TraceOutcome { layout, branch, path })
}

pub fn run_trace(cfg: &RunConfig) -> CliResult<TraceOutcome> {
    cfg.validate()?;
    let entry = model(&cfg.model)?;
    let settings = cfg.settings();
    let (start, tangent) = start_of(cfg, &entry, &settings)?;
    let problem = TimeBasedProblem::new(&entry.system, settings.integrator);
    info!("tracing {} for up to {} steps", cfg.model, settings.max_steps);
    let branch = trace(&problem, &start, tangent.as_ref(), &settings)?;
    finish(cfg, entry.layout(), branch)
}

/// Config of a follow-up run on a saved branch: the recorded config unless
/// one is given, with the output path cleared.
pub fn inherited_config(saved: &Metadata, explicit: Option<RunConfig>) -> RunConfig {
    explicit.unwrap_or_else(|| {
        let mut cfg = saved.config.clone();
        cfg.outputs.branch_path = None;
        cfg.branch = None;
        cfg
    })
}

/// Traces emanating branch `branch_index` of simple bifurcation number
/// `sb_index` (both zero-based) found in the branch file `input`.
pub fn run_branch_switch(
    cfg: &RunConfig,
    input: &Path,
    sb_index: usize,
    branch_index: usize,
) -> CliResult<TraceOutcome> {
    cfg.validate()?;
    let saved = branch_file::load(input)?;
    if saved.metadata.model != cfg.model {
        return Err(CliError::Usage(format!(
            "{} holds a '{}' branch, not '{}'",
            input.display(),
            saved.metadata.model,
            cfg.model
        )));
    }
    let sbs: Vec<_> = saved
        .branch
        .points
        .iter()
        .filter(|p| p.class == PointClass::SimpleBifurcation)
        .collect();
    let sb = sbs.get(sb_index).ok_or_else(|| {
        CliError::Usage(format!(
            "simple bifurcation {sb_index} out of range: {} has {}",
            input.display(),
            sbs.len()
        ))
    })?;
    let entry = model(&cfg.model)?;
    let settings = cfg.settings();
    let problem = TimeBasedProblem::new(&entry.system, settings.integrator);
    let dirs = branch_switch(&problem, &sb.u, saved.layout.xi_index(), &settings)?;
    let dir = dirs.get(branch_index).cloned().ok_or_else(|| {
        CliError::Usage(format!(
            "branch {branch_index} out of range: the bifurcation has {} branches",
            dirs.len()
        ))
    })?;
    let dir = orient_forward(&saved.layout, &sb.u, dir);
    let branch = trace(&problem, &sb.u, Some(&dir), &settings)?;
    finish(cfg, saved.layout, branch)
}

/// Where `check` evaluates.
#[derive(Debug, Clone)]
pub enum CheckPoint {
    /// Point `step` of the canonical start branch of the configured model.
    StartBranch { step: usize },
    /// Row `step` of a branch file.
    File { path: PathBuf, step: usize },
}

pub fn run_check(cfg: &RunConfig, at: &CheckPoint) -> CliResult<Vec<CheckOutcome>> {
    cfg.validate()?;
    let entry = model(&cfg.model)?;
    let settings = cfg.settings();
    let u = match at {
        CheckPoint::StartBranch { step } => {
            let (start, tangent) = start_of(cfg, &entry, &settings)?;
            let problem = TimeBasedProblem::new(&entry.system, settings.integrator);
            let s = ContinuationSettings {
                max_steps: *step,
                ..settings.clone()
            };
            let branch = trace(&problem, &start, tangent.as_ref(), &s)?;
            branch.points.last().expect("start point").u.clone()
        }
        CheckPoint::File { path, step } => {
            let saved = branch_file::load(path)?;
            if saved.layout != entry.layout() {
                return Err(CliError::Usage(format!("{} does not match model {}", path.display(), cfg.model)));
            }
            saved
                .branch
                .points
                .get(*step)
                .ok_or_else(|| CliError::Usage(format!("step {step} out of range")))?
                .u
                .clone()
        }
    };
    Ok(run_checks(&entry.system, &settings.integrator, &u)?)
}

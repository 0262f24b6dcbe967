use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hoc_cli::branch_file;
use hoc_cli::commands::{self, CheckPoint};
use hoc_cli::config::StartSpec;
use hoc_cli::{CliError, CliResult, RunConfig};

/// Continuation of periodic orbits in conservative hybrid systems.
///
/// Exit codes: 0 success, 1 I/O error, 2 usage or format error, 3 numerical failure or rejected point.
/// Set HOC_LOG (e.g. `info`, `debug`) for progress output.
#[derive(Parser)]
#[command(name = "hoc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the zoo models with their dimensions and default parameters.
    ListModels,
    /// Trace a branch and write it as CSV plus a JSON sidecar.
    Trace(RunArgs),
    /// Trace a branch emanating from a simple bifurcation of a saved branch.
    BranchSwitch {
        /// Branch file containing the bifurcation point.
        #[arg(long)]
        input: PathBuf,
        /// Which simple bifurcation of the file, counted from 0.
        #[arg(long)]
        sb: usize,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Validate derivatives and transport identities at one point.
    Check {
        /// Branch file to take the point from; defaults to the start branch.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Row of the branch file, or steps along the start branch.
        #[arg(long, default_value_t = 5)]
        at_step: usize,
        #[command(flatten)]
        run: RunArgs,
    },
}

/// Run configuration; flags override the config file.
#[derive(Args, Default)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    /// `u0` or comma-separated unknowns in branch-file column order.
    #[arg(long, allow_hyphen_values = true)]
    from: Option<String>,
    /// Emanating branch at a singular start or at the selected
    /// bifurcation, counted from 0.
    #[arg(long)]
    branch: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    direction: Option<i8>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    level_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    level_max: Option<f64>,
    #[arg(long)]
    arclength_max: Option<f64>,
    #[arg(long)]
    h0: Option<f64>,
    #[arg(long)]
    h_min: Option<f64>,
    #[arg(long)]
    h_max: Option<f64>,
    #[arg(long)]
    ode_rtol: Option<f64>,
    #[arg(long)]
    ode_atol: Option<f64>,
    #[arg(long)]
    newton_tol: Option<f64>,
    #[arg(long)]
    event_tol: Option<f64>,
    /// Output branch file (default `<model>_branch.csv`).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn base(&self) -> CliResult<Option<RunConfig>> {
        self.config.as_deref().map(RunConfig::load).transpose()
    }

    fn apply(&self, mut cfg: RunConfig) -> CliResult<RunConfig> {
        fn set<T: Clone>(slot: &mut T, v: &Option<T>) {
            if let Some(v) = v {
                *slot = v.clone();
            }
        }
        set(&mut cfg.model, &self.model);
        if let Some(s) = &self.from {
            cfg.start = StartSpec::parse(s)?;
        }
        if self.branch.is_some() {
            cfg.branch = self.branch;
        }
        set(&mut cfg.direction, &self.direction);
        set(&mut cfg.limits.max_steps, &self.steps);
        if self.level_min.is_some() {
            cfg.limits.level_min = self.level_min;
        }
        if self.level_max.is_some() {
            cfg.limits.level_max = self.level_max;
        }
        if self.arclength_max.is_some() {
            cfg.limits.arclength_max = self.arclength_max;
        }
        set(&mut cfg.step.h0, &self.h0);
        set(&mut cfg.step.h_min, &self.h_min);
        set(&mut cfg.step.h_max, &self.h_max);
        set(&mut cfg.tolerances.ode_rel, &self.ode_rtol);
        set(&mut cfg.tolerances.ode_abs, &self.ode_atol);
        set(&mut cfg.tolerances.newton, &self.newton_tol);
        set(&mut cfg.tolerances.event, &self.event_tol);
        if self.out.is_some() {
            cfg.outputs.branch_path = self.out.clone();
        }
        Ok(cfg)
    }

    fn config(&self) -> CliResult<RunConfig> {
        self.apply(self.base()?.unwrap_or_default())
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::ListModels => print!("{}", commands::list_models()?),
        Command::Trace(args) => {
            let outcome = commands::run_trace(&args.config()?)?;
            println!("{}", outcome.summary());
            if !outcome.is_clean() {
                return Err(CliError::Rejected("trace stopped early".into()));
            }
        }
        Command::BranchSwitch { input, sb, run } => {
            let saved = branch_file::load(&input)?;
            let cfg = run.apply(commands::inherited_config(&saved.metadata, run.base()?))?;
            let branch = cfg
                .branch
                .ok_or_else(|| CliError::Usage("branch-switch needs --branch".into()))?;
            let outcome = commands::run_branch_switch(&cfg, &input, sb, branch)?;
            println!("{}", outcome.summary());
            if !outcome.is_clean() {
                return Err(CliError::Rejected("trace stopped early".into()));
            }
        }
        Command::Check { input, at_step, run } => {
            let (cfg, at) = match input {
                Some(path) => {
                    let saved = branch_file::load(&path)?;
                    let cfg = run.apply(commands::inherited_config(&saved.metadata, run.base()?))?;
                    (cfg, CheckPoint::File { path, step: at_step })
                }
                None => (run.config()?, CheckPoint::StartBranch { step: at_step }),
            };
            let outcomes = commands::run_check(&cfg, &at)?;
            for o in &outcomes {
                println!("{o}");
            }
            let failed = outcomes.iter().filter(|o| !o.passed()).count();
            if failed > 0 {
                return Err(CliError::Rejected(format!("{failed} of {} checks failed", outcomes.len())));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HOC_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hoc: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

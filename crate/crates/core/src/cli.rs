//! Batch front end: run configuration files, subcommands and exports.
//!
//! A run is fully determined by one JSON configuration file. Its top level
//! holds every [`SolverConfig`] field plus `output_dir`, `exports`,
//! `log_level`, `threads` and `curve_grid`.
//!
//! Exit status: 0 success, 2 configuration error (nothing written),
//! 3 every metric unreachable, 4 internal error.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::baselines::{epv_sample_size, EpvInput, DEFAULT_EPV};
use crate::datagen::{tune_scale, DatagenError};
use crate::metrics::MetricRegistry;
use crate::models::{StrategyRegistry, DEFAULT_RIDGE_PENALTY};
use crate::report::{curve_csv, plot_svg, summaries_csv, text_report, write_atomic};
use crate::search::{SearchError, Solver, SolverConfig};
use crate::simulate::{SimulationSettings, Simulator};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_UNREACHABLE: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

pub const LOG_ENV: &str = "SAMPLECURVE_LOG";
pub const DEFAULT_OUTPUT_DIR: &str = "samplecurve-out";

pub const RESULT_JSON: &str = "result.json";
pub const SUMMARIES_CSV: &str = "summaries.csv";
pub const REPORT_TXT: &str = "report.txt";
pub const PLOT_SVG: &str = "learning_curve.svg";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

impl From<SearchError> for CliError {
    fn from(e: SearchError) -> Self {
        match e {
            SearchError::InvalidConfig(_)
            | SearchError::TuningFailed(_)
            | SearchError::Model(_)
            | SearchError::Metric(_) => CliError::Config(e.to_string()),
            SearchError::Simulation(_) => CliError::Internal(e.to_string()),
        }
    }
}

impl From<DatagenError> for CliError {
    fn from(e: DatagenError) -> Self {
        CliError::Config(e.to_string())
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exports {
    /// One `curve_<metric>.csv` per metric.
    #[serde(default = "yes")]
    pub curve_csv: bool,
    #[serde(default = "yes")]
    pub result_json: bool,
    #[serde(default = "yes")]
    pub plot_svg: bool,
    #[serde(default = "yes")]
    pub summaries_csv: bool,
}

impl Default for Exports {
    fn default() -> Self {
        Exports {
            curve_csv: true,
            result_json: true,
            plot_svg: true,
            summaries_csv: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub exports: Exports,
    /// `error`, `warn`, `info`, `debug` or `trace`; the environment variable
    /// takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_level: Option<String>,
    /// Worker threads; defaults to the available cores.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Sizes evaluated by the `curve` subcommand.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve_grid: Option<Vec<usize>>,
}

const RUN_KEYS: &[&str] = &[
    "generator",
    "strategy_tag",
    "l2_penalty",
    "metrics",
    "criterion",
    "n_min",
    "n_max",
    "r_search",
    "r_confirm",
    "validation_size",
    "validation_mode",
    "max_iterations",
    "tolerance",
    "master_seed",
    "mc_size",
    "bootstrap",
    "epv",
    "output_dir",
    "exports",
    "log_level",
    "threads",
    "curve_grid",
];

impl RunConfig {
    pub fn new(solver: SolverConfig) -> Self {
        RunConfig {
            solver,
            output_dir: None,
            exports: Exports::default(),
            log_level: None,
            threads: None,
            curve_grid: None,
        }
    }

    /// Parses and checks a configuration, rejecting unknown top-level keys.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("parse: {e}")))?;
        let obj = value
            .as_object()
            .ok_or_else(|| CliError::Config("top level must be an object".into()))?;
        let known: BTreeSet<&str> = RUN_KEYS.iter().copied().collect();
        if let Some(k) = obj.keys().find(|k| !known.contains(k.as_str())) {
            return Err(CliError::Config(format!("unknown key `{k}`")));
        }
        serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks everything that can be checked without simulating.
    pub fn validate(&self) -> Result<(), CliError> {
        self.solver.validate()?;
        let ridge = self.solver.l2_penalty.unwrap_or(DEFAULT_RIDGE_PENALTY);
        StrategyRegistry::with_builtins(ridge)
            .get(&self.solver.strategy_tag)
            .map_err(|e| CliError::Config(e.to_string()))?;
        let metrics = MetricRegistry::default();
        for m in &self.solver.metrics {
            metrics.get(&m.kind).map_err(|e| CliError::Config(e.to_string()))?;
        }
        if self.threads == Some(0) {
            return Err(CliError::Config("threads must be positive".into()));
        }
        if let Some(level) = &self.log_level {
            level
                .parse::<log::LevelFilter>()
                .map_err(|_| CliError::Config(format!("unknown log level `{level}`")))?;
        }
        Ok(())
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }
}

#[derive(Debug, Parser)]
#[command(name = "samplecurve", version, about = "Simulation-based minimum sample size for prediction models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub global: GlobalArgs,
}

#[derive(Debug, Args, Clone, Default)]
pub struct GlobalArgs {
    /// Run configuration (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Worker threads, overriding the configuration.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Output directory, overriding the configuration.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Skip the SVG plot.
    #[arg(long, global = true)]
    pub no_plot: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Full adaptive search for the minimum sample size.
    Solve,
    /// Evaluate the learning curve on a fixed grid of sizes.
    Curve {
        /// Comma-separated sizes; overrides `curve_grid`.
        #[arg(long, value_delimiter = ',')]
        n: Option<Vec<usize>>,
        /// Replicates per size; defaults to `r_search`.
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Tune the generator and print it as JSON.
    Tune,
    /// Events-per-variable baseline.
    Epv {
        /// Candidate predictors; defaults to the configured generator's.
        #[arg(long)]
        p: Option<usize>,
        /// Outcome prevalence; defaults to the configured target.
        #[arg(long)]
        prevalence: Option<f64>,
        /// Events per variable.
        #[arg(long)]
        epv: Option<f64>,
    },
}

/// Loads the configuration and applies command-line overrides.
pub fn resolve_config(global: &GlobalArgs) -> Result<RunConfig, CliError> {
    let path = global
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = global.seed {
        cfg.solver.master_seed = seed;
    }
    if let Some(t) = global.threads {
        cfg.threads = Some(t);
    }
    if let Some(out) = &global.out {
        cfg.output_dir = Some(out.clone());
    }
    if global.no_plot {
        cfg.exports.plot_svg = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn init_logging(level: Option<&str>) {
    let env = env_logger::Env::new().filter_or(LOG_ENV, level.unwrap_or("warn"));
    let _ = env_logger::Builder::from_env(env)
        .format_timestamp(None)
        .try_init();
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Internal(e.to_string()))
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Internal(format!("writing {}: {e}", path.display()))
}

fn write_output(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    write_atomic(&path, contents).map_err(io_err(&path))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))
}

/// Runs the solver exactly as the `solve` subcommand does and writes its
/// outputs. Returns the exit status.
pub fn run_solve(cfg: &RunConfig) -> Result<i32, CliError> {
    let result = pool(cfg.threads)?.install(|| Solver::new(cfg.solver.clone()).run())?;
    let dir = cfg.output_dir();
    ensure_dir(&dir)?;
    if cfg.exports.result_json {
        write_output(&dir, RESULT_JSON, &result.to_json())?;
    }
    if cfg.exports.summaries_csv {
        write_output(&dir, SUMMARIES_CSV, &summaries_csv(&result.summaries))?;
    }
    if cfg.exports.curve_csv {
        for m in &result.metrics {
            write_output(&dir, &format!("curve_{}.csv", m.metric), &curve_csv(m))?;
        }
    }
    if cfg.exports.plot_svg {
        write_output(&dir, PLOT_SVG, &plot_svg(&result))?;
    }
    let report = text_report(&result);
    write_output(&dir, REPORT_TXT, &report)?;
    print!("{report}");
    Ok(if result.all_unreachable() {
        EXIT_UNREACHABLE
    } else {
        EXIT_OK
    })
}

pub fn run_curve(
    cfg: &RunConfig,
    grid: Option<Vec<usize>>,
    replicates: Option<usize>,
) -> Result<i32, CliError> {
    let mut grid = grid
        .or_else(|| cfg.curve_grid.clone())
        .ok_or_else(|| CliError::Config("no sizes given (--n or curve_grid)".into()))?;
    grid.sort_unstable();
    grid.dedup();
    if grid.first().is_some_and(|&n| n < 2) {
        return Err(CliError::Config("sizes must be at least 2".into()));
    }
    let replicates = replicates.unwrap_or(cfg.solver.r_search);
    if replicates < 2 {
        return Err(CliError::Config("need at least 2 replicates".into()));
    }
    let s = &cfg.solver;
    let ridge = s.l2_penalty.unwrap_or(DEFAULT_RIDGE_PENALTY);
    let strategy = StrategyRegistry::with_builtins(ridge)
        .get(&s.strategy_tag)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let registry = MetricRegistry::default();
    let metrics = s
        .metrics
        .iter()
        .map(|m| registry.get(&m.kind))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let summaries = pool(cfg.threads)?.install(|| -> Result<_, CliError> {
        let generator = tune_scale(&s.generator, s.mc_size, s.master_seed)?;
        let settings = SimulationSettings {
            validation_size: s.validation_size,
            master_seed: s.master_seed,
            validation_mode: s.validation_mode,
            quantile_level: s.criterion.quantile_level(),
            bootstrap: s.bootstrap,
        };
        let sim = Simulator::new(generator, strategy, metrics, settings)
            .map_err(|e| CliError::Internal(e.to_string()))?;
        grid.iter()
            .map(|&n| {
                log::info!("evaluating n = {n}");
                sim.run_at_n(n, replicates)
                    .map_err(|e| CliError::Internal(e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()
    })?;
    let csv = summaries_csv(&summaries);
    let dir = cfg.output_dir();
    ensure_dir(&dir)?;
    write_output(&dir, SUMMARIES_CSV, &csv)?;
    print!("{csv}");
    Ok(EXIT_OK)
}

pub fn run_tune(cfg: &RunConfig) -> Result<i32, CliError> {
    let s = &cfg.solver;
    let generator = pool(cfg.threads)?.install(|| tune_scale(&s.generator, s.mc_size, s.master_seed))?;
    println!("{}", generator.to_json());
    Ok(EXIT_OK)
}

fn run_epv(
    global: &GlobalArgs,
    p: Option<usize>,
    prevalence: Option<f64>,
    epv: Option<f64>,
) -> Result<i32, CliError> {
    let cfg = match (&global.config, p, prevalence) {
        (_, Some(_), Some(_)) => None,
        (Some(_), _, _) => Some(resolve_config(global)?),
        _ => {
            return Err(CliError::Config(
                "epv needs --p and --prevalence or a --config".into(),
            ))
        }
    };
    let input = EpvInput {
        p: p.or(cfg.as_ref().map(|c| c.solver.generator.p())).unwrap_or(0),
        prevalence: prevalence
            .or(cfg.as_ref().map(|c| c.solver.generator.target_prevalence))
            .unwrap_or(f64::NAN),
        epv: epv
            .or(cfg.as_ref().map(|c| c.solver.epv))
            .unwrap_or(DEFAULT_EPV),
    };
    let n = epv_sample_size(&input).map_err(|e| CliError::Config(e.to_string()))?;
    println!("{n}");
    Ok(EXIT_OK)
}

/// Executes a parsed command line and returns the process exit status.
pub fn execute(cli: Cli) -> i32 {
    let outcome = match cli.command {
        Command::Epv { p, prevalence, epv } => {
            init_logging(None);
            run_epv(&cli.global, p, prevalence, epv)
        }
        command => match resolve_config(&cli.global) {
            Ok(cfg) => {
                init_logging(cfg.log_level.as_deref());
                match command {
                    Command::Solve => run_solve(&cfg),
                    Command::Curve { n, replicates } => run_curve(&cfg, n, replicates),
                    Command::Tune => run_tune(&cfg),
                    Command::Epv { .. } => unreachable!("handled above"),
                }
            }
            Err(e) => Err(e),
        },
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("samplecurve: {e}");
            e.exit_code()
        }
    }
}

/// Parses `args` (program name first) and executes.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}

//! Adaptive solver for the minimum development-sample size.
//!
//! [`Solver::run`] tunes the generator, seeds the learning curve at five
//! log-spaced sizes, then alternates between evaluating at the current
//! crossing estimate of the least certain metric and at the point of largest
//! posterior uncertainty inside that metric's crossing band. A final
//! confirmation run at the recommended size uses fresh replicate streams.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::baselines::{epv_sample_size, Baselines, EpvInput, EpvReport, DEFAULT_EPV};
use crate::datagen::{tune_scale, DatagenError, GeneratorSpec, OutcomeType, TunedGenerator, DEFAULT_MC_SIZE};
use crate::math::log_space;
use crate::metrics::{BuiltinMetric, Metric, MetricError, MetricRegistry, MetricSpec, Orientation};
use crate::models::{ModelError, ModelStrategy, StrategyRegistry, DEFAULT_RIDGE_PENALTY};
use crate::rng::StreamId;
use crate::simulate::{
    summarize, PerformanceSummary, SimulateError, SimulationSettings, Simulator, ValidationMode,
    DEFAULT_BOOTSTRAP, DEFAULT_VALIDATION_SIZE,
};
use crate::surrogate::{
    find_crossing, fit_power_law_oriented, gp_fit, CurveObservation, GpDiagnostics,
    LearningCurveModel, PowerLawFit,
};

pub const DEFAULT_N_MAX: usize = 200_000;
pub const DEFAULT_R_SEARCH: usize = 100;
pub const DEFAULT_R_CONFIRM: usize = 400;
pub const DEFAULT_MAX_ITERATIONS: usize = 12;
pub const DEFAULT_TOLERANCE: f64 = 0.02;
pub const DEFAULT_ASSURANCE: f64 = 0.8;
pub const SEED_POINTS: usize = 5;
pub const MIN_R_SEARCH: usize = 20;
/// Candidates closer than this in `ln n` to an evaluated size are skipped.
pub const DUPLICATE_LOG_GAP: f64 = 0.005;
pub const EXPLORATION_GRID: usize = 50;
/// First replicate stream index of the confirmation run.
pub const CONFIRM_STREAM_OFFSET: usize = 1 << 20;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("generator tuning failed: {0}")]
    TuningFailed(#[from] DatagenError),
    #[error(transparent)]
    Simulation(#[from] SimulateError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Criterion {
    /// Expected performance clears the target.
    Mean,
    /// Performance clears the target with probability `delta`.
    Assurance { delta: f64 },
}

impl Default for Criterion {
    fn default() -> Self {
        Criterion::Assurance {
            delta: DEFAULT_ASSURANCE,
        }
    }
}

impl Criterion {
    /// Quantile level used for summaries; the mean criterion still records
    /// the default 20th percentile.
    pub fn quantile_level(self) -> f64 {
        match self {
            Criterion::Mean => 1.0 - DEFAULT_ASSURANCE,
            Criterion::Assurance { delta } => 1.0 - delta,
        }
    }
}

fn default_strategy() -> String {
    "logistic".to_string()
}
fn default_n_max() -> usize {
    DEFAULT_N_MAX
}
fn default_r_search() -> usize {
    DEFAULT_R_SEARCH
}
fn default_r_confirm() -> usize {
    DEFAULT_R_CONFIRM
}
fn default_validation_size() -> usize {
    DEFAULT_VALIDATION_SIZE
}
fn default_max_iterations() -> usize {
    DEFAULT_MAX_ITERATIONS
}
fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}
fn default_mc_size() -> usize {
    DEFAULT_MC_SIZE
}
fn default_bootstrap() -> usize {
    DEFAULT_BOOTSTRAP
}
fn default_epv() -> f64 {
    DEFAULT_EPV
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub generator: GeneratorSpec,
    #[serde(default = "default_strategy")]
    pub strategy_tag: String,
    /// Ridge penalty for the `logistic_l2` strategy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l2_penalty: Option<f64>,
    pub metrics: Vec<MetricSpec>,
    #[serde(default)]
    pub criterion: Criterion,
    /// Defaults to `max(50, 2 (p + 1))`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_min: Option<usize>,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default = "default_r_search")]
    pub r_search: usize,
    #[serde(default = "default_r_confirm")]
    pub r_confirm: usize,
    #[serde(default = "default_validation_size")]
    pub validation_size: usize,
    #[serde(default)]
    pub validation_mode: ValidationMode,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_mc_size")]
    pub mc_size: usize,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    #[serde(default = "default_epv")]
    pub epv: f64,
}

impl SolverConfig {
    pub fn new(generator: GeneratorSpec, metrics: Vec<MetricSpec>, master_seed: u64) -> Self {
        SolverConfig {
            generator,
            strategy_tag: default_strategy(),
            l2_penalty: None,
            metrics,
            criterion: Criterion::default(),
            n_min: None,
            n_max: DEFAULT_N_MAX,
            r_search: DEFAULT_R_SEARCH,
            r_confirm: DEFAULT_R_CONFIRM,
            validation_size: DEFAULT_VALIDATION_SIZE,
            validation_mode: ValidationMode::Shared,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            tolerance: DEFAULT_TOLERANCE,
            master_seed,
            mc_size: DEFAULT_MC_SIZE,
            bootstrap: DEFAULT_BOOTSTRAP,
            epv: DEFAULT_EPV,
        }
    }

    pub fn n_min(&self) -> usize {
        self.n_min
            .unwrap_or_else(|| 50.max(2 * (self.generator.p() + 1)))
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |msg: String| Err(SearchError::InvalidConfig(msg));
        self.generator
            .validate()
            .map_err(|e| SearchError::InvalidConfig(e.to_string()))?;
        if self.metrics.is_empty() {
            return bad("at least one metric is required".into());
        }
        if let Criterion::Assurance { delta } = self.criterion {
            if !(delta > 0.5 && delta <= 0.99) {
                return bad(format!("assurance level {delta} outside (0.5, 0.99]"));
            }
        }
        let n_min = self.n_min();
        if n_min < 2 || n_min >= self.n_max {
            return bad(format!("need 2 <= n_min < n_max, got {n_min} and {}", self.n_max));
        }
        if self.n_max as u64 > crate::rng::MAX_STREAM_N {
            return bad(format!("n_max {} too large", self.n_max));
        }
        if self.r_search < MIN_R_SEARCH {
            return bad(format!("r_search must be at least {MIN_R_SEARCH}"));
        }
        if self.r_confirm < 2 {
            return bad("r_confirm must be at least 2".into());
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive".into());
        }
        if !(self.tolerance > 0.0) {
            return bad("tolerance must be positive".into());
        }
        if self.validation_size < 2 {
            return bad("validation_size too small".into());
        }
        if let Some(l2) = self.l2_penalty {
            if !(l2 >= 0.0 && l2.is_finite()) {
                return bad(format!("l2_penalty must be nonnegative, got {l2}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricStatus {
    Solved,
    AlreadySatisfied,
    Unreachable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResultFlag {
    NotConfirmed,
    BudgetExhausted,
    SomeMetricsUnreachable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Seed,
    Exploit,
    Explore,
    Confirm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub n: usize,
    pub replicates: usize,
    pub phase: Phase,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ceiling {
    pub n: usize,
    pub statistic: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub metric: String,
    pub orientation: Orientation,
    pub threshold: f64,
    pub status: MetricStatus,
    pub n_required: Option<u64>,
    pub ci_low: Option<u64>,
    pub ci_high: Option<u64>,
    pub observations: Vec<CurveObservation>,
    pub gp: Option<GpDiagnostics>,
    pub power_law: Option<PowerLawFit>,
    /// Statistic at the largest evaluated size with a success.
    pub ceiling: Option<Ceiling>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfirmationCheck {
    pub metric: String,
    pub statistic: Option<f64>,
    pub se: Option<f64>,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Confirmation {
    pub n: usize,
    pub replicates: usize,
    pub checks: Vec<ConfirmationCheck>,
    pub summary: PerformanceSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSizeResult {
    pub criterion: Criterion,
    pub strategy_tag: String,
    pub master_seed: u64,
    pub n_min: usize,
    pub n_max: usize,
    /// Max over reachable metrics; `None` when every metric is unreachable.
    pub n_required: Option<u64>,
    pub metrics: Vec<MetricResult>,
    pub flags: Vec<ResultFlag>,
    pub converged: bool,
    pub iterations: usize,
    pub total_replicate_fits: u64,
    pub evaluations: Vec<EvaluationRecord>,
    pub confirmation: Option<Confirmation>,
    pub generator: TunedGenerator,
    pub baselines: Baselines,
    /// Search-phase summaries in increasing `n`.
    pub summaries: Vec<PerformanceSummary>,
}

impl SampleSizeResult {
    pub fn has_flag(&self, flag: ResultFlag) -> bool {
        self.flags.contains(&flag)
    }

    pub fn metric(&self, name: &str) -> Option<&MetricResult> {
        self.metrics.iter().find(|m| m.metric == name)
    }

    pub fn all_unreachable(&self) -> bool {
        self.metrics.iter().all(|m| m.status == MetricStatus::Unreachable)
    }

    /// Pretty JSON with reals rounded to 15 significant digits.
    pub fn to_json(&self) -> String {
        let mut value = serde_json::to_value(self).expect("result serializes");
        round_reals(&mut value);
        serde_json::to_string_pretty(&value).expect("value serializes")
    }
}

/// Rounds every non-integer number in `value` to 15 significant digits.
pub fn round_reals(value: &mut Value) {
    match value {
        Value::Number(num) if num.is_f64() => {
            if let Some(x) = num.as_f64() {
                let rounded: f64 = format!("{x:.14e}").parse().expect("formatted float parses");
                if let Some(r) = serde_json::Number::from_f64(rounded) {
                    *num = r;
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_reals),
        Value::Object(map) => map.values_mut().for_each(round_reals),
        _ => {}
    }
}

/// Per-`n` statistic for one metric column: the quantile under assurance,
/// the mean otherwise, with its standard error. `None` when every replicate
/// failed.
pub fn statistic(
    summary: &PerformanceSummary,
    column: usize,
    criterion: Criterion,
) -> Option<(f64, f64)> {
    let m = &summary.metrics[column];
    let k = m.successes(summary.replicates);
    let mean_se = || m.mean_se(summary.replicates).unwrap_or(0.0);
    match criterion {
        Criterion::Mean => m.mean.map(|v| (v, mean_se())),
        Criterion::Assurance { .. } => m.quantile.map(|v| {
            let se = m.quantile_se.unwrap_or_else(|| {
                m.sd.map(|sd| sd / (k.max(1) as f64).sqrt()).unwrap_or(0.0)
            });
            (v, se)
        }),
    }
}

/// Learning-curve points for `column` from summaries sorted by `n`, plus the
/// largest `n` at which every replicate failed.
pub fn curve_observations(
    summaries: &[PerformanceSummary],
    column: usize,
    criterion: Criterion,
) -> (Vec<CurveObservation>, Option<usize>) {
    let mut obs = Vec::new();
    let mut failed_up_to = None;
    for s in summaries {
        match statistic(s, column, criterion) {
            Some((y, se)) => obs.push(CurveObservation::new(s.n as f64, y, se)),
            None => failed_up_to = Some(failed_up_to.map_or(s.n, |f: usize| f.max(s.n))),
        }
    }
    (obs, failed_up_to)
}

/// Re-summarizes frozen replicate values at another quantile level.
pub fn resummarize(
    summary: &PerformanceSummary,
    quantile_level: f64,
    bootstrap: usize,
    master_seed: u64,
) -> PerformanceSummary {
    let columns: Vec<(String, Orientation)> = summary
        .metrics
        .iter()
        .map(|m| (m.metric.clone(), m.orientation))
        .collect();
    summarize(
        summary.n,
        summary.samples.clone(),
        &columns,
        quantile_level,
        bootstrap,
        master_seed,
    )
}

/// Smallest observed `n` from which the statistic clears `threshold` at that
/// and every larger observed size.
pub fn empirical_crossing(
    observations: &[CurveObservation],
    threshold: f64,
    orientation: Orientation,
) -> Option<f64> {
    let mut sorted = observations.to_vec();
    sorted.sort_by(|a, b| a.n.total_cmp(&b.n));
    let mut answer = None;
    for o in sorted.iter().rev() {
        if orientation.satisfied(o.y, threshold) {
            answer = Some(o.n);
        } else {
            break;
        }
    }
    answer
}

/// Outcome of a surrogate crossing after accounting for all-failure sizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricCrossing {
    pub status: MetricStatus,
    pub n_hat: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

/// Fits the GP to `observations` and locates the crossing.
pub fn solve_curve(
    observations: &[CurveObservation],
    failed_up_to: Option<usize>,
    threshold: f64,
    orientation: Orientation,
    n_min: usize,
    n_max: usize,
) -> (MetricCrossing, Option<LearningCurveModel>) {
    let unreachable = MetricCrossing {
        status: MetricStatus::Unreachable,
        n_hat: None,
        ci_low: None,
        ci_high: None,
    };
    let model = match gp_fit(observations) {
        Ok(m) => m,
        Err(_) => return (unreachable, None),
    };
    let floor = failed_up_to.map(|f| (f + 1) as f64);
    let crossing = match find_crossing(&model, threshold, orientation, n_min as f64, n_max as f64)
    {
        crate::surrogate::Crossing::Unreachable => unreachable,
        crate::surrogate::Crossing::AlreadySatisfied => match floor {
            Some(f) => MetricCrossing {
                status: MetricStatus::Solved,
                n_hat: Some(f),
                ci_low: Some(f),
                ci_high: Some(f),
            },
            None => MetricCrossing {
                status: MetricStatus::AlreadySatisfied,
                n_hat: Some(n_min as f64),
                ci_low: Some(n_min as f64),
                ci_high: Some(n_min as f64),
            },
        },
        crate::surrogate::Crossing::Found {
            n_hat,
            ci_low,
            ci_high,
        } => {
            let f = floor.unwrap_or(0.0);
            MetricCrossing {
                status: MetricStatus::Solved,
                n_hat: Some((n_hat as f64).max(f)),
                ci_low: Some((ci_low as f64).max(f)),
                ci_high: Some((ci_high as f64).max(f)),
            }
        }
    };
    (crossing, Some(model))
}

/// Reachability of one metric target at `n_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reachability {
    pub reachable: bool,
    pub ceiling: Option<f64>,
    pub se: Option<f64>,
    pub threshold: f64,
}

/// Runs `replicates` fits at `n_max`; reachable when the statistic plus two
/// standard errors clears the threshold.
#[allow(clippy::too_many_arguments)]
pub fn check_reachability(
    generator: &TunedGenerator,
    strategy: Arc<dyn ModelStrategy>,
    metric: Arc<dyn Metric>,
    threshold: f64,
    criterion: Criterion,
    n_max: usize,
    replicates: usize,
    master_seed: u64,
) -> Result<Reachability, SearchError> {
    let orientation = metric.orientation();
    let settings = SimulationSettings {
        quantile_level: criterion.quantile_level(),
        ..SimulationSettings::new(master_seed)
    };
    let sim = Simulator::new(generator.clone(), strategy, vec![metric], settings)?;
    let summary = sim.run_at_n(n_max, replicates)?;
    Ok(match statistic(&summary, 0, criterion) {
        Some((stat, se)) => Reachability {
            reachable: orientation.sign() * (stat - threshold) + 2.0 * se >= 0.0,
            ceiling: Some(stat),
            se: Some(se),
            threshold,
        },
        None => Reachability {
            reachable: false,
            ceiling: None,
            se: None,
            threshold,
        },
    })
}

/// Default ideal value for deviation-mode targets.
fn default_ideal(kind: &str, generator: &TunedGenerator, validation_truth: &[f64]) -> Option<f64> {
    match (BuiltinMetric::from_name(kind)?, generator.spec.outcome_type) {
        (BuiltinMetric::Auc, OutcomeType::Binary) => Some(generator.achieved_performance),
        (BuiltinMetric::RSquared, OutcomeType::Continuous) => Some(generator.achieved_performance),
        (BuiltinMetric::CalibrationSlope, _) => Some(1.0),
        (BuiltinMetric::Mape, _) => Some(0.0),
        (BuiltinMetric::Brier, OutcomeType::Binary) => Some(
            validation_truth.iter().map(|p| p * (1.0 - p)).sum::<f64>()
                / validation_truth.len() as f64,
        ),
        _ => None,
    }
}

/// Solver with pluggable strategies and metrics.
pub struct Solver {
    config: SolverConfig,
    strategies: StrategyRegistry,
    metrics: MetricRegistry,
    tuned: Option<TunedGenerator>,
}

impl Solver {
    pub fn new(config: SolverConfig) -> Self {
        let ridge = config.l2_penalty.unwrap_or(DEFAULT_RIDGE_PENALTY);
        Solver {
            config,
            strategies: StrategyRegistry::with_builtins(ridge),
            metrics: MetricRegistry::default(),
            tuned: None,
        }
    }

    pub fn with_strategy(mut self, strategy: Arc<dyn ModelStrategy>) -> Self {
        self.strategies.register(strategy);
        self
    }

    pub fn with_metric(mut self, metric: Arc<dyn Metric>) -> Self {
        self.metrics.register(metric);
        self
    }

    /// Skips tuning and uses `generator`, whose spec must equal the config's.
    pub fn with_tuned_generator(mut self, generator: TunedGenerator) -> Self {
        self.tuned = Some(generator);
        self
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn run(self) -> Result<SampleSizeResult, SearchError> {
        let cfg = &self.config;
        cfg.validate()?;
        let strategy = self.strategies.get(&cfg.strategy_tag)?;
        let metric_impls: Vec<Arc<dyn Metric>> = cfg
            .metrics
            .iter()
            .map(|m| self.metrics.get(&m.kind))
            .collect::<Result<_, _>>()?;

        let generator = match self.tuned {
            Some(g) => {
                if g.spec != cfg.generator {
                    return Err(SearchError::InvalidConfig(
                        "cached generator does not match the configured spec".into(),
                    ));
                }
                g
            }
            None => {
                log::info!("tuning generator");
                tune_scale(&cfg.generator, cfg.mc_size, cfg.master_seed)?
            }
        };
        log::info!(
            "generator: intercept {:.4}, scale {:.4}, performance {:.4}",
            generator.intercept,
            generator.coefficient_scale,
            generator.achieved_performance
        );

        let settings = SimulationSettings {
            validation_size: cfg.validation_size,
            master_seed: cfg.master_seed,
            validation_mode: cfg.validation_mode,
            quantile_level: cfg.criterion.quantile_level(),
            bootstrap: cfg.bootstrap,
        };
        let sim = Simulator::new(generator.clone(), strategy, metric_impls.clone(), settings)?;

        let truth = match sim.shared_validation() {
            Some(v) => v.true_prob.clone(),
            None => {
                generator
                    .generate(cfg.validation_size, cfg.master_seed, StreamId::val(0, 0))
                    .true_prob
            }
        };
        let mut targets = Vec::with_capacity(cfg.metrics.len());
        for (spec, imp) in cfg.metrics.iter().zip(&metric_impls) {
            let orientation = spec.orientation.unwrap_or(imp.orientation());
            let ideal = default_ideal(&spec.kind, &generator, &truth);
            let t = spec.threshold(orientation, ideal).ok_or_else(|| {
                SearchError::InvalidConfig(format!(
                    "metric {} needs an explicit ideal value for a deviation target",
                    spec.kind
                ))
            })?;
            targets.push((spec.kind.clone(), orientation, t));
        }

        let n_min = cfg.n_min();
        let n_max = cfg.n_max;
        let mut history: BTreeMap<usize, PerformanceSummary> = BTreeMap::new();
        let mut evaluations = Vec::new();
        let mut cost: u64 = 0;

        let mut evaluate = |n: usize,
                            phase: Phase,
                            history: &mut BTreeMap<usize, PerformanceSummary>|
         -> Result<(), SearchError> {
            log::info!("evaluating n = {n} ({phase:?}, R = {})", cfg.r_search);
            let summary = sim.run_at_n(n, cfg.r_search)?;
            cost += cfg.r_search as u64;
            evaluations.push(EvaluationRecord {
                n,
                replicates: cfg.r_search,
                phase,
            });
            history.insert(n, summary);
            Ok(())
        };

        let mut seeds: Vec<usize> = log_space(n_min as f64, n_max as f64, SEED_POINTS)
            .into_iter()
            .map(|x| (x.round() as usize).clamp(n_min, n_max))
            .collect();
        seeds.dedup();
        for n in seeds {
            evaluate(n, Phase::Seed, &mut history)?;
        }

        let fit_all = |history: &BTreeMap<usize, PerformanceSummary>| {
            let summaries: Vec<PerformanceSummary> = history.values().cloned().collect();
            targets
                .iter()
                .enumerate()
                .map(|(j, (_, orientation, t))| {
                    let (obs, failed) = curve_observations(&summaries, j, cfg.criterion);
                    solve_curve(&obs, failed, *t, *orientation, n_min, n_max)
                })
                .collect::<Vec<_>>()
        };

        let mut previous: Option<Vec<MetricCrossing>> = None;
        let mut stable = 0;
        let mut converged = false;
        let mut iterations = 0;
        for iteration in 0..cfg.max_iterations {
            iterations = iteration + 1;
            let fits = fit_all(&history);
            let crossings: Vec<MetricCrossing> = fits.iter().map(|f| f.0).collect();
            let settled = match &previous {
                None => false,
                Some(prev) => crossings.iter().zip(prev).all(|(c, p)| {
                    c.status != MetricStatus::Solved
                        || match (c.n_hat, p.n_hat, p.status) {
                            (Some(a), Some(b), MetricStatus::Solved) => {
                                (a - b).abs() / b < cfg.tolerance
                            }
                            _ => false,
                        }
                }),
            };
            stable = if settled { stable + 1 } else { 0 };
            previous = Some(crossings.clone());
            if stable >= 2 || crossings.iter().all(|c| c.status != MetricStatus::Solved) {
                converged = true;
                iterations -= 1;
                break;
            }

            // The least certain solved metric drives the next evaluation.
            let (idx, c) = crossings
                .iter()
                .enumerate()
                .filter(|(_, c)| c.status == MetricStatus::Solved)
                .max_by(|(_, a), (_, b)| {
                    let w = |c: &MetricCrossing| (c.ci_high.unwrap() / c.ci_low.unwrap()).ln();
                    w(a).total_cmp(&w(b))
                        .then(a.n_hat.unwrap().total_cmp(&b.n_hat.unwrap()))
                })
                .expect("at least one solved metric");
            let exploit = c.n_hat.unwrap();
            let explore = fits[idx].1.as_ref().map(|model| {
                let (lo, hi) = (c.ci_low.unwrap(), c.ci_high.unwrap());
                if hi <= lo {
                    return lo;
                }
                log_space(lo, hi, EXPLORATION_GRID)
                    .into_iter()
                    .map(|n| (n, model.predict(n).1))
                    .fold((lo, f64::NEG_INFINITY), |best, (n, sd)| {
                        if sd > best.1 {
                            (n, sd)
                        } else {
                            best
                        }
                    })
                    .0
            });
            let mut candidates = vec![(exploit, Phase::Exploit)];
            if let Some(e) = explore {
                candidates.push((e, Phase::Explore));
            }
            if iteration % 2 == 1 {
                candidates.reverse();
            }
            let fresh = candidates.into_iter().find_map(|(x, phase)| {
                let n = (x.round() as usize).clamp(n_min, n_max);
                let duplicate = history
                    .keys()
                    .any(|&m| ((n as f64) / (m as f64)).ln().abs() < DUPLICATE_LOG_GAP);
                (!duplicate).then_some((n, phase))
            });
            match fresh {
                Some((n, phase)) => evaluate(n, phase, &mut history)?,
                None => log::info!("no new size to evaluate at iteration {iteration}"),
            }
        }

        let summaries: Vec<PerformanceSummary> = history.values().cloned().collect();
        let fits = fit_all(&history);
        let mut flags = Vec::new();
        if !converged {
            flags.push(ResultFlag::BudgetExhausted);
        }

        let mut results = Vec::with_capacity(targets.len());
        for (j, ((name, orientation, t), (crossing, model))) in
            targets.iter().zip(fits).enumerate()
        {
            let (observations, _) = curve_observations(&summaries, j, cfg.criterion);
            let ceiling = summaries.iter().rev().find_map(|s| {
                statistic(s, j, cfg.criterion).map(|(statistic, se)| Ceiling {
                    n: s.n,
                    statistic,
                    se,
                })
            });
            results.push(MetricResult {
                metric: name.clone(),
                orientation: *orientation,
                threshold: *t,
                status: crossing.status,
                n_required: crossing.n_hat.map(|n| n.ceil() as u64),
                ci_low: crossing.ci_low.map(|n| n.ceil() as u64),
                ci_high: crossing.ci_high.map(|n| n.ceil() as u64),
                gp: model
                    .as_ref()
                    .map(|m| m.diagnostics(*orientation, n_min as f64, n_max as f64)),
                power_law: fit_power_law_oriented(&observations, *orientation).ok(),
                observations,
                ceiling,
            });
        }
        if results.iter().any(|r| r.status == MetricStatus::Unreachable) {
            flags.push(ResultFlag::SomeMetricsUnreachable);
        }
        let n_required = results.iter().filter_map(|r| r.n_required).max();

        let confirmation = match n_required {
            Some(n) => {
                let n = n as usize;
                log::info!("confirming at n = {n} (R = {})", cfg.r_confirm);
                let summary = sim.run_replicates(n, CONFIRM_STREAM_OFFSET, cfg.r_confirm)?;
                cost += cfg.r_confirm as u64;
                evaluations.push(EvaluationRecord {
                    n,
                    replicates: cfg.r_confirm,
                    phase: Phase::Confirm,
                });
                let checks: Vec<ConfirmationCheck> = results
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| r.status != MetricStatus::Unreachable)
                    .map(|(j, r)| {
                        let stat = statistic(&summary, j, cfg.criterion);
                        let passed = stat.is_some_and(|(v, se)| {
                            r.orientation.sign() * (v - r.threshold) + se >= 0.0
                        });
                        ConfirmationCheck {
                            metric: r.metric.clone(),
                            statistic: stat.map(|s| s.0),
                            se: stat.map(|s| s.1),
                            threshold: r.threshold,
                            passed,
                        }
                    })
                    .collect();
                if checks.iter().any(|c| !c.passed) {
                    flags.push(ResultFlag::NotConfirmed);
                }
                Some(Confirmation {
                    n,
                    replicates: cfg.r_confirm,
                    checks,
                    summary,
                })
            }
            None => None,
        };

        let baselines = Baselines {
            epv: match cfg.generator.outcome_type {
                OutcomeType::Binary => {
                    let input = EpvInput {
                        p: cfg.generator.p(),
                        prevalence: cfg.generator.target_prevalence,
                        epv: cfg.epv,
                    };
                    epv_sample_size(&input).ok().map(|n| EpvReport { input, n })
                }
                OutcomeType::Continuous => None,
            },
        };

        Ok(SampleSizeResult {
            criterion: cfg.criterion,
            strategy_tag: cfg.strategy_tag.clone(),
            master_seed: cfg.master_seed,
            n_min,
            n_max,
            n_required,
            metrics: results,
            flags,
            converged,
            iterations,
            total_replicate_fits: cost,
            evaluations,
            confirmation,
            generator,
            baselines,
            summaries,
        })
    }
}

/// Runs the full solver with the built-in strategies and metrics.
pub fn solve_sample_size(config: &SolverConfig) -> Result<SampleSizeResult, SearchError> {
    Solver::new(config.clone()).run()
}

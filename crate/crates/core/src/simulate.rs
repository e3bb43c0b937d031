//! Distribution of validated performance at one development-sample size.
//!
//! For each replicate `r` at size `n`, a development sample is drawn on stream
//! `dev(n, r)`, the strategy is fitted, and every metric is evaluated on a
//! large independent validation sample. By default one validation sample
//! (stream `val(0, 0)`) is shared by all replicates at all `n`.
//!
//! Failure policy: a replicate whose fit errors, does not converge, or whose
//! metric cannot be computed is recorded as a failure for that metric. Failures
//! are excluded from the mean and sd. For the quantile they count as
//! unsatisfying: each failure takes the worst successful value (minimum for
//! maximized metrics, maximum for minimized ones) so it sorts to the bad end.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::{Dataset, OutcomeType, TunedGenerator};
use crate::math::mean_sd;
use crate::metrics::{Metric, Orientation};
use crate::models::ModelStrategy;
use crate::rng::{derive_seed, stream_rng, StreamId};

pub const DEFAULT_VALIDATION_SIZE: usize = 50_000;
/// Bootstrap resamples for the quantile standard error.
pub const DEFAULT_BOOTSTRAP: usize = 200;
pub const MIN_BOOTSTRAP: usize = 100;
/// Fewest values `quantile_se` accepts.
pub const MIN_SE_VALUES: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulateError {
    #[error("need at least 2 replicates, got {0}")]
    TooFewReplicates(usize),
    #[error("validation sample of {size} rows has a single outcome class")]
    ValidationDegenerate { size: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("need at least {needed} values, got {got}")]
    TooFewValues { needed: usize, got: usize },
    #[error("quantile level {0} outside [0, 1]")]
    InvalidQuantile(f64),
    #[error("need at least {MIN_BOOTSTRAP} bootstrap resamples, got {0}")]
    TooFewResamples(usize),
    #[error("no metrics configured")]
    NoMetrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ValidationMode {
    /// One validation sample reused by every replicate at every `n`.
    #[default]
    Shared,
    /// A fresh validation sample per replicate.
    Fresh,
}

/// Empirical quantile with linear interpolation between order statistics:
/// `h = (R - 1) q + 1`, `v[floor h] + (h - floor h) (v[ceil h] - v[floor h])`
/// on the 1-based sorted values.
pub fn empirical_quantile(values: &[f64], q: f64) -> Result<f64, SimulateError> {
    if values.is_empty() {
        return Err(SimulateError::EmptyInput);
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(SimulateError::InvalidQuantile(q));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&sorted, q))
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor();
    let i = lo as usize;
    let frac = h - lo;
    if frac == 0.0 {
        sorted[i]
    } else {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    }
}

/// Bootstrap standard deviation of [`empirical_quantile`] over `resamples`
/// resamples drawn with replacement.
pub fn quantile_se(
    values: &[f64],
    q: f64,
    resamples: usize,
    seed: u64,
) -> Result<f64, SimulateError> {
    if values.len() < MIN_SE_VALUES {
        return Err(SimulateError::TooFewValues {
            needed: MIN_SE_VALUES,
            got: values.len(),
        });
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(SimulateError::InvalidQuantile(q));
    }
    if resamples < MIN_BOOTSTRAP {
        return Err(SimulateError::TooFewResamples(resamples));
    }
    let mut rng = stream_rng(seed, StreamId::boot(0, 0));
    let mut buf = vec![0.0; values.len()];
    let estimates: Vec<f64> = (0..resamples)
        .map(|_| {
            for slot in buf.iter_mut() {
                *slot = values[rng.random_range(0..values.len())];
            }
            buf.sort_by(f64::total_cmp);
            quantile_sorted(&buf, q)
        })
        .collect();
    Ok(mean_sd(&estimates).1)
}

/// Metric values of one replicate fit, in configured-metric order; `None`
/// marks a failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceSample {
    pub n: usize,
    pub replicate: usize,
    pub values: Vec<Option<f64>>,
    pub model_converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: String,
    pub orientation: Orientation,
    pub failures: usize,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    /// Assurance quantile: level `quantile_level` for maximized metrics and
    /// `1 - quantile_level` for minimized ones, so it always sits at the bad
    /// tail. Failures are counted at the bad end.
    pub quantile: Option<f64>,
    pub quantile_se: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

impl MetricSummary {
    pub fn successes(&self, replicates: usize) -> usize {
        replicates - self.failures
    }

    /// Standard error of the mean over successful replicates.
    pub fn mean_se(&self, replicates: usize) -> Option<f64> {
        let k = self.successes(replicates);
        if k < 2 {
            return None;
        }
        self.sd.map(|sd| sd / (k as f64).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceSummary {
    pub n: usize,
    pub replicates: usize,
    /// Quantile level (1 - assurance).
    pub quantile_level: f64,
    pub metrics: Vec<MetricSummary>,
    #[serde(skip)]
    pub samples: Vec<PerformanceSample>,
}

impl PerformanceSummary {
    pub fn metric(&self, name: &str) -> Option<&MetricSummary> {
        self.metrics.iter().find(|m| m.metric == name)
    }
}

/// Summarizes replicate samples. `metrics` gives each column's name and
/// orientation; the bootstrap for the quantile SE of column `j` uses stream
/// `boot(n, j)` under `master_seed`.
pub fn summarize(
    n: usize,
    samples: Vec<PerformanceSample>,
    metrics: &[(String, Orientation)],
    quantile_level: f64,
    bootstrap: usize,
    master_seed: u64,
) -> PerformanceSummary {
    let replicates = samples.len();
    let summaries = metrics
        .iter()
        .enumerate()
        .map(|(j, (name, orientation))| {
            let ok: Vec<f64> = samples.iter().filter_map(|s| s.values[j]).collect();
            let failures = replicates - ok.len();
            if ok.is_empty() {
                return MetricSummary {
                    metric: name.clone(),
                    orientation: *orientation,
                    failures,
                    mean: None,
                    sd: None,
                    quantile: None,
                    quantile_se: None,
                    min: None,
                    max: None,
                };
            }
            let (mean, sd) = mean_sd(&ok);
            let min = ok.iter().copied().fold(f64::INFINITY, f64::min);
            let max = ok.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let worst = match orientation {
                Orientation::Maximize => min,
                Orientation::Minimize => max,
            };
            let padded: Vec<f64> = samples
                .iter()
                .map(|s| s.values[j].unwrap_or(worst))
                .collect();
            let level = match orientation {
                Orientation::Maximize => quantile_level,
                Orientation::Minimize => 1.0 - quantile_level,
            };
            let quantile = empirical_quantile(&padded, level).ok();
            let seed = derive_seed(master_seed, StreamId::boot(n as u64, j as u64));
            let quantile_se = quantile_se(&padded, level, bootstrap, seed).ok();
            MetricSummary {
                metric: name.clone(),
                orientation: *orientation,
                failures,
                mean: Some(mean),
                sd: Some(sd),
                quantile,
                quantile_se,
                min: Some(min),
                max: Some(max),
            }
        })
        .collect();
    PerformanceSummary {
        n,
        replicates,
        quantile_level,
        metrics: summaries,
        samples,
    }
}

/// Run-level settings shared by every `n` evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSettings {
    pub validation_size: usize,
    pub master_seed: u64,
    pub validation_mode: ValidationMode,
    pub quantile_level: f64,
    pub bootstrap: usize,
}

impl SimulationSettings {
    pub fn new(master_seed: u64) -> Self {
        SimulationSettings {
            validation_size: DEFAULT_VALIDATION_SIZE,
            master_seed,
            validation_mode: ValidationMode::Shared,
            quantile_level: 0.2,
            bootstrap: DEFAULT_BOOTSTRAP,
        }
    }
}

/// Evaluates learning-curve points for one generator, strategy and metric set.
pub struct Simulator {
    generator: TunedGenerator,
    strategy: Arc<dyn ModelStrategy>,
    metrics: Vec<Arc<dyn Metric>>,
    settings: SimulationSettings,
    shared_validation: Option<Dataset>,
}

impl Simulator {
    pub fn new(
        generator: TunedGenerator,
        strategy: Arc<dyn ModelStrategy>,
        metrics: Vec<Arc<dyn Metric>>,
        settings: SimulationSettings,
    ) -> Result<Self, SimulateError> {
        if metrics.is_empty() {
            return Err(SimulateError::NoMetrics);
        }
        let shared_validation = match settings.validation_mode {
            ValidationMode::Shared => {
                let val = generator.generate(
                    settings.validation_size,
                    settings.master_seed,
                    StreamId::val(0, 0),
                );
                check_validation(&val)?;
                Some(val)
            }
            ValidationMode::Fresh => None,
        };
        Ok(Simulator {
            generator,
            strategy,
            metrics,
            settings,
            shared_validation,
        })
    }

    pub fn settings(&self) -> &SimulationSettings {
        &self.settings
    }

    pub fn generator(&self) -> &TunedGenerator {
        &self.generator
    }

    pub fn metric_columns(&self) -> Vec<(String, Orientation)> {
        self.metrics
            .iter()
            .map(|m| (m.name().to_string(), m.orientation()))
            .collect()
    }

    pub fn shared_validation(&self) -> Option<&Dataset> {
        self.shared_validation.as_ref()
    }

    /// Performance distribution over `replicates` development draws of size
    /// `n`. Replicates run on the current rayon pool; results are independent
    /// of the pool size.
    pub fn run_at_n(&self, n: usize, replicates: usize) -> Result<PerformanceSummary, SimulateError> {
        self.run_replicates(n, 0, replicates)
    }

    /// As [`Simulator::run_at_n`] but on replicate streams
    /// `first..first + replicates`, so a later run at the same `n` can use
    /// fresh development draws.
    pub fn run_replicates(
        &self,
        n: usize,
        first: usize,
        replicates: usize,
    ) -> Result<PerformanceSummary, SimulateError> {
        if replicates < 2 {
            return Err(SimulateError::TooFewReplicates(replicates));
        }
        let floor = (10 * n).max(10_000);
        if self.settings.validation_size < floor {
            log::warn!(
                "validation size {} below the recommended {floor} for n = {n}",
                self.settings.validation_size
            );
        }
        let samples: Vec<PerformanceSample> = (first..first + replicates)
            .into_par_iter()
            .map(|r| self.replicate(n, r))
            .collect();
        Ok(summarize(
            n,
            samples,
            &self.metric_columns(),
            self.settings.quantile_level,
            self.settings.bootstrap,
            self.settings.master_seed,
        ))
    }

    fn replicate(&self, n: usize, r: usize) -> PerformanceSample {
        let seed = self.settings.master_seed;
        let stream = StreamId::dev(n as u64, r as u64);
        let failed = |converged: bool| PerformanceSample {
            n,
            replicate: r,
            values: vec![None; self.metrics.len()],
            model_converged: converged,
        };
        let dev = self.generator.generate(n, seed, stream);
        let model = match self.strategy.fit(&dev, derive_seed(seed, stream)) {
            Ok(m) if m.converged => m,
            _ => return failed(false),
        };
        let fresh;
        let val = match &self.shared_validation {
            Some(v) => v,
            None => {
                fresh = self.generator.generate(
                    self.settings.validation_size,
                    seed,
                    StreamId::val(n as u64, r as u64 + 1),
                );
                if check_validation(&fresh).is_err() {
                    return failed(true);
                }
                &fresh
            }
        };
        let predicted = match self.strategy.predict(&model, &val.predictors) {
            Ok(p) => p,
            Err(_) => return failed(true),
        };
        let values = self
            .metrics
            .iter()
            .map(|m| {
                m.evaluate(&predicted, &val.outcomes, &val.true_prob)
                    .ok()
                    .filter(|v| v.is_finite())
            })
            .collect();
        PerformanceSample {
            n,
            replicate: r,
            values,
            model_converged: true,
        }
    }
}

fn check_validation(val: &Dataset) -> Result<(), SimulateError> {
    if val.outcome_type == OutcomeType::Binary {
        let events: f64 = val.outcomes.iter().sum();
        if events == 0.0 || events == val.n() as f64 {
            return Err(SimulateError::ValidationDegenerate { size: val.n() });
        }
    }
    Ok(())
}

/// One-shot evaluation at `n` with a shared validation sample.
pub fn run_at_n(
    generator: &TunedGenerator,
    strategy: Arc<dyn ModelStrategy>,
    metrics: Vec<Arc<dyn Metric>>,
    n: usize,
    replicates: usize,
    validation_size: usize,
    master_seed: u64,
) -> Result<PerformanceSummary, SimulateError> {
    let settings = SimulationSettings {
        validation_size,
        ..SimulationSettings::new(master_seed)
    };
    Simulator::new(generator.clone(), strategy, metrics, settings)?.run_at_n(n, replicates)
}

//! Performance measures evaluated on validation predictions.
//!
//! Every metric sees `(predicted, labels, oracle)`: model predictions, observed
//! outcomes, and the generator's true probabilities (or conditional means).
//! Built-in metrics are addressed by name in configuration files; custom
//! metrics implement [`Metric`] and are added to a [`MetricRegistry`].

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::logit;
use crate::models::{irls, ModelError, DEFAULT_MAX_ITERATIONS};

/// Sample variance of the logit below which calibration slope is undefined.
pub const MIN_LOGIT_VARIANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("all labels belong to one class")]
    OneClassOnly,
    #[error("linear predictor has (near) zero variance")]
    DegenerateLinearPredictor,
    #[error("recalibration fit did not converge")]
    NonConverged,
    #[error("length mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("outcomes have zero variance")]
    ZeroVariance,
    #[error("empty input")]
    EmptyInput,
    #[error("label {0} is not 0 or 1")]
    InvalidLabel(f64),
    #[error("predicted probability {0} outside (0, 1)")]
    InvalidProbability(f64),
    #[error("unknown metric {0:?}")]
    UnknownMetric(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0}")]
    Other(String),
}

/// Which direction of a metric is better.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Maximize,
    Minimize,
}

impl Orientation {
    /// `value >= threshold` when maximizing, `value <= threshold` when minimizing.
    pub fn satisfied(self, value: f64, threshold: f64) -> bool {
        match self {
            Orientation::Maximize => value >= threshold,
            Orientation::Minimize => value <= threshold,
        }
    }

    /// +1 for maximize, -1 for minimize: multiplying by it turns any metric
    /// into a larger-is-better one.
    pub fn sign(self) -> f64 {
        match self {
            Orientation::Maximize => 1.0,
            Orientation::Minimize => -1.0,
        }
    }
}

pub trait Metric: Send + Sync {
    fn name(&self) -> &str;
    fn orientation(&self) -> Orientation;
    fn evaluate(
        &self,
        predicted: &[f64],
        labels: &[f64],
        oracle: &[f64],
    ) -> Result<f64, MetricError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BuiltinMetric {
    Auc,
    CalibrationSlope,
    Mape,
    Brier,
    RSquared,
}

impl BuiltinMetric {
    pub const ALL: [BuiltinMetric; 5] = [
        BuiltinMetric::Auc,
        BuiltinMetric::CalibrationSlope,
        BuiltinMetric::Mape,
        BuiltinMetric::Brier,
        BuiltinMetric::RSquared,
    ];

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }

    pub fn name(self) -> &'static str {
        match self {
            BuiltinMetric::Auc => "auc",
            BuiltinMetric::CalibrationSlope => "calibration_slope",
            BuiltinMetric::Mape => "mape",
            BuiltinMetric::Brier => "brier",
            BuiltinMetric::RSquared => "r_squared",
        }
    }

    pub fn orientation(self) -> Orientation {
        match self {
            BuiltinMetric::Mape | BuiltinMetric::Brier => Orientation::Minimize,
            _ => Orientation::Maximize,
        }
    }
}

impl Metric for BuiltinMetric {
    fn name(&self) -> &str {
        BuiltinMetric::name(*self)
    }

    fn orientation(&self) -> Orientation {
        BuiltinMetric::orientation(*self)
    }

    fn evaluate(
        &self,
        predicted: &[f64],
        labels: &[f64],
        oracle: &[f64],
    ) -> Result<f64, MetricError> {
        match self {
            BuiltinMetric::Auc => auc(predicted, labels),
            BuiltinMetric::CalibrationSlope => calibration_slope(predicted, labels),
            BuiltinMetric::Mape => mape(predicted, oracle),
            BuiltinMetric::Brier => brier(predicted, labels),
            BuiltinMetric::RSquared => r_squared(predicted, labels),
        }
    }
}

/// Metrics by name, built-ins preloaded.
#[derive(Clone)]
pub struct MetricRegistry {
    metrics: BTreeMap<String, Arc<dyn Metric>>,
}

impl MetricRegistry {
    pub fn register(&mut self, metric: Arc<dyn Metric>) {
        self.metrics.insert(metric.name().to_string(), metric);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Metric>, MetricError> {
        self.metrics
            .get(name)
            .cloned()
            .ok_or_else(|| MetricError::UnknownMetric(name.to_string()))
    }
}

impl Default for MetricRegistry {
    fn default() -> Self {
        let mut reg = MetricRegistry {
            metrics: BTreeMap::new(),
        };
        for m in BuiltinMetric::ALL {
            reg.register(Arc::new(m));
        }
        reg
    }
}

/// How the acceptable level `M*` is given.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetMode {
    /// `M*` directly.
    Absolute { threshold: f64 },
    /// `M* = ideal - deviation` (maximize) or `ideal + deviation` (minimize).
    /// A missing `ideal` is taken from the tuned generator.
    Deviation {
        #[serde(default)]
        ideal: Option<f64>,
        deviation: f64,
    },
}

/// One configured metric and its target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub kind: String,
    /// Defaults to the metric's own orientation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orientation: Option<Orientation>,
    #[serde(flatten)]
    pub target: TargetMode,
}

impl MetricSpec {
    pub fn absolute(kind: &str, threshold: f64) -> Self {
        MetricSpec {
            kind: kind.to_string(),
            orientation: None,
            target: TargetMode::Absolute { threshold },
        }
    }

    pub fn deviation(kind: &str, ideal: Option<f64>, deviation: f64) -> Self {
        MetricSpec {
            kind: kind.to_string(),
            orientation: None,
            target: TargetMode::Deviation { ideal, deviation },
        }
    }

    /// `M*` given the orientation and the ideal to use when the spec has none.
    pub fn threshold(&self, orientation: Orientation, default_ideal: Option<f64>) -> Option<f64> {
        match self.target {
            TargetMode::Absolute { threshold } => Some(threshold),
            TargetMode::Deviation { ideal, deviation } => {
                let ideal = ideal.or(default_ideal)?;
                Some(match orientation {
                    Orientation::Maximize => ideal - deviation,
                    Orientation::Minimize => ideal + deviation,
                })
            }
        }
    }
}

fn check_lengths(left: &[f64], right: &[f64]) -> Result<(), MetricError> {
    if left.len() != right.len() {
        return Err(MetricError::DimensionMismatch {
            left: left.len(),
            right: right.len(),
        });
    }
    if left.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    Ok(())
}

fn count_positives(labels: &[f64]) -> Result<usize, MetricError> {
    let mut positives = 0;
    for &y in labels {
        if y == 1.0 {
            positives += 1;
        } else if y != 0.0 {
            return Err(MetricError::InvalidLabel(y));
        }
    }
    if positives == 0 || positives == labels.len() {
        return Err(MetricError::OneClassOnly);
    }
    Ok(positives)
}

/// Area under the ROC curve as the Mann–Whitney statistic, ties counting one
/// half, via midranks.
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64, MetricError> {
    check_lengths(scores, labels)?;
    let n_pos = count_positives(labels)?;
    let n_neg = labels.len() - n_pos;

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // 1-based ranks start+1 ..= end share the midrank.
        let midrank = (start + end + 1) as f64 / 2.0;
        let tied_pos = order[start..end].iter().filter(|&&i| labels[i] == 1.0).count();
        rank_sum += midrank * tied_pos as f64;
        start = end;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Slope `b` of the logistic recalibration `labels ~ a + b * logit(predicted)`.
pub fn calibration_slope(predicted: &[f64], labels: &[f64]) -> Result<f64, MetricError> {
    check_lengths(predicted, labels)?;
    count_positives(labels)?;
    let mut eta = Vec::with_capacity(predicted.len());
    for &p in predicted {
        if !(p > 0.0 && p < 1.0) {
            return Err(MetricError::InvalidProbability(p));
        }
        eta.push(logit(p));
    }
    let n = eta.len() as f64;
    let mean = eta.iter().sum::<f64>() / n;
    let var = eta.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    if var < MIN_LOGIT_VARIANCE {
        return Err(MetricError::DegenerateLinearPredictor);
    }
    let x = DMatrix::from_column_slice(eta.len(), 1, &eta);
    let fit = irls(&x, labels, 0.0, DEFAULT_MAX_ITERATIONS)?;
    if !fit.converged || fit.separation {
        return Err(MetricError::NonConverged);
    }
    Ok(fit.beta[1])
}

/// Mean absolute difference between predictions and oracle values.
pub fn mape(predicted: &[f64], oracle: &[f64]) -> Result<f64, MetricError> {
    check_lengths(predicted, oracle)?;
    Ok(predicted
        .iter()
        .zip(oracle)
        .map(|(p, o)| (p - o).abs())
        .sum::<f64>()
        / predicted.len() as f64)
}

pub fn brier(predicted: &[f64], labels: &[f64]) -> Result<f64, MetricError> {
    check_lengths(predicted, labels)?;
    Ok(predicted
        .iter()
        .zip(labels)
        .map(|(p, y)| (p - y) * (p - y))
        .sum::<f64>()
        / predicted.len() as f64)
}

/// `1 - SS_res / SS_tot`.
pub fn r_squared(predicted: &[f64], outcomes: &[f64]) -> Result<f64, MetricError> {
    check_lengths(predicted, outcomes)?;
    let mean = outcomes.iter().sum::<f64>() / outcomes.len() as f64;
    let ss_tot: f64 = outcomes.iter().map(|y| (y - mean).powi(2)).sum();
    if ss_tot <= 0.0 {
        return Err(MetricError::ZeroVariance);
    }
    let ss_res: f64 = predicted
        .iter()
        .zip(outcomes)
        .map(|(p, y)| (y - p).powi(2))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_edge_cases() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[0.0, 0.0, 1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(auc(&[0.3; 6], &[0.0, 1.0, 0.0, 1.0, 1.0, 0.0]).unwrap(), 0.5);
        assert_eq!(
            auc(&[0.1, 0.4, 0.35, 0.8], &[0.0, 0.0, 1.0, 1.0]).unwrap(),
            0.75
        );
        assert_eq!(auc(&[0.1, 0.2], &[1.0, 1.0]), Err(MetricError::OneClassOnly));
        assert_eq!(auc(&[0.1, 0.2], &[1.0, 2.0]), Err(MetricError::InvalidLabel(2.0)));
        assert!(matches!(
            auc(&[0.1], &[1.0, 0.0]),
            Err(MetricError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn slope_of_constant_predictions_is_degenerate() {
        let labels = [0.0, 1.0, 0.0, 1.0, 0.0];
        assert_eq!(
            calibration_slope(&[0.3; 5], &labels),
            Err(MetricError::DegenerateLinearPredictor)
        );
        assert_eq!(
            calibration_slope(&[0.3, 1.0, 0.2, 0.4, 0.5], &labels),
            Err(MetricError::InvalidProbability(1.0))
        );
    }

    #[test]
    fn slope_of_perfectly_separating_predictions_is_nonconverged() {
        let err = calibration_slope(&[0.1, 0.2, 0.8, 0.9], &[0.0, 0.0, 1.0, 1.0]).unwrap_err();
        assert_eq!(err, MetricError::NonConverged);
    }

    #[test]
    fn mape_and_brier_hand_values() {
        assert_eq!(mape(&[0.2, 0.5], &[0.2, 0.5]).unwrap(), 0.0);
        assert!((mape(&[0.2, 0.5], &[0.1, 0.9]).unwrap() - 0.25).abs() < 1e-12);
        let shifted: Vec<f64> = [0.1, 0.4, 0.7].iter().map(|v| v + 0.05).collect();
        assert!((mape(&shifted, &[0.1, 0.4, 0.7]).unwrap() - 0.05).abs() < 1e-12);
        assert_eq!(brier(&[1.0, 0.0, 1.0], &[1.0, 0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(brier(&[0.5; 4], &[1.0, 0.0, 0.0, 0.0]).unwrap(), 0.25);
        assert!((brier(&[0.8, 0.3], &[1.0, 0.0]).unwrap() - 0.065).abs() < 1e-12);
        assert!(matches!(brier(&[], &[]), Err(MetricError::EmptyInput)));
    }

    #[test]
    fn r_squared_limits() {
        let y = [1.0, 2.5, -0.5, 4.0];
        assert_eq!(r_squared(&y, &y).unwrap(), 1.0);
        let mean = y.iter().sum::<f64>() / 4.0;
        assert!(r_squared(&[mean; 4], &y).unwrap().abs() < 1e-15);
        assert_eq!(r_squared(&[1.0; 3], &[2.0; 3]), Err(MetricError::ZeroVariance));
    }

    #[test]
    fn deviation_thresholds_follow_orientation() {
        let auc = MetricSpec::deviation("auc", None, 0.02);
        assert!((auc.threshold(Orientation::Maximize, Some(0.82)).unwrap() - 0.80).abs() < 1e-12);
        let mape = MetricSpec::deviation("mape", Some(0.0), 0.05);
        assert_eq!(mape.threshold(Orientation::Minimize, None), Some(0.05));
        assert_eq!(auc.threshold(Orientation::Maximize, None), None);
        assert!(Orientation::Maximize.satisfied(0.9, 0.9));
        assert!(Orientation::Minimize.satisfied(0.04, 0.05));
        assert!(!Orientation::Minimize.satisfied(0.06, 0.05));
    }

    #[test]
    fn metric_spec_json_forms() {
        let a: MetricSpec =
            serde_json::from_str(r#"{"kind": "calibration_slope", "threshold": 0.9}"#).unwrap();
        assert_eq!(a, MetricSpec::absolute("calibration_slope", 0.9));
        let d: MetricSpec = serde_json::from_str(r#"{"kind": "auc", "deviation": 0.02}"#).unwrap();
        assert_eq!(d, MetricSpec::deviation("auc", None, 0.02));
        let back: MetricSpec = serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn registry_resolves_builtins() {
        let reg = MetricRegistry::default();
        for m in BuiltinMetric::ALL {
            assert_eq!(reg.get(m.name()).unwrap().orientation(), m.orientation());
        }
        assert!(reg.get("net_benefit").is_err());
    }
}

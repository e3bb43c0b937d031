//! Prediction models fitted to development data.
//!
//! Built-in strategies are maximum-likelihood logistic regression (plain or
//! ridge-penalized, fitted by iteratively reweighted least squares) and ordinary
//! least squares. Other model classes plug in through [`ModelStrategy`] and are
//! registered under a tag in a [`StrategyRegistry`].

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::{Dataset, OutcomeType};
use crate::math::sigmoid;

/// Lower clamp for predicted probabilities; the upper clamp is `1 - PROB_CLAMP`.
pub const PROB_CLAMP: f64 = 1e-12;
pub const DEFAULT_MAX_ITERATIONS: usize = 100;
/// Linear-predictor magnitude beyond which a still-improving fit is treated as
/// separated.
pub const SEPARATION_ETA: f64 = 30.0;

const COEF_TOLERANCE: f64 = 1e-8;
/// Relative to the current penalized deviance.
const DEVIANCE_TOLERANCE: f64 = 1e-10;
const MAX_STEP_HALVINGS: usize = 40;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("cannot fit a model to an empty dataset")]
    EmptyData,
    #[error("degenerate design: {0}")]
    DegenerateDesign(String),
    #[error("dimension mismatch: model has {expected} predictors, input has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("strategy {strategy} does not handle {outcome:?} outcomes")]
    WrongOutcomeType {
        strategy: String,
        outcome: OutcomeType,
    },
    #[error("unknown model strategy {0:?}")]
    UnknownStrategy(String),
    #[error("{0}")]
    Other(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Logit,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Set when the fit stopped because the data are (quasi-)separated.
    pub separation: bool,
    pub strategy_tag: String,
    pub l2_penalty: f64,
    pub link: Link,
}

impl FittedModel {
    pub fn p(&self) -> usize {
        self.coefficients.len()
    }
}

/// Predictions from `model` for each row of `predictors`: clamped
/// probabilities for the logit link, the affine map for the identity link.
pub fn predict(model: &FittedModel, predictors: &DMatrix<f64>) -> Result<Vec<f64>, ModelError> {
    if predictors.ncols() != model.p() {
        return Err(ModelError::DimensionMismatch {
            expected: model.p(),
            got: predictors.ncols(),
        });
    }
    let beta = DVector::from_column_slice(&model.coefficients);
    let eta = predictors * beta;
    Ok(eta
        .iter()
        .map(|e| {
            let e = e + model.intercept;
            match model.link {
                Link::Logit => sigmoid(e).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP),
                Link::Identity => e,
            }
        })
        .collect())
}

/// `[1 | X]`.
fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.clone().insert_column(0, 1.0)
}

/// `A A'` for a `k x n` column-major `a`.
fn gram(a: &[f64], k: usize, n: usize) -> DMatrix<f64> {
    assert_eq!(a.len(), k * n);
    let mut c = DMatrix::<f64>::zeros(k, k);
    // SAFETY: `a` holds k * n elements addressed with strides (1, k) for A
    // and (k, 1) for A'; `c` is k x k column-major.
    unsafe {
        matrixmultiply::dgemm(
            k,
            n,
            k,
            1.0,
            a.as_ptr(),
            1,
            k as isize,
            a.as_ptr(),
            k as isize,
            1,
            0.0,
            c.as_mut_ptr(),
            1,
            k as isize,
        );
    }
    c
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Penalized deviance `-2 loglik + l2 * |coefficients|²` (intercept excluded).
fn penalized_deviance(eta: &DVector<f64>, y: &[f64], beta: &DVector<f64>, l2: f64) -> f64 {
    let loglik: f64 = eta
        .iter()
        .zip(y)
        .map(|(e, yi)| yi * e - softplus(*e))
        .sum();
    let penalty: f64 = beta.iter().skip(1).map(|b| b * b).sum();
    -2.0 * loglik + l2 * penalty
}

#[derive(Debug, Clone)]
pub(crate) struct IrlsFit {
    /// Intercept first.
    pub beta: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub separation: bool,
    /// Penalized deviance after each accepted step, starting value first.
    #[cfg_attr(not(test), allow(dead_code))]
    pub deviance_trace: Vec<f64>,
}

/// Newton / IRLS for (ridge-penalized) logistic regression on `x` (no
/// intercept column) and 0/1 outcomes `y`.
pub(crate) fn irls(
    x: &DMatrix<f64>,
    y: &[f64],
    l2: f64,
    max_iterations: usize,
) -> Result<IrlsFit, ModelError> {
    let n = x.nrows();
    if n == 0 {
        return Err(ModelError::EmptyData);
    }
    assert_eq!(n, y.len(), "outcomes must align with rows");
    if !(l2 >= 0.0 && l2.is_finite()) {
        return Err(ModelError::Other(format!("invalid l2 penalty {l2}")));
    }
    if l2 == 0.0 {
        for j in 0..x.ncols() {
            let col = x.column(j);
            let first = col[0];
            if col.iter().all(|v| *v == first) {
                return Err(ModelError::DegenerateDesign(format!(
                    "predictor column {j} is constant"
                )));
            }
        }
    }
    let k = x.ncols() + 1;
    let events: f64 = y.iter().sum();
    if events == 0.0 || events == n as f64 {
        // One outcome class: the intercept MLE is infinite.
        let mut beta = vec![0.0; k];
        beta[0] = if events == 0.0 { -SEPARATION_ETA } else { SEPARATION_ETA };
        return Ok(IrlsFit {
            beta,
            converged: false,
            iterations: 0,
            separation: true,
            deviance_trace: Vec::new(),
        });
    }

    let design = with_intercept(x);
    let mut beta = DVector::<f64>::zeros(k);
    let ybar = events / n as f64;
    beta[0] = (ybar / (1.0 - ybar)).ln();
    let design_t = design.transpose();
    let mut scaled_t = vec![0.0; k * n];
    let mut eta = &design * &beta;
    let mut deviance = penalized_deviance(&eta, y, &beta, l2);
    let mut trace = vec![deviance];
    let y_vec = DVector::from_column_slice(y);

    let mut iterations = 0;
    let mut converged = false;
    let mut separation = false;
    while iterations < max_iterations {
        iterations += 1;
        let mu = eta.map(sigmoid);
        let mut gradient = design.tr_mul(&(&y_vec - &mu));
        let root_w = mu.map(|m| {
            let m = m.clamp(1e-15, 1.0 - 1e-15);
            (m * (1.0 - m)).sqrt()
        });
        for (i, (dst, src)) in scaled_t
            .chunks_exact_mut(k)
            .zip(design_t.as_slice().chunks_exact(k))
            .enumerate()
        {
            let w = root_w[i];
            for (d, s) in dst.iter_mut().zip(src) {
                *d = s * w;
            }
        }
        let mut hessian = gram(&scaled_t, k, n);
        if l2 > 0.0 {
            for j in 1..k {
                hessian[(j, j)] += l2;
                gradient[j] -= l2 * beta[j];
            }
        }
        let chol = hessian.cholesky().ok_or_else(|| {
            ModelError::DegenerateDesign("weighted normal equations are singular".into())
        })?;
        let step = chol.solve(&gradient);

        let mut t = 1.0;
        let mut candidate = &beta + &step;
        let mut cand_eta = &design * &candidate;
        let mut cand_dev = penalized_deviance(&cand_eta, y, &candidate, l2);
        let mut halvings = 0;
        while !(cand_dev <= deviance + 1e-12 * deviance.abs()) && halvings < MAX_STEP_HALVINGS {
            t *= 0.5;
            candidate = &beta + &step * t;
            cand_eta = &design * &candidate;
            cand_dev = penalized_deviance(&cand_eta, y, &candidate, l2);
            halvings += 1;
        }
        if !(cand_dev <= deviance + 1e-12 * deviance.abs()) {
            // No descent along the Newton direction: at the optimum up to
            // rounding.
            converged = true;
            break;
        }
        debug_assert!(cand_dev <= deviance + 1e-9 * deviance.abs().max(1.0));

        let change = (&candidate - &beta).amax();
        let decrease = deviance - cand_dev;
        beta = candidate;
        eta = cand_eta;
        deviance = cand_dev;
        trace.push(deviance);

        if l2 == 0.0 && eta.amax() > SEPARATION_ETA && decrease > 1e-6 * deviance {
            separation = true;
            break;
        }
        if change < COEF_TOLERANCE || decrease.abs() < DEVIANCE_TOLERANCE * deviance {
            converged = true;
            break;
        }
    }
    Ok(IrlsFit {
        beta: beta.iter().copied().collect(),
        converged,
        iterations,
        separation,
        deviance_trace: trace,
    })
}

fn require_outcome(data: &Dataset, want: OutcomeType, strategy: &str) -> Result<(), ModelError> {
    if data.outcome_type != want {
        return Err(ModelError::WrongOutcomeType {
            strategy: strategy.to_string(),
            outcome: data.outcome_type,
        });
    }
    Ok(())
}

/// (Penalized) maximum-likelihood logistic regression by IRLS. The penalty
/// applies to coefficients only, never the intercept.
pub fn fit_logistic(
    data: &Dataset,
    l2_penalty: f64,
    max_iterations: usize,
) -> Result<FittedModel, ModelError> {
    require_outcome(data, OutcomeType::Binary, "logistic")?;
    let fit = irls(&data.predictors, &data.outcomes, l2_penalty, max_iterations)?;
    Ok(FittedModel {
        intercept: fit.beta[0],
        coefficients: fit.beta[1..].to_vec(),
        converged: fit.converged,
        iterations: fit.iterations,
        separation: fit.separation,
        strategy_tag: if l2_penalty > 0.0 { "logistic_l2" } else { "logistic" }.to_string(),
        l2_penalty,
        link: Link::Logit,
    })
}

/// Ordinary least squares through a Householder QR of `[1 | X]`.
pub fn fit_linear(data: &Dataset) -> Result<FittedModel, ModelError> {
    require_outcome(data, OutcomeType::Continuous, "linear")?;
    let n = data.n();
    if n == 0 {
        return Err(ModelError::EmptyData);
    }
    let k = data.p() + 1;
    if n <= k {
        return Err(ModelError::DegenerateDesign(format!(
            "{n} rows for {k} parameters"
        )));
    }
    let design = with_intercept(&data.predictors);
    let qr = design.qr();
    let r = qr.r();
    let max_diag = (0..k).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    for j in 0..k {
        if r[(j, j)].abs() <= 1e-10 * max_diag.max(f64::MIN_POSITIVE) {
            return Err(ModelError::DegenerateDesign(format!(
                "design is rank deficient at column {j}"
            )));
        }
    }
    let qty = qr.q().tr_mul(&DVector::from_column_slice(&data.outcomes));
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| ModelError::DegenerateDesign("triangular solve failed".into()))?;
    Ok(FittedModel {
        intercept: beta[0],
        coefficients: beta.iter().skip(1).copied().collect(),
        converged: true,
        iterations: 1,
        separation: false,
        strategy_tag: "linear".to_string(),
        l2_penalty: 0.0,
        link: Link::Identity,
    })
}

/// A model class: how to fit it and how to predict from a fit.
pub trait ModelStrategy: Send + Sync {
    fn tag(&self) -> &str;

    /// Fits to `data`. Stochastic strategies must draw all their randomness
    /// from `seed`; deterministic ones ignore it.
    fn fit(&self, data: &Dataset, seed: u64) -> Result<FittedModel, ModelError>;

    fn predict(
        &self,
        model: &FittedModel,
        predictors: &DMatrix<f64>,
    ) -> Result<Vec<f64>, ModelError> {
        predict(model, predictors)
    }

    /// Whether `fit` is a pure function of the data and seed.
    fn deterministic(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone)]
pub struct LogisticStrategy {
    pub l2_penalty: f64,
    pub max_iterations: usize,
    tag: &'static str,
}

impl LogisticStrategy {
    pub fn unpenalized() -> Self {
        LogisticStrategy {
            l2_penalty: 0.0,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            tag: "logistic",
        }
    }

    pub fn ridge(l2_penalty: f64) -> Self {
        LogisticStrategy {
            l2_penalty,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            tag: "logistic_l2",
        }
    }
}

impl ModelStrategy for LogisticStrategy {
    fn tag(&self) -> &str {
        self.tag
    }

    fn fit(&self, data: &Dataset, _seed: u64) -> Result<FittedModel, ModelError> {
        let mut model = fit_logistic(data, self.l2_penalty, self.max_iterations)?;
        model.strategy_tag = self.tag.to_string();
        Ok(model)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LinearStrategy;

impl ModelStrategy for LinearStrategy {
    fn tag(&self) -> &str {
        "linear"
    }

    fn fit(&self, data: &Dataset, _seed: u64) -> Result<FittedModel, ModelError> {
        fit_linear(data)
    }
}

/// Default ridge penalty for the `logistic_l2` tag when none is configured.
pub const DEFAULT_RIDGE_PENALTY: f64 = 1.0;

/// Strategies by tag.
#[derive(Clone)]
pub struct StrategyRegistry {
    strategies: BTreeMap<String, Arc<dyn ModelStrategy>>,
}

impl StrategyRegistry {
    pub fn empty() -> Self {
        StrategyRegistry {
            strategies: BTreeMap::new(),
        }
    }

    /// `logistic`, `logistic_l2` (with `ridge_penalty`) and `linear`.
    pub fn with_builtins(ridge_penalty: f64) -> Self {
        let mut reg = Self::empty();
        reg.register(Arc::new(LogisticStrategy::unpenalized()));
        reg.register(Arc::new(LogisticStrategy::ridge(ridge_penalty)));
        reg.register(Arc::new(LinearStrategy));
        reg
    }

    /// Adds or replaces the strategy under its own tag.
    pub fn register(&mut self, strategy: Arc<dyn ModelStrategy>) {
        self.strategies.insert(strategy.tag().to_string(), strategy);
    }

    pub fn get(&self, tag: &str) -> Result<Arc<dyn ModelStrategy>, ModelError> {
        self.strategies
            .get(tag)
            .cloned()
            .ok_or_else(|| ModelError::UnknownStrategy(tag.to_string()))
    }

    pub fn tags(&self) -> impl Iterator<Item = &str> {
        self.strategies.keys().map(String::as_str)
    }
}

impl Default for StrategyRegistry {
    fn default() -> Self {
        Self::with_builtins(DEFAULT_RIDGE_PENALTY)
    }
}

//! Parametric data-generating distribution: specification, tuning and sampling.
//!
//! Predictors are an equicorrelated standard-normal block. The outcome depends
//! on the predictors through a linear predictor `eta = intercept + scale *
//! (weights . x)`; binary outcomes are Bernoulli(sigmoid(eta)) and continuous
//! outcomes are Normal(eta, noise_sd).
//!
//! Tuning solves for the intercept (to hit the target prevalence) and the
//! coefficient scale (to hit the target large-sample performance) using fixed
//! Monte Carlo draws, so each bisection objective is a deterministic monotone
//! function. Achieved values are then re-measured on an independent draw.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{logit, mean_sd, sigmoid};
use crate::rng::{stream_rng, StreamId};

/// Smallest Monte Carlo size accepted by the tuning routines.
pub const MIN_MC_SIZE: usize = 100_000;
/// Default tuning Monte Carlo size.
pub const DEFAULT_MC_SIZE: usize = 200_000;
/// Allowed gap between achieved and target prevalence.
pub const PREVALENCE_TOLERANCE: f64 = 0.002;
/// Allowed gap between achieved and target large-sample performance.
pub const PERFORMANCE_TOLERANCE: f64 = 0.005;
/// Intercept search interval, log-odds units.
pub const INTERCEPT_BRACKET: (f64, f64) = (-20.0, 20.0);
/// Coefficient-scale search interval.
pub const SCALE_BRACKET: (f64, f64) = (0.0, 50.0);
pub const MAX_BISECTION_ITERATIONS: usize = 60;

const TUNE_DRAW: u64 = 0;
const REEVAL_DRAW: u64 = 1;
const SE_BATCHES: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum DatagenError {
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("no intercept in [{lo}, {hi}] reaches prevalence {target} (mean probability spans {f_lo:.6}..{f_hi:.6})")]
    NoBracket {
        target: f64,
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },
    #[error("target performance {target} unreachable: coefficient scale {scale} only reaches {reached:.6}")]
    TargetUnreachable {
        target: f64,
        scale: f64,
        reached: f64,
    },
    #[error("independent re-evaluation missed the target: {what} {achieved:.6} vs target {target:.6} (tolerance {tolerance})")]
    ToleranceNotMet {
        what: &'static str,
        achieved: f64,
        target: f64,
        tolerance: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeType {
    Binary,
    Continuous,
}

/// Relative weights of the true predictors before scaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoefficientPattern {
    #[default]
    Equal,
    /// Weight of true predictor `j` is `ratio^j`.
    GeometricDecay { ratio: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub outcome_type: OutcomeType,
    pub n_true: usize,
    #[serde(default)]
    pub n_noise: usize,
    #[serde(default)]
    pub predictor_correlation: f64,
    #[serde(default)]
    pub coefficient_pattern: CoefficientPattern,
    /// Event fraction; ignored for continuous outcomes.
    #[serde(default = "default_prevalence")]
    pub target_prevalence: f64,
    /// Large-sample AUC (binary) or R² (continuous).
    pub target_performance: f64,
}

fn default_prevalence() -> f64 {
    0.5
}

impl GeneratorSpec {
    /// Binary outcome, independent predictors, equal weights, no noise predictors.
    pub fn binary(n_true: usize, prevalence: f64, auc: f64) -> Self {
        GeneratorSpec {
            outcome_type: OutcomeType::Binary,
            n_true,
            n_noise: 0,
            predictor_correlation: 0.0,
            coefficient_pattern: CoefficientPattern::Equal,
            target_prevalence: prevalence,
            target_performance: auc,
        }
    }

    pub fn continuous(n_true: usize, r_squared: f64) -> Self {
        GeneratorSpec {
            outcome_type: OutcomeType::Continuous,
            n_true,
            n_noise: 0,
            predictor_correlation: 0.0,
            coefficient_pattern: CoefficientPattern::Equal,
            target_prevalence: default_prevalence(),
            target_performance: r_squared,
        }
    }

    /// Total predictor count.
    pub fn p(&self) -> usize {
        self.n_true + self.n_noise
    }

    /// Performance of a model with no signal.
    pub fn chance_level(&self) -> f64 {
        match self.outcome_type {
            OutcomeType::Binary => 0.5,
            OutcomeType::Continuous => 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), DatagenError> {
        let bad = |msg: String| Err(DatagenError::InvalidSpec(msg));
        if self.p() == 0 {
            return bad("need at least one predictor".into());
        }
        let rho = self.predictor_correlation;
        if !(0.0..=0.95).contains(&rho) {
            return bad(format!("predictor_correlation {rho} outside [0, 0.95]"));
        }
        if let CoefficientPattern::GeometricDecay { ratio } = self.coefficient_pattern {
            if !(ratio > 0.0 && ratio.is_finite()) {
                return bad(format!("geometric decay ratio {ratio} must be positive"));
            }
        }
        let perf = self.target_performance;
        match self.outcome_type {
            OutcomeType::Binary => {
                let prev = self.target_prevalence;
                if !(prev > 0.01 && prev < 0.99) {
                    return bad(format!("target_prevalence {prev} outside (0.01, 0.99)"));
                }
                if !(0.5..=0.999).contains(&perf) {
                    return bad(format!("target AUC {perf} outside [0.5, 0.999]"));
                }
            }
            OutcomeType::Continuous => {
                if !(0.0..=0.999).contains(&perf) {
                    return bad(format!("target R² {perf} outside [0, 0.999]"));
                }
            }
        }
        if perf > self.chance_level() && self.n_true == 0 {
            return bad("signal above chance needs at least one true predictor".into());
        }
        Ok(())
    }

    /// Unscaled coefficient weights, length `p`; noise predictors get 0.
    pub fn pattern_weights(&self) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.p());
        for j in 0..self.n_true {
            w.push(match self.coefficient_pattern {
                CoefficientPattern::Equal => 1.0,
                CoefficientPattern::GeometricDecay { ratio } => ratio.powi(j as i32),
            });
        }
        w.resize(self.p(), 0.0);
        w
    }

    pub fn correlation(&self) -> Result<Equicorrelation, DatagenError> {
        Equicorrelation::new(self.p(), self.predictor_correlation)
    }
}

/// Equicorrelated standard-normal predictor block and its Cholesky factor.
#[derive(Debug, Clone)]
pub struct Equicorrelation {
    p: usize,
    rho: f64,
    /// Lower-triangular factor, `None` when `rho == 0` (identity).
    factor: Option<DMatrix<f64>>,
}

impl Equicorrelation {
    pub fn new(p: usize, rho: f64) -> Result<Self, DatagenError> {
        if rho == 0.0 {
            return Ok(Equicorrelation { p, rho, factor: None });
        }
        let chol = Self::matrix(p, rho).cholesky().ok_or_else(|| {
            DatagenError::InvalidSpec(format!(
                "equicorrelation matrix with rho {rho} is not positive definite"
            ))
        })?;
        Ok(Equicorrelation {
            p,
            rho,
            factor: Some(chol.l()),
        })
    }

    pub fn matrix(p: usize, rho: f64) -> DMatrix<f64> {
        DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { rho })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// `w' Σ w`.
    pub fn quadratic_form(&self, w: &[f64]) -> f64 {
        let sum: f64 = w.iter().sum();
        let sum_sq: f64 = w.iter().map(|v| v * v).sum();
        (1.0 - self.rho) * sum_sq + self.rho * sum * sum
    }

    /// `L' w`: the direction such that `w . (L z) = (L' w) . z`.
    fn pull_back(&self, w: &[f64]) -> Vec<f64> {
        match &self.factor {
            None => w.to_vec(),
            Some(l) => (l.transpose() * DVector::from_column_slice(w))
                .iter()
                .copied()
                .collect(),
        }
    }

    /// Fills `x` with one correlated row from standard normals in `z`.
    fn correlate(&self, z: &[f64], x: &mut [f64]) {
        match &self.factor {
            None => x.copy_from_slice(z),
            Some(l) => {
                for i in 0..self.p {
                    let mut acc = 0.0;
                    for (k, zk) in z.iter().enumerate().take(i + 1) {
                        acc += l[(i, k)] * zk;
                    }
                    x[i] = acc;
                }
            }
        }
    }
}

/// A finite draw from the generator.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub outcome_type: OutcomeType,
    /// n × p, one row per observation.
    pub predictors: DMatrix<f64>,
    pub outcomes: Vec<f64>,
    /// Oracle event probability (binary) or conditional mean (continuous).
    pub true_prob: Vec<f64>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.outcomes.len()
    }

    pub fn p(&self) -> usize {
        self.predictors.ncols()
    }

    pub fn event_rate(&self) -> f64 {
        self.outcomes.iter().sum::<f64>() / self.n() as f64
    }

    /// Builds a dataset from rows, for hand-made fixtures.
    pub fn from_rows(
        outcome_type: OutcomeType,
        rows: &[Vec<f64>],
        outcomes: Vec<f64>,
        true_prob: Option<Vec<f64>>,
    ) -> Self {
        let n = rows.len();
        assert_eq!(n, outcomes.len(), "rows and outcomes must align");
        let p = rows.first().map_or(0, Vec::len);
        let predictors = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
        let true_prob = true_prob.unwrap_or_else(|| vec![f64::NAN; n]);
        assert_eq!(n, true_prob.len(), "rows and true_prob must align");
        Dataset {
            outcome_type,
            predictors,
            outcomes,
            true_prob,
        }
    }
}

/// A generator whose intercept and coefficient scale have been solved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunedGenerator {
    pub spec: GeneratorSpec,
    pub intercept: f64,
    pub coefficient_scale: f64,
    /// Residual sd for continuous outcomes; 0 for binary.
    pub noise_sd: f64,
    pub achieved_prevalence: Option<f64>,
    pub achieved_prevalence_se: Option<f64>,
    pub achieved_performance: f64,
    pub achieved_performance_se: f64,
    pub tuning_sample_size: usize,
}

impl TunedGenerator {
    /// Scaled coefficients, length `p`.
    pub fn coefficients(&self) -> Vec<f64> {
        self.spec
            .pattern_weights()
            .iter()
            .map(|w| w * self.coefficient_scale)
            .collect()
    }

    pub fn p(&self) -> usize {
        self.spec.p()
    }

    /// Draws `n` rows on `stream` under `master_seed`.
    pub fn generate(&self, n: usize, master_seed: u64, stream: StreamId) -> Dataset {
        let corr = self
            .spec
            .correlation()
            .expect("tuned generator has a valid correlation");
        let beta = self.coefficients();
        let p = self.p();
        let mut rng = stream_rng(master_seed, stream);
        let mut predictors = DMatrix::<f64>::zeros(n, p);
        let mut outcomes = Vec::with_capacity(n);
        let mut true_prob = Vec::with_capacity(n);
        let mut z = vec![0.0; p];
        let mut x = vec![0.0; p];
        for i in 0..n {
            for zj in z.iter_mut() {
                *zj = rng.sample(StandardNormal);
            }
            corr.correlate(&z, &mut x);
            let mut eta = self.intercept;
            for j in 0..p {
                predictors[(i, j)] = x[j];
                eta += beta[j] * x[j];
            }
            match self.spec.outcome_type {
                OutcomeType::Binary => {
                    let pi = sigmoid(eta);
                    let u: f64 = rng.random();
                    true_prob.push(pi);
                    outcomes.push(if u < pi { 1.0 } else { 0.0 });
                }
                OutcomeType::Continuous => {
                    let e: f64 = rng.sample(StandardNormal);
                    true_prob.push(eta);
                    outcomes.push(eta + self.noise_sd * e);
                }
            }
        }
        Dataset {
            outcome_type: self.spec.outcome_type,
            predictors,
            outcomes,
            true_prob,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("generator serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Linear predictors `direction . z` for `size` rows, where `z` is standard
/// normal. With `antithetic`, the second half mirrors the first.
fn draw_linear_predictors(
    direction: &[f64],
    size: usize,
    master_seed: u64,
    stream: StreamId,
    antithetic: bool,
) -> Vec<f64> {
    let mut rng = stream_rng(master_seed, stream);
    let base = if antithetic { size.div_ceil(2) } else { size };
    let mut out = Vec::with_capacity(if antithetic { 2 * base } else { base });
    for _ in 0..base {
        let mut s = 0.0;
        for d in direction {
            let z: f64 = rng.sample(StandardNormal);
            s += d * z;
        }
        out.push(s);
    }
    if antithetic {
        for i in 0..base {
            out.push(-out[i]);
        }
    }
    out
}

fn mean_probability(intercept: f64, eta: &[f64]) -> f64 {
    eta.iter().map(|e| sigmoid(intercept + e)).sum::<f64>() / eta.len() as f64
}

/// Bisection for the intercept giving mean probability `target` over the fixed
/// linear predictors `eta`.
fn solve_intercept(eta: &[f64], target: f64) -> Result<f64, DatagenError> {
    let (mut lo, mut hi) = INTERCEPT_BRACKET;
    let f_lo = mean_probability(lo, eta);
    let f_hi = mean_probability(hi, eta);
    if !(f_lo <= target && target <= f_hi) {
        return Err(DatagenError::NoBracket {
            target,
            lo,
            hi,
            f_lo,
            f_hi,
        });
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..MAX_BISECTION_ITERATIONS {
        mid = 0.5 * (lo + hi);
        let f = mean_probability(mid, eta);
        if (f - target).abs() < 1e-12 {
            break;
        }
        if f < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(mid)
}

/// Intercept such that the Monte Carlo mean of `sigmoid(b0 + x . coefficients)`
/// equals `target_prevalence`.
pub fn tune_intercept(
    spec: &GeneratorSpec,
    scaled_coefficients: &[f64],
    target_prevalence: f64,
    mc_size: usize,
    seed: u64,
) -> Result<f64, DatagenError> {
    if spec.outcome_type != OutcomeType::Binary {
        return Err(DatagenError::InvalidSpec(
            "intercept tuning applies to binary outcomes".into(),
        ));
    }
    if !(target_prevalence > 0.01 && target_prevalence < 0.99) {
        return Err(DatagenError::InvalidSpec(format!(
            "target_prevalence {target_prevalence} outside (0.01, 0.99)"
        )));
    }
    if scaled_coefficients.len() != spec.p() {
        return Err(DatagenError::InvalidSpec(format!(
            "{} coefficients for {} predictors",
            scaled_coefficients.len(),
            spec.p()
        )));
    }
    check_mc_size(mc_size)?;
    let corr = spec.correlation()?;
    let direction = corr.pull_back(scaled_coefficients);
    let eta = draw_linear_predictors(&direction, mc_size, seed, StreamId::tune(TUNE_DRAW), true);
    solve_intercept(&eta, target_prevalence)
}

fn check_mc_size(mc_size: usize) -> Result<(), DatagenError> {
    if mc_size < MIN_MC_SIZE {
        return Err(DatagenError::InvalidSpec(format!(
            "mc_size {mc_size} below minimum {MIN_MC_SIZE}"
        )));
    }
    Ok(())
}

/// AUC of `scores` against soft labels: observation `i` counts as a positive
/// with weight `probs[i]` and as a negative with weight `1 - probs[i]`, and
/// self-pairs are excluded. This is the expected AUC over outcome draws, so it
/// carries no Bernoulli noise. `order` sorts `scores` ascending.
pub fn expected_auc(order: &[usize], scores: &[f64], probs: &[f64]) -> f64 {
    let mut numerator = 0.0;
    let mut cum_neg = 0.0;
    let (mut total_pos, mut total_neg, mut total_self) = (0.0, 0.0, 0.0);
    let mut start = 0;
    while start < order.len() {
        let s = scores[order[start]];
        let mut end = start;
        let (mut pos, mut neg, mut own) = (0.0, 0.0, 0.0);
        while end < order.len() && scores[order[end]] == s {
            let p = probs[order[end]];
            pos += p;
            neg += 1.0 - p;
            own += p * (1.0 - p);
            end += 1;
        }
        numerator += pos * cum_neg + 0.5 * (pos * neg - own);
        cum_neg += neg;
        total_pos += pos;
        total_neg += neg;
        total_self += own;
        start = end;
    }
    numerator / (total_pos * total_neg - total_self)
}

fn ascending_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    order
}

/// Expected AUC when probabilities are `sigmoid(intercept + scale * base)`.
/// For `scale > 0` the ranking by `base` equals the ranking by probability.
fn auc_at_scale(order: &[usize], base: &[f64], intercept: f64, scale: f64) -> f64 {
    if scale == 0.0 {
        return 0.5;
    }
    let probs: Vec<f64> = base.iter().map(|b| sigmoid(intercept + scale * b)).collect();
    expected_auc(order, base, &probs)
}

/// Standard error from `SE_BATCHES` contiguous batch estimates.
fn batch_se(n: usize, estimate: impl Fn(std::ops::Range<usize>) -> f64) -> f64 {
    let size = n / SE_BATCHES;
    if size == 0 {
        return f64::NAN;
    }
    let batches: Vec<f64> = (0..SE_BATCHES)
        .map(|b| estimate(b * size..(b + 1) * size))
        .collect();
    let (_, sd) = mean_sd(&batches);
    sd / (SE_BATCHES as f64).sqrt()
}

/// Solves the coefficient scale (and intercept, for binary outcomes) so the
/// large-sample performance matches `spec.target_performance`.
pub fn tune_scale(
    spec: &GeneratorSpec,
    mc_size: usize,
    seed: u64,
) -> Result<TunedGenerator, DatagenError> {
    spec.validate()?;
    check_mc_size(mc_size)?;
    match spec.outcome_type {
        OutcomeType::Binary => tune_binary(spec, mc_size, seed, SCALE_BRACKET.1),
        OutcomeType::Continuous => tune_continuous(spec, mc_size, seed),
    }
}

fn tune_binary(
    spec: &GeneratorSpec,
    mc_size: usize,
    seed: u64,
    max_scale: f64,
) -> Result<TunedGenerator, DatagenError> {
    let corr = spec.correlation()?;
    let direction = corr.pull_back(&spec.pattern_weights());
    let prevalence = spec.target_prevalence;
    let target = spec.target_performance;

    let (intercept, scale) = if target <= spec.chance_level() {
        (logit(prevalence), 0.0)
    } else {
        let base =
            draw_linear_predictors(&direction, mc_size, seed, StreamId::tune(TUNE_DRAW), true);
        let order = ascending_order(&base);
        let scaled = |c: f64| -> Vec<f64> { base.iter().map(|b| c * b).collect() };
        let evaluate = |c: f64| -> Result<(f64, f64), DatagenError> {
            let b0 = solve_intercept(&scaled(c), prevalence)?;
            Ok((b0, auc_at_scale(&order, &base, b0, c)))
        };

        let (mut lo, mut hi) = (SCALE_BRACKET.0, max_scale);
        // At large scales the intercept bracket may not reach the target
        // prevalence; the best-effort intercept still gives the AUC ceiling.
        let (b0_hi, auc_hi) = match evaluate(hi) {
            Ok(v) => v,
            Err(DatagenError::NoBracket { f_lo, lo: b_lo, hi: b_hi, .. }) => {
                let b0 = if prevalence < f_lo { b_lo } else { b_hi };
                (b0, auc_at_scale(&order, &base, b0, hi))
            }
            Err(e) => return Err(e),
        };
        if auc_hi < target {
            return Err(DatagenError::TargetUnreachable {
                target,
                scale: hi,
                reached: auc_hi,
            });
        }
        let mut best = (b0_hi, hi);
        for _ in 0..MAX_BISECTION_ITERATIONS {
            let mid = 0.5 * (lo + hi);
            let (b0, auc) = match evaluate(mid) {
                Ok(v) => v,
                Err(DatagenError::NoBracket { .. }) => {
                    hi = mid;
                    continue;
                }
                Err(e) => return Err(e),
            };
            best = (b0, mid);
            if (auc - target).abs() < 1e-6 {
                break;
            }
            if auc < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        best
    };

    let direction_scaled: Vec<f64> = direction.iter().map(|d| d * scale).collect();
    let eta = draw_linear_predictors(
        &direction_scaled,
        mc_size,
        seed,
        StreamId::tune(REEVAL_DRAW),
        false,
    );
    let probs: Vec<f64> = eta.iter().map(|e| sigmoid(intercept + e)).collect();
    let (achieved_prevalence, prob_sd) = mean_sd(&probs);
    let prevalence_se = prob_sd / (probs.len() as f64).sqrt();
    let auc_of = |range: std::ops::Range<usize>| -> f64 {
        if scale == 0.0 {
            return 0.5;
        }
        let sub_eta = &eta[range.clone()];
        let sub_probs = &probs[range];
        expected_auc(&ascending_order(sub_eta), sub_eta, sub_probs)
    };
    let achieved_auc = auc_of(0..eta.len());
    let auc_se = if scale == 0.0 {
        0.0
    } else {
        batch_se(eta.len(), auc_of)
    };

    check_tolerance("prevalence", achieved_prevalence, prevalence, PREVALENCE_TOLERANCE)?;
    check_tolerance("AUC", achieved_auc, target, PERFORMANCE_TOLERANCE)?;

    Ok(TunedGenerator {
        spec: spec.clone(),
        intercept,
        coefficient_scale: scale,
        noise_sd: 0.0,
        achieved_prevalence: Some(achieved_prevalence),
        achieved_prevalence_se: Some(prevalence_se),
        achieved_performance: achieved_auc,
        achieved_performance_se: auc_se,
        tuning_sample_size: mc_size,
    })
}

fn tune_continuous(
    spec: &GeneratorSpec,
    mc_size: usize,
    seed: u64,
) -> Result<TunedGenerator, DatagenError> {
    let corr = spec.correlation()?;
    let target = spec.target_performance;
    let (scale, noise_sd) = if target <= 0.0 {
        (0.0, 1.0)
    } else {
        // Unit linear-predictor variance, so R² = 1 / (1 + noise_sd²).
        let var_unit = corr.quadratic_form(&spec.pattern_weights());
        (1.0 / var_unit.sqrt(), ((1.0 - target) / target).sqrt())
    };
    let mut tuned = TunedGenerator {
        spec: spec.clone(),
        intercept: 0.0,
        coefficient_scale: scale,
        noise_sd,
        achieved_prevalence: None,
        achieved_prevalence_se: None,
        achieved_performance: f64::NAN,
        achieved_performance_se: f64::NAN,
        tuning_sample_size: mc_size,
    };
    let check = tuned.generate(mc_size, seed, StreamId::tune(REEVAL_DRAW));
    let r2_of = |range: std::ops::Range<usize>| -> f64 {
        let y = &check.outcomes[range.clone()];
        let m = &check.true_prob[range];
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
        let ss_res: f64 = y.iter().zip(m).map(|(v, f)| (v - f).powi(2)).sum();
        1.0 - ss_res / ss_tot
    };
    tuned.achieved_performance = r2_of(0..mc_size);
    tuned.achieved_performance_se = batch_se(mc_size, r2_of);
    check_tolerance(
        "R²",
        tuned.achieved_performance,
        target,
        PERFORMANCE_TOLERANCE,
    )?;
    Ok(tuned)
}

fn check_tolerance(
    what: &'static str,
    achieved: f64,
    target: f64,
    tolerance: f64,
) -> Result<(), DatagenError> {
    if (achieved - target).abs() > tolerance {
        return Err(DatagenError::ToleranceNotMet {
            what,
            achieved,
            target,
            tolerance,
        });
    }
    Ok(())
}

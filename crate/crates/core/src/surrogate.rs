//! Learning-curve surrogates.
//!
//! [`gp_fit`] regresses per-`n` summary statistics on `x = ln n` with a
//! squared-exponential Gaussian process whose per-point noise comes from each
//! statistic's standard error. Outputs are standardized before fitting and
//! hyperparameters are chosen by maximizing the log marginal likelihood on a
//! log-spaced grid followed by a short coordinate refinement.
//!
//! [`fit_power_law`] fits `y = a - b n^(-alpha)` for diagnostics and
//! extrapolation checks; [`find_crossing`] locates where the GP posterior
//! clears a threshold.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{log_space, mean_sd};
use crate::metrics::Orientation;

pub const GRID_SIZE: usize = 20;
pub const SIGMA_F_RANGE: (f64, f64) = (0.1, 3.0);
/// Length-scale range as multiples of the observed `ln n` range.
pub const LENGTH_SCALE_RANGE: (f64, f64) = (0.05, 2.0);
pub const REFINE_STEPS: usize = 10;
/// Noise variance floor (standardized units) for points with positive SE.
pub const NOISE_FLOOR: f64 = 1e-6;
pub const MAX_JITTER: f64 = 1e-6;
/// Normal quantile of the 80% two-sided band.
pub const BAND_Z: f64 = 1.28;
pub const CROSSING_GRID: usize = 200;
/// Relative precision of crossing refinement.
pub const CROSSING_PRECISION: f64 = 1e-3;

pub const POWER_LAW_ALPHA_RANGE: (f64, f64) = (0.05, 2.0);
pub const POWER_LAW_GRID: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurrogateError {
    #[error("need at least {needed} observations with distinct n, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("kernel matrix not positive definite even with jitter {MAX_JITTER}")]
    NotPositiveDefinite,
    #[error("invalid observation: {0}")]
    InvalidObservation(String),
}

/// One learning-curve point: a per-`n` statistic and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveObservation {
    pub n: f64,
    pub y: f64,
    pub se: f64,
}

impl CurveObservation {
    pub fn new(n: f64, y: f64, se: f64) -> Self {
        CurveObservation { n, y, se }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridEvaluation {
    pub sigma_f: f64,
    pub length_scale: f64,
    pub log_marginal_likelihood: f64,
}

/// A fitted GP learning curve. Hyperparameters are in standardized output
/// units (`sigma_f`) and `ln n` units (`length_scale`).
#[derive(Debug, Clone)]
pub struct LearningCurveModel {
    pub observations: Vec<CurveObservation>,
    pub center: f64,
    pub scale: f64,
    pub sigma_f: f64,
    pub length_scale: f64,
    pub log_marginal_likelihood: f64,
    pub jitter: f64,
    /// Every hyperparameter pair tried on the initial grid.
    pub grid: Vec<GridEvaluation>,
    x: Vec<f64>,
    noise: Vec<f64>,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

/// Compact record of a fit for reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpDiagnostics {
    pub sigma_f: f64,
    pub length_scale: f64,
    pub log_marginal_likelihood: f64,
    pub center: f64,
    pub scale: f64,
    pub jitter: f64,
    pub monotone: bool,
}

fn kernel(a: f64, b: f64, sigma_f: f64, length: f64) -> f64 {
    let d = (a - b) / length;
    sigma_f * sigma_f * (-0.5 * d * d).exp()
}

struct Solved {
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    lml: f64,
    jitter: f64,
}

fn solve(x: &[f64], noise: &[f64], z: &DVector<f64>, sigma_f: f64, length: f64) -> Option<Solved> {
    let m = x.len();
    let base = DMatrix::from_fn(m, m, |i, j| {
        kernel(x[i], x[j], sigma_f, length) + if i == j { noise[i] } else { 0.0 }
    });
    let mut jitter = 0.0;
    loop {
        let mut k = base.clone();
        for i in 0..m {
            k[(i, i)] += jitter;
        }
        if let Some(chol) = k.cholesky() {
            let alpha = chol.solve(z);
            let log_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
            let lml = -0.5 * z.dot(&alpha)
                - 0.5 * log_det
                - 0.5 * m as f64 * (2.0 * std::f64::consts::PI).ln();
            if lml.is_finite() {
                return Some(Solved {
                    chol,
                    alpha,
                    lml,
                    jitter,
                });
            }
        }
        jitter = if jitter == 0.0 { 1e-12 } else { jitter * 10.0 };
        if jitter > MAX_JITTER * (1.0 + 1e-9) {
            return None;
        }
    }
}

/// Fits the GP surrogate to `observations` (at least 2 with distinct `n`).
pub fn gp_fit(observations: &[CurveObservation]) -> Result<LearningCurveModel, SurrogateError> {
    for o in observations {
        if !(o.n >= 1.0 && o.y.is_finite() && o.se >= 0.0 && o.se.is_finite()) {
            return Err(SurrogateError::InvalidObservation(format!("{o:?}")));
        }
    }
    let mut distinct: Vec<f64> = observations.iter().map(|o| o.n).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(SurrogateError::TooFewPoints {
            needed: 2,
            got: distinct.len(),
        });
    }

    let ys: Vec<f64> = observations.iter().map(|o| o.y).collect();
    let (center, sd) = mean_sd(&ys);
    let scale = if sd > 0.0 { sd } else { 1.0 };
    let x: Vec<f64> = observations.iter().map(|o| o.n.ln()).collect();
    let z = DVector::from_iterator(ys.len(), ys.iter().map(|y| (y - center) / scale));
    let noise: Vec<f64> = observations
        .iter()
        .map(|o| {
            if o.se > 0.0 {
                ((o.se / scale).powi(2)).max(NOISE_FLOOR)
            } else {
                0.0
            }
        })
        .collect();
    let x_range = distinct.last().unwrap().ln() - distinct[0].ln();

    let sigmas = log_space(SIGMA_F_RANGE.0, SIGMA_F_RANGE.1, GRID_SIZE);
    let lengths = log_space(
        LENGTH_SCALE_RANGE.0 * x_range,
        LENGTH_SCALE_RANGE.1 * x_range,
        GRID_SIZE,
    );
    let mut grid = Vec::with_capacity(GRID_SIZE * GRID_SIZE);
    let mut best: Option<(f64, f64, Solved)> = None;
    for &s in &sigmas {
        for &l in &lengths {
            let lml = match solve(&x, &noise, &z, s, l) {
                Some(solved) => {
                    let lml = solved.lml;
                    if best.as_ref().is_none_or(|b| lml > b.2.lml) {
                        best = Some((s, l, solved));
                    }
                    lml
                }
                None => f64::NEG_INFINITY,
            };
            grid.push(GridEvaluation {
                sigma_f: s,
                length_scale: l,
                log_marginal_likelihood: lml,
            });
        }
    }
    let (mut sigma_f, mut length, mut solved) = best.ok_or(SurrogateError::NotPositiveDefinite)?;

    // Coordinate refinement in log space, step halving each pass.
    let mut step_s = (SIGMA_F_RANGE.1 / SIGMA_F_RANGE.0).ln() / (GRID_SIZE - 1) as f64;
    let mut step_l = (LENGTH_SCALE_RANGE.1 / LENGTH_SCALE_RANGE.0).ln() / (GRID_SIZE - 1) as f64;
    for _ in 0..REFINE_STEPS {
        for (ds, dl) in [(step_s, 0.0), (-step_s, 0.0), (0.0, step_l), (0.0, -step_l)] {
            let s = sigma_f * ds.exp();
            let l = length * dl.exp();
            if let Some(c) = solve(&x, &noise, &z, s, l) {
                if c.lml > solved.lml {
                    sigma_f = s;
                    length = l;
                    solved = c;
                }
            }
        }
        step_s *= 0.5;
        step_l *= 0.5;
    }

    Ok(LearningCurveModel {
        observations: observations.to_vec(),
        center,
        scale,
        sigma_f,
        length_scale: length,
        log_marginal_likelihood: solved.lml,
        jitter: solved.jitter,
        grid,
        x,
        noise,
        chol: solved.chol,
        alpha: solved.alpha,
    })
}

impl LearningCurveModel {
    /// Posterior mean and sd of the latent curve at `n` (observation noise
    /// excluded), in original units.
    pub fn predict(&self, n: f64) -> (f64, f64) {
        let xs = n.ln();
        let k_star = DVector::from_iterator(
            self.x.len(),
            self.x
                .iter()
                .map(|xi| kernel(*xi, xs, self.sigma_f, self.length_scale)),
        );
        let mean = k_star.dot(&self.alpha);
        let v = self
            .chol
            .l()
            .solve_lower_triangular(&k_star)
            .expect("cholesky factor is nonsingular");
        let var = (self.sigma_f * self.sigma_f - v.norm_squared()).max(0.0);
        (self.center + self.scale * mean, self.scale * var.sqrt())
    }

    /// Noise variances in standardized units, per observation.
    pub fn noise_variances(&self) -> &[f64] {
        &self.noise
    }

    /// Whether the posterior mean, oriented so larger is better, is
    /// nondecreasing on the crossing grid over `[n_min, n_max]`.
    pub fn is_monotone(&self, orientation: Orientation, n_min: f64, n_max: f64) -> bool {
        let s = orientation.sign();
        let means: Vec<f64> = log_space(n_min, n_max, CROSSING_GRID)
            .into_iter()
            .map(|n| s * self.predict(n).0)
            .collect();
        means.windows(2).all(|w| w[1] >= w[0] - 1e-12)
    }

    pub fn diagnostics(&self, orientation: Orientation, n_min: f64, n_max: f64) -> GpDiagnostics {
        GpDiagnostics {
            sigma_f: self.sigma_f,
            length_scale: self.length_scale,
            log_marginal_likelihood: self.log_marginal_likelihood,
            center: self.center,
            scale: self.scale,
            jitter: self.jitter,
            monotone: self.is_monotone(orientation, n_min, n_max),
        }
    }
}

pub fn gp_predict(model: &LearningCurveModel, n: f64) -> (f64, f64) {
    model.predict(n)
}

/// Threshold crossing of the GP posterior mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Crossing {
    Found {
        n_hat: u64,
        ci_low: u64,
        ci_high: u64,
    },
    AlreadySatisfied,
    Unreachable,
}

/// Smallest `n` on the log grid where the posterior mean clears `threshold`,
/// refined by bisection, with the matching crossings of the 80% band.
pub fn find_crossing(
    model: &LearningCurveModel,
    threshold: f64,
    orientation: Orientation,
    n_min: f64,
    n_max: f64,
) -> Crossing {
    assert!(n_min < n_max, "n_min must be below n_max");
    let s = orientation.sign();
    // Margin by which the band `mean + s * k * sd` clears the threshold.
    let margin = |n: f64, k: f64| -> f64 {
        let (mean, sd) = model.predict(n);
        s * (mean - threshold) + k * sd
    };
    if margin(n_min, 0.0) >= 0.0 {
        return Crossing::AlreadySatisfied;
    }
    if margin(n_max, 2.0) < 0.0 {
        return Crossing::Unreachable;
    }
    let grid = log_space(n_min, n_max, CROSSING_GRID);
    let first_crossing = |k: f64| -> Option<f64> {
        if margin(grid[0], k) >= 0.0 {
            return Some(grid[0]);
        }
        let i = (1..grid.len()).find(|&i| margin(grid[i], k) >= 0.0)?;
        let (mut lo, mut hi) = (grid[i - 1].ln(), grid[i].ln());
        while hi - lo > CROSSING_PRECISION.ln_1p() {
            let mid = 0.5 * (lo + hi);
            if margin(mid.exp(), k) >= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(hi.exp())
    };
    let Some(n_hat) = first_crossing(0.0) else {
        return Crossing::Unreachable;
    };
    let ci_low = first_crossing(BAND_Z).unwrap_or(n_min).min(n_hat);
    let ci_high = first_crossing(-BAND_Z).unwrap_or(n_max).max(n_hat);
    Crossing::Found {
        n_hat: n_hat.ceil() as u64,
        ci_low: ci_low.ceil() as u64,
        ci_high: ci_high.ceil() as u64,
    }
}

/// `y = a - b n^(-alpha)` least-squares fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
    pub sse: f64,
}

impl PowerLawFit {
    pub fn eval(&self, n: f64) -> f64 {
        self.a - self.b * n.powf(-self.alpha)
    }
}

/// `(a, b, sse)` for fixed `alpha` by linear least squares on `u = n^-alpha`.
fn power_law_at(obs: &[CurveObservation], alpha: f64) -> (f64, f64, f64) {
    let m = obs.len() as f64;
    let u: Vec<f64> = obs.iter().map(|o| o.n.powf(-alpha)).collect();
    let u_mean = u.iter().sum::<f64>() / m;
    let y_mean = obs.iter().map(|o| o.y).sum::<f64>() / m;
    let suu: f64 = u.iter().map(|v| (v - u_mean).powi(2)).sum();
    let suy: f64 = u
        .iter()
        .zip(obs)
        .map(|(v, o)| (v - u_mean) * (o.y - y_mean))
        .sum();
    let slope = if suu > 0.0 { suy / suu } else { 0.0 };
    let a = y_mean - slope * u_mean;
    let b = -slope;
    let sse = u
        .iter()
        .zip(obs)
        .map(|(v, o)| (o.y - (a - b * v)).powi(2))
        .sum();
    (a, b, sse)
}

/// Inverse-power-law fit: grid over `alpha`, closed-form `(a, b)` at each,
/// then golden-section refinement of `alpha` between the best grid
/// neighbours.
pub fn fit_power_law(observations: &[CurveObservation]) -> Result<PowerLawFit, SurrogateError> {
    let mut distinct: Vec<f64> = observations.iter().map(|o| o.n).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 4 {
        return Err(SurrogateError::TooFewPoints {
            needed: 4,
            got: distinct.len(),
        });
    }
    let alphas = log_space(POWER_LAW_ALPHA_RANGE.0, POWER_LAW_ALPHA_RANGE.1, POWER_LAW_GRID);
    let sse_at = |alpha: f64| power_law_at(observations, alpha).2;
    let best = (0..alphas.len())
        .min_by(|&i, &j| sse_at(alphas[i]).total_cmp(&sse_at(alphas[j])))
        .unwrap();
    let (mut lo, mut hi) = (
        alphas[best.saturating_sub(1)].ln(),
        alphas[(best + 1).min(alphas.len() - 1)].ln(),
    );
    let golden = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let c = hi - golden * (hi - lo);
        let d = lo + golden * (hi - lo);
        if sse_at(c.exp()) <= sse_at(d.exp()) {
            hi = d;
        } else {
            lo = c;
        }
    }
    let refined = (0.5 * (lo + hi)).exp();
    let alpha = if sse_at(refined) <= sse_at(alphas[best]) {
        refined
    } else {
        alphas[best]
    };
    let (a, b, sse) = power_law_at(observations, alpha);
    Ok(PowerLawFit { a, b, alpha, sse })
}

/// Power-law fit on the larger-is-better scale: minimize-oriented curves are
/// negated before fitting.
pub fn fit_power_law_oriented(
    observations: &[CurveObservation],
    orientation: Orientation,
) -> Result<PowerLawFit, SurrogateError> {
    let s = orientation.sign();
    let flipped: Vec<CurveObservation> = observations
        .iter()
        .map(|o| CurveObservation::new(o.n, s * o.y, o.se))
        .collect();
    fit_power_law(&flipped)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(points: &[(f64, f64)]) -> Vec<CurveObservation> {
        points.iter().map(|&(n, y)| CurveObservation::new(n, y, 0.0)).collect()
    }

    #[test]
    fn too_few_points() {
        assert!(matches!(
            gp_fit(&obs(&[(100.0, 0.5)])),
            Err(SurrogateError::TooFewPoints { .. })
        ));
        assert!(matches!(
            gp_fit(&obs(&[(100.0, 0.5), (100.0, 0.6)])),
            Err(SurrogateError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn two_point_interpolation() {
        let o = obs(&[(100.0, 0.6), (1000.0, 0.85)]);
        let m = gp_fit(&o).unwrap();
        for p in &o {
            let (mean, sd) = m.predict(p.n);
            assert!((mean - p.y).abs() < 1e-8, "{mean} vs {}", p.y);
            assert!(sd < 1e-4);
        }
    }

    #[test]
    fn constant_data_gives_constant_posterior() {
        let o: Vec<CurveObservation> = [50.0, 300.0, 2000.0, 9000.0]
            .iter()
            .map(|&n| CurveObservation::new(n, 0.73, 0.01))
            .collect();
        let m = gp_fit(&o).unwrap();
        for n in log_space(50.0, 9000.0, 40) {
            assert!((m.predict(n).0 - 0.73).abs() < 1e-6);
        }
    }

    #[test]
    fn far_extrapolation_reverts_to_prior_sd() {
        let o = obs(&[(100.0, 0.6), (400.0, 0.75), (1600.0, 0.82), (6400.0, 0.86)]);
        let m = gp_fit(&o).unwrap();
        let (_, sd) = m.predict(1e30);
        assert!((sd - m.sigma_f * m.scale).abs() < 1e-6 * m.scale);
    }

    #[test]
    fn selected_hyperparameters_dominate_grid() {
        let o = vec![
            CurveObservation::new(60.0, 0.31, 0.05),
            CurveObservation::new(250.0, 0.62, 0.03),
            CurveObservation::new(1000.0, 0.83, 0.02),
            CurveObservation::new(4000.0, 0.91, 0.01),
            CurveObservation::new(16000.0, 0.97, 0.01),
        ];
        let m = gp_fit(&o).unwrap();
        assert_eq!(m.grid.len(), GRID_SIZE * GRID_SIZE);
        for g in &m.grid {
            assert!(m.log_marginal_likelihood >= g.log_marginal_likelihood);
        }
    }

    #[test]
    fn crossing_outcomes() {
        let o = obs(&[(100.0, 0.6), (400.0, 0.75), (1600.0, 0.82), (6400.0, 0.86)]);
        let m = gp_fit(&o).unwrap();
        assert_eq!(
            find_crossing(&m, 0.1, Orientation::Maximize, 100.0, 6400.0),
            Crossing::AlreadySatisfied
        );
        assert_eq!(
            find_crossing(&m, 5.0, Orientation::Maximize, 100.0, 6400.0),
            Crossing::Unreachable
        );
        match find_crossing(&m, 0.8, Orientation::Maximize, 100.0, 6400.0) {
            Crossing::Found { n_hat, ci_low, ci_high } => {
                assert!(ci_low <= n_hat && n_hat <= ci_high);
                assert!((400..=1600).contains(&n_hat));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn minimize_orientation_crossing() {
        // A decreasing loss curve crossing 0.2 between 400 and 1600.
        let o = obs(&[(100.0, 0.4), (400.0, 0.25), (1600.0, 0.18), (6400.0, 0.14)]);
        let m = gp_fit(&o).unwrap();
        match find_crossing(&m, 0.2, Orientation::Minimize, 100.0, 6400.0) {
            Crossing::Found { n_hat, .. } => assert!((400..=1600).contains(&n_hat)),
            other => panic!("{other:?}"),
        }
        assert_eq!(
            find_crossing(&m, 0.5, Orientation::Minimize, 100.0, 6400.0),
            Crossing::AlreadySatisfied
        );
    }

    #[test]
    fn power_law_needs_four_points() {
        assert!(fit_power_law(&obs(&[(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)])).is_err());
    }

    #[test]
    fn power_law_constant_data() {
        let f = fit_power_law(&obs(&[(100.0, 0.7), (400.0, 0.7), (1600.0, 0.7), (6400.0, 0.7)]))
            .unwrap();
        assert!(f.b.abs() < 1e-12);
        assert!((f.a - 0.7).abs() < 1e-12);
    }

    #[test]
    fn power_law_orientation_adapter() {
        let pts: Vec<(f64, f64)> = [100.0, 400.0, 1600.0, 6400.0]
            .iter()
            .map(|&n: &f64| (n, -(0.8 - 0.5 * n.powf(-0.5))))
            .collect();
        let f = fit_power_law_oriented(&obs(&pts), Orientation::Minimize).unwrap();
        assert!((f.a - 0.8).abs() < 0.005);
        assert!(f.alpha > 0.0);
    }
}

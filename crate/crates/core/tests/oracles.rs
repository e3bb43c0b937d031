mod common;

use approx::assert_abs_diff_eq;
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use samplecurve::datagen::{tune_scale, Dataset, GeneratorSpec, OutcomeType};
use samplecurve::math::sigmoid;
use samplecurve::metrics::{auc, brier, calibration_slope, mape, r_squared};
use samplecurve::models::{fit_linear, fit_logistic};
use samplecurve::rng::StreamId;
use samplecurve::simulate::quantile_se;
use samplecurve::surrogate::{find_crossing, fit_power_law, gp_fit, CurveObservation, Crossing};
use samplecurve::Orientation;

use common::{pairwise_auc, rng, solve_dense, tied_instance};

#[test]
fn logistic_matches_hand_newton() {
    let mut r = rng(3);
    let n = 50;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| vec![r.sample(StandardNormal), r.sample(StandardNormal)])
        .collect();
    let y: Vec<f64> = rows
        .iter()
        .map(|x| {
            let p = sigmoid(-0.3 + 0.8 * x[0] - 0.5 * x[1]);
            if r.random::<f64>() < p { 1.0 } else { 0.0 }
        })
        .collect();

    let mut beta = [0.0f64; 3];
    for _ in 0..50 {
        let mut g = vec![0.0; 3];
        let mut h = vec![vec![0.0; 3]; 3];
        for (x, yi) in rows.iter().zip(&y) {
            let z = [1.0, x[0], x[1]];
            let mu = sigmoid(beta[0] + beta[1] * x[0] + beta[2] * x[1]);
            for a in 0..3 {
                g[a] += (yi - mu) * z[a];
                for b in 0..3 {
                    h[a][b] += mu * (1.0 - mu) * z[a] * z[b];
                }
            }
        }
        let step = solve_dense(h, g);
        for a in 0..3 {
            beta[a] += step[a];
        }
    }

    let data = Dataset::from_rows(OutcomeType::Binary, &rows, y, None);
    let fit = fit_logistic(&data, 0.0, 100).unwrap();
    assert!(fit.converged && !fit.separation);
    assert_abs_diff_eq!(fit.intercept, beta[0], epsilon = 1e-6);
    assert_abs_diff_eq!(fit.coefficients[0], beta[1], epsilon = 1e-6);
    assert_abs_diff_eq!(fit.coefficients[1], beta[2], epsilon = 1e-6);
}

#[test]
fn linear_matches_normal_equations() {
    let mut r = rng(4);
    let rows: Vec<Vec<f64>> = (0..40)
        .map(|_| (0..3).map(|_| r.sample(StandardNormal)).collect())
        .collect();
    let y: Vec<f64> = rows
        .iter()
        .map(|x| 1.0 + 2.0 * x[0] - x[1] + 0.5 * x[2] + 0.3 * r.sample::<f64, _>(StandardNormal))
        .collect();
    let mut xtx = vec![vec![0.0; 4]; 4];
    let mut xty = vec![0.0; 4];
    for (x, yi) in rows.iter().zip(&y) {
        let z = [1.0, x[0], x[1], x[2]];
        for a in 0..4 {
            xty[a] += z[a] * yi;
            for b in 0..4 {
                xtx[a][b] += z[a] * z[b];
            }
        }
    }
    let beta = solve_dense(xtx, xty);
    let fit = fit_linear(&Dataset::from_rows(OutcomeType::Continuous, &rows, y, None)).unwrap();
    assert_abs_diff_eq!(fit.intercept, beta[0], epsilon = 1e-8);
    for j in 0..3 {
        assert_abs_diff_eq!(fit.coefficients[j], beta[j + 1], epsilon = 1e-8);
    }
}

#[test]
fn auc_matches_pairwise_on_small_cases() {
    let labels = [1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
    let scores = [0.9, 0.9, 0.4, 0.2, 0.2, 0.7];
    assert_eq!(auc(&scores, &labels).unwrap(), pairwise_auc(&scores, &labels));
    let mut r = rng(9);
    for _ in 0..50 {
        let (s, l) = tied_instance(&mut r);
        assert_eq!(auc(&s, &l).unwrap(), pairwise_auc(&s, &l));
    }
}

#[test]
fn brier_and_mape_match_hand_formulas() {
    let p = [0.1, 0.8, 0.35, 0.6];
    let y = [0.0, 1.0, 1.0, 0.0];
    let truth = [0.2, 0.7, 0.3, 0.5];
    let hand_brier = (0.01 + 0.04 + 0.4225 + 0.36) / 4.0;
    let hand_mape = (0.1 + 0.1 + 0.05 + 0.1) / 4.0;
    assert_abs_diff_eq!(brier(&p, &y).unwrap(), hand_brier, epsilon = 1e-12);
    assert_abs_diff_eq!(mape(&p, &truth).unwrap(), hand_mape, epsilon = 1e-12);
}

#[test]
fn calibration_slope_recovers_inverse_scale() {
    let mut r = rng(12);
    let n = 100_000;
    let eta: Vec<f64> = (0..n).map(|_| 1.5 * r.sample::<f64, _>(StandardNormal) - 1.0).collect();
    let y: Vec<f64> = eta
        .iter()
        .map(|e| if r.random::<f64>() < sigmoid(*e) { 1.0 } else { 0.0 })
        .collect();
    for k in [0.5, 1.0, 2.0] {
        let predicted: Vec<f64> = eta.iter().map(|e| sigmoid(k * e)).collect();
        let slope = calibration_slope(&predicted, &y).unwrap();
        assert!((slope - 1.0 / k).abs() < 0.1, "k = {k}: slope {slope}");
    }
}

#[test]
fn quantile_se_near_asymptotic_value() {
    let mut r = rng(21);
    let values: Vec<f64> = (0..200).map(|_| r.sample(StandardNormal)).collect();
    let q: f64 = 0.2;
    let normal = Normal::new(0.0, 1.0).unwrap();
    let asymptotic = (q * (1.0 - q) / 200.0).sqrt() / normal.pdf(normal.inverse_cdf(q));
    let se = quantile_se(&values, q, 400, 5).unwrap();
    assert!(se > asymptotic / 2.0 && se < asymptotic * 2.0, "{se} vs {asymptotic}");
}

#[test]
fn generated_predictors_have_requested_correlation() {
    let mut spec = GeneratorSpec::binary(4, 0.3, 0.75);
    spec.predictor_correlation = 0.3;
    let generator = tune_scale(&spec, 100_000, 8).unwrap();
    let data = generator.generate(100_000, 8, StreamId::dev(100_000, 0));
    let x = &data.predictors;
    let n = x.nrows() as f64;
    for a in 0..4 {
        for b in a..4 {
            let (ca, cb) = (x.column(a), x.column(b));
            let (ma, mb) = (ca.sum() / n, cb.sum() / n);
            let cov = ca.iter().zip(cb.iter()).map(|(u, v)| (u - ma) * (v - mb)).sum::<f64>() / n;
            let va = ca.iter().map(|u| (u - ma).powi(2)).sum::<f64>() / n;
            let vb = cb.iter().map(|v| (v - mb).powi(2)).sum::<f64>() / n;
            let corr = cov / (va * vb).sqrt();
            let want = if a == b { 1.0 } else { 0.3 };
            assert!((corr - want).abs() < 0.02, "({a},{b}): {corr}");
        }
    }
}

#[test]
fn continuous_generator_hits_r_squared() {
    let generator = tune_scale(&GeneratorSpec::continuous(5, 0.5), 100_000, 2).unwrap();
    let data = generator.generate(200_000, 2, StreamId::val(0, 0));
    let r2 = r_squared(&data.true_prob, &data.outcomes).unwrap();
    assert!((r2 - 0.5).abs() < 0.01, "{r2}");
}

fn kernel(a: f64, b: f64, sigma_f: f64, length: f64) -> f64 {
    sigma_f * sigma_f * (-0.5 * ((a - b) / length).powi(2)).exp()
}

#[test]
fn gp_posterior_matches_explicit_kernel_solve() {
    let obs = vec![
        CurveObservation::new(100.0, 0.62, 0.0),
        CurveObservation::new(1000.0, 0.81, 0.0),
        CurveObservation::new(10_000.0, 0.88, 0.0),
    ];
    let model = gp_fit(&obs).unwrap();
    let x: Vec<f64> = obs.iter().map(|o| o.n.ln()).collect();
    let z: Vec<f64> = obs.iter().map(|o| (o.y - model.center) / model.scale).collect();
    let k: Vec<Vec<f64>> = (0..3)
        .map(|i| {
            (0..3)
                .map(|j| {
                    kernel(x[i], x[j], model.sigma_f, model.length_scale)
                        + if i == j { model.jitter } else { 0.0 }
                })
                .collect()
        })
        .collect();
    let alpha = solve_dense(k, z);
    for n in [300.0, 3162.0, 20_000.0] {
        let xs = f64::ln(n);
        let mean: f64 = (0..3)
            .map(|i| kernel(x[i], xs, model.sigma_f, model.length_scale) * alpha[i])
            .sum();
        let oracle = model.center + model.scale * mean;
        assert_abs_diff_eq!(model.predict(n).0, oracle, epsilon = 1e-6);
    }
    for o in &obs {
        assert!((model.predict(o.n).0 - o.y).abs() < 1e-8);
    }
}

#[test]
fn gp_crossing_on_log_curve() {
    let obs: Vec<CurveObservation> = [10.0, 30.0, 100.0, 300.0, 3000.0, 10_000.0, 100_000.0, 1_000_000.0]
        .iter()
        .map(|&n: &f64| CurveObservation::new(n, n.ln() / 1e6f64.ln(), 0.0))
        .collect();
    let model = gp_fit(&obs).unwrap();
    match find_crossing(&model, 0.5, Orientation::Maximize, 10.0, 1e6) {
        Crossing::Found { n_hat, .. } => {
            assert!((n_hat as f64 - 1000.0).abs() <= 10.0, "{n_hat}");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn power_law_recovers_synthetic_curve() {
    let obs: Vec<CurveObservation> = [100.0, 400.0, 1600.0, 6400.0]
        .iter()
        .map(|&n: &f64| CurveObservation::new(n, 0.8 - 0.5 * n.powf(-0.5), 0.0))
        .collect();
    let fit = fit_power_law(&obs).unwrap();
    assert!((fit.a - 0.8).abs() < 0.005, "{fit:?}");
    assert!((fit.b - 0.5).abs() < 0.02, "{fit:?}");
    assert!((fit.alpha - 0.5).abs() < 0.05, "{fit:?}");
}

#[test]
fn assurance_quantile_sits_at_the_bad_tail() {
    use samplecurve::simulate::{summarize, PerformanceSample};
    let mut r = rng(33);
    let values: Vec<f64> = (0..37).map(|_| r.random::<f64>()).collect();
    let samples: Vec<PerformanceSample> = values
        .iter()
        .enumerate()
        .map(|(i, v)| PerformanceSample {
            n: 100,
            replicate: i,
            values: vec![Some(*v), Some(*v)],
            model_converged: true,
        })
        .collect();
    let cols = vec![
        ("auc".to_string(), Orientation::Maximize),
        ("brier".to_string(), Orientation::Minimize),
    ];
    let s = summarize(100, samples, &cols, 0.2, 100, 1);
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let hand = |q: f64| {
        let h = (sorted.len() - 1) as f64 * q;
        let lo = h.floor() as usize;
        sorted[lo] + (h - lo as f64) * (sorted[(lo + 1).min(sorted.len() - 1)] - sorted[lo])
    };
    assert_abs_diff_eq!(s.metrics[0].quantile.unwrap(), hand(0.2), epsilon = 1e-12);
    assert_abs_diff_eq!(s.metrics[1].quantile.unwrap(), hand(0.8), epsilon = 1e-12);
}

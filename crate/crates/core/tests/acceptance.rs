//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

mod common;

use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;

use samplecurve::baselines::{epv_sample_size, EpvInput};
use samplecurve::datagen::tune_scale;
use samplecurve::math::sigmoid;
use samplecurve::metrics::{auc, brier, calibration_slope, mape, BuiltinMetric, MetricSpec};
use samplecurve::models::LogisticStrategy;
use samplecurve::rng::StreamId;
use samplecurve::search::{
    curve_observations, empirical_crossing, resummarize, solve_curve, Criterion, MetricStatus,
    SampleSizeResult, Solver, SolverConfig,
};
use samplecurve::simulate::run_at_n;
use samplecurve::surrogate::{find_crossing, gp_fit, Crossing, CurveObservation};
use samplecurve::Orientation;

use common::{case_spec, pairwise_auc, rng, solve_dense, tied_instance, REFERENCE_N};

const SEED: u64 = 20240601;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
}

fn case_config(i: usize) -> SolverConfig {
    SolverConfig::new(
        case_spec(i),
        vec![MetricSpec::absolute("calibration_slope", 0.9)],
        SEED,
    )
}

fn case_studies(case1: &SampleSizeResult, others: &[SampleSizeResult]) -> Outcome {
    let all: Vec<&SampleSizeResult> = std::iter::once(case1).chain(others).collect();
    let mut pass = true;
    let mut parts = Vec::new();
    for (r, reference) in all.iter().zip(REFERENCE_N) {
        let n = r.n_required.unwrap_or(0);
        let ratio = n as f64 / reference as f64;
        pass &= (0.5..=2.0).contains(&ratio);
        parts.push(format!("{n} vs {reference}"));
    }
    outcome(pass, parts.join(", "))
}

fn epv_exact() -> Outcome {
    let a = epv_sample_size(&EpvInput::new(10, 0.063)).unwrap();
    let b = epv_sample_size(&EpvInput::new(17, 0.25)).unwrap();
    outcome(a == 1588 && b == 680, format!("case 1 {a}, case 3 {b}"))
}

fn metric_oracles() -> Outcome {
    let mut r = rng(SEED);
    let mut auc_ok = 0;
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let (scores, labels) = tied_instance(&mut r);
        if auc(&scores, &labels).unwrap() == pairwise_auc(&scores, &labels) {
            auc_ok += 1;
        }
        let p: Vec<f64> = scores.iter().map(|s| 0.05 + 0.9 * s.clamp(0.0, 1.0)).collect();
        let truth: Vec<f64> = (0..p.len()).map(|_| r.random_range(0.01..0.99)).collect();
        let mut sq = 0.0;
        let mut abs = 0.0;
        for i in 0..p.len() {
            sq += (p[i] - labels[i]) * (p[i] - labels[i]);
            abs += (p[i] - truth[i]).abs();
        }
        let n = p.len() as f64;
        worst = worst
            .max((brier(&p, &labels).unwrap() - sq / n).abs())
            .max((mape(&p, &truth).unwrap() - abs / n).abs());
    }
    outcome(
        auc_ok == 200 && worst <= 1e-12,
        format!("auc exact on {auc_ok}/200, brier/mape max error {worst:.1e}"),
    )
}

fn slope_reparameterization() -> Outcome {
    let start = Instant::now();
    let mut r = rng(SEED + 4);
    let eta: Vec<f64> = (0..100_000)
        .map(|_| 1.2 * r.sample::<f64, _>(StandardNormal) - 1.5)
        .collect();
    let y: Vec<f64> = eta
        .iter()
        .map(|e| if r.random::<f64>() < sigmoid(*e) { 1.0 } else { 0.0 })
        .collect();
    let mut pass = true;
    let mut parts = Vec::new();
    for k in [0.5, 1.0, 2.0] {
        let predicted: Vec<f64> = eta.iter().map(|e| sigmoid(k * e)).collect();
        let slope = calibration_slope(&predicted, &y).unwrap();
        pass &= (slope - 1.0 / k).abs() <= 0.1;
        parts.push(format!("k={k}: {slope:.4}"));
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs <= 30.0;
    outcome(pass, format!("{} in {secs:.1}s", parts.join(", ")))
}

fn generator_tuning() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for i in 0..3 {
        let spec = case_spec(i);
        let g = tune_scale(&spec, 200_000, SEED).unwrap();
        let data = g.generate(1_000_000, SEED, StreamId::val(1_000_000, 99));
        let prevalence = data.event_rate();
        let a = auc(&data.true_prob, &data.outcomes).unwrap();
        let ok = (prevalence - spec.target_prevalence).abs() <= 0.002
            && (a - spec.target_performance).abs() <= 0.005;
        pass &= ok;
        parts.push(format!("case {}: prev {prevalence:.4}, auc {a:.4}", i + 1));
    }
    outcome(pass, parts.join("; "))
}

fn kernel(a: f64, b: f64, sigma_f: f64, length: f64) -> f64 {
    sigma_f * sigma_f * (-0.5 * ((a - b) / length).powi(2)).exp()
}

fn gp_correctness() -> Outcome {
    let noiseless: Vec<CurveObservation> = [(60.0, 0.41), (250.0, 0.66), (1000.0, 0.8), (4000.0, 0.87), (16000.0, 0.9)]
        .iter()
        .map(|&(n, y)| CurveObservation::new(n, y, 0.0))
        .collect();
    let m = gp_fit(&noiseless).unwrap();
    let residual = noiseless
        .iter()
        .map(|o| (m.predict(o.n).0 - o.y).abs())
        .fold(0.0, f64::max);

    let three = &noiseless[1..4];
    let m3 = gp_fit(three).unwrap();
    let x: Vec<f64> = three.iter().map(|o| o.n.ln()).collect();
    let z: Vec<f64> = three.iter().map(|o| (o.y - m3.center) / m3.scale).collect();
    let k: Vec<Vec<f64>> = (0..3)
        .map(|i| {
            (0..3)
                .map(|j| kernel(x[i], x[j], m3.sigma_f, m3.length_scale) + if i == j { m3.jitter } else { 0.0 })
                .collect()
        })
        .collect();
    let alpha = solve_dense(k, z);
    let xs = 500f64.ln();
    let oracle = m3.center
        + m3.scale * (0..3).map(|i| kernel(x[i], xs, m3.sigma_f, m3.length_scale) * alpha[i]).sum::<f64>();
    let kernel_err = (m3.predict(500.0).0 - oracle).abs();

    let log_curve: Vec<CurveObservation> = [10.0, 40.0, 150.0, 600.0, 2500.0, 10_000.0, 100_000.0, 1e6]
        .iter()
        .map(|&n: &f64| CurveObservation::new(n, n.ln() / 1e6f64.ln(), 0.0))
        .collect();
    let crossing = match find_crossing(&gp_fit(&log_curve).unwrap(), 0.5, Orientation::Maximize, 10.0, 1e6) {
        Crossing::Found { n_hat, .. } => n_hat as f64,
        _ => f64::NAN,
    };
    let rel = (crossing - 1000.0).abs() / 1000.0;
    outcome(
        residual < 1e-8 && kernel_err < 1e-6 && rel <= 0.01,
        format!("residual {residual:.1e}, kernel solve error {kernel_err:.1e}, crossing {crossing}"),
    )
}

fn determinism(case1_single: &SampleSizeResult) -> Outcome {
    let many = pool(8).install(|| Solver::new(case_config(0)).run().unwrap());
    let a = case1_single.to_json();
    let b = many.to_json();
    outcome(a == b, format!("{} bytes at 1 thread, {} at 8, identical: {}", a.len(), b.len(), a == b))
}

fn rank(status: MetricStatus, n: Option<f64>) -> f64 {
    match status {
        MetricStatus::AlreadySatisfied => 0.0,
        MetricStatus::Solved => n.unwrap(),
        MetricStatus::Unreachable => f64::INFINITY,
    }
}

fn show(ranks: &[f64]) -> Vec<String> {
    ranks
        .iter()
        .map(|v| if v.is_finite() { format!("{v:.0}") } else { "unreachable".into() })
        .collect()
}

fn frozen_monotonicity(result: &SampleSizeResult) -> Outcome {
    let (n_min, n_max) = (result.n_min, result.n_max);
    let criterion = result.criterion;
    let (obs, failed) = curve_observations(&result.summaries, 0, criterion);
    let thresholds = [0.7, 0.8, 0.85, 0.88, 0.9, 0.92, 0.95, 0.98];
    let by_threshold: Vec<f64> = thresholds
        .iter()
        .map(|&t| {
            let (c, _) = solve_curve(&obs, failed, t, Orientation::Maximize, n_min, n_max);
            rank(c.status, c.n_hat)
        })
        .collect();
    let threshold_ok = by_threshold.windows(2).all(|w| w[0] <= w[1]);

    let deltas = [0.6, 0.7, 0.8, 0.9, 0.95];
    let mut gp_by_delta = Vec::new();
    let mut empirical_by_delta = Vec::new();
    for &d in &deltas {
        let frozen: Vec<_> = result
            .summaries
            .iter()
            .map(|s| resummarize(s, 1.0 - d, 200, SEED))
            .collect();
        let crit = Criterion::Assurance { delta: d };
        let (o, f) = curve_observations(&frozen, 0, crit);
        let (c, _) = solve_curve(&o, f, 0.9, Orientation::Maximize, n_min, n_max);
        gp_by_delta.push(rank(c.status, c.n_hat));
        empirical_by_delta.push(empirical_crossing(&o, 0.9, Orientation::Maximize).unwrap_or(f64::INFINITY));
    }
    let delta_ok = gp_by_delta.windows(2).all(|w| w[0] <= w[1])
        && empirical_by_delta.windows(2).all(|w| w[0] <= w[1]);
    outcome(
        threshold_ok && delta_ok,
        format!(
            "by threshold {:?}; by assurance (surrogate) {:?}; by assurance (observed sizes) {:?}",
            show(&by_threshold),
            show(&gp_by_delta),
            show(&empirical_by_delta)
        ),
    )
}

fn learning_curve_shape(result: &SampleSizeResult) -> Outcome {
    let start = Instant::now();
    let sizes = [100, 400, 1600, 6400];
    let mut means = Vec::new();
    let mut ses = Vec::new();
    for n in sizes {
        let s = run_at_n(
            &result.generator,
            Arc::new(LogisticStrategy::unpenalized()),
            vec![Arc::new(BuiltinMetric::CalibrationSlope)],
            n,
            500,
            50_000,
            SEED,
        )
        .unwrap();
        let m = &s.metrics[0];
        means.push(m.mean.unwrap());
        ses.push(m.mean_se(s.replicates).unwrap());
    }
    let mut inversions = 0;
    let mut within = true;
    for i in 0..3 {
        if means[i + 1] < means[i] {
            inversions += 1;
            within &= means[i] - means[i + 1] <= 2.0 * (ses[i].powi(2) + ses[i + 1].powi(2)).sqrt();
        }
    }
    let toward_one = (1.0 - means[3]).abs() < (1.0 - means[0]).abs();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        inversions <= 1 && within && toward_one && secs <= 600.0,
        format!(
            "means {:?} in {secs:.0}s",
            means.iter().map(|m| format!("{m:.4}")).collect::<Vec<_>>()
        ),
    )
}

fn report(results: &mut Vec<bool>, k: usize, name: &str, o: Outcome) {
    println!(
        "criterion {k} [{name}]: {} - {}",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail
    );
    results.push(o.pass);
}

fn main() {
    let mut results = Vec::new();

    report(&mut results, 2, "EPV baseline", epv_exact());
    report(&mut results, 3, "metric oracles", metric_oracles());
    report(&mut results, 4, "calibration slope reparameterization", slope_reparameterization());
    report(&mut results, 5, "generator tuning", generator_tuning());
    report(&mut results, 6, "GP correctness", gp_correctness());

    let single = pool(1);
    let mut timings = Vec::new();
    let mut solved = Vec::new();
    for i in 0..3 {
        let start = Instant::now();
        let r = single.install(|| Solver::new(case_config(i)).run().unwrap());
        timings.push(start.elapsed().as_secs_f64());
        solved.push(r);
    }
    let mut c1 = case_studies(&solved[0], &solved[1..]);
    c1.detail.push_str(&format!(
        " (runtimes {})",
        timings.iter().map(|t| format!("{t:.0}s")).collect::<Vec<_>>().join(", ")
    ));
    report(&mut results, 1, "case-study reproduction", c1);
    report(&mut results, 7, "determinism across thread counts", determinism(&solved[0]));
    report(&mut results, 8, "monotonicity on frozen outputs", frozen_monotonicity(&solved[0]));
    report(&mut results, 9, "learning-curve shape", learning_curve_shape(&solved[0]));

    let failed = results.iter().filter(|p| !**p).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

//! End-to-end sample-size search for a binary outcome with ten predictors,
//! targeting a calibration slope of 0.9 with 80% assurance.
//!
//! The default budget takes about a minute on one core. Pass `--quick` for a
//! reduced run.

use samplecurve::search::Criterion;
use samplecurve::{GeneratorSpec, MetricSpec, Solver, SolverConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let quick = std::env::args().any(|a| a == "--quick");
    let mut config = SolverConfig::new(
        GeneratorSpec::binary(10, 0.063, 0.82),
        vec![
            MetricSpec::absolute("calibration_slope", 0.9),
            MetricSpec::deviation("auc", None, 0.02),
        ],
        2024,
    );
    config.criterion = Criterion::Assurance { delta: 0.8 };
    if quick {
        config.r_search = 30;
        config.r_confirm = 60;
        config.validation_size = 20_000;
        config.n_max = 20_000;
        config.max_iterations = 4;
    }

    let result = Solver::new(config).run()?;
    for m in &result.metrics {
        println!(
            "{:<18} threshold {:.4}: {:?}, n = {:?} [{:?}, {:?}]",
            m.metric, m.threshold, m.status, m.n_required, m.ci_low, m.ci_high
        );
    }
    println!("recommended n: {:?}", result.n_required);
    if let Some(epv) = &result.baselines.epv {
        println!("10 EPV rule:   {}", epv.n);
    }
    if let Some(c) = &result.confirmation {
        for check in &c.checks {
            println!(
                "confirmed at {} with {} replicates: {} {:?} (pass: {})",
                c.n, c.replicates, check.metric, check.statistic, check.passed
            );
        }
    }
    println!("flags: {:?}", result.flags);
    Ok(())
}

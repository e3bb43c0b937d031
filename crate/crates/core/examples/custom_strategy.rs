//! Plugging a custom modelling strategy and a custom metric into the solver.
//!
//! The strategy fits an unpenalized logistic model and then shrinks the
//! coefficients by a fixed factor. The metric is calibration-in-the-large,
//! the gap between mean predicted risk and the observed event rate.

use std::sync::Arc;

use samplecurve::datagen::Dataset;
use samplecurve::metrics::{Metric, MetricError};
use samplecurve::models::{fit_logistic, FittedModel, ModelError, ModelStrategy};
use samplecurve::{GeneratorSpec, MetricSpec, Orientation, Solver, SolverConfig};

struct Shrunk {
    factor: f64,
}

impl ModelStrategy for Shrunk {
    fn tag(&self) -> &str {
        "shrunk_logistic"
    }

    fn fit(&self, data: &Dataset, _seed: u64) -> Result<FittedModel, ModelError> {
        let mut model = fit_logistic(data, 0.0, 100)?;
        for b in &mut model.coefficients {
            *b *= self.factor;
        }
        model.strategy_tag = self.tag().to_string();
        Ok(model)
    }
}

struct CalibrationInTheLarge;

impl Metric for CalibrationInTheLarge {
    fn name(&self) -> &str {
        "citl"
    }

    fn orientation(&self) -> Orientation {
        Orientation::Minimize
    }

    fn evaluate(&self, predicted: &[f64], labels: &[f64], _oracle: &[f64]) -> Result<f64, MetricError> {
        let n = predicted.len() as f64;
        let gap = predicted.iter().sum::<f64>() / n - labels.iter().sum::<f64>() / n;
        Ok(gap.abs())
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut config = SolverConfig::new(
        GeneratorSpec::binary(6, 0.3, 0.75),
        vec![
            MetricSpec::absolute("citl", 0.01),
            MetricSpec::absolute("calibration_slope", 0.85),
        ],
        3,
    );
    config.strategy_tag = "shrunk_logistic".into();
    config.r_search = 40;
    config.r_confirm = 80;
    config.validation_size = 20_000;
    config.n_max = 20_000;
    config.max_iterations = 5;

    let result = Solver::new(config)
        .with_strategy(Arc::new(Shrunk { factor: 0.9 }))
        .with_metric(Arc::new(CalibrationInTheLarge))
        .run()?;

    for m in &result.metrics {
        println!("{}: {:?} at n = {:?}", m.metric, m.status, m.n_required);
    }
    println!("recommended n: {:?}", result.n_required);
    Ok(())
}

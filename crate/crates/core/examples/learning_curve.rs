//! Simulate the learning curve of an unpenalized logistic model at a handful
//! of development sizes.

use std::sync::Arc;

use samplecurve::datagen::{tune_scale, GeneratorSpec};
use samplecurve::metrics::{BuiltinMetric, Metric};
use samplecurve::models::LogisticStrategy;
use samplecurve::simulate::{SimulationSettings, Simulator};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let generator = tune_scale(&GeneratorSpec::binary(8, 0.2, 0.78), 200_000, 5)?;
    let metrics: Vec<Arc<dyn Metric>> = vec![
        Arc::new(BuiltinMetric::Auc),
        Arc::new(BuiltinMetric::CalibrationSlope),
        Arc::new(BuiltinMetric::Brier),
    ];
    let mut settings = SimulationSettings::new(5);
    settings.validation_size = 20_000;
    let sim = Simulator::new(
        generator,
        Arc::new(LogisticStrategy::unpenalized()),
        metrics,
        settings,
    )?;

    println!("{:>6} {:>22} {:>8} {:>8} {:>8}", "n", "metric", "mean", "sd", "q20");
    for n in [100, 300, 1000, 3000] {
        let summary = sim.run_at_n(n, 60)?;
        for m in &summary.metrics {
            println!(
                "{:>6} {:>22} {:>8.4} {:>8.4} {:>8.4}",
                n,
                m.metric,
                m.mean.unwrap_or(f64::NAN),
                m.sd.unwrap_or(f64::NAN),
                m.quantile.unwrap_or(f64::NAN)
            );
        }
    }
    Ok(())
}

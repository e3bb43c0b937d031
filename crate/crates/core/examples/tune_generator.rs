//! Tune a binary population to a target prevalence and AUC, then check it on
//! a fresh validation draw.

use samplecurve::datagen::{tune_scale, GeneratorSpec};
use samplecurve::metrics::auc;
use samplecurve::rng::StreamId;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut spec = GeneratorSpec::binary(10, 0.063, 0.82);
    spec.n_noise = 4;
    spec.predictor_correlation = 0.2;

    let generator = tune_scale(&spec, 200_000, 11)?;
    println!(
        "intercept {:.4}, scale {:.4}",
        generator.intercept, generator.coefficient_scale
    );
    println!(
        "tuned prevalence {:.4}, AUC {:.4} (se {:.4})",
        generator.achieved_prevalence.unwrap_or(f64::NAN),
        generator.achieved_performance,
        generator.achieved_performance_se
    );

    let check = generator.generate(300_000, 11, StreamId::val(0, 0));
    println!(
        "fresh draw: event rate {:.4}, AUC of true risk {:.4}",
        check.event_rate(),
        auc(&check.true_prob, &check.outcomes)?
    );

    println!("{}", generator.to_json());
    Ok(())
}

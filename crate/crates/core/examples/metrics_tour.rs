//! The built-in performance metrics on one simulated validation set.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use samplecurve::math::sigmoid;
use samplecurve::metrics::{auc, brier, calibration_slope, mape};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let eta: Vec<f64> = (0..50_000)
        .map(|_| 1.2 * rng.sample::<f64, _>(StandardNormal) - 1.5)
        .collect();
    let truth: Vec<f64> = eta.iter().map(|e| sigmoid(*e)).collect();
    let labels: Vec<f64> = truth
        .iter()
        .map(|p| if rng.random::<f64>() < *p { 1.0 } else { 0.0 })
        .collect();

    // An overfitted model: right ranking, predictions too extreme.
    let overfit: Vec<f64> = eta.iter().map(|e| sigmoid(1.5 * e)).collect();

    for (name, predicted) in [("true risk", &truth), ("overfit", &overfit)] {
        println!("{name}");
        println!("  auc               {:.4}", auc(predicted, &labels)?);
        println!("  calibration slope {:.4}", calibration_slope(predicted, &labels)?);
        println!("  brier             {:.4}", brier(predicted, &labels)?);
        println!("  mape              {:.4}", mape(predicted, &truth)?);
    }
    Ok(())
}

//! Fit the Gaussian-process surrogate to a noisy learning curve, locate where
//! it crosses a threshold, and compare with a power-law fit.

use samplecurve::surrogate::{find_crossing, fit_power_law, gp_fit, Crossing, CurveObservation};
use samplecurve::Orientation;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let truth = |n: f64| 0.95 - 0.9 * n.powf(-0.45);
    let noise = [0.004, -0.003, 0.002, -0.001, 0.0015, -0.002];
    let obs: Vec<CurveObservation> = [60.0, 200.0, 700.0, 2500.0, 9000.0, 30_000.0]
        .iter()
        .zip(noise)
        .map(|(&n, e)| CurveObservation::new(n, truth(n) + e, 0.004))
        .collect();

    let model = gp_fit(&obs)?;
    println!(
        "sigma_f {:.3}, length scale {:.3}, log ML {:.3}",
        model.sigma_f, model.length_scale, model.log_marginal_likelihood
    );
    for n in [100.0, 1000.0, 10_000.0, 50_000.0] {
        let (mean, sd) = model.predict(n);
        println!("n = {n:>7}: {mean:.4} +/- {sd:.4}  (truth {:.4})", truth(n));
    }

    let threshold = 0.93;
    match find_crossing(&model, threshold, Orientation::Maximize, 50.0, 50_000.0) {
        Crossing::Found { n_hat, ci_low, ci_high } => {
            println!("reaches {threshold} at n = {n_hat} [{ci_low}, {ci_high}]")
        }
        other => println!("{other:?}"),
    }

    let pl = fit_power_law(&obs)?;
    println!(
        "power law: {:.4} - {:.4} n^-{:.3} (sse {:.2e})",
        pl.a, pl.b, pl.alpha, pl.sse
    );
    Ok(())
}

//! Events-per-variable sample sizes for a few designs.

use samplecurve::baselines::{epv_sample_size, EpvInput, DEFAULT_EPV};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("{:>4} {:>10} {:>6} {:>8}", "p", "prevalence", "epv", "n");
    for (p, prevalence) in [(10, 0.063), (44, 0.11), (17, 0.25)] {
        for epv in [DEFAULT_EPV, 20.0] {
            let n = epv_sample_size(&EpvInput { p, prevalence, epv })?;
            println!("{p:>4} {prevalence:>10} {epv:>6} {n:>8}");
        }
    }
    Ok(())
}

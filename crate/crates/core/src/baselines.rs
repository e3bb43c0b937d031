//! Heuristic sample-size rules reported next to the simulation result.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_EPV: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("prevalence must lie strictly between 0 and 1, got {0}")]
    InvalidPrevalence(f64),
    #[error("predictor count must be at least 1")]
    NoPredictors,
    #[error("events per variable must be positive, got {0}")]
    InvalidEpv(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpvInput {
    pub p: usize,
    pub prevalence: f64,
    #[serde(default = "default_epv")]
    pub epv: f64,
}

fn default_epv() -> f64 {
    DEFAULT_EPV
}

impl EpvInput {
    pub fn new(p: usize, prevalence: f64) -> Self {
        EpvInput {
            p,
            prevalence,
            epv: DEFAULT_EPV,
        }
    }
}

/// Events-per-variable rule: `ceil(epv * p / min(prevalence, 1 - prevalence))`.
///
/// ```
/// use samplecurve::baselines::{epv_sample_size, EpvInput};
/// assert_eq!(epv_sample_size(&EpvInput::new(10, 0.063)).unwrap(), 1588);
/// ```
pub fn epv_sample_size(input: &EpvInput) -> Result<u64, BaselineError> {
    if !(input.prevalence > 0.0 && input.prevalence < 1.0) {
        return Err(BaselineError::InvalidPrevalence(input.prevalence));
    }
    if input.p == 0 {
        return Err(BaselineError::NoPredictors);
    }
    if !(input.epv > 0.0 && input.epv.is_finite()) {
        return Err(BaselineError::InvalidEpv(input.epv));
    }
    let events_rate = input.prevalence.min(1.0 - input.prevalence);
    let raw = input.epv * input.p as f64 / events_rate;
    // Guard against products like 680.0000000001 from binary rounding.
    let nearest = raw.round();
    let n = if (raw - nearest).abs() < 1e-9 * raw.max(1.0) {
        nearest
    } else {
        raw.ceil()
    };
    Ok(n as u64)
}

/// Baseline block of the result JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baselines {
    pub epv: Option<EpvReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpvReport {
    pub input: EpvInput,
    pub n: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn case_study_values() {
        assert_eq!(epv_sample_size(&EpvInput::new(10, 0.063)).unwrap(), 1588);
        assert_eq!(epv_sample_size(&EpvInput::new(17, 0.25)).unwrap(), 680);
    }

    #[test]
    fn majority_event_uses_minority_class() {
        assert_eq!(
            epv_sample_size(&EpvInput::new(17, 0.75)).unwrap(),
            epv_sample_size(&EpvInput::new(17, 0.25)).unwrap()
        );
    }

    #[test]
    fn invalid_inputs() {
        for prev in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(matches!(
                epv_sample_size(&EpvInput::new(10, prev)),
                Err(BaselineError::InvalidPrevalence(_))
            ));
        }
        assert_eq!(
            epv_sample_size(&EpvInput::new(0, 0.2)),
            Err(BaselineError::NoPredictors)
        );
        let mut bad = EpvInput::new(3, 0.2);
        bad.epv = 0.0;
        assert!(epv_sample_size(&bad).is_err());
    }
}

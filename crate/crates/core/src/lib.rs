//! Minimum development-sample size for clinical prediction models.
//!
//! The crate simulates learning curves (performance of a fitted model as a
//! function of development-sample size `n`) from a tuned parametric data
//! generator, models the curve with a Gaussian-process surrogate, and solves
//! for the smallest `n` whose mean performance (mean criterion) or lower
//! quantile of performance (assurance criterion) clears a target.
//!
//! The pieces, bottom up:
//!
//! - [`datagen`]: generator specification, tuning to a target prevalence and
//!   large-sample AUC / R², and reproducible sampling.
//! - [`models`]: logistic (IRLS, optional ridge) and linear least-squares
//!   strategies behind the [`models::ModelStrategy`] trait.
//! - [`metrics`]: AUC, calibration slope, Brier score, MAPE, R².
//! - [`simulate`]: replicate fits at one `n` and their summary.
//! - [`surrogate`]: GP regression over `ln n`, inverse-power-law fit, and
//!   threshold crossings.
//! - [`search`]: the adaptive solver tying everything together.
//! - [`baselines`]: the events-per-variable heuristic.
//! - [`cli`]: configuration files, exports and the batch front end.
//!
//! See the `examples/` directory of this crate for runnable walkthroughs.

pub mod baselines;
pub mod cli;
pub mod datagen;
pub mod math;
pub mod metrics;
pub mod models;
pub mod report;
pub mod rng;
pub mod search;
pub mod simulate;
pub mod surrogate;

pub use datagen::{Dataset, GeneratorSpec, OutcomeType, TunedGenerator};
pub use metrics::{MetricSpec, Orientation};
pub use models::{FittedModel, ModelStrategy};
pub use search::{solve_sample_size, Criterion, SampleSizeResult, Solver, SolverConfig};
pub use simulate::PerformanceSummary;

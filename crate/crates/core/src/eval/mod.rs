//! Metrics, the simulated recognizer, the synthetic benchmark and the
//! experiment harness.

pub mod experiment;
pub mod metrics;
pub mod noise;
pub mod synthetic;

pub use experiment::{run_experiment, ExperimentConfig, ExperimentReport, Variant};
pub use metrics::{accuracy, k_folds, mean_stdev, Fold};
pub use noise::{synthesize_noisy, NoiseSpec};
pub use synthetic::{generate, SyntheticBenchmark, SyntheticConfig};

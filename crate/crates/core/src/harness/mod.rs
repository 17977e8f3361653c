//! Desk-scale experiments: synthetic data, protocol and metrics.

pub mod experiment;
pub mod metrics;
pub mod synthetic;

pub use experiment::{
    cross_validate_step_alpha, run_experiment, AlphaCurve, CvDocument, ExperimentConfig,
    ExperimentResult, ResultDocument, Workbench, DEFAULT_ALPHAS,
};
pub use metrics::{average_precision, f1_score, ranking};
pub use synthetic::{
    generate_synthetic, initial_labels, split, CollectionFiles, Concept, Dataset, Split,
    SyntheticConfig,
};

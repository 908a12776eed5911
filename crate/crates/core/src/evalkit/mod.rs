//! Scorer metrics, trajectory coverage and downstream manipulation success.

pub mod downstream;
pub mod metrics;
pub mod priors;

pub use downstream::{
    downstream_success, replay, sample_downstream_tasks, DownstreamConfig, DownstreamOutcome, DownstreamReport,
    DownstreamTask, OracleScorer, PriorModel, Selection,
};
pub use metrics::{
    classification_metrics, coverage, mean_pairwise_distance, trajectory_distance, trajectory_distance_terms,
    ConfusionCounts, Metrics, TrajectoryDistance, COVERAGE_THRESHOLD,
};
pub use priors::{eval_priors, scorer_counts, PriorsConfig, PriorsRow};

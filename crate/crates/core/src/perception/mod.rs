//! Point-cloud encoder, actionability / proposal / scoring heads and their training.

pub mod bundle;
pub mod curiosity;
pub mod data;
pub mod pointnet;
pub mod train;

pub use bundle::{groups, trajectory_features, trajectory_from_features, PerceptionBundle, PerceptionConfig, PreparedCloud};
pub use curiosity::{fifty_fifty, joint_curiosity_finetune, BundleCuriosity, JointConfig, JointReport};
pub use data::{
    cloud_key, generate_negative, observation_cloud, offset_range, record_cloud, task_offset, CloudCache, NegativeConfig,
    NegativeKind, Sample, TrainingPair,
};
pub use pointnet::{CloudPlan, PointNet, PointNetConfig, SaLevel};
pub use train::{
    actionability_target, actionability_targets, condition_rows, kl_divergence, logs_to_csv, predict_scores,
    proposal_scores, reconstruction_terms, rot6d_of_euler, scorer_loss, train_actionability, train_proposal,
    train_scorer, vae_loss, ActionabilityConfig, EpochLog, ProposalConfig, ScorerConfig, StageOrder, VaeLoss,
};

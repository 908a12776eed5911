//! Interaction-driven actionable priors for articulated objects.
//!
//! An RL explorer learns to open and close procedurally generated doors and
//! drawers with a flying gripper; the collected interactions supervise point
//! cloud heads that predict where to act, how to act, and whether a proposed
//! trajectory would succeed.

pub mod artsim;
pub mod baselines;
pub mod config;
pub mod datakit;
pub mod error;
pub mod evalkit;
pub mod explorer;
pub mod geometry;
pub mod nn;
pub mod perception;
pub mod pipeline;
pub mod seeding;

pub use error::{Error, Result};

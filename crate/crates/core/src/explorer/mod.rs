//! TD3 explorer with hindsight relabeling and an optional curiosity term.

mod buffer;
mod episode;
mod record;
mod reward;
mod state;
mod tasks;
mod td3;
mod trainer;

pub use buffer::{ReplayBuffer, Transition};
pub use episode::{
    apply_action, her_relabel, run_episode, ActionScale, CuriosityFn, Episode, EpisodeContext, Exploration, StepLog,
};
pub use record::{InteractionRecord, ObjectRef};
pub use reward::{compute_reward, reward_terms, RewardConfig, RewardTerms};
pub use state::{build_state, retarget_state, Action, RlState, ACTION_DIM, STATE_DIM};
pub use tasks::{category_groups, sample_theta, sample_training_task, task_sign, TaskRanges, TrainingTask};
pub use td3::{Actor, ActorSnapshot, Critic, LossReport, Policy, Td3, Td3Config};
pub use trainer::{CuriositySource, EpochStats, Explorer, ExplorerConfig};

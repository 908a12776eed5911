use std::path::Path;

use log::info;
use serde::{Deserialize, Serialize};

use super::buffer::ReplayBuffer;
use super::episode::{her_relabel, run_episode, ActionScale, CuriosityFn, Episode, EpisodeContext, Exploration};
use super::record::InteractionRecord;
use super::reward::RewardConfig;
use super::tasks::{sample_training_task, TaskRanges, TrainingTask};
use super::td3::{Td3, Td3Config};
use crate::artsim::{reset_episode_at, EngineConfig, Fleet, Intrinsics};
use crate::error::{Error, Result};
use crate::geometry::{InteractionType, MAX_WAYPOINTS};
use crate::seeding;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplorerConfig {
    pub td3: Td3Config,
    pub reward: RewardConfig,
    pub action_scale: ActionScale,
    pub ranges: TaskRanges,
    pub engine: EngineConfig,
    pub intrinsics: Intrinsics,
    pub buffer_size: usize,
    pub episodes_per_epoch: usize,
    /// Episodes with uniformly random actions before the policy acts.
    pub warmup_episodes: usize,
    pub updates_per_step: usize,
    pub noise_init: f64,
    pub noise_decay_every: usize,
    pub her: bool,
    /// Smallest |Δθ| worth relabeling.
    pub her_min_theta: f64,
    pub max_steps: usize,
}

impl Default for ExplorerConfig {
    fn default() -> Self {
        ExplorerConfig {
            td3: Td3Config::default(),
            reward: RewardConfig::default(),
            action_scale: ActionScale::default(),
            ranges: TaskRanges::default(),
            engine: EngineConfig::default(),
            intrinsics: Intrinsics::default(),
            buffer_size: 2048,
            episodes_per_epoch: 100,
            warmup_episodes: 100,
            updates_per_step: 1,
            noise_init: 0.1,
            noise_decay_every: 500,
            her: true,
            her_min_theta: 0.01,
            max_steps: MAX_WAYPOINTS,
        }
    }
}

impl ExplorerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 || self.max_steps > MAX_WAYPOINTS {
            return Err(Error::Config(format!("max_steps must be in 1..={MAX_WAYPOINTS}")));
        }
        if self.episodes_per_epoch == 0 || self.td3.batch_size == 0 || self.buffer_size < self.td3.batch_size {
            return Err(Error::Config("episodes_per_epoch, batch_size must be positive and buffer_size >= batch_size".into()));
        }
        Ok(())
    }
}

/// Builds a per-task curiosity scorer; implemented by the perception stack.
pub trait CuriositySource {
    fn for_task<'a>(&'a self, task: &TrainingTask) -> Result<Box<CuriosityFn<'a>>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub her_added: usize,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub noise: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ExplorerState {
    interaction: InteractionType,
    epoch: usize,
    episodes: u64,
    seed: u64,
    config_hash: String,
}

/// One conditional policy for a single interaction type, with its buffer.
pub struct Explorer {
    pub config: ExplorerConfig,
    pub interaction: InteractionType,
    pub td3: Td3,
    pub buffer: ReplayBuffer,
    pub epoch: usize,
    episodes: u64,
    seed: u64,
}

impl Explorer {
    pub fn new(config: ExplorerConfig, interaction: InteractionType, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(Explorer {
            td3: Td3::new(config.td3.clone(), seeding::derive(seed, "td3", 0))?,
            buffer: ReplayBuffer::new(config.buffer_size),
            config,
            interaction,
            epoch: 0,
            episodes: 0,
            seed,
        })
    }

    /// Writes the networks, replay buffer and counters into `dir`.
    pub fn save(&self, dir: &Path, config_hash: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.td3.save(dir, "td3", config_hash)?;
        let mut buf = Vec::new();
        for t in self.buffer.iter() {
            serde_json::to_writer(&mut buf, t)?;
            buf.push(b'\n');
        }
        let bp = dir.join("buffer.jsonl");
        std::fs::write(&bp, buf).map_err(|e| Error::io(&bp, e))?;
        let state = ExplorerState {
            interaction: self.interaction,
            epoch: self.epoch,
            episodes: self.episodes,
            seed: self.seed,
            config_hash: config_hash.to_string(),
        };
        let sp = dir.join("explorer.json");
        std::fs::write(&sp, serde_json::to_vec_pretty(&state)?).map_err(|e| Error::io(&sp, e))
    }

    /// Restores an explorer saved by [`Explorer::save`] under `config`.
    pub fn load(config: ExplorerConfig, dir: &Path, expected_hash: Option<&str>) -> Result<Self> {
        let sp = dir.join("explorer.json");
        let state: ExplorerState = serde_json::from_slice(&std::fs::read(&sp).map_err(|e| Error::io(&sp, e))?)?;
        if let Some(h) = expected_hash {
            if h != state.config_hash {
                return Err(Error::ProvenanceMismatch {
                    expected: h.to_string(),
                    found: state.config_hash,
                });
            }
        }
        let mut ex = Explorer::new(config, state.interaction, state.seed)?;
        ex.td3.load(dir, "td3", expected_hash)?;
        let bp = dir.join("buffer.jsonl");
        let text = std::fs::read_to_string(&bp).map_err(|e| Error::io(&bp, e))?;
        for line in text.lines().filter(|l| !l.is_empty()) {
            ex.buffer.push(serde_json::from_str(line)?);
        }
        ex.epoch = state.epoch;
        ex.episodes = state.episodes;
        Ok(ex)
    }

    pub fn episodes_done(&self) -> u64 {
        self.episodes
    }

    /// Exploration noise, halved every `noise_decay_every` epochs.
    pub fn noise(&self) -> f64 {
        let halvings = self.epoch / self.config.noise_decay_every.max(1);
        self.config.noise_init * 0.5f64.powi(halvings as i32)
    }

    pub fn sample_task(&self, fleet: &Fleet, seed: u64) -> Result<TrainingTask> {
        sample_training_task(fleet, self.interaction, &self.config.ranges, self.config.intrinsics, seed)
    }

    /// Rolls out the current policy on `task` without learning.
    pub fn rollout(
        &self,
        task: &TrainingTask,
        exploration: Exploration,
        curiosity: Option<&CuriosityFn>,
        seed: u64,
    ) -> Result<Episode> {
        let mut rng = seeding::rng(seed);
        let env = reset_episode_at(task.object.clone(), task.task, task.contact, task.start_q, &mut rng, &self.config.engine)?;
        let ctx = EpisodeContext {
            scale: self.config.action_scale,
            reward: self.config.reward,
            exploration,
            epoch: self.epoch,
            camera: task.camera,
            curiosity,
        };
        let mut ep = run_episode(&self.td3, env, &ctx, &mut rng)?;
        ep.steps.truncate(self.config.max_steps - 1);
        Ok(ep)
    }

    /// 100 (configurable) training episodes with HER and TD3 updates.
    pub fn train_epoch(
        &mut self,
        fleet: &Fleet,
        curiosity: Option<&dyn CuriositySource>,
    ) -> Result<(EpochStats, Vec<InteractionRecord>)> {
        let noise = self.noise();
        let mut stats = EpochStats {
            epoch: self.epoch,
            episodes: 0,
            successes: 0,
            success_rate: 0.0,
            her_added: 0,
            critic_loss: 0.0,
            actor_loss: 0.0,
            noise,
        };
        let (mut closs, mut aloss, mut nc, mut na) = (0.0, 0.0, 0usize, 0usize);
        let mut records = Vec::with_capacity(self.config.episodes_per_epoch);
        let mut update_rng = seeding::rng(seeding::derive(self.seed, "updates", self.epoch as u64));
        for _ in 0..self.config.episodes_per_epoch {
            let idx = self.episodes;
            self.episodes += 1;
            let task = self.sample_task(fleet, seeding::derive(self.seed, "task", idx))?;
            let exploration = if idx < self.config.warmup_episodes as u64 {
                Exploration::Uniform
            } else {
                Exploration::Gaussian(noise)
            };
            let scorer = match curiosity {
                Some(c) => Some(c.for_task(&task)?),
                None => None,
            };
            let ep = self.rollout(&task, exploration, scorer.as_deref(), seeding::derive(self.seed, "rollout", idx))?;
            stats.episodes += 1;
            if ep.record.success {
                stats.successes += 1;
            }
            let n_steps = ep.steps.len();
            self.buffer.extend(ep.transitions());
            if self.config.her && !ep.record.success && ep.record.achieved.abs() >= self.config.her_min_theta {
                let relabeled = her_relabel(&ep, &self.config.reward, scorer.as_deref())?;
                self.buffer.extend(relabeled.transitions());
                stats.her_added += 1;
            }
            records.push(ep.record);
            if self.buffer.len() >= self.config.td3.batch_size {
                for _ in 0..n_steps * self.config.updates_per_step {
                    let r = self.td3.update(&self.buffer, &mut update_rng)?;
                    closs += r.critic_loss;
                    nc += 1;
                    if let Some(a) = r.actor_loss {
                        aloss += a;
                        na += 1;
                    }
                }
            }
        }
        stats.success_rate = stats.successes as f64 / stats.episodes.max(1) as f64;
        stats.critic_loss = if nc > 0 { closs / nc as f64 } else { 0.0 };
        stats.actor_loss = if na > 0 { aloss / na as f64 } else { 0.0 };
        info!(
            "{} epoch {}: success {:.3}, her {}, critic {:.4}, actor {:.4}",
            self.interaction, self.epoch, stats.success_rate, stats.her_added, stats.critic_loss, stats.actor_loss
        );
        self.epoch += 1;
        Ok((stats, records))
    }

    /// Greedy success rate on `n` fresh tasks.
    pub fn evaluate(&self, fleet: &Fleet, n: usize, seed: u64) -> Result<f64> {
        let mut ok = 0;
        for i in 0..n as u64 {
            let task = self.sample_task(fleet, seeding::derive(seed, "eval-task", i))?;
            let ep = self.rollout(&task, Exploration::Greedy, None, seeding::derive(seed, "eval-rollout", i))?;
            ok += usize::from(ep.record.success);
        }
        Ok(ok as f64 / n.max(1) as f64)
    }
}

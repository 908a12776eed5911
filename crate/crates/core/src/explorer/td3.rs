use std::path::Path;

use candle_core::{DType, Device, Tensor};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::buffer::{ReplayBuffer, Transition};
use super::state::{Action, RlState, ACTION_DIM, STATE_DIM};
use crate::error::{Error, Result};
use crate::nn::{to_f64_vec, Adam, Dense, Mlp, ParamStore};
use crate::seeding;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Td3Config {
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub gamma: f64,
    pub tau: f64,
    pub policy_delay: usize,
    pub target_noise: f64,
    pub noise_clip: f64,
    pub lr: f64,
    pub batch_size: usize,
    /// Multiplies rewards inside the critic targets only.
    pub reward_scale: f64,
}

impl Default for Td3Config {
    fn default() -> Self {
        Td3Config {
            actor_hidden: vec![512; 4],
            critic_hidden: vec![512; 3],
            gamma: 0.99,
            tau: 0.005,
            policy_delay: 2,
            target_noise: 0.2,
            noise_clip: 0.5,
            lr: 1e-4,
            batch_size: 512,
            reward_scale: 0.01,
        }
    }
}

/// Deterministic actor with a tanh-squashed mean head and a log-std head
/// that TD3 itself never reads.
#[derive(Debug, Clone)]
pub struct Actor {
    trunk: Mlp,
    mean: Dense,
    log_std: Dense,
}

impl Actor {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let mut dims = vec![STATE_DIM];
        dims.extend_from_slice(hidden);
        let h = *dims.last().unwrap();
        Ok(Actor {
            trunk: Mlp::new(store, "actor.trunk", &dims, rng)?,
            mean: Dense::new(store, "actor.mean", h, ACTION_DIM, rng)?,
            log_std: Dense::new(store, "actor.log_std", h, ACTION_DIM, rng)?,
        })
    }

    pub fn forward(&self, states: &Tensor) -> Result<Tensor> {
        let h = self.features(states)?;
        Ok(self.mean.forward(&h)?.tanh()?)
    }

    pub fn log_std(&self, states: &Tensor) -> Result<Tensor> {
        self.log_std.forward(&self.features(states)?)
    }

    fn features(&self, states: &Tensor) -> Result<Tensor> {
        self.trunk.forward_relu(states)
    }
}

#[derive(Debug, Clone)]
pub struct Critic {
    net: Mlp,
}

impl Critic {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let mut dims = vec![STATE_DIM + ACTION_DIM];
        dims.extend_from_slice(hidden);
        dims.push(1);
        Ok(Critic {
            net: Mlp::new(store, name, &dims, rng)?,
        })
    }

    pub fn forward(&self, states: &Tensor, actions: &Tensor) -> Result<Tensor> {
        let x = Tensor::cat(&[states, actions], 1)?;
        Ok(self.net.forward(&x)?.squeeze(1)?)
    }
}

struct Nets {
    actor_store: ParamStore,
    actor: Actor,
    critic_store: ParamStore,
    q1: Critic,
    q2: Critic,
}

impl Nets {
    fn build(cfg: &Td3Config, seed: u64) -> Result<Nets> {
        let mut rng = seeding::rng(seed);
        let mut actor_store = ParamStore::new(DType::F32);
        let actor = Actor::new(&mut actor_store, &cfg.actor_hidden, &mut rng)?;
        let mut critic_store = ParamStore::new(DType::F32);
        let q1 = Critic::new(&mut critic_store, "q1", &cfg.critic_hidden, &mut rng)?;
        let q2 = Critic::new(&mut critic_store, "q2", &cfg.critic_hidden, &mut rng)?;
        Ok(Nets {
            actor_store,
            actor,
            critic_store,
            q1,
            q2,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossReport {
    pub critic_loss: f64,
    pub actor_loss: Option<f64>,
}

/// Greedy policy interface shared by the learner and frozen snapshots.
pub trait Policy {
    fn act(&self, state: &RlState) -> Result<Action>;
}

/// Immutable actor copy handed to collection workers.
pub struct ActorSnapshot {
    _store: ParamStore,
    actor: Actor,
}

impl Policy for ActorSnapshot {
    fn act(&self, state: &RlState) -> Result<Action> {
        act_with(&self.actor, state)
    }
}

fn act_with(actor: &Actor, state: &RlState) -> Result<Action> {
    let s = Tensor::from_vec(state.iter().map(|&x| x as f32).collect::<Vec<_>>(), (1, STATE_DIM), &Device::Cpu)?;
    let a = to_f64_vec(&actor.forward(&s)?)?;
    let mut out = [0.0; ACTION_DIM];
    out.copy_from_slice(&a);
    Ok(out)
}

pub struct Td3 {
    pub config: Td3Config,
    online: Nets,
    target: Nets,
    actor_opt: Adam,
    critic_opt: Adam,
    updates: usize,
    seed: u64,
}

impl Td3 {
    pub fn new(config: Td3Config, seed: u64) -> Result<Self> {
        let online = Nets::build(&config, seed)?;
        let target = Nets::build(&config, seed)?;
        target.actor_store.copy_from(&online.actor_store)?;
        target.critic_store.copy_from(&online.critic_store)?;
        let actor_opt = Adam::new(online.actor_store.vars(), config.lr)?;
        let critic_opt = Adam::new(online.critic_store.vars(), config.lr)?;
        Ok(Td3 {
            config,
            online,
            target,
            actor_opt,
            critic_opt,
            updates: 0,
            seed,
        })
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    pub fn actor(&self) -> &Actor {
        &self.online.actor
    }

    pub fn snapshot(&self) -> Result<ActorSnapshot> {
        let mut store = ParamStore::new(DType::F32);
        let actor = Actor::new(&mut store, &self.config.actor_hidden, &mut seeding::rng(self.seed))?;
        store.copy_from(&self.online.actor_store)?;
        Ok(ActorSnapshot { _store: store, actor })
    }

    /// One TD3 step on a batch drawn from `buffer`.
    pub fn update<R: Rng + ?Sized>(&mut self, buffer: &ReplayBuffer, rng: &mut R) -> Result<LossReport> {
        let batch = buffer.sample(self.config.batch_size, rng)?;
        self.update_on_batch(&batch, rng)
    }

    pub fn update_on_batch<R: Rng + ?Sized>(&mut self, batch: &[Transition], rng: &mut R) -> Result<LossReport> {
        if batch.is_empty() {
            return Err(Error::Precondition("empty batch".into()));
        }
        let b = Batch::new(batch)?;
        let y = self.critic_target(&b, rng)?;
        let critic_loss = self.critic_loss_with(&b, &y)?;
        self.critic_opt.step(&critic_loss)?;
        self.updates += 1;
        let mut report = LossReport {
            critic_loss: critic_loss.to_scalar::<f32>()? as f64,
            actor_loss: None,
        };
        if self.updates % self.config.policy_delay.max(1) == 0 {
            let pi = self.online.actor.forward(&b.s)?;
            let actor_loss = self.online.q1.forward(&b.s, &pi)?.mean_all()?.neg()?;
            self.actor_opt.step(&actor_loss)?;
            report.actor_loss = Some(actor_loss.to_scalar::<f32>()? as f64);
            self.target.actor_store.soft_update(&self.online.actor_store, self.config.tau)?;
            self.target.critic_store.soft_update(&self.online.critic_store, self.config.tau)?;
        }
        Ok(report)
    }

    /// Clipped double-Q target with target policy smoothing.
    fn critic_target<R: Rng + ?Sized>(&self, b: &Batch, rng: &mut R) -> Result<Tensor> {
        let n = b.len;
        let normal = Normal::new(0.0, self.config.target_noise.max(0.0)).unwrap();
        let c = self.config.noise_clip;
        let eps: Vec<f32> = (0..n * ACTION_DIM)
            .map(|_| (normal.sample(rng) as f64).clamp(-c, c) as f32)
            .collect();
        let eps = Tensor::from_vec(eps, (n, ACTION_DIM), &Device::Cpu)?;
        let a_next = (self.target.actor.forward(&b.s2)? + eps)?.clamp(-1f32, 1f32)?;
        let q1 = self.target.q1.forward(&b.s2, &a_next)?;
        let q2 = self.target.q2.forward(&b.s2, &a_next)?;
        let q = q1.minimum(&q2)?;
        let discount = ((1.0 - &b.done)? * self.config.gamma)?;
        let y = ((&b.r * self.config.reward_scale)? + (discount * q)?)?;
        Ok(y.detach())
    }

    fn critic_loss_with(&self, b: &Batch, y: &Tensor) -> Result<Tensor> {
        let q1 = self.online.q1.forward(&b.s, &b.a)?;
        let q2 = self.online.q2.forward(&b.s, &b.a)?;
        let l1 = (q1 - y)?.sqr()?.mean_all()?;
        let l2 = (q2 - y)?.sqr()?.mean_all()?;
        Ok((l1 + l2)?)
    }

    /// Critic loss on `batch` against a fixed target, without updating anything.
    pub fn critic_loss<R: Rng + ?Sized>(&self, batch: &[Transition], rng: &mut R) -> Result<f64> {
        let b = Batch::new(batch)?;
        let y = self.critic_target(&b, rng)?;
        Ok(self.critic_loss_with(&b, &y)?.to_scalar::<f32>()? as f64)
    }

    /// Online Q estimates of both critics.
    pub fn q_values(&self, batch: &[Transition]) -> Result<(Vec<f64>, Vec<f64>)> {
        let b = Batch::new(batch)?;
        Ok((
            to_f64_vec(&self.online.q1.forward(&b.s, &b.a)?)?,
            to_f64_vec(&self.online.q2.forward(&b.s, &b.a)?)?,
        ))
    }

    /// Critic target values (exposed for checks against a hand-computed oracle).
    pub fn target_values<R: Rng + ?Sized>(&self, batch: &[Transition], rng: &mut R) -> Result<Vec<f64>> {
        to_f64_vec(&self.critic_target(&Batch::new(batch)?, rng)?)
    }

    /// Target-network Q values at `(s', a')` for both critics.
    pub fn target_q(&self, states: &[RlState], actions: &[Action]) -> Result<(Vec<f64>, Vec<f64>)> {
        let s = rows(states)?;
        let a = rows(actions)?;
        Ok((
            to_f64_vec(&self.target.q1.forward(&s, &a)?)?,
            to_f64_vec(&self.target.q2.forward(&s, &a)?)?,
        ))
    }

    pub fn target_actions(&self, states: &[RlState]) -> Result<Vec<Vec<f64>>> {
        let a = self.target.actor.forward(&rows(states)?)?;
        Ok(a.to_dtype(DType::F64)?.to_vec2::<f64>()?)
    }

    pub fn save(&self, dir: &Path, prefix: &str, config_hash: &str) -> Result<()> {
        let meta = [("updates", self.updates.to_string())];
        self.online.actor_store.save(&dir.join(format!("{prefix}_actor.safetensors")), config_hash, &meta)?;
        self.online.critic_store.save(&dir.join(format!("{prefix}_critic.safetensors")), config_hash, &meta)?;
        self.target.actor_store.save(&dir.join(format!("{prefix}_actor_target.safetensors")), config_hash, &meta)?;
        self.target.critic_store.save(&dir.join(format!("{prefix}_critic_target.safetensors")), config_hash, &meta)
    }

    pub fn load(&mut self, dir: &Path, prefix: &str, config_hash: Option<&str>) -> Result<()> {
        let meta = self.online.actor_store.load(&dir.join(format!("{prefix}_actor.safetensors")), config_hash)?;
        self.online.critic_store.load(&dir.join(format!("{prefix}_critic.safetensors")), config_hash)?;
        self.target.actor_store.load(&dir.join(format!("{prefix}_actor_target.safetensors")), config_hash)?;
        self.target.critic_store.load(&dir.join(format!("{prefix}_critic_target.safetensors")), config_hash)?;
        self.updates = meta.get("updates").and_then(|u| u.parse().ok()).unwrap_or(0);
        Ok(())
    }
}

impl Policy for Td3 {
    fn act(&self, state: &RlState) -> Result<Action> {
        act_with(&self.online.actor, state)
    }
}

fn rows<const N: usize>(xs: &[[f64; N]]) -> Result<Tensor> {
    let flat: Vec<f32> = xs.iter().flat_map(|r| r.iter().map(|&v| v as f32)).collect();
    Ok(Tensor::from_vec(flat, (xs.len(), N), &Device::Cpu)?)
}

struct Batch {
    len: usize,
    s: Tensor,
    a: Tensor,
    r: Tensor,
    s2: Tensor,
    done: Tensor,
}

impl Batch {
    fn new(batch: &[Transition]) -> Result<Batch> {
        let n = batch.len();
        let s: Vec<RlState> = batch.iter().map(|t| t.state).collect();
        let s2: Vec<RlState> = batch.iter().map(|t| t.next_state).collect();
        let a: Vec<Action> = batch.iter().map(|t| t.action).collect();
        let r: Vec<f32> = batch.iter().map(|t| t.reward as f32).collect();
        let d: Vec<f32> = batch.iter().map(|t| if t.done { 1.0 } else { 0.0 }).collect();
        Ok(Batch {
            len: n,
            s: rows(&s)?,
            a: rows(&a)?,
            r: Tensor::from_vec(r, n, &Device::Cpu)?,
            s2: rows(&s2)?,
            done: Tensor::from_vec(d, n, &Device::Cpu)?,
        })
    }
}

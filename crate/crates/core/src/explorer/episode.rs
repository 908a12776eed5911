use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::buffer::Transition;
use super::record::{InteractionRecord, ObjectRef};
use super::reward::{reward_terms, RewardConfig, RewardTerms};
use super::state::{build_state, retarget_state, Action, RlState, ACTION_DIM};
use super::td3::Policy;
use crate::artsim::{check_success, CameraView, EpisodeState, TaskSpec};
use crate::error::{Error, Result};
use crate::geometry::{compose_residual, Trajectory, Vec3, MAX_WAYPOINTS};

/// Maps normalized actions in [-1, 1] to residual poses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActionScale {
    pub position: f64,
    pub euler: f64,
}

impl Default for ActionScale {
    fn default() -> Self {
        ActionScale {
            position: 0.25,
            euler: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exploration {
    Greedy,
    Gaussian(f64),
    Uniform,
}

/// Scorer confidence for a trajectory under a task, used by the curiosity term.
pub type CuriosityFn<'a> = dyn Fn(&Trajectory, &TaskSpec) -> Result<f64> + 'a;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    #[serde(with = "state_serde")]
    pub state: RlState,
    pub action: Action,
    #[serde(with = "state_serde")]
    pub next_state: RlState,
    pub delta_theta: f64,
    pub d_gc: f64,
    pub terms: RewardTerms,
    pub success: bool,
}

mod state_serde {
    use super::RlState;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(a: &RlState, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(a.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<RlState, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        v.try_into()
            .map_err(|v: Vec<f64>| serde::de::Error::invalid_length(v.len(), &"33 state entries"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub record: InteractionRecord,
    pub steps: Vec<StepLog>,
    pub grasp: Option<bool>,
}

impl Episode {
    /// Transitions for the replay buffer; only success terminates.
    pub fn transitions(&self) -> Vec<Transition> {
        self.steps
            .iter()
            .map(|s| Transition {
                state: s.state,
                action: s.action,
                reward: s.terms.total(),
                next_state: s.next_state,
                done: s.success,
            })
            .collect()
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.terms.total()).sum()
    }
}

pub struct EpisodeContext<'a> {
    pub scale: ActionScale,
    pub reward: RewardConfig,
    pub exploration: Exploration,
    pub epoch: usize,
    pub camera: CameraView,
    pub curiosity: Option<&'a CuriosityFn<'a>>,
}

/// Rolls out `policy` from a freshly reset environment: grasp first for pull
/// tasks, then up to four residual moves, stopping at the first success.
pub fn run_episode<R: Rng + ?Sized>(
    policy: &dyn Policy,
    mut env: EpisodeState,
    ctx: &EpisodeContext,
    rng: &mut R,
) -> Result<Episode> {
    let task = env.task;
    if task.interaction == crate::geometry::InteractionType::Pull {
        env.attempt_grasp()?;
    }
    let mut waypoints = vec![env.gripper];
    let mut steps = Vec::new();
    let mut prev = 0.0;
    for i in 0..MAX_WAYPOINTS - 1 {
        let state = build_state(&env);
        let action = choose_action(policy, &state, ctx.exploration, rng)?;
        let target = apply_action(&env.gripper, &action, &ctx.scale);
        let report = env.step_gripper(&target);
        waypoints.push(target);
        let dt = env.delta_theta();
        let success = check_success(&task, dt)?;
        let last = success || i == MAX_WAYPOINTS - 2;
        let curiosity = match (last, ctx.curiosity) {
            (true, Some(f)) => Some(f(&Trajectory::new(waypoints.clone(), task.interaction)?, &task)?),
            _ => None,
        };
        let terms = reward_terms(&ctx.reward, prev, dt, task.theta, report.d_gc, success, curiosity);
        steps.push(StepLog {
            state,
            action,
            next_state: build_state(&env),
            delta_theta: dt,
            d_gc: report.d_gc,
            terms,
            success,
        });
        prev = dt;
        if success {
            break;
        }
    }
    let achieved = env.delta_theta();
    let record = InteractionRecord {
        object: ObjectRef::of(&env.object),
        camera: ctx.camera,
        contact: env.contact,
        task,
        start_q: env.start_q,
        trajectory: Trajectory::new(waypoints, task.interaction)?,
        achieved,
        success: check_success(&task, achieved)?,
        epoch: ctx.epoch,
        provenance: String::new(),
    };
    Ok(Episode {
        record,
        steps,
        grasp: env.grasp,
    })
}

pub fn apply_action(
    prev: &crate::geometry::Waypoint,
    action: &Action,
    scale: &ActionScale,
) -> crate::geometry::Waypoint {
    let dp = Vec3::new(action[0], action[1], action[2]) * scale.position;
    let de = [action[3] * scale.euler, action[4] * scale.euler, action[5] * scale.euler];
    compose_residual(prev, dp, de)
}

fn choose_action<R: Rng + ?Sized>(policy: &dyn Policy, state: &RlState, mode: Exploration, rng: &mut R) -> Result<Action> {
    Ok(match mode {
        Exploration::Greedy => policy.act(state)?,
        Exploration::Gaussian(sigma) => {
            let mut a = policy.act(state)?;
            let normal = Normal::new(0.0, sigma.max(1e-12)).unwrap();
            for x in a.iter_mut() {
                *x = (*x + normal.sample(rng)).clamp(-1.0, 1.0);
            }
            a
        }
        Exploration::Uniform => {
            let mut a = [0.0; ACTION_DIM];
            a.iter_mut().for_each(|x| *x = rng.random_range(-1.0..=1.0));
            a
        }
    })
}

/// Hindsight relabeling: the achieved change becomes the task. The episode is
/// cut at the first step that already satisfies the new task, where a rollout
/// under that task would have stopped, and every reward is recomputed.
pub fn her_relabel(ep: &Episode, reward: &RewardConfig, curiosity: Option<&CuriosityFn>) -> Result<Episode> {
    let k = ep.record.achieved;
    if k == 0.0 || ep.steps.is_empty() {
        return Err(Error::Precondition("episode achieved no pose change; cannot relabel".into()));
    }
    let task = ep.record.task.with_theta(k)?;
    let mut stop = ep.steps.len() - 1;
    for (i, s) in ep.steps.iter().enumerate() {
        if check_success(&task, s.delta_theta)? {
            stop = i;
            break;
        }
    }
    let traj = ep.record.trajectory.truncated(stop + 2)?;
    let mut prev = 0.0;
    let mut steps = Vec::with_capacity(stop + 1);
    for (i, s) in ep.steps[..=stop].iter().enumerate() {
        let mut st = s.clone();
        retarget_state(&mut st.state, k);
        retarget_state(&mut st.next_state, k);
        let last = i == stop;
        let cur = match (last, curiosity) {
            (true, Some(f)) => Some(f(&traj, &task)?),
            _ => None,
        };
        st.success = last;
        st.terms = reward_terms(reward, prev, s.delta_theta, k, s.d_gc, last, cur);
        prev = s.delta_theta;
        steps.push(st);
    }
    let achieved = ep.steps[stop].delta_theta;
    let mut record = ep.record.clone();
    record.task = task;
    record.trajectory = traj;
    record.achieved = achieved;
    record.success = check_success(&task, achieved)?;
    Ok(Episode {
        record,
        steps,
        grasp: ep.grasp,
    })
}

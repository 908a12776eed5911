use std::sync::Arc;

use log::debug;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::artsim::{execute_trajectory, ArticulatedObject, CameraView, ContactPoint, EngineConfig, Fleet, Intrinsics, TaskSpec};
use crate::error::{Error, Result};
use crate::explorer::{sample_training_task, ObjectRef, TaskRanges};
use crate::geometry::{InteractionType, Trajectory};
use crate::perception::{observation_cloud, PerceptionBundle, PreparedCloud};
use crate::seeding;

/// A manipulation problem: object, start pose, view and task.
#[derive(Debug, Clone)]
pub struct DownstreamTask {
    pub object: Arc<ArticulatedObject>,
    pub start_q: f64,
    pub camera: CameraView,
    pub task: TaskSpec,
}

/// What the downstream procedure needs from a prior model.
pub trait PriorModel {
    fn observe(&self, task: &DownstreamTask, n_points: usize) -> Result<PreparedCloud>;
    fn actionability(&self, task: &DownstreamTask, pc: &PreparedCloud) -> Result<Vec<f64>>;
    fn propose(&self, task: &DownstreamTask, pc: &PreparedCloud, index: usize, k: usize, seed: u64) -> Result<Vec<Trajectory>>;
    fn score(&self, task: &DownstreamTask, pc: &PreparedCloud, index: usize, trajs: &[Trajectory]) -> Result<Vec<f64>>;
}

impl PriorModel for PerceptionBundle {
    fn observe(&self, t: &DownstreamTask, n_points: usize) -> Result<PreparedCloud> {
        let seed = ObjectRef::of(&t.object).seed;
        PerceptionBundle::prepare(self, observation_cloud(&t.object, seed, t.start_q, &t.camera, n_points)?)
    }

    fn actionability(&self, t: &DownstreamTask, pc: &PreparedCloud) -> Result<Vec<f64>> {
        self.actionability_map(pc, &t.task)
    }

    fn propose(&self, t: &DownstreamTask, pc: &PreparedCloud, index: usize, k: usize, seed: u64) -> Result<Vec<Trajectory>> {
        PerceptionBundle::propose(self, pc, index, &t.task, k, seed)
    }

    fn score(&self, t: &DownstreamTask, pc: &PreparedCloud, index: usize, trajs: &[Trajectory]) -> Result<Vec<f64>> {
        PerceptionBundle::score(self, pc, index, &t.task, trajs)
    }
}

/// Wraps a model and replaces its scores with engine replay outcomes.
pub struct OracleScorer<'a, M: PriorModel + ?Sized> {
    pub inner: &'a M,
    pub engine: EngineConfig,
}

impl<M: PriorModel + ?Sized> PriorModel for OracleScorer<'_, M> {
    fn observe(&self, t: &DownstreamTask, n_points: usize) -> Result<PreparedCloud> {
        self.inner.observe(t, n_points)
    }

    fn actionability(&self, t: &DownstreamTask, pc: &PreparedCloud) -> Result<Vec<f64>> {
        self.inner.actionability(t, pc)
    }

    fn propose(&self, t: &DownstreamTask, pc: &PreparedCloud, index: usize, k: usize, seed: u64) -> Result<Vec<Trajectory>> {
        self.inner.propose(t, pc, index, k, seed)
    }

    fn score(&self, t: &DownstreamTask, pc: &PreparedCloud, index: usize, trajs: &[Trajectory]) -> Result<Vec<f64>> {
        trajs
            .iter()
            .map(|tr| Ok(if replay(t, pc, index, tr, &self.engine)? { 1.0 } else { 0.0 }))
            .collect()
    }
}

/// Executes `traj` from cloud point `index`. Trajectories the engine rejects count as failures.
pub fn replay(t: &DownstreamTask, pc: &PreparedCloud, index: usize, traj: &Trajectory, engine: &EngineConfig) -> Result<bool> {
    let contact = ContactPoint::from_cloud(&t.object, &pc.cloud, index, t.start_q)?;
    match execute_trajectory(t.object.clone(), t.task, contact, t.start_q, traj, engine) {
        Ok(ex) => Ok(ex.success),
        Err(e @ (Error::Validation(_) | Error::Precondition(_) | Error::Infeasible(_))) => {
            debug!("replay rejected: {e}");
            Ok(false)
        }
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    /// Highest-actionability movable point, best-scored of `proposals`.
    #[default]
    Learned,
    /// Uniformly random movable point, a single random proposal.
    RandomControl,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DownstreamConfig {
    pub tasks: usize,
    pub proposals: usize,
    pub n_points: usize,
    pub selection: Selection,
}

impl Default for DownstreamConfig {
    fn default() -> Self {
        DownstreamConfig {
            tasks: 50,
            proposals: 100,
            n_points: 1024,
            selection: Selection::Learned,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DownstreamOutcome {
    pub object: String,
    pub theta: f64,
    pub point: usize,
    /// Model score of the executed proposal; none for the random control.
    pub score: Option<f64>,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DownstreamReport {
    /// Percentage of successful tasks.
    pub success_rate: f64,
    pub outcomes: Vec<DownstreamOutcome>,
}

/// Random manipulation problems with feasible start poses and visible movable parts.
pub fn sample_downstream_tasks(
    fleet: &Fleet,
    interaction: InteractionType,
    ranges: &TaskRanges,
    intrinsics: Intrinsics,
    n: usize,
    seed: u64,
) -> Result<Vec<DownstreamTask>> {
    (0..n as u64)
        .map(|i| {
            let t = sample_training_task(fleet, interaction, ranges, intrinsics, seeding::derive(seed, "downstream", i))?;
            Ok(DownstreamTask {
                object: t.object,
                start_q: t.start_q,
                camera: t.camera,
                task: t.task,
            })
        })
        .collect()
}

pub fn downstream_success<M: PriorModel + ?Sized>(
    model: &M,
    tasks: &[DownstreamTask],
    cfg: &DownstreamConfig,
    engine: &EngineConfig,
    seed: u64,
) -> Result<DownstreamReport> {
    let mut outcomes = Vec::with_capacity(tasks.len());
    for (i, t) in tasks.iter().enumerate() {
        let tseed = seeding::derive(seed, "downstream-task", i as u64);
        let pc = model.observe(t, cfg.n_points)?;
        let movable = pc.cloud.part_indices();
        if movable.is_empty() {
            return Err(Error::Precondition("observation shows no movable-part points".into()));
        }
        let (point, traj, score) = match cfg.selection {
            Selection::Learned => {
                let a = model.actionability(t, &pc)?;
                let point = *movable.iter().max_by(|&&x, &&y| a[x].total_cmp(&a[y])).expect("non-empty");
                let trajs = model.propose(t, &pc, point, cfg.proposals, tseed)?;
                let s = model.score(t, &pc, point, &trajs)?;
                let best = (0..trajs.len()).max_by(|&x, &y| s[x].total_cmp(&s[y])).ok_or_else(|| {
                    Error::Validation("at least one proposal is required".into())
                })?;
                (point, trajs[best].clone(), Some(s[best]))
            }
            Selection::RandomControl => {
                let mut rng = seeding::rng(tseed);
                let point = movable[rng.random_range(0..movable.len())];
                let traj = model.propose(t, &pc, point, 1, seeding::derive(tseed, "control", 0))?.remove(0);
                (point, traj, None)
            }
        };
        let success = replay(t, &pc, point, &traj, engine)?;
        outcomes.push(DownstreamOutcome {
            object: t.object.id(),
            theta: t.task.theta,
            point,
            score,
            success,
        });
    }
    let ok = outcomes.iter().filter(|o| o.success).count();
    Ok(DownstreamReport {
        success_rate: 100.0 * ok as f64 / outcomes.len().max(1) as f64,
        outcomes,
    })
}

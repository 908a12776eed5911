use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::bundle::{trajectory_features, PerceptionBundle, PreparedCloud};
use crate::artsim::{
    check_success, execute_trajectory, CameraView, render_pointcloud, ArticulatedObject, EngineConfig, JointKind, PointCloud,
    TaskSpec,
};
use crate::error::{Error, Result};
use crate::explorer::{InteractionRecord, ObjectRef};
use crate::geometry::{InteractionType, Mat3, Trajectory, Vec3, Waypoint, SERIALIZED_DIM};
use crate::seeding;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegativeKind {
    None,
    TaskOffset,
    GraspFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub record: InteractionRecord,
    pub positive: bool,
    pub kind: NegativeKind,
}

impl TrainingPair {
    pub fn positive(record: InteractionRecord) -> Self {
        TrainingPair {
            record,
            positive: true,
            kind: NegativeKind::None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NegativeConfig {
    pub revolute_cap_deg: f64,
    pub prismatic_cap: f64,
    /// Lower end of the offset range as a fraction of |θ|.
    pub min_fraction: f64,
    /// Share of grasp-failure negatives among pull negatives.
    pub grasp_failure_ratio: f64,
    pub max_tries: usize,
}

impl Default for NegativeConfig {
    fn default() -> Self {
        NegativeConfig {
            revolute_cap_deg: 45.0,
            prismatic_cap: 0.45,
            min_fraction: 0.1,
            grasp_failure_ratio: 0.5,
            max_tries: 64,
        }
    }
}

/// Offset magnitude range `[min_fraction |θ|, cap]`.
pub fn offset_range(theta: f64, kind: JointKind, cfg: &NegativeConfig) -> Result<[f64; 2]> {
    let cap = match kind {
        JointKind::Revolute => cfg.revolute_cap_deg.to_radians(),
        JointKind::Prismatic => cfg.prismatic_cap,
    };
    let lo = cfg.min_fraction * theta.abs();
    if lo > cap {
        return Err(Error::Infeasible(format!("offset range [{lo}, {cap}] is empty")));
    }
    Ok([lo, cap])
}

/// Negative for a successful record: redirect its task, or for pulls, sometimes
/// replay it with a gripper rolled so that the grasp fails.
pub fn generate_negative(
    record: &InteractionRecord,
    obj: &Arc<ArticulatedObject>,
    cfg: &NegativeConfig,
    engine: &EngineConfig,
    seed: u64,
) -> Result<TrainingPair> {
    if !record.success {
        return Err(Error::Precondition("negatives are generated from successful records".into()));
    }
    let mut rng = seeding::rng(seed);
    if record.task.interaction == InteractionType::Pull && rng.random::<f64>() < cfg.grasp_failure_ratio {
        if let Some(pair) = grasp_failure(record, obj, engine)? {
            return Ok(pair);
        }
    }
    task_offset(record, obj.joint_kind(), cfg, &mut rng)
}

pub fn task_offset<R: Rng + ?Sized>(
    record: &InteractionRecord,
    kind: JointKind,
    cfg: &NegativeConfig,
    rng: &mut R,
) -> Result<TrainingPair> {
    let theta = record.task.theta;
    let [lo, hi] = offset_range(theta, kind, cfg)?;
    for _ in 0..cfg.max_tries {
        let off = lo + (hi - lo) * rng.random::<f64>();
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let t = theta + sign * off;
        if t.abs() < 1e-6 {
            continue;
        }
        let task = record.task.with_theta(t)?;
        // the replay is deterministic, so the achieved change is unchanged
        if check_success(&task, record.achieved)? {
            continue;
        }
        let mut neg = record.clone();
        neg.task = task;
        neg.success = false;
        return Ok(TrainingPair {
            record: neg,
            positive: false,
            kind: NegativeKind::TaskOffset,
        });
    }
    Err(Error::Infeasible("no offset produced a failing task".into()))
}

fn grasp_failure(record: &InteractionRecord, obj: &Arc<ArticulatedObject>, engine: &EngineConfig) -> Result<Option<TrainingPair>> {
    let wps = record.trajectory.waypoints();
    let quarter = crate::geometry::euler_to_matrix([0.0, 0.0, std::f64::consts::FRAC_PI_2]);
    let mut rolled = wps.to_vec();
    rolled[0] = Waypoint {
        position: wps[0].position,
        orientation: orthonormal(wps[0].orientation * quarter),
    };
    let traj = Trajectory::new(rolled, record.task.interaction)?;
    let ex = execute_trajectory(obj.clone(), record.task, record.contact, record.start_q, &traj, engine)?;
    if ex.success || ex.grasp != Some(false) {
        return Ok(None);
    }
    let mut neg = record.clone();
    neg.trajectory = traj;
    neg.achieved = ex.delta_theta;
    neg.success = false;
    Ok(Some(TrainingPair {
        record: neg,
        positive: false,
        kind: NegativeKind::GraspFailure,
    }))
}

fn orthonormal(m: Mat3) -> Mat3 {
    let r6 = crate::geometry::rot6d_from_matrix_unchecked(&m);
    crate::geometry::rot6d_to_matrix(&r6).unwrap_or(m)
}

/// One network input row.
#[derive(Debug, Clone)]
pub struct Sample {
    pub cloud: Arc<PreparedCloud>,
    pub index: usize,
    pub contact: Vec3,
    pub task: TaskSpec,
    pub traj: [f64; SERIALIZED_DIM],
    pub label: f64,
}

/// Renders (and caches) the observation cloud of each record.
pub struct CloudCache {
    n_points: usize,
    objects: HashMap<ObjectRef, Arc<ArticulatedObject>>,
    clouds: HashMap<String, Arc<PreparedCloud>>,
}

impl CloudCache {
    pub fn new(n_points: usize) -> Self {
        CloudCache {
            n_points,
            objects: HashMap::new(),
            clouds: HashMap::new(),
        }
    }

    pub fn object(&mut self, r: &ObjectRef) -> Arc<ArticulatedObject> {
        self.objects.entry(r.clone()).or_insert_with(|| r.resolve()).clone()
    }

    pub fn add_objects(&mut self, objs: &[Arc<ArticulatedObject>]) {
        for o in objs {
            self.objects.insert(ObjectRef::of(o), o.clone());
        }
    }

    pub fn len(&self) -> usize {
        self.clouds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clouds.is_empty()
    }

    pub fn insert(&mut self, record: &InteractionRecord, cloud: Arc<PreparedCloud>) {
        self.clouds.insert(cloud_key(record), cloud);
    }

    pub fn cloud(&mut self, bundle: &PerceptionBundle, record: &InteractionRecord) -> Result<Arc<PreparedCloud>> {
        let key = cloud_key(record);
        if let Some(c) = self.clouds.get(&key) {
            return Ok(c.clone());
        }
        let obj = self.object(&record.object);
        let raw = record_cloud(record, &obj, self.n_points)?;
        let pc = Arc::new(bundle.prepare(raw)?);
        self.clouds.insert(key, pc.clone());
        Ok(pc)
    }

    /// Network input row for a training pair.
    pub fn sample(&mut self, bundle: &PerceptionBundle, pair: &TrainingPair) -> Result<Sample> {
        let r = &pair.record;
        let cloud = self.cloud(bundle, r)?;
        let obj = self.object(&r.object);
        let contact = r.contact.world(&obj, r.start_q);
        Ok(Sample {
            index: cloud.nearest(&contact),
            cloud,
            contact,
            task: r.task,
            traj: trajectory_features(&r.trajectory, &contact),
            label: if pair.positive { 1.0 } else { 0.0 },
        })
    }

    /// `n` rows at uniformly random movable-part points of the records' clouds,
    /// paired with the records' tasks (for actionability training).
    pub fn point_samples(&mut self, bundle: &PerceptionBundle, pairs: &[TrainingPair], n: usize, seed: u64) -> Result<Vec<Sample>> {
        if pairs.is_empty() {
            return Err(Error::Precondition("point sampling needs records".into()));
        }
        let mut rng = seeding::rng(seed);
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let r = &pairs[rng.random_range(0..pairs.len())].record;
            let cloud = self.cloud(bundle, r)?;
            let movable = cloud.cloud.part_indices();
            if movable.is_empty() {
                continue;
            }
            let index = movable[rng.random_range(0..movable.len())];
            out.push(Sample {
                contact: cloud.cloud.points[index],
                cloud,
                index,
                task: r.task,
                traj: [0.0; SERIALIZED_DIM],
                label: 0.0,
            });
        }
        Ok(out)
    }

    pub fn samples(&mut self, bundle: &PerceptionBundle, pairs: &[TrainingPair]) -> Result<Vec<Sample>> {
        pairs.iter().map(|p| self.sample(bundle, p)).collect()
    }
}

/// Identifies the observation: object, start pose and view.
pub fn cloud_key(r: &InteractionRecord) -> String {
    format!(
        "{}:{:016x}:{:016x}:{:016x}",
        r.object.id(),
        r.start_q.to_bits(),
        r.camera.azimuth.to_bits(),
        r.camera.elevation.to_bits()
    )
}

/// The partial cloud observed when `record` started.
pub fn record_cloud(record: &InteractionRecord, obj: &ArticulatedObject, n_points: usize) -> Result<PointCloud> {
    observation_cloud(obj, record.object.seed, record.start_q, &record.camera, n_points)
}

/// Same rendering as [`record_cloud`] for an episode that has not run yet.
pub fn observation_cloud(
    obj: &ArticulatedObject,
    object_seed: u64,
    start_q: f64,
    camera: &CameraView,
    n_points: usize,
) -> Result<PointCloud> {
    let seed = seeding::derive(object_seed, "cloud", start_q.to_bits() ^ camera.azimuth.to_bits());
    render_pointcloud(obj, start_q, camera, n_points, seed)
}

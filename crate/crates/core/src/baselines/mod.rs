//! Rule-based push/pull policies that use ground-truth joint and handle annotations.

use std::sync::Arc;

use nalgebra::{Rotation3, Unit};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::artsim::{
    execute_trajectory, ArticulatedObject, CameraView, ContactPoint, EngineConfig, Face, JointKind, PartFace, TaskSpec,
};
use crate::error::{Error, Result};
use crate::explorer::{InteractionRecord, ObjectRef};
use crate::geometry::{InteractionType, Mat3, Trajectory, Vec3, Waypoint};
use crate::seeding;

/// Number of motion waypoints after the initial pose.
pub const HEURISTIC_STEPS: usize = 4;

/// Keeps sampled contacts this far inside face edges.
const FACE_MARGIN: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct HeuristicPlan {
    pub contact: ContactPoint,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeuristicResult {
    /// `None` when no plan exists (pulling a handleless shape).
    pub record: Option<InteractionRecord>,
    pub success: bool,
}

/// Gripper frame with approach `z` and closing axis `closing` (made orthogonal to `z`).
fn gripper_frame(approach: &Vec3, closing: &Vec3) -> Mat3 {
    let z = approach.normalize();
    let y = (closing - z * closing.dot(&z)).normalize();
    Mat3::from_columns(&[y.cross(&z), y, z])
}

fn front_faces(obj: &ArticulatedObject, handle: bool) -> Vec<(PartFace, f64)> {
    let front = Vec3::new(0.0, 0.0, 1.0);
    let mut out = Vec::new();
    for (i, pb) in obj.part.iter().enumerate().filter(|(_, pb)| pb.handle == handle) {
        for axis in 0..3u8 {
            for positive in [false, true] {
                let face = Face { axis, positive };
                if pb.obb.face_normal(face).dot(&front) > 0.99 {
                    let h = pb.obb.half;
                    let area = 4.0 * h[((axis + 1) % 3) as usize] * h[((axis + 2) % 3) as usize];
                    out.push((PartFace { part_box: i as u16, face }, area));
                }
            }
        }
    }
    out
}

/// The front face of the movable part, and of its handle when it has one.
fn main_face(obj: &ArticulatedObject, handle: bool) -> Option<PartFace> {
    front_faces(obj, handle)
        .into_iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(f, _)| f)
}

/// Point on a rest-frame part face: the center, or uniform with a margin.
fn face_point<R: Rng + ?Sized>(obj: &ArticulatedObject, face: PartFace, rng: Option<&mut R>) -> ContactPoint {
    let obb = obj.part[face.part_box as usize].obb;
    let mut p = obb.face_center(face.face);
    if let Some(rng) = rng {
        for k in 1..3u8 {
            let ax = ((face.face.axis + k) % 3) as usize;
            let h = (obb.half[ax] - FACE_MARGIN).max(0.0);
            p += obb.rotation.column(ax) * rng.random_range(-h..=h);
        }
    }
    ContactPoint {
        rest_point: p,
        rest_normal: obb.face_normal(face.face),
        face,
    }
}

/// The tangent axis across which the handle is thinnest.
fn handle_closing_axis(obj: &ArticulatedObject, face: PartFace) -> Vec3 {
    let obb = obj.part[face.part_box as usize].obb;
    let (a, b) = (((face.face.axis + 1) % 3) as usize, ((face.face.axis + 2) % 3) as usize);
    let ax = if obb.half[a] <= obb.half[b] { a } else { b };
    obb.rotation.column(ax).into_owned()
}

fn check_kind(obj: &ArticulatedObject, kind: JointKind, task: &TaskSpec, interaction: InteractionType) -> Result<()> {
    if obj.joint_kind() != kind {
        return Err(Error::Precondition(format!("heuristic needs a {kind:?} joint")));
    }
    if task.interaction != interaction {
        return Err(Error::Precondition(format!("heuristic is for {interaction} tasks")));
    }
    Ok(())
}

/// Revolute heuristic: four rotations of θ/4, each a straight move of
/// `d sin(|θ|/4)` along the current face normal.
fn door_plan(obj: &ArticulatedObject, start_q: f64, task: &TaskSpec, contact: ContactPoint, closing: Option<Vec3>) -> Result<HeuristicPlan> {
    let p0 = contact.world(obj, start_q);
    let d = (p0 - obj.axis_foot(&p0)).norm();
    let step = d * (task.theta.abs() / HEURISTIC_STEPS as f64).sin();
    let out = if task.interaction == InteractionType::Push { -1.0 } else { 1.0 };
    let axis = Unit::new_normalize(obj.joint_axis);
    let normal_at = |k: usize| {
        Rotation3::from_axis_angle(&axis, start_q + task.theta * k as f64 / HEURISTIC_STEPS as f64) * contact.rest_normal
    };
    let frame = |n: Vec3| {
        let approach = -n;
        let c = closing.unwrap_or_else(|| crate::geometry::any_perpendicular(&approach));
        gripper_frame(&approach, &c)
    };
    let mut wps = vec![Waypoint::new(p0, frame(normal_at(0)))?];
    let mut p = p0;
    for k in 0..HEURISTIC_STEPS {
        p += normal_at(k) * (out * step);
        wps.push(Waypoint::new(p, frame(normal_at(k + 1)))?);
    }
    Ok(HeuristicPlan {
        contact,
        trajectory: Trajectory::new(wps, task.interaction)?,
    })
}

/// Straight slide of `|θ|` along the joint axis, in equal waypoints.
fn drawer_plan(obj: &ArticulatedObject, start_q: f64, task: &TaskSpec, contact: ContactPoint, closing: Option<Vec3>) -> Result<HeuristicPlan> {
    let p0 = contact.world(obj, start_q);
    let n = contact.normal_world(obj, start_q);
    let approach = -n;
    let c = closing.unwrap_or_else(|| crate::geometry::any_perpendicular(&approach));
    let r = gripper_frame(&approach, &c);
    let delta = obj.joint_axis * task.theta;
    let wps = (0..=HEURISTIC_STEPS)
        .map(|k| Waypoint::new(p0 + delta * (k as f64 / HEURISTIC_STEPS as f64), r))
        .collect::<Result<Vec<_>>>()?;
    Ok(HeuristicPlan {
        contact,
        trajectory: Trajectory::new(wps, task.interaction)?,
    })
}

pub fn heuristic_door_push(obj: &ArticulatedObject, start_q: f64, task: &TaskSpec, seed: u64) -> Result<HeuristicPlan> {
    check_kind(obj, JointKind::Revolute, task, InteractionType::Push)?;
    let face = main_face(obj, false).ok_or_else(|| Error::Precondition("part has no front face".into()))?;
    let contact = face_point(obj, face, Some(&mut seeding::rng(seed)));
    door_plan(obj, start_q, task, contact, None)
}

/// `None` for handleless doors.
pub fn heuristic_door_pull(obj: &ArticulatedObject, start_q: f64, task: &TaskSpec, seed: u64) -> Result<Option<HeuristicPlan>> {
    check_kind(obj, JointKind::Revolute, task, InteractionType::Pull)?;
    let Some(face) = main_face(obj, true) else {
        return Ok(None);
    };
    let contact = face_point(obj, face, Some(&mut seeding::rng(seed)));
    let closing = obj.part_transform(start_q).apply_vector(&handle_closing_axis(obj, face));
    door_plan(obj, start_q, task, contact, Some(closing)).map(Some)
}

pub fn heuristic_drawer_push(obj: &ArticulatedObject, start_q: f64, task: &TaskSpec, seed: u64) -> Result<HeuristicPlan> {
    check_kind(obj, JointKind::Prismatic, task, InteractionType::Push)?;
    let face = main_face(obj, false).ok_or_else(|| Error::Precondition("part has no front face".into()))?;
    let contact = face_point(obj, face, Some(&mut seeding::rng(seed)));
    drawer_plan(obj, start_q, task, contact, None)
}

/// Grasps the handle at its midpoint; `None` for handleless drawers.
pub fn heuristic_drawer_pull(obj: &ArticulatedObject, start_q: f64, task: &TaskSpec, _seed: u64) -> Result<Option<HeuristicPlan>> {
    check_kind(obj, JointKind::Prismatic, task, InteractionType::Pull)?;
    let Some(face) = main_face(obj, true) else {
        return Ok(None);
    };
    let contact = face_point::<seeding::Rng>(obj, face, None);
    let closing = handle_closing_axis(obj, face);
    drawer_plan(obj, start_q, task, contact, Some(closing)).map(Some)
}

/// Dispatches on joint kind and interaction type.
pub fn heuristic_plan(obj: &ArticulatedObject, start_q: f64, task: &TaskSpec, seed: u64) -> Result<Option<HeuristicPlan>> {
    match (obj.joint_kind(), task.interaction) {
        (JointKind::Revolute, InteractionType::Push) => heuristic_door_push(obj, start_q, task, seed).map(Some),
        (JointKind::Revolute, InteractionType::Pull) => heuristic_door_pull(obj, start_q, task, seed),
        (JointKind::Prismatic, InteractionType::Push) => heuristic_drawer_push(obj, start_q, task, seed).map(Some),
        (JointKind::Prismatic, InteractionType::Pull) => heuristic_drawer_pull(obj, start_q, task, seed),
    }
}

/// Plans and executes a heuristic episode; missing plans count as failures.
pub fn run_heuristic(
    obj: &Arc<ArticulatedObject>,
    start_q: f64,
    task: &TaskSpec,
    camera: CameraView,
    seed: u64,
    engine: &EngineConfig,
) -> Result<HeuristicResult> {
    let Some(plan) = heuristic_plan(obj, start_q, task, seed)? else {
        return Ok(HeuristicResult {
            record: None,
            success: false,
        });
    };
    let ex = execute_trajectory(obj.clone(), *task, plan.contact, start_q, &plan.trajectory, engine)?;
    Ok(HeuristicResult {
        success: ex.success,
        record: Some(InteractionRecord {
            object: ObjectRef::of(obj),
            camera,
            contact: plan.contact,
            task: *task,
            start_q,
            trajectory: plan.trajectory,
            achieved: ex.delta_theta,
            success: ex.success,
            epoch: 0,
            provenance: String::new(),
        }),
    })
}

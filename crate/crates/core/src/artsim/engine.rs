//! Quasi-static flying-gripper contact model.
//!
//! There is no inertia, friction or overshoot. The fingertip is a point that
//! only interacts with the part face holding the chosen contact point: pressing
//! into that face drags the part along its feasible motion, a grasp binds the
//! fingertip to the part in both directions.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::render::{PartFace, PointCloud, PosedScene, SurfaceHit};
use super::shape::{ArticulatedObject, JointKind};
use super::task::{check_success, TaskSpec};
use crate::error::{validation, Error, Result};
use crate::geometry::{frame_from_approach, sample_cone_direction, InteractionType, Trajectory, Vec3, Waypoint};
use crate::seeding;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    /// Initial fingertip distance from the contact point.
    pub approach_gap: f64,
    pub cone_half_angle_deg: f64,
    pub max_opening: f64,
    /// Farthest fingertip-to-contact distance at which a grasp may be attempted.
    pub contact_distance: f64,
    /// Height above the contact face beyond which push contact counts as broken.
    pub break_distance: f64,
    /// Fingertip-to-contact distance at which a grasp slips off.
    pub grasp_slip: f64,
    pub max_substep: f64,
    pub face_margin: f64,
    /// Depth below the surface at which grasp thickness is measured.
    pub grasp_depth: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            approach_gap: 0.02,
            cone_half_angle_deg: 30.0,
            max_opening: 0.08,
            contact_distance: 0.03,
            break_distance: 0.01,
            grasp_slip: 0.05,
            max_substep: 0.005,
            face_margin: 0.01,
            grasp_depth: 0.005,
        }
    }
}

/// A material point on the movable part, stored in the part's rest frame (q = 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactPoint {
    pub rest_point: Vec3,
    pub rest_normal: Vec3,
    pub face: PartFace,
}

impl ContactPoint {
    /// Contact from cloud point `index` of a cloud rendered at joint coordinate `q`.
    pub fn from_cloud(obj: &ArticulatedObject, cloud: &PointCloud, index: usize, q: f64) -> Result<Self> {
        let face = cloud
            .part_faces
            .get(index)
            .copied()
            .flatten()
            .ok_or_else(|| Error::Precondition(format!("cloud point {index} is not on the movable part")))?;
        let tf = obj.part_transform(q);
        Ok(ContactPoint {
            rest_point: tf.inverse_apply(&cloud.points[index]),
            rest_normal: tf.inverse_apply_vector(&cloud.normals[index]),
            face,
        })
    }

    /// Contact from a ray-cast hit on the part at joint coordinate `q`.
    pub fn from_hit(obj: &ArticulatedObject, hit: &SurfaceHit, q: f64) -> Result<Self> {
        let face = hit
            .part_face
            .ok_or_else(|| Error::Precondition("hit is not on the movable part".into()))?;
        let tf = obj.part_transform(q);
        Ok(ContactPoint {
            rest_point: tf.inverse_apply(&hit.point),
            rest_normal: tf.inverse_apply_vector(&hit.normal),
            face,
        })
    }

    /// Contact on a given part face at a world point measured at `q`.
    pub fn on_face(obj: &ArticulatedObject, face: PartFace, world_point: Vec3, q: f64) -> Result<Self> {
        let pb = obj
            .part
            .get(face.part_box as usize)
            .ok_or_else(|| validation("part box index out of range"))?;
        let tf = obj.part_transform(q);
        Ok(ContactPoint {
            rest_point: tf.inverse_apply(&world_point),
            rest_normal: pb.obb.face_normal(face.face),
            face,
        })
    }

    pub fn world(&self, obj: &ArticulatedObject, q: f64) -> Vec3 {
        obj.part_transform(q).apply(&self.rest_point)
    }

    pub fn normal_world(&self, obj: &ArticulatedObject, q: f64) -> Vec3 {
        obj.part_transform(q).apply_vector(&self.rest_normal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContactMode {
    Free,
    Touching,
    Grasped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactReport {
    /// Fingertip-to-contact-point distance after the step.
    pub d_gc: f64,
    /// Joint coordinate change produced by the step.
    pub delta_q: f64,
}

#[derive(Debug, Clone)]
pub struct EpisodeState {
    pub object: Arc<ArticulatedObject>,
    pub task: TaskSpec,
    pub start_q: f64,
    pub q: f64,
    pub gripper: Waypoint,
    pub initial_gripper: Waypoint,
    /// Finger positions along the closing axis, relative to the fingertip center.
    pub fingers: [f64; 2],
    pub contact: ContactPoint,
    pub mode: ContactMode,
    /// Outcome of the grasp attempt, if one was made.
    pub grasp: Option<bool>,
    pub config: EngineConfig,
}

/// Start coordinates from which `theta` keeps the joint inside its limits.
pub fn feasible_start_range(obj: &ArticulatedObject, theta: f64) -> Result<[f64; 2]> {
    let [lo, hi] = obj.limits;
    let a = lo.max(lo - theta);
    let b = hi.min(hi - theta);
    if a > b {
        return Err(Error::Infeasible(format!(
            "task {theta} cannot be reached within limits [{lo}, {hi}]"
        )));
    }
    Ok([a, b])
}

/// Samples a feasible start pose, then places the gripper as in [`reset_episode_at`].
pub fn reset_episode(
    obj: Arc<ArticulatedObject>,
    task: TaskSpec,
    contact: ContactPoint,
    seed: u64,
    config: &EngineConfig,
) -> Result<EpisodeState> {
    let mut rng = seeding::rng(seed);
    let [a, b] = feasible_start_range(&obj, task.theta)?;
    let start_q = a + (b - a) * rng.random::<f64>();
    reset_episode_at(obj, task, contact, start_q, &mut rng, config)
}

/// Places the fingertip `approach_gap` away from the contact, approaching within
/// the cone around the inward normal, with a random roll about the approach axis.
pub fn reset_episode_at<R: Rng + ?Sized>(
    obj: Arc<ArticulatedObject>,
    task: TaskSpec,
    contact: ContactPoint,
    start_q: f64,
    rng: &mut R,
    config: &EngineConfig,
) -> Result<EpisodeState> {
    if !obj.in_limits(start_q) || !obj.in_limits(start_q + task.theta) {
        return Err(Error::Infeasible(format!(
            "start {start_q} with task {} leaves the joint limits",
            task.theta
        )));
    }
    let p = contact.world(&obj, start_q);
    let n = contact.normal_world(&obj, start_q);
    let approach = sample_cone_direction(&n, config.cone_half_angle_deg.to_radians(), rng);
    let roll = std::f64::consts::TAU * rng.random::<f64>();
    let wp0 = Waypoint {
        position: p - approach * config.approach_gap,
        orientation: frame_from_approach(&approach, roll),
    };
    reset_with_gripper(obj, task, contact, start_q, wp0, config)
}

/// Episode with an explicit initial gripper pose.
pub fn reset_with_gripper(
    obj: Arc<ArticulatedObject>,
    task: TaskSpec,
    contact: ContactPoint,
    start_q: f64,
    wp0: Waypoint,
    config: &EngineConfig,
) -> Result<EpisodeState> {
    if !obj.in_limits(start_q) {
        return Err(validation("start coordinate outside joint limits"));
    }
    let fingers = match task.interaction {
        InteractionType::Push => [0.0, 0.0],
        InteractionType::Pull => [-config.max_opening / 2.0, config.max_opening / 2.0],
    };
    let mut state = EpisodeState {
        object: obj,
        task,
        start_q,
        q: start_q,
        gripper: wp0,
        initial_gripper: wp0,
        fingers,
        contact,
        mode: ContactMode::Free,
        grasp: None,
        config: *config,
    };
    state.mode = state.surface_mode();
    Ok(state)
}

impl EpisodeState {
    pub fn contact_world(&self) -> Vec3 {
        self.contact.world(&self.object, self.q)
    }

    pub fn contact_normal_world(&self) -> Vec3 {
        self.contact.normal_world(&self.object, self.q)
    }

    pub fn d_gc(&self) -> f64 {
        (self.gripper.position - self.contact_world()).norm()
    }

    pub fn delta_theta(&self) -> f64 {
        self.q - self.start_q
    }

    /// Closes the gripper at the contact point. Succeeds iff the part material
    /// between the fingers is no thicker than the maximal opening.
    pub fn attempt_grasp(&mut self) -> Result<bool> {
        if self.task.interaction != InteractionType::Pull {
            return Err(Error::Precondition("grasping is only defined for pull interactions".into()));
        }
        if self.d_gc() > self.config.contact_distance {
            self.grasp = Some(false);
            return Ok(false);
        }
        let thickness = self.grasp_thickness();
        let ok = thickness > 0.0 && thickness <= self.config.max_opening;
        self.gripper.position = self.contact_world();
        if ok {
            self.mode = ContactMode::Grasped;
            self.fingers = [-thickness / 2.0, thickness / 2.0];
        } else {
            self.mode = ContactMode::Touching;
        }
        self.grasp = Some(ok);
        Ok(ok)
    }

    /// Material thickness between the fingers, measured just below the surface
    /// along the closing axis projected onto the contact face.
    pub fn grasp_thickness(&self) -> f64 {
        let scene = PosedScene::new(&self.object, self.q);
        let m = self.contact_normal_world();
        let c = self.gripper.closing_axis();
        let tangent = c - m * c.dot(&m);
        if tangent.norm() < 1e-9 {
            return f64::INFINITY;
        }
        let inner = self.contact_world() - m * self.config.grasp_depth;
        scene.part_thickness(&inner, &tangent)
    }

    /// Moves the fingertip along a straight line to `target` and reports the result.
    pub fn step_gripper(&mut self, target: &Waypoint) -> ContactReport {
        let q_before = self.q;
        let delta = target.position - self.gripper.position;
        let n = ((delta.norm() / self.config.max_substep).ceil() as usize).max(1);
        let dx = delta / n as f64;
        for _ in 0..n {
            self.substep(&dx);
        }
        self.gripper = *target;
        if self.mode != ContactMode::Grasped {
            self.mode = self.surface_mode();
        }
        ContactReport {
            d_gc: self.d_gc(),
            delta_q: self.q - q_before,
        }
    }

    fn face_geometry(&self) -> (Vec3, Vec3, super::obb::Obb) {
        let pb = self.object.part[self.contact.face.part_box as usize];
        let obb = self.object.part_transform(self.q).apply_obb(&pb.obb);
        let face = self.contact.face.face;
        (obb.face_center(face), obb.face_normal(face), obb)
    }

    fn in_face(&self, obb: &super::obb::Obb, p: &Vec3) -> bool {
        let l = obb.to_local(p);
        let k = self.contact.face.face.axis as usize;
        (0..3).all(|j| j == k || l[j].abs() <= obb.half[j] + self.config.face_margin)
    }

    fn surface_mode(&self) -> ContactMode {
        let (fc, m, obb) = self.face_geometry();
        let h = (self.gripper.position - fc).dot(&m);
        if self.in_face(&obb, &self.gripper.position) && h <= self.config.break_distance {
            ContactMode::Touching
        } else {
            ContactMode::Free
        }
    }

    fn substep(&mut self, dx: &Vec3) {
        let f_old = self.gripper.position;
        let f_new = f_old + dx;
        if self.mode == ContactMode::Grasped {
            let dq = self.transmit(dx);
            self.apply_dq(dq);
            self.gripper.position = f_new;
            if self.d_gc() > self.config.grasp_slip {
                self.mode = ContactMode::Free;
            }
            return;
        }
        let (fc, m, obb) = self.face_geometry();
        let h_old = (f_old - fc).dot(&m);
        let h_new = (f_new - fc).dot(&m);
        let pressing = dx.dot(&m) < 0.0;
        if pressing && h_new < 0.0 && self.in_face(&obb, &f_new) {
            // only the part of the substep after first touching transmits
            let frac = if h_old > 0.0 { -h_new / (h_old - h_new) } else { 1.0 };
            let mut dq = self.transmit(&(dx * frac));
            if self.object.joint_kind() == JointKind::Prismatic {
                // an unglued finger cannot draw a drawer out
                dq = dq.min(0.0);
            }
            self.apply_dq(dq);
        }
        self.gripper.position = f_new;
        self.mode = self.surface_mode();
    }

    /// Joint coordinate change produced by displacing the contact point by `u`.
    fn transmit(&self, u: &Vec3) -> f64 {
        let axis = self.object.joint_axis;
        match self.object.joint_kind() {
            JointKind::Prismatic => u.dot(&axis),
            JointKind::Revolute => {
                let p = self.contact_world();
                let r = p - self.object.axis_foot(&p);
                let d = r.norm();
                if d < 1e-9 {
                    return 0.0;
                }
                let tangent = axis.cross(&r) / d;
                u.dot(&tangent) / d
            }
        }
    }

    fn apply_dq(&mut self, dq: f64) {
        self.q = self.object.clamp_q(self.q + dq);
    }
}

/// Result of executing a trajectory open-loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Execution {
    pub delta_theta: f64,
    pub success: bool,
    pub d_gc: f64,
    pub grasp: Option<bool>,
}

/// Replays `traj` from its first waypoint: grasp first for pull tasks, then
/// step through the remaining waypoints.
pub fn execute_trajectory(
    obj: Arc<ArticulatedObject>,
    task: TaskSpec,
    contact: ContactPoint,
    start_q: f64,
    traj: &Trajectory,
    config: &EngineConfig,
) -> Result<Execution> {
    let mut st = reset_with_gripper(obj, task, contact, start_q, *traj.first(), config)?;
    if task.interaction == InteractionType::Pull {
        st.attempt_grasp()?;
    }
    for wp in &traj.waypoints()[1..] {
        st.step_gripper(wp);
    }
    let dt = st.delta_theta();
    Ok(Execution {
        delta_theta: dt,
        success: check_success(&task, dt)?,
        d_gc: st.d_gc(),
        grasp: st.grasp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::artsim::obb::Face;
    use crate::artsim::shape::{generate_shape, HandleSpec, ShapeFamily};
    use crate::geometry::{Mat3, MAX_WAYPOINTS};
    use proptest::prelude::*;

    const FRONT: Face = Face { axis: 2, positive: true };

    fn contact_on(obj: &ArticulatedObject, part_box: u16, q: f64) -> ContactPoint {
        let face = PartFace { part_box, face: FRONT };
        let obb = obj.part_boxes_at(q)[part_box as usize].obb;
        ContactPoint::on_face(obj, face, obb.face_center(FRONT), q).unwrap()
    }

    fn facing(dir: Vec3, roll: f64) -> Mat3 {
        frame_from_approach(&dir, roll)
    }

    fn at(p: Vec3) -> Waypoint {
        Waypoint { position: p, orientation: facing(Vec3::new(0.0, 0.0, -1.0), 0.0) }
    }

    fn with_bar(family: ShapeFamily) -> (ArticulatedObject, u16) {
        (0..500)
            .map(|s| generate_shape(family, s))
            .find_map(|o| match o.spec.handle {
                HandleSpec::Bar { length, .. } if length > 0.1 => {
                    let i = o.part.iter().position(|b| b.handle).unwrap();
                    Some((o, i as u16))
                }
                _ => None,
            })
            .expect("some shape has a bar handle")
    }

    fn state(obj: &Arc<ArticulatedObject>, theta: f64, kind: InteractionType, c: ContactPoint, q0: f64, wp: Waypoint) -> EpisodeState {
        let task = TaskSpec::new(theta, kind).unwrap();
        reset_with_gripper(obj.clone(), task, c, q0, wp, &EngineConfig::default()).unwrap()
    }

    #[test]
    fn feasible_range_matches_limits() {
        let mut obj = generate_shape(ShapeFamily::Drawer, 3);
        obj.limits = [0.0, 0.7];
        assert_eq!(feasible_start_range(&obj, 0.5).unwrap(), [0.0, 0.7 - 0.5]);
        let r = feasible_start_range(&obj, -0.3).unwrap();
        assert!((r[0] - 0.3).abs() < 1e-12 && r[1] == 0.7);
        assert!(matches!(feasible_start_range(&obj, 0.8), Err(Error::Infeasible(_))));
    }

    #[test]
    fn drawer_push_closes_by_pressed_depth() {
        let obj = Arc::new(generate_shape(ShapeFamily::Drawer, 7));
        let q0 = obj.limits[1];
        assert!(q0 > 0.12);
        let c = contact_on(&obj, 0, q0);
        let p = c.world(&obj, q0);
        let z = Vec3::new(0.0, 0.0, 1.0);
        let mut st = state(&obj, -0.1, InteractionType::Push, c, q0, at(p + z * 0.02));
        let rep = st.step_gripper(&at(p - z * 0.1));
        assert!((rep.delta_q + 0.1).abs() < 1e-9, "{}", rep.delta_q);
        assert!(rep.d_gc < 1e-9);
        assert_eq!(st.mode, ContactMode::Touching);
    }

    #[test]
    fn unglued_finger_cannot_open_drawer() {
        let obj = Arc::new(generate_shape(ShapeFamily::Drawer, 8));
        let q0 = 0.5 * obj.limits[1];
        let c = contact_on(&obj, 0, q0);
        let p = c.world(&obj, q0);
        let mut st = state(&obj, 0.1, InteractionType::Push, c, q0, at(p));
        st.step_gripper(&at(p + Vec3::new(0.05, 0.02, 0.1)));
        st.step_gripper(&at(p + Vec3::new(-0.1, 0.0, 0.1)));
        assert_eq!(st.q, q0);
        assert_eq!(st.mode, ContactMode::Free);
    }

    #[test]
    fn door_push_follows_arc_length() {
        let obj = Arc::new(generate_shape(ShapeFamily::Door, 11));
        let q0 = 0.6;
        let c = contact_on(&obj, 0, q0);
        let p = c.world(&obj, q0);
        let n = c.normal_world(&obj, q0);
        let d = (p - obj.axis_foot(&p)).norm();
        let wp = Waypoint { position: p + n * 0.02, orientation: facing(-n, 0.0) };
        let mut st = state(&obj, -0.3, InteractionType::Push, c, q0, wp);
        let target = Waypoint { position: p - n * 0.04, ..wp };
        let rep = st.step_gripper(&target);
        let expected = -0.04 / d;
        assert!(rep.delta_q < 0.0);
        assert!((rep.delta_q - expected).abs() < 0.1 * expected.abs(), "{} vs {}", rep.delta_q, expected);
        assert!(st.q >= obj.limits[0]);
    }

    #[test]
    fn handle_grasp_depends_on_closing_axis() {
        let (obj, hb) = with_bar(ShapeFamily::Drawer);
        let obj = Arc::new(obj);
        let vertical = matches!(obj.spec.handle, HandleSpec::Bar { vertical: true, .. });
        let thin = if vertical { Vec3::x() } else { Vec3::y() };
        let c = contact_on(&obj, hb, 0.0);
        let p = c.world(&obj, 0.0);
        let approach = Vec3::new(0.0, 0.0, -1.0);
        let roll_across = (0..64)
            .map(|i| i as f64 * std::f64::consts::TAU / 64.0)
            .find(|&r| (facing(approach, r).column(1).dot(&thin)).abs() > 0.999)
            .unwrap();
        for (roll, expect) in [(roll_across, true), (roll_across + std::f64::consts::FRAC_PI_2, false)] {
            let wp = Waypoint { position: p + Vec3::z() * 0.02, orientation: facing(approach, roll) };
            let mut st = state(&obj, 0.2, InteractionType::Pull, c, 0.0, wp);
            assert_eq!(st.attempt_grasp().unwrap(), expect);
            if expect {
                assert_eq!(st.mode, ContactMode::Grasped);
                let back = Waypoint { position: st.gripper.position + Vec3::z() * 0.2, ..wp };
                let rep = st.step_gripper(&back);
                assert!((rep.delta_q - 0.2).abs() < 1e-9);
                assert!(check_success(&st.task, st.delta_theta()).unwrap());
            }
        }
    }

    #[test]
    fn flat_panel_is_not_graspable() {
        let obj = Arc::new(generate_shape(ShapeFamily::Door, 2));
        let c = contact_on(&obj, 0, 0.0);
        let p = c.world(&obj, 0.0);
        for roll in [0.0, 0.7, 1.9] {
            let wp = Waypoint { position: p + Vec3::z() * 0.02, orientation: facing(-Vec3::z(), roll) };
            let mut st = state(&obj, 0.5, InteractionType::Pull, c, 0.0, wp);
            assert!(!st.attempt_grasp().unwrap());
        }
    }

    #[test]
    fn grasp_requires_pull_and_proximity() {
        let (obj, hb) = with_bar(ShapeFamily::Door);
        let obj = Arc::new(obj);
        let c = contact_on(&obj, hb, 0.0);
        let p = c.world(&obj, 0.0);
        let mut st = state(&obj, -0.2, InteractionType::Push, c, 0.3, at(p));
        assert!(matches!(st.attempt_grasp(), Err(Error::Precondition(_))));
        let mut far = state(&obj, 0.2, InteractionType::Pull, c, 0.0, at(p + Vec3::z() * 0.2));
        assert!(!far.attempt_grasp().unwrap());
    }

    #[test]
    fn reset_starts_near_contact_inside_cone() {
        let obj = Arc::new(generate_shape(ShapeFamily::Door, 5));
        let c = contact_on(&obj, 0, 0.0);
        let task = TaskSpec::new(0.4, InteractionType::Push).unwrap();
        for seed in 0..50 {
            let st = reset_episode(obj.clone(), task, c, seed, &EngineConfig::default()).unwrap();
            assert!((st.d_gc() - 0.02).abs() < 1e-9);
            let n = st.contact_normal_world();
            assert!(st.gripper.approach().dot(&-n) >= 30f64.to_radians().cos() - 1e-9);
            assert!(st.start_q + 0.4 <= obj.limits[1] + 1e-12);
        }
    }

    #[test]
    fn replay_reproduces_episode() {
        let obj = Arc::new(generate_shape(ShapeFamily::Drawer, 21));
        let c = contact_on(&obj, 0, 0.0);
        let task = TaskSpec::new(-0.1, InteractionType::Push).unwrap();
        let cfg = EngineConfig::default();
        let mut st = reset_episode(obj.clone(), task, c, 4, &cfg).unwrap();
        let mut wps = vec![st.gripper];
        let mut rng = seeding::rng(9);
        for _ in 1..MAX_WAYPOINTS {
            let d = Vec3::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), rng.random_range(-0.2..0.0));
            let next = Waypoint { position: st.gripper.position + d, ..st.gripper };
            st.step_gripper(&next);
            wps.push(next);
        }
        let traj = Trajectory::new(wps, InteractionType::Push).unwrap();
        let ex = execute_trajectory(obj, task, c, st.start_q, &traj, &cfg).unwrap();
        assert_eq!(ex.delta_theta, st.delta_theta());
    }

    proptest! {
        #[test]
        fn joint_stays_within_limits(seed in 0u64..200, pull in any::<bool>(), moves in prop::collection::vec(prop::array::uniform3(-0.3f64..0.3), 1..5)) {
            let family = if seed % 2 == 0 { ShapeFamily::Door } else { ShapeFamily::Drawer };
            let obj = Arc::new(generate_shape(family, seed));
            let kind = if pull { InteractionType::Pull } else { InteractionType::Push };
            let theta = if pull { 0.1 } else { -0.1 };
            let [a, _] = feasible_start_range(&obj, theta).unwrap();
            let c = contact_on(&obj, 0, a);
            let mut st = reset_episode_at(obj.clone(), TaskSpec::new(theta, kind).unwrap(), c, a, &mut seeding::rng(seed), &EngineConfig::default()).unwrap();
            if pull { st.attempt_grasp().unwrap(); }
            for m in moves {
                let next = Waypoint { position: st.gripper.position + Vec3::from(m), ..st.gripper };
                st.step_gripper(&next);
                prop_assert!(obj.in_limits(st.q));
            }
        }
    }
}

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{euler_to_matrix, is_rotation, matrix_to_euler, Mat3, Vec3, ROTATION_TOLERANCE};
use crate::error::{validation, Error, Result};

pub const MAX_WAYPOINTS: usize = 5;
/// Flattened trajectory length: five slots of (position, euler).
pub const SERIALIZED_DIM: usize = 6 * MAX_WAYPOINTS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InteractionType {
    Push,
    Pull,
}

impl fmt::Display for InteractionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InteractionType::Push => f.write_str("push"),
            InteractionType::Pull => f.write_str("pull"),
        }
    }
}

/// One end-effector pose. `position` is the fingertip center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub position: Vec3,
    pub orientation: Mat3,
}

impl Waypoint {
    pub fn new(position: Vec3, orientation: Mat3) -> Result<Self> {
        if !position.iter().all(|v| v.is_finite()) {
            return Err(validation("waypoint position is not finite"));
        }
        if !is_rotation(&orientation, ROTATION_TOLERANCE) {
            return Err(validation("waypoint orientation is not a rotation matrix"));
        }
        Ok(Self {
            position,
            orientation,
        })
    }

    pub fn from_euler(position: Vec3, euler: [f64; 3]) -> Self {
        Self {
            position,
            orientation: euler_to_matrix(euler),
        }
    }

    pub fn euler(&self) -> [f64; 3] {
        matrix_to_euler(&self.orientation)
    }

    /// Gripper approach direction (third frame column).
    pub fn approach(&self) -> Vec3 {
        self.orientation.column(2).into_owned()
    }

    /// Finger closing axis (second frame column).
    pub fn closing_axis(&self) -> Vec3 {
        self.orientation.column(1).into_owned()
    }
}

/// Next waypoint from a residual: positions add, euler angles add in euler space.
pub fn compose_residual(prev: &Waypoint, delta_pos: Vec3, delta_euler: [f64; 3]) -> Waypoint {
    if delta_pos == Vec3::zeros() && delta_euler == [0.0; 3] {
        return *prev;
    }
    let e = prev.euler();
    Waypoint {
        position: prev.position + delta_pos,
        orientation: euler_to_matrix([
            e[0] + delta_euler[0],
            e[1] + delta_euler[1],
            e[2] + delta_euler[2],
        ]),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaypointJson {
    pub pos: [f64; 3],
    pub euler: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrajectoryJson {
    interaction_type: InteractionType,
    waypoints: Vec<WaypointJson>,
}

/// Open-loop end-effector trajectory of one to five waypoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "TrajectoryJson", try_from = "TrajectoryJson")]
pub struct Trajectory {
    waypoints: Vec<Waypoint>,
    interaction: InteractionType,
}

impl Trajectory {
    pub fn new(waypoints: Vec<Waypoint>, interaction: InteractionType) -> Result<Self> {
        if waypoints.is_empty() || waypoints.len() > MAX_WAYPOINTS {
            return Err(validation(format!(
                "trajectory must have 1..={MAX_WAYPOINTS} waypoints, got {}",
                waypoints.len()
            )));
        }
        Ok(Self {
            waypoints,
            interaction,
        })
    }

    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }

    pub fn interaction(&self) -> InteractionType {
        self.interaction
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn first(&self) -> &Waypoint {
        &self.waypoints[0]
    }

    pub fn push(&mut self, wp: Waypoint) -> Result<()> {
        if self.waypoints.len() >= MAX_WAYPOINTS {
            return Err(validation("trajectory already has five waypoints"));
        }
        self.waypoints.push(wp);
        Ok(())
    }

    pub fn truncated(&self, len: usize) -> Result<Self> {
        Self::new(self.waypoints[..len.min(self.waypoints.len())].to_vec(), self.interaction)
    }

    /// Residual 30-vector: slot 0 holds `wp0` as (position, euler), slot `i > 0`
    /// holds `(x_i - x_{i-1}, euler_i - euler_{i-1})`, unused slots are zero.
    pub fn serialize(&self) -> [f64; SERIALIZED_DIM] {
        let mut out = [0.0; SERIALIZED_DIM];
        let mut prev: Option<(Vec3, [f64; 3])> = None;
        for (i, wp) in self.waypoints.iter().enumerate() {
            let e = wp.euler();
            let slot = &mut out[6 * i..6 * i + 6];
            match prev {
                None => {
                    slot[..3].copy_from_slice(wp.position.as_slice());
                    slot[3..].copy_from_slice(&e);
                }
                Some((p, pe)) => {
                    let d = wp.position - p;
                    slot[..3].copy_from_slice(d.as_slice());
                    for k in 0..3 {
                        slot[3 + k] = e[k] - pe[k];
                    }
                }
            }
            prev = Some((wp.position, e));
        }
        out
    }

    /// Inverse of [`Trajectory::serialize`]. Trailing all-zero slots are padding.
    pub fn deserialize(v: &[f64], interaction: InteractionType) -> Result<Self> {
        Self::deserialize_with_tolerance(v, interaction, 0.0)
    }

    /// Like [`Trajectory::deserialize`], but trailing slots whose entries are all
    /// within `pad_tol` of zero count as padding (for network outputs).
    pub fn deserialize_with_tolerance(
        v: &[f64],
        interaction: InteractionType,
        pad_tol: f64,
    ) -> Result<Self> {
        if v.len() > SERIALIZED_DIM && v[SERIALIZED_DIM..].iter().any(|x| *x != 0.0) {
            return Err(validation("more than five waypoints in serialized trajectory"));
        }
        if v.len() < SERIALIZED_DIM {
            return Err(validation(format!(
                "serialized trajectory must have {SERIALIZED_DIM} entries, got {}",
                v.len()
            )));
        }
        if !v.iter().all(|x| x.is_finite()) {
            return Err(validation("serialized trajectory is not finite"));
        }
        let mut len = MAX_WAYPOINTS;
        while len > 1 && v[6 * (len - 1)..6 * len].iter().all(|x| x.abs() <= pad_tol) {
            len -= 1;
        }
        let slot = |i: usize| -> (Vec3, [f64; 3]) {
            let s = &v[6 * i..6 * i + 6];
            (Vec3::new(s[0], s[1], s[2]), [s[3], s[4], s[5]])
        };
        let (p0, e0) = slot(0);
        let mut waypoints = vec![Waypoint::from_euler(p0, e0)];
        for i in 1..len {
            let (dp, de) = slot(i);
            let prev = *waypoints.last().expect("non-empty");
            waypoints.push(compose_residual(&prev, dp, de));
        }
        Self::new(waypoints, interaction)
    }

    /// Absolute (position, orientation) per slot, padded to five slots by
    /// repeating the last waypoint.
    pub fn padded_absolute(&self) -> [Waypoint; MAX_WAYPOINTS] {
        let last = *self.waypoints.last().expect("non-empty");
        std::array::from_fn(|i| self.waypoints.get(i).copied().unwrap_or(last))
    }
}

impl From<Trajectory> for TrajectoryJson {
    fn from(t: Trajectory) -> Self {
        TrajectoryJson {
            interaction_type: t.interaction,
            waypoints: t
                .waypoints
                .iter()
                .map(|w| WaypointJson {
                    pos: [w.position.x, w.position.y, w.position.z],
                    euler: w.euler(),
                })
                .collect(),
        }
    }
}

impl TryFrom<TrajectoryJson> for Trajectory {
    type Error = Error;

    fn try_from(j: TrajectoryJson) -> Result<Self> {
        let wps = j
            .waypoints
            .iter()
            .map(|w| Waypoint::from_euler(Vec3::from(w.pos), w.euler))
            .collect();
        Trajectory::new(wps, j.interaction_type)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn sample_traj(n: usize) -> Trajectory {
        let mut wp = Waypoint::from_euler(Vec3::new(0.1, 0.2, 0.3), [0.1, -0.2, 0.3]);
        let mut wps = vec![wp];
        for i in 1..n {
            wp = compose_residual(&wp, Vec3::new(0.01 * i as f64, -0.02, 0.03), [0.05, 0.0, -0.1]);
            wps.push(wp);
        }
        Trajectory::new(wps, InteractionType::Push).unwrap()
    }

    #[test]
    fn zero_residual_is_identity() {
        let wp = Waypoint::from_euler(Vec3::new(0.3, -0.1, 0.2), [0.3, 0.2, 0.1]);
        assert_eq!(compose_residual(&wp, Vec3::zeros(), [0.0; 3]), wp);
    }

    #[test]
    fn translation_residual_from_origin() {
        let wp = Waypoint::from_euler(Vec3::zeros(), [0.0; 3]);
        let next = compose_residual(&wp, Vec3::new(0.01, 0.0, 0.0), [0.0; 3]);
        assert_eq!(next.position, Vec3::new(0.01, 0.0, 0.0));
        assert_eq!(next.orientation, Mat3::identity());
    }

    #[test]
    fn euler_residual_about_z() {
        let wp = Waypoint::from_euler(Vec3::zeros(), [0.0; 3]);
        let next = compose_residual(&wp, Vec3::zeros(), [0.0, 0.0, FRAC_PI_2]);
        let expected = Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((next.orientation - expected).abs().max() < 1e-12);
    }

    #[test]
    fn short_trajectory_is_zero_padded() {
        let v = sample_traj(3).serialize();
        assert!(v[18..].iter().all(|x| *x == 0.0));
        assert!(v[..18].iter().any(|x| *x != 0.0));
    }

    #[test]
    fn full_trajectory_has_no_padding() {
        let v = sample_traj(5).serialize();
        for slot in 1..5 {
            assert!(v[6 * slot..6 * slot + 6].iter().any(|x| *x != 0.0));
        }
    }

    #[test]
    fn too_many_waypoints_rejected() {
        let wp = Waypoint::from_euler(Vec3::zeros(), [0.0; 3]);
        assert!(Trajectory::new(vec![wp; 6], InteractionType::Pull).is_err());
        assert!(Trajectory::new(vec![], InteractionType::Pull).is_err());
        let mut long = vec![0.0; 36];
        long[31] = 1.0;
        assert!(Trajectory::deserialize(&long, InteractionType::Push).is_err());
    }

    #[test]
    fn json_schema_shape() {
        let t = sample_traj(2);
        let j: serde_json::Value = serde_json::to_value(&t).unwrap();
        assert_eq!(j["interaction_type"], "push");
        assert_eq!(j["waypoints"].as_array().unwrap().len(), 2);
        assert_eq!(j["waypoints"][0]["pos"].as_array().unwrap().len(), 3);
        let back: Trajectory = serde_json::from_value(j).unwrap();
        assert_eq!(back.len(), 2);
    }

    fn max_err(a: &Trajectory, b: &Trajectory) -> f64 {
        a.waypoints()
            .iter()
            .zip(b.waypoints())
            .map(|(x, y)| {
                (x.position - y.position)
                    .abs()
                    .max()
                    .max((x.orientation - y.orientation).abs().max())
            })
            .fold(0.0, f64::max)
    }

    proptest! {
        #[test]
        fn serialize_round_trip(
            n in 1usize..=5,
            raw in proptest::collection::vec(-1.0..1.0f64, 30),
        ) {
            let mut wp = Waypoint::from_euler(
                Vec3::new(raw[0], raw[1], raw[2]),
                [raw[3] * 3.0, raw[4] * 1.5, raw[5] * 3.0],
            );
            let mut wps = vec![wp];
            for i in 1..n {
                let s = &raw[6 * i..6 * i + 6];
                wp = compose_residual(&wp, Vec3::new(s[0], s[1], s[2]) * 0.2, [s[3], s[4], s[5]]);
                wps.push(wp);
            }
            let t = Trajectory::new(wps, InteractionType::Pull).unwrap();
            let back = Trajectory::deserialize(&t.serialize(), InteractionType::Pull).unwrap();
            prop_assert_eq!(back.len(), t.len());
            prop_assert!(max_err(&t, &back) < 1e-5);
        }
    }
}

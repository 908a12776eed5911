use crate::artsim::EpisodeState;
use crate::geometry::{any_perpendicular, rot6d_from_matrix_unchecked, Vec3};

pub const STATE_DIM: usize = 33;
pub const ACTION_DIM: usize = 6;

pub type RlState = [f64; STATE_DIM];
pub type Action = [f64; ACTION_DIM];

// index of each field in the state vector
pub const IDX_DELTA_THETA: usize = 0;
pub const IDX_THETA: usize = 1;
pub const IDX_GAP: usize = 2;
pub const IDX_WP0: usize = 3;
pub const IDX_WP: usize = 12;
pub const IDX_FINGERS: usize = 18;
pub const IDX_CONTACT: usize = 20;
pub const IDX_AXIS: usize = 23;
pub const IDX_AXIS_LOC: usize = 26;
pub const IDX_D_CJ: usize = 29;
pub const IDX_N_CJ: usize = 30;

/// Layout: Δθ, θ, θ−Δθ, wp₀ (position + 6D), wp_i (position + euler),
/// fingers (2), contact point, joint axis, joint location, d_cj, n_cj.
pub fn build_state(env: &EpisodeState) -> RlState {
    let mut s = [0.0; STATE_DIM];
    let dt = env.delta_theta();
    let th = env.task.theta;
    s[IDX_DELTA_THETA] = dt;
    s[IDX_THETA] = th;
    s[IDX_GAP] = th - dt;
    let wp0 = &env.initial_gripper;
    s[IDX_WP0..IDX_WP0 + 3].copy_from_slice(wp0.position.as_slice());
    s[IDX_WP0 + 3..IDX_WP].copy_from_slice(&rot6d_from_matrix_unchecked(&wp0.orientation));
    s[IDX_WP..IDX_WP + 3].copy_from_slice(env.gripper.position.as_slice());
    s[IDX_WP + 3..IDX_FINGERS].copy_from_slice(&env.gripper.euler());
    s[IDX_FINGERS..IDX_CONTACT].copy_from_slice(&env.fingers);
    let p = env.contact_world();
    s[IDX_CONTACT..IDX_AXIS].copy_from_slice(p.as_slice());
    let obj = &env.object;
    s[IDX_AXIS..IDX_AXIS_LOC].copy_from_slice(obj.joint_axis.as_slice());
    s[IDX_AXIS_LOC..IDX_D_CJ].copy_from_slice(obj.joint_location.as_slice());
    let (d, n) = axis_offset(&p, &obj.axis_foot(&p), &obj.joint_axis);
    s[IDX_D_CJ] = d;
    s[IDX_N_CJ..].copy_from_slice(n.as_slice());
    s
}

/// Distance from the axis and the unit direction pointing from the axis to `p`.
fn axis_offset(p: &Vec3, foot: &Vec3, axis: &Vec3) -> (f64, Vec3) {
    let r = p - foot;
    let d = r.norm();
    if d < 1e-12 {
        (0.0, any_perpendicular(axis))
    } else {
        (d, r / d)
    }
}

/// Overwrites the task-dependent entries after a change of θ.
pub fn retarget_state(s: &mut RlState, theta: f64) {
    s[IDX_THETA] = theta;
    s[IDX_GAP] = theta - s[IDX_DELTA_THETA];
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::artsim::{generate_shape, reset_episode, ContactPoint, EngineConfig, PartFace, ShapeFamily, TaskSpec, Face};
    use crate::geometry::InteractionType;
    use std::sync::Arc;

    #[test]
    fn reset_state_layout() {
        for family in [ShapeFamily::Door, ShapeFamily::Drawer] {
            let obj = Arc::new(generate_shape(family, 4));
            let face = PartFace { part_box: 0, face: Face { axis: 2, positive: true } };
            let c = ContactPoint::on_face(&obj, face, obj.part[0].obb.face_center(face.face), 0.0).unwrap();
            let task = TaskSpec::new(0.1, InteractionType::Pull).unwrap();
            let env = reset_episode(obj.clone(), task, c, 1, &EngineConfig::default()).unwrap();
            let s = build_state(&env);
            assert_eq!(s.len(), 33);
            assert_eq!(s[IDX_DELTA_THETA], 0.0);
            assert_eq!(s[IDX_GAP], 0.1);
            // point-line distance against the cross-product formula
            let p = env.contact_world();
            let x0 = obj.joint_location;
            let n = obj.joint_axis;
            let expect = (p - x0).cross(&n).norm();
            assert!((s[IDX_D_CJ] - expect).abs() < 1e-12);
            let ncj = Vec3::new(s[30], s[31], s[32]);
            assert!((ncj.norm() - 1.0).abs() < 1e-12);
            assert!(ncj.dot(&n).abs() < 1e-9);
        }
    }
}

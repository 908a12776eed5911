mod common;

use std::sync::Arc;

use artiprior::artsim::*;
use artiprior::explorer::{sample_training_task, TaskRanges};
use artiprior::geometry::{frame_from_approach, InteractionType, Vec3, Waypoint};
use common::*;
use proptest::prelude::*;

#[test]
fn hundred_drawers_and_doors_meet_their_joint_contracts() {
    for s in 0..100 {
        let d = generate_shape(ShapeFamily::Drawer, s);
        assert_eq!(d.joint_kind(), JointKind::Prismatic);
        assert!(d.joint_axis.y.abs() < 1e-12);
        assert!(d.limits[0] >= 0.0 && d.limits[1] <= 1.0 && d.limits[0] < d.limits[1]);
        let r = generate_shape(ShapeFamily::Door, s);
        assert_eq!(r.joint_kind(), JointKind::Revolute);
        assert!(r.limits[0] >= 0.0 && r.limits[1] <= std::f64::consts::PI && r.limits[0] < r.limits[1]);
        assert!((r.joint_axis.norm() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn same_seed_builds_identical_objects() {
    let a = generate_shape(ShapeFamily::Drawer, 1);
    let b = generate_shape(ShapeFamily::Drawer, 1);
    assert_eq!(a.spec, b.spec);
    assert_eq!(a.part, b.part);
    assert_eq!(a.body, b.body);
}

#[test]
fn views_in_front_of_the_part_always_see_it() {
    // at unit camera distance a grazing azimuth can put the camera behind the
    // front plane, so only views in front of it are checked
    let fleet: Fleet = [ShapeFamily::Drawer, ShapeFamily::Door]
        .into_iter()
        .flat_map(|f| generate_fleet(f, None, 10, 3))
        .collect();
    let mut checked = 0;
    for (i, obj) in fleet.iter().enumerate() {
        for k in 0..8u64 {
            let view = sample_camera_seeded(100 * i as u64 + k, Intrinsics::default());
            let q = obj.limits[0] + (obj.limits[1] - obj.limits[0]) * (k as f64 / 7.0);
            let front = obj.part_boxes_at(q)[0].obb;
            let n = front.face_normal(FRONT);
            if (view.position() - front.face_center(FRONT)).dot(&n) <= 0.05 {
                continue;
            }
            checked += 1;
            let hits = render_hits(obj, q, &view).unwrap();
            assert!(hits.iter().any(|h| h.part_face.is_some()), "{} from {:?}", obj.id(), view);
        }
    }
    assert!(checked >= 20, "{checked}");
}

#[test]
fn rendered_contacts_lie_on_the_movable_part() {
    let fleet = generate_fleet(ShapeFamily::Door, None, 6, 5);
    for s in 0..30 {
        let t = sample_training_task(&fleet, InteractionType::Push, &TaskRanges::default(), Intrinsics::default(), s).unwrap();
        let obb = t.object.part_boxes_at(t.start_q)[t.contact.face.part_box as usize].obb;
        let l = obb.to_local(&t.contact.world(&t.object, t.start_q));
        let k = t.contact.face.face.axis as usize;
        assert!((l[k].abs() - obb.half[k]).abs() < 1e-9);
        assert!(obb.contains(&t.contact.world(&t.object, t.start_q), 1e-9));
    }
}

#[test]
fn grasped_prismatic_displacement_projects_onto_axis() {
    let (obj, hb) = with_bar(ShapeFamily::Drawer, 1).remove(0);
    assert!((obj.joint_axis - Vec3::z()).norm() < 1e-12);
    let mut st = grasped_on_handle(&obj, hb, 0.3 * obj.limits[1]).expect("bar handle grasp");
    let q0 = st.q;
    let rep = st.step_gripper(&translate(&st.gripper.clone(), Vec3::new(0.0, 0.0, -0.1)));
    assert!((rep.delta_q + 0.1).abs() < 1e-9 || st.q == obj.limits[0], "{}", rep.delta_q);
    let q1 = st.q;
    let rep = st.step_gripper(&translate(&st.gripper.clone(), Vec3::new(0.02, 0.0, 0.0)));
    assert_eq!(rep.delta_q, 0.0);
    assert_eq!(st.q, q1);
    assert!(q0 > q1);
}

#[test]
fn revolute_tangential_motion_at_half_unit_radius() {
    // a synthetic door whose contact sits 0.5 from the hinge
    let (obj, hb) = with_bar(ShapeFamily::Door, 8)
        .into_iter()
        .min_by(|a, b| {
            let r = |o: &Arc<ArticulatedObject>, h: u16| {
                let p = front_contact(o, h, 0.0).world(o, 0.0);
                ((p - o.axis_foot(&p)).norm() - 0.5).abs()
            };
            r(&a.0, a.1).total_cmp(&r(&b.0, b.1))
        })
        .unwrap();
    let mut st = grasped_on_handle(&obj, hb, 0.4).expect("bar handle grasp");
    let p = st.contact_world();
    let r = p - obj.axis_foot(&p);
    let d = r.norm();
    let tangent = obj.joint_axis.cross(&r).normalize();
    let rep = st.step_gripper(&translate(&st.gripper.clone(), tangent * 0.1 * d));
    // rotating by 0.1 rad moves the contact about 0.1 d along the tangent
    assert!((rep.delta_q - 0.1).abs() < 0.005, "{} at radius {d}", rep.delta_q);
}

#[test]
fn feasibility_interval_example() {
    let mut obj = generate_shape(ShapeFamily::Drawer, 9);
    obj.limits = [0.0, 0.7];
    let [a, b] = feasible_start_range(&obj, 0.5).unwrap();
    assert!(a.abs() < 1e-12 && (b - 0.2).abs() < 1e-12);
}

#[test]
fn thin_handle_grasps_and_flat_front_does_not() {
    let (obj, hb) = with_bar(ShapeFamily::Drawer, 1).remove(0);
    let mut spec = obj.spec.clone();
    if let HandleSpec::Bar { thickness, .. } = &mut spec.handle {
        *thickness = 0.02;
    }
    let thin = Arc::new(ArticulatedObject::from_spec(spec).unwrap());
    assert!(grasped_on_handle(&thin, hb, 0.0).is_some());
    let flat = Arc::new(
        (0..500)
            .map(|s| generate_shape(ShapeFamily::Drawer, s))
            .find(|o| !o.has_handle())
            .unwrap(),
    );
    assert!(grasped_on_handle(&flat, 0, 0.0).is_none());
}

fn handle_grasps(base: &ShapeSpec, hb: u16, thickness: f64) -> bool {
    let mut spec = base.clone();
    if let HandleSpec::Bar { thickness: t, .. } = &mut spec.handle {
        *t = thickness;
    }
    let obj = Arc::new(ArticulatedObject::from_spec(spec).unwrap());
    grasped_on_handle(&obj, hb, 0.0).is_some()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn grasp_success_is_monotone_in_thickness(pick in 0usize..6, a in 0.005f64..0.12, b in 0.005f64..0.12) {
        let (obj, hb) = with_bar(ShapeFamily::Drawer, 6).swap_remove(pick);
        let (thin, thick) = if a < b { (a, b) } else { (b, a) };
        if handle_grasps(&obj.spec, hb, thick) {
            prop_assert!(handle_grasps(&obj.spec, hb, thin));
        }
        if thin > EngineConfig::default().max_opening {
            prop_assert!(!handle_grasps(&obj.spec, hb, thin));
        }
    }

    #[test]
    fn replaying_an_execution_is_bit_identical(seed in 0u64..50, dz in prop::collection::vec(-0.1f64..0.02, 1..5)) {
        let obj = Arc::new(generate_shape(ShapeFamily::Drawer, seed));
        let q0 = obj.limits[1];
        let c = front_contact(&obj, 0, q0);
        let p = c.world(&obj, q0);
        let mut wps = vec![Waypoint { position: p + Vec3::z() * 0.02, orientation: frame_from_approach(&-Vec3::z(), 0.3) }];
        for d in dz {
            let last = *wps.last().unwrap();
            wps.push(translate(&last, Vec3::new(0.0, 0.0, d)));
        }
        let traj = artiprior::geometry::Trajectory::new(wps, InteractionType::Push).unwrap();
        let task = TaskSpec::new(-0.1, InteractionType::Push).unwrap();
        let e1 = execute_trajectory(obj.clone(), task, c, q0, &traj, &EngineConfig::default()).unwrap();
        let e2 = execute_trajectory(obj.clone(), task, c, q0, &traj, &EngineConfig::default()).unwrap();
        prop_assert_eq!(e1, e2);
        prop_assert!(e1.delta_theta <= 0.0);
        prop_assert!(obj.in_limits(q0 + e1.delta_theta));
    }
}

mod common;

use artiprior::geometry::*;
use artiprior::seeding;
use common::random_trajectory;
use proptest::prelude::*;

fn close(a: &Mat3, b: &Mat3, tol: f64) -> bool {
    (a - b).abs().max() < tol
}

fn unit() -> impl Strategy<Value = Vec3> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
        .prop_filter("non-degenerate", |(x, y, z)| x * x + y * y + z * z > 0.01)
        .prop_map(|(x, y, z)| Vec3::new(x, y, z).normalize())
}

fn euler() -> impl Strategy<Value = [f64; 3]> {
    (-3.1f64..3.1, -1.5f64..1.5, -3.1f64..3.1).prop_map(|(a, b, c)| [a, b, c])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn euler_round_trips_through_matrices(e in euler()) {
        let r = euler_to_matrix(e);
        prop_assert!(is_rotation(&r, ROTATION_TOLERANCE));
        prop_assert!(close(&euler_to_matrix(matrix_to_euler(&r)), &r, 1e-9));
    }

    #[test]
    fn rot6d_round_trips(e in euler()) {
        let r = euler_to_matrix(e);
        let six = rot6d_from_matrix(&r).unwrap();
        prop_assert!(close(&rot6d_to_matrix(&six).unwrap(), &r, 1e-9));
    }

    #[test]
    fn rot6d_decoding_always_gives_a_rotation(a in unit(), b in unit()) {
        prop_assume!(a.cross(&b).norm() > 0.05);
        let m = rot6d_to_matrix(&[a.x, a.y, a.z, b.x, b.y, b.z]).unwrap();
        prop_assert!(is_rotation(&m, ROTATION_TOLERANCE));
        prop_assert!((m.column(0) - a).norm() < 1e-9);
    }

    #[test]
    fn serialization_round_trips(seed in 0u64..100_000) {
        let t = random_trajectory(&mut seeding::rng(seed), InteractionType::Pull);
        let back = Trajectory::deserialize(&t.serialize(), InteractionType::Pull).unwrap();
        prop_assert_eq!(back.len(), t.len());
        for (a, b) in t.waypoints().iter().zip(back.waypoints()) {
            prop_assert!((a.position - b.position).norm() < 1e-9);
            prop_assert!(close(&a.orientation, &b.orientation, 1e-9));
        }
    }

    #[test]
    fn padding_repeats_the_last_waypoint(seed in 0u64..100_000) {
        let t = random_trajectory(&mut seeding::rng(seed), InteractionType::Push);
        let p = t.padded_absolute();
        let last = t.waypoints().last().unwrap();
        for (i, wp) in p.iter().enumerate() {
            prop_assert_eq!(wp, t.waypoints().get(i).unwrap_or(last));
        }
        let v = t.serialize();
        prop_assert!(v[6 * t.len()..].iter().all(|x| *x == 0.0));
    }

    #[test]
    fn cone_samples_stay_within_the_half_angle(n in unit(), half in 0.0f64..1.2, seed in 0u64..1000) {
        let d = sample_cone_direction_seeded(&n, half, seed);
        prop_assert!((d.norm() - 1.0).abs() < 1e-9);
        prop_assert!(d.dot(&-n).clamp(-1.0, 1.0).acos() <= half + 1e-9);
    }

    #[test]
    fn approach_frames_point_along_the_approach(a in unit(), roll in -3.2f64..3.2) {
        let m = frame_from_approach(&a, roll);
        prop_assert!(is_rotation(&m, ROTATION_TOLERANCE));
        let w = Waypoint::new(Vec3::zeros(), m).unwrap();
        prop_assert!((w.approach() - a).norm() < 1e-9);
        prop_assert!(w.closing_axis().dot(&a).abs() < 1e-9);
    }
}

#[test]
fn six_waypoints_are_rejected() {
    let wp = Waypoint::from_euler(Vec3::zeros(), [0.0; 3]);
    assert!(Trajectory::new(vec![wp; MAX_WAYPOINTS + 1], InteractionType::Push).is_err());
    let mut v = vec![0.0; SERIALIZED_DIM + 6];
    v[SERIALIZED_DIM] = 0.1;
    assert!(Trajectory::deserialize(&v, InteractionType::Push).is_err());
}

use super::{Mat3, Vec3};
use crate::error::{validation, Result};

/// Orthonormality tolerance used by every rotation validator.
pub const ROTATION_TOLERANCE: f64 = 1e-6;

/// Intrinsic XYZ euler angles to a rotation matrix: `R = Rx(a) * Ry(b) * Rz(c)`.
pub fn euler_to_matrix(euler: [f64; 3]) -> Mat3 {
    let (sa, ca) = euler[0].sin_cos();
    let (sb, cb) = euler[1].sin_cos();
    let (sc, cc) = euler[2].sin_cos();
    Mat3::new(
        cb * cc,
        -cb * sc,
        sb,
        ca * sc + sa * sb * cc,
        ca * cc - sa * sb * sc,
        -sa * cb,
        sa * sc - ca * sb * cc,
        sa * cc + ca * sb * sc,
        ca * cb,
    )
}

/// Inverse of [`euler_to_matrix`]; the middle angle lies in `[-pi/2, pi/2]`.
pub fn matrix_to_euler(r: &Mat3) -> [f64; 3] {
    let sb = r[(0, 2)].clamp(-1.0, 1.0);
    let b = sb.asin();
    if sb.abs() < 1.0 - 1e-12 {
        let a = (-r[(1, 2)]).atan2(r[(2, 2)]);
        let c = (-r[(0, 1)]).atan2(r[(0, 0)]);
        [a, b, c]
    } else {
        // gimbal lock: only a +/- c is observable, put everything into a
        let a = r[(2, 1)].atan2(r[(1, 1)]);
        [a, b, 0.0]
    }
}

pub fn is_rotation(r: &Mat3, tol: f64) -> bool {
    if !r.iter().all(|v| v.is_finite()) {
        return false;
    }
    let err = (r.transpose() * r - Mat3::identity()).abs().max();
    err <= tol && (r.determinant() - 1.0).abs() <= tol * 3.0
}

/// First two columns of `r`, concatenated.
pub fn rot6d_from_matrix(r: &Mat3) -> Result<[f64; 6]> {
    if !is_rotation(r, ROTATION_TOLERANCE) {
        return Err(validation("rot6d_from_matrix: input is not a rotation matrix"));
    }
    Ok(rot6d_from_matrix_unchecked(r))
}

pub fn rot6d_from_matrix_unchecked(r: &Mat3) -> [f64; 6] {
    [
        r[(0, 0)],
        r[(1, 0)],
        r[(2, 0)],
        r[(0, 1)],
        r[(1, 1)],
        r[(2, 1)],
    ]
}

/// Gram-Schmidt on the two 3-subvectors, third column by cross product.
pub fn rot6d_to_matrix(r6: &[f64; 6]) -> Result<Mat3> {
    if !r6.iter().all(|v| v.is_finite()) {
        return Err(validation("rot6d_to_matrix: non-finite input"));
    }
    let a = Vec3::new(r6[0], r6[1], r6[2]);
    let b = Vec3::new(r6[3], r6[4], r6[5]);
    let na = a.norm();
    if na < 1e-12 {
        return Err(validation("rot6d_to_matrix: first column is zero"));
    }
    let c0 = a / na;
    let b_perp = b - c0 * c0.dot(&b);
    let nb = b_perp.norm();
    if nb < 1e-9 * b.norm().max(1e-300) || nb < 1e-12 {
        return Err(validation("rot6d_to_matrix: columns are parallel or zero"));
    }
    let c1 = b_perp / nb;
    let c2 = c0.cross(&c1);
    Ok(Mat3::from_columns(&[c0, c1, c2]))
}

/// Gripper frame whose third column is the approach direction. `roll` spins the
/// closing axis (second column) about the approach direction.
pub fn frame_from_approach(approach: &Vec3, roll: f64) -> Mat3 {
    let z = approach.normalize();
    let e1 = super::any_perpendicular(&z);
    let e2 = z.cross(&e1);
    let (s, c) = roll.sin_cos();
    let y = e1 * c + e2 * s;
    let x = y.cross(&z);
    Mat3::from_columns(&[x, y, z])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::{Rotation3, Unit};
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn axis_rot(axis: Vec3, angle: f64) -> Mat3 {
        Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle).into_inner()
    }

    // Independent oracle: product of elementary rotations.
    fn euler_oracle(e: [f64; 3]) -> Mat3 {
        axis_rot(Vec3::x(), e[0]) * axis_rot(Vec3::y(), e[1]) * axis_rot(Vec3::z(), e[2])
    }

    #[test]
    fn identity_to_rot6d() {
        let r6 = rot6d_from_matrix(&Mat3::identity()).unwrap();
        assert_eq!(r6, [1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn quarter_turn_about_z() {
        let r = axis_rot(Vec3::z(), FRAC_PI_2);
        let r6 = rot6d_from_matrix(&r).unwrap();
        let expected = [0.0, 1.0, 0.0, -1.0, 0.0, 0.0];
        for (a, b) in r6.iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn gram_schmidt_is_scale_invariant() {
        let r = rot6d_to_matrix(&[2.0, 0.0, 0.0, 0.0, 3.0, 0.0]).unwrap();
        assert_abs_diff_eq!((r - Mat3::identity()).abs().max(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn degenerate_6d_rejected() {
        assert!(rot6d_to_matrix(&[0.0; 6]).is_err());
        assert!(rot6d_to_matrix(&[1.0, 0.0, 0.0, 2.0, 0.0, 0.0]).is_err());
        assert!(rot6d_to_matrix(&[1.0, 0.0, 0.0, f64::NAN, 1.0, 0.0]).is_err());
    }

    #[test]
    fn non_rotation_rejected() {
        let mut r = Mat3::identity();
        r[(0, 0)] = 1.1;
        assert!(rot6d_from_matrix(&r).is_err());
        let reflect = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        assert!(rot6d_from_matrix(&reflect).is_err());
    }

    #[test]
    fn euler_matches_elementary_products() {
        let e = [0.3, -0.7, 1.9];
        assert_abs_diff_eq!((euler_to_matrix(e) - euler_oracle(e)).abs().max(), 0.0, epsilon = 1e-12);
        let z90 = euler_to_matrix([0.0, 0.0, FRAC_PI_2]);
        assert_abs_diff_eq!((z90 - axis_rot(Vec3::z(), FRAC_PI_2)).abs().max(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn gimbal_lock_extraction_is_consistent() {
        let r = euler_to_matrix([0.4, FRAC_PI_2, 0.2]);
        let back = euler_to_matrix(matrix_to_euler(&r));
        assert_abs_diff_eq!((r - back).abs().max(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn approach_frame_is_rotation() {
        let f = frame_from_approach(&Vec3::new(0.2, -0.3, -1.0), 0.7);
        assert!(is_rotation(&f, 1e-12));
        assert_abs_diff_eq!(f.column(2).dot(&Vec3::new(0.2, -0.3, -1.0).normalize()), 1.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn euler_round_trip(a in -3.1..3.1f64, b in -1.5..1.5f64, c in -3.1..3.1f64) {
            let r = euler_to_matrix([a, b, c]);
            let back = euler_to_matrix(matrix_to_euler(&r));
            prop_assert!((r - back).abs().max() < 1e-9);
        }

        #[test]
        fn rot6d_output_is_orthonormal(v in proptest::array::uniform6(-2.0..2.0f64)) {
            if let Ok(r) = rot6d_to_matrix(&v) {
                prop_assert!(is_rotation(&r, 1e-9));
            }
        }
    }
}

use super::Vec3;
use rand::Rng;

/// Some unit vector orthogonal to `v` (deterministic).
pub fn any_perpendicular(v: &Vec3) -> Vec3 {
    let helper = if v.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    v.cross(&helper).normalize()
}

/// Uniform direction on the spherical cap of half-angle `half_angle` around `-normal`.
pub fn sample_cone_direction<R: Rng + ?Sized>(normal: &Vec3, half_angle: f64, rng: &mut R) -> Vec3 {
    let axis = -normal;
    let u: f64 = rng.random();
    let v: f64 = rng.random();
    let cos_t = 1.0 - u * (1.0 - half_angle.cos());
    let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
    if sin_t == 0.0 {
        return axis;
    }
    let e1 = any_perpendicular(&axis);
    let e2 = axis.cross(&e1);
    let phi = std::f64::consts::TAU * v;
    (axis * cos_t + (e1 * phi.cos() + e2 * phi.sin()) * sin_t).normalize()
}

pub fn sample_cone_direction_seeded(normal: &Vec3, half_angle: f64, seed: u64) -> Vec3 {
    sample_cone_direction(normal, half_angle, &mut crate::seeding::rng(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding;

    #[test]
    fn zero_angle_is_exactly_antinormal() {
        let n = Vec3::new(0.0, 0.6, 0.8);
        let d = sample_cone_direction_seeded(&n, 0.0, 3);
        assert_eq!(d, -n);
    }

    #[test]
    fn samples_stay_in_cone_and_center_on_antinormal() {
        let n = Vec3::new(1.0, 2.0, -0.5).normalize();
        let half = 30f64.to_radians();
        let mut rng = seeding::rng(11);
        let mut mean = Vec3::zeros();
        for _ in 0..10_000 {
            let d = sample_cone_direction(&n, half, &mut rng);
            assert!((d.norm() - 1.0).abs() < 1e-12);
            let angle = d.dot(&-n).clamp(-1.0, 1.0).acos();
            assert!(angle <= half + 1e-9, "angle {angle}");
            mean += d;
        }
        let mean = mean.normalize();
        assert!(mean.dot(&-n) > 0.999);
    }

    #[test]
    fn seeded_is_deterministic() {
        let n = Vec3::z();
        let a = sample_cone_direction_seeded(&n, 0.5, 42);
        let b = sample_cone_direction_seeded(&n, 0.5, 42);
        assert_eq!(a, b);
    }
}

use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_6};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;
use crate::seeding;

pub const AZIMUTH_RANGE: [f64; 2] = [-FRAC_PI_2, FRAC_PI_2];
pub const ELEVATION_RANGE: [f64; 2] = [FRAC_PI_6, FRAC_PI_3];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub width: usize,
    pub height: usize,
    pub fov_y_deg: f64,
}

impl Default for Intrinsics {
    fn default() -> Self {
        Intrinsics {
            width: 168,
            height: 168,
            fov_y_deg: 80.0,
        }
    }
}

/// Camera on the unit sphere around the shape center, in front of the shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraView {
    pub azimuth: f64,
    pub elevation: f64,
    pub distance: f64,
    pub look_at: [f64; 3],
    pub intrinsics: Intrinsics,
}

impl CameraView {
    pub fn new(azimuth: f64, elevation: f64, intrinsics: Intrinsics) -> Self {
        CameraView {
            azimuth,
            elevation,
            distance: 1.0,
            look_at: [0.0; 3],
            intrinsics,
        }
    }

    pub fn position(&self) -> Vec3 {
        let (sa, ca) = self.azimuth.sin_cos();
        let (se, ce) = self.elevation.sin_cos();
        Vec3::from(self.look_at) + Vec3::new(sa * ce, se, ca * ce) * self.distance
    }

    /// (forward, right, up) camera basis.
    pub fn basis(&self) -> (Vec3, Vec3, Vec3) {
        let fwd = (Vec3::from(self.look_at) - self.position()).normalize();
        let right = fwd.cross(&Vec3::y()).normalize();
        let up = right.cross(&fwd);
        (fwd, right, up)
    }

    /// Unit ray direction through the center of pixel (col, row).
    pub fn pixel_ray(&self, col: usize, row: usize) -> Vec3 {
        let (fwd, right, up) = self.basis();
        self.pixel_ray_with(col, row, &fwd, &right, &up)
    }

    pub(crate) fn pixel_ray_with(&self, col: usize, row: usize, fwd: &Vec3, right: &Vec3, up: &Vec3) -> Vec3 {
        let Intrinsics {
            width,
            height,
            fov_y_deg,
        } = self.intrinsics;
        let tan = (fov_y_deg.to_radians() / 2.0).tan();
        let aspect = width as f64 / height as f64;
        let u = ((col as f64 + 0.5) / width as f64 * 2.0 - 1.0) * tan * aspect;
        let v = (1.0 - (row as f64 + 0.5) / height as f64 * 2.0) * tan;
        (fwd + right * u + up * v).normalize()
    }
}

pub fn sample_camera<R: Rng + ?Sized>(rng: &mut R, intrinsics: Intrinsics) -> CameraView {
    let az = AZIMUTH_RANGE[0] + (AZIMUTH_RANGE[1] - AZIMUTH_RANGE[0]) * rng.random::<f64>();
    let el = ELEVATION_RANGE[0] + (ELEVATION_RANGE[1] - ELEVATION_RANGE[0]) * rng.random::<f64>();
    CameraView::new(az, el, intrinsics)
}

pub fn sample_camera_seeded(seed: u64, intrinsics: Intrinsics) -> CameraView {
    sample_camera(&mut seeding::rng(seed), intrinsics)
}

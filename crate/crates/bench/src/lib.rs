//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use artiprior::artsim::{generate_shape_in, sample_camera_seeded, ArticulatedObject, CameraView, Intrinsics, ShapeFamily};

pub fn drawer() -> Arc<ArticulatedObject> {
    Arc::new(generate_shape_in(ShapeFamily::Drawer, "cabinet", 3))
}

pub fn view() -> CameraView {
    sample_camera_seeded(5, Intrinsics::default())
}

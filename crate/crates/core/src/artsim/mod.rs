//! Procedural articulated objects, rendering and the gripper contact model.

mod camera;
mod engine;
mod obb;
mod render;
mod shape;
mod task;

pub use camera::{sample_camera, sample_camera_seeded, CameraView, Intrinsics, AZIMUTH_RANGE, ELEVATION_RANGE};
pub use engine::{
    execute_trajectory, feasible_start_range, reset_episode, reset_episode_at, reset_with_gripper,
    ContactMode, ContactPoint, ContactReport, EngineConfig, EpisodeState, Execution,
};
pub use obb::{Face, Obb, RayHit};
pub use render::{
    farthest_point_sampling, render_hits, render_pointcloud, PartFace, PointCloud, PosedScene,
    SurfaceHit,
};
pub use shape::{
    generate_fleet, generate_shape, generate_shape_in, ArticulatedObject, Dimensions, Fleet,
    HandleSpec, HingeSide, JointKind, JointSpec, PartBox, PartTransform, ShapeFamily, ShapeSpec,
};
pub use task::{check_success, check_success_with, TaskSpec, SUCCESS_TOLERANCE};

//! Rotation representations, waypoint/trajectory encoding and direction sampling.

mod rotation;
mod sampling;
mod trajectory;

pub use rotation::{
    euler_to_matrix, frame_from_approach, is_rotation, matrix_to_euler, rot6d_from_matrix,
    rot6d_from_matrix_unchecked, rot6d_to_matrix, ROTATION_TOLERANCE,
};
pub use sampling::{any_perpendicular, sample_cone_direction, sample_cone_direction_seeded};
pub use trajectory::{
    compose_residual, InteractionType, Trajectory, Waypoint, WaypointJson, MAX_WAYPOINTS,
    SERIALIZED_DIM,
};

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;

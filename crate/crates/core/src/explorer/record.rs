use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::artsim::{generate_shape_in, ArticulatedObject, CameraView, ContactPoint, ShapeFamily, TaskSpec};
use crate::geometry::Trajectory;

/// Regenerable reference to a procedural shape.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ObjectRef {
    pub family: ShapeFamily,
    pub tag: String,
    pub seed: u64,
}

impl ObjectRef {
    pub fn of(obj: &ArticulatedObject) -> Self {
        ObjectRef {
            family: obj.spec.category,
            tag: obj.spec.tag.clone(),
            seed: obj.spec.seed,
        }
    }

    pub fn id(&self) -> String {
        format!("{}-{}-{}", self.family, self.tag, self.seed)
    }

    pub fn resolve(&self) -> Arc<ArticulatedObject> {
        Arc::new(generate_shape_in(self.family, &self.tag, self.seed))
    }
}

/// One interaction episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub object: ObjectRef,
    pub camera: CameraView,
    pub contact: ContactPoint,
    pub task: TaskSpec,
    pub start_q: f64,
    pub trajectory: Trajectory,
    pub achieved: f64,
    pub success: bool,
    /// Training epoch of the policy that produced the record.
    pub epoch: usize,
    /// Hash of the generating configuration.
    #[serde(default)]
    pub provenance: String,
}

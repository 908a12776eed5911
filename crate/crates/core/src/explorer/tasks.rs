use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::artsim::{
    feasible_start_range, render_hits, sample_camera, ArticulatedObject, CameraView, ContactPoint, Fleet, Intrinsics,
    JointKind, TaskSpec,
};
use crate::error::{Error, Result};
use crate::geometry::InteractionType;
use crate::seeding;

/// Magnitude ranges for training tasks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskRanges {
    pub revolute_deg: [f64; 2],
    pub prismatic: [f64; 2],
}

impl Default for TaskRanges {
    fn default() -> Self {
        TaskRanges {
            revolute_deg: [10.0, 70.0],
            prismatic: [0.1, 0.7],
        }
    }
}

impl TaskRanges {
    pub fn for_joint(&self, kind: JointKind) -> [f64; 2] {
        match kind {
            JointKind::Revolute => [self.revolute_deg[0].to_radians(), self.revolute_deg[1].to_radians()],
            JointKind::Prismatic => self.prismatic,
        }
    }
}

/// Task sign convention: pulls open (θ > 0), pushes close (θ < 0).
pub fn task_sign(interaction: InteractionType) -> f64 {
    match interaction {
        InteractionType::Pull => 1.0,
        InteractionType::Push => -1.0,
    }
}

#[derive(Debug, Clone)]
pub struct TrainingTask {
    pub object: Arc<ArticulatedObject>,
    pub camera: CameraView,
    pub contact: ContactPoint,
    pub task: TaskSpec,
    pub start_q: f64,
}

/// Fleet indices grouped by category tag, in tag order.
pub fn category_groups(fleet: &Fleet) -> Vec<(String, Vec<usize>)> {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, o) in fleet.iter().enumerate() {
        groups.entry(o.category().to_string()).or_default().push(i);
    }
    groups.into_iter().collect()
}

/// Uniform |θ| in the range, capped by the joint's travel; `None` if the
/// joint cannot travel the minimal magnitude.
pub fn sample_theta<R: Rng + ?Sized>(
    obj: &ArticulatedObject,
    interaction: InteractionType,
    ranges: &TaskRanges,
    rng: &mut R,
) -> Option<f64> {
    let [lo, hi] = ranges.for_joint(obj.joint_kind());
    let travel = obj.limits[1] - obj.limits[0];
    let hi = hi.min(travel);
    if hi < lo {
        return None;
    }
    Some(task_sign(interaction) * (lo + (hi - lo) * rng.random::<f64>()))
}

/// Category uniform, shape uniform within category, θ and θ₀ uniform, random
/// view, contact uniform over the rendered movable-part pixels.
pub fn sample_training_task(
    fleet: &Fleet,
    interaction: InteractionType,
    ranges: &TaskRanges,
    intrinsics: Intrinsics,
    seed: u64,
) -> Result<TrainingTask> {
    if fleet.is_empty() {
        return Err(Error::Precondition("empty fleet".into()));
    }
    let groups = category_groups(fleet);
    let mut rng = seeding::rng(seed);
    for _ in 0..100 {
        let (_, members) = &groups[rng.random_range(0..groups.len())];
        let obj = &fleet[members[rng.random_range(0..members.len())]];
        let Some(theta) = sample_theta(obj, interaction, ranges, &mut rng) else {
            continue;
        };
        let [a, b] = feasible_start_range(obj, theta)?;
        let start_q = a + (b - a) * rng.random::<f64>();
        let camera = sample_camera(&mut rng, intrinsics);
        let hits = render_hits(obj, start_q, &camera)?;
        let part: Vec<_> = hits.iter().filter(|h| h.part_face.is_some()).collect();
        if part.is_empty() {
            continue;
        }
        let hit = part[rng.random_range(0..part.len())];
        let contact = ContactPoint::from_hit(obj, hit, start_q)?;
        return Ok(TrainingTask {
            object: obj.clone(),
            camera,
            contact,
            task: TaskSpec::new(theta, interaction)?,
            start_q,
        });
    }
    Err(Error::Infeasible("no feasible task found in 100 draws".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::artsim::{generate_fleet, ShapeFamily};

    fn small_intr() -> Intrinsics {
        Intrinsics {
            width: 48,
            height: 48,
            ..Default::default()
        }
    }

    #[test]
    fn categories_are_equally_likely() {
        let mut fleet = generate_fleet(ShapeFamily::Drawer, Some("cabinet"), 10, 1);
        fleet.extend(generate_fleet(ShapeFamily::Drawer, Some("table"), 100, 2));
        assert_eq!(category_groups(&fleet).len(), 2);
        let intr = Intrinsics {
            width: 24,
            height: 24,
            ..Default::default()
        };
        let n = 10000;
        let cabinet = (0..n)
            .filter(|&s| {
                let t = sample_training_task(&fleet, InteractionType::Push, &TaskRanges::default(), intr, s).unwrap();
                t.object.category() == "cabinet"
            })
            .count();
        let f = cabinet as f64 / n as f64;
        assert!((f - 0.5).abs() < 0.02, "{f}");
    }

    #[test]
    fn sampled_tasks_are_consistent() {
        let fleet = generate_fleet(ShapeFamily::Door, None, 6, 3);
        for s in 0..40 {
            let kind = if s % 2 == 0 { InteractionType::Push } else { InteractionType::Pull };
            let t = sample_training_task(&fleet, kind, &TaskRanges::default(), small_intr(), s).unwrap();
            let th = t.task.theta;
            assert!(th.abs() >= 10f64.to_radians() - 1e-12 && th.abs() <= 70f64.to_radians() + 1e-12);
            assert_eq!(th.signum(), task_sign(kind));
            assert!(t.object.in_limits(t.start_q) && t.object.in_limits(t.start_q + th));
            let p = t.object.part_transform(0.0).apply(&t.contact.rest_point);
            let pb = t.object.part[t.contact.face.part_box as usize].obb;
            assert!(pb.contains(&p, 1e-6));
        }
    }
}

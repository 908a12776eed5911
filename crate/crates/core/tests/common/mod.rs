#![allow(dead_code)]

use std::sync::Arc;

use artiprior::artsim::{
    generate_shape, reset_with_gripper, ArticulatedObject, ContactMode, ContactPoint, EngineConfig, EpisodeState, Face,
    HandleSpec, PartFace, ShapeFamily, TaskSpec,
};
use artiprior::geometry::{frame_from_approach, InteractionType, Vec3, Waypoint};

pub const FRONT: Face = Face { axis: 2, positive: true };

/// Contact at the center of the front face of part box `part_box`, measured at `q`.
pub fn front_contact(obj: &ArticulatedObject, part_box: u16, q: f64) -> ContactPoint {
    let face = PartFace { part_box, face: FRONT };
    let obb = obj.part_boxes_at(q)[part_box as usize].obb;
    ContactPoint::on_face(obj, face, obb.face_center(FRONT), q).unwrap()
}

/// Shapes of `family` with a bar handle, paired with the handle's part box index.
pub fn with_bar(family: ShapeFamily, count: usize) -> Vec<(Arc<ArticulatedObject>, u16)> {
    (0..2000u64)
        .map(|s| generate_shape(family, s))
        .filter_map(|o| match o.spec.handle {
            HandleSpec::Bar { .. } => {
                let i = o.part.iter().position(|b| b.handle).unwrap() as u16;
                Some((Arc::new(o), i))
            }
            _ => None,
        })
        .take(count)
        .collect()
}

/// A pull episode whose gripper has closed on the handle at `q0`, if some roll allows it.
pub fn grasped_on_handle(obj: &Arc<ArticulatedObject>, handle_box: u16, q0: f64) -> Option<EpisodeState> {
    let c = front_contact(obj, handle_box, q0);
    let p = c.world(obj, q0);
    let n = c.normal_world(obj, q0);
    let task = TaskSpec::new(0.1, InteractionType::Pull).unwrap();
    (0..32).find_map(|i| {
        let roll = i as f64 * std::f64::consts::TAU / 32.0;
        let wp = Waypoint { position: p + n * 0.02, orientation: frame_from_approach(&-n, roll) };
        let mut st = reset_with_gripper(obj.clone(), task, c, q0, wp, &EngineConfig::default()).ok()?;
        (st.attempt_grasp().ok()? && st.mode == ContactMode::Grasped).then_some(st)
    })
}

pub fn translate(wp: &Waypoint, d: Vec3) -> Waypoint {
    Waypoint { position: wp.position + d, ..*wp }
}

/// Steps a recorded trajectory through the engine, returning Δθ and d_gc after each move.
pub fn replay_steps(record: &artiprior::explorer::InteractionRecord) -> Vec<(f64, f64)> {
    let obj = record.object.resolve();
    let traj = &record.trajectory;
    let mut st = reset_with_gripper(obj, record.task, record.contact, record.start_q, *traj.first(), &EngineConfig::default())
        .unwrap();
    if record.task.interaction == InteractionType::Pull {
        st.attempt_grasp().unwrap();
    }
    traj.waypoints()[1..]
        .iter()
        .map(|wp| {
            let rep = st.step_gripper(wp);
            (st.delta_theta(), rep.d_gc)
        })
        .collect()
}

pub fn small_explorer_config() -> artiprior::explorer::ExplorerConfig {
    let mut cfg = artiprior::explorer::ExplorerConfig::default();
    cfg.td3.actor_hidden = vec![32; 2];
    cfg.td3.critic_hidden = vec![32; 2];
    cfg.td3.batch_size = 16;
    cfg.episodes_per_epoch = 12;
    cfg.warmup_episodes = 6;
    cfg.intrinsics = artiprior::artsim::Intrinsics { width: 48, height: 48, ..Default::default() };
    cfg
}

pub fn random_trajectory<R: rand::Rng>(rng: &mut R, interaction: InteractionType) -> artiprior::geometry::Trajectory {
    let n = rng.random_range(1..=artiprior::geometry::MAX_WAYPOINTS);
    let wps = (0..n)
        .map(|_| {
            let p = Vec3::new(rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6));
            let e = [rng.random_range(-3.0..3.0), rng.random_range(-1.4..1.4), rng.random_range(-3.0..3.0)];
            Waypoint::from_euler(p, e)
        })
        .collect();
    artiprior::geometry::Trajectory::new(wps, interaction).unwrap()
}

pub fn tiny_perception_config() -> artiprior::perception::PerceptionConfig {
    use artiprior::perception::{PerceptionConfig, PointNetConfig, SaLevel};
    PerceptionConfig {
        encoder: PointNetConfig {
            sa: vec![
                SaLevel { centers: 32, radius: 0.2, neighbors: 8, mlp: vec![16, 16] },
                SaLevel { centers: 8, radius: 0.5, neighbors: 8, mlp: vec![16, 32] },
            ],
            fp: vec![vec![32], vec![16]],
        },
        n_points: 128,
        contact_dim: 8,
        task_dim: 8,
        traj_dim: 16,
        latent_dim: 8,
        traj_hidden: vec![32],
        actionability_hidden: vec![32],
        scorer_hidden: vec![32],
        vae_encoder_hidden: vec![32],
        vae_decoder_hidden: vec![64],
        pad_tolerance: 0.01,
    }
}

pub fn tiny_bundle(seed: u64) -> artiprior::perception::PerceptionBundle {
    artiprior::perception::PerceptionBundle::new(tiny_perception_config(), candle_core::DType::F64, seed).unwrap()
}

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::artsim::TaskSpec;
use crate::datakit::write_ply;
use crate::error::{Error, Result};
use crate::geometry::Trajectory;
use crate::perception::{PerceptionBundle, PreparedCloud};

/// Blue → red ramp; the red channel increases and blue decreases with `v`.
pub fn heat_color(v: f64) -> [u8; 3] {
    let v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
    let g = 1.0 - (2.0 * v - 1.0).abs();
    [(255.0 * v).round() as u8, (160.0 * g).round() as u8, (255.0 * (1.0 - v)).round() as u8]
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisualFiles {
    pub actionability: PathBuf,
    pub proposals: PathBuf,
    pub scores: PathBuf,
}

#[derive(Serialize)]
struct ProposalFile<'a> {
    config_hash: &'a str,
    seed: u64,
    task: TaskSpec,
    point_index: usize,
    point: [f64; 3],
    proposals: Vec<PolyLine>,
}

#[derive(Serialize)]
struct PolyLine {
    score: f64,
    positions: Vec<[f64; 3]>,
    trajectory: Trajectory,
}

/// Actionability heatmap PLY, `k` proposals at the best point as JSON polylines,
/// and a PLY of the first proposal's score applied at every point.
pub fn emit_visuals(
    bundle: &PerceptionBundle,
    pc: &PreparedCloud,
    task: &TaskSpec,
    k: usize,
    out_dir: &Path,
    config_hash: &str,
    seed: u64,
) -> Result<VisualFiles> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let comments = [format!("config_hash {config_hash}"), format!("seed {seed}"), format!("task {} {}", task.interaction, task.theta)];
    let act = bundle.actionability_map(pc, task)?;
    let movable = pc.cloud.part_indices();
    let point = movable
        .iter()
        .copied()
        .max_by(|&a, &b| act[a].total_cmp(&act[b]))
        .ok_or_else(|| Error::Precondition("cloud has no movable-part points".into()))?;
    let colors: Vec<[u8; 3]> = act.iter().map(|&a| heat_color(a)).collect();
    let files = VisualFiles {
        actionability: out_dir.join("actionability.ply"),
        proposals: out_dir.join("proposals.json"),
        scores: out_dir.join("scores.ply"),
    };
    write_ply(&files.actionability, &pc.cloud, Some(&colors), &comments)?;
    let trajs = bundle.propose(pc, point, task, k, seed)?;
    let scores = bundle.score(pc, point, task, &trajs)?;
    let p = pc.cloud.points[point];
    let body = ProposalFile {
        config_hash,
        seed,
        task: *task,
        point_index: point,
        point: [p.x, p.y, p.z],
        proposals: trajs
            .iter()
            .zip(&scores)
            .map(|(t, &score)| PolyLine {
                score,
                positions: t.waypoints().iter().map(|w| [w.position.x, w.position.y, w.position.z]).collect(),
                trajectory: t.clone(),
            })
            .collect(),
    };
    std::fs::write(&files.proposals, serde_json::to_vec_pretty(&body)?).map_err(|e| Error::io(&files.proposals, e))?;
    if let Some(t) = trajs.first() {
        score_ply(bundle, pc, task, t, &p, &files.scores, &comments)?;
    }
    Ok(files)
}

fn score_ply(
    bundle: &PerceptionBundle,
    pc: &PreparedCloud,
    task: &TaskSpec,
    traj: &Trajectory,
    origin: &crate::geometry::Vec3,
    path: &Path,
    comments: &[String],
) -> Result<()> {
    let s = bundle.score_map(pc, task, traj, origin)?;
    let colors: Vec<[u8; 3]> = s.iter().map(|&v| heat_color(v)).collect();
    write_ply(path, &pc.cloud, Some(&colors), comments)
}

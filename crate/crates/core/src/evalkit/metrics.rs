use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{rot6d_from_matrix_unchecked, Trajectory};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn from_predictions(scores: &[f64], labels: &[bool], threshold: f64) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::Validation("one label per score is required".into()));
        }
        let mut c = ConfusionCounts::default();
        for (&s, &l) in scores.iter().zip(labels) {
            match (s > threshold, l) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Mean of positive and negative recall.
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
}

pub fn classification_metrics(c: &ConfusionCounts) -> Result<Metrics> {
    if c.tp + c.fn_ == 0 {
        return Err(Error::UndefinedMetric("recall: no positive samples (tp + fn = 0)"));
    }
    if c.tn + c.fp == 0 {
        return Err(Error::UndefinedMetric("negative recall: no negative samples (tn + fp = 0)"));
    }
    if c.tp + c.fp == 0 {
        return Err(Error::UndefinedMetric("precision: no positive predictions (tp + fp = 0)"));
    }
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    let precision = tp / (tp + fp);
    let recall = tp / (tp + fn_);
    let fscore = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(Metrics {
        accuracy: 0.5 * (recall + tn / (tn + fp)),
        precision,
        recall,
        fscore,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDistance {
    pub position: f64,
    pub orientation: f64,
}

impl TrajectoryDistance {
    pub fn total(&self) -> f64 {
        5.0 * self.position + self.orientation
    }
}

/// Position and orientation parts of the trajectory distance over the five padded slots.
pub fn trajectory_distance_terms(a: &Trajectory, b: &Trajectory) -> TrajectoryDistance {
    let (pa, pb) = (a.padded_absolute(), b.padded_absolute());
    let mut d = TrajectoryDistance {
        position: 0.0,
        orientation: 0.0,
    };
    for (x, y) in pa.iter().zip(&pb) {
        d.position += (x.position - y.position).abs().sum();
        let (rx, ry) = (rot6d_from_matrix_unchecked(&x.orientation), rot6d_from_matrix_unchecked(&y.orientation));
        d.orientation += rx.iter().zip(&ry).map(|(u, v)| (u - v).abs()).sum::<f64>();
    }
    d
}

pub fn trajectory_distance(a: &Trajectory, b: &Trajectory) -> f64 {
    trajectory_distance_terms(a, b).total()
}

pub const COVERAGE_THRESHOLD: f64 = 10.0;

/// Percentage of `gt` whose nearest prediction lies strictly below `threshold`.
pub fn coverage(gt: &[Trajectory], pred: &[Trajectory], threshold: f64) -> Result<f64> {
    if gt.is_empty() {
        return Err(Error::UndefinedMetric("coverage: empty ground-truth set"));
    }
    let covered = gt
        .iter()
        .filter(|g| pred.iter().any(|p| trajectory_distance(g, p) < threshold))
        .count();
    Ok(100.0 * covered as f64 / gt.len() as f64)
}

/// Mean distance over unordered pairs; 0 for fewer than two trajectories.
pub fn mean_pairwise_distance(trajs: &[Trajectory]) -> f64 {
    let n = trajs.len();
    if n < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            sum += trajectory_distance(&trajs[i], &trajs[j]);
        }
    }
    sum / (n * (n - 1) / 2) as f64
}

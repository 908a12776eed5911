use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::metrics::{classification_metrics, coverage, mean_pairwise_distance, ConfusionCounts, Metrics};
use crate::error::Result;
use crate::perception::{predict_scores, CloudCache, PerceptionBundle, TrainingPair};
use crate::seeding;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorsConfig {
    pub threshold: f64,
    pub proposals: usize,
    pub coverage_threshold: f64,
    /// Coverage is averaged over this many proposal draws.
    pub runs: usize,
}

impl Default for PriorsConfig {
    fn default() -> Self {
        PriorsConfig {
            threshold: 0.5,
            proposals: 100,
            coverage_threshold: super::metrics::COVERAGE_THRESHOLD,
            runs: 10,
        }
    }
}

/// Accuracy, precision, recall, F-score and coverage, all in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorsRow {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
    pub coverage: f64,
    /// Mean pairwise distance between proposals at the same point.
    pub diversity: f64,
}

impl PriorsRow {
    pub const CSV_HEADER: &'static str = "accuracy,precision,recall,fscore,coverage,diversity";

    pub fn csv(&self) -> String {
        format!(
            "{:.2},{:.2},{:.2},{:.2},{:.2},{:.4}",
            self.accuracy, self.precision, self.recall, self.fscore, self.coverage, self.diversity
        )
    }

    pub fn is_valid(&self) -> bool {
        [self.accuracy, self.precision, self.recall, self.fscore, self.coverage]
            .iter()
            .all(|v| v.is_finite() && (0.0..=100.0).contains(v))
            && self.diversity.is_finite()
            && self.diversity >= 0.0
    }
}

pub fn scorer_counts(bundle: &PerceptionBundle, cache: &mut CloudCache, pairs: &[TrainingPair], threshold: f64) -> Result<ConfusionCounts> {
    let samples = cache.samples(bundle, pairs)?;
    let scores = predict_scores(bundle, &samples)?;
    let labels: Vec<bool> = pairs.iter().map(|p| p.positive).collect();
    ConfusionCounts::from_predictions(&scores, &labels, threshold)
}

/// Classification metrics of the scorer plus proposal coverage of the positives.
pub fn eval_priors(
    bundle: &PerceptionBundle,
    cache: &mut CloudCache,
    pairs: &[TrainingPair],
    cfg: &PriorsConfig,
    seed: u64,
) -> Result<PriorsRow> {
    let m: Metrics = classification_metrics(&scorer_counts(bundle, cache, pairs, cfg.threshold)?)?;
    // ground truth grouped per (observation, point, task)
    let mut groups: BTreeMap<String, Vec<&TrainingPair>> = BTreeMap::new();
    for p in pairs.iter().filter(|p| p.positive) {
        let c = &p.record.contact.rest_point;
        let key = format!(
            "{}|{:x}{:x}{:x}|{:x}",
            crate::perception::cloud_key(&p.record),
            c.x.to_bits(),
            c.y.to_bits(),
            c.z.to_bits(),
            p.record.task.theta.to_bits()
        );
        groups.entry(key).or_default().push(p);
    }
    let runs = cfg.runs.max(1);
    let (mut cov, mut div, mut n_div) = (0.0, 0.0, 0usize);
    for run in 0..runs {
        let (mut covered, mut total) = (0.0, 0usize);
        for (g, members) in groups.values().enumerate() {
            let s = cache.sample(bundle, members[0])?;
            let pseed = seeding::derive(seed, "coverage", (run * groups.len() + g) as u64);
            let pred = bundle.propose(&s.cloud, s.index, &s.task, cfg.proposals, pseed)?;
            let gt: Vec<_> = members.iter().map(|p| p.record.trajectory.clone()).collect();
            covered += coverage(&gt, &pred, cfg.coverage_threshold)? * gt.len() as f64;
            total += gt.len();
            if run == 0 {
                div += mean_pairwise_distance(&pred);
                n_div += 1;
            }
        }
        cov += covered / total.max(1) as f64;
    }
    Ok(PriorsRow {
        accuracy: 100.0 * m.accuracy,
        precision: 100.0 * m.precision,
        recall: 100.0 * m.recall,
        fscore: 100.0 * m.fscore,
        coverage: cov / runs as f64,
        diversity: div / n_div.max(1) as f64,
    })
}

use std::sync::Arc;

use log::info;
use serde::{Deserialize, Serialize};

use super::bundle::PerceptionBundle;
use super::data::{generate_negative, observation_cloud, CloudCache, NegativeConfig, Sample, TrainingPair};
use super::train::{predict_scores, train_proposal, train_scorer, EpochLog, ProposalConfig, ScorerConfig};
use crate::artsim::{EngineConfig, Fleet};
use crate::error::Result;
use crate::explorer::{CuriosityFn, EpochStats, Explorer, InteractionRecord, ObjectRef, TrainingTask};
use crate::geometry::Trajectory;
use crate::seeding;

/// Scorer confidence on the observation of each training task.
pub struct BundleCuriosity<'a> {
    pub bundle: &'a PerceptionBundle,
}

impl crate::explorer::CuriositySource for BundleCuriosity<'_> {
    fn for_task<'a>(&'a self, task: &TrainingTask) -> Result<Box<CuriosityFn<'a>>> {
        let oref = ObjectRef::of(&task.object);
        let n = self.bundle.config.n_points;
        let raw = observation_cloud(&task.object, oref.seed, task.start_q, &task.camera, n)?;
        let pc = self.bundle.prepare(raw)?;
        let p = task.contact.world(&task.object, task.start_q);
        let index = pc.nearest(&p);
        let bundle = self.bundle;
        Ok(Box::new(move |traj: &Trajectory, spec| {
            let s = bundle.score_at(&pc, index, &p, spec, std::slice::from_ref(traj))?;
            Ok(s[0])
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JointConfig {
    /// Total epochs; odd ones train the policy, even ones the perception heads.
    pub epochs: usize,
    /// Adds the scorer-confidence penalty to policy rewards; off gives the ablation arm.
    pub curiosity: bool,
    /// Positives drawn per stratum per perception epoch, at most.
    pub per_stratum: usize,
    pub confidence_threshold: f64,
    pub scorer: ScorerConfig,
    pub proposal: ProposalConfig,
    pub negatives: NegativeConfig,
}

impl Default for JointConfig {
    fn default() -> Self {
        JointConfig {
            epochs: 10,
            curiosity: true,
            per_stratum: 100,
            confidence_threshold: 0.5,
            scorer: ScorerConfig { epochs: 5, ..Default::default() },
            proposal: ProposalConfig { epochs: 5, ..Default::default() },
            negatives: NegativeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JointReport {
    pub rl: Vec<EpochStats>,
    pub perception: Vec<EpochLog>,
    /// (high, low) positives used at each perception epoch.
    pub strata: Vec<(usize, usize)>,
}

/// Equal-size draws from the high- and low-confidence strata, newest first.
pub fn fifty_fifty(scores: &[f64], threshold: f64, cap: usize) -> (Vec<usize>, Vec<usize>) {
    let mut hi: Vec<usize> = (0..scores.len()).rev().filter(|&i| scores[i] > threshold).collect();
    let mut lo: Vec<usize> = (0..scores.len()).rev().filter(|&i| scores[i] <= threshold).collect();
    let k = hi.len().min(lo.len()).min(cap);
    hi.truncate(k);
    lo.truncate(k);
    (hi, lo)
}

/// Alternating policy / perception fine-tuning with the curiosity term active.
/// `pool` holds successful records from earlier epochs and grows with the new ones.
pub fn joint_curiosity_finetune(
    explorer: &mut Explorer,
    bundle: &PerceptionBundle,
    cache: &mut CloudCache,
    fleet: &Fleet,
    pool: &mut Vec<InteractionRecord>,
    cfg: &JointConfig,
    engine: &EngineConfig,
    seed: u64,
) -> Result<JointReport> {
    let mut report = JointReport::default();
    cache.add_objects(fleet);
    for epoch in 1..=cfg.epochs {
        if epoch % 2 == 1 {
            let source = BundleCuriosity { bundle };
            let src: Option<&dyn crate::explorer::CuriositySource> = if cfg.curiosity { Some(&source) } else { None };
            let (stats, records) = explorer.train_epoch(fleet, src)?;
            pool.extend(records.into_iter().filter(|r| r.success && r.task.interaction == explorer.interaction));
            report.rl.push(stats);
            continue;
        }
        let positives: Vec<TrainingPair> = pool.iter().cloned().map(TrainingPair::positive).collect();
        let samples = cache.samples(bundle, &positives)?;
        let scores = predict_scores(bundle, &samples)?;
        let (hi, lo) = fifty_fifty(&scores, cfg.confidence_threshold, cfg.per_stratum);
        report.strata.push((hi.len(), lo.len()));
        if hi.is_empty() {
            info!("joint epoch {epoch}: a confidence stratum is empty, perception skipped");
            continue;
        }
        let chosen: Vec<usize> = hi.into_iter().chain(lo).collect();
        let mut train: Vec<Sample> = Vec::with_capacity(chosen.len() * 2);
        let mut pos = Vec::with_capacity(chosen.len());
        for (j, &i) in chosen.iter().enumerate() {
            let rec = &pool[i];
            let obj: Arc<_> = cache.object(&rec.object);
            let nseed = seeding::derive(seed, "joint-negative", (epoch * 1_000_000 + j) as u64);
            match generate_negative(rec, &obj, &cfg.negatives, engine, nseed) {
                Ok(neg) => train.push(cache.sample(bundle, &neg)?),
                Err(e) => log::debug!("no negative for a pool record: {e}"),
            }
            pos.push(samples[i].clone());
        }
        train.extend(pos.iter().cloned());
        let eseed = seeding::derive(seed, "joint-epoch", epoch as u64);
        report.perception.extend(tag(train_scorer(bundle, &train, &cfg.scorer, false, eseed)?, epoch));
        report.perception.extend(tag(train_proposal(bundle, &pos, &cfg.proposal, false, eseed ^ 1)?, epoch));
    }
    Ok(report)
}

fn tag(mut logs: Vec<EpochLog>, epoch: usize) -> Vec<EpochLog> {
    for l in &mut logs {
        l.stage = format!("joint{epoch}-{}", l.stage);
    }
    logs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strata_are_balanced() {
        let scores = [0.9, 0.1, 0.8, 0.7, 0.2, 0.95, 0.6];
        let (hi, lo) = fifty_fifty(&scores, 0.5, 10);
        assert_eq!((hi.len(), lo.len()), (2, 2));
        assert!(hi.iter().all(|&i| scores[i] > 0.5));
        assert!(lo.iter().all(|&i| scores[i] <= 0.5));
        // newest records are preferred
        assert_eq!(hi, vec![6, 5]);
        let (hi, lo) = fifty_fifty(&scores, 0.5, 1);
        assert_eq!((hi.len(), lo.len()), (1, 1));
    }
}

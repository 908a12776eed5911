use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::artsim::Fleet;
use crate::error::{Error, Result};
use crate::explorer::{Exploration, Explorer};
use crate::perception::{generate_negative, NegativeConfig, TrainingPair};
use crate::seeding;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CollectConfig {
    /// Gaussian action noise while collecting; 0 runs the greedy policy.
    pub noise: f64,
    /// Give up after `attempts_factor * n_pos` episodes.
    pub attempts_factor: usize,
    pub negatives: NegativeConfig,
}

impl Default for CollectConfig {
    fn default() -> Self {
        CollectConfig {
            noise: 0.05,
            attempts_factor: 10,
            negatives: NegativeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Collected {
    /// Alternating positive / negative pairs.
    pub pairs: Vec<TrainingPair>,
    pub attempts: usize,
    pub successes: usize,
}

/// Runs the policy until `n_pos` successful records, each with a generated negative, are gathered.
pub fn collect_dataset(
    explorer: &Explorer,
    fleet: &Fleet,
    n_pos: usize,
    cfg: &CollectConfig,
    provenance: &str,
    seed: u64,
) -> Result<Collected> {
    let max_attempts = cfg.attempts_factor.max(1) * n_pos.max(1);
    let exploration = if cfg.noise > 0.0 { Exploration::Gaussian(cfg.noise) } else { Exploration::Greedy };
    let mut out = Collected {
        pairs: Vec::with_capacity(2 * n_pos),
        attempts: 0,
        successes: 0,
    };
    while out.pairs.len() < 2 * n_pos {
        if out.attempts >= max_attempts {
            return Err(Error::CollectionAborted(format!(
                "{} of {n_pos} positives after {} episodes (success rate {:.4}) on {} {} shapes",
                out.pairs.len() / 2,
                out.attempts,
                out.successes as f64 / out.attempts.max(1) as f64,
                fleet.len(),
                explorer.interaction
            )));
        }
        let i = out.attempts as u64;
        out.attempts += 1;
        let task = explorer.sample_task(fleet, seeding::derive(seed, "collect-task", i))?;
        let ep = explorer.rollout(&task, exploration, None, seeding::derive(seed, "collect-rollout", i))?;
        if !ep.record.success {
            continue;
        }
        out.successes += 1;
        let mut rec = ep.record;
        rec.provenance = provenance.to_string();
        let nseed = seeding::derive(seed, "collect-negative", i);
        match generate_negative(&rec, &task.object, &cfg.negatives, &explorer.config.engine, nseed) {
            Ok(neg) => {
                out.pairs.push(TrainingPair::positive(rec));
                out.pairs.push(neg);
            }
            Err(e) => debug!("positive dropped, no negative: {e}"),
        }
    }
    info!(
        "collected {n_pos} positives in {} episodes ({} successes)",
        out.attempts, out.successes
    );
    Ok(out)
}

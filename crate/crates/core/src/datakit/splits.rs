use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::artsim::Fleet;
use crate::error::{Error, Result};
use crate::seeding;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitTag {
    TrainCatTrainShape,
    TrainCatTestShape,
    TestCat,
}

impl std::fmt::Display for SplitTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SplitTag::TrainCatTrainShape => "train-cat-train-shape",
            SplitTag::TrainCatTestShape => "train-cat-test-shape",
            SplitTag::TestCat => "test-cat",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitRatios {
    /// Number of whole categories held out.
    pub test_categories: usize,
    /// Fraction of each training category's shapes used for training.
    pub train_shape_fraction: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            test_categories: 1,
            train_shape_fraction: 0.75,
        }
    }
}

/// Object id → split.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub assignment: BTreeMap<String, SplitTag>,
}

impl SplitAssignment {
    pub fn tag(&self, object_id: &str) -> Option<SplitTag> {
        self.assignment.get(object_id).copied()
    }

    pub fn ids(&self, tag: SplitTag) -> BTreeSet<&str> {
        self.assignment.iter().filter(|(_, t)| **t == tag).map(|(k, _)| k.as_str()).collect()
    }

    /// The fleet members assigned to `tag`, in fleet order.
    pub fn select(&self, fleet: &Fleet, tag: SplitTag) -> Fleet {
        fleet.iter().filter(|o| self.tag(&o.id()) == Some(tag)).cloned().collect()
    }
}

/// Holds out whole categories, then splits each remaining category by shape.
pub fn make_splits(fleet: &Fleet, ratios: &SplitRatios, seed: u64) -> Result<SplitAssignment> {
    if !(0.0..=1.0).contains(&ratios.train_shape_fraction) {
        return Err(Error::Validation("train_shape_fraction must lie in [0, 1]".into()));
    }
    let mut by_cat: BTreeMap<(String, String), Vec<String>> = BTreeMap::new();
    for o in fleet {
        by_cat
            .entry((o.family().to_string(), o.category().to_string()))
            .or_default()
            .push(o.id());
    }
    if ratios.test_categories > 0 && by_cat.len() < ratios.test_categories + 1 {
        return Err(Error::Precondition(format!(
            "holding out {} categories needs at least {} categories, fleet has {}",
            ratios.test_categories,
            ratios.test_categories + 1,
            by_cat.len()
        )));
    }
    let mut rng = seeding::rng(seed);
    let mut cats: Vec<_> = by_cat.keys().cloned().collect();
    cats.shuffle(&mut rng);
    let test: BTreeSet<_> = cats.into_iter().take(ratios.test_categories).collect();
    let mut out = SplitAssignment::default();
    for (cat, mut ids) in by_cat {
        if test.contains(&cat) {
            out.assignment.extend(ids.into_iter().map(|i| (i, SplitTag::TestCat)));
            continue;
        }
        ids.sort();
        ids.dedup();
        ids.shuffle(&mut rng);
        let n_train = (ids.len() as f64 * ratios.train_shape_fraction).round() as usize;
        for (k, id) in ids.into_iter().enumerate() {
            let tag = if k < n_train { SplitTag::TrainCatTrainShape } else { SplitTag::TrainCatTestShape };
            out.assignment.insert(id, tag);
        }
    }
    Ok(out)
}

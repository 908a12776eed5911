//! Declarative run configuration: TOML file, dotted-key overrides, content hash.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::artsim::{generate_fleet, Fleet, ShapeFamily};
use crate::datakit::{CollectConfig, SplitRatios};
use crate::error::{Error, Result};
use crate::evalkit::{DownstreamConfig, PriorsConfig};
use crate::explorer::ExplorerConfig;
use crate::geometry::InteractionType;
use crate::perception::{ActionabilityConfig, JointConfig, PerceptionConfig, ProposalConfig, ScorerConfig, StageOrder};
use crate::seeding;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FleetConfig {
    pub per_category: usize,
    /// Category presets to generate; empty means all of the family.
    pub categories: Vec<String>,
    pub seed: u64,
}

impl Default for FleetConfig {
    fn default() -> Self {
        FleetConfig {
            per_category: 40,
            categories: Vec::new(),
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RlStage {
    pub explorer: ExplorerConfig,
    pub epochs: usize,
    /// Greedy evaluation episodes after each epoch; 0 disables.
    pub eval_tasks: usize,
}

impl Default for RlStage {
    fn default() -> Self {
        let mut explorer = ExplorerConfig::default();
        explorer.td3.actor_hidden = vec![256; 4];
        explorer.td3.critic_hidden = vec![256; 3];
        RlStage {
            explorer,
            epochs: 10,
            eval_tasks: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CollectStage {
    #[serde(flatten)]
    pub collect: CollectConfig,
    pub train_positives: usize,
    /// Positives per held-out split.
    pub test_positives: usize,
    /// Write a PLY sidecar for every observation cloud.
    pub cloud_sidecars: bool,
}

impl Default for CollectStage {
    fn default() -> Self {
        CollectStage {
            collect: CollectConfig::default(),
            train_positives: 500,
            test_positives: 50,
            cloud_sidecars: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerceptionStage {
    pub model: PerceptionConfig,
    pub order: StageOrder,
    pub scorer: ScorerConfig,
    pub proposal: ProposalConfig,
    pub actionability: ActionabilityConfig,
    /// (cloud, point, task) samples for the actionability head.
    pub actionability_samples: usize,
}

impl Default for PerceptionStage {
    fn default() -> Self {
        PerceptionStage {
            model: PerceptionConfig::default(),
            order: StageOrder::default(),
            scorer: ScorerConfig::default(),
            proposal: ProposalConfig::default(),
            actionability: ActionabilityConfig::default(),
            actionability_samples: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct EvalStage {
    pub priors: PriorsConfig,
    pub downstream: DownstreamConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VisualsConfig {
    pub proposals: usize,
    pub object_index: usize,
}

impl Default for VisualsConfig {
    fn default() -> Self {
        VisualsConfig {
            proposals: 3,
            object_index: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub seed: u64,
    pub family: ShapeFamily,
    pub interaction: InteractionType,
    pub fleet: FleetConfig,
    pub split: SplitRatios,
    pub rl: RlStage,
    pub collect: CollectStage,
    pub perception: PerceptionStage,
    pub finetune: JointConfig,
    pub eval: EvalStage,
    pub visuals: VisualsConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 1,
            family: ShapeFamily::Drawer,
            interaction: InteractionType::Push,
            fleet: FleetConfig::default(),
            split: SplitRatios::default(),
            rl: RlStage::default(),
            collect: CollectStage::default(),
            perception: PerceptionStage::default(),
            finetune: JointConfig::default(),
            eval: EvalStage::default(),
            visuals: VisualsConfig::default(),
        }
    }
}

/// Named starting points for `--preset`.
pub const PRESETS: [&str; 3] = ["desk", "drawer-push-20", "smoke"];

impl Config {
    pub fn preset(name: &str) -> Result<Self> {
        let mut c = Config::default();
        match name {
            "desk" => {}
            // one category, 20 drawers, 15/5 shape split
            "drawer-push-20" => {
                c.fleet.per_category = 20;
                c.fleet.categories = vec!["cabinet".into()];
                c.split.test_categories = 0;
            }
            // minutes-scale run for wiring checks
            "smoke" => {
                c.fleet.per_category = 4;
                c.fleet.categories = vec!["cabinet".into()];
                c.split = SplitRatios {
                    test_categories: 0,
                    train_shape_fraction: 0.5,
                };
                c.rl.epochs = 4;
                c.rl.eval_tasks = 5;
                c.rl.explorer.td3.actor_hidden = vec![32; 2];
                c.rl.explorer.td3.critic_hidden = vec![32; 2];
                c.rl.explorer.td3.batch_size = 32;
                c.rl.explorer.buffer_size = 256;
                c.rl.explorer.episodes_per_epoch = 30;
                c.rl.explorer.warmup_episodes = 20;
                c.collect.train_positives = 4;
                c.collect.test_positives = 2;
                c.collect.collect.attempts_factor = 200;
                c.collect.collect.noise = 0.3;
                c.perception.model.n_points = 256;
                c.perception.scorer.epochs = 1;
                c.perception.proposal.epochs = 1;
                c.perception.actionability.epochs = 1;
                c.perception.actionability.proposals = 4;
                c.perception.actionability_samples = 4;
                c.finetune.epochs = 2;
                c.finetune.scorer.epochs = 1;
                c.finetune.proposal.epochs = 1;
                c.eval.priors.proposals = 4;
                c.eval.priors.runs = 1;
                c.eval.downstream.tasks = 2;
                c.eval.downstream.proposals = 4;
                c.eval.downstream.n_points = 256;
            }
            other => return Err(Error::Config(format!("unknown preset `{other}`, expected one of {PRESETS:?}"))),
        }
        Ok(c)
    }

    /// Parses TOML on top of the defaults; unknown keys are rejected.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let value: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        Self::from_table(value)
    }

    fn from_table(table: toml::Table) -> Result<Self> {
        let base = toml::Table::try_from(Config::default()).map_err(|e| Error::Config(e.to_string()))?;
        check_keys(&base, &table, "")?;
        let cfg: Config = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Applies `key.path=value` overrides; values parse as TOML, falling back to strings.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut table = toml::Table::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            let o = o.as_ref();
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
            let value = parse_value(raw.trim());
            set_path(&mut table, key.trim(), value)?;
        }
        Self::from_table(table)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }

    pub fn validate(&self) -> Result<()> {
        self.rl.explorer.validate()?;
        if self.fleet.per_category == 0 {
            return Err(Error::Config("fleet.per_category must be positive".into()));
        }
        let known = self.family.categories();
        if let Some(c) = self.fleet.categories.iter().find(|c| !known.contains(&c.as_str())) {
            return Err(Error::Config(format!("`{c}` is not a {} category (known: {known:?})", self.family)));
        }
        self.perception.model.encoder.validate()?;
        Ok(())
    }

    pub fn categories(&self) -> Vec<String> {
        if self.fleet.categories.is_empty() {
            self.family.categories().iter().map(|s| s.to_string()).collect()
        } else {
            self.fleet.categories.clone()
        }
    }

    /// The procedural fleet, in category order.
    pub fn build_fleet(&self) -> Fleet {
        self.categories()
            .iter()
            .enumerate()
            .flat_map(|(i, c)| {
                generate_fleet(self.family, Some(c), self.fleet.per_category, seeding::derive(self.fleet.seed, "fleet", i as u64))
            })
            .collect()
    }
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = table;
    for (i, p) in parts.iter().enumerate() {
        if i + 1 == parts.len() {
            match cur.get(*p) {
                Some(old) if std::mem::discriminant(old) != std::mem::discriminant(&value) => {
                    // integers are accepted where floats are expected
                    let coerced = match (old, &value) {
                        (toml::Value::Float(_), toml::Value::Integer(i)) => toml::Value::Float(*i as f64),
                        _ => return Err(Error::Config(format!("`{key}` expects a {}", old.type_str()))),
                    };
                    cur.insert(p.to_string(), coerced);
                }
                _ => {
                    cur.insert(p.to_string(), value);
                }
            }
            return Ok(());
        }
        cur = match cur.get_mut(*p) {
            Some(toml::Value::Table(t)) => t,
            _ => return Err(Error::Config(format!("unknown config section in `{key}`"))),
        };
    }
    Ok(())
}

fn check_keys(base: &toml::Table, given: &toml::Table, prefix: &str) -> Result<()> {
    for (k, v) in given {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match (base.get(k), v) {
            (None, _) => return Err(Error::Config(format!("unknown config key `{path}`"))),
            (Some(toml::Value::Table(b)), toml::Value::Table(g)) => check_keys(b, g, &path)?,
            _ => {}
        }
    }
    Ok(())
}

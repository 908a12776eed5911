//! Staged, resumable driver: shapes → policy pretraining → data collection →
//! perception → joint fine-tuning → evaluation, plus visual exports.

pub mod visuals;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use candle_core::DType;
use log::info;
use serde::{Deserialize, Serialize};

use crate::artsim::{Fleet, ShapeSpec};
use crate::baselines::run_heuristic;
use crate::config::Config;
use crate::datakit::{collect_dataset, load_dataset, make_splits, write_dataset, SplitAssignment, SplitTag, WriteOptions};
use crate::error::{Error, Result};
use crate::evalkit::{downstream_success, eval_priors, sample_downstream_tasks, DownstreamTask, PriorsRow, Selection};
use crate::explorer::Explorer;
use crate::perception::{
    actionability_targets, joint_curiosity_finetune, logs_to_csv, train_actionability, train_proposal, train_scorer,
    CloudCache, EpochLog, JointConfig, JointReport, PerceptionBundle, Sample, StageOrder, TrainingPair,
};
use crate::seeding;

pub use visuals::{emit_visuals, heat_color, VisualFiles};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    GenShapes,
    RlPretrain,
    Collect,
    Perception,
    Finetune,
    Eval,
}

pub const STAGES: [Stage; 6] = [
    Stage::GenShapes,
    Stage::RlPretrain,
    Stage::Collect,
    Stage::Perception,
    Stage::Finetune,
    Stage::Eval,
];

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::GenShapes => "gen-shapes",
            Stage::RlPretrain => "rl-pretrain",
            Stage::Collect => "collect",
            Stage::Perception => "perception",
            Stage::Finetune => "curiosity-finetune",
            Stage::Eval => "eval",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        STAGES
            .iter()
            .copied()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageMarker {
    pub stage: Stage,
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    Skipped,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FleetEntry {
    id: String,
    spec: ShapeSpec,
}

/// Labeled rows of the evaluation tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorsEntry {
    pub model: String,
    pub split: SplitTag,
    pub row: PriorsRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DownstreamEntry {
    pub method: String,
    pub success_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub config_hash: String,
    pub seed: u64,
    pub priors: Vec<PriorsEntry>,
    pub downstream: Vec<DownstreamEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub curiosity: bool,
    pub split: SplitTag,
    pub row: PriorsRow,
}

/// A run directory bound to one configuration.
pub struct Run {
    pub root: PathBuf,
    pub config: Config,
    pub hash: String,
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(p) = path.parent() {
        std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

impl Run {
    /// Creates or reopens `root`; refuses a directory produced by a different configuration.
    pub fn open(root: &Path, config: Config) -> Result<Self> {
        config.validate()?;
        let hash = config.hash();
        let hp = root.join("config_hash");
        if hp.exists() {
            let found = String::from_utf8_lossy(&read(&hp)?).trim().to_string();
            if found != hash {
                return Err(Error::ProvenanceMismatch { expected: hash, found });
            }
        } else {
            write(&hp, format!("{hash}\n"))?;
            write(&root.join("config.toml"), config.to_toml_string()?)?;
        }
        Ok(Run {
            root: root.to_path_buf(),
            config,
            hash,
        })
    }

    pub fn stage_seed(&self, stage: Stage) -> u64 {
        seeding::derive(self.config.seed, stage.name(), 0)
    }

    fn marker_path(&self, stage: Stage) -> PathBuf {
        self.root.join("stages").join(format!("{}.done", stage.name()))
    }

    pub fn is_done(&self, stage: Stage) -> Result<bool> {
        let p = self.marker_path(stage);
        if !p.exists() {
            return Ok(false);
        }
        let m: StageMarker = serde_json::from_slice(&read(&p)?)?;
        if m.config_hash != self.hash {
            return Err(Error::ProvenanceMismatch {
                expected: self.hash.clone(),
                found: m.config_hash,
            });
        }
        Ok(true)
    }

    fn mark_done(&self, stage: Stage) -> Result<()> {
        let m = StageMarker {
            stage,
            config_hash: self.hash.clone(),
            seed: self.stage_seed(stage),
        };
        write(&self.marker_path(stage), serde_json::to_vec_pretty(&m)?)
    }

    pub fn rl_dir(&self) -> PathBuf {
        self.root.join("rl")
    }

    pub fn data_dir(&self, tag: SplitTag) -> PathBuf {
        self.root.join("data").join(tag.to_string())
    }

    pub fn perception_bundle_path(&self) -> PathBuf {
        self.root.join("perception").join("bundle.safetensors")
    }

    pub fn finetune_dir(&self) -> PathBuf {
        self.root.join("finetune")
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.root.join("eval")
    }

    /// Runs every stage in order, skipping completed ones unless at or after `force_from`.
    pub fn run_all(&self, force_from: Option<Stage>) -> Result<Vec<(Stage, StageStatus)>> {
        let mut out = Vec::new();
        for st in STAGES {
            let forced = force_from.is_some_and(|f| st >= f);
            if !forced && self.is_done(st)? {
                info!("stage {st}: already complete, skipped");
                out.push((st, StageStatus::Skipped));
                continue;
            }
            self.run_stage(st)?;
            out.push((st, StageStatus::Ran));
        }
        Ok(out)
    }

    /// Runs one stage and writes its marker. Failures name the stage and leave no marker.
    pub fn run_stage(&self, stage: Stage) -> Result<()> {
        info!("stage {stage}: seed {}, config {}", self.stage_seed(stage), &self.hash[..12]);
        let r = match stage {
            Stage::GenShapes => self.gen_shapes(),
            Stage::RlPretrain => self.rl_pretrain(),
            Stage::Collect => self.collect(),
            Stage::Perception => self.perception(),
            Stage::Finetune => self.finetune(),
            Stage::Eval => self.eval().map(|_| ()),
        };
        r.map_err(|e| Error::Stage {
            stage: stage.name().to_string(),
            message: e.to_string(),
        })?;
        self.mark_done(stage)
    }

    fn require(&self, stage: Stage) -> Result<()> {
        if self.is_done(stage)? {
            Ok(())
        } else {
            Err(Error::Precondition(format!("stage `{stage}` has not completed in {}", self.root.display())))
        }
    }

    fn gen_shapes(&self) -> Result<()> {
        let fleet = self.config.build_fleet();
        let split = make_splits(&fleet, &self.config.split, self.stage_seed(Stage::GenShapes))?;
        let entries: Vec<FleetEntry> = fleet
            .iter()
            .map(|o| FleetEntry {
                id: o.id(),
                spec: o.spec.clone(),
            })
            .collect();
        write(&self.root.join("fleet.json"), serde_json::to_vec_pretty(&entries)?)?;
        write(&self.root.join("splits.json"), serde_json::to_vec_pretty(&split)?)?;
        info!("{} shapes in {} categories", fleet.len(), self.config.categories().len());
        Ok(())
    }

    /// The fleet and its split, checked against the stored shape list.
    pub fn fleet(&self) -> Result<(Fleet, SplitAssignment)> {
        self.require(Stage::GenShapes)?;
        let fleet = self.config.build_fleet();
        let entries: Vec<FleetEntry> = serde_json::from_slice(&read(&self.root.join("fleet.json"))?)?;
        if entries.len() != fleet.len() || entries.iter().zip(&fleet).any(|(e, o)| e.spec != o.spec) {
            return Err(Error::Validation("stored shapes differ from the regenerated fleet".into()));
        }
        let split: SplitAssignment = serde_json::from_slice(&read(&self.root.join("splits.json"))?)?;
        Ok((fleet, split))
    }

    fn rl_pretrain(&self) -> Result<()> {
        let (fleet, split) = self.fleet()?;
        let train = split.select(&fleet, SplitTag::TrainCatTrainShape);
        let seed = self.stage_seed(Stage::RlPretrain);
        let mut ex = Explorer::new(self.config.rl.explorer.clone(), self.config.interaction, seed)?;
        let mut csv = String::from("epoch,success_rate,greedy_success,her_added,critic_loss,actor_loss,noise\n");
        for e in 0..self.config.rl.epochs {
            let (s, _) = ex.train_epoch(&train, None)?;
            let greedy = if self.config.rl.eval_tasks > 0 {
                ex.evaluate(&train, self.config.rl.eval_tasks, seeding::derive(seed, "eval", e as u64))?
            } else {
                f64::NAN
            };
            csv.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                s.epoch, s.success_rate, greedy, s.her_added, s.critic_loss, s.actor_loss, s.noise
            ));
        }
        ex.save(&self.rl_dir(), &self.hash)?;
        write(&self.rl_dir().join("epochs.csv"), csv)
    }

    pub fn load_explorer(&self, dir: &Path) -> Result<Explorer> {
        Explorer::load(self.config.rl.explorer.clone(), dir, Some(&self.hash))
    }

    /// Held-out splits present in this run, with their shapes.
    fn held_out(&self, fleet: &Fleet, split: &SplitAssignment) -> Vec<(SplitTag, Fleet)> {
        [SplitTag::TrainCatTestShape, SplitTag::TestCat]
            .into_iter()
            .map(|t| (t, split.select(fleet, t)))
            .filter(|(_, f)| !f.is_empty())
            .collect()
    }

    fn collect(&self) -> Result<()> {
        let (fleet, split) = self.fleet()?;
        let ex = self.load_explorer(&self.rl_dir())?;
        let c = &self.config.collect;
        let seed = self.stage_seed(Stage::Collect);
        let opts = WriteOptions {
            shard_size: 1000,
            cloud_points: c.cloud_sidecars.then_some(self.config.perception.model.n_points),
        };
        let mut jobs = vec![(SplitTag::TrainCatTrainShape, split.select(&fleet, SplitTag::TrainCatTrainShape), c.train_positives)];
        jobs.extend(self.held_out(&fleet, &split).into_iter().map(|(t, f)| (t, f, c.test_positives)));
        for (k, (tag, part, n)) in jobs.into_iter().enumerate() {
            let got = collect_dataset(&ex, &part, n, &c.collect, &self.hash, seeding::derive(seed, "split", k as u64))?;
            info!("{tag}: {} pairs from {} episodes", got.pairs.len(), got.attempts);
            write_dataset(&self.data_dir(tag), &got.pairs, &self.hash, Some(tag), &opts)?;
        }
        Ok(())
    }

    pub fn load_pairs(&self, tag: SplitTag) -> Result<Vec<TrainingPair>> {
        self.require(Stage::Collect)?;
        Ok(load_dataset(&self.data_dir(tag), Some(&self.hash))?.1)
    }

    pub fn cache(&self, fleet: &Fleet) -> CloudCache {
        let mut cache = CloudCache::new(self.config.perception.model.n_points);
        cache.add_objects(fleet);
        cache
    }

    fn perception(&self) -> Result<()> {
        let (fleet, _) = self.fleet()?;
        let pairs = self.load_pairs(SplitTag::TrainCatTrainShape)?;
        let p = &self.config.perception;
        let seed = self.stage_seed(Stage::Perception);
        let bundle = PerceptionBundle::new(p.model.clone(), DType::F32, seed)?;
        let mut cache = self.cache(&fleet);
        let samples = cache.samples(&bundle, &pairs)?;
        let positives: Vec<Sample> = samples.iter().filter(|s| s.label > 0.5).cloned().collect();
        let mut logs: Vec<EpochLog> = Vec::new();
        let s1 = seeding::derive(seed, "scorer", 0);
        let s2 = seeding::derive(seed, "proposal", 0);
        match p.order {
            StageOrder::ScorerFirst => {
                logs.extend(train_scorer(&bundle, &samples, &p.scorer, true, s1)?);
                logs.extend(train_proposal(&bundle, &positives, &p.proposal, false, s2)?);
            }
            StageOrder::ProposalFirst => {
                logs.extend(train_proposal(&bundle, &positives, &p.proposal, true, s2)?);
                logs.extend(train_scorer(&bundle, &samples, &p.scorer, false, s1)?);
            }
        }
        let points = cache.point_samples(&bundle, &pairs, p.actionability_samples, seeding::derive(seed, "points", 0))?;
        let targets = actionability_targets(&bundle, &points, &p.actionability, seeding::derive(seed, "targets", 0))?;
        logs.extend(train_actionability(&bundle, &points, &targets, &p.actionability, seeding::derive(seed, "act", 0))?);
        bundle.save(&self.perception_bundle_path(), &self.hash)?;
        let dir = self.perception_bundle_path().parent().expect("has parent").to_path_buf();
        write(&dir.join("metrics.csv"), logs_to_csv(&logs))?;
        write(&dir.join("actionability_targets.json"), serde_json::to_vec(&targets)?)
    }

    pub fn load_bundle(&self, path: &Path) -> Result<PerceptionBundle> {
        PerceptionBundle::load(path, Some(&self.hash))
    }

    fn joint(&self, cfg: &JointConfig, seed: u64) -> Result<(Explorer, PerceptionBundle, JointReport)> {
        let (fleet, split) = self.fleet()?;
        let train = split.select(&fleet, SplitTag::TrainCatTrainShape);
        let mut ex = self.load_explorer(&self.rl_dir())?;
        let bundle = self.load_bundle(&self.perception_bundle_path())?;
        let mut pool: Vec<_> = self
            .load_pairs(SplitTag::TrainCatTrainShape)?
            .into_iter()
            .filter(|p| p.positive)
            .map(|p| p.record)
            .collect();
        let mut cache = self.cache(&fleet);
        let engine = self.config.rl.explorer.engine;
        let report = joint_curiosity_finetune(&mut ex, &bundle, &mut cache, &train, &mut pool, cfg, &engine, seed)?;
        Ok((ex, bundle, report))
    }

    fn finetune(&self) -> Result<()> {
        let (ex, bundle, report) = self.joint(&self.config.finetune, self.stage_seed(Stage::Finetune))?;
        let dir = self.finetune_dir();
        ex.save(&dir, &self.hash)?;
        bundle.save(&dir.join("bundle.safetensors"), &self.hash)?;
        write(&dir.join("metrics.csv"), logs_to_csv(&report.perception))?;
        write(&dir.join("report.json"), serde_json::to_vec_pretty(&report)?)
    }

    /// Test-shape manipulation problems for downstream evaluation.
    pub fn downstream_tasks(&self, fleet: &Fleet, split: &SplitAssignment) -> Result<Vec<DownstreamTask>> {
        let held = self.held_out(fleet, split);
        let shapes = held.first().map_or_else(|| split.select(fleet, SplitTag::TrainCatTrainShape), |(_, f)| f.clone());
        let ex = &self.config.rl.explorer;
        sample_downstream_tasks(
            &shapes,
            self.config.interaction,
            &ex.ranges,
            ex.intrinsics,
            self.config.eval.downstream.tasks,
            seeding::derive(self.stage_seed(Stage::Eval), "tasks", 0),
        )
    }

    fn models(&self) -> Vec<(String, PathBuf)> {
        let mut m = vec![("perception".to_string(), self.perception_bundle_path())];
        let ft = self.finetune_dir().join("bundle.safetensors");
        if self.is_done(Stage::Finetune).unwrap_or(false) {
            m.push(("finetune".to_string(), ft));
        }
        m
    }

    /// Scorer metrics and coverage of every trained model on each held-out split.
    pub fn eval_priors(&self) -> Result<Vec<PriorsEntry>> {
        self.require(Stage::Perception)?;
        let (fleet, split) = self.fleet()?;
        let seed = self.stage_seed(Stage::Eval);
        let mut out = Vec::new();
        for (name, path) in self.models() {
            let bundle = self.load_bundle(&path)?;
            let mut cache = self.cache(&fleet);
            for (tag, _) in self.held_out(&fleet, &split) {
                let pairs = self.load_pairs(tag)?;
                let row = eval_priors(&bundle, &mut cache, &pairs, &self.config.eval.priors, seeding::derive(seed, "priors", 0))?;
                out.push(PriorsEntry {
                    model: name.clone(),
                    split: tag,
                    row,
                });
            }
        }
        let mut csv = format!("model,split,{}\n", PriorsRow::CSV_HEADER);
        for p in &out {
            csv.push_str(&format!("{},{},{}\n", p.model, p.split, p.row.csv()));
        }
        write(&self.eval_dir().join("priors.csv"), csv)?;
        Ok(out)
    }

    /// Downstream success of every trained model, the random-point control and the heuristic.
    pub fn eval_downstream(&self) -> Result<Vec<DownstreamEntry>> {
        self.require(Stage::Perception)?;
        let (fleet, split) = self.fleet()?;
        let seed = self.stage_seed(Stage::Eval);
        let tasks = self.downstream_tasks(&fleet, &split)?;
        let engine = self.config.rl.explorer.engine;
        let mut out = Vec::new();
        for (name, path) in self.models() {
            let bundle = self.load_bundle(&path)?;
            let mut dc = self.config.eval.downstream;
            dc.selection = Selection::Learned;
            let r = downstream_success(&bundle, &tasks, &dc, &engine, seeding::derive(seed, "downstream", 0))?;
            out.push(DownstreamEntry {
                method: name.clone(),
                success_rate: r.success_rate,
            });
            if name == "perception" {
                dc.selection = Selection::RandomControl;
                let r = downstream_success(&bundle, &tasks, &dc, &engine, seeding::derive(seed, "downstream", 0))?;
                out.push(DownstreamEntry {
                    method: "random-control".into(),
                    success_rate: r.success_rate,
                });
            }
        }
        let mut ok = 0;
        for (i, t) in tasks.iter().enumerate() {
            let r = run_heuristic(&t.object, t.start_q, &t.task, t.camera, seeding::derive(seed, "heuristic", i as u64), &engine)?;
            ok += usize::from(r.success);
        }
        out.push(DownstreamEntry {
            method: "heuristic".into(),
            success_rate: 100.0 * ok as f64 / tasks.len().max(1) as f64,
        });
        let mut csv = String::from("method,success_rate\n");
        for d in &out {
            csv.push_str(&format!("{},{:.2}\n", d.method, d.success_rate));
        }
        write(&self.eval_dir().join("downstream.csv"), csv)?;
        Ok(out)
    }

    pub fn eval(&self) -> Result<EvalSummary> {
        let summary = EvalSummary {
            config_hash: self.hash.clone(),
            seed: self.stage_seed(Stage::Eval),
            priors: self.eval_priors()?,
            downstream: self.eval_downstream()?,
        };
        write(&self.eval_dir().join("run.json"), serde_json::to_vec_pretty(&summary)?)?;
        Ok(summary)
    }

    /// Fine-tunes twice from the pretrained models, with and without the
    /// curiosity term, and evaluates both on the held-out records.
    pub fn curiosity_ablation(&self, cfg: &JointConfig) -> Result<Vec<AblationRow>> {
        self.require(Stage::Perception)?;
        let (fleet, split) = self.fleet()?;
        let seed = seeding::derive(self.config.seed, "ablation", 0);
        let mut rows = Vec::new();
        for curiosity in [true, false] {
            let arm = JointConfig { curiosity, ..cfg.clone() };
            let (_, bundle, _) = self.joint(&arm, seed)?;
            let mut cache = self.cache(&fleet);
            for (tag, _) in self.held_out(&fleet, &split) {
                let pairs = self.load_pairs(tag)?;
                let row = eval_priors(&bundle, &mut cache, &pairs, &self.config.eval.priors, seeding::derive(seed, "priors", 0))?;
                rows.push(AblationRow { curiosity, split: tag, row });
            }
        }
        let mut csv = format!("curiosity,split,{}\n", PriorsRow::CSV_HEADER);
        for r in &rows {
            csv.push_str(&format!("{},{},{}\n", r.curiosity, r.split, r.row.csv()));
        }
        write(&self.eval_dir().join("ablation.csv"), csv)?;
        Ok(rows)
    }

    /// Heatmap, proposals and score map for one held-out shape.
    pub fn visualize(&self, bundle_path: Option<&Path>, out_dir: &Path) -> Result<VisualFiles> {
        let (fleet, split) = self.fleet()?;
        let path = bundle_path.map_or_else(|| self.models().last().expect("one model").1.clone(), Path::to_path_buf);
        let bundle = self.load_bundle(&path)?;
        let tasks = self.downstream_tasks(&fleet, &split)?;
        let t = tasks
            .get(self.config.visuals.object_index % tasks.len().max(1))
            .ok_or_else(|| Error::Precondition("no downstream tasks configured".into()))?;
        let pc = crate::evalkit::PriorModel::observe(&bundle, t, self.config.perception.model.n_points)?;
        let seed = seeding::derive(self.config.seed, "visuals", 0);
        emit_visuals(&bundle, &pc, &t.task, self.config.visuals.proposals, out_dir, &self.hash, seed)
    }
}

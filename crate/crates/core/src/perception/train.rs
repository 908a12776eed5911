use std::collections::BTreeMap;

use candle_core::{Tensor, Var};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::bundle::{groups, trajectory_features, trajectory_from_features, PerceptionBundle};
use super::data::Sample;
use crate::error::{Error, Result};
use crate::geometry::{Vec3, MAX_WAYPOINTS, SERIALIZED_DIM};
use crate::nn::{bce_with_logits, sigmoid, to_f64_vec, Adam};
use crate::seeding;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScorerConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        ScorerConfig {
            epochs: 30,
            lr: 1e-3,
            batch_size: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProposalConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub kl_weight: f64,
    /// Fraction of epochs over which the KL weight ramps up linearly.
    pub kl_warmup: f64,
    pub l1_weight: f64,
    pub rotation_weight: f64,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        ProposalConfig {
            epochs: 60,
            lr: 1e-3,
            batch_size: 32,
            kl_weight: 1.0,
            kl_warmup: 0.1,
            l1_weight: 1.0,
            rotation_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActionabilityConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub proposals: usize,
    pub top_k: usize,
}

impl Default for ActionabilityConfig {
    fn default() -> Self {
        ActionabilityConfig {
            epochs: 30,
            lr: 1e-3,
            batch_size: 32,
            proposals: 100,
            top_k: 5,
        }
    }
}

/// Which head trains the shared encoders (they are frozen afterwards).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum StageOrder {
    #[default]
    ScorerFirst,
    ProposalFirst,
}

/// One row of the training-metrics CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub stage: String,
    pub epoch: usize,
    pub terms: BTreeMap<String, f64>,
}

pub fn logs_to_csv(logs: &[EpochLog]) -> String {
    let mut keys: Vec<&String> = logs.iter().flat_map(|l| l.terms.keys()).collect();
    keys.sort();
    keys.dedup();
    let mut out = String::from("stage,epoch");
    for k in &keys {
        out.push(',');
        out.push_str(k);
    }
    out.push('\n');
    for l in logs {
        out.push_str(&format!("{},{}", l.stage, l.epoch));
        for k in &keys {
            out.push(',');
            if let Some(v) = l.terms.get(*k) {
                out.push_str(&format!("{v}"));
            }
        }
        out.push('\n');
    }
    out
}

fn vars_for(bundle: &PerceptionBundle, prefixes: &[&str]) -> Vec<Var> {
    prefixes.iter().flat_map(|p| bundle.store.vars_with_prefix(p)).collect()
}

/// Point features and conditioning rows for a set of samples.
pub fn condition_rows(bundle: &PerceptionBundle, batch: &[&Sample]) -> Result<Tensor> {
    let plans: Vec<_> = batch.iter().map(|s| &s.cloud.plan).collect();
    let queries: Vec<Vec<usize>> = batch.iter().map(|s| vec![s.index]).collect();
    let fs = bundle.encoder.forward(&plans, &queries)?;
    let contacts: Vec<Vec3> = batch.iter().map(|s| s.contact).collect();
    let thetas: Vec<f64> = batch.iter().map(|s| s.task.theta).collect();
    bundle.condition(&fs, &contacts, &thetas)
}

/// Conditioning rows computed once with the shared encoders frozen.
fn frozen_conditions(bundle: &PerceptionBundle, samples: &[Sample]) -> Result<Tensor> {
    let mut parts = Vec::new();
    for chunk in samples.chunks(64) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        parts.push(condition_rows(bundle, &refs)?.detach());
    }
    Ok(Tensor::cat(&parts, 0)?)
}

fn traj_rows(bundle: &PerceptionBundle, batch: &[&Sample]) -> Result<Tensor> {
    let rows: Vec<_> = batch.iter().map(|s| s.traj).collect();
    bundle.traj_tensor(&rows)
}

fn index_tensor(idx: &[usize]) -> Result<Tensor> {
    Ok(Tensor::from_vec(
        idx.iter().map(|&i| i as u32).collect::<Vec<_>>(),
        idx.len(),
        &candle_core::Device::Cpu,
    )?)
}

/// Balanced BCE training of the scorer. With [`StageOrder::ScorerFirst`] the
/// shared encoders train here too.
pub fn train_scorer(
    bundle: &PerceptionBundle,
    samples: &[Sample],
    cfg: &ScorerConfig,
    train_shared: bool,
    seed: u64,
) -> Result<Vec<EpochLog>> {
    let pos: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].label > 0.5).collect();
    let neg: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].label <= 0.5).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Precondition("scorer training needs both positive and negative pairs".into()));
    }
    let mut prefixes = vec![groups::SCORER];
    if train_shared {
        prefixes.extend(groups::SHARED);
    }
    let mut opt = Adam::new(vars_for(bundle, &prefixes), cfg.lr)?;
    let frozen = if train_shared { None } else { Some(frozen_conditions(bundle, samples)?) };
    let mut rng = seeding::rng(seed);
    let half = (cfg.batch_size / 2).max(1);
    let steps = samples.len().div_ceil(2 * half).max(1);
    let mut logs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut total = 0.0;
        for _ in 0..steps {
            let mut idx: Vec<usize> = Vec::with_capacity(2 * half);
            for _ in 0..half {
                idx.push(pos[rng.random_range(0..pos.len())]);
            }
            for _ in 0..half {
                idx.push(neg[rng.random_range(0..neg.len())]);
            }
            let batch: Vec<&Sample> = idx.iter().map(|&i| &samples[i]).collect();
            let loss = match &frozen {
                Some(c) => {
                    let cond = c.index_select(&index_tensor(&idx)?, 0)?;
                    scorer_loss_with(bundle, &cond, &batch)?
                }
                None => scorer_loss(bundle, &batch)?,
            };
            opt.step(&loss)?;
            total += scalar(&loss)?;
        }
        logs.push(EpochLog {
            stage: "scorer".into(),
            epoch,
            terms: BTreeMap::from([("bce".to_string(), total / steps as f64)]),
        });
    }
    Ok(logs)
}

pub fn scorer_loss(bundle: &PerceptionBundle, batch: &[&Sample]) -> Result<Tensor> {
    scorer_loss_with(bundle, &condition_rows(bundle, batch)?, batch)
}

fn scorer_loss_with(bundle: &PerceptionBundle, cond: &Tensor, batch: &[&Sample]) -> Result<Tensor> {
    let logits = bundle.score_logits(cond, &traj_rows(bundle, batch)?)?;
    let labels = bundle.tensor(batch.iter().map(|s| s.label).collect(), &[batch.len()])?;
    bce_with_logits(&logits, &labels)
}

/// Scorer outputs for samples.
pub fn predict_scores(bundle: &PerceptionBundle, samples: &[Sample]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(64) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        let cond = condition_rows(bundle, &refs)?;
        out.extend(to_f64_vec(&sigmoid(&bundle.score_logits(&cond, &traj_rows(bundle, &refs)?)?)?)?);
    }
    Ok(out)
}

/// The first two rotation-matrix columns of intrinsic XYZ euler rows `(n, 3)`.
pub fn rot6d_of_euler(e: &Tensor) -> Result<Tensor> {
    let a = e.narrow(1, 0, 1)?;
    let b = e.narrow(1, 1, 1)?;
    let c = e.narrow(1, 2, 1)?;
    let (ca, sa) = (a.cos()?, a.sin()?);
    let (cb, sb) = (b.cos()?, b.sin()?);
    let (cc, sc) = (c.cos()?, c.sin()?);
    let sb_cc = (&sb * &cc)?;
    let sb_sc = (&sb * &sc)?;
    let cols = [
        (&cb * &cc)?,
        ((&ca * &sc)? + (&sa * &sb_cc)?)?,
        ((&sa * &sc)? - (&ca * &sb_cc)?)?,
        (&cb * &sc)?.neg()?,
        ((&ca * &cc)? - (&sa * &sb_sc)?)?,
        ((&sa * &cc)? + (&ca * &sb_sc)?)?,
    ];
    Ok(Tensor::cat(&cols, 1)?)
}

/// Reconstruction and KL terms of the trajectory cVAE.
pub struct VaeLoss {
    pub l1: Tensor,
    pub rotation: Tensor,
    pub kl: Tensor,
}

/// Position L1 and 6D-rotation L1 (summed over slots, averaged over rows).
pub fn reconstruction_terms(pred: &Tensor, target: &Tensor) -> Result<(Tensor, Tensor)> {
    let n = pred.dim(0)?;
    let p = pred.reshape((n * MAX_WAYPOINTS, 6))?;
    let t = target.reshape((n * MAX_WAYPOINTS, 6))?;
    let l1 = (p.narrow(1, 0, 3)? - t.narrow(1, 0, 3)?)?.abs()?.sum_all()?;
    let rp = rot6d_of_euler(&p.narrow(1, 3, 3)?.contiguous()?)?;
    let rt = rot6d_of_euler(&t.narrow(1, 3, 3)?.contiguous()?)?;
    let rot = (rp - rt)?.abs()?.sum_all()?;
    Ok(((l1 / n as f64)?, (rot / n as f64)?))
}

/// KL(q(z) || N(0, I)) summed over latent dims, averaged over rows.
pub fn kl_divergence(mu: &Tensor, log_sigma: &Tensor) -> Result<Tensor> {
    let n = mu.dim(0)? as f64;
    let var = (log_sigma * 2.0)?.exp()?;
    let inner = (((log_sigma * 2.0)? + 1.0)? - mu.sqr()?)?;
    Ok(((inner - var)?.sum_all()? * (-0.5 / n))?)
}

pub fn vae_loss<R: Rng + ?Sized>(bundle: &PerceptionBundle, cond: &Tensor, traj: &Tensor, rng: &mut R) -> Result<VaeLoss> {
    let (mu, ls) = bundle.vae_encode(cond, traj)?;
    let n = mu.dim(0)?;
    let d = bundle.config.latent_dim;
    let eps: Vec<f64> = (0..n * d).map(|_| StandardNormal.sample(rng)).collect();
    let eps = bundle.tensor(eps, &[n, d])?;
    let z = (&mu + (ls.exp()? * eps)?)?;
    let pred = bundle.vae_decode(cond, &z)?;
    let (l1, rotation) = reconstruction_terms(&pred, traj)?;
    Ok(VaeLoss {
        l1,
        rotation,
        kl: kl_divergence(&mu, &ls)?,
    })
}

/// cVAE training on successful trajectories.
pub fn train_proposal(
    bundle: &PerceptionBundle,
    positives: &[Sample],
    cfg: &ProposalConfig,
    train_shared: bool,
    seed: u64,
) -> Result<Vec<EpochLog>> {
    if positives.is_empty() {
        return Err(Error::Precondition("proposal training needs successful trajectories".into()));
    }
    let mut prefixes = vec![groups::PROPOSAL];
    if train_shared {
        prefixes.extend(groups::SHARED);
    }
    let mut opt = Adam::new(vars_for(bundle, &prefixes), cfg.lr)?;
    let frozen = if train_shared { None } else { Some(frozen_conditions(bundle, positives)?) };
    let all_traj = {
        let refs: Vec<&Sample> = positives.iter().collect();
        traj_rows(bundle, &refs)?
    };
    let mut rng = seeding::rng(seed);
    let mut order: Vec<usize> = (0..positives.len()).collect();
    let warm = (cfg.kl_warmup * cfg.epochs as f64).max(1.0);
    let mut logs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let beta = cfg.kl_weight * ((epoch + 1) as f64 / warm).min(1.0);
        order.shuffle(&mut rng);
        let (mut sl1, mut srot, mut skl, mut nb) = (0.0, 0.0, 0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let idx = index_tensor(chunk)?;
            let cond = match &frozen {
                Some(c) => c.index_select(&idx, 0)?,
                None => {
                    let refs: Vec<&Sample> = chunk.iter().map(|&i| &positives[i]).collect();
                    condition_rows(bundle, &refs)?
                }
            };
            let traj = all_traj.index_select(&idx, 0)?;
            let l = vae_loss(bundle, &cond, &traj, &mut rng)?;
            let total = (((&l.l1 * cfg.l1_weight)? + (&l.rotation * cfg.rotation_weight)?)? + (&l.kl * beta)?)?;
            opt.step(&total)?;
            sl1 += scalar(&l.l1)?;
            srot += scalar(&l.rotation)?;
            skl += scalar(&l.kl)?;
            nb += 1;
        }
        let nb = nb.max(1) as f64;
        logs.push(EpochLog {
            stage: "proposal".into(),
            epoch,
            terms: BTreeMap::from([
                ("l1".to_string(), sl1 / nb),
                ("rot6d".to_string(), srot / nb),
                ("kl".to_string(), skl / nb),
                ("beta".to_string(), beta),
            ]),
        });
    }
    Ok(logs)
}

fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(candle_core::DType::F64)?.to_scalar::<f64>()?)
}

/// Mean of the `k` highest scores.
pub fn actionability_target(scores: &[f64], k: usize) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    let mut s = scores.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    let k = k.clamp(1, s.len());
    s[..k].iter().sum::<f64>() / k as f64
}

/// Scores of `n` decoded proposals for one conditioning row.
pub fn proposal_scores(bundle: &PerceptionBundle, cond_row: &Tensor, sample: &Sample, n: usize, seed: u64) -> Result<Vec<f64>> {
    let cond = cond_row.broadcast_as((n, cond_row.dim(1)?))?.contiguous()?;
    let z = bundle.sample_latents(n, seed)?;
    let decoded = to_f64_vec(&bundle.vae_decode(&cond, &z)?)?;
    let mut rows = Vec::with_capacity(n);
    for v in decoded.chunks(SERIALIZED_DIM) {
        // round-trip through a trajectory exactly as at inference time
        let t = trajectory_from_features(v, &sample.contact, sample.task.interaction, bundle.config.pad_tolerance)?;
        rows.push(trajectory_features(&t, &sample.contact));
    }
    to_f64_vec(&sigmoid(&bundle.score_logits(&cond, &bundle.traj_tensor(&rows)?)?)?)
}

/// Targets for actionability regression: top-k mean over scored proposals.
pub fn actionability_targets(bundle: &PerceptionBundle, samples: &[Sample], cfg: &ActionabilityConfig, seed: u64) -> Result<Vec<f64>> {
    let cond = frozen_conditions(bundle, samples)?;
    (0..samples.len())
        .map(|i| {
            let row = cond.narrow(0, i, 1)?;
            let scores = proposal_scores(bundle, &row, &samples[i], cfg.proposals, seeding::derive(seed, "act-target", i as u64))?;
            Ok(actionability_target(&scores, cfg.top_k))
        })
        .collect()
}

/// L1 regression of the actionability head onto precomputed targets.
pub fn train_actionability(
    bundle: &PerceptionBundle,
    samples: &[Sample],
    targets: &[f64],
    cfg: &ActionabilityConfig,
    seed: u64,
) -> Result<Vec<EpochLog>> {
    if samples.len() != targets.len() || samples.is_empty() {
        return Err(Error::Validation("one target per actionability sample is required".into()));
    }
    let cond = frozen_conditions(bundle, samples)?;
    let tgt = bundle.tensor(targets.to_vec(), &[targets.len()])?;
    let mut opt = Adam::new(vars_for(bundle, &[groups::ACTIONABILITY]), cfg.lr)?;
    let mut rng = seeding::rng(seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut logs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut total, mut nb) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let idx = index_tensor(chunk)?;
            let pred = sigmoid(&bundle.actionability_logits(&cond.index_select(&idx, 0)?)?)?;
            let loss = (pred - tgt.index_select(&idx, 0)?)?.abs()?.mean_all()?;
            opt.step(&loss)?;
            total += scalar(&loss)?;
            nb += 1;
        }
        logs.push(EpochLog {
            stage: "actionability".into(),
            epoch,
            terms: BTreeMap::from([("l1".to_string(), total / nb.max(1) as f64)]),
        });
    }
    Ok(logs)
}

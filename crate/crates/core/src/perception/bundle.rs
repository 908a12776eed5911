use std::path::Path;

use candle_core::{DType, Device, Tensor};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::pointnet::{CloudPlan, PointNet, PointNetConfig};
use crate::artsim::{PointCloud, TaskSpec};
use crate::error::{Error, Result};
use crate::geometry::{Trajectory, Vec3, SERIALIZED_DIM};
use crate::nn::{sigmoid, to_f64_vec, Dense, Mlp, ParamStore};
use crate::seeding;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerceptionConfig {
    pub encoder: PointNetConfig,
    pub n_points: usize,
    pub contact_dim: usize,
    pub task_dim: usize,
    pub traj_dim: usize,
    pub latent_dim: usize,
    pub traj_hidden: Vec<usize>,
    pub actionability_hidden: Vec<usize>,
    pub scorer_hidden: Vec<usize>,
    pub vae_encoder_hidden: Vec<usize>,
    pub vae_decoder_hidden: Vec<usize>,
    /// Decoded slots with all entries below this magnitude count as padding.
    pub pad_tolerance: f64,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        PerceptionConfig {
            encoder: PointNetConfig::compact(),
            n_points: 1024,
            contact_dim: 32,
            task_dim: 32,
            traj_dim: 128,
            latent_dim: 128,
            traj_hidden: vec![128, 128],
            actionability_hidden: vec![128; 4],
            scorer_hidden: vec![128],
            vae_encoder_hidden: vec![128, 128],
            vae_decoder_hidden: vec![512, 256],
            pad_tolerance: 0.01,
        }
    }
}

impl PerceptionConfig {
    pub fn point_dim(&self) -> usize {
        self.encoder.out_dim()
    }

    /// Width of the (f_s, f_p, f_θ) conditioning vector.
    pub fn condition_dim(&self) -> usize {
        self.point_dim() + self.contact_dim + self.task_dim
    }
}

/// 30-vector used by the networks: the serialized trajectory with the first
/// waypoint's position taken relative to the contact point.
pub fn trajectory_features(traj: &Trajectory, contact: &Vec3) -> [f64; SERIALIZED_DIM] {
    let mut v = traj.serialize();
    for k in 0..3 {
        v[k] -= contact[k];
    }
    v
}

pub fn trajectory_from_features(
    v: &[f64],
    contact: &Vec3,
    interaction: crate::geometry::InteractionType,
    pad_tol: f64,
) -> Result<Trajectory> {
    let mut a = v.to_vec();
    for k in 0..3 {
        a[k] += contact[k];
    }
    Trajectory::deserialize_with_tolerance(&a, interaction, pad_tol)
}

/// Cloud with its precomputed encoder plan.
#[derive(Debug, Clone)]
pub struct PreparedCloud {
    pub cloud: PointCloud,
    pub plan: CloudPlan,
}

impl PreparedCloud {
    /// Index of the cloud point closest to `p`.
    pub fn nearest(&self, p: &Vec3) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, q) in self.cloud.points.iter().enumerate() {
            let d = (q - p).norm_squared();
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }
}

/// Shared encoders plus actionability, proposal and scoring heads.
pub struct PerceptionBundle {
    pub config: PerceptionConfig,
    pub store: ParamStore,
    pub encoder: PointNet,
    pub contact_enc: Dense,
    pub task_enc: Dense,
    pub traj_enc: Mlp,
    pub scorer: Mlp,
    pub actionability: Mlp,
    pub vae_traj_enc: Mlp,
    pub vae_encoder: Mlp,
    pub vae_decoder: Mlp,
}

/// Parameter-name prefixes of the trainable groups.
pub mod groups {
    pub const SHARED: [&str; 4] = ["pointnet.", "f_p.", "f_theta.", "f_tau."];
    pub const SCORER: &str = "scorer.";
    pub const ACTIONABILITY: &str = "actionability.";
    pub const PROPOSAL: &str = "cvae.";
}

impl PerceptionBundle {
    pub fn new(config: PerceptionConfig, dtype: DType, seed: u64) -> Result<Self> {
        let mut rng = seeding::rng(seed);
        let mut store = ParamStore::new(dtype);
        let encoder = PointNet::new(&mut store, "pointnet", config.encoder.clone(), &mut rng)?;
        let contact_enc = Dense::new(&mut store, "f_p", 3, config.contact_dim, &mut rng)?;
        let task_enc = Dense::new(&mut store, "f_theta", 1, config.task_dim, &mut rng)?;
        let mut td = vec![SERIALIZED_DIM];
        td.extend_from_slice(&config.traj_hidden);
        td.push(config.traj_dim);
        let traj_enc = Mlp::new(&mut store, "f_tau", &td, &mut rng)?;
        let cond = config.condition_dim();
        let mut sd = vec![cond + config.traj_dim];
        sd.extend_from_slice(&config.scorer_hidden);
        sd.push(1);
        let scorer = Mlp::new(&mut store, "scorer", &sd, &mut rng)?;
        let mut ad = vec![cond];
        ad.extend_from_slice(&config.actionability_hidden);
        ad.push(1);
        let actionability = Mlp::new(&mut store, "actionability", &ad, &mut rng)?;
        let vae_traj_enc = Mlp::new(&mut store, "cvae.f_tau", &td, &mut rng)?;
        let mut ed = vec![cond + config.traj_dim];
        ed.extend_from_slice(&config.vae_encoder_hidden);
        ed.push(2 * config.latent_dim);
        let vae_encoder = Mlp::new(&mut store, "cvae.encoder", &ed, &mut rng)?;
        let mut dd = vec![cond + config.latent_dim];
        dd.extend_from_slice(&config.vae_decoder_hidden);
        dd.push(SERIALIZED_DIM);
        let vae_decoder = Mlp::new(&mut store, "cvae.decoder", &dd, &mut rng)?;
        Ok(PerceptionBundle {
            config,
            store,
            encoder,
            contact_enc,
            task_enc,
            traj_enc,
            scorer,
            actionability,
            vae_traj_enc,
            vae_encoder,
            vae_decoder,
        })
    }

    pub fn dtype(&self) -> DType {
        self.store.dtype()
    }

    pub fn prepare(&self, cloud: PointCloud) -> Result<PreparedCloud> {
        let plan = self.encoder.plan(&cloud)?;
        Ok(PreparedCloud { cloud, plan })
    }

    pub(crate) fn tensor(&self, data: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        Ok(Tensor::from_vec(data, shape, &Device::Cpu)?.to_dtype(self.dtype())?)
    }

    /// Conditioning rows `[f_s, f_p, f_θ]` from point features, contacts and θ.
    pub fn condition(&self, fs: &Tensor, contacts: &[Vec3], thetas: &[f64]) -> Result<Tensor> {
        let n = contacts.len();
        let p = self.tensor(contacts.iter().flat_map(|c| [c.x, c.y, c.z]).collect(), &[n, 3])?;
        let t = self.tensor(thetas.to_vec(), &[n, 1])?;
        Ok(Tensor::cat(&[fs, &self.contact_enc.forward(&p)?, &self.task_enc.forward(&t)?], 1)?)
    }

    pub fn traj_tensor(&self, rows: &[[f64; SERIALIZED_DIM]]) -> Result<Tensor> {
        self.tensor(rows.iter().flat_map(|r| r.iter().copied()).collect(), &[rows.len(), SERIALIZED_DIM])
    }

    pub fn score_logits(&self, cond: &Tensor, traj: &Tensor) -> Result<Tensor> {
        let ft = self.traj_enc.forward(traj)?;
        Ok(self.scorer.forward(&Tensor::cat(&[cond, &ft], 1)?)?.squeeze(1)?)
    }

    pub fn actionability_logits(&self, cond: &Tensor) -> Result<Tensor> {
        Ok(self.actionability.forward(cond)?.squeeze(1)?)
    }

    /// Posterior mean and log standard deviation.
    pub fn vae_encode(&self, cond: &Tensor, traj: &Tensor) -> Result<(Tensor, Tensor)> {
        let ft = self.vae_traj_enc.forward(traj)?;
        let h = self.vae_encoder.forward(&Tensor::cat(&[cond, &ft], 1)?)?;
        let d = self.config.latent_dim;
        Ok((h.narrow(1, 0, d)?, h.narrow(1, d, d)?))
    }

    pub fn vae_decode(&self, cond: &Tensor, z: &Tensor) -> Result<Tensor> {
        self.vae_decoder.forward(&Tensor::cat(&[cond, z], 1)?)
    }

    /// Point features at one cloud point, conditioned on contact `p` and the task.
    fn point_condition(&self, pc: &PreparedCloud, index: usize, p: &Vec3, task: &TaskSpec, rows: usize) -> Result<Tensor> {
        let fs = self.encoder.forward(&[&pc.plan], &[vec![index]])?;
        let fs = fs.broadcast_as((rows, fs.dim(1)?))?.contiguous()?;
        self.condition(&fs, &vec![*p; rows], &vec![task.theta; rows])
    }

    /// Actionability score of every cloud point.
    pub fn actionability_map(&self, pc: &PreparedCloud, task: &TaskSpec) -> Result<Vec<f64>> {
        let fs = self.encoder.forward_all(&pc.plan)?;
        let n = pc.cloud.len();
        let cond = self.condition(&fs, &pc.cloud.points, &vec![task.theta; n])?;
        to_f64_vec(&sigmoid(&self.actionability_logits(&cond)?)?)
    }

    /// `k` decoded trajectories from standard-normal latents drawn from `seed`.
    pub fn propose(&self, pc: &PreparedCloud, index: usize, task: &TaskSpec, k: usize, seed: u64) -> Result<Vec<Trajectory>> {
        let z = self.sample_latents(k, seed)?;
        self.decode_latents(pc, index, task, &z)
    }

    pub fn sample_latents(&self, k: usize, seed: u64) -> Result<Tensor> {
        let mut rng = seeding::rng(seed);
        let d = self.config.latent_dim;
        let z: Vec<f64> = (0..k * d).map(|_| StandardNormal.sample(&mut rng)).collect();
        self.tensor(z, &[k, d])
    }

    pub fn decode_latents(&self, pc: &PreparedCloud, index: usize, task: &TaskSpec, z: &Tensor) -> Result<Vec<Trajectory>> {
        let k = z.dim(0)?;
        let p = pc.cloud.points[index];
        let cond = self.point_condition(pc, index, &p, task, k)?;
        let out = to_f64_vec(&self.vae_decode(&cond, z)?)?;
        out.chunks(SERIALIZED_DIM)
            .map(|v| trajectory_from_features(v, &p, task.interaction, self.config.pad_tolerance))
            .collect()
    }

    /// Success likelihood of each trajectory started at cloud point `index`.
    pub fn score(&self, pc: &PreparedCloud, index: usize, task: &TaskSpec, trajs: &[Trajectory]) -> Result<Vec<f64>> {
        if trajs.is_empty() {
            return Ok(Vec::new());
        }
        let p = pc.cloud.points[index];
        self.score_at(pc, index, &p, task, trajs)
    }

    /// Like [`PerceptionBundle::score`] with an explicit contact position.
    pub fn score_at(&self, pc: &PreparedCloud, index: usize, p: &Vec3, task: &TaskSpec, trajs: &[Trajectory]) -> Result<Vec<f64>> {
        let cond = self.point_condition(pc, index, p, task, trajs.len())?;
        let rows: Vec<_> = trajs.iter().map(|t| trajectory_features(t, p)).collect();
        to_f64_vec(&sigmoid(&self.score_logits(&cond, &self.traj_tensor(&rows)?)?)?)
    }

    /// Scores one trajectory, recorded at contact `origin`, translated to every cloud point.
    pub fn score_map(&self, pc: &PreparedCloud, task: &TaskSpec, traj: &Trajectory, origin: &Vec3) -> Result<Vec<f64>> {
        let fs = self.encoder.forward_all(&pc.plan)?;
        let n = pc.cloud.len();
        let cond = self.condition(&fs, &pc.cloud.points, &vec![task.theta; n])?;
        // contact-relative encoding is the same at every point
        let rel = trajectory_features(traj, origin);
        let rows = vec![rel; n];
        to_f64_vec(&sigmoid(&self.score_logits(&cond, &self.traj_tensor(&rows)?)?)?)
    }

    pub fn save(&self, path: &Path, config_hash: &str) -> Result<()> {
        let cfg = serde_json::to_string(&self.config)?;
        self.store.save(path, config_hash, &[("perception_config", cfg)])
    }

    /// Loads a bundle saved by [`PerceptionBundle::save`].
    pub fn load(path: &Path, expected_hash: Option<&str>) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let (_, meta) = safetensors::SafeTensors::read_metadata(&bytes)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        let cfg = meta
            .metadata()
            .as_ref()
            .and_then(|m| m.get("perception_config"))
            .ok_or_else(|| Error::Checkpoint("checkpoint lacks perception_config".into()))?;
        let config: PerceptionConfig = serde_json::from_str(cfg)?;
        let bundle = PerceptionBundle::new(config, DType::F32, 0)?;
        bundle.store.load(path, expected_hash)?;
        Ok(bundle)
    }
}

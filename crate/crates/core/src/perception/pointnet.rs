//! Single-scale-grouping PointNet++ segmentation encoder.
//!
//! Sampling and grouping are precomputed on the CPU ([`CloudPlan`]); the
//! network itself is a sequence of gathers, shared MLPs and max-pools. Points
//! are put into a canonical order first, so the encoder is exactly
//! permutation-equivariant.

use std::cmp::Ordering;

use candle_core::{Device, Tensor};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::artsim::{farthest_point_sampling, PointCloud};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::nn::{Mlp, ParamStore};

pub const INPUT_CHANNELS: usize = 6;
pub const MIN_POINTS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaLevel {
    pub centers: usize,
    pub radius: f64,
    pub neighbors: usize,
    pub mlp: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointNetConfig {
    pub sa: Vec<SaLevel>,
    /// Feature-propagation MLPs, `fp[j]` producing features at level `j`
    /// (level 0 = input points). `fp[0]` ends in the output width.
    pub fp: Vec<Vec<usize>>,
}

impl Default for PointNetConfig {
    fn default() -> Self {
        Self::compact()
    }
}

impl PointNetConfig {
    /// Two set-abstraction levels; fast enough for single-core training.
    pub fn compact() -> Self {
        PointNetConfig {
            sa: vec![
                SaLevel { centers: 128, radius: 0.15, neighbors: 16, mlp: vec![32, 32, 64] },
                SaLevel { centers: 32, radius: 0.35, neighbors: 16, mlp: vec![64, 64, 128] },
            ],
            fp: vec![vec![128, 128], vec![128]],
        }
    }

    /// The common four-level segmentation layout.
    pub fn standard() -> Self {
        PointNetConfig {
            sa: vec![
                SaLevel { centers: 512, radius: 0.1, neighbors: 32, mlp: vec![32, 32, 64] },
                SaLevel { centers: 128, radius: 0.2, neighbors: 32, mlp: vec![64, 64, 128] },
                SaLevel { centers: 32, radius: 0.4, neighbors: 32, mlp: vec![128, 128, 256] },
                SaLevel { centers: 8, radius: 0.8, neighbors: 16, mlp: vec![256, 256, 512] },
            ],
            fp: vec![vec![128, 128, 128], vec![256, 128], vec![256, 256], vec![256, 256]],
        }
    }

    pub fn out_dim(&self) -> usize {
        self.fp[0].last().copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sa.is_empty() || self.fp.len() != self.sa.len() {
            return Err(Error::Config("need one feature-propagation MLP per set-abstraction level".into()));
        }
        if self.sa.iter().any(|l| l.mlp.is_empty() || l.neighbors == 0 || l.centers == 0 || l.radius <= 0.0)
            || self.fp.iter().any(|m| m.is_empty())
        {
            return Err(Error::Config("empty or degenerate encoder level".into()));
        }
        if self.sa.windows(2).any(|w| w[1].centers > w[0].centers) {
            return Err(Error::Config("set-abstraction levels must shrink".into()));
        }
        Ok(())
    }
}

/// Per-level grouping and interpolation indices for one cloud.
#[derive(Debug, Clone)]
pub struct LevelPlan {
    /// Center positions.
    pub xyz: Vec<Vec3>,
    /// `centers × k` indices into the previous level's points.
    pub group: Vec<u32>,
    /// Center-relative neighbor offsets divided by the radius, `centers × k × 3`.
    pub rel: Vec<f32>,
    /// For every previous-level point: three center indices and weights.
    pub up_idx: Vec<u32>,
    pub up_w: Vec<f32>,
}

#[derive(Debug, Clone)]
pub struct CloudPlan {
    pub n: usize,
    /// Canonical position -> original index.
    pub order: Vec<usize>,
    /// Original index -> canonical position.
    pub rank: Vec<usize>,
    /// Canonically ordered `n × 6` input features (position, normal).
    pub input: Vec<f32>,
    pub levels: Vec<LevelPlan>,
}

fn cmp_rows(a: &[f64; 6], b: &[f64; 6]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| *o != Ordering::Equal)
        .unwrap_or(Ordering::Equal)
}

impl CloudPlan {
    pub fn new(cloud: &PointCloud, cfg: &PointNetConfig) -> Result<Self> {
        let n = cloud.len();
        if n < MIN_POINTS {
            return Err(Error::NotEnoughPoints {
                requested: MIN_POINTS,
                visible: n,
            });
        }
        let rows: Vec<[f64; 6]> = (0..n)
            .map(|i| {
                let p = cloud.points[i];
                let m = cloud.normals[i];
                [p.x, p.y, p.z, m.x, m.y, m.z]
            })
            .collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| cmp_rows(&rows[a], &rows[b]));
        let mut rank = vec![0; n];
        for (pos, &i) in order.iter().enumerate() {
            rank[i] = pos;
        }
        let input: Vec<f32> = order.iter().flat_map(|&i| rows[i].iter().map(|&v| v as f32)).collect();
        let mut prev: Vec<Vec3> = order.iter().map(|&i| cloud.points[i]).collect();
        let mut levels = Vec::with_capacity(cfg.sa.len());
        for l in &cfg.sa {
            let plan = plan_level(&prev, l);
            prev = plan.xyz.clone();
            levels.push(plan);
        }
        Ok(CloudPlan {
            n,
            order,
            rank,
            input,
            levels,
        })
    }

    pub fn level_len(&self, level: usize) -> usize {
        if level == 0 {
            self.n
        } else {
            self.levels[level - 1].xyz.len()
        }
    }
}

fn plan_level(prev: &[Vec3], l: &SaLevel) -> LevelPlan {
    let centers = farthest_point_sampling(prev, l.centers, 0);
    let xyz: Vec<Vec3> = centers.iter().map(|&i| prev[i]).collect();
    let k = l.neighbors;
    let r2 = l.radius * l.radius;
    let mut group = Vec::with_capacity(xyz.len() * k);
    let mut rel = Vec::with_capacity(xyz.len() * k * 3);
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(prev.len());
    for (ci, c) in xyz.iter().enumerate() {
        cand.clear();
        cand.extend(
            prev.iter()
                .enumerate()
                .map(|(i, p)| ((p - c).norm_squared(), i))
                .filter(|(d, _)| *d <= r2),
        );
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let own = centers[ci];
        for j in 0..k {
            // pad short neighborhoods with the nearest point
            let i = cand.get(j).or(cand.first()).map_or(own, |x| x.1);
            group.push(i as u32);
            let d = (prev[i] - c) / l.radius;
            rel.extend([d.x as f32, d.y as f32, d.z as f32]);
        }
    }
    let (up_idx, up_w) = interpolation(prev, &xyz);
    LevelPlan {
        xyz,
        group,
        rel,
        up_idx,
        up_w,
    }
}

/// Inverse-distance weights over the three nearest coarse points.
fn interpolation(fine: &[Vec3], coarse: &[Vec3]) -> (Vec<u32>, Vec<f32>) {
    let mut idx = Vec::with_capacity(fine.len() * 3);
    let mut w = Vec::with_capacity(fine.len() * 3);
    for p in fine {
        let mut best = [(f64::INFINITY, 0usize); 3];
        for (j, c) in coarse.iter().enumerate() {
            let d = (p - c).norm_squared();
            if d < best[2].0 {
                best[2] = (d, j);
                best.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            }
        }
        let m = coarse.len().min(3);
        let inv: Vec<f64> = (0..3)
            .map(|t| if t < m { 1.0 / (best[t].0.sqrt() + 1e-8) } else { 0.0 })
            .collect();
        let s: f64 = inv.iter().sum();
        for t in 0..3 {
            idx.push(if t < m { best[t].1 } else { best[0].1 } as u32);
            w.push((inv[t] / s) as f32);
        }
    }
    (idx, w)
}

pub struct PointNet {
    pub config: PointNetConfig,
    sa: Vec<Mlp>,
    fp: Vec<Mlp>,
}

impl PointNet {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, config: PointNetConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut channels = vec![INPUT_CHANNELS];
        let mut sa = Vec::new();
        for (i, l) in config.sa.iter().enumerate() {
            let mut dims = vec![channels[i] + 3];
            dims.extend_from_slice(&l.mlp);
            sa.push(Mlp::new(store, &format!("{name}.sa{i}"), &dims, rng)?);
            channels.push(*l.mlp.last().unwrap());
        }
        let depth = config.sa.len();
        let mut fp = vec![None; depth];
        let mut from = channels[depth];
        for j in (0..depth).rev() {
            let mut dims = vec![from + channels[j]];
            dims.extend_from_slice(&config.fp[j]);
            fp[j] = Some(Mlp::new(store, &format!("{name}.fp{j}"), &dims, rng)?);
            from = *config.fp[j].last().unwrap();
        }
        Ok(PointNet {
            config,
            sa,
            fp: fp.into_iter().map(Option::unwrap).collect(),
        })
    }

    pub fn out_dim(&self) -> usize {
        self.config.out_dim()
    }

    pub fn plan(&self, cloud: &PointCloud) -> Result<CloudPlan> {
        CloudPlan::new(cloud, &self.config)
    }

    /// Per-point features at `queries[b]` (original point indices) of cloud `b`,
    /// stacked in order into a `(Σ|queries|, out_dim)` tensor.
    pub fn forward(&self, plans: &[&CloudPlan], queries: &[Vec<usize>]) -> Result<Tensor> {
        if plans.is_empty() || plans.len() != queries.len() {
            return Err(Error::Validation("one query list per cloud is required".into()));
        }
        let dev = Device::Cpu;
        let dtype = self.sa[0].layers[0].w.dtype();
        let depth = self.sa.len();
        // offsets[l][b]: start row of cloud b in the level-l feature tensor
        let mut offsets: Vec<Vec<u32>> = Vec::with_capacity(depth + 1);
        for l in 0..=depth {
            let mut acc = 0u32;
            offsets.push(
                plans
                    .iter()
                    .map(|p| {
                        let o = acc;
                        acc += p.level_len(l) as u32;
                        o
                    })
                    .collect(),
            );
        }
        let input: Vec<f32> = plans.iter().flat_map(|p| p.input.iter().copied()).collect();
        let total0 = input.len() / INPUT_CHANNELS;
        let f0 = Tensor::from_vec(input, (total0, INPUT_CHANNELS), &dev)?.to_dtype(dtype)?;
        let mut feats = vec![f0];
        for l in 0..depth {
            let k = self.config.sa[l].neighbors;
            let mut idx = Vec::new();
            let mut rel = Vec::new();
            for (b, p) in plans.iter().enumerate() {
                let lp = &p.levels[l];
                idx.extend(lp.group.iter().map(|&g| g + offsets[l][b]));
                rel.extend_from_slice(&lp.rel);
            }
            let rows = idx.len();
            let idx = Tensor::from_vec(idx, rows, &dev)?;
            let rel = Tensor::from_vec(rel, (rows, 3), &dev)?.to_dtype(dtype)?;
            let grouped = Tensor::cat(&[&feats[l].index_select(&idx, 0)?, &rel], 1)?;
            let h = self.sa[l].forward_relu(&grouped)?;
            let c = h.dim(1)?;
            feats.push(h.reshape((rows / k, k, c))?.max(1)?);
        }
        // propagate back up to level 1 over all points
        let mut up = feats[depth].clone();
        for j in (1..depth).rev() {
            let (idx, w) = gather_interp(plans, j, &offsets, None);
            let interp = weighted(&up, idx, w, dtype)?;
            let x = Tensor::cat(&[&interp, &feats[j]], 1)?;
            up = self.fp[j].forward_relu(&x)?;
        }
        // level 0 only at the queried points
        let (idx, w) = gather_interp(plans, 0, &offsets, Some(queries));
        let interp = weighted(&up, idx, w, dtype)?;
        let off0 = &offsets[0];
        let skip_rows: Vec<u32> = plans
            .iter()
            .zip(queries)
            .enumerate()
            .flat_map(|(b, (p, q))| q.iter().map(move |&i| p.rank[i] as u32 + off0[b]))
            .collect();
        let n = skip_rows.len();
        let skip = feats[0].index_select(&Tensor::from_vec(skip_rows, n, &dev)?, 0)?;
        self.fp[0].forward(&Tensor::cat(&[&interp, &skip], 1)?)
    }

    /// Features of every point of one cloud, in the cloud's original order.
    pub fn forward_all(&self, plan: &CloudPlan) -> Result<Tensor> {
        self.forward(&[plan], &[(0..plan.n).collect()])
    }
}

/// Interpolation rows from level `j + 1` features onto level-`j` points.
fn gather_interp(
    plans: &[&CloudPlan],
    j: usize,
    offsets: &[Vec<u32>],
    queries: Option<&[Vec<usize>]>,
) -> (Vec<u32>, Vec<f32>) {
    let mut idx = Vec::new();
    let mut w = Vec::new();
    for (b, p) in plans.iter().enumerate() {
        let lp = &p.levels[j];
        let off = offsets[j + 1][b];
        let mut push = |row: usize| {
            for t in 0..3 {
                idx.push(lp.up_idx[row * 3 + t] + off);
                w.push(lp.up_w[row * 3 + t]);
            }
        };
        match queries {
            Some(q) => q[b].iter().for_each(|&i| push(p.rank[i])),
            None => (0..p.level_len(j)).for_each(&mut push),
        }
    }
    (idx, w)
}

fn weighted(src: &Tensor, idx: Vec<u32>, w: Vec<f32>, dtype: candle_core::DType) -> Result<Tensor> {
    let dev = Device::Cpu;
    let rows = idx.len() / 3;
    let c = src.dim(1)?;
    let g = src
        .index_select(&Tensor::from_vec(idx, rows * 3, &dev)?, 0)?
        .reshape((rows, 3, c))?;
    let w = Tensor::from_vec(w, (rows, 3, 1), &dev)?.to_dtype(dtype)?;
    Ok(g.broadcast_mul(&w)?.sum(1)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::artsim::{render_pointcloud, generate_shape, CameraView, Intrinsics, ShapeFamily};
    use crate::nn::to_f64_vec;
    use crate::seeding;
    use candle_core::DType;
    use rand::seq::SliceRandom;

    fn cloud(n: usize) -> PointCloud {
        let obj = generate_shape(ShapeFamily::Drawer, 2);
        let view = CameraView::new(0.3, 0.7, Intrinsics { width: 64, height: 64, fov_y_deg: 80.0 });
        render_pointcloud(&obj, 0.2 * obj.limits[1], &view, n, 1).unwrap()
    }

    #[test]
    fn output_shape_and_exact_equivariance() {
        let mut store = ParamStore::new(DType::F32);
        let net = PointNet::new(&mut store, "enc", PointNetConfig::compact(), &mut seeding::rng(0)).unwrap();
        let c = cloud(300);
        let out = to_f64_vec(&net.forward_all(&net.plan(&c).unwrap()).unwrap()).unwrap();
        assert_eq!(out.len(), 300 * 128);
        let mut perm: Vec<usize> = (0..300).collect();
        perm.shuffle(&mut seeding::rng(5));
        let pc = c.select(&perm);
        let pout = to_f64_vec(&net.forward_all(&net.plan(&pc).unwrap()).unwrap()).unwrap();
        for (new_i, &old_i) in perm.iter().enumerate() {
            assert_eq!(&pout[new_i * 128..(new_i + 1) * 128], &out[old_i * 128..(old_i + 1) * 128]);
        }
    }

    #[test]
    fn query_subset_matches_full_pass_and_batching() {
        let mut store = ParamStore::new(DType::F32);
        let net = PointNet::new(&mut store, "enc", PointNetConfig::compact(), &mut seeding::rng(1)).unwrap();
        let a = cloud(200);
        let b = cloud(256);
        let pa = net.plan(&a).unwrap();
        let pb = net.plan(&b).unwrap();
        let full = to_f64_vec(&net.forward_all(&pb).unwrap()).unwrap();
        let sub = to_f64_vec(&net.forward(&[&pa, &pb], &[vec![3], vec![7, 100]]).unwrap()).unwrap();
        let fa = to_f64_vec(&net.forward_all(&pa).unwrap()).unwrap();
        let close = |x: &[f64], y: &[f64]| x.iter().zip(y).all(|(u, v)| (u - v).abs() < 1e-5);
        assert!(close(&sub[..128], &fa[3 * 128..4 * 128]));
        assert!(close(&sub[128..256], &full[7 * 128..8 * 128]));
        assert!(close(&sub[256..], &full[100 * 128..101 * 128]));
    }

    #[test]
    fn too_few_points_rejected() {
        let c = cloud(64).select(&(0..10).collect::<Vec<_>>());
        assert!(matches!(CloudPlan::new(&c, &PointNetConfig::compact()), Err(Error::NotEnoughPoints { .. })));
    }
}

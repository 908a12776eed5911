//! Small dense-network toolkit on top of candle: named parameter stores,
//! seeded initialization, Adam and safetensors checkpoints.

use std::collections::HashMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor, Var};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::Rng;

use crate::error::{Error, Result};

/// Metadata key holding the producing config hash in every checkpoint.
pub const CONFIG_HASH_KEY: &str = "config_hash";

/// Ordered collection of named trainable tensors.
#[derive(Debug, Clone)]
pub struct ParamStore {
    vars: Vec<(String, Var)>,
    dtype: DType,
}

impl ParamStore {
    pub fn new(dtype: DType) -> Self {
        ParamStore { vars: Vec::new(), dtype }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    /// Uniform(-bound, bound) parameters drawn from `rng`.
    pub fn uniform<R: Rng + ?Sized>(&mut self, name: &str, shape: &[usize], bound: f64, rng: &mut R) -> Result<Var> {
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n).map(|_| bound * (2.0 * rng.random::<f64>() - 1.0)).collect();
        let t = Tensor::from_vec(data, shape, &Device::Cpu)?.to_dtype(self.dtype)?;
        self.insert(name, t)
    }

    pub fn insert(&mut self, name: &str, t: Tensor) -> Result<Var> {
        if self.vars.iter().any(|(n, _)| n == name) {
            return Err(Error::Checkpoint(format!("duplicate parameter `{name}`")));
        }
        let v = Var::from_tensor(&t)?;
        self.vars.push((name.to_string(), v.clone()));
        Ok(v)
    }

    pub fn vars(&self) -> Vec<Var> {
        self.vars.iter().map(|(_, v)| v.clone()).collect()
    }

    pub fn named(&self) -> &[(String, Var)] {
        &self.vars
    }

    /// Vars whose name starts with `prefix`.
    pub fn vars_with_prefix(&self, prefix: &str) -> Vec<Var> {
        self.vars
            .iter()
            .filter(|(n, _)| n.starts_with(prefix))
            .map(|(_, v)| v.clone())
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.vars.iter().map(|(_, v)| v.elem_count()).sum()
    }

    /// Overwrites every parameter with the same-named one from `other`.
    pub fn copy_from(&self, other: &ParamStore) -> Result<()> {
        self.check_same_layout(other)?;
        for ((_, dst), (_, src)) in self.vars.iter().zip(&other.vars) {
            dst.set(&src.as_tensor().copy()?)?;
        }
        Ok(())
    }

    /// Polyak averaging: `self = (1 - tau) self + tau other`.
    pub fn soft_update(&self, other: &ParamStore, tau: f64) -> Result<()> {
        self.check_same_layout(other)?;
        for ((_, dst), (_, src)) in self.vars.iter().zip(&other.vars) {
            let t = ((dst.as_tensor() * (1.0 - tau))? + (src.as_tensor() * tau)?)?;
            dst.set(&t)?;
        }
        Ok(())
    }

    /// Deep copy with fresh storage.
    pub fn snapshot(&self) -> Result<ParamStore> {
        let mut out = ParamStore::new(self.dtype);
        for (n, v) in &self.vars {
            out.insert(n, v.as_tensor().copy()?)?;
        }
        Ok(out)
    }

    fn check_same_layout(&self, other: &ParamStore) -> Result<()> {
        let same = self.vars.len() == other.vars.len()
            && self
                .vars
                .iter()
                .zip(&other.vars)
                .all(|((a, va), (b, vb))| a == b && va.dims() == vb.dims());
        if same {
            Ok(())
        } else {
            Err(Error::Checkpoint("parameter layouts differ".into()))
        }
    }

    pub fn save(&self, path: &Path, config_hash: &str, extra: &[(&str, String)]) -> Result<()> {
        let mut meta: HashMap<String, String> = extra.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
        meta.insert(CONFIG_HASH_KEY.to_string(), config_hash.to_string());
        let tensors: Vec<(String, Tensor)> = self
            .vars
            .iter()
            .map(|(n, v)| (n.clone(), v.as_tensor().clone()))
            .collect();
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        safetensors::serialize_to_file(tensors, Some(meta), path)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
    }

    /// Loads parameters saved by [`ParamStore::save`]; refuses a different config hash.
    pub fn load(&self, path: &Path, expected_hash: Option<&str>) -> Result<HashMap<String, String>> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let meta = read_metadata(&bytes).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if let Some(expected) = expected_hash {
            let found = meta.get(CONFIG_HASH_KEY).cloned().unwrap_or_default();
            if found != expected {
                return Err(Error::ProvenanceMismatch {
                    expected: expected.to_string(),
                    found,
                });
            }
        }
        let tensors = candle_core::safetensors::load_buffer(&bytes, &Device::Cpu)?;
        for (n, v) in &self.vars {
            let t = tensors
                .get(n)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{n}` in {}", path.display())))?;
            if t.dims() != v.dims() {
                return Err(Error::Checkpoint(format!("shape mismatch for `{n}`")));
            }
            v.set(&t.to_dtype(self.dtype)?)?;
        }
        Ok(meta)
    }
}

fn read_metadata(bytes: &[u8]) -> std::result::Result<HashMap<String, String>, safetensors::SafeTensorError> {
    let (_, meta) = safetensors::SafeTensors::read_metadata(bytes)?;
    Ok(meta.metadata().clone().unwrap_or_default())
}

/// Fully connected layer `y = x W + b` with W stored as (in, out).
#[derive(Debug, Clone)]
pub struct Dense {
    pub w: Var,
    pub b: Var,
}

impl Dense {
    /// PyTorch-style default init: U(-1/sqrt(in), 1/sqrt(in)) for weights and biases.
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut R) -> Result<Self> {
        let bound = 1.0 / (fan_in as f64).sqrt();
        Ok(Dense {
            w: store.uniform(&format!("{name}.weight"), &[fan_in, fan_out], bound, rng)?,
            b: store.uniform(&format!("{name}.bias"), &[fan_out], bound, rng)?,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.w.dims()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.w.dims()[1]
    }

    /// Applies the layer over the last dimension of `x`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let dims = x.dims().to_vec();
        let last = *dims.last().ok_or_else(|| Error::Validation("scalar input to dense layer".into()))?;
        let rows = x.elem_count() / last.max(1);
        let y = x.reshape((rows, last))?.matmul(self.w.as_tensor())?.broadcast_add(self.b.as_tensor())?;
        let mut out_dims = dims;
        *out_dims.last_mut().unwrap() = self.out_dim();
        Ok(y.reshape(out_dims)?)
    }
}

/// Stack of dense layers with ReLU between them and no activation after the last.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    /// `dims = [in, h1, ..., out]`.
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, dims: &[usize], rng: &mut R) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Validation("an MLP needs at least input and output sizes".into()));
        }
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::new(store, &format!("{name}.{i}"), w[0], w[1], rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Mlp { layers })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        let n = self.layers.len();
        for (i, l) in self.layers.iter().enumerate() {
            h = l.forward(&h)?;
            if i + 1 < n {
                h = h.relu()?;
            }
        }
        Ok(h)
    }

    /// Same as [`Mlp::forward`] with ReLU also applied to the output.
    pub fn forward_relu(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward(x)?.relu()?)
    }
}

/// Adam (AdamW with zero weight decay) over a set of vars.
pub struct Adam {
    inner: AdamW,
}

impl Adam {
    pub fn new(vars: Vec<Var>, lr: f64) -> Result<Self> {
        let params = ParamsAdamW {
            lr,
            weight_decay: 0.0,
            ..Default::default()
        };
        Ok(Adam {
            inner: AdamW::new(vars, params)?,
        })
    }

    pub fn step(&mut self, loss: &Tensor) -> Result<()> {
        self.inner.backward_step(loss)?;
        Ok(())
    }

    pub fn step_grads(&mut self, grads: &candle_core::backprop::GradStore) -> Result<()> {
        self.inner.step(grads)?;
        Ok(())
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.inner.set_learning_rate(lr);
    }
}

/// Numerically stable mean binary cross-entropy on logits.
pub fn bce_with_logits(logits: &Tensor, targets: &Tensor) -> Result<Tensor> {
    // max(x, 0) - x t + log(1 + exp(-|x|))
    let relu = logits.relu()?;
    let xt = (logits * targets)?;
    let soft = (logits.abs()?.neg()?.exp()? + 1.0)?.log()?;
    Ok(((relu - xt)? + soft)?.mean_all()?)
}

pub fn sigmoid(x: &Tensor) -> Result<Tensor> {
    Ok(candle_nn::ops::sigmoid(x)?)
}

/// Row-major f32 tensor from f64 rows.
pub fn tensor_from_rows(rows: &[Vec<f64>], dtype: DType) -> Result<Tensor> {
    let cols = rows.first().map_or(0, |r| r.len());
    let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
    Ok(Tensor::from_vec(flat, (rows.len(), cols), &Device::Cpu)?.to_dtype(dtype)?)
}

pub fn tensor_from_slice(data: &[f64], shape: &[usize], dtype: DType) -> Result<Tensor> {
    Ok(Tensor::from_vec(data.to_vec(), shape, &Device::Cpu)?.to_dtype(dtype)?)
}

/// Flattened f64 copy of a tensor.
pub fn to_f64_vec(t: &Tensor) -> Result<Vec<f64>> {
    Ok(t.to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding;

    #[test]
    fn mlp_shapes_and_determinism() {
        let mut s1 = ParamStore::new(DType::F32);
        let m1 = Mlp::new(&mut s1, "m", &[4, 8, 3], &mut seeding::rng(1)).unwrap();
        let mut s2 = ParamStore::new(DType::F32);
        let m2 = Mlp::new(&mut s2, "m", &[4, 8, 3], &mut seeding::rng(1)).unwrap();
        let x = Tensor::ones((5, 2, 4), DType::F32, &Device::Cpu).unwrap();
        let y1 = m1.forward(&x).unwrap();
        assert_eq!(y1.dims(), &[5, 2, 3]);
        assert_eq!(to_f64_vec(&y1).unwrap(), to_f64_vec(&m2.forward(&x).unwrap()).unwrap());
        assert_eq!(s1.num_params(), 4 * 8 + 8 + 8 * 3 + 3);
    }

    #[test]
    fn bce_matches_closed_form() {
        let x = tensor_from_slice(&[2.0, -1.0, 0.0], &[3], DType::F64).unwrap();
        let t = tensor_from_slice(&[1.0, 0.0, 1.0], &[3], DType::F64).unwrap();
        let got = bce_with_logits(&x, &t).unwrap().to_scalar::<f64>().unwrap();
        let s = |v: f64| 1.0 / (1.0 + (-v).exp());
        let expect = -((s(2.0)).ln() + (1.0 - s(-1.0)).ln() + (s(0.0)).ln()) / 3.0;
        assert!((got - expect).abs() < 1e-12);
        let big = tensor_from_slice(&[40.0, -40.0], &[2], DType::F64).unwrap();
        let tb = tensor_from_slice(&[1.0, 0.0], &[2], DType::F64).unwrap();
        assert!(bce_with_logits(&big, &tb).unwrap().to_scalar::<f64>().unwrap() < 1e-15);
    }

    #[test]
    fn soft_update_and_copy() {
        let mut a = ParamStore::new(DType::F64);
        a.insert("x", Tensor::new(&[1.0f64, 2.0], &Device::Cpu).unwrap()).unwrap();
        let mut b = ParamStore::new(DType::F64);
        b.insert("x", Tensor::new(&[3.0f64, 6.0], &Device::Cpu).unwrap()).unwrap();
        a.soft_update(&b, 0.25).unwrap();
        assert_eq!(to_f64_vec(a.vars[0].1.as_tensor()).unwrap(), vec![1.5, 3.0]);
        a.copy_from(&b).unwrap();
        assert_eq!(to_f64_vec(a.vars[0].1.as_tensor()).unwrap(), vec![3.0, 6.0]);
    }

    #[test]
    fn checkpoint_round_trip_checks_hash() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.safetensors");
        let mut s = ParamStore::new(DType::F32);
        let m = Mlp::new(&mut s, "m", &[3, 4, 2], &mut seeding::rng(3)).unwrap();
        s.save(&path, "abc", &[("seed", "3".into())]).unwrap();
        let mut t = ParamStore::new(DType::F32);
        let m2 = Mlp::new(&mut t, "m", &[3, 4, 2], &mut seeding::rng(4)).unwrap();
        let meta = t.load(&path, Some("abc")).unwrap();
        assert_eq!(meta["seed"], "3");
        let x = Tensor::ones((1, 3), DType::F32, &Device::Cpu).unwrap();
        assert_eq!(to_f64_vec(&m.forward(&x).unwrap()).unwrap(), to_f64_vec(&m2.forward(&x).unwrap()).unwrap());
        assert!(matches!(t.load(&path, Some("zzz")), Err(Error::ProvenanceMismatch { .. })));
    }

    #[test]
    fn adam_reduces_quadratic() {
        let mut s = ParamStore::new(DType::F64);
        let v = s.insert("w", Tensor::new(&[3.0f64], &Device::Cpu).unwrap()).unwrap();
        let mut opt = Adam::new(s.vars(), 0.1).unwrap();
        for _ in 0..200 {
            let loss = v.as_tensor().sqr().unwrap().sum_all().unwrap();
            opt.step(&loss).unwrap();
        }
        assert!(to_f64_vec(v.as_tensor()).unwrap()[0].abs() < 0.05);
    }
}

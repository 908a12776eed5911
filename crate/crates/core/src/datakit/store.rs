use std::collections::{BTreeMap, BTreeSet};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ply::write_ply;
use super::splits::SplitTag;
use crate::error::{Error, Result};
use crate::perception::{cloud_key, record_cloud, TrainingPair};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub positives: usize,
    pub negatives: usize,
    pub by_kind: BTreeMap<String, usize>,
}

impl Counts {
    pub fn of(pairs: &[TrainingPair]) -> Self {
        let mut c = Counts::default();
        for p in pairs {
            if p.positive {
                c.positives += 1;
            } else {
                c.negatives += 1;
            }
            let kind = serde_json::to_value(p.kind).ok().and_then(|v| v.as_str().map(str::to_string));
            *c.by_kind.entry(kind.unwrap_or_default()).or_default() += 1;
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardRef {
    pub file: String,
    pub records: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub config_hash: String,
    pub split: Option<SplitTag>,
    pub counts: Counts,
    pub shards: Vec<ShardRef>,
    /// Observation cloud key → PLY file.
    pub clouds: BTreeMap<String, String>,
    pub object_ids: BTreeSet<String>,
}

impl DatasetManifest {
    /// Digest of the canonical manifest JSON.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("manifest serializes")))
    }
}

pub struct WriteOptions {
    pub shard_size: usize,
    /// Also write each distinct observation cloud with this many points.
    pub cloud_points: Option<usize>,
}

impl Default for WriteOptions {
    fn default() -> Self {
        WriteOptions {
            shard_size: 1000,
            cloud_points: None,
        }
    }
}

fn check_provenance(pairs: &[TrainingPair], hash: &str) -> Result<()> {
    match pairs.iter().find(|p| p.record.provenance != hash) {
        Some(p) => Err(Error::ProvenanceMismatch {
            expected: hash.to_string(),
            found: p.record.provenance.clone(),
        }),
        None => Ok(()),
    }
}

/// Writes JSON-lines shards (and optional PLY clouds) plus a manifest into `dir`.
pub fn write_dataset(
    dir: &Path,
    pairs: &[TrainingPair],
    config_hash: &str,
    split: Option<SplitTag>,
    opts: &WriteOptions,
) -> Result<DatasetManifest> {
    check_provenance(pairs, config_hash)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut shards = Vec::new();
    for (k, chunk) in pairs.chunks(opts.shard_size.max(1)).enumerate() {
        let file = format!("records-{k:05}.jsonl");
        let mut buf = Vec::new();
        for p in chunk {
            serde_json::to_writer(&mut buf, p)?;
            buf.push(b'\n');
        }
        let path = dir.join(&file);
        let mut f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(&path, e))?;
        shards.push(ShardRef {
            file,
            records: chunk.len(),
            sha256: hex::encode(Sha256::digest(&buf)),
        });
    }
    let mut clouds = BTreeMap::new();
    if let Some(n) = opts.cloud_points {
        let cdir = dir.join("clouds");
        std::fs::create_dir_all(&cdir).map_err(|e| Error::io(&cdir, e))?;
        for p in pairs {
            let key = cloud_key(&p.record);
            if clouds.contains_key(&key) {
                continue;
            }
            let obj = p.record.object.resolve();
            let cloud = record_cloud(&p.record, &obj, n)?;
            let file = format!("clouds/{}.ply", &hex::encode(Sha256::digest(key.as_bytes()))[..16]);
            let comments = [format!("key {key}"), format!("config_hash {config_hash}")];
            write_ply(&dir.join(&file), &cloud, None, &comments)?;
            clouds.insert(key, file);
        }
    }
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        config_hash: config_hash.to_string(),
        split,
        counts: Counts::of(pairs),
        shards,
        clouds,
        object_ids: pairs.iter().map(|p| p.record.object.id()).collect(),
    };
    let mpath = dir.join(MANIFEST_FILE);
    std::fs::write(&mpath, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&mpath, e))?;
    Ok(manifest)
}

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join(MANIFEST_FILE)
}

/// Reads and verifies a dataset written by [`write_dataset`].
pub fn load_dataset(dir: &Path, expected_hash: Option<&str>) -> Result<(DatasetManifest, Vec<TrainingPair>)> {
    let mpath = manifest_path(dir);
    let bytes = std::fs::read(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: DatasetManifest = serde_json::from_slice(&bytes)?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::Validation(format!("unsupported manifest version {}", manifest.version)));
    }
    if let Some(h) = expected_hash {
        if h != manifest.config_hash {
            return Err(Error::ProvenanceMismatch {
                expected: h.to_string(),
                found: manifest.config_hash.clone(),
            });
        }
    }
    let mut pairs = Vec::new();
    for s in &manifest.shards {
        let path = dir.join(&s.file);
        let buf = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if hex::encode(Sha256::digest(&buf)) != s.sha256 {
            return Err(Error::Validation(format!("{} does not match its checksum", s.file)));
        }
        let before = pairs.len();
        for line in buf.split(|&b| b == b'\n').filter(|l| !l.is_empty()) {
            pairs.push(serde_json::from_slice::<TrainingPair>(line)?);
        }
        if pairs.len() - before != s.records {
            return Err(Error::Validation(format!("{} holds a different record count than listed", s.file)));
        }
    }
    check_provenance(&pairs, &manifest.config_hash)?;
    if Counts::of(&pairs) != manifest.counts {
        return Err(Error::Validation("manifest counts do not match the records".into()));
    }
    Ok((manifest, pairs))
}

//! Dataset collection, on-disk layout and splits.

pub mod collect;
pub mod ply;
pub mod splits;
pub mod store;

pub use collect::{collect_dataset, CollectConfig, Collected};
pub use ply::{cloud_to_ply, parse_ply, read_ply, write_ply};
pub use splits::{make_splits, SplitAssignment, SplitRatios, SplitTag};
pub use store::{load_dataset, manifest_path, write_dataset, Counts, DatasetManifest, ShardRef, WriteOptions, MANIFEST_VERSION};

// SPDX-License-Identifier: Apache-2.0

//! Sharded column-first storage with inverted indices over an ordered
//! key-value table.
//!
//! A dataset directory holds `MANIFEST`, `schema.txt` and one sorted-table
//! file per shard. Inside a shard, documents have dense ids `0..doc_count` in
//! ingestion order; every column set of every document is one data entry and
//! every extracted index term is one posting key with an empty value.

mod build;
mod docset;
pub mod keys;
mod manifest;
mod query;
mod read;
pub mod table;

pub use build::{build_fdb, build_mem_shards, BuildOptions};
pub use docset::DocIdSet;
pub use manifest::{IndexDesc, Manifest, ShardEntry, MANIFEST_FILE, MANIFEST_VERSION, SCHEMA_FILE};
pub use query::{Bound, IndexQuery, LocationRegion};
pub use read::{FdbDataset, FdbShard, Projection, ScanStats, ShardStats};
pub use table::{KvRead, MemTable, SortedTable};

use thiserror::Error;

use crate::schema::SchemaError;
use crate::wfl::WflError;

#[derive(Debug, Error)]
pub enum FdbError {
    #[error("record {index}: {source}")]
    Validation { index: usize, source: SchemaError },
    #[error("record {index}: virtual field '{field}': {source}")]
    VirtualField { index: usize, field: String, source: WflError },
    #[error("corrupt manifest: {0}")]
    CorruptManifest(String),
    #[error("corrupt shard file: {0}")]
    Corrupt(String),
    #[error("format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("field '{0}' has no matching index")]
    UnindexedField(String),
    #[error("doc id {id} out of range (shard has {count} docs)")]
    DocIdOutOfRange { id: u32, count: u32 },
    #[error("shard {0} does not exist")]
    NoSuchShard(usize),
    #[error("invalid query: {0}")]
    BadQuery(String),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Wfl(#[from] WflError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FdbError>;

#[cfg(test)]
mod tests;

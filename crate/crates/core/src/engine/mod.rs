// SPDX-License-Identifier: Apache-2.0

//! Planning and execution of pipelines.
//!
//! A pipeline is planned into a chain of nodes split by one remote boundary.
//! Nodes below the boundary run once per selected shard; the serialized
//! outputs are concatenated in shard order and the nodes above the boundary
//! run once on the mixer. Join right sides are planned as separate subplans
//! and executed before the main plan.

mod aggregate;
mod batch;
mod catalog;
mod exec;
mod find;
mod plan;
mod readset;
pub mod recordio;
mod reference;
mod session;
mod stats;

pub use aggregate::AggSpec;
pub use batch::{execute_batch, read_batch_result, BatchOptions, CheckpointManifest, ShardStatus, CHECKPOINT_FILE};
pub use catalog::{Catalog, DatasetEntry};
pub use exec::{execute_adhoc, normalize_record, results_match, AdhocOptions, FailureHook, QueryResult};
pub use find::QueryTemplate;
pub use plan::{plan, plan_pipeline, sample_shards, JoinStrategy, Op, PlanDag, PlanNode, PlanOptions, SaveFormat, Source};
pub use readset::{read_set, ReadSet};
pub use reference::run_reference;
pub use session::{ExecMode, Session, SessionDefaults, StatementResult};
pub use stats::{QueryStats, ShardRun, Totals};

use thiserror::Error;

use crate::fdb::FdbError;
use crate::schema::SchemaError;
use crate::wfl::WflError;

/// Default size limit for the right side of a broadcast join.
pub const DEFAULT_BROADCAST_LIMIT: u64 = 64 << 20;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("unknown dataset '{0}'")]
    UnknownDataset(String),
    #[error("field '{0}' has no matching index")]
    UnindexedField(String),
    #[error("invalid query: {0}")]
    BadQuery(String),
    #[error("bad parameter: {0}")]
    BadParam(String),
    #[error("type error: {0}")]
    Type(String),
    #[error("broadcast side is {bytes} bytes, limit is {limit}")]
    BroadcastTooLarge { bytes: u64, limit: u64 },
    #[error("deadline exceeded after {} of {} shard tasks", .stats.shards_done(), .stats.shards_planned)]
    Deadline { stats: Box<QueryStats> },
    #[error("shard {shard} failed: {cause}")]
    ShardFailure { shard: usize, cause: String },
    #[error("checkpoint belongs to another query (fingerprint {found:016x}, expected {expected:016x})")]
    FingerprintMismatch { found: u64, expected: u64 },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("name '{0}' is already registered with different content")]
    DuplicateName(String),
    #[error("corrupt record stream: {0}")]
    CorruptStream(String),
    #[error(transparent)]
    Wfl(#[from] WflError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Fdb(FdbError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<FdbError> for EngineError {
    fn from(e: FdbError) -> Self {
        match e {
            FdbError::UnindexedField(p) => EngineError::UnindexedField(p),
            FdbError::BadQuery(m) => EngineError::BadQuery(m),
            FdbError::Wfl(w) => EngineError::Wfl(w),
            e => EngineError::Fdb(e),
        }
    }
}

pub type Result<T> = std::result::Result<T, EngineError>;

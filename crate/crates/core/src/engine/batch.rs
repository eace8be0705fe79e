// SPDX-License-Identifier: Apache-2.0

//! Checkpointed batch execution.
//!
//! Each finished shard task writes its boundary records to a record-stream
//! file in the checkpoint directory and then rewrites the checkpoint
//! manifest. A rerun with the same plan skips shards whose result files are
//! intact, so only missing work is repeated.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use sha2::{Digest, Sha256};

use super::exec::{prepare_sides, run_mixer, run_tasks, AdhocOptions, Deadline, FailureHook, QueryResult, Runtime};
use super::plan::PlanDag;
use super::recordio::{decode_stream_raw, encode_stream_raw, read_stream, write_atomic, write_stream};
use super::stats::{QueryStats, ShardRun};
use super::{EngineError, Result, DEFAULT_BROADCAST_LIMIT};
use crate::wfl::EvalContext;

pub const CHECKPOINT_FILE: &str = "CHECKPOINT";
const HEADER: &str = "tesserflow-checkpoint 1";
const RESULT_FILE: &str = "result.rs";

#[derive(Clone)]
pub struct BatchOptions {
    pub checkpoint_dir: PathBuf,
    pub workers: usize,
    pub broadcast_limit: u64,
    /// Discard a checkpoint left by a different plan instead of failing.
    pub reset_stale: bool,
    pub failures: Option<FailureHook>,
}

impl BatchOptions {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        BatchOptions { checkpoint_dir: dir.into(), workers: 4, broadcast_limit: DEFAULT_BROADCAST_LIMIT, reset_stale: false, failures: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ShardStatus {
    Pending,
    Done { file: String, sha256: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointManifest {
    pub fingerprint: u64,
    /// Planned shard ids with their status, ascending.
    pub shards: Vec<(usize, ShardStatus)>,
    pub mixer: ShardStatus,
}

fn status_line(s: &ShardStatus) -> String {
    match s {
        ShardStatus::Pending => "pending - -".into(),
        ShardStatus::Done { file, sha256 } => format!("done {file} {sha256}"),
    }
}

impl CheckpointManifest {
    pub fn new(fingerprint: u64, shards: &[usize]) -> Self {
        CheckpointManifest { fingerprint, shards: shards.iter().map(|&s| (s, ShardStatus::Pending)).collect(), mixer: ShardStatus::Pending }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{HEADER}\nfingerprint {:016x}\nshards {}\n", self.fingerprint, self.shards.len());
        for (id, st) in &self.shards {
            let _ = writeln!(s, "{id} {}", status_line(st));
        }
        let _ = writeln!(s, "mixer {}", status_line(&self.mixer));
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |m: String| EngineError::CorruptCheckpoint(m);
        let mut lines = text.lines();
        if lines.next() != Some(HEADER) {
            return Err(bad("missing header line".into()));
        }
        let field = |line: Option<&str>, key: &str| -> Result<String> {
            line.and_then(|l| l.strip_prefix(key)).and_then(|l| l.strip_prefix(' ')).map(str::to_string).ok_or_else(|| bad(format!("expected '{key}' line")))
        };
        let fingerprint =
            u64::from_str_radix(&field(lines.next(), "fingerprint")?, 16).map_err(|_| bad("bad fingerprint".into()))?;
        let n: usize = field(lines.next(), "shards")?.parse().map_err(|_| bad("bad shard count".into()))?;
        let status = |parts: &[&str]| -> Result<ShardStatus> {
            match parts {
                ["pending", "-", "-"] => Ok(ShardStatus::Pending),
                ["done", file, sha] if sha.len() == 64 && !file.contains('/') => {
                    Ok(ShardStatus::Done { file: file.to_string(), sha256: sha.to_string() })
                }
                _ => Err(bad(format!("bad status '{}'", parts.join(" ")))),
            }
        };
        let mut shards = Vec::with_capacity(n);
        for _ in 0..n {
            let line = lines.next().ok_or_else(|| bad("truncated shard list".into()))?;
            let parts: Vec<&str> = line.split(' ').collect();
            let id: usize = parts[0].parse().map_err(|_| bad(format!("bad shard line '{line}'")))?;
            shards.push((id, status(&parts[1..])?));
        }
        let line = lines.next().ok_or_else(|| bad("missing mixer line".into()))?;
        let parts: Vec<&str> = line.split(' ').collect();
        if parts[0] != "mixer" {
            return Err(bad("missing mixer line".into()));
        }
        let mixer = status(&parts[1..])?;
        if lines.any(|l| !l.is_empty()) {
            return Err(bad("trailing content".into()));
        }
        Ok(CheckpointManifest { fingerprint, shards, mixer })
    }
}

fn sha256_hex(b: &[u8]) -> String {
    hex::encode(Sha256::digest(b))
}

fn shard_file(id: usize) -> String {
    format!("shard-{id:05}.rs")
}

/// Reads a done file back if its digest still matches.
fn verified(dir: &Path, st: &ShardStatus) -> Option<Vec<u8>> {
    let ShardStatus::Done { file, sha256 } = st else { return None };
    let bytes = std::fs::read(dir.join(file)).ok()?;
    (sha256_hex(&bytes) == *sha256).then_some(bytes)
}

fn save_manifest(dir: &Path, m: &CheckpointManifest) -> Result<()> {
    write_atomic(&dir.join(CHECKPOINT_FILE), m.to_text().as_bytes())
}

/// Executes a plan with a checkpoint directory, resuming completed work.
/// Tasks are not retried; a failed shard stays pending and the run ends with
/// `ShardFailure`, to be resumed by a later call.
pub fn execute_batch(plan: &PlanDag, ctx: &EvalContext, opts: &BatchOptions) -> Result<QueryResult> {
    let t0 = Instant::now();
    let dir = &opts.checkpoint_dir;
    std::fs::create_dir_all(dir)?;
    let fp = plan.fingerprint();
    let mpath = dir.join(CHECKPOINT_FILE);
    let mut manifest = if mpath.exists() {
        let m = CheckpointManifest::parse(&std::fs::read_to_string(&mpath)?)?;
        if m.fingerprint != fp {
            if !opts.reset_stale {
                return Err(EngineError::FingerprintMismatch { found: m.fingerprint, expected: fp });
            }
            CheckpointManifest::new(fp, &plan.shards)
        } else {
            if m.shards.iter().map(|(s, _)| *s).ne(plan.shards.iter().copied()) {
                return Err(EngineError::CorruptCheckpoint("shard list differs from the plan".into()));
            }
            m
        }
    } else {
        CheckpointManifest::new(fp, &plan.shards)
    };

    let mut stats = QueryStats { shards_planned: plan.shards.len(), ..Default::default() };
    let adhoc = AdhocOptions { workers: opts.workers, deadline: None, broadcast_limit: opts.broadcast_limit, failures: None };
    let deadline = Deadline::new(None);
    let sides = prepare_sides(plan, ctx, &adhoc, deadline, &mut stats)?;
    let rt = Runtime { ctx, sides, deadline, workers: opts.workers.max(1) };

    let bs = plan.boundary_schema();
    let mut parts: Vec<Option<Vec<Vec<u8>>>> = vec![None; plan.shards.len()];
    let mut pending = Vec::new();
    for (i, (id, st)) in manifest.shards.iter_mut().enumerate() {
        match verified(dir, st).map(|b| decode_stream_raw(&b)) {
            Some(Ok((_, raw))) => {
                stats.per_shard.push(ShardRun { shard: *id, records_out: raw.len() as u64, resumed: true, ..Default::default() });
                parts[i] = Some(raw);
            }
            _ => {
                *st = ShardStatus::Pending;
                pending.push(*id);
            }
        }
    }
    save_manifest(dir, &manifest)?;

    let shared = Mutex::new(manifest);
    let on_done = |shard: usize, out: &(Vec<Vec<u8>>, ShardRun)| -> Result<()> {
        let bytes = encode_stream_raw(bs, &out.0);
        let file = shard_file(shard);
        write_atomic(&dir.join(&file), &bytes)?;
        let mut m = shared.lock().unwrap();
        if let Some((_, st)) = m.shards.iter_mut().find(|(s, _)| *s == shard) {
            *st = ShardStatus::Done { file, sha256: sha256_hex(&bytes) };
        }
        save_manifest(dir, &m)
    };
    let result = run_tasks(plan, &pending, &rt, opts.workers, false, opts.failures.as_ref(), &on_done);
    let mut manifest = shared.into_inner().unwrap();
    let outputs = match result {
        Ok(o) => o,
        Err((e, _)) => return Err(e),
    };
    stats.shard_tasks_executed = outputs.len();
    for (id, (raw, run)) in pending.iter().zip(outputs) {
        let i = plan.shards.iter().position(|s| s == id).expect("planned shard");
        parts[i] = Some(raw);
        stats.per_shard.push(run);
    }
    let parts: Vec<Vec<Vec<u8>>> = parts.into_iter().map(|p| p.expect("all shards done")).collect();

    let records = match verified(dir, &manifest.mixer).map(|b| super::recordio::decode_stream(&b)) {
        Some(Ok((_, recs))) if pending.is_empty() => {
            for p in &parts {
                stats.boundary_bytes += p.iter().map(|b| b.len() as u64).sum::<u64>();
            }
            recs
        }
        _ => {
            let recs = run_mixer(plan, &parts, &rt, &mut stats)?;
            let path = dir.join(RESULT_FILE);
            write_stream(&path, plan.output_schema(), &recs)?;
            let bytes = std::fs::read(&path)?;
            manifest.mixer = ShardStatus::Done { file: RESULT_FILE.into(), sha256: sha256_hex(&bytes) };
            save_manifest(dir, &manifest)?;
            recs
        }
    };
    stats.finish();
    stats.wall_ns = t0.elapsed().as_nanos() as u64;
    Ok(QueryResult { schema: plan.output_schema().clone(), records, stats })
}

/// Reads the final result of a completed batch run.
pub fn read_batch_result(dir: &Path) -> Result<QueryResult> {
    let (schema, records) = read_stream(&dir.join(RESULT_FILE))?;
    Ok(QueryResult { schema, records, stats: QueryStats::default() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_text_roundtrip() {
        let mut m = CheckpointManifest::new(0xdead_beef_0123_4567, &[0, 3, 7]);
        m.shards[1].1 = ShardStatus::Done { file: shard_file(3), sha256: "a".repeat(64) };
        let text = m.to_text();
        assert!(text.starts_with("tesserflow-checkpoint 1\nfingerprint deadbeef01234567\nshards 3\n0 pending - -\n3 done shard-00003.rs "));
        assert_eq!(CheckpointManifest::parse(&text).unwrap(), m);
        assert!(CheckpointManifest::parse(&text.replace("shards 3", "shards 4")).is_err());
        assert!(CheckpointManifest::parse("garbage").is_err());
    }
}

// SPDX-License-Identifier: Apache-2.0

//! Operators and the ad hoc parallel executor.

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering as AtomicOrdering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use super::aggregate::{finalize, partial};
use super::plan::{JoinStrategy, Op, PlanDag, PlanNode, SaveFormat, Source, SubFlow};
use super::recordio::{write_atomic, write_stream};
use super::stats::{thread_cpu_ns, QueryStats, ShardRun};
use super::{EngineError, Result, DEFAULT_BROADCAST_LIMIT};
use crate::codec::fnv1a64;
use crate::fdb::{build_fdb, table::write_table, BuildOptions, ScanStats};
use crate::schema::{decode_record, encode_record, print_schema, Schema};
use crate::value::{numeric_cmp, Record, Value};
use crate::wfl::ast::Lambda;
use crate::wfl::{apply_lambda, Env, EvalContext};

/// Test hook: returns true to make attempt `attempt` (0-based) of the task
/// for shard `shard` fail before it runs.
pub type FailureHook = Arc<dyn Fn(usize, u32) -> bool + Send + Sync>;

#[derive(Clone)]
pub struct AdhocOptions {
    pub workers: usize,
    pub deadline: Option<Duration>,
    pub broadcast_limit: u64,
    pub failures: Option<FailureHook>,
}

impl Default for AdhocOptions {
    fn default() -> Self {
        AdhocOptions { workers: 4, deadline: None, broadcast_limit: DEFAULT_BROADCAST_LIMIT, failures: None }
    }
}

impl AdhocOptions {
    pub fn workers(n: usize) -> Self {
        AdhocOptions { workers: n, ..Default::default() }
    }
}

#[derive(Debug, Clone)]
pub struct QueryResult {
    pub schema: Schema,
    pub records: Vec<Record>,
    pub stats: QueryStats,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Deadline {
    start: Instant,
    limit: Option<Duration>,
}

impl Deadline {
    pub(crate) fn new(limit: Option<Duration>) -> Self {
        Deadline { start: Instant::now(), limit }
    }

    pub(crate) fn expired(&self) -> bool {
        self.limit.is_some_and(|l| self.start.elapsed() >= l)
    }

    /// Signals expiry; callers replace the empty stats with what finished.
    fn check(&self) -> Result<()> {
        if self.expired() {
            Err(EngineError::Deadline { stats: Box::default() })
        } else {
            Ok(())
        }
    }
}

/// Materialized right side of a hash join.
pub(crate) struct JoinSide {
    records: Vec<Record>,
    /// Join key bytes per record; `None` for null keys.
    keys: Vec<Option<Vec<u8>>>,
    table: HashMap<Vec<u8>, Vec<usize>>,
}

pub(crate) struct Runtime<'a> {
    pub ctx: &'a EvalContext,
    pub sides: Vec<JoinSide>,
    pub deadline: Deadline,
    pub workers: usize,
}

fn truthy(v: Value, what: &str) -> Result<bool> {
    match v {
        Value::Bool(b) => Ok(b),
        Value::Null => Ok(false),
        v => Err(EngineError::Type(format!("{what} must be bool, found {}", v.type_name()))),
    }
}

/// Drops null-valued fields, recursively. Absent and null are the same
/// thing for records leaving the engine.
pub fn normalize_record(r: &Record) -> Record {
    let mut out = Record::with_capacity(r.len());
    for (k, v) in r.iter() {
        if !v.is_null() {
            out.set(k, normalize_value(v));
        }
    }
    out
}

fn normalize_value(v: &Value) -> Value {
    match v {
        Value::Record(r) => Value::Record(normalize_record(r)),
        Value::Vector(xs) if xs.iter().any(|x| matches!(x, Value::Record(_) | Value::Vector(_))) => {
            Value::vector(xs.iter().map(normalize_value).collect())
        }
        v => v.clone(),
    }
}

/// Multiset equality of two result sets, comparing floating-point values
/// with relative tolerance `rel`.
pub fn results_match(a: &[Record], b: &[Record], rel: f64) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let sorted = |x: &[Record]| {
        let mut v: Vec<Value> = x.iter().map(|r| Value::Record(normalize_record(r))).collect();
        v.sort_by(|p, q| p.total_cmp(q));
        v
    };
    let (sa, sb) = (sorted(a), sorted(b));
    if sa.iter().zip(&sb).all(|(x, y)| approx_eq(x, y, rel)) {
        return true;
    }
    // Tolerance can reorder near-equal rows; fall back to greedy matching.
    let mut used = vec![false; sb.len()];
    sa.iter().all(|x| match (0..sb.len()).find(|&j| !used[j] && approx_eq(x, &sb[j], rel)) {
        Some(j) => {
            used[j] = true;
            true
        }
        None => false,
    })
}

fn approx_eq(a: &Value, b: &Value, rel: f64) -> bool {
    let float = |v: &Value| matches!(v, Value::Float(_) | Value::Double(_));
    match (a, b) {
        (x, y) if x.is_numeric() && y.is_numeric() => {
            if float(x) || float(y) {
                let (p, q) = (x.as_f64().unwrap(), y.as_f64().unwrap());
                (p.is_nan() && q.is_nan()) || p == q || (p - q).abs() <= rel * p.abs().max(q.abs())
            } else {
                numeric_cmp(x, y) == std::cmp::Ordering::Equal
            }
        }
        (Value::Record(x), Value::Record(y)) => {
            x.len() == y.len() && x.iter().zip(y.iter()).all(|((ka, va), (kb, vb))| ka == kb && approx_eq(va, vb, rel))
        }
        (Value::Vector(x), Value::Vector(y)) | (Value::Set(x), Value::Set(y)) => {
            x.len() == y.len() && x.iter().zip(y.iter()).all(|(p, q)| approx_eq(p, q, rel))
        }
        (x, y) => x == y,
    }
}

/// Emits one record per element of the repeated field at `path`.
fn flatten_one(r: Record, path: &[String]) -> Vec<Record> {
    let head = &path[0];
    match r.get(head) {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Vector(xs)) if path.len() == 1 => xs
            .iter()
            .map(|x| {
                let mut c = r.clone();
                c.set(head, x.clone());
                c
            })
            .collect(),
        Some(Value::Record(inner)) if path.len() > 1 => flatten_one(inner.clone(), &path[1..])
            .into_iter()
            .map(|i| {
                let mut c = r.clone();
                c.set(head, Value::Record(i));
                c
            })
            .collect(),
        Some(_) => Vec::new(),
    }
}

/// Left record extended with the right record's fields under their output
/// names.
fn merge(l: &Record, r: &Record, names: &[(String, String)]) -> Record {
    let mut out = l.clone();
    for (orig, new) in names {
        if let Some(v) = r.get(orig) {
            out.set(new, v.clone());
        }
    }
    out
}

fn join_key(l: &Lambda, r: &Record, env: &mut Env<'_>) -> Result<Option<Vec<u8>>> {
    let k = apply_lambda(l, Value::Record(r.clone()), env)?;
    Ok(if k.is_null() { None } else { Some(k.key_bytes()) })
}

pub(crate) fn build_side(records: Vec<Record>, key: &Lambda, ctx: &EvalContext) -> Result<JoinSide> {
    let mut env = Env::new(ctx);
    let mut keys = Vec::with_capacity(records.len());
    let mut table: HashMap<Vec<u8>, Vec<usize>> = HashMap::new();
    for (j, r) in records.iter().enumerate() {
        let k = join_key(key, r, &mut env)?;
        if let Some(k) = &k {
            table.entry(k.clone()).or_default().push(j);
        }
        keys.push(k);
    }
    Ok(JoinSide { records, keys, table })
}

/// Reads the matching documents of one shard, applying the residual
/// filter of a find.
fn read_dataset_shard(plan: &PlanDag, shard: usize, rt: &Runtime<'_>, env: &mut Env<'_>, run: &mut ShardRun) -> Result<Vec<Record>> {
    let Source::Dataset { dataset, .. } = &plan.source else { unreachable!("dataset source") };
    let sh = dataset.shard(shard)?;
    let mut scan = ScanStats::default();
    let (ids, proj, residual) = match &plan.nodes[0].op {
        Op::Scan { proj, .. } => (sh.all_ids(), proj.clone().expect("dataset projection"), &[][..]),
        Op::Find { template, query, residual, proj, .. } => {
            let q = match query {
                Some(q) => q.clone(),
                None => template.instantiate(env)?,
            };
            (sh.select(&q, &mut scan)?, proj.clone(), &residual[..])
        }
        _ => unreachable!("source node"),
    };
    let mut out = Vec::new();
    let mut err = None;
    let mut n = 0u32;
    sh.for_each_doc(&proj, &ids, &mut scan, &mut |_, rec| {
        n += 1;
        if n % 256 == 0 && rt.deadline.expired() {
            err = Some(EngineError::Deadline { stats: Box::default() });
            return false;
        }
        for l in residual {
            match apply_lambda(l, Value::Record(rec.clone()), env).map_err(EngineError::from).and_then(|v| truthy(v, "find() predicate")) {
                Ok(true) => {}
                Ok(false) => return true,
                Err(e) => {
                    err = Some(e);
                    return false;
                }
            }
        }
        out.push(rec);
        true
    })?;
    run.add_scan(&scan);
    match err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

fn read_source(plan: &PlanDag, shard: usize, rt: &Runtime<'_>, env: &mut Env<'_>, run: &mut ShardRun) -> Result<Vec<Record>> {
    match &plan.source {
        Source::Dataset { .. } => read_dataset_shard(plan, shard, rt, env, run),
        Source::Records { records, .. } => {
            run.docs_scanned += records.len() as u64;
            Ok(records.as_ref().clone())
        }
    }
}

fn sub_flow(sf: &SubFlow, recs: Vec<Record>, rt: &Runtime<'_>, env: &mut Env<'_>, run: &mut ShardRun) -> Result<Vec<Record>> {
    let mut out = Vec::new();
    for r in recs {
        rt.deadline.check()?;
        env.push(&sf.param, Value::Record(r.clone()));
        let res = (|| {
            let mut matches = Vec::new();
            for &s in &sf.inner.shards {
                matches.extend(read_dataset_shard(&sf.inner, s, rt, env, run)?);
            }
            apply_nodes(&sf.inner.nodes[1..], matches, rt, env, run)
        })();
        env.pop();
        for m in res? {
            out.push(merge(&r, &m, &sf.right_names));
        }
    }
    Ok(out)
}

fn hash_join(
    side: &JoinSide,
    left_key: &Lambda,
    names: &[(String, String)],
    strategy: JoinStrategy,
    recs: Vec<Record>,
    rt: &Runtime<'_>,
    env: &mut Env<'_>,
) -> Result<Vec<Record>> {
    let mut lkeys = Vec::with_capacity(recs.len());
    for r in &recs {
        lkeys.push(join_key(left_key, r, env)?);
    }
    let pairs: Vec<(usize, usize)> = match strategy {
        JoinStrategy::Broadcast => {
            let mut p = Vec::new();
            for (i, k) in lkeys.iter().enumerate() {
                if let Some(ms) = k.as_ref().and_then(|k| side.table.get(k)) {
                    p.extend(ms.iter().map(|&j| (i, j)));
                }
            }
            p
        }
        JoinStrategy::Shuffle => {
            // Both sides are routed by key hash to one partition per worker;
            // each partition is joined independently.
            let w = rt.workers.max(1);
            let route = |k: &[u8]| (fnv1a64(k) % w as u64) as usize;
            let mut lparts: Vec<Vec<usize>> = vec![Vec::new(); w];
            let mut rparts: Vec<Vec<usize>> = vec![Vec::new(); w];
            for (i, k) in lkeys.iter().enumerate() {
                if let Some(k) = k {
                    lparts[route(k)].push(i);
                }
            }
            for (j, k) in side.keys.iter().enumerate() {
                if let Some(k) = k {
                    rparts[route(k)].push(j);
                }
            }
            let lkeys = &lkeys;
            let mut p: Vec<(usize, usize)> = std::thread::scope(|s| {
                let handles: Vec<_> = lparts
                    .iter()
                    .zip(&rparts)
                    .map(|(lp, rp)| {
                        s.spawn(move || {
                            let mut t: HashMap<&[u8], Vec<usize>> = HashMap::new();
                            for &j in rp {
                                t.entry(side.keys[j].as_deref().unwrap()).or_default().push(j);
                            }
                            let mut out = Vec::new();
                            for &i in lp {
                                if let Some(ms) = t.get(lkeys[i].as_deref().unwrap()) {
                                    out.extend(ms.iter().map(|&j| (i, j)));
                                }
                            }
                            out
                        })
                    })
                    .collect();
                handles.into_iter().flat_map(|h| h.join().expect("join partition")).collect()
            });
            p.sort_unstable();
            p
        }
    };
    Ok(pairs.into_iter().map(|(i, j)| merge(&recs[i], &side.records[j], names)).collect())
}

fn save(format: SaveFormat, path: &Path, schema: &Schema, target: Option<&Schema>, recs: &[Record]) -> Result<()> {
    match format {
        SaveFormat::RecordStream => write_stream(path, schema, recs),
        SaveFormat::SortedTable => {
            let mut entries: Vec<(Vec<u8>, Vec<u8>)> = vec![(b"Mschema".to_vec(), print_schema(schema).into_bytes())];
            for (i, r) in recs.iter().enumerate() {
                let mut k = b"R".to_vec();
                k.extend((i as u64).to_be_bytes());
                entries.push((k, encode_record(schema, r, None)?));
            }
            let bytes = write_table(entries.iter().map(|(k, v)| (&k[..], &v[..])))?;
            write_atomic(path, &bytes)
        }
        SaveFormat::Fdb => {
            let s = target.unwrap_or(schema);
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("saved");
            build_fdb(s, recs.iter().cloned(), &BuildOptions::new(name, 1), path)?;
            Ok(())
        }
    }
}

/// Applies a node chain to a batch of records.
pub(crate) fn apply_nodes(nodes: &[PlanNode], mut recs: Vec<Record>, rt: &Runtime<'_>, env: &mut Env<'_>, run: &mut ShardRun) -> Result<Vec<Record>> {
    for node in nodes {
        rt.deadline.check()?;
        recs = match &node.op {
            Op::Scan { .. } | Op::Find { .. } | Op::Sample { .. } | Op::RemoteBoundary | Op::Collect => recs,
            Op::Filter(l) => {
                let mut out = Vec::with_capacity(recs.len());
                for r in recs {
                    if truthy(apply_lambda(l, Value::Record(r.clone()), env)?, "filter() predicate")? {
                        out.push(r);
                    }
                }
                out
            }
            Op::Map(l) => {
                let mut out = Vec::with_capacity(recs.len());
                for r in recs {
                    match apply_lambda(l, Value::Record(r), env)? {
                        Value::Record(m) => out.push(m),
                        v => return Err(EngineError::Type(format!("map() must return a record, found {}", v.type_name()))),
                    }
                }
                out
            }
            Op::Flatten(path) => recs.into_iter().flat_map(|r| flatten_one(r, path)).collect(),
            Op::Sort { key, desc } => {
                let mut keyed = Vec::with_capacity(recs.len());
                for r in recs {
                    keyed.push((apply_lambda(key, Value::Record(r.clone()), env)?, r));
                }
                if *desc {
                    keyed.sort_by(|a, b| b.0.total_cmp(&a.0));
                } else {
                    keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
                }
                keyed.into_iter().map(|(_, r)| r).collect()
            }
            Op::Limit(n) => {
                recs.truncate(*n);
                recs
            }
            Op::Distinct(l) => {
                let mut seen = HashSet::new();
                let mut out = Vec::new();
                for r in recs {
                    if seen.insert(apply_lambda(l, Value::Record(r.clone()), env)?.key_bytes()) {
                        out.push(r);
                    }
                }
                out
            }
            Op::AggregatePartial(spec) => partial(spec, recs, env)?,
            Op::AggregateFinal(spec) => finalize(spec, recs, env)?,
            Op::HashJoin { right, left_key, strategy, right_names, .. } => {
                hash_join(&rt.sides[*right], left_key, right_names, *strategy, recs, rt, env)?
            }
            Op::SubFlowJoin(sf) => sub_flow(sf, recs, rt, env, run)?,
            Op::Save { format, path, schema } => {
                save(*format, path, &node.schema, schema.as_ref(), &recs)?;
                recs
            }
        };
    }
    Ok(recs)
}

/// Runs the remote segment of one shard and encodes its output.
pub(crate) fn run_shard(plan: &PlanDag, shard: usize, rt: &Runtime<'_>) -> Result<(Vec<Vec<u8>>, ShardRun)> {
    let cpu0 = thread_cpu_ns();
    let t0 = Instant::now();
    let mut run = ShardRun { shard, ..Default::default() };
    let mut env = Env::new(rt.ctx);
    let recs = read_source(plan, shard, rt, &mut env, &mut run)?;
    let recs = apply_nodes(&plan.remote()[1..], recs, rt, &mut env, &mut run)?;
    let bs = plan.boundary_schema();
    let encoded = recs.iter().map(|r| encode_record(bs, r, None)).collect::<std::result::Result<Vec<_>, _>>()?;
    run.records_out = encoded.len() as u64;
    run.cpu_ns = thread_cpu_ns().saturating_sub(cpu0);
    run.wall_ns = t0.elapsed().as_nanos() as u64;
    Ok((encoded, run))
}

/// Decodes boundary records in shard order and runs the mixer segment.
pub(crate) fn run_mixer(plan: &PlanDag, parts: &[Vec<Vec<u8>>], rt: &Runtime<'_>, stats: &mut QueryStats) -> Result<Vec<Record>> {
    let cpu0 = thread_cpu_ns();
    let t0 = Instant::now();
    rt.deadline.check()?;
    let bs = plan.boundary_schema();
    let mut recs = Vec::new();
    for p in parts {
        for b in p {
            stats.boundary_bytes += b.len() as u64;
            recs.push(decode_record(bs, b)?);
        }
    }
    let mut env = Env::new(rt.ctx);
    let mut run = ShardRun::default();
    let out = apply_nodes(plan.mixer(), recs, rt, &mut env, &mut run)?;
    stats.mixer_cpu_ns += thread_cpu_ns().saturating_sub(cpu0);
    stats.mixer_wall_ns += t0.elapsed().as_nanos() as u64;
    Ok(out.iter().map(normalize_record).collect())
}

/// Executes join right sides ahead of the main plan.
pub(crate) fn prepare_sides(plan: &PlanDag, ctx: &EvalContext, opts: &AdhocOptions, deadline: Deadline, stats: &mut QueryStats) -> Result<Vec<JoinSide>> {
    let mut sides = Vec::with_capacity(plan.subplans.len());
    for (i, sp) in plan.subplans.iter().enumerate() {
        let (rk, strategy) = plan
            .nodes
            .iter()
            .find_map(|n| match &n.op {
                Op::HashJoin { right, right_key, strategy, .. } if *right == i => Some((right_key, *strategy)),
                _ => None,
            })
            .expect("subplan referenced by a join");
        let res = execute_at(sp, ctx, &AdhocOptions { failures: None, ..opts.clone() }, deadline)?;
        stats.absorb(&res.stats);
        if strategy == JoinStrategy::Broadcast {
            let s = sp.output_schema();
            let mut bytes = 0u64;
            for r in &res.records {
                bytes += encode_record(s, r, None)?.len() as u64;
            }
            if bytes > opts.broadcast_limit {
                return Err(EngineError::BroadcastTooLarge { bytes, limit: opts.broadcast_limit });
            }
        }
        sides.push(build_side(res.records, rk, ctx)?);
    }
    Ok(sides)
}

type ShardOutput = (Vec<Vec<u8>>, ShardRun);

/// Runs the given shard tasks on a worker pool. Task `i` goes to worker
/// `i % workers`. With `retry`, a failed task runs once more before the
/// query aborts. Returns outputs in task order, or the first error together
/// with the runs that finished.
pub(crate) fn run_tasks(
    plan: &PlanDag,
    shards: &[usize],
    rt: &Runtime<'_>,
    workers: usize,
    retry: bool,
    failures: Option<&FailureHook>,
    on_done: &(dyn Fn(usize, &ShardOutput) -> Result<()> + Sync),
) -> std::result::Result<Vec<ShardOutput>, (EngineError, Vec<ShardRun>)> {
    let n = shards.len();
    // More threads than cores only adds switching; tasks are CPU bound.
    let cores = std::thread::available_parallelism().map_or(1, |c| c.get());
    let w = workers.max(1).min(cores).min(n.max(1));
    let abort = AtomicBool::new(false);
    let slots: Vec<Mutex<Option<ShardOutput>>> = (0..n).map(|_| Mutex::new(None)).collect();
    let errors: Mutex<Vec<(usize, EngineError)>> = Mutex::new(Vec::new());
    let (abort, slots, errors) = (&abort, &slots, &errors);
    std::thread::scope(|s| {
        for wi in 0..w {
            s.spawn(move || {
                for idx in (wi..n).step_by(w) {
                    if abort.load(AtomicOrdering::SeqCst) {
                        break;
                    }
                    let shard = shards[idx];
                    let mut attempt = 0u32;
                    loop {
                        if rt.deadline.expired() {
                            errors.lock().unwrap().push((idx, EngineError::Deadline { stats: Box::default() }));
                            abort.store(true, AtomicOrdering::SeqCst);
                            break;
                        }
                        let r = if failures.is_some_and(|f| f(shard, attempt)) {
                            Err(EngineError::ShardFailure { shard, cause: "injected failure".into() })
                        } else {
                            run_shard(plan, shard, rt)
                        };
                        match r.and_then(|(out, mut run)| {
                            run.attempts = attempt + 1;
                            let o = (out, run);
                            on_done(shard, &o)?;
                            Ok(o)
                        }) {
                            Ok(o) => {
                                *slots[idx].lock().unwrap() = Some(o);
                                break;
                            }
                            Err(e @ EngineError::Deadline { .. }) => {
                                errors.lock().unwrap().push((idx, e));
                                abort.store(true, AtomicOrdering::SeqCst);
                                break;
                            }
                            Err(e) if retry && attempt == 0 => {
                                let _ = e;
                                attempt += 1;
                            }
                            Err(e) => {
                                let cause = match e {
                                    EngineError::ShardFailure { cause, .. } => cause,
                                    e => e.to_string(),
                                };
                                errors.lock().unwrap().push((idx, EngineError::ShardFailure { shard, cause }));
                                abort.store(true, AtomicOrdering::SeqCst);
                                break;
                            }
                        }
                    }
                }
            });
        }
    });
    let mut errs = std::mem::take(&mut *errors.lock().unwrap());
    let done: Vec<Option<ShardOutput>> = slots.iter().map(|m| m.lock().unwrap().take()).collect();
    if !errs.is_empty() {
        errs.sort_by_key(|(i, _)| *i);
        let runs = done.into_iter().flatten().map(|(_, r)| r).collect();
        return Err((errs.remove(0).1, runs));
    }
    Ok(done.into_iter().map(|o| o.expect("every task finished")).collect())
}

/// Executes a plan with per-shard tasks on `opts.workers` threads.
pub fn execute_adhoc(plan: &PlanDag, ctx: &EvalContext, opts: &AdhocOptions) -> Result<QueryResult> {
    execute_at(plan, ctx, opts, Deadline::new(opts.deadline))
}

fn deadline_error(mut stats: QueryStats, runs: Vec<ShardRun>) -> EngineError {
    stats.shard_tasks_executed += runs.len();
    stats.per_shard.extend(runs);
    stats.finish();
    EngineError::Deadline { stats: Box::new(stats) }
}

pub(crate) fn execute_at(plan: &PlanDag, ctx: &EvalContext, opts: &AdhocOptions, deadline: Deadline) -> Result<QueryResult> {
    let t0 = Instant::now();
    let mut stats = QueryStats { shards_planned: plan.shards.len(), ..Default::default() };
    if deadline.expired() {
        return Err(deadline_error(stats, Vec::new()));
    }
    let sides = match prepare_sides(plan, ctx, opts, deadline, &mut stats) {
        Err(EngineError::Deadline { .. }) => return Err(deadline_error(stats, Vec::new())),
        r => r?,
    };
    let rt = Runtime { ctx, sides, deadline, workers: opts.workers.max(1) };
    let outputs = match run_tasks(plan, &plan.shards, &rt, opts.workers, true, opts.failures.as_ref(), &|_, _| Ok(())) {
        Ok(o) => o,
        Err((EngineError::Deadline { .. }, runs)) => return Err(deadline_error(stats, runs)),
        Err((e, _)) => return Err(e),
    };
    let mut parts = Vec::with_capacity(outputs.len());
    for (out, run) in outputs {
        stats.per_shard.push(run);
        parts.push(out);
    }
    stats.shard_tasks_executed = stats.per_shard.len();
    let records = match run_mixer(plan, &parts, &rt, &mut stats) {
        Err(EngineError::Deadline { .. }) => return Err(deadline_error(stats, Vec::new())),
        r => r?,
    };
    stats.finish();
    stats.wall_ns = t0.elapsed().as_nanos() as u64;
    Ok(QueryResult { schema: plan.output_schema().clone(), records, stats })
}

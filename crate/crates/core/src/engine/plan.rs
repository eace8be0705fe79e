// SPDX-License-Identifier: Apache-2.0

use std::collections::HashMap;
use std::fmt::Write;
use std::path::PathBuf;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::aggregate::{partial_schema, AggSpec};
use super::catalog::Catalog;
use super::find::{convert_find, QueryTemplate};
use super::readset::{read_set, ReadSet};
use super::{EngineError, Result, DEFAULT_BROADCAST_LIMIT};
use crate::codec::fnv1a64;
use crate::fdb::{FdbDataset, IndexQuery, Projection};
use crate::schema::{
    encode_record, flatten_path, infer_stage_schema_typed, join_names, parse_schema, print_schema, FieldPath, FieldType,
    Schema, SchemaNode, StageExprs,
};
use crate::value::{Record, Value};
use crate::wfl::ast::{Expr, Lambda, Pipeline, Source as AstSource, Stage};
use crate::wfl::typeck::{schema_of, Ty};
use crate::wfl::{eval_expr, parse_expr, print_expr, Env, EvalContext};

#[derive(Clone)]
pub enum Source {
    Dataset { name: String, dataset: Arc<FdbDataset>, digest: u64 },
    /// Collected records of a session variable, executed as one shard.
    Records { name: String, records: Arc<Vec<Record>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JoinStrategy {
    Broadcast,
    Shuffle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SaveFormat {
    Fdb,
    SortedTable,
    RecordStream,
}

impl SaveFormat {
    pub fn parse(s: &str) -> Option<SaveFormat> {
        match s {
            "fdb" => Some(SaveFormat::Fdb),
            "sorted-table" | "sstable" => Some(SaveFormat::SortedTable),
            "record-stream" | "recordio" => Some(SaveFormat::RecordStream),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SaveFormat::Fdb => "fdb",
            SaveFormat::SortedTable => "sorted-table",
            SaveFormat::RecordStream => "record-stream",
        }
    }
}

/// Per-record index join into another dataset.
pub struct SubFlow {
    /// Name the outer record is bound to inside the inner pipeline.
    pub param: String,
    pub inner: PlanDag,
    /// Output names of the inner fields, after collision renaming.
    pub right_names: Vec<(String, String)>,
}

pub enum Op {
    Scan { read: ReadSet, proj: Option<Arc<Projection>> },
    /// Index selection; `query` is instantiated at plan time unless the
    /// template depends on an outer record.
    Find { template: QueryTemplate, query: Option<IndexQuery>, residual: Vec<Lambda>, read: ReadSet, proj: Arc<Projection> },
    Sample { fraction: f64, seed: u64 },
    Filter(Lambda),
    Map(Lambda),
    Flatten(Vec<String>),
    Sort { key: Lambda, desc: bool },
    Limit(usize),
    Distinct(Lambda),
    AggregatePartial(Arc<AggSpec>),
    AggregateFinal(Arc<AggSpec>),
    HashJoin { right: usize, left_key: Lambda, right_key: Lambda, strategy: JoinStrategy, right_names: Vec<(String, String)> },
    SubFlowJoin(Arc<SubFlow>),
    Collect,
    Save { format: SaveFormat, path: PathBuf, schema: Option<Schema> },
    RemoteBoundary,
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Scan { .. } => "Scan",
            Op::Find { .. } => "Find",
            Op::Sample { .. } => "Sample",
            Op::Filter(_) => "Filter",
            Op::Map(_) => "Map",
            Op::Flatten(_) => "Flatten",
            Op::Sort { .. } => "Sort",
            Op::Limit(_) => "Limit",
            Op::Distinct(_) => "Distinct",
            Op::AggregatePartial(_) => "AggregatePartial",
            Op::AggregateFinal(_) => "AggregateFinal",
            Op::HashJoin { strategy: JoinStrategy::Broadcast, .. } => "HashJoinBroadcast",
            Op::HashJoin { strategy: JoinStrategy::Shuffle, .. } => "HashJoinShuffle",
            Op::SubFlowJoin(_) => "SubFlowJoin",
            Op::Collect => "Collect",
            Op::Save { .. } => "Save",
            Op::RemoteBoundary => "RemoteBoundary",
        }
    }

    /// Nodes that merge per-shard partial results on the mixer.
    pub fn is_merge(&self) -> bool {
        matches!(self, Op::AggregateFinal(_))
    }
}

pub struct PlanNode {
    pub op: Op,
    /// Schema of the node's output records.
    pub schema: Schema,
}

/// A planned pipeline: a node chain split by exactly one `RemoteBoundary`,
/// plus the plans of join right sides referenced by `HashJoin` nodes.
pub struct PlanDag {
    pub source: Source,
    /// Selected shards in ascending order.
    pub shards: Vec<usize>,
    pub nodes: Vec<PlanNode>,
    pub subplans: Vec<PlanDag>,
}

impl PlanDag {
    pub fn boundary_index(&self) -> usize {
        self.nodes.iter().position(|n| matches!(n.op, Op::RemoteBoundary)).expect("plan has a boundary")
    }

    pub fn remote(&self) -> &[PlanNode] {
        &self.nodes[..self.boundary_index()]
    }

    pub fn mixer(&self) -> &[PlanNode] {
        &self.nodes[self.boundary_index() + 1..]
    }

    /// Schema of records crossing the boundary.
    pub fn boundary_schema(&self) -> &Schema {
        &self.nodes[self.boundary_index()].schema
    }

    pub fn output_schema(&self) -> &Schema {
        &self.nodes.last().expect("non-empty plan").schema
    }

    pub fn node_names(&self) -> Vec<&'static str> {
        self.nodes.iter().map(|n| n.op.name()).collect()
    }

    /// Whether the mixer segment merges partial results.
    pub fn has_mixer_merge(&self) -> bool {
        self.mixer().iter().any(|n| n.op.is_merge())
    }

    /// Canonical, deterministic print of the plan.
    pub fn describe(&self) -> String {
        let mut s = String::new();
        self.describe_into(&mut s, "");
        s
    }

    fn describe_into(&self, s: &mut String, indent: &str) {
        match &self.source {
            Source::Dataset { name, digest, .. } => {
                let _ = writeln!(s, "{indent}source dataset {name} version {digest:016x} shards {:?}", self.shards);
            }
            Source::Records { name, records } => {
                let _ = writeln!(s, "{indent}source variable {name} records {}", records.len());
            }
        }
        for n in &self.nodes {
            let detail = match &n.op {
                Op::Scan { read, .. } => format!("read {}", describe_read(read)),
                Op::Find { template, query, residual, read, .. } => format!(
                    "template {} query {} residual [{}] read {}",
                    template.describe(),
                    query.as_ref().map(|q| q.describe()).unwrap_or_else(|| "-".into()),
                    residual.iter().map(lam).collect::<Vec<_>>().join("; "),
                    describe_read(read)
                ),
                Op::Sample { fraction, seed } => format!("fraction {fraction} seed {seed}"),
                Op::Filter(l) | Op::Map(l) | Op::Distinct(l) => lam(l),
                Op::Flatten(p) => p.join("."),
                Op::Sort { key, desc } => format!("{} {}", lam(key), if *desc { "desc" } else { "asc" }),
                Op::Limit(n) => n.to_string(),
                Op::AggregatePartial(a) | Op::AggregateFinal(a) => a.describe(),
                Op::HashJoin { right, left_key, right_key, .. } => format!("right #{right} on {} = {}", lam(left_key), lam(right_key)),
                Op::SubFlowJoin(sf) => {
                    let mut inner = String::new();
                    sf.inner.describe_into(&mut inner, &format!("{indent}    "));
                    format!("param {}\n{}", sf.param, inner.trim_end())
                }
                Op::Collect | Op::RemoteBoundary => String::new(),
                Op::Save { format, path, .. } => format!("{} {}", format.name(), path.display()),
            };
            let schema = print_schema(&n.schema).split_whitespace().collect::<Vec<_>>().join(" ");
            let _ = writeln!(s, "{indent}{} {detail} :: {schema}", n.op.name());
        }
        for (i, sp) in self.subplans.iter().enumerate() {
            let _ = writeln!(s, "{indent}subplan #{i}");
            sp.describe_into(s, &format!("{indent}  "));
        }
    }

    /// 64-bit hash over the canonical print, which includes every source
    /// dataset's manifest digest.
    pub fn fingerprint(&self) -> u64 {
        fnv1a64(self.describe().as_bytes())
    }
}

fn lam(l: &Lambda) -> String {
    format!("{} => {}", l.param, print_expr(&l.body))
}

fn describe_read(r: &ReadSet) -> String {
    match r {
        ReadSet::All => "*".into(),
        ReadSet::Paths(ps) => format!("[{}]", ps.iter().map(|p| p.as_str()).collect::<Vec<_>>().join(", ")),
    }
}

pub struct PlanOptions<'a> {
    pub broadcast_limit: u64,
    /// Schemas of session variables holding collected records.
    pub var_schemas: Option<&'a HashMap<String, Schema>>,
    /// Default dataset for a bare `flow` source.
    pub default_dataset: Option<&'a str>,
}

impl Default for PlanOptions<'_> {
    fn default() -> Self {
        PlanOptions { broadcast_limit: DEFAULT_BROADCAST_LIMIT, var_schemas: None, default_dataset: None }
    }
}

/// Parses and plans one pipeline expression.
pub fn plan(text: &str, catalog: &Catalog, ctx: &EvalContext, opts: &PlanOptions<'_>) -> Result<PlanDag> {
    match parse_expr(text)? {
        Expr::Pipeline(p) => plan_pipeline(&p, catalog, ctx, opts),
        _ => Err(EngineError::BadQuery("expected a pipeline such as flow(\"name\").filter(...)".into())),
    }
}

pub fn plan_pipeline(p: &Pipeline, catalog: &Catalog, ctx: &EvalContext, opts: &PlanOptions<'_>) -> Result<PlanDag> {
    let types: HashMap<String, Ty> = ctx.globals.iter().map(|(k, v)| (k.clone(), Ty::of_value(v))).collect();
    Planner { catalog, ctx, opts }.pipeline(p, &types, None)
}

/// First `ceil(fraction * n)` shards of a seeded permutation, ascending.
pub fn sample_shards(n: usize, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(EngineError::BadParam(format!("sample fraction must be in (0, 1], got {fraction}")));
    }
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let k = ((fraction * n as f64).ceil() as usize).min(n);
    let mut out = ids[..k].to_vec();
    out.sort_unstable();
    Ok(out)
}

/// Removes virtual-field markers and index annotations; records in flight
/// carry computed values as ordinary fields.
pub(crate) fn flight_schema(s: &Schema) -> Schema {
    fn strip(n: &mut SchemaNode) {
        n.virtual_expr = None;
        n.annotations.clear();
        if let FieldType::Message(c) = &mut n.ty {
            c.iter_mut().for_each(strip);
        }
    }
    let mut out = s.clone();
    out.fields.iter_mut().for_each(strip);
    out
}

struct Planner<'a> {
    catalog: &'a Catalog,
    ctx: &'a EvalContext,
    opts: &'a PlanOptions<'a>,
}

fn lambda_arg<'e>(st: &'e Stage, i: usize) -> Result<&'e Lambda> {
    match st.args.get(i) {
        Some(Expr::Lambda(l)) => Ok(l),
        _ => Err(EngineError::BadQuery(format!(
            "{}:{}: {}() argument {} must be a lambda",
            st.span.line,
            st.span.col,
            st.op,
            i + 1
        ))),
    }
}

fn arity(st: &Stage, lo: usize, hi: usize) -> Result<()> {
    if st.args.len() < lo || st.args.len() > hi {
        return Err(EngineError::BadQuery(format!(
            "{}:{}: {}() takes {} argument(s), got {}",
            st.span.line,
            st.span.col,
            st.op,
            if lo == hi { lo.to_string() } else { format!("{lo} to {hi}") },
            st.args.len()
        )));
    }
    Ok(())
}

impl Planner<'_> {
    fn constant(&self, e: &Expr) -> Result<Value> {
        let mut env = Env::new(self.ctx);
        Ok(eval_expr(e, &mut env)?)
    }

    fn string_arg(&self, st: &Stage, i: usize) -> Result<String> {
        match self.constant(&st.args[i])? {
            Value::Str(s) => Ok(s.to_string()),
            v => Err(EngineError::BadParam(format!("{}() argument {} must be a string, found {}", st.op, i + 1, v.type_name()))),
        }
    }

    /// Resolves a source to its data and full schema.
    fn source(&self, src: &AstSource) -> Result<(Source, Schema, usize)> {
        match src {
            AstSource::Flow(name) => {
                let name = match name {
                    Some(n) => n.as_str(),
                    None => self
                        .opts
                        .default_dataset
                        .ok_or_else(|| EngineError::BadQuery("bare `flow` needs a default dataset".into()))?,
                };
                let e = self.catalog.dataset(name)?;
                let n = e.dataset.num_shards();
                Ok((
                    Source::Dataset { name: name.to_string(), dataset: e.dataset.clone(), digest: e.digest },
                    e.dataset.schema().clone(),
                    n,
                ))
            }
            AstSource::Var(v) => {
                let val = self.ctx.globals.get(v).ok_or_else(|| EngineError::Wfl(crate::wfl::WflError::UnknownVariable(v.clone())))?;
                let records = records_of(v, val)?;
                let schema = match self.opts.var_schemas.and_then(|m| m.get(v)) {
                    Some(s) => s.clone(),
                    None => match Ty::of_value(val) {
                        Ty::Vector(t) if matches!(*t, Ty::Record(_)) => schema_of(v, &t)?,
                        Ty::Vector(t) if *t == Ty::Null => Schema::new(v.as_str(), Vec::new()),
                        t => return Err(EngineError::Type(format!("'{v}' holds {}, not collected records", t.name()))),
                    },
                };
                Ok((Source::Records { name: v.clone(), records: Arc::new(records) }, schema, 1))
            }
        }
    }

    /// Plans a pipeline. `outer` names the record bound by an enclosing
    /// `sub_flow`, whose fields the find template may reference.
    fn pipeline(&self, p: &Pipeline, globals: &HashMap<String, Ty>, outer: Option<&str>) -> Result<PlanDag> {
        let (source, base, nshards) = self.source(&p.source)?;
        let mut stages: &[Stage] = &p.stages;
        if let Some(last) = stages.last() {
            if last.op == "collect" {
                arity(last, 0, 0)?;
                stages = &stages[..stages.len() - 1];
            }
        }
        let mut nodes: Vec<PlanNode> = Vec::new();
        let mut subplans = Vec::new();

        // Plan-level sampling.
        let samples: Vec<&Stage> = stages.iter().filter(|s| s.op == "sample").collect();
        let mut shards: Vec<usize> = (0..nshards).collect();
        let mut sample = None;
        match samples.as_slice() {
            [] => {}
            [st] => {
                arity(st, 1, 2)?;
                if matches!(source, Source::Records { .. }) {
                    return Err(EngineError::BadParam("sample() applies to dataset sources only".into()));
                }
                let fraction = self
                    .constant(&st.args[0])?
                    .as_f64()
                    .ok_or_else(|| EngineError::BadParam("sample() fraction must be a number".into()))?;
                let seed = match st.args.get(1) {
                    None => 0,
                    Some(e) => self
                        .constant(e)?
                        .as_i64()
                        .ok_or_else(|| EngineError::BadParam("sample() seed must be an integer".into()))? as u64,
                };
                shards = sample_shards(nshards, fraction, seed)?;
                sample = Some((fraction, seed));
            }
            _ => return Err(EngineError::BadQuery("at most one sample() per pipeline".into())),
        }
        let rest: Vec<&Stage> = stages.iter().filter(|s| s.op != "sample").collect();

        // Source node: leading finds become one index selection.
        let flight = flight_schema(&base);
        let finds: Vec<&Stage> = rest.iter().take_while(|s| s.op == "find").copied().collect();
        let rest = &rest[finds.len()..];
        let read = read_set(&base, &stages.iter().filter(|s| s.op != "sample").cloned().collect::<Vec<_>>());
        let env_types = globals.clone();
        match &source {
            Source::Dataset { dataset, .. } => {
                let proj = Arc::new(match &read {
                    ReadSet::All => Projection::all(&dataset.meta)?,
                    ReadSet::Paths(ps) => dataset.projection(ps)?,
                });
                if finds.is_empty() {
                    nodes.push(PlanNode { op: Op::Scan { read: read.clone(), proj: Some(proj) }, schema: flight.clone() });
                } else {
                    let mut parts = Vec::new();
                    let mut residual = Vec::new();
                    for st in &finds {
                        arity(st, 1, 1)?;
                        let l = lambda_arg(st, 0)?;
                        infer_stage_schema_typed(&StageExprs::Predicate(l), &flight, &env_types)?;
                        parts.push(convert_find(&l.body, &l.param, &base, dataset.manifest())?);
                        residual.push(l.clone());
                    }
                    let template = if parts.len() == 1 { parts.pop().unwrap() } else { QueryTemplate::And(parts) };
                    let query = match outer {
                        None => Some(template.instantiate(&mut Env::new(self.ctx))?),
                        Some(_) => None,
                    };
                    nodes.push(PlanNode { op: Op::Find { template, query, residual, read: read.clone(), proj }, schema: flight.clone() });
                }
            }
            Source::Records { .. } => {
                if !finds.is_empty() {
                    return Err(EngineError::BadQuery("find() needs an indexed dataset source; use filter()".into()));
                }
                nodes.push(PlanNode { op: Op::Scan { read: ReadSet::All, proj: None }, schema: flight.clone() });
            }
        }
        if let Some((fraction, seed)) = sample {
            nodes.push(PlanNode { op: Op::Sample { fraction, seed }, schema: flight.clone() });
        }

        let shard_key = match &source {
            Source::Dataset { dataset, .. } => dataset.manifest().shard_key.clone(),
            Source::Records { .. } => None,
        };
        let mut schema = flight;
        let mut remote = true;
        // Records still carry source values unchanged (only filtered), so
        // group keys on the shard key are shard-local.
        let mut shard_local = true;
        let boundary = |nodes: &mut Vec<PlanNode>, remote: &mut bool, schema: &Schema| {
            if *remote {
                nodes.push(PlanNode { op: Op::RemoteBoundary, schema: schema.clone() });
                *remote = false;
            }
        };
        for (i, st) in rest.iter().enumerate() {
            let last = i + 1 == rest.len();
            match st.op.as_str() {
                "find" => {
                    return Err(EngineError::BadQuery(format!(
                        "{}:{}: find() must directly follow the source",
                        st.span.line, st.span.col
                    )))
                }
                "filter" => {
                    arity(st, 1, 1)?;
                    let l = lambda_arg(st, 0)?;
                    schema = infer_stage_schema_typed(&StageExprs::Predicate(l), &schema, &env_types)?;
                    nodes.push(PlanNode { op: Op::Filter(l.clone()), schema: schema.clone() });
                }
                "map" => {
                    arity(st, 1, 1)?;
                    let l = lambda_arg(st, 0)?;
                    schema = infer_stage_schema_typed(&StageExprs::Map(l), &schema, &env_types)?;
                    nodes.push(PlanNode { op: Op::Map(l.clone()), schema: schema.clone() });
                    shard_local = false;
                }
                "flatten" => {
                    arity(st, 1, 1)?;
                    let l = lambda_arg(st, 0)?;
                    schema = flight_schema(&infer_stage_schema_typed(&StageExprs::Flatten(l), &schema, &env_types)?);
                    let path = flatten_path(l).expect("checked by inference");
                    nodes.push(PlanNode { op: Op::Flatten(path), schema: schema.clone() });
                    shard_local = false;
                }
                "sort" => {
                    arity(st, 1, 2)?;
                    let l = lambda_arg(st, 0)?;
                    let desc = match st.args.get(1) {
                        None => false,
                        Some(_) => match self.string_arg(st, 1)?.as_str() {
                            "asc" => false,
                            "desc" => true,
                            d => return Err(EngineError::BadParam(format!("sort direction must be \"asc\" or \"desc\", got {d:?}"))),
                        },
                    };
                    schema = infer_stage_schema_typed(&StageExprs::Key(l), &schema, &env_types)?;
                    boundary(&mut nodes, &mut remote, &schema);
                    nodes.push(PlanNode { op: Op::Sort { key: l.clone(), desc }, schema: schema.clone() });
                }
                "limit" => {
                    arity(st, 1, 1)?;
                    let n = match self.constant(&st.args[0])? {
                        Value::Int(n) if n >= 0 => n as usize,
                        Value::Uint(n) => n as usize,
                        v => return Err(EngineError::BadParam(format!("limit() needs a non-negative integer, found {v}"))),
                    };
                    boundary(&mut nodes, &mut remote, &schema);
                    nodes.push(PlanNode { op: Op::Limit(n), schema: schema.clone() });
                }
                "distinct" => {
                    arity(st, 1, 1)?;
                    let l = lambda_arg(st, 0)?;
                    schema = infer_stage_schema_typed(&StageExprs::Key(l), &schema, &env_types)?;
                    boundary(&mut nodes, &mut remote, &schema);
                    nodes.push(PlanNode { op: Op::Distinct(l.clone()), schema: schema.clone() });
                }
                "aggregate" => {
                    arity(st, 1, 2)?;
                    let (key, body) = if st.args.len() == 2 { (Some(lambda_arg(st, 0)?), lambda_arg(st, 1)?) } else { (None, lambda_arg(st, 0)?) };
                    let out = infer_stage_schema_typed(&StageExprs::Aggregate { key, body }, &schema, &env_types)?;
                    let spec = Arc::new(AggSpec::new(key, body)?);
                    let local = remote && shard_local && groups_by_shard_key(key, shard_key.as_ref());
                    if remote {
                        nodes.push(PlanNode { op: Op::AggregatePartial(spec.clone()), schema: partial_schema() });
                        if local {
                            nodes.push(PlanNode { op: Op::AggregateFinal(spec), schema: out.clone() });
                            boundary(&mut nodes, &mut remote, &out);
                        } else {
                            boundary(&mut nodes, &mut remote, &partial_schema());
                            nodes.push(PlanNode { op: Op::AggregateFinal(spec), schema: out.clone() });
                        }
                    } else {
                        nodes.push(PlanNode { op: Op::AggregatePartial(spec.clone()), schema: partial_schema() });
                        nodes.push(PlanNode { op: Op::AggregateFinal(spec), schema: out.clone() });
                    }
                    schema = out;
                    shard_local = false;
                }
                "join" => {
                    arity(st, 3, 4)?;
                    let right = match &st.args[0] {
                        Expr::Pipeline(rp) => self.pipeline(rp, globals, None)?,
                        Expr::Ident(v, span) => {
                            let rp = Pipeline { source: AstSource::Var(v.clone()), stages: Vec::new(), span: *span };
                            self.pipeline(&rp, globals, None)?
                        }
                        _ => return Err(EngineError::BadQuery("join() right side must be a flow or a collected variable".into())),
                    };
                    let lk = lambda_arg(st, 1)?;
                    let rk = lambda_arg(st, 2)?;
                    let rschema = right.output_schema().clone();
                    check_key(lk, &schema, &env_types)?;
                    check_key(rk, &rschema, &env_types)?;
                    let out = flight_schema(&infer_stage_schema_typed(&StageExprs::Join { right: &rschema }, &schema, &env_types)?);
                    let right_names = renames(&schema, &rschema);
                    let strategy = match st.args.get(3) {
                        Some(_) => match self.string_arg(st, 3)?.as_str() {
                            "broadcast" => JoinStrategy::Broadcast,
                            "shuffle" => JoinStrategy::Shuffle,
                            s => return Err(EngineError::BadParam(format!("join strategy must be \"broadcast\" or \"shuffle\", got {s:?}"))),
                        },
                        None => {
                            if estimate_bytes(&right)? <= self.opts.broadcast_limit {
                                JoinStrategy::Broadcast
                            } else {
                                JoinStrategy::Shuffle
                            }
                        }
                    };
                    if strategy == JoinStrategy::Shuffle {
                        boundary(&mut nodes, &mut remote, &schema);
                    }
                    subplans.push(right);
                    nodes.push(PlanNode {
                        op: Op::HashJoin { right: subplans.len() - 1, left_key: lk.clone(), right_key: rk.clone(), strategy, right_names },
                        schema: out.clone(),
                    });
                    schema = out;
                    shard_local = false;
                }
                "sub_flow" => {
                    arity(st, 1, 1)?;
                    let l = lambda_arg(st, 0)?;
                    let Expr::Pipeline(ip) = l.body.tail() else {
                        return Err(EngineError::BadQuery("sub_flow() takes a lambda returning a flow, e.g. p => flow(\"d\").find(...)".into()));
                    };
                    if !matches!(ip.source, AstSource::Flow(_)) {
                        return Err(EngineError::BadQuery("sub_flow() needs a dataset source".into()));
                    }
                    if let Some(bad) = ip.stages.iter().find(|s| matches!(s.op.as_str(), "join" | "sub_flow" | "sample" | "save")) {
                        return Err(EngineError::BadQuery(format!("{}() is not supported inside sub_flow()", bad.op)));
                    }
                    let mut inner_types = env_types.clone();
                    inner_types.insert(l.param.clone(), Ty::of_schema(&schema));
                    let inner = self.pipeline(ip, &inner_types, Some(&l.param))?;
                    let rschema = inner.output_schema().clone();
                    let out = flight_schema(&infer_stage_schema_typed(&StageExprs::Join { right: &rschema }, &schema, &env_types)?);
                    let right_names = renames(&schema, &rschema);
                    nodes.push(PlanNode {
                        op: Op::SubFlowJoin(Arc::new(SubFlow { param: l.param.clone(), inner, right_names })),
                        schema: out.clone(),
                    });
                    schema = out;
                    shard_local = false;
                }
                "save" => {
                    if !last {
                        return Err(EngineError::BadQuery("save() must be the last stage".into()));
                    }
                    arity(st, 2, 3)?;
                    let fmt = self.string_arg(st, 0)?;
                    let format = SaveFormat::parse(&fmt)
                        .ok_or_else(|| EngineError::BadParam(format!("unknown save format {fmt:?} (fdb, sorted-table, record-stream)")))?;
                    let path = PathBuf::from(self.string_arg(st, 1)?);
                    let target = match st.args.get(2) {
                        Some(_) => Some(parse_schema(&self.string_arg(st, 2)?)?),
                        None => None,
                    };
                    boundary(&mut nodes, &mut remote, &schema);
                    nodes.push(PlanNode { op: Op::Save { format, path, schema: target }, schema: schema.clone() });
                }
                "collect" => return Err(EngineError::BadQuery("collect() must be the last stage".into())),
                op => {
                    return Err(EngineError::BadQuery(format!("{}:{}: unknown flow operator '{op}'", st.span.line, st.span.col)))
                }
            }
        }
        boundary(&mut nodes, &mut remote, &schema);
        if p.stages.last().is_some_and(|s| s.op == "collect") {
            nodes.push(PlanNode { op: Op::Collect, schema: schema.clone() });
        }
        Ok(PlanDag { source, shards, nodes, subplans })
    }
}

fn records_of(name: &str, v: &Value) -> Result<Vec<Record>> {
    match v {
        Value::Vector(xs) => xs
            .iter()
            .map(|x| match x {
                Value::Record(r) => Ok(r.clone()),
                other => Err(EngineError::Type(format!("'{name}' holds a {} element, not a record", other.type_name()))),
            })
            .collect(),
        other => Err(EngineError::Type(format!("'{name}' holds {}, not collected records", other.type_name()))),
    }
}

fn check_key(l: &Lambda, schema: &Schema, types: &HashMap<String, Ty>) -> Result<()> {
    infer_stage_schema_typed(&StageExprs::Key(l), schema, types)?;
    Ok(())
}

/// Right-side field renames for joins, as (original, output) pairs.
fn renames(left: &Schema, right: &Schema) -> Vec<(String, String)> {
    let l: Vec<String> = left.fields.iter().map(|f| f.name.clone()).collect();
    let r: Vec<String> = right.fields.iter().map(|f| f.name.clone()).collect();
    r.iter().cloned().zip(join_names(&l, &r)).collect()
}

/// Upper bound of a join right side's encoded size, known before running it.
fn estimate_bytes(p: &PlanDag) -> Result<u64> {
    Ok(match &p.source {
        Source::Records { records, .. } => {
            let s = p.nodes[0].schema.clone();
            let mut n = 0u64;
            for r in records.iter() {
                n += encode_record(&s, r, None).map(|b| b.len() as u64).unwrap_or(0);
            }
            n
        }
        Source::Dataset { dataset, .. } => p.shards.iter().map(|&i| dataset.manifest().shards[i].bytes).sum(),
    })
}

/// True when the group key has a field that is exactly `p.<shard key>`.
fn groups_by_shard_key(key: Option<&Lambda>, shard_key: Option<&FieldPath>) -> bool {
    let (Some(k), Some(sk)) = (key, shard_key) else { return false };
    let Expr::Record(fields) = k.body.tail() else { return false };
    fields.iter().any(|(_, e)| field_path_of(e, &k.param).is_some_and(|p| p == sk.as_str()))
}

fn field_path_of(e: &Expr, param: &str) -> Option<String> {
    let mut parts = Vec::new();
    let mut cur = e;
    while let Expr::Field(b, n) = cur {
        parts.push(n.as_str());
        cur = b;
    }
    match cur {
        Expr::Ident(n, _) if n == param && !parts.is_empty() => {
            parts.reverse();
            Some(parts.join("."))
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_sets_are_nested_and_deterministic() {
        for seed in 0..20u64 {
            let mut prev: Vec<usize> = Vec::new();
            for k in 1..=16 {
                let f = k as f64 / 16.0;
                let s = sample_shards(16, f, seed).unwrap();
                assert_eq!(s.len(), k);
                assert!(prev.iter().all(|x| s.contains(x)));
                assert_eq!(s, sample_shards(16, f, seed).unwrap());
                prev = s;
            }
            assert_eq!(prev, (0..16).collect::<Vec<_>>());
        }
        assert!(sample_shards(4, 0.0, 1).is_err());
        assert!(sample_shards(4, 1.5, 1).is_err());
        assert_eq!(sample_shards(16, 0.01, 3).unwrap().len(), 1);
        assert_eq!(sample_shards(16, 0.1, 3).unwrap().len(), 2);
    }
}

// SPDX-License-Identifier: Apache-2.0

//! Single-threaded reference interpreter.
//!
//! Evaluates a pipeline directly over its syntax tree: full scans in shard
//! order, `find` as a plain filter, aggregates by collecting each group's
//! argument values and applying the vector builtins, joins as nested loops.
//! It shares no operator code with the planner or executors and serves as
//! the oracle for their results.

use std::collections::HashMap;

use super::catalog::Catalog;
use super::exec::normalize_record;
use super::plan::sample_shards;
use super::{EngineError, Result};
use crate::fdb::{Projection, ScanStats};
use crate::schema::{flatten_path, infer_stage_schema_typed, join_names, Schema, StageExprs};
use crate::value::{Record, Value};
use crate::wfl::agg::{agg_slot, extract_aggregates};
use crate::wfl::ast::{Expr, Lambda, Pipeline, Source, Stage};
use crate::wfl::typeck::{schema_of, Ty};
use crate::wfl::{apply_lambda, builtins, eval_expr, parse_expr, Env, EvalContext};

/// Evaluates one pipeline expression; `default_dataset` serves a bare `flow`.
pub fn run_reference(text: &str, catalog: &Catalog, ctx: &EvalContext, default_dataset: Option<&str>) -> Result<Vec<Record>> {
    let Expr::Pipeline(p) = parse_expr(text)? else {
        return Err(EngineError::BadQuery("expected a pipeline".into()));
    };
    let types: HashMap<String, Ty> = ctx.globals.iter().map(|(k, v)| (k.clone(), Ty::of_value(v))).collect();
    let r = Reference { catalog, default_dataset };
    let (_, recs) = r.pipeline(&p, &mut Env::new(ctx), &types)?;
    Ok(recs.iter().map(normalize_record).collect())
}

struct Reference<'a> {
    catalog: &'a Catalog,
    default_dataset: Option<&'a str>,
}

fn lambda(st: &Stage, i: usize) -> Result<&Lambda> {
    match st.args.get(i) {
        Some(Expr::Lambda(l)) => Ok(l),
        _ => Err(EngineError::BadQuery(format!("{}() argument {} must be a lambda", st.op, i + 1))),
    }
}

fn truthy(v: Value) -> Result<bool> {
    match v {
        Value::Bool(b) => Ok(b),
        Value::Null => Ok(false),
        v => Err(EngineError::Type(format!("predicate returned {}", v.type_name()))),
    }
}

fn names(s: &Schema) -> Vec<String> {
    s.fields.iter().map(|f| f.name.clone()).collect()
}

fn joined(l: &Record, r: &Record, left: &Schema, right: &Schema) -> Record {
    let mut out = l.clone();
    for (orig, new) in names(right).iter().zip(join_names(&names(left), &names(right))) {
        if let Some(v) = r.get(orig) {
            out.set(&new, v.clone());
        }
    }
    out
}

fn flatten(r: &Record, path: &[String]) -> Vec<Record> {
    let mut out = Vec::new();
    match (r.get(&path[0]), path.len()) {
        (Some(Value::Vector(xs)), 1) => {
            for x in xs.iter() {
                let mut c = r.clone();
                c.set(&path[0], x.clone());
                out.push(c);
            }
        }
        (Some(Value::Record(inner)), n) if n > 1 => {
            for i in flatten(inner, &path[1..]) {
                let mut c = r.clone();
                c.set(&path[0], Value::Record(i));
                out.push(c);
            }
        }
        _ => {}
    }
    out
}

impl Reference<'_> {
    fn constant(&self, e: &Expr, env: &mut Env<'_>) -> Result<Value> {
        Ok(eval_expr(e, env)?)
    }

    fn source(&self, p: &Pipeline, env: &mut Env<'_>) -> Result<(Schema, Vec<Record>)> {
        match &p.source {
            Source::Flow(name) => {
                let name = name.as_deref().or(self.default_dataset).ok_or_else(|| EngineError::BadQuery("bare flow without a default".into()))?;
                let ds = &self.catalog.dataset(name)?.dataset;
                let mut shards: Vec<usize> = (0..ds.num_shards()).collect();
                if let Some(st) = p.stages.iter().find(|s| s.op == "sample") {
                    let f = self.constant(&st.args[0], env)?.as_f64().unwrap_or(f64::NAN);
                    let seed = match st.args.get(1) {
                        Some(e) => self.constant(e, env)?.as_i64().unwrap_or(0) as u64,
                        None => 0,
                    };
                    shards = sample_shards(ds.num_shards(), f, seed)?;
                }
                let proj = Projection::all(&ds.meta)?;
                let mut recs = Vec::new();
                for s in shards {
                    recs.extend(ds.shard(s)?.full_scan(&proj, &mut ScanStats::default())?);
                }
                Ok((ds.schema().clone(), recs))
            }
            Source::Var(v) => {
                let val = env.lookup(v).ok_or_else(|| EngineError::Wfl(crate::wfl::WflError::UnknownVariable(v.clone())))?;
                let recs: Vec<Record> = match &val {
                    Value::Vector(xs) => xs.iter().filter_map(|x| x.as_record().cloned()).collect(),
                    _ => return Err(EngineError::Type(format!("'{v}' is not a collection of records"))),
                };
                let schema = match Ty::of_value(&val) {
                    Ty::Vector(t) if matches!(*t, Ty::Record(_)) => schema_of(v, &t)?,
                    _ => Schema::new(v.as_str(), Vec::new()),
                };
                Ok((schema, recs))
            }
        }
    }

    fn pipeline(&self, p: &Pipeline, env: &mut Env<'_>, types: &HashMap<String, Ty>) -> Result<(Schema, Vec<Record>)> {
        let (mut schema, mut recs) = self.source(p, env)?;
        for st in &p.stages {
            match st.op.as_str() {
                "find" | "filter" => {
                    let l = lambda(st, 0)?;
                    schema = infer_stage_schema_typed(&StageExprs::Predicate(l), &schema, types)?;
                    let mut keep = Vec::new();
                    for r in recs {
                        if truthy(apply_lambda(l, Value::Record(r.clone()), env)?)? {
                            keep.push(r);
                        }
                    }
                    recs = keep;
                }
                "map" => {
                    let l = lambda(st, 0)?;
                    schema = infer_stage_schema_typed(&StageExprs::Map(l), &schema, types)?;
                    recs = recs
                        .into_iter()
                        .map(|r| match apply_lambda(l, Value::Record(r), env)? {
                            Value::Record(m) => Ok(m),
                            v => Err(EngineError::Type(format!("map returned {}", v.type_name()))),
                        })
                        .collect::<Result<_>>()?;
                }
                "flatten" => {
                    let l = lambda(st, 0)?;
                    schema = infer_stage_schema_typed(&StageExprs::Flatten(l), &schema, types)?;
                    let path = flatten_path(l).expect("validated path");
                    recs = recs.iter().flat_map(|r| flatten(r, &path)).collect();
                }
                "sort" => {
                    let l = lambda(st, 0)?;
                    let desc = match st.args.get(1) {
                        Some(e) => self.constant(e, env)?.as_str() == Some("desc"),
                        None => false,
                    };
                    let mut keyed: Vec<(Value, Record)> =
                        recs.into_iter().map(|r| Ok((apply_lambda(l, Value::Record(r.clone()), env)?, r))).collect::<Result<_>>()?;
                    keyed.sort_by(|a, b| if desc { b.0.total_cmp(&a.0) } else { a.0.total_cmp(&b.0) });
                    recs = keyed.into_iter().map(|(_, r)| r).collect();
                }
                "limit" => {
                    let n = self.constant(&st.args[0], env)?.as_i64().unwrap_or(0).max(0) as usize;
                    recs.truncate(n);
                }
                "distinct" => {
                    let l = lambda(st, 0)?;
                    let mut seen: Vec<Value> = Vec::new();
                    let mut keep = Vec::new();
                    for r in recs {
                        let k = apply_lambda(l, Value::Record(r.clone()), env)?;
                        if !seen.iter().any(|s| s.total_cmp(&k).is_eq()) {
                            seen.push(k);
                            keep.push(r);
                        }
                    }
                    recs = keep;
                }
                "aggregate" => {
                    let (key, body) = if st.args.len() == 2 { (Some(lambda(st, 0)?), lambda(st, 1)?) } else { (None, lambda(st, 0)?) };
                    schema = infer_stage_schema_typed(&StageExprs::Aggregate { key, body }, &schema, types)?;
                    recs = self.aggregate(key, body, recs, env)?;
                }
                "join" => {
                    let (rschema, right) = match &st.args[0] {
                        Expr::Pipeline(rp) => self.pipeline(rp, env, types)?,
                        Expr::Ident(v, span) => {
                            let rp = Pipeline { source: Source::Var(v.clone()), stages: Vec::new(), span: *span };
                            self.pipeline(&rp, env, types)?
                        }
                        _ => return Err(EngineError::BadQuery("join right side".into())),
                    };
                    let (lk, rk) = (lambda(st, 1)?, lambda(st, 2)?);
                    let mut rkeys = Vec::with_capacity(right.len());
                    for r in &right {
                        rkeys.push(apply_lambda(rk, Value::Record(r.clone()), env)?);
                    }
                    let mut out = Vec::new();
                    for l in &recs {
                        let k = apply_lambda(lk, Value::Record(l.clone()), env)?;
                        if k.is_null() {
                            continue;
                        }
                        for (r, rk) in right.iter().zip(&rkeys) {
                            if !rk.is_null() && rk.key_bytes() == k.key_bytes() {
                                out.push(joined(l, r, &schema, &rschema));
                            }
                        }
                    }
                    schema = infer_stage_schema_typed(&StageExprs::Join { right: &rschema }, &schema, types)?;
                    recs = out;
                }
                "sub_flow" => {
                    let l = lambda(st, 0)?;
                    let Expr::Pipeline(ip) = l.body.tail() else {
                        return Err(EngineError::BadQuery("sub_flow body".into()));
                    };
                    let mut inner_types = types.clone();
                    inner_types.insert(l.param.clone(), Ty::of_schema(&schema));
                    let mut out = Vec::new();
                    let mut rschema = None;
                    for r in &recs {
                        env.push(&l.param, Value::Record(r.clone()));
                        let res = self.pipeline(ip, env, &inner_types);
                        env.pop();
                        let (rs, matches) = res?;
                        for m in &matches {
                            out.push(joined(r, m, &schema, &rs));
                        }
                        rschema = Some(rs);
                    }
                    if let Some(rs) = rschema {
                        schema = infer_stage_schema_typed(&StageExprs::Join { right: &rs }, &schema, types)?;
                    }
                    recs = out;
                }
                "sample" | "collect" | "save" => {}
                op => return Err(EngineError::BadQuery(format!("unknown flow operator '{op}'"))),
            }
        }
        Ok((schema, recs))
    }

    fn aggregate(&self, key: Option<&Lambda>, body: &Lambda, recs: Vec<Record>, env: &mut Env<'_>) -> Result<Vec<Record>> {
        let (fin, calls) = extract_aggregates(body)?;
        let mut order: Vec<Value> = Vec::new();
        let mut groups: HashMap<Vec<u8>, Vec<Record>> = HashMap::new();
        for r in recs {
            let k = match key {
                Some(k) => apply_lambda(k, Value::Record(r.clone()), env)?,
                None => Value::Null,
            };
            let kb = k.key_bytes();
            if !groups.contains_key(&kb) {
                order.push(k);
            }
            groups.entry(kb).or_default().push(r);
        }
        let mut out = Vec::new();
        for k in order {
            let members = &groups[&k.key_bytes()];
            let depth = env.depth();
            for (i, c) in calls.iter().enumerate() {
                let v = match &c.arg {
                    None => Value::Uint(members.len() as u64),
                    Some(a) => {
                        let mut xs = Vec::with_capacity(members.len());
                        for r in members {
                            env.push(&body.param, Value::Record(r.clone()));
                            let v = eval_expr(a, env);
                            env.pop();
                            xs.push(v?);
                        }
                        builtins::call(c.func.name(), &[Value::vector(xs)])?
                    }
                };
                env.push(&agg_slot(i), v);
            }
            let f = eval_expr(&fin, env);
            env.truncate(depth);
            let mut rec = match k {
                Value::Record(r) => r,
                _ => Record::new(),
            };
            match f? {
                Value::Record(fr) => {
                    for (n, v) in fr.iter() {
                        rec.set(n, v.clone());
                    }
                }
                v => return Err(EngineError::Type(format!("aggregate returned {}", v.type_name()))),
            }
            out.push(rec);
        }
        Ok(out)
    }
}

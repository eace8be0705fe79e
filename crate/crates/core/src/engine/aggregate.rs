// SPDX-License-Identifier: Apache-2.0

//! Two-phase aggregation. Each shard folds its records into per-group
//! partial states; the mixer merges partial states by group key and
//! evaluates the finalizer once per group.

use std::collections::HashMap;
use std::sync::Arc;

use super::{EngineError, Result};
use crate::codec::{put_bytes, put_varint, Reader};
use crate::schema::{decode_any, encode_any, Schema};
use crate::value::{Record, Value};
use crate::wfl::agg::{agg_slot, extract_aggregates, AggCall, AggFunc};
use crate::wfl::ast::{BinOp, Expr, Lambda};
use crate::wfl::broadcast::scalar_binop;
use crate::wfl::sketch::{Hll, Sketch};
use crate::wfl::typeck::{schema_of, Ty};
use crate::wfl::{apply_lambda, builtins, eval_expr, print_expr, Env, WflError};

/// Precision of the registers behind `hll_count` in aggregates.
pub const HLL_PRECISION: u8 = 14;

#[derive(Debug, Clone)]
pub struct AggSpec {
    pub key: Option<Lambda>,
    pub param: String,
    pub calls: Vec<AggCall>,
    pub finalizer: Expr,
}

impl AggSpec {
    pub fn new(key: Option<&Lambda>, body: &Lambda) -> Result<AggSpec> {
        let (finalizer, calls) = extract_aggregates(body)?;
        Ok(AggSpec { key: key.cloned(), param: body.param.clone(), calls, finalizer })
    }

    pub fn describe(&self) -> String {
        let calls: Vec<String> = self
            .calls
            .iter()
            .map(|c| format!("{}({})", c.func.name(), c.arg.as_ref().map(print_expr).unwrap_or_default()))
            .collect();
        format!(
            "key={} param={} calls=[{}] fin={}",
            self.key.as_ref().map(|k| format!("{} => {}", k.param, print_expr(&k.body))).unwrap_or_else(|| "-".into()),
            self.param,
            calls.join(", "),
            print_expr(&self.finalizer)
        )
    }
}

/// Schema of partial-state records crossing the boundary.
pub fn partial_schema() -> Schema {
    schema_of("partial", &Ty::Record(vec![("key".into(), Ty::Any), ("state".into(), Ty::Bytes)])).expect("record type")
}

#[derive(Debug, Clone)]
enum State {
    Count(u64),
    Sum(Value),
    /// Count, mean and sum of squared deviations.
    Moments(u64, f64, f64),
    Min(Value),
    Max(Value),
    Hll(Hll),
}

fn type_err(f: AggFunc, v: &Value) -> EngineError {
    EngineError::Type(format!("{}() needs numbers, found {}", f.name(), v.type_name()))
}

impl State {
    fn new(f: AggFunc) -> State {
        match f {
            AggFunc::Count => State::Count(0),
            AggFunc::Sum => State::Sum(Value::Null),
            AggFunc::Avg | AggFunc::Stddev => State::Moments(0, 0.0, 0.0),
            AggFunc::Min => State::Min(Value::Null),
            AggFunc::Max => State::Max(Value::Null),
            AggFunc::HllCount => State::Hll(Hll::new(HLL_PRECISION).expect("valid precision")),
        }
    }

    /// `v` is `None` for `count()`.
    fn update(&mut self, f: AggFunc, v: Option<Value>) -> Result<()> {
        let Some(v) = v else {
            if let State::Count(n) = self {
                *n += 1;
            }
            return Ok(());
        };
        if v.is_null() {
            return Ok(());
        }
        match self {
            State::Count(n) => *n += 1,
            State::Sum(acc) => {
                if !v.is_numeric() {
                    return Err(type_err(f, &v));
                }
                *acc = if acc.is_null() { v } else { scalar_binop(BinOp::Add, acc, &v)? };
            }
            State::Moments(n, mean, m2) => {
                let x = if v.is_numeric() { v.as_f64().unwrap() } else { return Err(type_err(f, &v)) };
                *n += 1;
                let d = x - *mean;
                *mean += d / *n as f64;
                *m2 += d * (x - *mean);
            }
            State::Min(acc) => *acc = builtins::call("min", &[acc.clone(), v])?,
            State::Max(acc) => *acc = builtins::call("max", &[acc.clone(), v])?,
            State::Hll(h) => h.add(&v.key_bytes()),
        }
        Ok(())
    }

    fn merge(&mut self, o: State) -> Result<()> {
        match (self, o) {
            (State::Count(a), State::Count(b)) => *a += b,
            (State::Sum(a), State::Sum(b)) => {
                if !b.is_null() {
                    *a = if a.is_null() { b } else { scalar_binop(BinOp::Add, a, &b)? };
                }
            }
            (State::Moments(na, ma, m2a), State::Moments(nb, mb, m2b)) => {
                if nb > 0 {
                    let n = *na + nb;
                    let d = mb - *ma;
                    let (fa, fb) = (*na as f64, nb as f64);
                    *ma += d * fb / n as f64;
                    *m2a += m2b + d * d * fa * fb / n as f64;
                    *na = n;
                }
            }
            (State::Min(a), State::Min(b)) => *a = builtins::call("min", &[a.clone(), b])?,
            (State::Max(a), State::Max(b)) => *a = builtins::call("max", &[a.clone(), b])?,
            (State::Hll(a), State::Hll(b)) => a.merge(&b).map_err(EngineError::BadParam)?,
            _ => return Err(EngineError::CorruptStream("partial states of different aggregates".into())),
        }
        Ok(())
    }

    fn finish(self, f: AggFunc) -> Value {
        match self {
            State::Count(n) => Value::Uint(n),
            State::Sum(v) | State::Min(v) | State::Max(v) => v,
            State::Moments(0, ..) => Value::Null,
            State::Moments(n, mean, m2) => match f {
                AggFunc::Avg => Value::Double(mean),
                _ => Value::Double((m2 / n as f64).max(0.0).sqrt()),
            },
            State::Hll(h) => Value::Uint(h.estimate().round() as u64),
        }
    }

    fn encode(&self, out: &mut Vec<u8>) {
        match self {
            State::Count(n) => put_varint(out, *n),
            State::Sum(v) | State::Min(v) | State::Max(v) => encode_any(v, out),
            State::Moments(n, mean, m2) => {
                put_varint(out, *n);
                out.extend(mean.to_le_bytes());
                out.extend(m2.to_le_bytes());
            }
            State::Hll(h) => put_bytes(out, &Sketch::Hll(h.clone()).to_bytes()),
        }
    }

    fn decode(f: AggFunc, r: &mut Reader<'_>) -> Result<State> {
        let bad = |_| EngineError::CorruptStream("truncated partial state".into());
        Ok(match f {
            AggFunc::Count => State::Count(r.varint().map_err(bad)?),
            AggFunc::Sum => State::Sum(decode_any(r)?),
            AggFunc::Min => State::Min(decode_any(r)?),
            AggFunc::Max => State::Max(decode_any(r)?),
            AggFunc::Avg | AggFunc::Stddev => {
                let n = r.varint().map_err(bad)?;
                let mean = f64::from_le_bytes(r.array().map_err(bad)?);
                let m2 = f64::from_le_bytes(r.array().map_err(bad)?);
                State::Moments(n, mean, m2)
            }
            AggFunc::HllCount => match Sketch::from_bytes(r.bytes().map_err(bad)?).map_err(EngineError::CorruptStream)? {
                Sketch::Hll(h) => State::Hll(h),
                _ => return Err(EngineError::CorruptStream("expected hll registers".into())),
            },
        })
    }
}

/// Groups in order of first appearance.
#[derive(Default)]
struct Groups {
    index: HashMap<Vec<u8>, usize>,
    groups: Vec<(Value, Vec<State>)>,
}

impl Groups {
    fn slot(&mut self, spec: &AggSpec, key: Value) -> &mut Vec<State> {
        let kb = key.key_bytes();
        let i = match self.index.get(&kb) {
            Some(&i) => i,
            None => {
                self.groups.push((key, spec.calls.iter().map(|c| State::new(c.func)).collect()));
                self.index.insert(kb, self.groups.len() - 1);
                self.groups.len() - 1
            }
        };
        &mut self.groups[i].1
    }
}

fn group_key(spec: &AggSpec, r: &Record, env: &mut Env<'_>) -> Result<Value> {
    match &spec.key {
        None => Ok(Value::Null),
        Some(k) => match apply_lambda(k, Value::Record(r.clone()), env)? {
            v @ Value::Record(_) => Ok(v),
            v => Err(EngineError::Type(format!("aggregate key must be a record, found {}", v.type_name()))),
        },
    }
}

/// Folds records into partial-state records, one per group.
pub(crate) fn partial(spec: &AggSpec, records: Vec<Record>, env: &mut Env<'_>) -> Result<Vec<Record>> {
    let mut g = Groups::default();
    for r in records {
        let key = group_key(spec, &r, env)?;
        let rv = Value::Record(r);
        let mut vals = Vec::with_capacity(spec.calls.len());
        for c in &spec.calls {
            vals.push(match &c.arg {
                None => None,
                Some(a) => {
                    env.push(&spec.param, rv.clone());
                    let v = eval_expr(a, env);
                    env.pop();
                    Some(v?)
                }
            });
        }
        let states = g.slot(spec, key);
        for ((s, c), v) in states.iter_mut().zip(&spec.calls).zip(vals) {
            s.update(c.func, v)?;
        }
    }
    Ok(g
        .groups
        .into_iter()
        .map(|(key, states)| {
            let mut buf = Vec::new();
            for s in &states {
                s.encode(&mut buf);
            }
            let mut r = Record::with_capacity(2);
            r.set("key", key);
            r.set("state", Value::Bytes(Arc::from(buf)));
            r
        })
        .collect())
}

/// Merges partial records by key and evaluates the finalizer per group.
pub(crate) fn finalize(spec: &AggSpec, partials: Vec<Record>, env: &mut Env<'_>) -> Result<Vec<Record>> {
    let mut g = Groups::default();
    for p in partials {
        let key = p.get("key").cloned().unwrap_or(Value::Null);
        let Some(Value::Bytes(b)) = p.get("state") else {
            return Err(EngineError::CorruptStream("partial record without state".into()));
        };
        let mut rd = Reader::new(b);
        let incoming = spec.calls.iter().map(|c| State::decode(c.func, &mut rd)).collect::<Result<Vec<_>>>()?;
        let states = g.slot(spec, key);
        for (s, o) in states.iter_mut().zip(incoming) {
            s.merge(o)?;
        }
    }
    let mut out = Vec::with_capacity(g.groups.len());
    for (key, states) in g.groups {
        let depth = env.depth();
        for (i, (s, c)) in states.into_iter().zip(&spec.calls).enumerate() {
            env.push(&agg_slot(i), s.finish(c.func));
        }
        let fin = eval_expr(&spec.finalizer, env);
        env.truncate(depth);
        let mut rec = match key {
            Value::Record(k) => k,
            _ => Record::new(),
        };
        match fin? {
            Value::Record(f) => {
                for (n, v) in f.iter() {
                    rec.set(n, v.clone());
                }
            }
            v => return Err(WflError::Type(format!("aggregate output must be a record, found {}", v.type_name())).into()),
        }
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wfl::{parse_expr, EvalContext};
    use rand::{Rng, SeedableRng};

    fn lambda(src: &str) -> Lambda {
        match parse_expr(src).unwrap() {
            Expr::Lambda(l) => *l,
            e => panic!("{e:?}"),
        }
    }

    fn rec(g: i64, x: f64) -> Record {
        Record::from_pairs([("g", Value::Int(g)), ("x", Value::Double(x))])
    }

    #[test]
    fn avg_of_two_and_four() {
        let spec = AggSpec::new(None, &lambda("p => {a: avg(p.x), n: count()}")).unwrap();
        let ctx = EvalContext::default();
        let mut env = Env::new(&ctx);
        let p = partial(&spec, vec![rec(0, 2.0), rec(0, 4.0)], &mut env).unwrap();
        let out = finalize(&spec, p, &mut env).unwrap();
        assert_eq!(out, vec![Record::from_pairs([("a", Value::Double(3.0)), ("n", Value::Uint(2))])]);
    }

    #[test]
    fn empty_input_gives_no_groups() {
        let spec = AggSpec::new(None, &lambda("p => {n: count()}")).unwrap();
        let ctx = EvalContext::default();
        let mut env = Env::new(&ctx);
        assert!(finalize(&spec, partial(&spec, vec![], &mut env).unwrap(), &mut env).unwrap().is_empty());
    }

    #[test]
    fn split_merge_matches_single_pass_builtins() {
        let spec = AggSpec::new(
            Some(&lambda("p => {g: p.g}")),
            &lambda("p => {s: stddev(p.x), a: avg(p.x), t: sum(p.x), lo: min(p.x), hi: max(p.x), c: count(p.x)}"),
        )
        .unwrap();
        let ctx = EvalContext::default();
        let mut env = Env::new(&ctx);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let recs: Vec<Record> = (0..rng.gen_range(1..300)).map(|_| rec(rng.gen_range(0..4), rng.gen_range(-1e3..1e3))).collect();
            let cut = rng.gen_range(0..=recs.len());
            let mut parts = partial(&spec, recs[..cut].to_vec(), &mut env).unwrap();
            parts.extend(partial(&spec, recs[cut..].to_vec(), &mut env).unwrap());
            for row in finalize(&spec, parts, &mut env).unwrap() {
                let g = row.get("g").unwrap().clone();
                let xs: Vec<Value> = recs.iter().filter(|r| r.get("g") == Some(&g)).map(|r| r.get("x").unwrap().clone()).collect();
                let xv = Value::vector(xs);
                for (field, f) in [("s", "stddev"), ("a", "avg"), ("t", "sum"), ("lo", "min"), ("hi", "max")] {
                    let want = builtins::call(f, &[xv.clone()]).unwrap().as_f64().unwrap();
                    let got = row.get(field).unwrap().as_f64().unwrap();
                    assert!((got - want).abs() <= 1e-9 * want.abs().max(1e-12), "{f}: {got} vs {want}");
                }
                assert_eq!(row.get("c"), Some(&builtins::call("count", &[xv]).unwrap()));
            }
        }
    }
}

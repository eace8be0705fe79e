// SPDX-License-Identifier: Apache-2.0

use std::collections::HashMap;
use std::sync::Arc;

use super::ast::{BinOp, Expr, Lambda, Stmt, UnOp};
use super::broadcast::{between, broadcast_apply};
use super::{builtins, Registry, Result, WflError};
use crate::geo::{project, Geometry};
use crate::value::{numeric_cmp, Record, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NullMode {
    /// Field access on null yields null.
    #[default]
    Propagate,
    /// Field access on null is a `NullAccess` error.
    Error,
}

/// Global namespace shared by every evaluation of one query.
#[derive(Clone)]
pub struct EvalContext {
    pub globals: HashMap<String, Value>,
    pub registry: Arc<Registry>,
    pub null_mode: NullMode,
}

impl Default for EvalContext {
    fn default() -> Self {
        EvalContext::new(Arc::new(Registry::new()))
    }
}

impl EvalContext {
    pub fn new(registry: Arc<Registry>) -> Self {
        EvalContext { globals: HashMap::new(), registry, null_mode: NullMode::Propagate }
    }
}

/// Local namespace stack on top of an [`EvalContext`]. Names resolve from
/// innermost local outwards, then through the optional scope record (used for
/// virtual-field expressions), then globals.
pub struct Env<'a> {
    pub ctx: &'a EvalContext,
    locals: Vec<(String, Value)>,
    scope: Option<&'a Record>,
}

impl<'a> Env<'a> {
    pub fn new(ctx: &'a EvalContext) -> Self {
        Env { ctx, locals: Vec::new(), scope: None }
    }

    pub fn with_scope(ctx: &'a EvalContext, scope: &'a Record) -> Self {
        Env { ctx, locals: Vec::new(), scope: Some(scope) }
    }

    pub fn push(&mut self, name: &str, v: Value) {
        self.locals.push((name.to_string(), v));
    }

    pub fn pop(&mut self) {
        self.locals.pop();
    }

    pub fn truncate(&mut self, n: usize) {
        self.locals.truncate(n);
    }

    pub fn depth(&self) -> usize {
        self.locals.len()
    }

    pub fn lookup(&self, name: &str) -> Option<Value> {
        if let Some((_, v)) = self.locals.iter().rev().find(|(n, _)| n == name) {
            return Some(v.clone());
        }
        if let Some(r) = self.scope {
            if let Some(v) = r.get(name) {
                return Some(v.clone());
            }
        }
        self.ctx.globals.get(name).cloned()
    }
}

pub fn apply_lambda(l: &Lambda, arg: Value, env: &mut Env<'_>) -> Result<Value> {
    env.push(&l.param, arg);
    let r = eval_expr(&l.body, env);
    env.pop();
    r
}

pub fn eval_expr(e: &Expr, env: &mut Env<'_>) -> Result<Value> {
    match e {
        Expr::Null => Ok(Value::Null),
        Expr::Bool(b) => Ok(Value::Bool(*b)),
        Expr::Int(i) => Ok(Value::Int(*i)),
        Expr::Float(f) => Ok(Value::Double(*f)),
        Expr::Str(s) => Ok(Value::str(s)),
        Expr::Ident(name, _) => match env.lookup(name) {
            Some(v) => Ok(v),
            None if env.scope.is_some() => Ok(Value::Null),
            None => Err(WflError::UnknownVariable(name.clone())),
        },
        Expr::Field(base, name) => {
            let v = eval_expr(base, env)?;
            field_access(&v, name, env.ctx.null_mode)
        }
        Expr::Index(base, idx) => {
            let b = eval_expr(base, env)?;
            let i = eval_expr(idx, env)?;
            index(&b, &i)
        }
        Expr::Unary(op, x) => {
            let v = eval_expr(x, env)?;
            unary(*op, &v)
        }
        Expr::Binary(op @ (BinOp::And | BinOp::Or), a, b, _) => {
            let l = eval_expr(a, env)?;
            match &l {
                Value::Vector(_) => {
                    let r = eval_expr(b, env)?;
                    broadcast_apply(*op, &l, &r)
                }
                Value::Bool(_) | Value::Null => {
                    let lt = l == Value::Bool(true);
                    if (*op == BinOp::And && !lt) || (*op == BinOp::Or && lt) {
                        return Ok(Value::Bool(lt));
                    }
                    let r = eval_expr(b, env)?;
                    broadcast_apply(*op, &Value::Bool(lt), &r)
                }
                _ => Err(WflError::Type(format!(
                    "operator '{}' needs bool operands, found {}",
                    op.symbol(),
                    l.type_name()
                ))),
            }
        }
        Expr::Binary(op, a, b, _) => {
            let l = eval_expr(a, env)?;
            let r = eval_expr(b, env)?;
            broadcast_apply(*op, &l, &r)
        }
        Expr::Between(x, lo, hi) => {
            let x = eval_expr(x, env)?;
            let lo = eval_expr(lo, env)?;
            let hi = eval_expr(hi, env)?;
            between(&x, &lo, &hi)
        }
        Expr::In(x, coll) => {
            let x = eval_expr(x, env)?;
            let c = eval_expr(coll, env)?;
            in_op(&x, &c)
        }
        Expr::Call { ns: Some(ns), name, args, .. } => {
            let f = env.ctx.registry.lookup(ns, name)?;
            let vals = args.iter().map(|a| eval_expr(a, env)).collect::<Result<Vec<_>>>()?;
            f(&vals)
        }
        Expr::Call { ns: None, name, args, .. } => {
            if name == "if" {
                if args.len() != 3 {
                    return Err(WflError::BadParam("if(cond, then, else) takes 3 arguments".into()));
                }
                return match eval_expr(&args[0], env)? {
                    Value::Bool(true) => eval_expr(&args[1], env),
                    Value::Bool(false) | Value::Null => eval_expr(&args[2], env),
                    v => Err(WflError::Type(format!("if() condition must be bool, found {}", v.type_name()))),
                };
            }
            let vals = args.iter().map(|a| eval_expr(a, env)).collect::<Result<Vec<_>>>()?;
            builtins::call(name, &vals)
        }
        Expr::Record(fields) => {
            let mut r = Record::with_capacity(fields.len());
            for (k, v) in fields {
                let v = eval_expr(v, env)?;
                r.push(Arc::from(k.as_str()), v);
            }
            Ok(Value::Record(r))
        }
        Expr::Array(xs) => Ok(Value::vector(
            xs.iter().map(|x| eval_expr(x, env)).collect::<Result<Vec<_>>>()?,
        )),
        Expr::SetLit(xs) => {
            let mut out: Vec<Value> = Vec::new();
            let mut keys = std::collections::HashSet::new();
            for x in xs {
                let v = eval_expr(x, env)?;
                if keys.insert(v.key_bytes()) {
                    out.push(v);
                }
            }
            Ok(Value::Set(Arc::new(out)))
        }
        Expr::DictLit(kv) => {
            let mut out: Vec<(Value, Value)> = Vec::new();
            for (k, v) in kv {
                let k = eval_expr(k, env)?;
                let v = eval_expr(v, env)?;
                let kb = k.key_bytes();
                match out.iter_mut().find(|(x, _)| x.key_bytes() == kb) {
                    Some(slot) => slot.1 = v,
                    None => out.push((k, v)),
                }
            }
            Ok(Value::Dict(Arc::new(out)))
        }
        Expr::Block(stmts) => {
            let depth = env.depth();
            let mut last = Value::Null;
            let mut result = Ok(());
            for s in stmts {
                match s {
                    Stmt::Let(n, x) => match eval_expr(x, env) {
                        Ok(v) => {
                            last = v.clone();
                            env.push(n, v);
                        }
                        Err(e) => {
                            result = Err(e);
                            break;
                        }
                    },
                    Stmt::Expr(x) => match eval_expr(x, env) {
                        Ok(v) => last = v,
                        Err(e) => {
                            result = Err(e);
                            break;
                        }
                    },
                }
            }
            env.truncate(depth);
            result.map(|_| last)
        }
        Expr::Lambda(_) => Err(WflError::Type("a lambda is not a value here".into())),
        Expr::Pipeline(_) => Err(WflError::Type("a flow can only be used as a stage argument".into())),
    }
}

pub fn field_access(v: &Value, name: &str, mode: NullMode) -> Result<Value> {
    match v {
        Value::Record(r) => Ok(r.get(name).cloned().unwrap_or(Value::Null)),
        Value::Null => match mode {
            NullMode::Propagate => Ok(Value::Null),
            NullMode::Error => Err(WflError::NullAccess(format!("field '{name}' of null"))),
        },
        Value::Vector(xs) => Ok(Value::vector(
            xs.iter().map(|x| field_access(x, name, mode)).collect::<Result<Vec<_>>>()?,
        )),
        Value::Geo(g) => match (&**g, name) {
            (Geometry::Point(p), "lat") => Ok(Value::Double(p.lat)),
            (Geometry::Point(p), "lng") => Ok(Value::Double(p.lng)),
            _ => Err(WflError::Type(format!("{} has no field '{name}'", g.kind()))),
        },
        other => Err(WflError::Type(format!("{} has no field '{name}'", other.type_name()))),
    }
}

pub fn index(b: &Value, i: &Value) -> Result<Value> {
    match (b, i) {
        (Value::Null, _) | (_, Value::Null) => Ok(Value::Null),
        (Value::Vector(xs), idx) if idx.as_i64().is_some() => {
            let k = idx.as_i64().unwrap();
            Ok(usize::try_from(k).ok().and_then(|k| xs.get(k)).cloned().unwrap_or(Value::Null))
        }
        (Value::Vector(_), Value::Vector(ks)) => Ok(Value::vector(
            ks.iter().map(|k| index(b, k)).collect::<Result<Vec<_>>>()?,
        )),
        (Value::Dict(_), Value::Vector(ks)) => Ok(Value::vector(
            ks.iter().map(|k| index(b, k)).collect::<Result<Vec<_>>>()?,
        )),
        (Value::Dict(d), k) => Ok(dict_get(d, k).unwrap_or(Value::Null)),
        (Value::Tensor(t), idx) if t.rank() == 1 && idx.as_i64().is_some() => {
            let k = idx.as_i64().unwrap();
            Ok(usize::try_from(k).ok().and_then(|k| t.data().get(k)).map(|x| Value::Double(*x)).unwrap_or(Value::Null))
        }
        (Value::Record(r), Value::Str(s)) => Ok(r.get(s).cloned().unwrap_or(Value::Null)),
        _ => Err(WflError::Type(format!("cannot index {} with {}", b.type_name(), i.type_name()))),
    }
}

fn dict_get(d: &[(Value, Value)], k: &Value) -> Option<Value> {
    d.iter().find(|(x, _)| loose_eq(x, k)).map(|(_, v)| v.clone())
}

/// Equality used by membership and dictionary lookups: numbers compare by
/// value across types, everything else structurally.
pub fn loose_eq(a: &Value, b: &Value) -> bool {
    if a.is_numeric() && b.is_numeric() {
        return match (a, b) {
            (Value::Int(_) | Value::Uint(_), Value::Int(_) | Value::Uint(_)) => {
                numeric_cmp(a, b) == std::cmp::Ordering::Equal
            }
            _ => a.as_f64() == b.as_f64(),
        };
    }
    !a.is_null() && a.key_bytes() == b.key_bytes()
}

pub fn in_op(x: &Value, coll: &Value) -> Result<Value> {
    match coll {
        Value::Null => return Ok(Value::Bool(false)),
        Value::Geo(g) => return geo_contains(g, x),
        Value::Area(a) => {
            return match x {
                Value::Vector(xs) => Ok(Value::vector(
                    xs.iter().map(|p| in_op(p, coll)).collect::<Result<Vec<_>>>()?,
                )),
                Value::Null => Ok(Value::Bool(false)),
                _ => {
                    let p = x.as_geo_point().ok_or_else(|| {
                        WflError::Type(format!("'in' area needs a point, found {}", x.type_name()))
                    })?;
                    Ok(Value::Bool(a.contains_point(project(p)?)))
                }
            }
        }
        _ => {}
    }
    if let Value::Vector(xs) = x {
        return Ok(Value::vector(xs.iter().map(|v| in_op(v, coll)).collect::<Result<Vec<_>>>()?));
    }
    if x.is_null() {
        return Ok(Value::Bool(false));
    }
    match coll {
        Value::Vector(items) | Value::Set(items) => Ok(Value::Bool(items.iter().any(|v| loose_eq(x, v)))),
        Value::Dict(d) => Ok(Value::Bool(d.iter().any(|(k, _)| loose_eq(x, k)))),
        other => Err(WflError::Type(format!("'in' is not defined for {}", other.type_name()))),
    }
}

fn geo_contains(g: &Geometry, x: &Value) -> Result<Value> {
    if let Value::Vector(xs) = x {
        return Ok(Value::vector(xs.iter().map(|p| geo_contains(g, p)).collect::<Result<Vec<_>>>()?));
    }
    if x.is_null() {
        return Ok(Value::Bool(false));
    }
    let p = x
        .as_geo_point()
        .ok_or_else(|| WflError::Type(format!("'in' {} needs a point, found {}", g.kind(), x.type_name())))?;
    project(p)?;
    Ok(Value::Bool(match g {
        Geometry::Rect(r) => r.contains(p),
        Geometry::Polygon(poly) => poly.contains(p),
        Geometry::Point(q) => project(*q)? == project(p)?,
        Geometry::Path(_) => return Err(WflError::Type("'in' is not defined for a path".into())),
    }))
}

fn unary(op: UnOp, v: &Value) -> Result<Value> {
    match (op, v) {
        (_, Value::Null) => Ok(Value::Null),
        (_, Value::Vector(xs)) => Ok(Value::vector(xs.iter().map(|x| unary(op, x)).collect::<Result<Vec<_>>>()?)),
        (UnOp::Neg, Value::Int(i)) => i.checked_neg().map(Value::Int).ok_or(WflError::Overflow("negation".into())),
        (UnOp::Neg, Value::Uint(u)) => i64::try_from(*u)
            .ok()
            .and_then(i64::checked_neg)
            .map(Value::Int)
            .ok_or(WflError::Overflow("negation".into())),
        (UnOp::Neg, Value::Float(f)) => Ok(Value::Float(-f)),
        (UnOp::Neg, Value::Double(d)) => Ok(Value::Double(-d)),
        (UnOp::Not, Value::Bool(b)) => Ok(Value::Bool(!b)),
        (op, v) => Err(WflError::Type(format!(
            "unary '{}' is not defined for {}",
            if op == UnOp::Neg { "-" } else { "not" },
            v.type_name()
        ))),
    }
}

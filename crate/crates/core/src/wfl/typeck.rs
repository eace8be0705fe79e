// SPDX-License-Identifier: Apache-2.0

//! Static types for expressions, mirroring the evaluator's rules.
//!
//! `Any` is the type of anything only known at run time. Every other type is
//! exact: a well-typed expression evaluates to a value of that type or null.

use std::collections::HashMap;

use super::agg::AggFunc;
use super::ast::{BinOp, Expr, Lambda, Stmt, UnOp};
use super::{Result, Span, WflError};
use crate::schema::{Cardinality, FieldType, Schema, SchemaNode, DEFAULT_COLSET};
use crate::value::Value;

#[derive(Debug, Clone, PartialEq)]
pub enum Ty {
    Null,
    Bool,
    Int,
    Uint,
    Float,
    Double,
    Str,
    Bytes,
    Geo,
    Area,
    Tensor,
    Sketch,
    Vector(Box<Ty>),
    Set(Box<Ty>),
    Dict(Box<Ty>, Box<Ty>),
    Record(Vec<(String, Ty)>),
    Any,
}

impl Ty {
    pub fn is_numeric(&self) -> bool {
        matches!(self, Ty::Int | Ty::Uint | Ty::Float | Ty::Double)
    }

    fn is_dynamic(&self) -> bool {
        matches!(self, Ty::Any | Ty::Null)
    }

    pub fn name(&self) -> String {
        match self {
            Ty::Null => "null".into(),
            Ty::Bool => "bool".into(),
            Ty::Int => "int".into(),
            Ty::Uint => "uint".into(),
            Ty::Float => "float".into(),
            Ty::Double => "double".into(),
            Ty::Str => "string".into(),
            Ty::Bytes => "bytes".into(),
            Ty::Geo => "geometry".into(),
            Ty::Area => "area".into(),
            Ty::Tensor => "tensor".into(),
            Ty::Sketch => "sketch".into(),
            Ty::Vector(t) => format!("vector<{}>", t.name()),
            Ty::Set(t) => format!("set<{}>", t.name()),
            Ty::Dict(k, v) => format!("dict<{}, {}>", k.name(), v.name()),
            Ty::Record(_) => "record".into(),
            Ty::Any => "any".into(),
        }
    }

    pub fn of_value(v: &Value) -> Ty {
        match v {
            Value::Null => Ty::Null,
            Value::Bool(_) => Ty::Bool,
            Value::Int(_) => Ty::Int,
            Value::Uint(_) => Ty::Uint,
            Value::Float(_) => Ty::Float,
            Value::Double(_) => Ty::Double,
            Value::Str(_) => Ty::Str,
            Value::Bytes(_) => Ty::Bytes,
            Value::Record(r) => Ty::Record(r.iter().map(|(k, v)| (k.to_string(), Ty::of_value(v))).collect()),
            Value::Vector(xs) => Ty::Vector(Box::new(unify_all(xs.iter().map(Ty::of_value)))),
            Value::Set(xs) => Ty::Set(Box::new(unify_all(xs.iter().map(Ty::of_value)))),
            Value::Dict(kv) => Ty::Dict(
                Box::new(unify_all(kv.iter().map(|(k, _)| Ty::of_value(k)))),
                Box::new(unify_all(kv.iter().map(|(_, v)| Ty::of_value(v)))),
            ),
            Value::Geo(_) => Ty::Geo,
            Value::Area(_) => Ty::Area,
            Value::Tensor(_) => Ty::Tensor,
            Value::Sketch(_) => Ty::Sketch,
        }
    }

    pub fn of_node(n: &SchemaNode) -> Ty {
        let t = match &n.ty {
            FieldType::Bool => Ty::Bool,
            FieldType::Int => Ty::Int,
            FieldType::Uint => Ty::Uint,
            FieldType::Float => Ty::Float,
            FieldType::Double => Ty::Double,
            FieldType::String => Ty::Str,
            FieldType::Bytes => Ty::Bytes,
            FieldType::Any => Ty::Any,
            FieldType::Area => Ty::Area,
            FieldType::Message(c) => Ty::Record(c.iter().map(|c| (c.name.clone(), Ty::of_node(c))).collect()),
        };
        if n.is_repeated() {
            Ty::Vector(Box::new(t))
        } else {
            t
        }
    }

    /// Record type of a schema's full records.
    pub fn of_schema(s: &Schema) -> Ty {
        Ty::Record(s.fields.iter().map(|f| (f.name.clone(), Ty::of_node(f))).collect())
    }

    /// Field type and cardinality used to store a value of this type.
    /// Types without a schema representation are stored as `any`.
    pub fn to_field(&self) -> (FieldType, Cardinality) {
        let scalar = |t: &Ty| -> FieldType {
            match t {
                Ty::Bool => FieldType::Bool,
                Ty::Int => FieldType::Int,
                Ty::Uint => FieldType::Uint,
                Ty::Float => FieldType::Float,
                Ty::Double => FieldType::Double,
                Ty::Str => FieldType::String,
                Ty::Bytes => FieldType::Bytes,
                Ty::Record(fs) => FieldType::Message(record_nodes(fs, false)),
                _ => FieldType::Any,
            }
        };
        match self {
            Ty::Vector(t) => match &**t {
                Ty::Vector(_) | Ty::Set(_) | Ty::Null | Ty::Any => (FieldType::Any, Cardinality::Singular),
                t => (scalar(t), Cardinality::Repeated),
            },
            t => (scalar(t), Cardinality::Singular),
        }
    }
}

/// Nested nodes carry no column set of their own.
fn record_nodes(fs: &[(String, Ty)], top: bool) -> Vec<SchemaNode> {
    fs.iter()
        .enumerate()
        .map(|(i, (name, t))| {
            let (ty, card) = t.to_field();
            SchemaNode {
                name: name.clone(),
                id: i as u32 + 1,
                ty,
                card,
                annotations: Vec::new(),
                colset: if top { DEFAULT_COLSET.to_string() } else { String::new() },
                virtual_expr: None,
            }
        })
        .collect()
}

/// Schema for records of a record type; non-record types are an error.
pub fn schema_of(name: &str, t: &Ty) -> Result<Schema> {
    match t {
        Ty::Record(fs) => Ok(Schema::new(name, record_nodes(fs, true))),
        other => Err(WflError::Type(format!("stage must produce records, found {}", other.name()))),
    }
}

/// Least type covering both; mismatched concrete types widen to `Any`.
pub fn unify(a: &Ty, b: &Ty) -> Ty {
    match (a, b) {
        _ if a == b => a.clone(),
        (Ty::Null, t) | (t, Ty::Null) => t.clone(),
        (Ty::Vector(x), Ty::Vector(y)) => Ty::Vector(Box::new(unify(x, y))),
        (Ty::Set(x), Ty::Set(y)) => Ty::Set(Box::new(unify(x, y))),
        (Ty::Dict(k1, v1), Ty::Dict(k2, v2)) => Ty::Dict(Box::new(unify(k1, k2)), Box::new(unify(v1, v2))),
        (Ty::Record(f), Ty::Record(g)) if f.len() == g.len() && f.iter().zip(g).all(|(x, y)| x.0 == y.0) => {
            Ty::Record(f.iter().zip(g).map(|(x, y)| (x.0.clone(), unify(&x.1, &y.1))).collect())
        }
        _ => Ty::Any,
    }
}

fn unify_all(it: impl Iterator<Item = Ty>) -> Ty {
    it.fold(Ty::Null, |acc, t| unify(&acc, &t))
}

pub struct TypeEnv {
    locals: Vec<(String, Ty)>,
    pub globals: HashMap<String, Ty>,
    span: Span,
}

impl TypeEnv {
    pub fn new(globals: HashMap<String, Ty>) -> Self {
        TypeEnv { locals: Vec::new(), globals, span: Span::default() }
    }

    pub fn from_values(globals: &HashMap<String, Value>) -> Self {
        TypeEnv::new(globals.iter().map(|(k, v)| (k.clone(), Ty::of_value(v))).collect())
    }

    pub fn push(&mut self, name: &str, t: Ty) {
        self.locals.push((name.to_string(), t));
    }

    pub fn pop(&mut self) {
        self.locals.pop();
    }

    fn lookup(&self, name: &str) -> Option<Ty> {
        self.locals
            .iter()
            .rev()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t.clone())
            .or_else(|| self.globals.get(name).cloned())
    }

    fn err(&self, msg: impl std::fmt::Display) -> WflError {
        WflError::Type(format!("{}:{}: {msg}", self.span.line, self.span.col))
    }
}

pub fn check_lambda(l: &Lambda, arg: Ty, env: &mut TypeEnv) -> Result<Ty> {
    env.push(&l.param, arg);
    let r = check_expr(&l.body, env);
    env.pop();
    r
}

fn elementwise(a: &Ty, b: &Ty, env: &TypeEnv, f: &dyn Fn(&Ty, &Ty, &TypeEnv) -> Result<Ty>) -> Result<Ty> {
    match (a, b) {
        (Ty::Vector(x), Ty::Vector(y)) => Ok(Ty::Vector(Box::new(elementwise(x, y, env, f)?))),
        (Ty::Vector(x), s) => Ok(Ty::Vector(Box::new(elementwise(x, s, env, f)?))),
        (s, Ty::Vector(y)) => Ok(Ty::Vector(Box::new(elementwise(s, y, env, f)?))),
        _ => f(a, b, env),
    }
}

fn arith_ty(op: BinOp, a: &Ty, b: &Ty, env: &TypeEnv) -> Result<Ty> {
    Ok(match (a, b) {
        (Ty::Any, _) | (_, Ty::Any) => Ty::Any,
        (Ty::Null, Ty::Null) => Ty::Null,
        (Ty::Null, t) | (t, Ty::Null) if t.is_numeric() || *t == Ty::Str => {
            if t.is_numeric() && !matches!(t, Ty::Int | Ty::Uint) {
                Ty::Double
            } else {
                t.clone()
            }
        }
        (Ty::Int, Ty::Int) => Ty::Int,
        (Ty::Uint, Ty::Uint) => Ty::Uint,
        (Ty::Str, Ty::Str) if op == BinOp::Add => Ty::Str,
        (x, y) if x.is_numeric() && y.is_numeric() => Ty::Double,
        _ => {
            return Err(env.err(format!(
                "operator '{}' is not defined for {} and {}",
                op.symbol(),
                a.name(),
                b.name()
            )))
        }
    })
}

fn cmp_ty(op: BinOp, a: &Ty, b: &Ty, env: &TypeEnv) -> Result<Ty> {
    let ok = a.is_dynamic()
        || b.is_dynamic()
        || (a.is_numeric() && b.is_numeric())
        || (a == b && (matches!(a, Ty::Str | Ty::Bool) || matches!(op, BinOp::Eq | BinOp::Ne)))
        || (matches!(op, BinOp::Eq | BinOp::Ne) && std::mem::discriminant(a) == std::mem::discriminant(b));
    if ok {
        Ok(Ty::Bool)
    } else {
        Err(env.err(format!("cannot compare {} with {} using '{}'", a.name(), b.name(), op.symbol())))
    }
}

fn logic_ty(op: BinOp, a: &Ty, b: &Ty, env: &TypeEnv) -> Result<Ty> {
    let ok = |t: &Ty| matches!(t, Ty::Bool | Ty::Null | Ty::Any);
    if ok(a) && ok(b) {
        Ok(Ty::Bool)
    } else {
        Err(env.err(format!("operator '{}' needs bool operands, found {} and {}", op.symbol(), a.name(), b.name())))
    }
}

fn field_ty(t: &Ty, name: &str, env: &TypeEnv) -> Result<Ty> {
    match t {
        Ty::Any | Ty::Null => Ok(Ty::Any),
        Ty::Record(fs) => fs
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t.clone())
            .ok_or_else(|| env.err(format!("record has no field '{name}'"))),
        Ty::Vector(e) => Ok(Ty::Vector(Box::new(field_ty(e, name, env)?))),
        Ty::Geo if name == "lat" || name == "lng" => Ok(Ty::Double),
        other => Err(env.err(format!("{} has no field '{name}'", other.name()))),
    }
}

pub fn check_expr(e: &Expr, env: &mut TypeEnv) -> Result<Ty> {
    match e {
        Expr::Null => Ok(Ty::Null),
        Expr::Bool(_) => Ok(Ty::Bool),
        Expr::Int(_) => Ok(Ty::Int),
        Expr::Float(_) => Ok(Ty::Double),
        Expr::Str(_) => Ok(Ty::Str),
        Expr::Ident(n, span) => {
            env.span = *span;
            env.lookup(n).ok_or_else(|| WflError::UnknownVariable(n.clone()))
        }
        Expr::Field(b, n) => {
            let t = check_expr(b, env)?;
            field_ty(&t, n, env)
        }
        Expr::Index(b, i) => {
            let bt = check_expr(b, env)?;
            let it = check_expr(i, env)?;
            let gather = |t: Ty| if matches!(it, Ty::Vector(_)) { Ty::Vector(Box::new(t)) } else { t };
            match &bt {
                Ty::Any | Ty::Null => Ok(Ty::Any),
                Ty::Vector(t) if matches!(it, Ty::Int | Ty::Uint | Ty::Null | Ty::Any | Ty::Vector(_)) => {
                    Ok(gather((**t).clone()))
                }
                Ty::Dict(_, v) => Ok(gather((**v).clone())),
                Ty::Record(_) => Ok(Ty::Any),
                _ => Err(env.err(format!("cannot index {} with {}", bt.name(), it.name()))),
            }
        }
        Expr::Unary(op, x) => {
            let t = check_expr(x, env)?;
            unary_ty(*op, &t, env)
        }
        Expr::Binary(op, a, b, span) => {
            let at = check_expr(a, env)?;
            let bt = check_expr(b, env)?;
            env.span = *span;
            let op = *op;
            if op.is_arith() {
                elementwise(&at, &bt, env, &|x, y, env| arith_ty(op, x, y, env))
            } else if op.is_comparison() {
                elementwise(&at, &bt, env, &|x, y, env| cmp_ty(op, x, y, env))
            } else {
                elementwise(&at, &bt, env, &|x, y, env| logic_ty(op, x, y, env))
            }
        }
        Expr::Between(x, lo, hi) => {
            let xt = check_expr(x, env)?;
            let lt = check_expr(lo, env)?;
            let ht = check_expr(hi, env)?;
            let scalar = match &xt {
                Ty::Vector(t) => (**t).clone(),
                t => t.clone(),
            };
            cmp_ty(BinOp::Ge, &scalar, &lt, env)?;
            cmp_ty(BinOp::Le, &scalar, &ht, env)?;
            Ok(if matches!(xt, Ty::Vector(_)) { Ty::Vector(Box::new(Ty::Bool)) } else { Ty::Bool })
        }
        Expr::In(x, c) => {
            let xt = check_expr(x, env)?;
            let ct = check_expr(c, env)?;
            match ct {
                Ty::Vector(_) | Ty::Set(_) | Ty::Dict(..) | Ty::Geo | Ty::Area | Ty::Any | Ty::Null => {}
                other => return Err(env.err(format!("'in' is not defined for {}", other.name()))),
            }
            Ok(if matches!(xt, Ty::Vector(_)) { Ty::Vector(Box::new(Ty::Bool)) } else { Ty::Bool })
        }
        Expr::Call { ns: Some(_), args, span, .. } => {
            for a in args {
                check_expr(a, env)?;
            }
            env.span = *span;
            Ok(Ty::Any)
        }
        Expr::Call { ns: None, name, args, span } => {
            let ts = args.iter().map(|a| check_expr(a, env)).collect::<Result<Vec<_>>>()?;
            env.span = *span;
            builtin_ty(name, &ts, env)
        }
        Expr::Record(fs) => Ok(Ty::Record(
            fs.iter().map(|(k, v)| Ok((k.clone(), check_expr(v, env)?))).collect::<Result<_>>()?,
        )),
        Expr::Array(xs) => {
            let ts = xs.iter().map(|x| check_expr(x, env)).collect::<Result<Vec<_>>>()?;
            Ok(Ty::Vector(Box::new(unify_all(ts.into_iter()))))
        }
        Expr::SetLit(xs) => {
            let ts = xs.iter().map(|x| check_expr(x, env)).collect::<Result<Vec<_>>>()?;
            Ok(Ty::Set(Box::new(unify_all(ts.into_iter()))))
        }
        Expr::DictLit(kv) => {
            let mut k = Ty::Null;
            let mut v = Ty::Null;
            for (a, b) in kv {
                k = unify(&k, &check_expr(a, env)?);
                v = unify(&v, &check_expr(b, env)?);
            }
            Ok(Ty::Dict(Box::new(k), Box::new(v)))
        }
        Expr::Block(stmts) => {
            let depth = env.locals.len();
            let mut last = Ty::Null;
            let mut out = Ok(());
            for s in stmts {
                match s {
                    Stmt::Let(n, x) => match check_expr(x, env) {
                        Ok(t) => {
                            last = t.clone();
                            env.push(n, t);
                        }
                        Err(e) => {
                            out = Err(e);
                            break;
                        }
                    },
                    Stmt::Expr(x) => match check_expr(x, env) {
                        Ok(t) => last = t,
                        Err(e) => {
                            out = Err(e);
                            break;
                        }
                    },
                }
            }
            env.locals.truncate(depth);
            out.map(|_| last)
        }
        Expr::Lambda(_) => Err(env.err("a lambda is not a value here")),
        Expr::Pipeline(_) => Err(env.err("a flow can only be used as a stage argument")),
    }
}

fn unary_ty(op: UnOp, t: &Ty, env: &TypeEnv) -> Result<Ty> {
    match (op, t) {
        (_, Ty::Any) => Ok(Ty::Any),
        (_, Ty::Null) => Ok(Ty::Null),
        (_, Ty::Vector(x)) => Ok(Ty::Vector(Box::new(unary_ty(op, x, env)?))),
        (UnOp::Neg, Ty::Int | Ty::Uint) => Ok(Ty::Int),
        (UnOp::Neg, Ty::Float) => Ok(Ty::Float),
        (UnOp::Neg, Ty::Double) => Ok(Ty::Double),
        (UnOp::Not, Ty::Bool) => Ok(Ty::Bool),
        _ => Err(env.err(format!("unary operator is not defined for {}", t.name()))),
    }
}

/// Result type of an aggregate over an argument of type `arg`.
pub fn agg_ty(f: AggFunc, arg: Option<&Ty>) -> Ty {
    let arg = arg.cloned().unwrap_or(Ty::Null);
    match f {
        AggFunc::Count | AggFunc::HllCount => Ty::Uint,
        AggFunc::Avg | AggFunc::Stddev => Ty::Double,
        AggFunc::Sum => match arg {
            Ty::Int | Ty::Uint => arg,
            Ty::Float | Ty::Double => Ty::Double,
            _ => Ty::Any,
        },
        AggFunc::Min | AggFunc::Max => match arg {
            Ty::Null => Ty::Any,
            t => t,
        },
    }
}

fn map_ty(t: &Ty, f: &dyn Fn(&Ty) -> Ty) -> Ty {
    match t {
        Ty::Vector(x) => Ty::Vector(Box::new(map_ty(x, f))),
        Ty::Null => Ty::Null,
        t => f(t),
    }
}

fn elem(t: &Ty) -> Ty {
    match t {
        Ty::Vector(x) | Ty::Set(x) => (**x).clone(),
        _ => Ty::Any,
    }
}

fn builtin_ty(name: &str, args: &[Ty], env: &TypeEnv) -> Result<Ty> {
    let a0 = args.first().cloned().unwrap_or(Ty::Null);
    Ok(match name {
        "point" | "rect" | "polygon" | "path" => Ty::Geo,
        "area_circle" | "area_path" | "area_polygon" | "area_rect" | "area_union" | "area_intersection"
        | "area_difference" => Ty::Area,
        "distance_m" | "length_m" => Ty::Double,
        "point_in_polygon" | "area_contains" | "area_intersects" | "text_match" | "contains" | "starts_with"
        | "is_null" => Ty::Bool,
        "bloom_contains" => map_ty(args.get(1).unwrap_or(&Ty::Null), &|_| Ty::Bool),
        "area_cell_count" | "len" | "count" | "hll_count" => {
            if name == "count" && args.is_empty() {
                return Err(env.err("count() without arguments is only valid inside aggregate"));
            }
            Ty::Uint
        }
        "geocode" | "reverse_geocode" | "route" => Ty::Any,
        "lower" | "upper" => map_ty(&a0, &|_| Ty::Str),
        "concat" | "substr" => Ty::Str,
        "split" => Ty::Vector(Box::new(Ty::Str)),
        "hour" | "weekday" | "parse_time" => map_ty(&a0, &|_| Ty::Int),
        "format_time" => map_ty(&a0, &|_| Ty::Str),
        "hll" | "hll_merge" | "bloom" | "interval_tree" => Ty::Sketch,
        "interval_query" => Ty::Vector(Box::new(Ty::Vector(Box::new(Ty::Double)))),
        "coalesce" => unify_all(args.iter().cloned()),
        "keys" => match &a0 {
            Ty::Dict(k, _) => Ty::Vector(k.clone()),
            Ty::Record(_) => Ty::Vector(Box::new(Ty::Str)),
            _ => Ty::Any,
        },
        "values" => match &a0 {
            Ty::Dict(_, v) => Ty::Vector(v.clone()),
            _ => Ty::Any,
        },
        "range" => Ty::Vector(Box::new(Ty::Int)),
        "sum" => match elem(&a0) {
            t @ (Ty::Int | Ty::Uint) => t,
            Ty::Float | Ty::Double => Ty::Double,
            _ => Ty::Any,
        },
        "avg" | "stddev" => Ty::Double,
        "min" | "max" => {
            if args.len() == 1 {
                elem(&a0)
            } else {
                args.iter().fold(Ty::Null, |acc, t| if acc == Ty::Null || acc == *t { t.clone() } else { Ty::Any })
            }
        }
        "abs" => map_ty(&a0, &|t| match t {
            Ty::Int | Ty::Uint | Ty::Float => t.clone(),
            Ty::Any => Ty::Any,
            _ => Ty::Double,
        }),
        "sqrt" | "exp" | "ln" | "floor" | "ceil" | "round" | "pow" => map_ty(&a0, &|_| Ty::Double),
        "int" => map_ty(&a0, &|_| Ty::Int),
        "uint" => map_ty(&a0, &|_| Ty::Uint),
        "double" => map_ty(&a0, &|_| Ty::Double),
        "float" => map_ty(&a0, &|_| Ty::Float),
        "string" => Ty::Str,
        "if" => {
            if args.len() != 3 {
                return Err(env.err("if(cond, then, else) takes 3 arguments"));
            }
            if !matches!(a0, Ty::Bool | Ty::Null | Ty::Any) {
                return Err(env.err(format!("if() condition must be bool, found {}", a0.name())));
            }
            unify(&args[1], &args[2])
        }
        _ => return Err(WflError::UnknownFunction(name.to_string())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::parse_schema;
    use crate::wfl::{eval_expr, parse_expr, Env, EvalContext};

    fn ty(src: &str) -> Result<Ty> {
        check_expr(&parse_expr(src).unwrap(), &mut TypeEnv::new(HashMap::new()))
    }

    #[test]
    fn scalar_rules() {
        assert_eq!(ty("1 + 2").unwrap(), Ty::Int);
        assert_eq!(ty("1 + 2.0").unwrap(), Ty::Double);
        assert_eq!(ty("[1, 2] * 2").unwrap(), Ty::Vector(Box::new(Ty::Int)));
        assert_eq!(ty("[1, 2] > 1").unwrap(), Ty::Vector(Box::new(Ty::Bool)));
        assert_eq!(ty("len([1])").unwrap(), Ty::Uint);
        assert!(matches!(ty("1 + \"a\""), Err(WflError::Type(_))));
        assert!(matches!(ty("\"a\" < 3"), Err(WflError::Type(_))));
        assert_eq!(ty("[1, \"a\"]").unwrap(), Ty::Vector(Box::new(Ty::Any)));
        assert_eq!(ty("{ let a = 1; a * 2.5 }").unwrap(), Ty::Double);
    }

    #[test]
    fn error_carries_location() {
        let e = ty("1 +\n  \"a\"").unwrap_err();
        assert_eq!(e, WflError::Type("1:3: operator '+' is not defined for int and string".into()));
    }

    #[test]
    fn record_types_against_schema() {
        let s = parse_schema("message T { n: int; repeated tags: string; loc: message { lat: double; lng: double; }; }")
            .unwrap();
        let mut env = TypeEnv::new(HashMap::new());
        let Expr::Lambda(l) = parse_expr("p => {k: len(p.tags), lat: p.loc.lat, t: p.tags}").unwrap() else {
            panic!()
        };
        let t = check_lambda(&l, Ty::of_schema(&s), &mut env).unwrap();
        let out = schema_of("out", &t).unwrap();
        assert_eq!(out.fields[0].ty, FieldType::Uint);
        assert_eq!(out.fields[1].ty, FieldType::Double);
        assert_eq!((out.fields[2].ty.clone(), out.fields[2].card), (FieldType::String, Cardinality::Repeated));
        let Expr::Lambda(bad) = parse_expr("p => p.nope").unwrap() else { panic!() };
        assert!(check_lambda(&bad, Ty::of_schema(&s), &mut env).is_err());
    }

    /// Static types agree with the dynamic type of evaluated values.
    #[test]
    fn static_matches_dynamic() {
        let exprs = [
            "1 + 2", "3 / 2.0", "-4", "[1, 2, 3] * 2", "\"a\" + \"b\"", "hour(3600)", "len(\"abc\")",
            "sum([1, 2])", "avg([1, 2])", "min([2.5, 1.5])", "abs(-3)", "int(2.7)", "if(true, 1, 2)",
            "{a: 1, b: [true]}", "dict{1: \"x\"}[1]", "keys(dict{\"a\": 1})", "[1, 2] in [2]", "2 between 1 and 3",
            "split(\"a,b\", \",\")", "float(1) + float(2)", "-float(1)",
        ];
        let ctx = EvalContext::default();
        for src in exprs {
            let e = parse_expr(src).unwrap();
            let st = check_expr(&e, &mut TypeEnv::new(HashMap::new())).unwrap();
            let v = eval_expr(&e, &mut Env::new(&ctx)).unwrap();
            assert_eq!(unify(&st, &Ty::of_value(&v)), st, "{src}: {st:?} vs {v:?}");
        }
    }
}

// SPDX-License-Identifier: Apache-2.0

//! Translation of `find()` predicates into index queries.
//!
//! A predicate becomes a [`QueryTemplate`] at plan time; the value side of
//! every leaf stays an expression and is evaluated when the template is
//! instantiated (once per query, or once per outer record in `sub_flow`).
//! The full predicate is always kept as a residual filter, so a template only
//! needs to select a superset of the matching documents. Leaves whose index
//! answer is approximate are tracked so that negation never turns a superset
//! into a subset.

use std::sync::Arc;

use super::{EngineError, Result};
use crate::fdb::{Bound, IndexQuery, LocationRegion, Manifest};
use crate::geo::Geometry;
use crate::schema::{FieldPath, IndexKind, Schema};
use crate::value::Value;
use crate::wfl::ast::{BinOp, Expr, UnOp};
use crate::wfl::{builtins, eval_expr, print_expr, Env};

/// Cover level used when a polygon is matched against a location index.
pub const POLYGON_COVER_LEVEL: i64 = 10;

#[derive(Debug, Clone, PartialEq)]
pub enum QueryTemplate {
    Text { path: FieldPath, text: Expr },
    /// `field == v` on a tag or range index.
    Eq { path: FieldPath, kind: IndexKind, value: Expr },
    /// `field in v` on a tag or range index, with `v` a collection.
    AnyOf { path: FieldPath, kind: IndexKind, values: Expr },
    Range { path: FieldPath, lo: Option<(Expr, bool)>, hi: Option<(Expr, bool)> },
    Location { path: FieldPath, region: Expr },
    AreaContains { path: FieldPath, point: Expr },
    AreaIntersects { path: FieldPath, area: Expr },
    And(Vec<QueryTemplate>),
    Or(Vec<QueryTemplate>),
    Not(Box<QueryTemplate>),
    All,
    Nothing,
}

/// Converts predicate `body` of `find(param => body)`.
pub fn convert_find(body: &Expr, param: &str, schema: &Schema, manifest: &Manifest) -> Result<QueryTemplate> {
    let c = Converter { param, schema, manifest };
    Ok(c.conv(body)?.0)
}

struct Converter<'a> {
    param: &'a str,
    schema: &'a Schema,
    manifest: &'a Manifest,
}

impl Converter<'_> {
    /// Template plus whether its answer is exact.
    fn conv(&self, e: &Expr) -> Result<(QueryTemplate, bool)> {
        match e {
            Expr::Bool(true) => Ok((QueryTemplate::All, true)),
            Expr::Bool(false) | Expr::Null => Ok((QueryTemplate::Nothing, true)),
            Expr::Block(_) if !matches!(e.tail(), Expr::Block(_)) => self.conv(e.tail()),
            Expr::Binary(op @ (BinOp::And | BinOp::Or), a, b, _) => {
                let (qa, ea) = self.conv(a)?;
                let (qb, eb) = self.conv(b)?;
                let mut parts = Vec::new();
                for q in [qa, qb] {
                    match (op, q) {
                        (BinOp::And, QueryTemplate::And(xs)) | (BinOp::Or, QueryTemplate::Or(xs)) => parts.extend(xs),
                        (_, q) => parts.push(q),
                    }
                }
                let q = if *op == BinOp::And { QueryTemplate::And(parts) } else { QueryTemplate::Or(parts) };
                Ok((q, ea && eb))
            }
            Expr::Unary(UnOp::Not, x) => {
                let (q, exact) = self.conv(x)?;
                if exact {
                    Ok((QueryTemplate::Not(Box::new(q)), true))
                } else {
                    // The complement of a superset is not a superset.
                    Ok((QueryTemplate::All, false))
                }
            }
            Expr::Binary(op, a, b, _) if op.is_comparison() => self.comparison(*op, a, b),
            Expr::Between(x, lo, hi) => {
                let path = self.field(x).ok_or_else(|| self.unsupported(e))?;
                self.value(lo)?;
                self.value(hi)?;
                self.require(&path, IndexKind::Range)?;
                Ok((
                    QueryTemplate::Range { path, lo: Some(((**lo).clone(), true)), hi: Some(((**hi).clone(), true)) },
                    true,
                ))
            }
            Expr::In(x, coll) => self.membership(e, x, coll),
            Expr::Call { ns: None, name, args, .. } if args.len() == 2 => match name.as_str() {
                "text_match" => {
                    let path = self.field(&args[0]).ok_or_else(|| self.unsupported(e))?;
                    self.value(&args[1])?;
                    self.require(&path, IndexKind::Text)?;
                    Ok((QueryTemplate::Text { path, text: args[1].clone() }, true))
                }
                "area_contains" => {
                    let path = self.field(&args[0]).ok_or_else(|| self.unsupported(e))?;
                    self.value(&args[1])?;
                    self.require(&path, IndexKind::Area)?;
                    Ok((QueryTemplate::AreaContains { path, point: args[1].clone() }, false))
                }
                "area_intersects" => {
                    let (f, v) = match (self.field(&args[0]), self.field(&args[1])) {
                        (Some(p), None) => (p, &args[1]),
                        (None, Some(p)) => (p, &args[0]),
                        _ => return Err(self.unsupported(e)),
                    };
                    self.value(v)?;
                    self.require(&f, IndexKind::Area)?;
                    Ok((QueryTemplate::AreaIntersects { path: f, area: v.clone() }, false))
                }
                _ => Err(self.unsupported(e)),
            },
            _ => Err(self.unsupported(e)),
        }
    }

    fn comparison(&self, op: BinOp, a: &Expr, b: &Expr) -> Result<(QueryTemplate, bool)> {
        let (path, v, op) = match (self.field(a), self.field(b)) {
            (Some(p), None) => (p, b, op),
            (None, Some(p)) => (p, a, flip(op)),
            _ => return Err(self.unsupported(&Expr::Binary(op, Box::new(a.clone()), Box::new(b.clone()), Default::default()))),
        };
        self.value(v)?;
        let node = self.schema.resolve(&path).ok_or_else(|| EngineError::UnindexedField(path.to_string()))?;
        if node.is_repeated() {
            return Err(EngineError::BadQuery(format!(
                "'{path}' is repeated; use `value in {}.{path}` in find()",
                self.param
            )));
        }
        let v = v.clone();
        match op {
            BinOp::Eq => {
                let kind = if self.has(&path, IndexKind::Tag) {
                    IndexKind::Tag
                } else {
                    self.require(&path, IndexKind::Range)?;
                    IndexKind::Range
                };
                Ok((QueryTemplate::Eq { path, kind, value: v }, true))
            }
            BinOp::Ne => {
                let kind = if self.has(&path, IndexKind::Tag) {
                    IndexKind::Tag
                } else {
                    self.require(&path, IndexKind::Range)?;
                    IndexKind::Range
                };
                // `x != v` is false for a null x, so the complement of the
                // equality set is only a superset here.
                Ok((QueryTemplate::Not(Box::new(QueryTemplate::Eq { path, kind, value: v })), false))
            }
            _ => {
                self.require(&path, IndexKind::Range)?;
                let q = match op {
                    BinOp::Lt => QueryTemplate::Range { path, lo: None, hi: Some((v, false)) },
                    BinOp::Le => QueryTemplate::Range { path, lo: None, hi: Some((v, true)) },
                    BinOp::Gt => QueryTemplate::Range { path, lo: Some((v, false)), hi: None },
                    _ => QueryTemplate::Range { path, lo: Some((v, true)), hi: None },
                };
                Ok((q, true))
            }
        }
    }

    fn membership(&self, e: &Expr, x: &Expr, coll: &Expr) -> Result<(QueryTemplate, bool)> {
        if let Some(path) = self.field(coll) {
            // `v in p.tags` or `point in p.zone`
            self.value(x)?;
            let node = self.schema.resolve(&path).ok_or_else(|| EngineError::UnindexedField(path.to_string()))?;
            if self.has(&path, IndexKind::Area) {
                return Ok((QueryTemplate::AreaContains { path, point: x.clone() }, false));
            }
            if !node.is_repeated() {
                return Err(self.unsupported(e));
            }
            let kind = if self.has(&path, IndexKind::Tag) {
                IndexKind::Tag
            } else {
                self.require(&path, IndexKind::Range)?;
                IndexKind::Range
            };
            return Ok((QueryTemplate::Eq { path, kind, value: x.clone() }, true));
        }
        let path = self.field(x).ok_or_else(|| self.unsupported(e))?;
        self.value(coll)?;
        if self.has(&path, IndexKind::Location) {
            return Ok((QueryTemplate::Location { path, region: coll.clone() }, false));
        }
        let node = self.schema.resolve(&path).ok_or_else(|| EngineError::UnindexedField(path.to_string()))?;
        if node.is_repeated() {
            return Err(self.unsupported(e));
        }
        let kind = if self.has(&path, IndexKind::Tag) {
            IndexKind::Tag
        } else {
            self.require(&path, IndexKind::Range)?;
            IndexKind::Range
        };
        Ok((QueryTemplate::AnyOf { path, kind, values: coll.clone() }, true))
    }

    /// Path of `param.a.b` when it names a schema field.
    fn field(&self, e: &Expr) -> Option<FieldPath> {
        let mut parts = Vec::new();
        let mut cur = e;
        loop {
            match cur {
                Expr::Field(b, n) => {
                    parts.push(n.as_str());
                    cur = b;
                }
                Expr::Ident(n, _) if n == self.param && !parts.is_empty() => break,
                _ => return None,
            }
        }
        parts.reverse();
        let p = FieldPath::new(&parts.join("."));
        self.schema.resolve(&p).map(|_| p)
    }

    /// Value expressions may not depend on the record being tested.
    fn value(&self, e: &Expr) -> Result<()> {
        if e.references(self.param) {
            return Err(EngineError::BadQuery(format!(
                "find(): '{}' compares record fields with each other; use filter()",
                print_expr(e)
            )));
        }
        Ok(())
    }

    fn has(&self, path: &FieldPath, kind: IndexKind) -> bool {
        self.manifest.index_for(path, kind).is_some()
    }

    fn require(&self, path: &FieldPath, kind: IndexKind) -> Result<()> {
        if self.has(path, kind) {
            Ok(())
        } else {
            Err(EngineError::UnindexedField(format!("{path} ({} index)", kind.name())))
        }
    }

    fn unsupported(&self, e: &Expr) -> EngineError {
        EngineError::BadQuery(format!("find() cannot answer '{}' from indices; use filter()", print_expr(e)))
    }
}

fn flip(op: BinOp) -> BinOp {
    match op {
        BinOp::Lt => BinOp::Gt,
        BinOp::Le => BinOp::Ge,
        BinOp::Gt => BinOp::Lt,
        BinOp::Ge => BinOp::Le,
        o => o,
    }
}

impl QueryTemplate {
    /// Evaluates the value expressions and builds the index query.
    pub fn instantiate(&self, env: &mut Env<'_>) -> Result<IndexQuery> {
        let empty = IndexQuery::Or(Vec::new());
        Ok(match self {
            QueryTemplate::All => IndexQuery::All,
            QueryTemplate::Nothing => empty,
            QueryTemplate::And(qs) => IndexQuery::And(qs.iter().map(|q| q.instantiate(env)).collect::<Result<_>>()?),
            QueryTemplate::Or(qs) => IndexQuery::Or(qs.iter().map(|q| q.instantiate(env)).collect::<Result<_>>()?),
            QueryTemplate::Not(q) => IndexQuery::Not(Box::new(q.instantiate(env)?)),
            QueryTemplate::Text { path, text } => match eval_expr(text, env)? {
                Value::Null => empty,
                Value::Str(s) => IndexQuery::TextMatch { path: path.clone(), text: s.to_string() },
                v => return Err(EngineError::Type(format!("text_match() needs a string, found {}", v.type_name()))),
            },
            QueryTemplate::Eq { path, kind, value } => {
                let v = eval_expr(value, env)?;
                eq_leaf(path, *kind, v)?
            }
            QueryTemplate::AnyOf { path, kind, values } => match eval_expr(values, env)? {
                Value::Null => empty,
                Value::Vector(xs) | Value::Set(xs) => {
                    IndexQuery::Or(xs.iter().map(|v| eq_leaf(path, *kind, v.clone())).collect::<Result<_>>()?)
                }
                Value::Dict(kv) => {
                    IndexQuery::Or(kv.iter().map(|(k, _)| eq_leaf(path, *kind, k.clone())).collect::<Result<_>>()?)
                }
                v => return Err(EngineError::Type(format!("'in' is not defined for {}", v.type_name()))),
            },
            QueryTemplate::Range { path, lo, hi } => {
                let mut bound = |b: &Option<(Expr, bool)>| -> Result<Option<Option<Bound>>> {
                    match b {
                        None => Ok(Some(None)),
                        Some((e, inclusive)) => {
                            let v = eval_expr(e, env)?;
                            if v.is_null() {
                                return Ok(None);
                            }
                            if !v.is_numeric() {
                                return Err(EngineError::Type(format!("range bound must be numeric, found {}", v.type_name())));
                            }
                            Ok(Some(Some(Bound { value: v, inclusive: *inclusive })))
                        }
                    }
                };
                match (bound(lo)?, bound(hi)?) {
                    (Some(lo), Some(hi)) => IndexQuery::Range { path: path.clone(), lo, hi },
                    _ => empty,
                }
            }
            QueryTemplate::Location { path, region } => match eval_expr(region, env)? {
                Value::Null => empty,
                Value::Area(a) => IndexQuery::LocationIn { path: path.clone(), region: LocationRegion::Area(a) },
                Value::Geo(g) => match &*g {
                    Geometry::Rect(r) => IndexQuery::LocationIn { path: path.clone(), region: LocationRegion::Rect(*r) },
                    Geometry::Polygon(_) => match builtins::call("area_polygon", &[Value::Geo(g.clone()), Value::Int(POLYGON_COVER_LEVEL)])? {
                        Value::Area(a) => IndexQuery::LocationIn { path: path.clone(), region: LocationRegion::Area(a) },
                        _ => unreachable!("area_polygon returns an area"),
                    },
                    g => return Err(EngineError::Type(format!("'in' {} is not answered by a location index", g.kind()))),
                },
                v => return Err(EngineError::Type(format!("'in' is not defined for {}", v.type_name()))),
            },
            QueryTemplate::AreaContains { path, point } => {
                let v = eval_expr(point, env)?;
                if v.is_null() {
                    return Ok(empty);
                }
                let p = v
                    .as_geo_point()
                    .ok_or_else(|| EngineError::Type(format!("area containment needs a point, found {}", v.type_name())))?;
                IndexQuery::AreaContainsPoint { path: path.clone(), point: p }
            }
            QueryTemplate::AreaIntersects { path, area } => match eval_expr(area, env)? {
                Value::Null => empty,
                Value::Area(a) => IndexQuery::AreaIntersects { path: path.clone(), area: Arc::clone(&a) },
                v => return Err(EngineError::Type(format!("area_intersects() needs an area, found {}", v.type_name()))),
            },
        })
    }

    /// Canonical text with value expressions unevaluated.
    pub fn describe(&self) -> String {
        let list = |qs: &[QueryTemplate]| qs.iter().map(|q| q.describe()).collect::<Vec<_>>().join(", ");
        let b = |x: &Option<(Expr, bool)>| match x {
            None => "-".to_string(),
            Some((e, inc)) => format!("{}{}", print_expr(e), if *inc { "=" } else { "" }),
        };
        match self {
            QueryTemplate::Text { path, text } => format!("text({path}, {})", print_expr(text)),
            QueryTemplate::Eq { path, kind, value } => format!("{}({path} = {})", kind.name(), print_expr(value)),
            QueryTemplate::AnyOf { path, kind, values } => format!("{}({path} in {})", kind.name(), print_expr(values)),
            QueryTemplate::Range { path, lo, hi } => format!("range({path}, {}, {})", b(lo), b(hi)),
            QueryTemplate::Location { path, region } => format!("location({path} in {})", print_expr(region)),
            QueryTemplate::AreaContains { path, point } => format!("area({path} contains {})", print_expr(point)),
            QueryTemplate::AreaIntersects { path, area } => format!("area({path} intersects {})", print_expr(area)),
            QueryTemplate::And(qs) => format!("and({})", list(qs)),
            QueryTemplate::Or(qs) => format!("or({})", list(qs)),
            QueryTemplate::Not(q) => format!("not({})", q.describe()),
            QueryTemplate::All => "all".into(),
            QueryTemplate::Nothing => "none".into(),
        }
    }
}

fn eq_leaf(path: &FieldPath, kind: IndexKind, v: Value) -> Result<IndexQuery> {
    match v {
        Value::Null => Ok(IndexQuery::Or(Vec::new())),
        Value::Vector(_) | Value::Set(_) | Value::Dict(_) | Value::Record(_) => Err(EngineError::Type(format!(
            "cannot look up a {} in the index on '{path}'",
            v.type_name()
        ))),
        v if kind == IndexKind::Tag => Ok(IndexQuery::TagEq { path: path.clone(), value: v }),
        v => Ok(IndexQuery::Range {
            path: path.clone(),
            lo: Some(Bound { value: v.clone(), inclusive: true }),
            hi: Some(Bound { value: v, inclusive: true }),
        }),
    }
}

// SPDX-License-Identifier: Apache-2.0

//! Built-in scalar functions.

use std::sync::Arc;

use super::sketch::{Bloom, Hll, IntervalTree, Sketch};
use super::time;
use super::{Result, WflError};
use crate::geo::{
    distance_m, project, AreaTree, CombineOp, GeoPoint, Geometry, LatLngRect, Polygon, Polyline,
    DEFAULT_MAX_LEVEL,
};
use crate::value::{Record, Value};

/// Names treated as aggregate specs inside an `aggregate` stage.
pub const AGGREGATES: &[&str] = &["count", "sum", "avg", "min", "max", "stddev", "hll_count"];

/// Every built-in callable without a namespace.
pub const NAMES: &[&str] = &[
    "abs", "area_cell_count", "area_circle", "area_contains", "area_difference", "area_intersection",
    "area_intersects", "area_path", "area_polygon", "area_rect", "area_union", "avg", "bloom",
    "bloom_contains", "ceil", "coalesce", "concat", "contains", "count", "distance_m", "double", "exp",
    "float", "floor", "format_time", "geocode", "hll", "hll_count", "hll_merge", "hour", "if", "int",
    "interval_query", "interval_tree", "is_null", "keys", "len", "length_m", "ln", "lower", "max", "min",
    "parse_time", "path", "point", "point_in_polygon", "polygon", "pow", "range", "rect",
    "reverse_geocode", "round", "route", "split", "sqrt", "starts_with", "stddev", "string", "substr",
    "sum", "text_match", "uint", "upper", "values", "weekday",
];

pub fn is_builtin(name: &str) -> bool {
    NAMES.binary_search(&name).is_ok()
}

/// Lowercase, split on non-alphanumeric characters, drop empty tokens.
pub fn text_tokens(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn bad(msg: impl Into<String>) -> WflError {
    WflError::BadParam(msg.into())
}

fn arity(name: &str, args: &[Value], lo: usize, hi: usize) -> Result<()> {
    if args.len() < lo || args.len() > hi {
        let want = if lo == hi { lo.to_string() } else { format!("{lo}..{hi}") };
        return Err(bad(format!("{name}() takes {want} arguments, got {}", args.len())));
    }
    Ok(())
}

fn num(name: &str, v: &Value) -> Result<f64> {
    v.as_f64()
        .ok_or_else(|| WflError::Type(format!("{name}() needs a number, found {}", v.type_name())))
}

fn text<'a>(name: &str, v: &'a Value) -> Result<&'a str> {
    v.as_str()
        .ok_or_else(|| WflError::Type(format!("{name}() needs a string, found {}", v.type_name())))
}

fn point(name: &str, v: &Value) -> Result<GeoPoint> {
    let p = v
        .as_geo_point()
        .ok_or_else(|| WflError::Type(format!("{name}() needs a point, found {}", v.type_name())))?;
    Ok(GeoPoint::new(p.lat, p.lng)?)
}

fn points(name: &str, v: &Value) -> Result<Vec<GeoPoint>> {
    match v {
        Value::Geo(g) => match &**g {
            Geometry::Path(p) => Ok(p.points.clone()),
            _ => Err(WflError::Type(format!("{name}() needs a list of points"))),
        },
        _ => v
            .as_slice()
            .ok_or_else(|| WflError::Type(format!("{name}() needs a list of points, found {}", v.type_name())))?
            .iter()
            .map(|p| point(name, p))
            .collect(),
    }
}

fn level(name: &str, args: &[Value], i: usize) -> Result<u8> {
    match args.get(i) {
        None | Some(Value::Null) => Ok(DEFAULT_MAX_LEVEL),
        Some(v) => {
            let l = v.as_i64().ok_or_else(|| bad(format!("{name}() level must be an integer")))?;
            u8::try_from(l)
                .ok()
                .filter(|l| *l <= crate::geo::MAX_LEVEL)
                .ok_or_else(|| bad(format!("{name}() level {l} is out of range")))
        }
    }
}

fn area<'a>(name: &str, v: &'a Value) -> Result<&'a AreaTree> {
    match v {
        Value::Area(a) => Ok(a),
        _ => Err(WflError::Type(format!("{name}() needs an area, found {}", v.type_name()))),
    }
}

fn geo<'a>(name: &str, v: &'a Value) -> Result<&'a Geometry> {
    match v {
        Value::Geo(g) => Ok(g),
        _ => Err(WflError::Type(format!("{name}() needs a geometry, found {}", v.type_name()))),
    }
}

fn sketch<'a>(name: &str, v: &'a Value) -> Result<&'a Sketch> {
    match v {
        Value::Sketch(s) => Ok(s),
        _ => Err(WflError::Type(format!("{name}() needs a sketch, found {}", v.type_name()))),
    }
}

fn as_int(name: &str, v: &Value) -> Result<i64> {
    v.as_i64()
        .ok_or_else(|| WflError::Type(format!("{name}() needs an integer, found {}", v.type_name())))
}

fn geo_value(g: Geometry) -> Value {
    Value::Geo(Arc::new(g))
}

/// Non-null numeric elements of a vector argument.
fn numbers(name: &str, v: &Value) -> Result<Vec<f64>> {
    let xs = v
        .as_slice()
        .ok_or_else(|| WflError::Type(format!("{name}() needs a vector, found {}", v.type_name())))?;
    xs.iter().filter(|x| !x.is_null()).map(|x| num(name, x)).collect()
}

/// Population standard deviation, two-pass.
pub fn population_stddev(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    Some((xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt())
}

fn extreme(name: &str, args: &[Value], want: std::cmp::Ordering) -> Result<Value> {
    let items: Vec<&Value> = if args.len() == 1 {
        match &args[0] {
            Value::Vector(xs) | Value::Set(xs) => xs.iter().collect(),
            v => return Err(WflError::Type(format!("{name}() of one argument needs a vector, found {}", v.type_name()))),
        }
    } else {
        args.iter().collect()
    };
    let mut best: Option<&Value> = None;
    for v in items.into_iter().filter(|v| !v.is_null()) {
        best = match best {
            None => Some(v),
            Some(b) => {
                let ord = if b.is_numeric() && v.is_numeric() {
                    super::broadcast::compare(super::ast::BinOp::Lt, v, b)
                        .map(|lt| if lt { std::cmp::Ordering::Less } else { std::cmp::Ordering::Greater })?
                } else if std::mem::discriminant(b) == std::mem::discriminant(v) {
                    v.total_cmp(b)
                } else {
                    return Err(WflError::Type(format!("{name}() over mixed types")));
                };
                if ord == want {
                    Some(v)
                } else {
                    Some(b)
                }
            }
        };
    }
    Ok(best.cloned().unwrap_or(Value::Null))
}

fn map1(v: &Value, f: &dyn Fn(&Value) -> Result<Value>) -> Result<Value> {
    match v {
        Value::Null => Ok(Value::Null),
        Value::Vector(xs) => Ok(Value::vector(xs.iter().map(|x| map1(x, f)).collect::<Result<Vec<_>>>()?)),
        _ => f(v),
    }
}

fn math(name: &str, v: &Value, f: fn(f64) -> f64) -> Result<Value> {
    map1(v, &|x| Ok(Value::Double(f(num(name, x)?))))
}

pub fn call(name: &str, args: &[Value]) -> Result<Value> {
    match name {
        // geometry
        "point" => {
            arity(name, args, 2, 2)?;
            Ok(Value::point(GeoPoint::new(num(name, &args[0])?, num(name, &args[1])?)?))
        }
        "rect" => {
            arity(name, args, 4, 4)?;
            let c: Vec<f64> = args.iter().map(|a| num(name, a)).collect::<Result<_>>()?;
            Ok(geo_value(Geometry::Rect(LatLngRect::new(c[0], c[1], c[2], c[3])?)))
        }
        "polygon" => {
            arity(name, args, 1, usize::MAX)?;
            let rings = args.iter().map(|r| points(name, r)).collect::<Result<Vec<_>>>()?;
            Ok(geo_value(Geometry::Polygon(Polygon::new(rings)?)))
        }
        "path" => {
            arity(name, args, 1, 1)?;
            Ok(geo_value(Geometry::Path(Polyline::new(points(name, &args[0])?)?)))
        }
        "distance_m" => {
            arity(name, args, 2, 2)?;
            if args.iter().any(Value::is_null) {
                return Ok(Value::Null);
            }
            Ok(Value::Double(distance_m(point(name, &args[0])?, point(name, &args[1])?)))
        }
        "length_m" => {
            arity(name, args, 1, 1)?;
            match &args[0] {
                Value::Null => Ok(Value::Null),
                Value::Geo(g) => match &**g {
                    Geometry::Path(p) => Ok(Value::Double(p.length_m())),
                    _ => Err(WflError::Type("length_m() needs a path".into())),
                },
                v => Ok(Value::Double(Polyline::new(points(name, v)?)?.length_m())),
            }
        }
        "point_in_polygon" => {
            arity(name, args, 2, 2)?;
            if args[0].is_null() {
                return Ok(Value::Bool(false));
            }
            let p = point(name, &args[0])?;
            match geo(name, &args[1])? {
                Geometry::Polygon(poly) => Ok(Value::Bool(poly.contains(p))),
                g => Err(WflError::Type(format!("point_in_polygon() needs a polygon, found {}", g.kind()))),
            }
        }
        "area_circle" => {
            arity(name, args, 2, 3)?;
            let c = point(name, &args[0])?;
            let r = num(name, &args[1])?;
            Ok(Value::Area(Arc::new(AreaTree::from_point_radius(c, r, level(name, args, 2)?)?)))
        }
        "area_path" => {
            arity(name, args, 2, 3)?;
            let line = Polyline::new(points(name, &args[0])?)?;
            let w = num(name, &args[1])?;
            Ok(Value::Area(Arc::new(AreaTree::from_path(&line, w, level(name, args, 2)?)?)))
        }
        "area_polygon" => {
            arity(name, args, 1, 2)?;
            let lvl = level(name, args, 1)?;
            let t = match &args[0] {
                Value::Geo(g) => match &**g {
                    Geometry::Polygon(p) => AreaTree::from_polygon(p, lvl)?,
                    g => return Err(WflError::Type(format!("area_polygon() needs a polygon, found {}", g.kind()))),
                },
                v => AreaTree::from_polygon(&Polygon::new(vec![points(name, v)?])?, lvl)?,
            };
            Ok(Value::Area(Arc::new(t)))
        }
        "area_rect" => {
            arity(name, args, 1, 2)?;
            match geo(name, &args[0])? {
                Geometry::Rect(r) => Ok(Value::Area(Arc::new(AreaTree::from_rect(r, level(name, args, 1)?)?))),
                g => Err(WflError::Type(format!("area_rect() needs a rect, found {}", g.kind()))),
            }
        }
        "area_union" | "area_intersection" | "area_difference" => {
            arity(name, args, 2, 2)?;
            let op = match name {
                "area_union" => CombineOp::Union,
                "area_intersection" => CombineOp::Intersection,
                _ => CombineOp::Difference,
            };
            Ok(Value::Area(Arc::new(area(name, &args[0])?.combine(op, area(name, &args[1])?)?)))
        }
        "area_contains" => {
            arity(name, args, 2, 2)?;
            if args.iter().any(Value::is_null) {
                return Ok(Value::Bool(false));
            }
            Ok(Value::Bool(area(name, &args[0])?.contains_point(project(point(name, &args[1])?)?)))
        }
        "area_intersects" => {
            arity(name, args, 2, 2)?;
            if args.iter().any(Value::is_null) {
                return Ok(Value::Bool(false));
            }
            Ok(Value::Bool(area(name, &args[0])?.intersects(area(name, &args[1])?)?))
        }
        "area_cell_count" => {
            arity(name, args, 1, 1)?;
            Ok(Value::Uint(area(name, &args[0])?.cell_count() as u64))
        }
        "geocode" | "reverse_geocode" | "route" => Err(WflError::NotImplemented(format!(
            "{name}() needs an external geo service, none is configured"
        ))),

        // text
        "text_match" => {
            arity(name, args, 2, 2)?;
            let want = text_tokens(text(name, &args[1])?);
            let mut have: Vec<String> = Vec::new();
            match &args[0] {
                Value::Null => return Ok(Value::Bool(false)),
                Value::Vector(xs) => {
                    for x in xs.iter().filter(|x| !x.is_null()) {
                        have.extend(text_tokens(text(name, x)?));
                    }
                }
                v => have = text_tokens(text(name, v)?),
            }
            Ok(Value::Bool(!want.is_empty() && want.iter().all(|t| have.contains(t))))
        }
        "lower" => {
            arity(name, args, 1, 1)?;
            map1(&args[0], &|v| Ok(Value::str(text("lower", v)?.to_lowercase())))
        }
        "upper" => {
            arity(name, args, 1, 1)?;
            map1(&args[0], &|v| Ok(Value::str(text("upper", v)?.to_uppercase())))
        }
        "concat" => {
            let mut s = String::new();
            for a in args.iter().filter(|a| !a.is_null()) {
                s.push_str(text(name, a)?);
            }
            Ok(Value::str(s))
        }
        "substr" => {
            arity(name, args, 2, 3)?;
            if args[0].is_null() {
                return Ok(Value::Null);
            }
            let s = text(name, &args[0])?;
            let start = usize::try_from(as_int(name, &args[1])?).map_err(|_| bad("substr() start must be >= 0"))?;
            let len = match args.get(2) {
                Some(v) => usize::try_from(as_int(name, v)?).map_err(|_| bad("substr() length must be >= 0"))?,
                None => usize::MAX,
            };
            Ok(Value::str(s.chars().skip(start).take(len).collect::<String>()))
        }
        "contains" | "starts_with" => {
            arity(name, args, 2, 2)?;
            if args[0].is_null() {
                return Ok(Value::Bool(false));
            }
            let (s, t) = (text(name, &args[0])?, text(name, &args[1])?);
            Ok(Value::Bool(if name == "contains" { s.contains(t) } else { s.starts_with(t) }))
        }
        "split" => {
            arity(name, args, 2, 2)?;
            if args[0].is_null() {
                return Ok(Value::Null);
            }
            let (s, sep) = (text(name, &args[0])?, text(name, &args[1])?);
            if sep.is_empty() {
                return Err(bad("split() separator must not be empty"));
            }
            Ok(Value::vector(s.split(sep).map(Value::str).collect()))
        }

        // time
        "hour" => {
            arity(name, args, 1, 1)?;
            map1(&args[0], &|v| Ok(Value::Int(time::hour_of_day(as_int("hour", v)?))))
        }
        "weekday" => {
            arity(name, args, 1, 1)?;
            map1(&args[0], &|v| Ok(Value::Int(time::day_of_week(as_int("weekday", v)?))))
        }
        "parse_time" => {
            arity(name, args, 1, 1)?;
            map1(&args[0], &|v| Ok(Value::Int(time::parse_time(text("parse_time", v)?)?)))
        }
        "format_time" => {
            arity(name, args, 1, 1)?;
            map1(&args[0], &|v| Ok(Value::str(time::format_time(as_int("format_time", v)?)?)))
        }

        // sketches
        "hll" => {
            arity(name, args, 1, 2)?;
            let p = match args.get(1) {
                Some(v) => u8::try_from(as_int(name, v)?).map_err(|_| bad("hll() precision out of range"))?,
                None => 14,
            };
            let mut h = Hll::new(p).map_err(bad)?;
            for v in args[0].as_slice().ok_or_else(|| WflError::Type("hll() needs a vector".into()))? {
                if !v.is_null() {
                    h.add(&v.key_bytes());
                }
            }
            Ok(Value::Sketch(Arc::new(Sketch::Hll(h))))
        }
        "hll_count" => {
            arity(name, args, 1, 1)?;
            match &args[0] {
                Value::Sketch(s) => match &**s {
                    Sketch::Hll(h) => Ok(Value::Uint(h.estimate().round() as u64)),
                    s => Err(WflError::Type(format!("hll_count() needs an hll sketch, found {}", s.kind()))),
                },
                v => match call("hll", &[v.clone()])? {
                    Value::Sketch(s) => call(name, &[Value::Sketch(s)]),
                    _ => unreachable!(),
                },
            }
        }
        "hll_merge" => {
            arity(name, args, 2, 2)?;
            match (sketch(name, &args[0])?, sketch(name, &args[1])?) {
                (Sketch::Hll(a), Sketch::Hll(b)) => {
                    let mut m = a.clone();
                    m.merge(b).map_err(bad)?;
                    Ok(Value::Sketch(Arc::new(Sketch::Hll(m))))
                }
                _ => Err(WflError::Type("hll_merge() needs two hll sketches".into())),
            }
        }
        "bloom" => {
            arity(name, args, 1, 2)?;
            let xs = args[0].as_slice().ok_or_else(|| WflError::Type("bloom() needs a vector".into()))?;
            let fpr = match args.get(1) {
                Some(v) => num(name, v)?,
                None => 0.01,
            };
            let mut b = Bloom::new(xs.len().max(1) as u64, fpr).map_err(bad)?;
            for v in xs.iter().filter(|v| !v.is_null()) {
                b.add(&v.key_bytes());
            }
            Ok(Value::Sketch(Arc::new(Sketch::Bloom(b))))
        }
        "bloom_contains" => {
            arity(name, args, 2, 2)?;
            match sketch(name, &args[0])? {
                Sketch::Bloom(b) => map1(&args[1], &|v| Ok(Value::Bool(b.contains(&v.key_bytes())))),
                s => Err(WflError::Type(format!("bloom_contains() needs a bloom sketch, found {}", s.kind()))),
            }
        }
        "interval_tree" => {
            arity(name, args, 1, 1)?;
            let xs = args[0]
                .as_slice()
                .ok_or_else(|| WflError::Type("interval_tree() needs a vector of [lo, hi] pairs".into()))?;
            let mut items = Vec::with_capacity(xs.len());
            for x in xs {
                let pair = match x {
                    Value::Record(r) => (
                        r.get("lo").map(|v| num(name, v)).transpose()?,
                        r.get("hi").map(|v| num(name, v)).transpose()?,
                    ),
                    v => match v.as_slice() {
                        Some([a, b]) => (Some(num(name, a)?), Some(num(name, b)?)),
                        _ => (None, None),
                    },
                };
                match pair {
                    (Some(a), Some(b)) => items.push((a, b)),
                    _ => return Err(bad("interval_tree() items must be [lo, hi] or {lo, hi}")),
                }
            }
            Ok(Value::Sketch(Arc::new(Sketch::Intervals(IntervalTree::build(items).map_err(bad)?))))
        }
        "interval_query" => {
            arity(name, args, 3, 3)?;
            match sketch(name, &args[0])? {
                Sketch::Intervals(t) => {
                    let (a, b) = (num(name, &args[1])?, num(name, &args[2])?);
                    Ok(Value::vector(
                        t.query(a, b)
                            .into_iter()
                            .map(|(lo, hi)| Value::vector(vec![Value::Double(lo), Value::Double(hi)]))
                            .collect(),
                    ))
                }
                s => Err(WflError::Type(format!("interval_query() needs an interval tree, found {}", s.kind()))),
            }
        }

        // nulls and collections
        "is_null" => {
            arity(name, args, 1, 1)?;
            Ok(Value::Bool(args[0].is_null()))
        }
        "coalesce" => Ok(args.iter().find(|v| !v.is_null()).cloned().unwrap_or(Value::Null)),
        "len" => {
            arity(name, args, 1, 1)?;
            Ok(match &args[0] {
                Value::Null => Value::Null,
                Value::Vector(xs) | Value::Set(xs) => Value::Uint(xs.len() as u64),
                Value::Dict(d) => Value::Uint(d.len() as u64),
                Value::Str(s) => Value::Uint(s.chars().count() as u64),
                Value::Bytes(b) => Value::Uint(b.len() as u64),
                Value::Record(r) => Value::Uint(r.len() as u64),
                v => return Err(WflError::Type(format!("len() is not defined for {}", v.type_name()))),
            })
        }
        "keys" | "values" => {
            arity(name, args, 1, 1)?;
            match &args[0] {
                Value::Null => Ok(Value::Null),
                Value::Dict(d) => Ok(Value::vector(
                    d.iter().map(|(k, v)| if name == "keys" { k.clone() } else { v.clone() }).collect(),
                )),
                Value::Record(r) => Ok(Value::vector(
                    r.iter().map(|(k, v)| if name == "keys" { Value::str(k) } else { v.clone() }).collect(),
                )),
                v => Err(WflError::Type(format!("{name}() is not defined for {}", v.type_name()))),
            }
        }
        "range" => {
            arity(name, args, 1, 2)?;
            let (a, b) = if args.len() == 1 { (0, as_int(name, &args[0])?) } else { (as_int(name, &args[0])?, as_int(name, &args[1])?) };
            if b.saturating_sub(a) > 10_000_000 {
                return Err(bad("range() is limited to 10^7 elements"));
            }
            Ok(Value::vector((a..b).map(Value::Int).collect()))
        }

        // numeric reductions over a vector argument
        "count" => {
            if args.is_empty() {
                return Err(WflError::Type("count() without arguments is only valid inside aggregate".into()));
            }
            arity(name, args, 1, 1)?;
            match &args[0] {
                Value::Vector(xs) | Value::Set(xs) => Ok(Value::Uint(xs.iter().filter(|x| !x.is_null()).count() as u64)),
                Value::Null => Ok(Value::Uint(0)),
                _ => Ok(Value::Uint(1)),
            }
        }
        "sum" => {
            arity(name, args, 1, 1)?;
            let xs = args[0]
                .as_slice()
                .ok_or_else(|| WflError::Type(format!("sum() needs a vector, found {}", args[0].type_name())))?;
            let mut acc = Value::Null;
            for x in xs.iter().filter(|x| !x.is_null()) {
                acc = if acc.is_null() {
                    num(name, x).map(|_| x.clone())?
                } else {
                    super::broadcast::scalar_binop(super::ast::BinOp::Add, &acc, x)?
                };
            }
            Ok(acc)
        }
        "avg" => {
            arity(name, args, 1, 1)?;
            let xs = numbers(name, &args[0])?;
            Ok(if xs.is_empty() { Value::Null } else { Value::Double(xs.iter().sum::<f64>() / xs.len() as f64) })
        }
        "stddev" => {
            arity(name, args, 1, 1)?;
            Ok(population_stddev(&numbers(name, &args[0])?).map(Value::Double).unwrap_or(Value::Null))
        }
        "min" => extreme(name, args, std::cmp::Ordering::Less),
        "max" => extreme(name, args, std::cmp::Ordering::Greater),

        // math
        "abs" => {
            arity(name, args, 1, 1)?;
            map1(&args[0], &|v| match v {
                Value::Int(i) => i.checked_abs().map(Value::Int).ok_or(WflError::Overflow("abs".into())),
                Value::Uint(_) => Ok(v.clone()),
                Value::Float(f) => Ok(Value::Float(f.abs())),
                v => Ok(Value::Double(num("abs", v)?.abs())),
            })
        }
        "sqrt" => {
            arity(name, args, 1, 1)?;
            math(name, &args[0], f64::sqrt)
        }
        "exp" => {
            arity(name, args, 1, 1)?;
            math(name, &args[0], f64::exp)
        }
        "ln" => {
            arity(name, args, 1, 1)?;
            math(name, &args[0], f64::ln)
        }
        "floor" => {
            arity(name, args, 1, 1)?;
            math(name, &args[0], f64::floor)
        }
        "ceil" => {
            arity(name, args, 1, 1)?;
            math(name, &args[0], f64::ceil)
        }
        "round" => {
            arity(name, args, 1, 1)?;
            math(name, &args[0], f64::round)
        }
        "pow" => {
            arity(name, args, 2, 2)?;
            let e = num(name, &args[1])?;
            map1(&args[0], &|v| Ok(Value::Double(num("pow", v)?.powf(e))))
        }

        // conversions
        "int" => {
            arity(name, args, 1, 1)?;
            map1(&args[0], &|v| match v {
                Value::Int(_) => Ok(v.clone()),
                Value::Uint(u) => i64::try_from(*u).map(Value::Int).map_err(|_| WflError::Overflow("int()".into())),
                Value::Bool(b) => Ok(Value::Int(*b as i64)),
                Value::Str(s) => s.trim().parse::<i64>().map(Value::Int).map_err(|_| WflError::Parse(s.to_string())),
                v => {
                    let x = num("int", v)?.trunc();
                    if x.is_finite() && x >= i64::MIN as f64 && x < i64::MAX as f64 {
                        Ok(Value::Int(x as i64))
                    } else {
                        Err(WflError::Overflow("int()".into()))
                    }
                }
            })
        }
        "uint" => {
            arity(name, args, 1, 1)?;
            map1(&args[0], &|v| match v {
                Value::Uint(_) => Ok(v.clone()),
                Value::Int(i) => u64::try_from(*i).map(Value::Uint).map_err(|_| WflError::Overflow("uint()".into())),
                Value::Str(s) => s.trim().parse::<u64>().map(Value::Uint).map_err(|_| WflError::Parse(s.to_string())),
                v => {
                    let x = num("uint", v)?.trunc();
                    if x.is_finite() && x >= 0.0 && x < u64::MAX as f64 {
                        Ok(Value::Uint(x as u64))
                    } else {
                        Err(WflError::Overflow("uint()".into()))
                    }
                }
            })
        }
        "double" | "float" => {
            arity(name, args, 1, 1)?;
            let single = name == "float";
            map1(&args[0], &move |v| {
                let x = match v {
                    Value::Str(s) => s.trim().parse::<f64>().map_err(|_| WflError::Parse(s.to_string()))?,
                    Value::Bool(b) => *b as i64 as f64,
                    v => num("double", v)?,
                };
                Ok(if single { Value::Float(x as f32) } else { Value::Double(x) })
            })
        }
        "string" => {
            arity(name, args, 1, 1)?;
            Ok(match &args[0] {
                Value::Null => Value::Null,
                Value::Str(_) => args[0].clone(),
                v => Value::str(v.to_string()),
            })
        }
        "if" => Err(bad("if() is evaluated lazily by the interpreter")),
        _ => Err(WflError::UnknownFunction(name.to_string())),
    }
}

/// A `{lat, lng}` record for a point, the shape stored in point messages.
pub fn point_record(p: GeoPoint) -> Value {
    Value::Record(Record::from_pairs([("lat", Value::Double(p.lat)), ("lng", Value::Double(p.lng))]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ints(v: &[i64]) -> Value {
        Value::vector(v.iter().map(|x| Value::Int(*x)).collect())
    }

    #[test]
    fn names_are_sorted() {
        let mut sorted = NAMES.to_vec();
        sorted.sort_unstable();
        assert_eq!(sorted, NAMES);
        for a in AGGREGATES {
            assert!(is_builtin(a));
        }
    }

    #[test]
    fn tokenizer() {
        assert_eq!(text_tokens("Hello, World-42!  Ünïcode"), vec!["hello", "world", "42", "ünïcode"]);
        assert!(text_tokens(" ,, ").is_empty());
    }

    #[test]
    fn text_match_all_tokens() {
        let s = Value::str("Fresh Coffee Beans");
        assert_eq!(call("text_match", &[s.clone(), Value::str("coffee")]).unwrap(), Value::Bool(true));
        assert_eq!(call("text_match", &[s.clone(), Value::str("coffee tea")]).unwrap(), Value::Bool(false));
        assert_eq!(call("text_match", &[Value::Null, Value::str("x")]).unwrap(), Value::Bool(false));
    }

    #[test]
    fn reductions() {
        assert_eq!(call("sum", &[ints(&[1, 2, 3])]).unwrap(), Value::Int(6));
        assert_eq!(call("avg", &[ints(&[2, 4])]).unwrap(), Value::Double(3.0));
        assert_eq!(call("stddev", &[ints(&[2, 4])]).unwrap(), Value::Double(1.0));
        assert_eq!(call("min", &[ints(&[5, -1, 3])]).unwrap(), Value::Int(-1));
        assert_eq!(call("max", &[Value::Int(2), Value::Double(2.5)]).unwrap(), Value::Double(2.5));
        assert_eq!(call("count", &[Value::vector(vec![Value::Null, Value::Int(1)])]).unwrap(), Value::Uint(1));
        assert!(call("count", &[]).is_err());
        assert_eq!(call("len", &[Value::str("héllo")]).unwrap(), Value::Uint(5));
    }

    #[test]
    fn geo_helpers() {
        let a = call("point", &[Value::Double(0.0), Value::Double(0.0)]).unwrap();
        let b = call("point", &[Value::Double(0.0), Value::Double(1.0)]).unwrap();
        let d = call("distance_m", &[a.clone(), b]).unwrap().as_f64().unwrap();
        assert!((d - 111_195.0).abs() < 10.0, "{d}");
        assert!(matches!(call("geocode", &[Value::str("x")]), Err(WflError::NotImplemented(_))));
        let circle = call("area_circle", &[a.clone(), Value::Double(500.0)]).unwrap();
        assert_eq!(call("area_contains", &[circle.clone(), a]).unwrap(), Value::Bool(true));
        let far = call("point", &[Value::Double(10.0), Value::Double(10.0)]).unwrap();
        assert_eq!(call("area_contains", &[circle, far]).unwrap(), Value::Bool(false));
    }

    #[test]
    fn sketches() {
        let xs = Value::vector((0..1000).map(|i| Value::Int(i % 100)).collect());
        let est = call("hll_count", &[xs.clone()]).unwrap();
        let Value::Uint(n) = est else { panic!() };
        assert!((95..=105).contains(&n), "{n}");
        let b = call("bloom", &[xs]).unwrap();
        assert_eq!(call("bloom_contains", &[b, Value::Int(7)]).unwrap(), Value::Bool(true));
        let t = call(
            "interval_tree",
            &[Value::vector(vec![ints(&[0, 5]), ints(&[10, 20])])],
        )
        .unwrap();
        let hits = call("interval_query", &[t, Value::Int(4), Value::Int(9)]).unwrap();
        assert_eq!(hits.as_slice().unwrap().len(), 1);
    }

    #[test]
    fn time_and_conversions() {
        assert_eq!(call("hour", &[Value::Int(8 * 3600 + 59)]).unwrap(), Value::Int(8));
        assert_eq!(call("weekday", &[Value::Int(0)]).unwrap(), Value::Int(4));
        assert_eq!(call("int", &[Value::Double(-2.7)]).unwrap(), Value::Int(-2));
        assert!(call("uint", &[Value::Int(-1)]).is_err());
        assert_eq!(call("string", &[Value::Int(5)]).unwrap(), Value::str("5"));
    }
}

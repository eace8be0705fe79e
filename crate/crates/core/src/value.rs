// SPDX-License-Identifier: Apache-2.0

//! Runtime values shared by the interpreter, storage and executors.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use crate::geo::{AreaTree, GeoPoint, Geometry};
use crate::model::Tensor;
use crate::wfl::sketch::Sketch;

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Null,
    Bool(bool),
    Int(i64),
    Uint(u64),
    Float(f32),
    Double(f64),
    Str(Arc<str>),
    Bytes(Arc<[u8]>),
    Record(Record),
    /// Repeated field values and array literals.
    Vector(Arc<Vec<Value>>),
    /// Deduplicated, in insertion order.
    Set(Arc<Vec<Value>>),
    Dict(Arc<Vec<(Value, Value)>>),
    Geo(Arc<Geometry>),
    Area(Arc<AreaTree>),
    Tensor(Arc<Tensor>),
    Sketch(Arc<Sketch>),
}

impl Value {
    pub fn str(s: impl AsRef<str>) -> Value {
        Value::Str(Arc::from(s.as_ref()))
    }

    pub fn vector(v: Vec<Value>) -> Value {
        Value::Vector(Arc::new(v))
    }

    pub fn point(p: GeoPoint) -> Value {
        Value::Geo(Arc::new(Geometry::Point(p)))
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Null => "null",
            Value::Bool(_) => "bool",
            Value::Int(_) => "int",
            Value::Uint(_) => "uint",
            Value::Float(_) => "float",
            Value::Double(_) => "double",
            Value::Str(_) => "string",
            Value::Bytes(_) => "bytes",
            Value::Record(_) => "record",
            Value::Vector(_) => "vector",
            Value::Set(_) => "set",
            Value::Dict(_) => "dict",
            Value::Geo(g) => g.kind(),
            Value::Area(_) => "area",
            Value::Tensor(_) => "tensor",
            Value::Sketch(s) => s.kind(),
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, Value::Int(_) | Value::Uint(_) | Value::Float(_) | Value::Double(_))
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Value::Int(v) => Some(v as f64),
            Value::Uint(v) => Some(v as f64),
            Value::Float(v) => Some(v as f64),
            Value::Double(v) => Some(v),
            _ => None,
        }
    }

    /// Integer view for int and uint values that fit in i64.
    pub fn as_i64(&self) -> Option<i64> {
        match *self {
            Value::Int(v) => Some(v),
            Value::Uint(v) => i64::try_from(v).ok(),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_record(&self) -> Option<&Record> {
        match self {
            Value::Record(r) => Some(r),
            _ => None,
        }
    }

    /// Elements of vectors and sets.
    pub fn as_slice(&self) -> Option<&[Value]> {
        match self {
            Value::Vector(v) | Value::Set(v) => Some(v),
            _ => None,
        }
    }

    /// A point given either as a point geometry or a `{lat, lng}` record.
    pub fn as_geo_point(&self) -> Option<GeoPoint> {
        match self {
            Value::Geo(g) => g.as_point(),
            Value::Record(r) => {
                let lat = r.get("lat")?.as_f64()?;
                let lng = r.get("lng")?.as_f64()?;
                Some(GeoPoint { lat, lng })
            }
            _ => None,
        }
    }

    /// Canonical byte key used for grouping, hashing and sketches. Equal keys
    /// iff values are equal, with int and uint unified when in range.
    pub fn key_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16);
        self.write_key(&mut out);
        out
    }

    fn write_key(&self, out: &mut Vec<u8>) {
        match self {
            Value::Null => out.push(0),
            Value::Bool(b) => out.extend([1, *b as u8]),
            Value::Int(v) => {
                out.push(2);
                out.extend(v.to_be_bytes());
            }
            Value::Uint(v) => match i64::try_from(*v) {
                Ok(i) => {
                    out.push(2);
                    out.extend(i.to_be_bytes());
                }
                Err(_) => {
                    out.push(3);
                    out.extend(v.to_be_bytes());
                }
            },
            Value::Float(v) => {
                out.push(4);
                out.extend((*v as f64).to_bits().to_be_bytes());
            }
            Value::Double(v) => {
                out.push(4);
                out.extend(v.to_bits().to_be_bytes());
            }
            Value::Str(s) => {
                out.push(5);
                write_len_bytes(out, s.as_bytes());
            }
            Value::Bytes(b) => {
                out.push(6);
                write_len_bytes(out, b);
            }
            Value::Record(r) => {
                out.push(7);
                out.extend((r.len() as u32).to_be_bytes());
                for (k, v) in r.iter() {
                    write_len_bytes(out, k.as_bytes());
                    v.write_key(out);
                }
            }
            Value::Vector(v) | Value::Set(v) => {
                out.push(if matches!(self, Value::Vector(_)) { 8 } else { 9 });
                out.extend((v.len() as u32).to_be_bytes());
                for x in v.iter() {
                    x.write_key(out);
                }
            }
            Value::Dict(d) => {
                out.push(10);
                out.extend((d.len() as u32).to_be_bytes());
                for (k, v) in d.iter() {
                    k.write_key(out);
                    v.write_key(out);
                }
            }
            // Structural values fall back to their debug rendering, which is
            // deterministic for these types.
            other => {
                out.push(11);
                write_len_bytes(out, format!("{other:?}").as_bytes());
            }
        }
    }

    /// Total order used by sort: null < bool < numbers < strings < others.
    pub fn total_cmp(&self, other: &Value) -> Ordering {
        fn rank(v: &Value) -> u8 {
            match v {
                Value::Null => 0,
                Value::Bool(_) => 1,
                Value::Int(_) | Value::Uint(_) | Value::Float(_) | Value::Double(_) => 2,
                Value::Str(_) => 3,
                Value::Bytes(_) => 4,
                Value::Vector(_) | Value::Set(_) => 5,
                Value::Record(_) => 6,
                _ => 7,
            }
        }
        match (self, other) {
            (Value::Bool(a), Value::Bool(b)) => a.cmp(b),
            (a, b) if a.is_numeric() && b.is_numeric() => numeric_cmp(a, b),
            (Value::Str(a), Value::Str(b)) => a.cmp(b),
            (Value::Bytes(a), Value::Bytes(b)) => a.cmp(b),
            (Value::Vector(a) | Value::Set(a), Value::Vector(b) | Value::Set(b)) => {
                for (x, y) in a.iter().zip(b.iter()) {
                    let c = x.total_cmp(y);
                    if c != Ordering::Equal {
                        return c;
                    }
                }
                a.len().cmp(&b.len())
            }
            (Value::Record(a), Value::Record(b)) => {
                for ((ka, va), (kb, vb)) in a.iter().zip(b.iter()) {
                    let c = ka.cmp(kb).then_with(|| va.total_cmp(vb));
                    if c != Ordering::Equal {
                        return c;
                    }
                }
                a.len().cmp(&b.len())
            }
            (a, b) if rank(a) != rank(b) => rank(a).cmp(&rank(b)),
            (a, b) => a.key_bytes().cmp(&b.key_bytes()),
        }
    }
}

/// Exact comparison across numeric types. NaN sorts above everything.
pub fn numeric_cmp(a: &Value, b: &Value) -> Ordering {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => x.cmp(y),
        (Value::Uint(x), Value::Uint(y)) => x.cmp(y),
        (Value::Int(x), Value::Uint(y)) => (*x as i128).cmp(&(*y as i128)),
        (Value::Uint(x), Value::Int(y)) => (*x as i128).cmp(&(*y as i128)),
        _ => {
            let x = a.as_f64().unwrap_or(f64::NAN);
            let y = b.as_f64().unwrap_or(f64::NAN);
            x.total_cmp(&y)
        }
    }
}

fn write_len_bytes(out: &mut Vec<u8>, b: &[u8]) {
    out.extend((b.len() as u32).to_be_bytes());
    out.extend(b);
}

/// An ordered set of named fields.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Record {
    fields: Vec<(Arc<str>, Value)>,
}

impl Record {
    pub fn new() -> Self {
        Record { fields: Vec::new() }
    }

    pub fn with_capacity(n: usize) -> Self {
        Record { fields: Vec::with_capacity(n) }
    }

    pub fn from_pairs<I, K>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (K, Value)>,
        K: AsRef<str>,
    {
        let mut r = Record::new();
        for (k, v) in pairs {
            r.set(k.as_ref(), v);
        }
        r
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.fields.iter().find(|(k, _)| &**k == name).map(|(_, v)| v)
    }

    /// Sets `name`, replacing an existing value in place.
    pub fn set(&mut self, name: &str, v: Value) {
        if let Some(slot) = self.fields.iter_mut().find(|(k, _)| &**k == name) {
            slot.1 = v;
        } else {
            self.fields.push((Arc::from(name), v));
        }
    }

    pub fn push(&mut self, name: Arc<str>, v: Value) {
        self.fields.push((name, v));
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    pub fn remove(&mut self, name: &str) -> Option<Value> {
        let i = self.fields.iter().position(|(k, _)| &**k == name)?;
        Some(self.fields.remove(i).1)
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.fields.iter().map(|(k, v)| (&**k, v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.fields.iter().map(|(k, _)| &**k)
    }

    /// Follows a dotted path through nested records.
    pub fn get_path(&self, path: &str) -> Option<&Value> {
        let mut parts = path.split('.');
        let mut cur = self.get(parts.next()?)?;
        for p in parts {
            cur = cur.as_record()?.get(p)?;
        }
        Some(cur)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", crate::value::to_json(self))
    }
}

/// JSON rendering used by output formats and diagnostics.
pub fn to_json(v: &Value) -> serde_json::Value {
    use serde_json::Value as J;
    match v {
        Value::Null => J::Null,
        Value::Bool(b) => J::Bool(*b),
        Value::Int(i) => J::from(*i),
        Value::Uint(u) => J::from(*u),
        Value::Float(x) => float_json(*x as f64),
        Value::Double(x) => float_json(*x),
        Value::Str(s) => J::String(s.to_string()),
        Value::Bytes(b) => J::String(hex::encode(&**b)),
        Value::Record(r) => {
            let mut m = serde_json::Map::new();
            for (k, v) in r.iter() {
                m.insert(k.to_string(), to_json(v));
            }
            J::Object(m)
        }
        Value::Vector(xs) | Value::Set(xs) => J::Array(xs.iter().map(to_json).collect()),
        Value::Dict(d) => J::Array(
            d.iter().map(|(k, v)| J::Array(vec![to_json(k), to_json(v)])).collect(),
        ),
        Value::Geo(g) => crate::geo::geometry_to_geojson(g),
        Value::Area(a) => crate::geo::area_to_geojson(a),
        Value::Tensor(t) => serde_json::json!({"shape": t.shape(), "data": t.data()}),
        Value::Sketch(s) => J::String(format!("<{}>", s.kind())),
    }
}

fn float_json(x: f64) -> serde_json::Value {
    serde_json::Number::from_f64(x)
        .map(serde_json::Value::Number)
        .unwrap_or(serde_json::Value::Null)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_unifies_int_and_uint() {
        assert_eq!(Value::Int(5).key_bytes(), Value::Uint(5).key_bytes());
        assert_ne!(Value::Int(5).key_bytes(), Value::Double(5.0).key_bytes());
        assert_ne!(Value::str("a").key_bytes(), Value::str("b").key_bytes());
    }

    #[test]
    fn total_order() {
        let mut v = vec![
            Value::str("b"),
            Value::Double(1.5),
            Value::Null,
            Value::Int(-3),
            Value::Uint(u64::MAX),
            Value::Bool(true),
            Value::str("a"),
        ];
        v.sort_by(|a, b| a.total_cmp(b));
        assert_eq!(
            v,
            vec![
                Value::Null,
                Value::Bool(true),
                Value::Int(-3),
                Value::Double(1.5),
                Value::Uint(u64::MAX),
                Value::str("a"),
                Value::str("b"),
            ]
        );
    }

    #[test]
    fn record_paths() {
        let inner = Record::from_pairs([("lat", Value::Double(1.0)), ("lng", Value::Double(2.0))]);
        let r = Record::from_pairs([("loc", Value::Record(inner))]);
        assert_eq!(r.get_path("loc.lng"), Some(&Value::Double(2.0)));
        assert_eq!(r.get_path("loc.x"), None);
        assert_eq!(r.get("loc").unwrap().as_geo_point().unwrap().lat, 1.0);
    }
}

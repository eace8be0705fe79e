// SPDX-License-Identifier: Apache-2.0

//! Binary record encoding.
//!
//! ```text
//! record  := version(0x01) varint(n) entry*n
//! entry   := varint(field_id) varint(len) payload
//! payload := element                  (singular)
//!          | varint(count) element*   (repeated)
//! element := bool: 1 byte | int: zigzag varint | uint: varint
//!          | float: 4 bytes LE | double: 8 bytes LE
//!          | string, bytes: varint(len) bytes
//!          | message: varint(len) varint(n) entry*n
//!          | any: varint(len) tagged value
//! ```
//! Null fields are omitted. Decoders skip field ids they do not know, so a
//! pruned schema reads a subset of a full encoding.

use std::sync::Arc;

use super::{FieldType, Result, Schema, SchemaError, SchemaNode};
use crate::codec::{put_bytes, put_varint, unzigzag, zigzag, Reader, Truncated};
use crate::geo::{AreaTree, CellId, GeoPoint, Geometry, LatLngRect, Polygon, Polyline};
use crate::model::Tensor;
use crate::value::{Record, Value};
use crate::wfl::sketch::Sketch;

pub const ENCODING_VERSION: u8 = 1;

impl From<Truncated> for SchemaError {
    fn from(_: Truncated) -> Self {
        SchemaError::Decode("truncated input".into())
    }
}

/// Encodes the fields of `r` that belong to `colset` (all stored fields when
/// `None`).
pub fn encode_record(s: &Schema, r: &Record, colset: Option<&str>) -> Result<Vec<u8>> {
    if let Some(c) = colset {
        if !s.fields.iter().any(|f| f.colset == c && !f.is_virtual()) {
            return Err(SchemaError::UnknownColset(c.to_string()));
        }
    }
    let mut out = vec![ENCODING_VERSION];
    let nodes: Vec<&SchemaNode> = s
        .fields
        .iter()
        .filter(|f| !f.is_virtual() && colset.map_or(true, |c| f.colset == c))
        .collect();
    encode_entries(&nodes, r, &mut out, "")?;
    Ok(out)
}

fn encode_entries(nodes: &[&SchemaNode], r: &Record, out: &mut Vec<u8>, prefix: &str) -> Result<()> {
    for (k, _) in r.iter() {
        if !nodes.iter().any(|n| n.name == k) && !prefix.is_empty() {
            return Err(SchemaError::UnknownField(format!("{prefix}.{k}")));
        }
    }
    let present: Vec<(&SchemaNode, &Value)> = nodes
        .iter()
        .filter_map(|n| r.get(&n.name).filter(|v| !v.is_null()).map(|v| (*n, v)))
        .collect();
    put_varint(out, present.len() as u64);
    let mut payload = Vec::new();
    for (n, v) in present {
        let path = if prefix.is_empty() { n.name.clone() } else { format!("{prefix}.{}", n.name) };
        payload.clear();
        if n.is_repeated() {
            let items = v.as_slice().ok_or_else(|| SchemaError::CardinalityMismatch {
                path: path.clone(),
                msg: format!("expected a vector, found {}", v.type_name()),
            })?;
            put_varint(&mut payload, items.len() as u64);
            for (i, x) in items.iter().enumerate() {
                encode_element(n, x, &mut payload, &format!("{path}[{i}]"))?;
            }
        } else {
            encode_element(n, v, &mut payload, &path)?;
        }
        put_varint(out, n.id as u64);
        put_bytes(out, &payload);
    }
    Ok(())
}

fn encode_element(n: &SchemaNode, v: &Value, out: &mut Vec<u8>, path: &str) -> Result<()> {
    let bad = || SchemaError::TypeMismatch {
        path: path.into(),
        expected: n.ty.name().into(),
        found: v.type_name().into(),
    };
    match (&n.ty, v) {
        (FieldType::Bool, Value::Bool(b)) => out.push(*b as u8),
        (FieldType::Int, Value::Int(i)) => put_varint(out, zigzag(*i)),
        (FieldType::Uint, Value::Uint(u)) => put_varint(out, *u),
        (FieldType::Float, Value::Float(f)) => out.extend(f.to_le_bytes()),
        (FieldType::Double, Value::Double(d)) => out.extend(d.to_le_bytes()),
        (FieldType::String, Value::Str(s)) => put_bytes(out, s.as_bytes()),
        (FieldType::Bytes, Value::Bytes(b)) => put_bytes(out, b),
        (FieldType::Any | FieldType::Area, v) => {
            let mut buf = Vec::new();
            encode_any(v, &mut buf);
            put_bytes(out, &buf);
        }
        (FieldType::Message(children), Value::Record(r)) => {
            let nodes: Vec<&SchemaNode> = children.iter().collect();
            let mut buf = Vec::new();
            encode_entries(&nodes, r, &mut buf, path)?;
            put_bytes(out, &buf);
        }
        (FieldType::Message(_), Value::Geo(_)) if n.is_point_message() => {
            let p = v.as_geo_point().ok_or_else(bad)?;
            let r = Record::from_pairs([("lat", Value::Double(p.lat)), ("lng", Value::Double(p.lng))]);
            return encode_element(n, &Value::Record(r), out, path);
        }
        _ => return Err(bad()),
    }
    Ok(())
}

/// Decodes an encoding produced by [`encode_record`]. Fields whose ids are
/// not in `s` are skipped.
pub fn decode_record(s: &Schema, bytes: &[u8]) -> Result<Record> {
    let mut r = Reader::new(bytes);
    let v = r.byte()?;
    if v != ENCODING_VERSION {
        return Err(SchemaError::Decode(format!("unsupported encoding version {v}")));
    }
    let rec = decode_entries(&s.fields, &mut r)?;
    if !r.is_empty() {
        return Err(SchemaError::Decode("trailing bytes".into()));
    }
    Ok(rec)
}

fn decode_entries(nodes: &[SchemaNode], r: &mut Reader<'_>) -> Result<Record> {
    let n = r.varint()?;
    let mut out = Record::with_capacity(nodes.len().min(n as usize));
    for _ in 0..n {
        let id = r.varint()?;
        let payload = r.bytes()?;
        let Some(node) = nodes.iter().find(|x| x.id as u64 == id) else { continue };
        let mut p = Reader::new(payload);
        let v = if node.is_repeated() {
            let count = p.varint()?;
            if count > payload.len() as u64 {
                return Err(SchemaError::Decode("bad element count".into()));
            }
            let mut items = Vec::with_capacity(count as usize);
            for _ in 0..count {
                items.push(decode_element(node, &mut p)?);
            }
            Value::vector(items)
        } else {
            decode_element(node, &mut p)?
        };
        if !p.is_empty() {
            return Err(SchemaError::Decode(format!("trailing bytes in field '{}'", node.name)));
        }
        out.push(Arc::from(node.name.as_str()), v);
    }
    Ok(out)
}

fn decode_element(n: &SchemaNode, r: &mut Reader<'_>) -> Result<Value> {
    Ok(match &n.ty {
        FieldType::Bool => match r.byte()? {
            0 => Value::Bool(false),
            1 => Value::Bool(true),
            b => return Err(SchemaError::Decode(format!("bad bool byte {b}"))),
        },
        FieldType::Int => Value::Int(unzigzag(r.varint()?)),
        FieldType::Uint => Value::Uint(r.varint()?),
        FieldType::Float => Value::Float(f32::from_le_bytes(r.array()?)),
        FieldType::Double => Value::Double(f64::from_le_bytes(r.array()?)),
        FieldType::String => {
            let b = r.bytes()?;
            Value::str(std::str::from_utf8(b).map_err(|_| SchemaError::Decode("bad utf-8".into()))?)
        }
        FieldType::Bytes => Value::Bytes(Arc::from(r.bytes()?)),
        FieldType::Any | FieldType::Area => {
            let b = r.bytes()?;
            let mut inner = Reader::new(b);
            let v = decode_any(&mut inner)?;
            if !inner.is_empty() {
                return Err(SchemaError::Decode("trailing bytes in dynamic value".into()));
            }
            v
        }
        FieldType::Message(children) => {
            let b = r.bytes()?;
            let mut inner = Reader::new(b);
            let rec = decode_entries(children, &mut inner)?;
            if !inner.is_empty() {
                return Err(SchemaError::Decode(format!("trailing bytes in '{}'", n.name)));
            }
            Value::Record(rec)
        }
    })
}

mod tag {
    pub const NULL: u8 = 0;
    pub const BOOL: u8 = 1;
    pub const INT: u8 = 2;
    pub const UINT: u8 = 3;
    pub const FLOAT: u8 = 4;
    pub const DOUBLE: u8 = 5;
    pub const STR: u8 = 6;
    pub const BYTES: u8 = 7;
    pub const RECORD: u8 = 8;
    pub const VECTOR: u8 = 9;
    pub const SET: u8 = 10;
    pub const DICT: u8 = 11;
    pub const GEO: u8 = 12;
    pub const AREA: u8 = 13;
    pub const TENSOR: u8 = 14;
    pub const SKETCH: u8 = 15;
}

fn put_points(out: &mut Vec<u8>, pts: &[GeoPoint]) {
    put_varint(out, pts.len() as u64);
    for p in pts {
        out.extend(p.lat.to_le_bytes());
        out.extend(p.lng.to_le_bytes());
    }
}

fn get_points(r: &mut Reader<'_>) -> Result<Vec<GeoPoint>> {
    let n = r.varint()?;
    if n > r.remaining().len() as u64 {
        return Err(SchemaError::Decode("bad point count".into()));
    }
    (0..n)
        .map(|_| {
            let lat = f64::from_le_bytes(r.array()?);
            let lng = f64::from_le_bytes(r.array()?);
            Ok(GeoPoint { lat, lng })
        })
        .collect()
}

/// Self-describing encoding of any value.
pub fn encode_any(v: &Value, out: &mut Vec<u8>) {
    match v {
        Value::Null => out.push(tag::NULL),
        Value::Bool(b) => out.extend([tag::BOOL, *b as u8]),
        Value::Int(i) => {
            out.push(tag::INT);
            put_varint(out, zigzag(*i));
        }
        Value::Uint(u) => {
            out.push(tag::UINT);
            put_varint(out, *u);
        }
        Value::Float(f) => {
            out.push(tag::FLOAT);
            out.extend(f.to_le_bytes());
        }
        Value::Double(d) => {
            out.push(tag::DOUBLE);
            out.extend(d.to_le_bytes());
        }
        Value::Str(s) => {
            out.push(tag::STR);
            put_bytes(out, s.as_bytes());
        }
        Value::Bytes(b) => {
            out.push(tag::BYTES);
            put_bytes(out, b);
        }
        Value::Record(r) => {
            out.push(tag::RECORD);
            put_varint(out, r.len() as u64);
            for (k, v) in r.iter() {
                put_bytes(out, k.as_bytes());
                encode_any(v, out);
            }
        }
        Value::Vector(xs) | Value::Set(xs) => {
            out.push(if matches!(v, Value::Vector(_)) { tag::VECTOR } else { tag::SET });
            put_varint(out, xs.len() as u64);
            for x in xs.iter() {
                encode_any(x, out);
            }
        }
        Value::Dict(d) => {
            out.push(tag::DICT);
            put_varint(out, d.len() as u64);
            for (k, v) in d.iter() {
                encode_any(k, out);
                encode_any(v, out);
            }
        }
        Value::Geo(g) => {
            out.push(tag::GEO);
            match &**g {
                Geometry::Point(p) => {
                    out.push(0);
                    put_points(out, &[*p]);
                }
                Geometry::Rect(r) => {
                    out.push(1);
                    put_points(out, &[r.sw, r.ne]);
                }
                Geometry::Polygon(p) => {
                    out.push(2);
                    put_varint(out, p.rings.len() as u64);
                    for ring in &p.rings {
                        put_points(out, ring);
                    }
                }
                Geometry::Path(p) => {
                    out.push(3);
                    put_points(out, &p.points);
                }
            }
        }
        Value::Area(a) => {
            out.push(tag::AREA);
            out.push(a.max_level());
            let cells = a.cells();
            put_varint(out, cells.len() as u64);
            for c in cells {
                out.push(c.level);
                out.extend(c.code.to_be_bytes());
            }
        }
        Value::Tensor(t) => {
            out.push(tag::TENSOR);
            put_varint(out, t.shape().len() as u64);
            for d in t.shape() {
                put_varint(out, *d as u64);
            }
            for x in t.data() {
                out.extend(x.to_le_bytes());
            }
        }
        Value::Sketch(s) => {
            out.push(tag::SKETCH);
            put_bytes(out, &s.to_bytes());
        }
    }
}

pub fn decode_any(r: &mut Reader<'_>) -> Result<Value> {
    let bad = |m: &str| SchemaError::Decode(m.to_string());
    let check_len = |n: u64, r: &Reader<'_>| {
        if n > r.remaining().len() as u64 {
            Err(SchemaError::Decode("bad length".into()))
        } else {
            Ok(n as usize)
        }
    };
    Ok(match r.byte()? {
        tag::NULL => Value::Null,
        tag::BOOL => Value::Bool(r.byte()? != 0),
        tag::INT => Value::Int(unzigzag(r.varint()?)),
        tag::UINT => Value::Uint(r.varint()?),
        tag::FLOAT => Value::Float(f32::from_le_bytes(r.array()?)),
        tag::DOUBLE => Value::Double(f64::from_le_bytes(r.array()?)),
        tag::STR => Value::str(std::str::from_utf8(r.bytes()?).map_err(|_| bad("bad utf-8"))?),
        tag::BYTES => Value::Bytes(Arc::from(r.bytes()?)),
        tag::RECORD => {
            let n = r.varint()?;
            let n = check_len(n, r)?;
            let mut rec = Record::with_capacity(n);
            for _ in 0..n {
                let k = std::str::from_utf8(r.bytes()?).map_err(|_| bad("bad utf-8"))?.to_string();
                let v = decode_any(r)?;
                rec.push(Arc::from(k), v);
            }
            Value::Record(rec)
        }
        t @ (tag::VECTOR | tag::SET) => {
            let n = r.varint()?;
            let n = check_len(n, r)?;
            let xs = (0..n).map(|_| decode_any(r)).collect::<Result<Vec<_>>>()?;
            if t == tag::VECTOR {
                Value::vector(xs)
            } else {
                Value::Set(Arc::new(xs))
            }
        }
        tag::DICT => {
            let n = r.varint()?;
            let n = check_len(n, r)?;
            let mut d = Vec::with_capacity(n);
            for _ in 0..n {
                let k = decode_any(r)?;
                let v = decode_any(r)?;
                d.push((k, v));
            }
            Value::Dict(Arc::new(d))
        }
        tag::GEO => {
            let g = match r.byte()? {
                0 => Geometry::Point(*get_points(r)?.first().ok_or_else(|| bad("empty point"))?),
                1 => {
                    let p = get_points(r)?;
                    if p.len() != 2 {
                        return Err(bad("rect needs two corners"));
                    }
                    Geometry::Rect(LatLngRect { sw: p[0], ne: p[1] })
                }
                2 => {
                    let n = r.varint()?;
                    let n = check_len(n, r)?;
                    let rings = (0..n).map(|_| get_points(r)).collect::<Result<Vec<_>>>()?;
                    Geometry::Polygon(Polygon::new(rings).map_err(|e| bad(&e.to_string()))?)
                }
                3 => Geometry::Path(Polyline::new(get_points(r)?).map_err(|e| bad(&e.to_string()))?),
                _ => return Err(bad("unknown geometry kind")),
            };
            Value::Geo(Arc::new(g))
        }
        tag::AREA => {
            let level = r.byte()?;
            let n = r.varint()?;
            let n = check_len(n, r)?;
            let mut cells = Vec::with_capacity(n);
            for _ in 0..n {
                let lv = r.byte()?;
                let code = u64::from_be_bytes(r.array()?);
                if lv > level {
                    return Err(bad("cell deeper than tree level"));
                }
                cells.push(CellId { level: lv, code });
            }
            Value::Area(Arc::new(AreaTree::from_cells(level, &cells)))
        }
        tag::TENSOR => {
            let nd = r.varint()?;
            let nd = check_len(nd, r)?;
            let shape = (0..nd)
                .map(|_| Ok(r.varint()? as usize))
                .collect::<Result<Vec<usize>>>()?;
            let len: usize = shape.iter().product();
            check_len((len as u64).saturating_mul(8), r)?;
            let data = (0..len)
                .map(|_| Ok(f64::from_le_bytes(r.array()?)))
                .collect::<Result<Vec<f64>>>()?;
            Value::Tensor(Arc::new(Tensor::new(shape, data).map_err(|e| bad(&e.to_string()))?))
        }
        tag::SKETCH => {
            let b = r.bytes()?;
            Value::Sketch(Arc::new(Sketch::from_bytes(b).map_err(|e| bad(&e))?))
        }
        t => return Err(SchemaError::Decode(format!("unknown value tag {t}"))),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{parse_schema, prune_schema, validate_json, FieldPath};
    use rand::{Rng, SeedableRng};
    use serde_json::json;

    fn schema() -> Schema {
        parse_schema(
            "message T {
               id: int;
               u: uint [colset=b];
               f: float [colset=b];
               d: double;
               s: string;
               ok: bool;
               repeated xs: int;
               repeated names: string [colset=b];
               loc: message { lat: double; lng: double; };
               repeated pts: message { lat: double; lng: double; } [colset=b];
               dyn: any;
             }",
        )
        .unwrap()
    }

    #[test]
    fn all_null_is_header_only() {
        let s = schema();
        assert_eq!(encode_record(&s, &Record::new(), None).unwrap(), vec![1, 0]);
        assert_eq!(decode_record(&s, &[1, 0]).unwrap(), Record::new());
    }

    #[test]
    fn repeated_ints_keep_order() {
        let s = schema();
        let r = validate_json(&s, &json!({"xs": [3, -1, 2]})).unwrap();
        let b = encode_record(&s, &r, Some("default")).unwrap();
        assert_eq!(decode_record(&s, &b).unwrap(), r);
        // id 7, len 4, count 3, zigzag(3)=6, zigzag(-1)=1, zigzag(2)=4
        assert_eq!(b, vec![1, 1, 7, 4, 3, 6, 1, 4]);
    }

    #[test]
    fn unknown_colset() {
        let s = schema();
        assert_eq!(
            encode_record(&s, &Record::new(), Some("zzz")),
            Err(SchemaError::UnknownColset("zzz".into()))
        );
    }

    fn random_value(rng: &mut impl Rng, depth: u32) -> Value {
        match rng.gen_range(0..if depth > 2 { 7 } else { 10 }) {
            0 => Value::Null,
            1 => Value::Bool(rng.gen()),
            2 => Value::Int(rng.gen()),
            3 => Value::Uint(rng.gen()),
            4 => Value::Float(f32::from_bits(rng.gen())),
            5 => Value::Double(f64::from_bits(rng.gen())),
            6 => Value::str(format!("s{}", rng.gen::<u16>())),
            7 => Value::vector((0..rng.gen_range(0..4)).map(|_| random_value(rng, depth + 1)).collect()),
            8 => Value::Record(Record::from_pairs(
                (0..rng.gen_range(0..3)).map(|i| (format!("k{i}"), random_value(rng, depth + 1))),
            )),
            _ => Value::Dict(Arc::new(vec![(Value::Int(1), random_value(rng, depth + 1))])),
        }
    }

    pub(crate) fn random_record(rng: &mut impl Rng) -> Record {
        let mut r = Record::new();
        let p = |rng: &mut dyn rand::RngCore| {
            Value::Record(Record::from_pairs([
                ("lat", Value::Double(rng.gen_range(-80.0..80.0))),
                ("lng", Value::Double(rng.gen_range(-180.0..180.0))),
            ]))
        };
        if rng.gen_bool(0.8) {
            r.set("id", Value::Int(rng.gen()));
        }
        if rng.gen_bool(0.5) {
            r.set("u", Value::Uint(rng.gen()));
        }
        if rng.gen_bool(0.5) {
            r.set("f", Value::Float(rng.gen::<f32>() * 1e6 - 5e5));
        }
        if rng.gen_bool(0.5) {
            r.set("d", Value::Double(f64::from_bits(rng.gen())));
        }
        if rng.gen_bool(0.5) {
            r.set("s", Value::str("é".repeat(rng.gen_range(0..5))));
        }
        if rng.gen_bool(0.5) {
            r.set("ok", Value::Bool(rng.gen()));
        }
        if rng.gen_bool(0.5) {
            r.set("xs", Value::vector((0..rng.gen_range(0..5)).map(|_| Value::Int(rng.gen())).collect()));
        }
        if rng.gen_bool(0.5) {
            r.set("names", Value::vector(vec![Value::str("a"), Value::str("")]));
        }
        if rng.gen_bool(0.5) {
            r.set("loc", p(rng));
        }
        if rng.gen_bool(0.5) {
            let n = rng.gen_range(0..3);
            r.set("pts", Value::vector((0..n).map(|_| p(rng)).collect()));
        }
        if rng.gen_bool(0.5) {
            r.set("dyn", random_value(rng, 0));
        }
        validate_record(&schema(), &r).unwrap()
    }

    use crate::schema::validate_record;

    fn same_bits(a: &Record, b: &Record) -> bool {
        // NaN payloads must survive, so compare canonical keys.
        Value::Record(a.clone()).key_bytes() == Value::Record(b.clone()).key_bytes()
    }

    #[test]
    fn random_round_trip_per_colset() {
        let s = schema();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10_000 {
            let r = random_record(&mut rng);
            let full = decode_record(&s, &encode_record(&s, &r, None).unwrap()).unwrap();
            assert!(same_bits(&full, &r));
            let mut merged = Record::new();
            for c in s.colsets() {
                let part = decode_record(&s, &encode_record(&s, &r, Some(&c)).unwrap()).unwrap();
                for (k, v) in part.iter() {
                    assert_eq!(s.field(k).unwrap().colset, c);
                    merged.set(k, v.clone());
                }
            }
            let reordered = Record::from_pairs(
                s.fields.iter().filter_map(|f| merged.get(&f.name).map(|v| (f.name.clone(), v.clone()))),
            );
            assert!(same_bits(&reordered, &r));
        }
    }

    #[test]
    fn pruned_decode_agrees_on_retained_paths() {
        let s = schema();
        let pruned = prune_schema(&s, &[FieldPath::new("loc.lat"), FieldPath::new("xs")]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(22);
        for _ in 0..500 {
            let r = random_record(&mut rng);
            let b = encode_record(&s, &r, None).unwrap();
            let full = decode_record(&s, &b).unwrap();
            let part = decode_record(&pruned, &b).unwrap();
            assert_eq!(part.get("xs"), full.get("xs"));
            assert_eq!(part.get_path("loc.lat"), full.get_path("loc.lat"));
            assert!(part.get("id").is_none() && part.get_path("loc.lng").is_none());
        }
    }

    #[test]
    fn distinct_records_encode_differently() {
        let s = schema();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let mut seen = std::collections::HashMap::new();
        for _ in 0..2000 {
            let r = random_record(&mut rng);
            let b = encode_record(&s, &r, None).unwrap();
            if let Some(prev) = seen.insert(b, r.clone()) {
                assert!(same_bits(&prev, &r));
            }
        }
    }

    #[test]
    fn truncation_never_panics() {
        let s = schema();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(24);
        for _ in 0..200 {
            let r = random_record(&mut rng);
            let b = encode_record(&s, &r, None).unwrap();
            for cut in 0..b.len() {
                let _ = decode_record(&s, &b[..cut]);
            }
        }
    }

    #[test]
    fn any_round_trips_structured_values() {
        let area = AreaTree::from_point_radius(GeoPoint::new(1.0, 2.0).unwrap(), 1000.0, 5).unwrap();
        let vals = vec![
            Value::Area(Arc::new(area)),
            Value::point(GeoPoint::new(3.0, 4.0).unwrap()),
            Value::Tensor(Arc::new(Tensor::new(vec![2, 1], vec![1.5, -2.0]).unwrap())),
            Value::Set(Arc::new(vec![Value::Int(1), Value::str("x")])),
        ];
        for v in vals {
            let mut b = Vec::new();
            encode_any(&v, &mut b);
            let mut r = Reader::new(&b);
            assert_eq!(decode_any(&mut r).unwrap(), v);
            assert!(r.is_empty());
        }
    }
}

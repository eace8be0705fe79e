// SPDX-License-Identifier: Apache-2.0

use std::sync::Arc;

use super::{FieldType, Result, Schema, SchemaError, SchemaNode};
use crate::value::{Record, Value};

/// Checks a raw record against the schema and returns it in canonical form:
/// fields in declaration order, nulls dropped, numbers in their declared type.
pub fn validate_record(s: &Schema, raw: &Record) -> Result<Record> {
    conform_fields(&s.fields, raw, "", true)
}

/// Conforms one field value to its node (used for computed virtual fields).
pub fn conform_value(n: &SchemaNode, v: &Value, path: &str) -> Result<Value> {
    conform(n, v, path)
}

/// Parses one JSON object (one ingestion line) into a validated record.
pub fn validate_json(s: &Schema, v: &serde_json::Value) -> Result<Record> {
    match json_to_value(v) {
        Value::Record(r) => validate_record(s, &r),
        other => Err(SchemaError::TypeMismatch {
            path: String::new(),
            expected: "object".into(),
            found: other.type_name().into(),
        }),
    }
}

/// Structural JSON conversion without schema knowledge.
pub fn json_to_value(v: &serde_json::Value) -> Value {
    use serde_json::Value as J;
    match v {
        J::Null => Value::Null,
        J::Bool(b) => Value::Bool(*b),
        J::Number(n) => {
            if let Some(i) = n.as_i64() {
                Value::Int(i)
            } else if let Some(u) = n.as_u64() {
                Value::Uint(u)
            } else {
                Value::Double(n.as_f64().unwrap_or(f64::NAN))
            }
        }
        J::String(s) => Value::str(s),
        J::Array(a) => Value::vector(a.iter().map(json_to_value).collect()),
        J::Object(m) => {
            let mut r = Record::with_capacity(m.len());
            for (k, v) in m {
                r.set(k, json_to_value(v));
            }
            Value::Record(r)
        }
    }
}

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

fn conform_fields(nodes: &[SchemaNode], raw: &Record, prefix: &str, top: bool) -> Result<Record> {
    for (k, _) in raw.iter() {
        match nodes.iter().find(|n| n.name == k) {
            Some(n) if !(top && n.is_virtual()) => {}
            _ => return Err(SchemaError::UnknownField(join(prefix, k))),
        }
    }
    let mut out = Record::with_capacity(raw.len());
    for n in nodes {
        let Some(v) = raw.get(&n.name) else { continue };
        let path = join(prefix, &n.name);
        let v = conform(n, v, &path)?;
        if !v.is_null() {
            out.push(Arc::from(n.name.as_str()), v);
        }
    }
    Ok(out)
}

fn conform(n: &SchemaNode, v: &Value, path: &str) -> Result<Value> {
    if v.is_null() {
        return Ok(Value::Null);
    }
    if n.is_repeated() {
        let Some(items) = v.as_slice() else {
            return Err(SchemaError::CardinalityMismatch {
                path: path.into(),
                msg: format!("repeated field given a single {}", v.type_name()),
            });
        };
        let mut out = Vec::with_capacity(items.len());
        for (i, x) in items.iter().enumerate() {
            let p = format!("{path}[{i}]");
            if x.is_null() {
                return Err(mismatch(&p, &n.ty, x));
            }
            out.push(conform_scalar(n, x, &p)?);
        }
        return Ok(Value::vector(out));
    }
    if matches!(v, Value::Vector(_) | Value::Set(_)) && n.ty != FieldType::Any {
        return Err(SchemaError::CardinalityMismatch {
            path: path.into(),
            msg: "singular field given an array".into(),
        });
    }
    conform_scalar(n, v, path)
}

fn mismatch(path: &str, ty: &FieldType, v: &Value) -> SchemaError {
    SchemaError::TypeMismatch {
        path: path.into(),
        expected: ty.name().into(),
        found: v.type_name().into(),
    }
}

fn conform_scalar(n: &SchemaNode, v: &Value, path: &str) -> Result<Value> {
    let bad = || mismatch(path, &n.ty, v);
    Ok(match (&n.ty, v) {
        (FieldType::Any, _) => v.clone(),
        (FieldType::Bool, Value::Bool(_)) => v.clone(),
        (FieldType::Int, Value::Int(_)) => v.clone(),
        (FieldType::Int, Value::Uint(u)) => Value::Int(i64::try_from(*u).map_err(|_| bad())?),
        (FieldType::Uint, Value::Uint(_)) => v.clone(),
        (FieldType::Uint, Value::Int(i)) => Value::Uint(u64::try_from(*i).map_err(|_| bad())?),
        (FieldType::Float, x) if x.is_numeric() => match x {
            Value::Float(_) => x.clone(),
            _ => Value::Float(x.as_f64().unwrap() as f32),
        },
        (FieldType::Double, x) if x.is_numeric() => Value::Double(x.as_f64().unwrap()),
        (FieldType::String, Value::Str(_)) => v.clone(),
        (FieldType::Bytes, Value::Bytes(_)) => v.clone(),
        (FieldType::Bytes, Value::Str(s)) => {
            Value::Bytes(Arc::from(hex::decode(&**s).map_err(|_| bad())?))
        }
        (FieldType::Area, Value::Area(_)) => v.clone(),
        (FieldType::Message(children), Value::Record(r)) => {
            Value::Record(conform_fields(children, r, path, false)?)
        }
        (FieldType::Message(children), Value::Geo(_)) if n.is_point_message() => {
            let p = v.as_geo_point().ok_or_else(bad)?;
            let raw = Record::from_pairs([("lat", Value::Double(p.lat)), ("lng", Value::Double(p.lng))]);
            Value::Record(conform_fields(children, &raw, path, false)?)
        }
        _ => return Err(bad()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::parse_schema;
    use serde_json::json;

    fn schema() -> Schema {
        parse_schema(
            "message T {
               id: int;
               name: string;
               tags: message { a: uint; };
               repeated xs: int;
               w: float;
             }",
        )
        .unwrap()
    }

    #[test]
    fn empty_object_is_all_null() {
        let r = validate_json(&schema(), &json!({})).unwrap();
        assert!(r.is_empty());
    }

    #[test]
    fn type_errors_name_the_path() {
        let s = schema();
        assert_eq!(
            validate_json(&s, &json!({"id": "x"})),
            Err(SchemaError::TypeMismatch {
                path: "id".into(),
                expected: "int".into(),
                found: "string".into()
            })
        );
        assert!(matches!(
            validate_json(&s, &json!({"tags": {"a": -1}})),
            Err(SchemaError::TypeMismatch { ref path, .. }) if path == "tags.a"
        ));
        assert!(matches!(
            validate_json(&s, &json!({"xs": 3})),
            Err(SchemaError::CardinalityMismatch { .. })
        ));
        assert!(matches!(
            validate_json(&s, &json!({"id": [3]})),
            Err(SchemaError::CardinalityMismatch { .. })
        ));
        assert_eq!(
            validate_json(&s, &json!({"tags": {"b": 1}})),
            Err(SchemaError::UnknownField("tags.b".into()))
        );
        assert!(validate_json(&s, &json!({"xs": [1, null]})).is_err());
    }

    #[test]
    fn canonical_order_and_coercion() {
        let r = validate_json(&schema(), &json!({"w": 2, "id": 7, "name": null})).unwrap();
        let names: Vec<_> = r.names().collect();
        assert_eq!(names, vec!["id", "w"]);
        assert_eq!(r.get("w"), Some(&Value::Float(2.0)));
    }
}

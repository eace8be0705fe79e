// SPDX-License-Identifier: Apache-2.0

//! Output schemas of pipeline stages, derived from their expressions.

use std::collections::HashMap;

use super::{Cardinality, FieldType, Schema, SchemaNode};
use crate::value::Value;
use crate::wfl::agg::{agg_slot, extract_aggregates};
use crate::wfl::ast::{Expr, Lambda};
use crate::wfl::typeck::{agg_ty, check_expr, check_lambda, schema_of, Ty, TypeEnv};
use crate::wfl::{Result, WflError};

/// The expressions of one stage, as far as they determine its output.
pub enum StageExprs<'a> {
    /// Stages that pass records through unchanged (limit, sample, collect).
    Identity,
    /// A predicate lambda (filter).
    Predicate(&'a Lambda),
    /// A key lambda whose value only orders or deduplicates (sort, distinct).
    Key(&'a Lambda),
    Map(&'a Lambda),
    /// Lambda selecting a repeated field path.
    Flatten(&'a Lambda),
    /// Group key lambda (absent for a global aggregate) and aggregate lambda.
    Aggregate { key: Option<&'a Lambda>, body: &'a Lambda },
    /// Inner join against records of the right schema.
    Join { right: &'a Schema },
}

pub fn infer_stage_schema(stage: &StageExprs<'_>, input: &Schema, globals: &HashMap<String, Value>) -> Result<Schema> {
    let types = globals.iter().map(|(k, v)| (k.clone(), Ty::of_value(v))).collect();
    infer_stage_schema_typed(stage, input, &types)
}

/// As [`infer_stage_schema`], with globals given by type only.
pub fn infer_stage_schema_typed(stage: &StageExprs<'_>, input: &Schema, globals: &HashMap<String, Ty>) -> Result<Schema> {
    let mut env = TypeEnv::new(globals.clone());
    let rec = Ty::of_schema(input);
    match stage {
        StageExprs::Identity => Ok(input.clone()),
        StageExprs::Predicate(l) => match check_lambda(l, rec, &mut env)? {
            Ty::Bool | Ty::Null | Ty::Any => Ok(input.clone()),
            t => Err(WflError::Type(format!("filter predicate must be bool, found {}", t.name()))),
        },
        StageExprs::Key(l) => {
            check_lambda(l, rec, &mut env)?;
            Ok(input.clone())
        }
        StageExprs::Map(l) => {
            let t = check_lambda(l, rec, &mut env)?;
            if t == Ty::Any {
                return Err(WflError::Type("map output must be a record literal or record-valued".into()));
            }
            schema_of(&format!("{}_map", input.name), &t)
        }
        StageExprs::Flatten(l) => {
            let path = flatten_path(l)
                .ok_or_else(|| WflError::Type(format!("flatten takes a field path such as {0} => {0}.items", l.param)))?;
            let mut out = input.clone();
            let mut nodes = &mut out.fields;
            for (i, part) in path.iter().enumerate() {
                let n = nodes
                    .iter_mut()
                    .find(|n| &n.name == part)
                    .ok_or_else(|| WflError::Type(format!("flatten: unknown field '{}'", path[..=i].join("."))))?;
                if i + 1 == path.len() {
                    if !n.is_repeated() {
                        return Err(WflError::Type(format!("flatten: '{}' is not repeated", path.join("."))));
                    }
                    n.card = Cardinality::Singular;
                    n.annotations.clear();
                    break;
                }
                if n.is_repeated() {
                    return Err(WflError::Type(format!(
                        "flatten: '{}' crosses a repeated field",
                        path.join(".")
                    )));
                }
                nodes = match &mut n.ty {
                    FieldType::Message(c) => c,
                    _ => return Err(WflError::Type(format!("flatten: '{}' is not a message", path[..=i].join(".")))),
                };
            }
            for f in out.fields.iter_mut() {
                f.annotations.clear();
            }
            out.fields.retain(|f| !f.is_virtual());
            out.name = format!("{}_flat", input.name);
            Ok(out)
        }
        StageExprs::Aggregate { key, body } => {
            let mut fields: Vec<(String, Ty)> = Vec::new();
            if let Some(k) = key {
                match check_lambda(k, rec.clone(), &mut env)? {
                    Ty::Record(fs) => fields.extend(fs),
                    t => return Err(WflError::Type(format!("aggregate key must be a record, found {}", t.name()))),
                }
            }
            let (fin, calls) = extract_aggregates(body)?;
            let mut fenv = TypeEnv::new(globals.clone());
            for (i, c) in calls.iter().enumerate() {
                let at = match &c.arg {
                    Some(a) => {
                        env.push(&body.param, rec.clone());
                        let t = check_expr(a, &mut env);
                        env.pop();
                        Some(t?)
                    }
                    None => None,
                };
                fenv.push(&agg_slot(i), agg_ty(c.func, at.as_ref()));
            }
            match check_expr(&fin, &mut fenv)? {
                Ty::Record(fs) => {
                    for (n, t) in fs {
                        if fields.iter().any(|(m, _)| *m == n) {
                            return Err(WflError::Type(format!("aggregate output field '{n}' repeats a key field")));
                        }
                        fields.push((n, t));
                    }
                }
                t => return Err(WflError::Type(format!("aggregate output must be a record, found {}", t.name()))),
            }
            schema_of(&format!("{}_agg", input.name), &Ty::Record(fields))
        }
        StageExprs::Join { right } => {
            let left: Vec<String> = input.fields.iter().filter(|f| !f.is_virtual()).map(|f| f.name.clone()).collect();
            let rnames: Vec<String> = right.fields.iter().filter(|f| !f.is_virtual()).map(|f| f.name.clone()).collect();
            let renamed = join_names(&left, &rnames);
            let strip = |n: &SchemaNode| {
                let mut n = n.clone();
                n.annotations.clear();
                n
            };
            let mut fields: Vec<SchemaNode> = input.fields.iter().filter(|f| !f.is_virtual()).map(strip).collect();
            for (f, name) in right.fields.iter().filter(|f| !f.is_virtual()).zip(renamed) {
                let mut n = strip(f);
                n.name = name;
                fields.push(n);
            }
            for (i, f) in fields.iter_mut().enumerate() {
                f.id = i as u32 + 1;
            }
            Ok(Schema::new(format!("{}_join_{}", input.name, right.name), fields))
        }
    }
}

/// The dotted path selected by a flatten lambda `p => p.a.b`.
pub fn flatten_path(l: &Lambda) -> Option<Vec<String>> {
    let mut parts = Vec::new();
    let mut e = l.body.tail();
    loop {
        match e {
            Expr::Field(b, n) => {
                parts.push(n.clone());
                e = b;
            }
            Expr::Ident(n, _) if *n == l.param && !parts.is_empty() => break,
            _ => return None,
        }
    }
    parts.reverse();
    Some(parts)
}

/// Right-side field names after resolving collisions with the left side by
/// prefixing `right_` (repeatedly, if the prefixed name also collides).
pub fn join_names(left: &[String], right: &[String]) -> Vec<String> {
    let mut taken: Vec<String> = left.to_vec();
    let mut out = Vec::with_capacity(right.len());
    for r in right {
        let mut name = r.clone();
        while taken.contains(&name) {
            name = format!("right_{name}");
        }
        taken.push(name.clone());
        out.push(name);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::parse_schema;
    use crate::wfl::parse_expr;

    fn lambda(src: &str) -> Lambda {
        match parse_expr(src).unwrap() {
            Expr::Lambda(l) => *l,
            _ => panic!(),
        }
    }

    fn input() -> Schema {
        parse_schema(
            "message Obs { id: int; road: string; speed: double; repeated tags: string; loc: message { lat: double; lng: double; } [index_location]; }",
        )
        .unwrap()
    }

    #[test]
    fn identity_map_keeps_schema_shape() {
        let s = input();
        let out = infer_stage_schema(&StageExprs::Map(&lambda("p => p")), &s, &HashMap::new()).unwrap();
        assert_eq!(out.fields.len(), s.fields.len());
        for (a, b) in out.fields.iter().zip(&s.fields) {
            assert_eq!((a.name.as_str(), &a.ty, a.card), (b.name.as_str(), &b.ty, b.card));
        }
    }

    #[test]
    fn count_of_repeated_is_singular_uint() {
        let out = infer_stage_schema(&StageExprs::Map(&lambda("p => {n: len(p.tags)}")), &input(), &HashMap::new())
            .unwrap();
        assert_eq!(out.fields.len(), 1);
        assert_eq!((&out.fields[0].ty, out.fields[0].card), (&FieldType::Uint, Cardinality::Singular));
    }

    #[test]
    fn aggregate_key_and_avg() {
        let k = lambda("p => {road: p.road}");
        let b = lambda("p => {avg: avg(p.speed), n: count(), top: max(p.id)}");
        let out = infer_stage_schema(&StageExprs::Aggregate { key: Some(&k), body: &b }, &input(), &HashMap::new())
            .unwrap();
        let got: Vec<(&str, &FieldType)> = out.fields.iter().map(|f| (f.name.as_str(), &f.ty)).collect();
        assert_eq!(
            got,
            vec![("road", &FieldType::String), ("avg", &FieldType::Double), ("n", &FieldType::Uint), ("top", &FieldType::Int)]
        );
    }

    #[test]
    fn flatten_and_join() {
        let s = input();
        let out = infer_stage_schema(&StageExprs::Flatten(&lambda("p => p.tags")), &s, &HashMap::new()).unwrap();
        assert_eq!(out.field("tags").unwrap().card, Cardinality::Singular);
        assert!(infer_stage_schema(&StageExprs::Flatten(&lambda("p => p.id")), &s, &HashMap::new()).is_err());
        let r = parse_schema("message R { id: int; name: string; }").unwrap();
        let j = infer_stage_schema(&StageExprs::Join { right: &r }, &s, &HashMap::new()).unwrap();
        let names: Vec<&str> = j.fields.iter().map(|f| f.name.as_str()).collect();
        assert_eq!(names, vec!["id", "road", "speed", "tags", "loc", "right_id", "name"]);
        assert_eq!(join_names(&["a".into(), "right_a".into()], &["a".into()]), vec!["right_right_a"]);
    }

    #[test]
    fn type_errors() {
        let s = input();
        assert!(infer_stage_schema(&StageExprs::Predicate(&lambda("p => p.speed")), &s, &HashMap::new()).is_err());
        assert!(infer_stage_schema(&StageExprs::Map(&lambda("p => p.road + 1")), &s, &HashMap::new()).is_err());
        assert!(infer_stage_schema(&StageExprs::Map(&lambda("p => p.speed")), &s, &HashMap::new()).is_err());
    }
}

// SPDX-License-Identifier: Apache-2.0

//! Fields a pipeline reads from its source dataset.

use crate::schema::{FieldPath, FieldType, Schema};
use crate::wfl::ast::{Expr, Lambda, Stage};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReadSet {
    /// Records reach a stage that needs them whole.
    All,
    Paths(Vec<FieldPath>),
}

impl ReadSet {
    pub fn paths(&self) -> Option<&[FieldPath]> {
        match self {
            ReadSet::All => None,
            ReadSet::Paths(p) => Some(p),
        }
    }
}

/// Walks the stages while records still have the source shape and collects
/// every field path used by a stage expression. A stage that passes source
/// records through to the output (or a bare use of the record variable)
/// makes the whole record necessary.
pub fn read_set(schema: &Schema, stages: &[Stage]) -> ReadSet {
    let mut out = Vec::new();
    for st in stages {
        let lambdas = || st.args.iter().filter_map(|a| match a {
            Expr::Lambda(l) => Some(&**l),
            _ => None,
        });
        match st.op.as_str() {
            "find" | "filter" | "sort" | "distinct" | "flatten" => {
                for l in lambdas() {
                    if !lambda_paths(l, schema, &mut out) {
                        return ReadSet::All;
                    }
                }
            }
            "limit" | "sample" | "collect" => {}
            "map" | "aggregate" => {
                for l in lambdas() {
                    if !lambda_paths(l, schema, &mut out) {
                        return ReadSet::All;
                    }
                }
                return ReadSet::Paths(out);
            }
            _ => return ReadSet::All,
        }
    }
    ReadSet::All
}

fn lambda_paths(l: &Lambda, schema: &Schema, out: &mut Vec<FieldPath>) -> bool {
    walk(&l.body, &l.param, schema, out)
}

fn walk(e: &Expr, param: &str, schema: &Schema, out: &mut Vec<FieldPath>) -> bool {
    match e {
        Expr::Ident(n, _) => n != param,
        Expr::Lambda(l) if l.param == param => true,
        Expr::Field(..) => {
            let mut parts = Vec::new();
            let mut cur = e;
            while let Expr::Field(b, n) = cur {
                parts.push(n.as_str());
                cur = b;
            }
            match cur {
                Expr::Ident(n, _) if n == param => {
                    parts.reverse();
                    if let Some(p) = resolvable_prefix(schema, &parts) {
                        if !out.contains(&p) {
                            out.push(p);
                        }
                    }
                    true
                }
                base => walk(base, param, schema, out),
            }
        }
        _ => {
            let mut ok = true;
            e.for_each_child(&mut |c| ok &= walk(c, param, schema, out));
            ok
        }
    }
}

/// Longest leading part of `parts` that names a schema node.
fn resolvable_prefix(schema: &Schema, parts: &[&str]) -> Option<FieldPath> {
    let mut nodes = &schema.fields;
    let mut taken = Vec::new();
    for p in parts {
        let Some(n) = nodes.iter().find(|n| n.name == *p) else { break };
        taken.push(*p);
        match &n.ty {
            FieldType::Message(c) => nodes = c,
            _ => break,
        }
    }
    if taken.is_empty() {
        None
    } else {
        Some(FieldPath::new(&taken.join(".")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::parse_schema;
    use crate::wfl::parse_expr;

    fn stages(src: &str) -> Vec<Stage> {
        match parse_expr(src).unwrap() {
            Expr::Pipeline(p) => p.stages,
            e => panic!("{e:?}"),
        }
    }

    fn schema() -> Schema {
        parse_schema(
            "message Obs { id: int; road: string; speed: double; ts: int; loc: message { lat: double; lng: double; }; repeated tags: string; note: string; }",
        )
        .unwrap()
    }

    fn paths(src: &str) -> Option<Vec<String>> {
        match read_set(&schema(), &stages(src)) {
            ReadSet::All => None,
            ReadSet::Paths(ps) => Some(ps.iter().map(|p| p.to_string()).collect()),
        }
    }

    #[test]
    fn count_only_reads_nothing() {
        assert_eq!(paths("flow(\"obs\").aggregate(g => {n: count()})"), Some(vec![]));
    }

    #[test]
    fn referenced_paths_only() {
        assert_eq!(
            paths("flow(\"obs\").find(r => r.loc in rect(0, 0, 1, 1)).filter(p => hour(p.ts) < 9).aggregate(p => {road: p.road}, g => {a: avg(g.speed)})"),
            Some(vec!["loc".into(), "ts".into(), "road".into(), "speed".into()])
        );
        assert_eq!(paths("flow(\"obs\").map(p => {lat: p.loc.lat, t: len(p.tags)})"), Some(vec!["loc.lat".into(), "tags".into()]));
    }

    #[test]
    fn whole_record_uses_read_everything() {
        assert_eq!(paths("flow(\"obs\").filter(p => p.speed > 3)"), None);
        assert_eq!(paths("flow(\"obs\").map(p => {r: p})"), None);
        assert_eq!(paths("flow(\"obs\").map(p => {x: 1}).filter(q => q.x == 1)"), Some(vec![]));
    }
}

// SPDX-License-Identifier: Apache-2.0

use super::{FieldPath, FieldType, Result, Schema, SchemaError, SchemaNode};

/// Keeps exactly the used paths and their ancestors. A used path that names a
/// message keeps that message's whole subtree. Field ids are preserved, so
/// the pruned schema decodes full encodings.
pub fn prune_schema(s: &Schema, used: &[FieldPath]) -> Result<Schema> {
    for p in used {
        if s.resolve(p).is_none() {
            return Err(SchemaError::UnknownPath(p.to_string()));
        }
    }
    let split: Vec<Vec<&str>> = used.iter().map(|p| p.parts().collect()).collect();
    Ok(Schema {
        name: s.name.clone(),
        fields: prune_nodes(&s.fields, &split, 0),
    })
}

fn prune_nodes(nodes: &[SchemaNode], used: &[Vec<&str>], depth: usize) -> Vec<SchemaNode> {
    let mut out = Vec::new();
    for n in nodes {
        let hits: Vec<Vec<&str>> = used
            .iter()
            .filter(|p| p.len() > depth && p[depth] == n.name)
            .cloned()
            .collect();
        if hits.is_empty() {
            continue;
        }
        if hits.iter().any(|p| p.len() == depth + 1) {
            out.push(n.clone());
            continue;
        }
        let mut kept = n.clone();
        if let FieldType::Message(children) = &n.ty {
            kept.ty = FieldType::Message(prune_nodes(children, &hits, depth + 1));
        }
        out.push(kept);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::parse_schema;
    use rand::{Rng, SeedableRng};
    use std::collections::BTreeSet;

    #[test]
    fn empty_use_is_root_only() {
        let s = parse_schema("message M { a: int; b: message { c: int; }; }").unwrap();
        let p = prune_schema(&s, &[]).unwrap();
        assert_eq!(p.node_count(), 1);
    }

    #[test]
    fn loc_lat_is_three_nodes() {
        let s = parse_schema(
            "message P { name: string; rank: int; loc: message { lat: double; lng: double; }; }",
        )
        .unwrap();
        let p = prune_schema(&s, &[FieldPath::new("loc.lat")]).unwrap();
        assert_eq!(p.node_count(), 3);
        assert_eq!(p.resolve(&FieldPath::new("loc.lat")).unwrap().id, 1);
        assert!(matches!(
            prune_schema(&s, &[FieldPath::new("loc.alt")]),
            Err(SchemaError::UnknownPath(_))
        ));
    }

    #[test]
    fn all_paths_is_identity() {
        let s = parse_schema(
            "message P { name: string [index_text]; loc: message { lat: double; lng: double; }; }",
        )
        .unwrap();
        assert_eq!(prune_schema(&s, &s.leaf_paths()).unwrap(), s);
    }

    /// Builds a synthetic schema of `n` leaf fields spread over nested
    /// messages, returned as text.
    fn synthetic(n: usize, rng: &mut impl Rng) -> String {
        let mut text = String::from("message Big {\n");
        let mut made = 0;
        let mut group = 0;
        while made < n {
            let k = rng.gen_range(1..20).min(n - made);
            if rng.gen_bool(0.5) {
                text.push_str(&format!("g{group}: message {{\n"));
                for i in 0..k {
                    text.push_str(&format!("  f{i}: int;\n"));
                }
                text.push_str("};\n");
            } else {
                for i in 0..k {
                    text.push_str(&format!("g{group}_{i}: double;\n"));
                }
            }
            made += k;
            group += 1;
        }
        text.push('}');
        text
    }

    #[test]
    fn synthetic_counting_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let s = parse_schema(&synthetic(1000, &mut rng)).unwrap();
            let leaves = s.leaf_paths();
            assert_eq!(leaves.len(), 1000);
            let used: Vec<FieldPath> = (0..3).map(|_| leaves[rng.gen_range(0..1000)].clone()).collect();
            let mut expect: BTreeSet<FieldPath> = BTreeSet::new();
            for p in &used {
                expect.extend(p.with_ancestors());
            }
            let p = prune_schema(&s, &used).unwrap();
            assert_eq!(p.node_count(), expect.len() + 1);
        }
    }
}

// SPDX-License-Identifier: Apache-2.0

//! Data-aware completion for the REPL.

use std::collections::BTreeMap;

use tesserflow::engine::Catalog;
use tesserflow::schema::{prune_schema, FieldPath, Schema, SchemaNode};

pub const OPERATORS: &[&str] = &[
    "aggregate", "collect", "distinct", "filter", "find", "flatten", "join", "limit", "map", "sample", "save",
    "sort", "sub_flow",
];

/// Names and schemas completion draws from, refreshed after every statement.
#[derive(Debug, Default, Clone)]
pub struct CompletionIndex {
    pub datasets: BTreeMap<String, Schema>,
    pub variables: Vec<String>,
}

impl CompletionIndex {
    pub fn from_catalog<'a>(c: &Catalog, vars: impl Iterator<Item = &'a str>) -> Self {
        let mut datasets: BTreeMap<String, Schema> =
            c.list().into_iter().map(|e| (e.name.clone(), e.dataset.schema().clone())).collect();
        for n in c.schema_names() {
            if let Some(s) = c.schema(n) {
                datasets.entry(n.to_string()).or_insert_with(|| s.clone());
            }
        }
        CompletionIndex { datasets, variables: vars.map(str::to_string).collect() }
    }

    /// Returns the byte offset the candidates replace and the candidates.
    pub fn complete(&self, line: &str, pos: usize) -> (usize, Vec<String>) {
        let head = &line[..pos];
        if let Some(q) = head.rfind("flow(\"") {
            let partial = &head[q + 6..];
            if !partial.contains('"') {
                return (q + 6, self.datasets.keys().filter(|n| n.starts_with(partial)).cloned().collect());
            }
        }
        let start = head
            .char_indices()
            .rev()
            .take_while(|(_, c)| c.is_alphanumeric() || *c == '_' || *c == '.')
            .last()
            .map_or(pos, |(i, _)| i);
        let word = &head[start..];
        if let Some(op) = word.strip_prefix('.') {
            let before = head[..start].trim_end();
            if before.ends_with(')') || before.ends_with(']') {
                let cands = OPERATORS.iter().filter(|o| o.starts_with(op)).map(|o| format!(".{o}")).collect();
                return (start, cands);
            }
            return (start, Vec::new());
        }
        match word.split_once('.') {
            Some((var, rest)) => (start, self.fields(head, var, rest)),
            None => {
                let mut c: Vec<String> = ["flow", "let"]
                    .iter()
                    .map(|s| s.to_string())
                    .chain(self.variables.iter().cloned())
                    .filter(|n| n.starts_with(word) && !word.is_empty())
                    .collect();
                c.sort();
                (start, c)
            }
        }
    }

    /// Field paths `var.<parents>.<partial>*` of the most recent source in
    /// `head`, listed from the schema pruned to the parent path.
    fn fields(&self, head: &str, var: &str, rest: &str) -> Vec<String> {
        let Some(schema) = self.source_schema(head) else { return Vec::new() };
        let (parents, partial) = match rest.rsplit_once('.') {
            Some((p, l)) => (Some(p), l),
            None => (None, rest),
        };
        let children: Vec<&SchemaNode> = match parents {
            None => schema.fields.iter().collect(),
            Some(p) => {
                let path = FieldPath::new(p);
                let Ok(pruned) = prune_schema(schema, std::slice::from_ref(&path)) else { return Vec::new() };
                return pruned
                    .resolve(&path)
                    .map(|n| {
                        n.children()
                            .iter()
                            .filter(|c| c.name.starts_with(partial))
                            .map(|c| format!("{var}.{p}.{}", c.name))
                            .collect()
                    })
                    .unwrap_or_default();
            }
        };
        children.iter().filter(|c| c.name.starts_with(partial)).map(|c| format!("{var}.{}", c.name)).collect()
    }

    fn source_schema(&self, head: &str) -> Option<&Schema> {
        let q = head.rfind("flow(\"")?;
        let name = head[q + 6..].split('"').next()?;
        self.datasets.get(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tesserflow::schema::parse_schema;
    use tesserflow::testkit::OBS_SCHEMA;

    fn index() -> CompletionIndex {
        let mut datasets = BTreeMap::new();
        datasets.insert("obs".to_string(), parse_schema(OBS_SCHEMA).unwrap());
        datasets.insert("roads".to_string(), parse_schema(tesserflow::testkit::ROADS_SCHEMA).unwrap());
        CompletionIndex { datasets, variables: vec!["segs".into()] }
    }

    #[test]
    fn field_prefix() {
        let line = "flow(\"obs\").filter(p => p.lo";
        assert_eq!(index().complete(line, line.len()), (24, vec!["p.loc".to_string()]));
    }

    #[test]
    fn nested_fields_and_operators() {
        let ix = index();
        let line = "flow(\"obs\").filter(p => p.loc.l";
        assert_eq!(ix.complete(line, line.len()).1, vec!["p.loc.lat", "p.loc.lng"]);
        let line = "flow(\"obs\").fi";
        assert_eq!(ix.complete(line, line.len()).1, vec![".filter", ".find"]);
        let line = "flow(\"ro";
        assert_eq!(ix.complete(line, line.len()), (6, vec!["roads".to_string()]));
        let line = "se";
        assert_eq!(ix.complete(line, line.len()).1, vec!["segs"]);
    }
}

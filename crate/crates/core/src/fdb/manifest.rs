// SPDX-License-Identifier: Apache-2.0

use std::fmt::Write as _;

use super::{FdbError, Result};
use crate::codec::fnv1a64;
use crate::schema::{FieldPath, IndexKind, Schema};

pub const MANIFEST_FILE: &str = "MANIFEST";
pub const SCHEMA_FILE: &str = "schema.txt";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexDesc {
    pub id: u32,
    pub kind: IndexKind,
    pub path: FieldPath,
    pub level: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShardEntry {
    pub id: usize,
    pub file: String,
    pub docs: u32,
    pub bytes: u64,
    pub fnv: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub name: String,
    pub schema_file: String,
    pub num_shards: usize,
    pub shard_key: Option<FieldPath>,
    pub colsets: Vec<String>,
    pub indices: Vec<IndexDesc>,
    pub shards: Vec<ShardEntry>,
}

fn kind_word(k: IndexKind) -> &'static str {
    k.name().trim_start_matches("index_")
}

fn parse_kind(w: &str) -> Option<IndexKind> {
    Some(match w {
        "text" => IndexKind::Text,
        "tag" => IndexKind::Tag,
        "range" => IndexKind::Range,
        "location" => IndexKind::Location,
        "area" => IndexKind::Area,
        _ => return None,
    })
}

impl Manifest {
    /// Index and column-set layout for a schema, without shard entries.
    pub fn layout(name: &str, schema: &Schema, num_shards: usize, shard_key: Option<FieldPath>) -> Manifest {
        let indices = schema
            .indexed_paths()
            .into_iter()
            .enumerate()
            .map(|(i, (path, _, a))| IndexDesc { id: i as u32, kind: a.kind, path, level: a.level })
            .collect();
        Manifest {
            name: name.to_string(),
            schema_file: SCHEMA_FILE.to_string(),
            num_shards,
            shard_key,
            colsets: schema.colsets(),
            indices,
            shards: Vec::new(),
        }
    }

    pub fn index_for(&self, path: &FieldPath, kind: IndexKind) -> Option<&IndexDesc> {
        self.indices.iter().find(|d| d.kind == kind && d.path == *path)
    }

    pub fn colset_id(&self, name: &str) -> Option<u32> {
        self.colsets.iter().position(|c| c == name).map(|i| i as u32)
    }

    pub fn total_docs(&self) -> u64 {
        self.shards.iter().map(|s| s.docs as u64).sum()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "tesserflow-fdb {MANIFEST_VERSION}");
        let _ = writeln!(s, "name {}", self.name);
        let _ = writeln!(s, "schema {}", self.schema_file);
        let _ = writeln!(s, "num_shards {}", self.num_shards);
        let _ = writeln!(s, "shard_key {}", self.shard_key.as_ref().map_or("-", |p| p.as_str()));
        for (i, c) in self.colsets.iter().enumerate() {
            let _ = writeln!(s, "colset {i} {c}");
        }
        for d in &self.indices {
            let _ = write!(s, "index {} {} {}", d.id, kind_word(d.kind), d.path);
            if let Some(l) = d.level {
                let _ = write!(s, " {l}");
            }
            s.push('\n');
        }
        for e in &self.shards {
            let _ = writeln!(s, "shard {} {} {} {} {:016x}", e.id, e.file, e.docs, e.bytes, e.fnv);
        }
        s
    }

    /// Version digest of the dataset, covering layout and every shard checksum.
    pub fn digest(&self) -> u64 {
        fnv1a64(self.to_text().as_bytes())
    }

    pub fn parse(text: &str) -> Result<Manifest> {
        let bad = |n: usize, m: &str| FdbError::CorruptManifest(format!("line {}: {m}", n + 1));
        let mut lines = text.lines().enumerate();
        let (_, first) = lines.next().ok_or_else(|| FdbError::CorruptManifest("empty manifest".into()))?;
        let version = first
            .strip_prefix("tesserflow-fdb ")
            .and_then(|v| v.trim().parse::<u32>().ok())
            .ok_or_else(|| bad(0, "missing header"))?;
        if version != MANIFEST_VERSION {
            return Err(FdbError::VersionMismatch { found: version, expected: MANIFEST_VERSION });
        }
        let mut m = Manifest {
            name: String::new(),
            schema_file: SCHEMA_FILE.to_string(),
            num_shards: 0,
            shard_key: None,
            colsets: Vec::new(),
            indices: Vec::new(),
            shards: Vec::new(),
        };
        let mut saw_shards = false;
        for (n, line) in lines {
            let w: Vec<&str> = line.split(' ').collect();
            let num = |i: usize| -> Result<u64> {
                w.get(i).and_then(|x| x.parse::<u64>().ok()).ok_or_else(|| bad(n, "expected a number"))
            };
            match (w[0], w.len()) {
                ("", 1) => {}
                ("name", 2) => m.name = w[1].to_string(),
                ("schema", 2) => m.schema_file = w[1].to_string(),
                ("num_shards", 2) => {
                    m.num_shards = num(1)? as usize;
                    saw_shards = true;
                }
                ("shard_key", 2) => m.shard_key = (w[1] != "-").then(|| FieldPath::new(w[1])),
                ("colset", 3) => {
                    if num(1)? as usize != m.colsets.len() {
                        return Err(bad(n, "colset ids must be dense"));
                    }
                    m.colsets.push(w[2].to_string());
                }
                ("index", 4 | 5) => {
                    let id = num(1)? as u32;
                    if id as usize != m.indices.len() {
                        return Err(bad(n, "index ids must be dense"));
                    }
                    let kind = parse_kind(w[2]).ok_or_else(|| bad(n, "unknown index kind"))?;
                    let level = if w.len() == 5 { Some(num(4)? as u8) } else { None };
                    m.indices.push(IndexDesc { id, kind, path: FieldPath::new(w[3]), level });
                }
                ("shard", 6) => {
                    let id = num(1)? as usize;
                    if id != m.shards.len() {
                        return Err(bad(n, "shard ids must be dense"));
                    }
                    let fnv = u64::from_str_radix(w[5], 16).map_err(|_| bad(n, "bad checksum"))?;
                    m.shards.push(ShardEntry {
                        id,
                        file: w[2].to_string(),
                        docs: num(3)? as u32,
                        bytes: num(4)?,
                        fnv,
                    });
                }
                _ => return Err(bad(n, &format!("unrecognized line '{line}'"))),
            }
        }
        if !saw_shards || m.name.is_empty() {
            return Err(FdbError::CorruptManifest("missing name or num_shards".into()));
        }
        if m.shards.len() != m.num_shards {
            return Err(FdbError::CorruptManifest(format!(
                "num_shards is {} but {} shard entries are listed",
                m.num_shards,
                m.shards.len()
            )));
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::parse_schema;

    #[test]
    fn text_roundtrip() {
        let s = parse_schema("message A { name: string [index_text]; n: int [index_range, colset=nums]; }").unwrap();
        let mut m = Manifest::layout("a", &s, 2, Some(FieldPath::new("name")));
        for i in 0..2 {
            m.shards.push(ShardEntry { id: i, file: format!("shard-{i:05}.tst"), docs: 3, bytes: 99, fnv: 0xabc });
        }
        let t = m.to_text();
        assert_eq!(Manifest::parse(&t).unwrap(), m);
        assert!(t.contains("index 1 range n\n"));
        let fewer = t.replace("num_shards 2", "num_shards 3");
        assert!(matches!(Manifest::parse(&fewer), Err(FdbError::CorruptManifest(_))));
        let newer = t.replace("tesserflow-fdb 1", "tesserflow-fdb 9");
        assert!(matches!(Manifest::parse(&newer), Err(FdbError::VersionMismatch { found: 9, .. })));
    }
}

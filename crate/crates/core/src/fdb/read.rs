// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use super::build::{eval_virtual, parse_virtuals, VirtualField};
use super::docset::DocIdSet;
use super::keys::{data_key, meta_key, split_posting, DATA, META, POSTING};
use super::manifest::{Manifest, MANIFEST_FILE};
use super::table::{KvRead, SortedTable};
use super::{FdbError, Result};
use crate::codec::{fnv1a64, Reader};
use crate::schema::{decode_record, parse_schema, prune_schema, FieldPath, FieldType, Schema, SchemaNode};
use crate::value::{Record, Value};
use crate::wfl::EvalContext;

/// Read-side counters. `colset_bytes[i]` counts data bytes read from column
/// set `i`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScanStats {
    pub docs_scanned: u64,
    pub postings_read: u64,
    pub bytes_read: u64,
    pub colset_bytes: Vec<u64>,
}

impl ScanStats {
    pub fn merge(&mut self, o: &ScanStats) {
        self.docs_scanned += o.docs_scanned;
        self.postings_read += o.postings_read;
        self.bytes_read += o.bytes_read;
        if self.colset_bytes.len() < o.colset_bytes.len() {
            self.colset_bytes.resize(o.colset_bytes.len(), 0);
        }
        for (a, b) in self.colset_bytes.iter_mut().zip(&o.colset_bytes) {
            *a += b;
        }
    }

    fn add_colset(&mut self, cid: u32, n: u64) {
        let i = cid as usize;
        if self.colset_bytes.len() <= i {
            self.colset_bytes.resize(i + 1, 0);
        }
        self.colset_bytes[i] += n;
        self.bytes_read += n;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ShardStats {
    pub doc_count: u32,
    pub meta_bytes: u64,
    pub posting_bytes: u64,
    pub data_bytes: u64,
    /// Posting count per index id.
    pub postings: Vec<u64>,
}

/// Dataset-wide state shared by all shards.
pub struct DatasetMeta {
    pub manifest: Manifest,
    pub schema: Schema,
    pub(crate) virtuals: Vec<VirtualField>,
    pub(crate) ctx: EvalContext,
}

impl DatasetMeta {
    pub(crate) fn new(manifest: Manifest, schema: Schema) -> Result<DatasetMeta> {
        let expect = Manifest::layout(&manifest.name, &schema, manifest.num_shards, manifest.shard_key.clone());
        if expect.colsets != manifest.colsets || expect.indices != manifest.indices {
            return Err(FdbError::CorruptManifest("index or column-set list does not match the schema".into()));
        }
        Ok(DatasetMeta { virtuals: parse_virtuals(&schema)?, manifest, schema, ctx: EvalContext::default() })
    }
}

/// Fields to read, resolved once per query against the dataset schema.
#[derive(Debug, Clone)]
pub struct Projection {
    /// Stored fields to decode, including virtual-field dependencies.
    pub stored: Schema,
    /// Shape of the records handed back.
    pub output: Schema,
    pub colsets: Vec<u32>,
    virtuals: Vec<usize>,
}

impl Projection {
    pub fn new(meta: &DatasetMeta, fields: &[FieldPath]) -> Result<Projection> {
        let s = &meta.schema;
        let mut stored_paths = Vec::new();
        let mut out_paths = Vec::new();
        let mut virtuals = Vec::new();
        for f in fields {
            let node = s.resolve(f).ok_or_else(|| FdbError::Schema(crate::schema::SchemaError::UnknownPath(f.to_string())))?;
            out_paths.push(f.clone());
            if node.is_virtual() {
                let i = meta.virtuals.iter().position(|v| v.name == node.name).expect("parsed virtual");
                if !virtuals.contains(&i) {
                    virtuals.push(i);
                }
                for d in &meta.virtuals[i].deps {
                    stored_paths.push(FieldPath::new(d));
                }
            } else {
                stored_paths.push(f.clone());
            }
        }
        virtuals.sort_unstable();
        let stored = prune_schema(s, &stored_paths)?;
        let output = prune_schema(s, &out_paths)?;
        let mut colsets = Vec::new();
        for f in &stored.fields {
            let id = meta.manifest.colset_id(&f.colset).expect("colset in manifest");
            if !colsets.contains(&id) {
                colsets.push(id);
            }
        }
        colsets.sort_unstable();
        Ok(Projection { stored, output, colsets, virtuals })
    }

    /// Every field of the schema.
    pub fn all(meta: &DatasetMeta) -> Result<Projection> {
        let paths: Vec<FieldPath> = meta.schema.fields.iter().map(|f| FieldPath::new(&f.name)).collect();
        Projection::new(meta, &paths)
    }
}

/// Keeps only the parts of `v` described by `node` (pruned).
fn restrict(v: &Value, node: &SchemaNode) -> Value {
    match (&node.ty, v) {
        (FieldType::Message(kids), Value::Record(r)) => Value::Record(restrict_record(r, kids)),
        (FieldType::Message(_), Value::Vector(xs)) => Value::vector(xs.iter().map(|x| restrict(x, node)).collect()),
        _ => v.clone(),
    }
}

fn restrict_record(r: &Record, nodes: &[SchemaNode]) -> Record {
    let mut out = Record::with_capacity(nodes.len());
    for n in nodes {
        if let Some(v) = r.get(&n.name) {
            out.push(n.name.as_str().into(), restrict(v, n));
        }
    }
    out
}

pub struct FdbShard {
    pub id: usize,
    pub(crate) table: Box<dyn KvRead + Send + Sync>,
    pub doc_count: u32,
    pub meta: Arc<DatasetMeta>,
}

impl FdbShard {
    pub(crate) fn new(id: usize, table: Box<dyn KvRead + Send + Sync>, meta: Arc<DatasetMeta>) -> Result<FdbShard> {
        let read_u32 = |name: &str| -> Result<u32> {
            let v = table
                .get(&meta_key(name))
                .ok_or_else(|| FdbError::Corrupt(format!("shard {id}: missing '{name}' metadata")))?;
            Ok(u32::from_le_bytes(v.try_into().map_err(|_| FdbError::Corrupt(format!("shard {id}: bad '{name}'")))?))
        };
        let doc_count = read_u32("doc_count")?;
        if read_u32("shard_id")? as usize != id {
            return Err(FdbError::Corrupt(format!("file for shard {id} carries another shard id")));
        }
        Ok(FdbShard { id, table, doc_count, meta })
    }

    pub fn schema(&self) -> &Schema {
        &self.meta.schema
    }

    pub fn all_ids(&self) -> DocIdSet {
        DocIdSet::all(self.doc_count)
    }

    /// Calls `f` for each doc in ascending id order until it returns false.
    pub fn for_each_doc(
        &self,
        proj: &Projection,
        ids: &DocIdSet,
        stats: &mut ScanStats,
        f: &mut dyn FnMut(u32, Record) -> bool,
    ) -> Result<()> {
        if let Some(&last) = ids.as_slice().last() {
            if last >= self.doc_count {
                return Err(FdbError::DocIdOutOfRange { id: last, count: self.doc_count });
            }
        }
        let meta = &*self.meta;
        let mut parts: Vec<Record> = Vec::with_capacity(proj.colsets.len());
        for &doc in ids.as_slice() {
            parts.clear();
            for &cid in &proj.colsets {
                let key = data_key(cid, doc);
                let bytes = self
                    .table
                    .get(&key)
                    .ok_or_else(|| FdbError::Corrupt(format!("shard {}: doc {doc} lacks column set {cid}", self.id)))?;
                stats.add_colset(cid, (key.len() + bytes.len()) as u64);
                parts.push(decode_record(&proj.stored, bytes)?);
            }
            let mut merged = Record::with_capacity(proj.stored.fields.len());
            for n in &proj.stored.fields {
                if let Some(v) = parts.iter().find_map(|p| p.get(&n.name)) {
                    merged.push(n.name.as_str().into(), v.clone());
                }
            }
            let mut virt = Record::new();
            for &vi in &proj.virtuals {
                let vf = &meta.virtuals[vi];
                let v = eval_virtual(&meta.schema, &meta.ctx, vf, &merged)?;
                if !v.is_null() {
                    virt.push(vf.name.as_str().into(), v);
                }
            }
            let mut out = Record::with_capacity(proj.output.fields.len());
            for n in &proj.output.fields {
                let src = if n.is_virtual() { &virt } else { &merged };
                if let Some(v) = src.get(&n.name) {
                    out.push(n.name.as_str().into(), restrict(v, n));
                }
            }
            stats.docs_scanned += 1;
            if !f(doc, out) {
                break;
            }
        }
        Ok(())
    }

    pub fn read_docs(&self, proj: &Projection, ids: &DocIdSet, stats: &mut ScanStats) -> Result<Vec<Record>> {
        let mut out = Vec::with_capacity(ids.len());
        self.for_each_doc(proj, ids, stats, &mut |_, r| {
            out.push(r);
            true
        })?;
        Ok(out)
    }

    pub fn full_scan(&self, proj: &Projection, stats: &mut ScanStats) -> Result<Vec<Record>> {
        self.read_docs(proj, &self.all_ids(), stats)
    }

    pub fn shard_stats(&self) -> ShardStats {
        let mut st = ShardStats {
            doc_count: self.doc_count,
            postings: vec![0; self.meta.manifest.indices.len()],
            ..Default::default()
        };
        self.table.scan(&[], &[], &mut |k, v| {
            let n = (k.len() + v.len()) as u64;
            match k[0] {
                META => st.meta_bytes += n,
                DATA => st.data_bytes += n,
                POSTING => {
                    st.posting_bytes += n;
                    let mut r = Reader::new(&k[1..]);
                    if let Ok(id) = r.varint() {
                        if let Some(c) = st.postings.get_mut(id as usize) {
                            *c += 1;
                        }
                    }
                }
                _ => {}
            }
        });
        st
    }

    /// Doc ids listed under one exact term, for diagnostics and tests.
    pub fn term_docs(&self, index_id: u32, term: &[u8]) -> Vec<u32> {
        let start = super::keys::term_start(index_id, term);
        let end = super::keys::term_end(index_id, term);
        let plen = super::keys::index_prefix(index_id).len();
        let mut out = Vec::new();
        self.table.scan(&start, &end, &mut |k, _| {
            if let Some((_, d)) = split_posting(k, plen) {
                out.push(d);
            }
        });
        out
    }
}

enum Storage {
    Dir(PathBuf),
    Memory,
}

/// An opened dataset. Shard files are loaded on first use.
pub struct FdbDataset {
    pub meta: Arc<DatasetMeta>,
    storage: Storage,
    shards: Mutex<Vec<Option<Arc<FdbShard>>>>,
}

impl FdbDataset {
    pub fn open(dir: &Path) -> Result<FdbDataset> {
        let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))
            .map_err(|e| FdbError::CorruptManifest(format!("{}: {e}", dir.join(MANIFEST_FILE).display())))?;
        let manifest = Manifest::parse(&text)?;
        let schema_text = std::fs::read_to_string(dir.join(&manifest.schema_file))
            .map_err(|e| FdbError::CorruptManifest(format!("schema file: {e}")))?;
        let schema = parse_schema(&schema_text)?;
        for e in &manifest.shards {
            let len = std::fs::metadata(dir.join(&e.file))
                .map_err(|err| FdbError::CorruptManifest(format!("shard file {}: {err}", e.file)))?
                .len();
            if len != e.bytes {
                return Err(FdbError::CorruptManifest(format!(
                    "shard file {} has {len} bytes, manifest says {}",
                    e.file, e.bytes
                )));
            }
        }
        let n = manifest.num_shards;
        Ok(FdbDataset {
            meta: Arc::new(DatasetMeta::new(manifest, schema)?),
            storage: Storage::Dir(dir.to_path_buf()),
            shards: Mutex::new(vec![None; n]),
        })
    }

    /// Wraps in-memory shards (see `build_mem_shards`).
    pub fn from_shards(shards: Vec<Arc<FdbShard>>) -> Result<FdbDataset> {
        let meta = shards
            .first()
            .map(|s| s.meta.clone())
            .ok_or_else(|| FdbError::CorruptManifest("no shards".into()))?;
        Ok(FdbDataset { meta, storage: Storage::Memory, shards: Mutex::new(shards.into_iter().map(Some).collect()) })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.meta.manifest
    }

    pub fn schema(&self) -> &Schema {
        &self.meta.schema
    }

    pub fn num_shards(&self) -> usize {
        self.meta.manifest.num_shards
    }

    pub fn dir(&self) -> Option<&Path> {
        match &self.storage {
            Storage::Dir(d) => Some(d),
            Storage::Memory => None,
        }
    }

    pub fn shard(&self, i: usize) -> Result<Arc<FdbShard>> {
        if i >= self.num_shards() {
            return Err(FdbError::NoSuchShard(i));
        }
        if let Some(s) = &self.shards.lock().unwrap()[i] {
            return Ok(s.clone());
        }
        let Storage::Dir(dir) = &self.storage else {
            return Err(FdbError::NoSuchShard(i));
        };
        let entry = &self.meta.manifest.shards[i];
        let buf = std::fs::read(dir.join(&entry.file))?;
        if buf.len() as u64 != entry.bytes || fnv1a64(&buf) != entry.fnv {
            return Err(FdbError::Corrupt(format!("shard file {} does not match its manifest checksum", entry.file)));
        }
        let table = SortedTable::from_bytes(buf)?;
        let shard = Arc::new(FdbShard::new(i, Box::new(table), self.meta.clone())?);
        if shard.doc_count != entry.docs {
            return Err(FdbError::Corrupt(format!("shard {i} doc count differs from manifest")));
        }
        let mut g = self.shards.lock().unwrap();
        Ok(g[i].get_or_insert(shard).clone())
    }

    pub fn projection(&self, fields: &[FieldPath]) -> Result<Projection> {
        Projection::new(&self.meta, fields)
    }

    /// Docs in every shard, per shard, in shard order.
    pub fn shard_stats(&self) -> Result<Vec<ShardStats>> {
        (0..self.num_shards()).map(|i| Ok(self.shard(i)?.shard_stats())).collect()
    }

    /// Per-index posting totals keyed by `kind path`.
    pub fn posting_totals(&self) -> Result<BTreeMap<String, u64>> {
        let mut out = BTreeMap::new();
        for st in self.shard_stats()? {
            for (d, n) in self.meta.manifest.indices.iter().zip(&st.postings) {
                *out.entry(format!("{} {}", d.kind.name(), d.path)).or_insert(0) += n;
            }
        }
        Ok(out)
    }
}

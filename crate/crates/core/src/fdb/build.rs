// SPDX-License-Identifier: Apache-2.0

use std::path::Path;
use std::sync::Arc;

use super::keys::{
    area_term, bool_term, data_key, double_term, int_term, location_term, meta_key, posting_key, string_term,
    uint_term,
};
use super::manifest::{IndexDesc, Manifest, ShardEntry, MANIFEST_FILE, SCHEMA_FILE};
use super::read::{DatasetMeta, FdbShard};
use super::table::{write_table, MemTable};
use super::{FdbError, Result};
use crate::codec::fnv1a64;
use crate::geo::{morton_encode, project};
use crate::schema::{
    conform_value, encode_record, print_schema, validate_record, FieldPath, FieldType, IndexKind, Schema,
};
use crate::value::{Record, Value};
use crate::wfl::{builtins, eval_expr, parse_expr, Env, EvalContext, Expr};

#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub name: String,
    pub num_shards: usize,
    pub shard_key: Option<FieldPath>,
}

impl BuildOptions {
    pub fn new(name: &str, num_shards: usize) -> Self {
        BuildOptions { name: name.to_string(), num_shards, shard_key: None }
    }

    pub fn shard_key(mut self, path: &str) -> Self {
        self.shard_key = Some(FieldPath::new(path));
        self
    }
}

/// Values reachable at a path, looking through repeated fields.
pub(crate) fn gather<'a>(v: &'a Value, parts: &[&str], out: &mut Vec<&'a Value>) {
    match v {
        Value::Null => {}
        Value::Vector(xs) => xs.iter().for_each(|x| gather(x, parts, out)),
        _ if parts.is_empty() => out.push(v),
        Value::Record(r) => {
            if let Some(c) = r.get(parts[0]) {
                gather(c, &parts[1..], out);
            }
        }
        _ => {}
    }
}

pub(crate) fn gather_record<'a>(r: &'a Record, path: &FieldPath, out: &mut Vec<&'a Value>) {
    let parts: Vec<&str> = path.parts().collect();
    if let Some(v) = r.get(parts[0]) {
        gather(v, &parts[1..], out);
    }
}

/// Index terms of one value, encoded for a field of type `ty`. Values that
/// cannot be indexed (NaN, out-of-band points) yield nothing.
pub(crate) fn value_terms(kind: IndexKind, ty: &FieldType, v: &Value, out: &mut Vec<Vec<u8>>) {
    match kind {
        IndexKind::Text => {
            if let Value::Str(s) = v {
                for t in builtins::text_tokens(s) {
                    out.push(string_term(t.as_bytes()));
                }
            }
        }
        IndexKind::Tag | IndexKind::Range => {
            if let Some(t) = scalar_term(ty, v) {
                out.push(t);
            }
        }
        IndexKind::Location => {
            if let Some(p) = v.as_geo_point() {
                if let Ok(g) = project(p) {
                    out.push(location_term(morton_encode(g)).to_vec());
                }
            }
        }
        IndexKind::Area => {
            if let Value::Area(a) = v {
                for c in a.cells() {
                    out.push(area_term(c).to_vec());
                }
            }
        }
    }
}

/// Fixed encoding of a scalar under the field's declared type.
pub(crate) fn scalar_term(ty: &FieldType, v: &Value) -> Option<Vec<u8>> {
    Some(match (ty, v) {
        (FieldType::String, Value::Str(s)) => string_term(s.as_bytes()),
        (FieldType::Bool, Value::Bool(b)) => bool_term(*b).to_vec(),
        (FieldType::Int, _) => int_term(exact_i64(v)?).to_vec(),
        (FieldType::Uint, _) => uint_term(exact_u64(v)?).to_vec(),
        (FieldType::Float | FieldType::Double, _) => {
            let x = v.as_f64().filter(|x| !x.is_nan())?;
            if !v.is_numeric() {
                return None;
            }
            double_term(x).to_vec()
        }
        _ => return None,
    })
}

pub(crate) fn exact_i64(v: &Value) -> Option<i64> {
    match v {
        Value::Int(i) => Some(*i),
        Value::Uint(u) => i64::try_from(*u).ok(),
        Value::Float(_) | Value::Double(_) => {
            let x = v.as_f64()?;
            (x.fract() == 0.0 && x >= -9.223372036854775808e18 && x < 9.223372036854775808e18).then_some(x as i64)
        }
        _ => None,
    }
}

pub(crate) fn exact_u64(v: &Value) -> Option<u64> {
    match v {
        Value::Int(i) => u64::try_from(*i).ok(),
        Value::Uint(u) => Some(*u),
        Value::Float(_) | Value::Double(_) => {
            let x = v.as_f64()?;
            (x.fract() == 0.0 && x >= 0.0 && x < 1.8446744073709552e19).then_some(x as u64)
        }
        _ => None,
    }
}

pub(crate) struct VirtualField {
    pub name: String,
    pub expr: Expr,
    /// Stored top-level fields the expression reads.
    pub deps: Vec<String>,
}

pub(crate) fn parse_virtuals(schema: &Schema) -> Result<Vec<VirtualField>> {
    let mut out = Vec::new();
    for n in schema.virtual_fields() {
        let src = n.virtual_expr.as_deref().unwrap_or_default();
        let expr = parse_expr(src)?;
        let mut free = Vec::new();
        expr.free_idents(&mut Vec::new(), &mut free);
        let deps = free
            .into_iter()
            .filter(|f| schema.field(f).map(|x| !x.is_virtual()).unwrap_or(false))
            .collect();
        out.push(VirtualField { name: n.name.clone(), expr, deps });
    }
    Ok(out)
}

/// Evaluates a virtual field against a stored record.
pub(crate) fn eval_virtual(schema: &Schema, ctx: &EvalContext, vf: &VirtualField, rec: &Record) -> crate::wfl::Result<Value> {
    let mut env = Env::with_scope(ctx, rec);
    let v = eval_expr(&vf.expr, &mut env)?;
    if v.is_null() {
        return Ok(Value::Null);
    }
    let node = schema.field(&vf.name).expect("virtual field in schema");
    conform_value(node, &v, &vf.name).map_err(|e| crate::wfl::WflError::Type(e.to_string()))
}

/// Entries of one shard, kept in a flat arena until sorted.
#[derive(Default)]
struct EntryBuf {
    arena: Vec<u8>,
    items: Vec<(u64, u32, u32)>,
}

impl EntryBuf {
    fn push(&mut self, k: &[u8], v: &[u8]) {
        self.items.push((self.arena.len() as u64, k.len() as u32, v.len() as u32));
        self.arena.extend_from_slice(k);
        self.arena.extend_from_slice(v);
    }

    fn key(&self, i: &(u64, u32, u32)) -> &[u8] {
        &self.arena[i.0 as usize..i.0 as usize + i.1 as usize]
    }

    fn value(&self, i: &(u64, u32, u32)) -> &[u8] {
        let s = i.0 as usize + i.1 as usize;
        &self.arena[s..s + i.2 as usize]
    }

    fn sorted(mut self) -> (EntryBuf, Vec<usize>) {
        let mut order: Vec<usize> = (0..self.items.len()).collect();
        order.sort_unstable_by(|a, b| self.key(&self.items[*a]).cmp(self.key(&self.items[*b])));
        order.dedup_by(|a, b| self.key(&self.items[*a]) == self.key(&self.items[*b]));
        self.arena.shrink_to_fit();
        (self, order)
    }
}

struct Builder<'a> {
    schema: &'a Schema,
    manifest: Manifest,
    virtuals: Vec<VirtualField>,
    ctx: EvalContext,
    shards: Vec<EntryBuf>,
    docs: Vec<u32>,
    next: usize,
}

impl<'a> Builder<'a> {
    fn new(schema: &'a Schema, opts: &BuildOptions) -> Result<Self> {
        if opts.num_shards == 0 {
            return Err(FdbError::BadQuery("num_shards must be at least 1".into()));
        }
        if let Some(k) = &opts.shard_key {
            let n = schema.resolve(k).ok_or_else(|| FdbError::Schema(crate::schema::SchemaError::UnknownPath(k.to_string())))?;
            if n.is_virtual() {
                return Err(FdbError::BadQuery(format!("shard key '{k}' cannot be a virtual field")));
            }
        }
        Ok(Builder {
            schema,
            manifest: Manifest::layout(&opts.name, schema, opts.num_shards, opts.shard_key.clone()),
            virtuals: parse_virtuals(schema)?,
            ctx: EvalContext::default(),
            shards: (0..opts.num_shards).map(|_| EntryBuf::default()).collect(),
            docs: vec![0; opts.num_shards],
            next: 0,
        })
    }

    fn shard_for(&mut self, rec: &Record) -> usize {
        let n = self.shards.len();
        match &self.manifest.shard_key {
            Some(k) => {
                let mut vals = Vec::new();
                gather_record(rec, k, &mut vals);
                let key = vals.first().map_or_else(|| Value::Null.key_bytes(), |v| v.key_bytes());
                (fnv1a64(&key) % n as u64) as usize
            }
            None => {
                let s = self.next % n;
                self.next += 1;
                s
            }
        }
    }

    fn add(&mut self, index: usize, raw: &Record) -> Result<()> {
        let rec = validate_record(self.schema, raw).map_err(|source| FdbError::Validation { index, source })?;
        let mut virt = Record::new();
        for vf in &self.virtuals {
            let v = eval_virtual(self.schema, &self.ctx, vf, &rec)
                .map_err(|source| FdbError::VirtualField { index, field: vf.name.clone(), source })?;
            if !v.is_null() {
                virt.push(vf.name.as_str().into(), v);
            }
        }
        let s = self.shard_for(&rec);
        let doc = self.docs[s];
        self.docs[s] += 1;
        let buf = &mut self.shards[s];
        for (cid, cs) in self.manifest.colsets.iter().enumerate() {
            let bytes = encode_record(self.schema, &rec, Some(cs))?;
            buf.push(&data_key(cid as u32, doc), &bytes);
        }
        let mut terms = Vec::new();
        for d in &self.manifest.indices {
            terms.clear();
            doc_terms(self.schema, d, &rec, &virt, &mut terms);
            terms.sort();
            terms.dedup();
            for t in &terms {
                buf.push(&posting_key(d.id, t, doc), &[]);
            }
        }
        Ok(())
    }

    fn finish_shard(&self, buf: EntryBuf, shard: usize) -> Result<Vec<u8>> {
        let mut buf = buf;
        buf.push(&meta_key("doc_count"), &self.docs[shard].to_le_bytes());
        buf.push(&meta_key("shard_id"), &(shard as u32).to_le_bytes());
        let (buf, order) = buf.sorted();
        write_table(order.iter().map(|&i| (buf.key(&buf.items[i]), buf.value(&buf.items[i]))))
    }
}

/// Distinct index terms of one document for one index.
pub(crate) fn doc_terms(schema: &Schema, d: &IndexDesc, rec: &Record, virt: &Record, out: &mut Vec<Vec<u8>>) {
    let node = match schema.resolve(&d.path) {
        Some(n) => n,
        None => return,
    };
    let src = if node.is_virtual() { virt } else { rec };
    let mut vals = Vec::new();
    gather_record(src, &d.path, &mut vals);
    for v in vals {
        value_terms(d.kind, &node.ty, v, out);
    }
}

/// Builds a dataset directory. Returns the written manifest.
pub fn build_fdb<I>(schema: &Schema, records: I, opts: &BuildOptions, out_dir: &Path) -> Result<Manifest>
where
    I: IntoIterator<Item = Record>,
{
    let mut b = Builder::new(schema, opts)?;
    for (i, r) in records.into_iter().enumerate() {
        b.add(i, &r)?;
    }
    std::fs::create_dir_all(out_dir)?;
    let bufs = std::mem::take(&mut b.shards);
    let mut entries = Vec::new();
    for (i, buf) in bufs.into_iter().enumerate() {
        let bytes = b.finish_shard(buf, i)?;
        let file = format!("shard-{i:05}.tst");
        write_atomic(&out_dir.join(&file), &bytes)?;
        entries.push(ShardEntry { id: i, file, docs: b.docs[i], bytes: bytes.len() as u64, fnv: fnv1a64(&bytes) });
    }
    let mut m = b.manifest;
    m.shards = entries;
    write_atomic(&out_dir.join(SCHEMA_FILE), print_schema(schema).as_bytes())?;
    write_atomic(&out_dir.join(MANIFEST_FILE), m.to_text().as_bytes())?;
    Ok(m)
}

/// Builds shards into in-memory tables instead of files.
pub fn build_mem_shards<I>(schema: &Schema, records: I, opts: &BuildOptions) -> Result<(Manifest, Vec<Arc<FdbShard>>)>
where
    I: IntoIterator<Item = Record>,
{
    let mut b = Builder::new(schema, opts)?;
    for (i, r) in records.into_iter().enumerate() {
        b.add(i, &r)?;
    }
    let bufs = std::mem::take(&mut b.shards);
    let mut m = b.manifest.clone();
    let meta = Arc::new(DatasetMeta::new(b.manifest.clone(), schema.clone())?);
    let mut shards = Vec::new();
    for (i, buf) in bufs.into_iter().enumerate() {
        let (buf, order) = buf.sorted();
        let mut t = MemTable::new();
        for &j in &order {
            t.put(buf.key(&buf.items[j]).to_vec(), buf.value(&buf.items[j]).to_vec());
        }
        t.put(meta_key("doc_count"), b.docs[i].to_le_bytes().to_vec());
        t.put(meta_key("shard_id"), (i as u32).to_le_bytes().to_vec());
        m.shards.push(ShardEntry { id: i, file: String::new(), docs: b.docs[i], bytes: 0, fnv: 0 });
        shards.push(Arc::new(FdbShard::new(i, Box::new(t), meta.clone())?));
    }
    Ok((m, shards))
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

// SPDX-License-Identifier: Apache-2.0

//! Record streams: a schema header followed by length-prefixed encoded
//! records. Used for checkpointed shard results and `save("record-stream")`.

use std::path::Path;

use super::{EngineError, Result};
use crate::codec::{put_bytes, Reader};
use crate::schema::{decode_record, encode_record, parse_schema, print_schema, Schema};
use crate::value::Record;

pub const STREAM_MAGIC: &[u8; 4] = b"TSRS";
pub const STREAM_VERSION: u32 = 1;

pub fn encode_stream(schema: &Schema, records: &[Record]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(STREAM_MAGIC);
    out.extend(STREAM_VERSION.to_le_bytes());
    put_bytes(&mut out, print_schema(schema).as_bytes());
    for r in records {
        put_bytes(&mut out, &encode_record(schema, r, None)?);
    }
    Ok(out)
}

/// Appends already-encoded records to a stream header.
pub(crate) fn encode_stream_raw(schema: &Schema, records: &[Vec<u8>]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(STREAM_MAGIC);
    out.extend(STREAM_VERSION.to_le_bytes());
    put_bytes(&mut out, print_schema(schema).as_bytes());
    for r in records {
        put_bytes(&mut out, r);
    }
    out
}

pub fn decode_stream(buf: &[u8]) -> Result<(Schema, Vec<Record>)> {
    let (schema, raw) = decode_stream_raw(buf)?;
    let recs = raw.iter().map(|b| decode_record(&schema, b)).collect::<std::result::Result<_, _>>()?;
    Ok((schema, recs))
}

/// Splits a stream into its schema and still-encoded records.
pub(crate) fn decode_stream_raw(buf: &[u8]) -> Result<(Schema, Vec<Vec<u8>>)> {
    let bad = |m: &str| EngineError::CorruptStream(m.to_string());
    let mut r = Reader::new(buf);
    if r.take(4).map_err(|_| bad("truncated header"))? != STREAM_MAGIC {
        return Err(bad("bad magic"));
    }
    let v = u32::from_le_bytes(r.array().map_err(|_| bad("truncated header"))?);
    if v != STREAM_VERSION {
        return Err(bad(&format!("version {v} is not supported")));
    }
    let text = std::str::from_utf8(r.bytes().map_err(|_| bad("truncated schema"))?).map_err(|_| bad("schema is not UTF-8"))?;
    let schema = parse_schema(text)?;
    let mut out = Vec::new();
    while !r.is_empty() {
        let rec = r.bytes().map_err(|_| bad(&format!("record {} is truncated", out.len())))?;
        out.push(rec.to_vec());
    }
    Ok((schema, out))
}

pub fn write_stream(path: &Path, schema: &Schema, records: &[Record]) -> Result<()> {
    write_atomic(path, &encode_stream(schema, records)?)
}

pub fn read_stream(path: &Path) -> Result<(Schema, Vec<Record>)> {
    decode_stream(&std::fs::read(path)?)
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

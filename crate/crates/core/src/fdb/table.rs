// SPDX-License-Identifier: Apache-2.0

//! Ordered key-value tables: an immutable sorted-table file and an in-memory
//! mutable variant. The file layout is described in `docs/formats.md`.

use std::collections::BTreeMap;
use std::ops::Bound;
use std::path::Path;

use super::{FdbError, Result};
use crate::codec::{fnv1a64, put_varint, Reader};

pub const TABLE_MAGIC: &[u8; 4] = b"TSFT";
pub const TABLE_VERSION: u32 = 1;
pub const FOOTER_LEN: usize = 40;
const BLOCK_TARGET: usize = 4096;

/// Read access shared by both table variants. `scan` visits keys in
/// `[lo, hi)` in ascending order; an empty `hi` means unbounded.
pub trait KvRead {
    fn get(&self, key: &[u8]) -> Option<&[u8]>;
    fn scan(&self, lo: &[u8], hi: &[u8], f: &mut dyn FnMut(&[u8], &[u8]));
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// In-memory ordered table; the read-write variant.
#[derive(Debug, Default, Clone)]
pub struct MemTable {
    map: BTreeMap<Vec<u8>, Vec<u8>>,
}

impl MemTable {
    pub fn new() -> Self {
        MemTable::default()
    }

    pub fn put(&mut self, key: Vec<u8>, value: Vec<u8>) {
        self.map.insert(key, value);
    }

    pub fn delete(&mut self, key: &[u8]) -> bool {
        self.map.remove(key).is_some()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[u8], &[u8])> {
        self.map.iter().map(|(k, v)| (k.as_slice(), v.as_slice()))
    }
}

impl KvRead for MemTable {
    fn get(&self, key: &[u8]) -> Option<&[u8]> {
        self.map.get(key).map(Vec::as_slice)
    }

    fn scan(&self, lo: &[u8], hi: &[u8], f: &mut dyn FnMut(&[u8], &[u8])) {
        if !hi.is_empty() && lo >= hi {
            return;
        }
        let upper = if hi.is_empty() { Bound::Unbounded } else { Bound::Excluded(hi) };
        for (k, v) in self.map.range::<[u8], _>((Bound::Included(lo), upper)) {
            f(k, v);
        }
    }

    fn len(&self) -> usize {
        self.map.len()
    }
}

/// Serializes entries (which must be strictly ascending by key) into the
/// sorted-table file format.
pub fn write_table<'a, I>(entries: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = (&'a [u8], &'a [u8])>,
{
    let mut out = Vec::new();
    let mut index: Vec<(Vec<u8>, u64, u32, u64)> = Vec::new();
    let mut block = Vec::new();
    let mut first: Option<Vec<u8>> = None;
    let mut prev: Option<Vec<u8>> = None;
    let mut count = 0u64;
    let mut flush = |block: &mut Vec<u8>, first: &mut Option<Vec<u8>>, out: &mut Vec<u8>| {
        if let Some(fk) = first.take() {
            index.push((fk, out.len() as u64, block.len() as u32, fnv1a64(block)));
            out.extend_from_slice(block);
            block.clear();
        }
    };
    for (k, v) in entries {
        if let Some(p) = &prev {
            if p.as_slice() >= k {
                return Err(FdbError::Corrupt("table keys must be strictly ascending".into()));
            }
        }
        prev = Some(k.to_vec());
        if first.is_none() {
            first = Some(k.to_vec());
        }
        put_varint(&mut block, k.len() as u64);
        block.extend_from_slice(k);
        put_varint(&mut block, v.len() as u64);
        block.extend_from_slice(v);
        count += 1;
        if block.len() >= BLOCK_TARGET {
            flush(&mut block, &mut first, &mut out);
        }
    }
    flush(&mut block, &mut first, &mut out);
    drop(flush);
    let index_offset = out.len() as u64;
    let mut idx = Vec::new();
    put_varint(&mut idx, index.len() as u64);
    for (fk, off, len, sum) in &index {
        put_varint(&mut idx, fk.len() as u64);
        idx.extend_from_slice(fk);
        idx.extend(off.to_le_bytes());
        idx.extend(len.to_le_bytes());
        idx.extend(sum.to_le_bytes());
    }
    out.extend_from_slice(&idx);
    out.extend(index_offset.to_le_bytes());
    out.extend((idx.len() as u64).to_le_bytes());
    out.extend(fnv1a64(&idx).to_le_bytes());
    out.extend(count.to_le_bytes());
    out.extend(TABLE_VERSION.to_le_bytes());
    out.extend_from_slice(TABLE_MAGIC);
    Ok(out)
}

/// Immutable sorted table loaded fully into memory. Every block checksum is
/// verified on open, so a damaged file fails to open instead of answering.
#[derive(Debug)]
pub struct SortedTable {
    buf: Vec<u8>,
    /// (key offset, key len, value offset, value len) per entry.
    entries: Vec<(u32, u32, u32, u32)>,
}

impl SortedTable {
    pub fn open(path: &Path) -> Result<SortedTable> {
        let buf = std::fs::read(path)?;
        SortedTable::from_bytes(buf).map_err(|e| match e {
            FdbError::Corrupt(m) => FdbError::Corrupt(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn from_bytes(buf: Vec<u8>) -> Result<SortedTable> {
        let corrupt = |m: &str| FdbError::Corrupt(m.to_string());
        if buf.len() < FOOTER_LEN {
            return Err(corrupt("file shorter than footer"));
        }
        if buf.len() > u32::MAX as usize {
            return Err(corrupt("table larger than 4 GiB"));
        }
        let f = &buf[buf.len() - FOOTER_LEN..];
        let u64_at = |i: usize| u64::from_le_bytes(f[i..i + 8].try_into().unwrap());
        if &f[36..40] != TABLE_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = u32::from_le_bytes(f[32..36].try_into().unwrap());
        if version != TABLE_VERSION {
            return Err(FdbError::VersionMismatch { found: version, expected: TABLE_VERSION });
        }
        let (index_offset, index_len, index_sum, count) = (u64_at(0), u64_at(8), u64_at(16), u64_at(24));
        let body_end = (buf.len() - FOOTER_LEN) as u64;
        if index_offset.checked_add(index_len) != Some(body_end) {
            return Err(corrupt("index bounds do not match footer"));
        }
        let idx = &buf[index_offset as usize..body_end as usize];
        if fnv1a64(idx) != index_sum {
            return Err(corrupt("index checksum mismatch"));
        }
        let trunc = |_| corrupt("truncated index");
        let mut r = Reader::new(idx);
        let n = r.varint().map_err(trunc)?;
        let mut entries = Vec::new();
        let mut expect_off = 0u64;
        let mut prev: Option<&[u8]> = None;
        for _ in 0..n {
            let fk = r.bytes().map_err(trunc)?;
            let off = u64::from_le_bytes(r.array().map_err(trunc)?);
            let len = u32::from_le_bytes(r.array().map_err(trunc)?) as u64;
            let sum = u64::from_le_bytes(r.array().map_err(trunc)?);
            if off != expect_off || off + len > index_offset {
                return Err(corrupt("block offsets are not contiguous"));
            }
            expect_off = off + len;
            let block = &buf[off as usize..(off + len) as usize];
            if fnv1a64(block) != sum {
                return Err(corrupt("block checksum mismatch"));
            }
            let mut br = Reader::new(block);
            let mut first = true;
            while !br.is_empty() {
                let k = br.bytes().map_err(|_| corrupt("truncated block"))?;
                let kstart = off as usize + br.pos() - k.len();
                let v = br.bytes().map_err(|_| corrupt("truncated block"))?;
                let vstart = off as usize + br.pos() - v.len();
                if first && k != fk {
                    return Err(corrupt("block first key mismatch"));
                }
                first = false;
                if let Some(p) = prev {
                    if p >= k {
                        return Err(corrupt("keys out of order"));
                    }
                }
                prev = Some(k);
                entries.push((kstart as u32, k.len() as u32, vstart as u32, v.len() as u32));
            }
        }
        if expect_off != index_offset {
            return Err(corrupt("data before index not covered by blocks"));
        }
        if entries.len() as u64 != count {
            return Err(corrupt("entry count mismatch"));
        }
        Ok(SortedTable { buf, entries })
    }

    fn key(&self, i: usize) -> &[u8] {
        let (ko, kl, _, _) = self.entries[i];
        &self.buf[ko as usize..(ko + kl) as usize]
    }

    fn value(&self, i: usize) -> &[u8] {
        let (_, _, vo, vl) = self.entries[i];
        &self.buf[vo as usize..(vo + vl) as usize]
    }

    fn lower_bound(&self, key: &[u8]) -> usize {
        self.entries.partition_point(|&(ko, kl, _, _)| &self.buf[ko as usize..(ko + kl) as usize] < key)
    }

    pub fn file_len(&self) -> usize {
        self.buf.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[u8], &[u8])> {
        (0..self.entries.len()).map(|i| (self.key(i), self.value(i)))
    }
}

impl KvRead for SortedTable {
    fn get(&self, key: &[u8]) -> Option<&[u8]> {
        let i = self.lower_bound(key);
        (i < self.entries.len() && self.key(i) == key).then(|| self.value(i))
    }

    fn scan(&self, lo: &[u8], hi: &[u8], f: &mut dyn FnMut(&[u8], &[u8])) {
        let mut i = self.lower_bound(lo);
        while i < self.entries.len() {
            let k = self.key(i);
            if !hi.is_empty() && k >= hi {
                break;
            }
            f(k, self.value(i));
            i += 1;
        }
    }

    fn len(&self) -> usize {
        self.entries.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn build(map: &BTreeMap<Vec<u8>, Vec<u8>>) -> SortedTable {
        let bytes = write_table(map.iter().map(|(k, v)| (k.as_slice(), v.as_slice()))).unwrap();
        SortedTable::from_bytes(bytes).unwrap()
    }

    #[test]
    fn empty_table() {
        let t = build(&BTreeMap::new());
        assert_eq!(t.len(), 0);
        assert_eq!(t.file_len(), FOOTER_LEN + 1);
        assert!(t.get(b"a").is_none());
    }

    #[test]
    fn rejects_unsorted_input() {
        let e = write_table([(&b"b"[..], &b""[..]), (&b"a"[..], &b""[..])]);
        assert!(matches!(e, Err(FdbError::Corrupt(_))));
    }

    #[test]
    fn every_truncation_fails_to_open() {
        let mut map = BTreeMap::new();
        for i in 0..500u32 {
            map.insert(i.to_be_bytes().to_vec(), vec![i as u8; 20]);
        }
        let bytes = write_table(map.iter().map(|(k, v)| (k.as_slice(), v.as_slice()))).unwrap();
        for cut in (0..bytes.len()).step_by(97) {
            assert!(SortedTable::from_bytes(bytes[..cut].to_vec()).is_err(), "cut {cut}");
        }
        let mut flipped = bytes.clone();
        flipped[1000] ^= 1;
        assert!(SortedTable::from_bytes(flipped).is_err());
    }

    proptest! {
        #[test]
        fn matches_btreemap(
            entries in proptest::collection::btree_map(
                proptest::collection::vec(any::<u8>(), 0..12),
                proptest::collection::vec(any::<u8>(), 0..300),
                0..400,
            ),
            lo in proptest::collection::vec(any::<u8>(), 0..4),
            hi in proptest::collection::vec(any::<u8>(), 0..4),
        ) {
            let t = build(&entries);
            let mut mem = MemTable::new();
            for (k, v) in &entries {
                mem.put(k.clone(), v.clone());
            }
            prop_assert_eq!(t.len(), entries.len());
            for (k, v) in &entries {
                prop_assert_eq!(t.get(k), Some(v.as_slice()));
            }
            let mut a = Vec::new();
            t.scan(&lo, &hi, &mut |k, v| a.push((k.to_vec(), v.to_vec())));
            let mut b = Vec::new();
            mem.scan(&lo, &hi, &mut |k, v| b.push((k.to_vec(), v.to_vec())));
            let want: Vec<(Vec<u8>, Vec<u8>)> = entries
                .iter()
                .filter(|(k, _)| **k >= lo && (hi.is_empty() || **k < hi))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect();
            prop_assert_eq!(&a, &want);
            prop_assert_eq!(&b, &want);
        }
    }
}

// SPDX-License-Identifier: Apache-2.0

//! Key layout of a shard table and order-preserving term encodings.
//!
//! ```text
//! metadata  'M' name
//! posting   'I' varint(index_id) term 0x00 0x00 u32be(doc)
//! data      'D' varint(colset_id) u32be(doc)
//! ```

use crate::codec::{put_varint, Reader};
use crate::geo::CellId;

pub const META: u8 = b'M';
pub const POSTING: u8 = b'I';
pub const DATA: u8 = b'D';

pub fn meta_key(name: &str) -> Vec<u8> {
    let mut k = vec![META];
    k.extend_from_slice(name.as_bytes());
    k
}

pub fn index_prefix(index_id: u32) -> Vec<u8> {
    let mut k = vec![POSTING];
    put_varint(&mut k, index_id as u64);
    k
}

pub fn posting_key(index_id: u32, term: &[u8], doc: u32) -> Vec<u8> {
    let mut k = index_prefix(index_id);
    k.extend_from_slice(term);
    k.extend([0, 0]);
    k.extend(doc.to_be_bytes());
    k
}

/// Start key of all postings of `term`.
pub fn term_start(index_id: u32, term: &[u8]) -> Vec<u8> {
    let mut k = index_prefix(index_id);
    k.extend_from_slice(term);
    k.extend([0, 0]);
    k
}

/// End key (exclusive) of all postings of `term`.
pub fn term_end(index_id: u32, term: &[u8]) -> Vec<u8> {
    let mut k = index_prefix(index_id);
    k.extend_from_slice(term);
    k.extend([0, 1]);
    k
}

/// Splits a posting key into (term, doc) given the index prefix length.
pub fn split_posting(key: &[u8], prefix_len: usize) -> Option<(&[u8], u32)> {
    if key.len() < prefix_len + 6 {
        return None;
    }
    let n = key.len();
    if key[n - 6..n - 4] != [0, 0] {
        return None;
    }
    let doc = u32::from_be_bytes(key[n - 4..].try_into().ok()?);
    Some((&key[prefix_len..n - 6], doc))
}

pub fn data_prefix(colset_id: u32) -> Vec<u8> {
    let mut k = vec![DATA];
    put_varint(&mut k, colset_id as u64);
    k
}

pub fn data_key(colset_id: u32, doc: u32) -> Vec<u8> {
    let mut k = data_prefix(colset_id);
    k.extend(doc.to_be_bytes());
    k
}

pub fn decode_data_key(key: &[u8]) -> Option<(u32, u32)> {
    if key.first() != Some(&DATA) {
        return None;
    }
    let mut r = Reader::new(&key[1..]);
    let cs = r.varint().ok()? as u32;
    let doc = u32::from_be_bytes(r.remaining().try_into().ok()?);
    Some((cs, doc))
}

/// Text and tag strings. 0x00 becomes 0x00 0xFF so the 0x00 0x00 terminator
/// sorts below every continuation.
pub fn string_term(s: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(s.len() + 1);
    for &b in s {
        out.push(b);
        if b == 0 {
            out.push(0xFF);
        }
    }
    out
}

pub fn int_term(v: i64) -> [u8; 8] {
    ((v as u64) ^ (1 << 63)).to_be_bytes()
}

pub fn uint_term(v: u64) -> [u8; 8] {
    v.to_be_bytes()
}

/// Sign-folded IEEE bits: ascending byte order equals ascending value. `-0.0`
/// is folded onto `0.0`; NaN is never indexed.
pub fn double_term(v: f64) -> [u8; 8] {
    let v = if v == 0.0 { 0.0 } else { v };
    let b = v.to_bits();
    let folded = if b >> 63 == 1 { !b } else { b | (1 << 63) };
    folded.to_be_bytes()
}

pub fn bool_term(v: bool) -> [u8; 1] {
    [v as u8]
}

pub fn location_term(code: u64) -> [u8; 8] {
    code.to_be_bytes()
}

pub fn decode_location_term(t: &[u8]) -> Option<u64> {
    Some(u64::from_be_bytes(t.try_into().ok()?))
}

pub fn area_term(c: CellId) -> [u8; 9] {
    let mut t = [0u8; 9];
    t[0] = c.level;
    t[1..].copy_from_slice(&c.code.to_be_bytes());
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn posting_roundtrip_and_order() {
        let p = index_prefix(3);
        let k = posting_key(3, &string_term(b"a\0b"), 77);
        assert_eq!(split_posting(&k, p.len()), Some((&string_term(b"a\0b")[..], 77)));
        // "a" sorts before "a\0" which sorts before "ab".
        let a = posting_key(3, &string_term(b"a"), u32::MAX);
        let a0 = posting_key(3, &string_term(b"a\0"), 0);
        let ab = posting_key(3, &string_term(b"ab"), 0);
        assert!(a < a0 && a0 < ab);
        assert_eq!(decode_data_key(&data_key(300, 9)), Some((300, 9)));
    }

    #[test]
    fn double_edges() {
        assert_eq!(double_term(-0.0), double_term(0.0));
        assert!(double_term(f64::NEG_INFINITY) < double_term(-f64::MAX));
        assert!(double_term(f64::MAX) < double_term(f64::INFINITY));
        assert!(double_term(-f64::MIN_POSITIVE) < double_term(0.0));
    }

    proptest! {
        #[test]
        fn int_order(a: i64, b: i64) {
            prop_assert_eq!(a.cmp(&b), int_term(a).cmp(&int_term(b)));
        }

        #[test]
        fn double_order(a in any::<f64>().prop_filter("nan", |x| !x.is_nan()),
                        b in any::<f64>().prop_filter("nan", |x| !x.is_nan())) {
            let want = a.partial_cmp(&b).unwrap();
            prop_assert_eq!(want, double_term(a).cmp(&double_term(b)));
        }

        #[test]
        fn string_order(a: Vec<u8>, b: Vec<u8>, da: u32, db: u32) {
            let ka = posting_key(1, &string_term(&a), da);
            let kb = posting_key(1, &string_term(&b), db);
            prop_assert_eq!(ka.cmp(&kb), a.cmp(&b).then(da.cmp(&db)));
        }
    }
}

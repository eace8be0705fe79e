// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::schema::{parse_schema, FieldPath, Schema};
use crate::value::{Record, Value};
use crate::testkit::{gen_index_docs as gen_docs, index_query_matches as brute, random_index_query as random_query, INDEX_SCHEMA};

fn schema() -> Schema {
    parse_schema(INDEX_SCHEMA).unwrap()
}

fn build(docs: &[Record], shards: usize) -> (tempfile::TempDir, FdbDataset) {
    let dir = tempfile::tempdir().unwrap();
    build_fdb(&schema(), docs.to_vec(), &BuildOptions::new("docs", shards).shard_key("id"), dir.path()).unwrap();
    let ds = FdbDataset::open(dir.path()).unwrap();
    (dir, ds)
}

#[test]
fn empty_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let m = build_fdb(&schema(), Vec::new(), &BuildOptions::new("e", 3), dir.path()).unwrap();
    assert_eq!(m.total_docs(), 0);
    let ds = FdbDataset::open(dir.path()).unwrap();
    for i in 0..3 {
        let s = ds.shard(i).unwrap();
        assert_eq!(s.doc_count, 0);
        let st = s.shard_stats();
        assert_eq!((st.doc_count, st.posting_bytes, st.data_bytes), (0, 0, 0));
        assert!(s.full_scan(&Projection::all(&ds.meta).unwrap(), &mut ScanStats::default()).unwrap().is_empty());
    }
}

#[test]
fn select_matches_brute_force() {
    let docs = gen_docs(2000, 1);
    let (_d, ds) = build(&docs, 4);
    let proj = Projection::all(&ds.meta).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let shards: Vec<_> = (0..4).map(|i| ds.shard(i).unwrap()).collect();
    let full: Vec<Vec<Record>> =
        shards.iter().map(|s| s.full_scan(&proj, &mut ScanStats::default()).unwrap()).collect();
    for _ in 0..300 {
        let (q, exact) = random_query(&mut rng, 2);
        for (s, recs) in shards.iter().zip(&full) {
            let got = s.select(&q, &mut ScanStats::default()).unwrap();
            let want: Vec<u32> = (0..recs.len() as u32).filter(|&i| brute(&q, &recs[i as usize])).collect();
            let residual: Vec<u32> = got.as_slice().iter().copied().filter(|&i| brute(&q, &recs[i as usize])).collect();
            assert_eq!(residual, want, "{}", q.describe());
            if exact {
                assert_eq!(got.as_slice(), &want[..], "{}", q.describe());
            }
        }
    }
}

#[test]
fn range_edges() {
    let docs = gen_docs(500, 3);
    let (_d, ds) = build(&docs, 1);
    let s = ds.shard(0).unwrap();
    let all = s.select(&IndexQuery::Range { path: FieldPath::new("x"), lo: None, hi: None }, &mut ScanStats::default());
    assert_eq!(all.unwrap().len(), 500);
    let none = IndexQuery::TagEq { path: FieldPath::new("tags"), value: Value::str("absent") };
    assert!(s.select(&none, &mut ScanStats::default()).unwrap().is_empty());
    let nan = IndexQuery::Range {
        path: FieldPath::new("x"),
        lo: Some(Bound { value: Value::Double(f64::NAN), inclusive: true }),
        hi: None,
    };
    assert!(s.select(&nan, &mut ScanStats::default()).unwrap().is_empty());
    let e = s.select(&IndexQuery::TagEq { path: FieldPath::new("radius"), value: Value::Int(1) }, &mut ScanStats::default());
    assert!(matches!(e, Err(FdbError::UnindexedField(_))));
}

#[test]
fn three_tokens_three_postings() {
    let s = parse_schema("message T { body: string [index_text]; }").unwrap();
    let mut r = Record::new();
    r.set("body", Value::str("Hello, brave new-world"));
    let mut r2 = Record::new();
    r2.set("body", Value::str("one two three"));
    let (m, shards) = build_mem_shards(&s, vec![r2, r], &BuildOptions::new("t", 1)).unwrap();
    assert_eq!(m.indices.len(), 1);
    let got = shards[0].shard_stats();
    assert_eq!(got.postings, vec![7]);
    assert_eq!(shards[0].term_docs(0, b"three"), vec![0]);
}

#[test]
fn shard_membership_is_permutation_invariant() {
    let docs = gen_docs(1000, 4);
    let members = |docs: Vec<Record>| -> Vec<BTreeSet<i64>> {
        let (_d, ds) = build(&docs, 5);
        let proj = ds.projection(&[FieldPath::new("id")]).unwrap();
        (0..5)
            .map(|i| {
                let recs = ds.shard(i).unwrap().full_scan(&proj, &mut ScanStats::default()).unwrap();
                recs.iter().map(|r| r.get("id").unwrap().as_i64().unwrap()).collect()
            })
            .collect()
    };
    let mut shuffled = docs.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for i in (1..shuffled.len()).rev() {
        shuffled.swap(i, rng.gen_range(0..=i));
    }
    assert_eq!(members(docs), members(shuffled));
}

#[test]
fn identical_input_gives_identical_files() {
    let docs = gen_docs(300, 5);
    let (a, _) = build(&docs, 3);
    let (b, _) = build(&docs, 3);
    for f in ["MANIFEST", "schema.txt", "shard-00000.tst", "shard-00002.tst"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap());
    }
}

#[test]
fn read_roundtrip_and_column_isolation() {
    let docs = gen_docs(400, 6);
    let (_d, ds) = build(&docs, 1);
    let s = ds.shard(0).unwrap();
    let mut st = ScanStats::default();
    let got = s.full_scan(&ds.projection(&[FieldPath::new("x")]).unwrap(), &mut st).unwrap();
    assert_eq!(got.len(), 400);
    let nums = ds.manifest().colset_id("nums").unwrap() as usize;
    let touched: Vec<usize> = st.colset_bytes.iter().enumerate().filter(|(_, b)| **b > 0).map(|(i, _)| i).collect();
    assert_eq!(touched, vec![nums]);
    for (g, d) in got.iter().zip(&docs) {
        assert_eq!(g.get("x"), d.get("x"));
        assert_eq!(g.len(), 1);
    }
    let all = s.full_scan(&Projection::all(&ds.meta).unwrap(), &mut ScanStats::default()).unwrap();
    for (g, d) in all.iter().zip(&docs) {
        for (k, v) in d.iter() {
            assert_eq!(g.get(k), Some(v), "{k}");
        }
        assert!(matches!(g.get("zone"), Some(Value::Area(_))));
    }
    // Virtual fields pull in their dependencies but do not return them.
    let z = s.read_docs(&ds.projection(&[FieldPath::new("zone")]).unwrap(), &DocIdSet::all(3), &mut ScanStats::default());
    let z = z.unwrap();
    assert_eq!(z[0].names().collect::<Vec<_>>(), vec!["zone"]);
    assert!(s.read_docs(&ds.projection(&[]).unwrap(), &DocIdSet::empty(), &mut ScanStats::default()).unwrap().is_empty());
    let e = s.read_docs(&ds.projection(&[]).unwrap(), &DocIdSet::from_unsorted(vec![400]), &mut ScanStats::default());
    assert!(matches!(e, Err(FdbError::DocIdOutOfRange { .. })));
}

#[test]
fn posting_recount() {
    let docs = gen_docs(600, 7);
    let (_d, ds) = build(&docs, 2);
    let proj = Projection::all(&ds.meta).unwrap();
    for i in 0..2 {
        let s = ds.shard(i).unwrap();
        let recs = s.full_scan(&proj, &mut ScanStats::default()).unwrap();
        let st = s.shard_stats();
        for d in &ds.manifest().indices {
            let mut n = 0u64;
            for r in &recs {
                let mut vals = Vec::new();
                super::build::gather_record(r, &d.path, &mut vals);
                let mut terms = BTreeSet::new();
                for v in vals {
                    terms.extend(s.terms_of(&d.path, d.kind, v).unwrap());
                }
                n += terms.len() as u64;
            }
            assert_eq!(st.postings[d.id as usize], n, "{}", d.path);
        }
    }
}

#[test]
fn corrupt_inputs_are_rejected() {
    let docs = gen_docs(200, 8);
    let (d, _) = build(&docs, 2);
    let shard = d.path().join("shard-00001.tst");
    let bytes = std::fs::read(&shard).unwrap();
    std::fs::write(&shard, &bytes[..bytes.len() / 2]).unwrap();
    assert!(matches!(FdbDataset::open(d.path()), Err(FdbError::CorruptManifest(_))));
    let m = std::fs::read_to_string(d.path().join("MANIFEST")).unwrap();
    std::fs::write(&shard, &bytes).unwrap();
    std::fs::write(d.path().join("MANIFEST"), m.replace("num_shards 2", "num_shards 3")).unwrap();
    assert!(FdbDataset::open(d.path()).is_err());
    std::fs::write(d.path().join("MANIFEST"), &m).unwrap();
    let mut flipped = bytes.clone();
    flipped[10] ^= 0x40;
    std::fs::write(&shard, &flipped).unwrap();
    let ds = FdbDataset::open(d.path()).unwrap();
    assert!(ds.shard(0).is_ok());
    assert!(matches!(ds.shard(1), Err(FdbError::Corrupt(_))));
}

#[test]
fn validation_error_names_record() {
    let mut docs = gen_docs(10, 9);
    docs[7].set("n", Value::str("seven"));
    let dir = tempfile::tempdir().unwrap();
    let e = build_fdb(&schema(), docs, &BuildOptions::new("v", 1), dir.path()).unwrap_err();
    assert!(matches!(e, FdbError::Validation { index: 7, .. }), "{e}");
}

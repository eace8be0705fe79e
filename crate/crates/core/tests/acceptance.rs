// SPDX-License-Identifier: Apache-2.0

//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line to
//! stdout (written past the test harness capture) and the test fails if any
//! criterion fails. Tolerances and time limits are pinned below.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use tesserflow::demo::{self, DemoConfig, Selection, QUERIES as DEMO_QUERIES};
use tesserflow::engine::{
    execute_adhoc, execute_batch, plan, results_match, run_reference, AdhocOptions, BatchOptions, Catalog,
    CheckpointManifest, FailureHook, Op, PlanOptions, ReadSet, Session, ShardStatus, CHECKPOINT_FILE,
};
use tesserflow::fdb::{build_fdb, build_mem_shards, BuildOptions, FdbDataset, Projection, ScanStats};
use tesserflow::geo::{
    project, unproject, AreaTree, CellId, CombineOp, GeoPoint, GridPoint, LatLngRect, Polygon, Polyline, GRID_BITS,
    MAX_ABS_LAT,
};
use tesserflow::schema::{parse_schema, prune_schema};
use tesserflow::testkit::{self, gen_index_docs, index_query_matches, random_index_query, INDEX_SCHEMA};
use tesserflow::value::{Record, Value};
use tesserflow::wfl::sketch::{Bloom, Hll};
use tesserflow::wfl::EvalContext;

const C1_QUERIES: usize = 500;
const C1_DOCS: usize = 10_000;
const C1_LIMIT: Duration = Duration::from_secs(120);
const C2_PAIRS: usize = 200;
const C3_POINTS: usize = 100_000;
const C3_MAX_ERR_DEG: f64 = 2.5e-7;
const C4_LIMIT: Duration = Duration::from_secs(300);
const C4_FLOAT_TOL: f64 = 1e-9;
const C5_LIMIT: Duration = Duration::from_secs(600);
const C5_MIN_DOC_REDUCTION: f64 = 10.0;
const C5_MAX_WALL_RATIO: f64 = 2.0;
const C5_MAX_SAMPLE_ERR: f64 = 0.05;
const C5_REPEATS: usize = 5;
const C8_HLL_MAX_ERR: f64 = 0.02;
const C8_BLOOM_FPR: f64 = 0.01;
const C9_TRIALS: usize = 100;
const C9_TOL: f64 = 1e-9;
const C10_TOL: f64 = 1e-9;

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }
}

/// Index selection plus residual check equals a brute-force scan.
fn c1_index_oracle() -> Result<String, String> {
    let t = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let schema = parse_schema(INDEX_SCHEMA).unwrap();
    let docs = gen_index_docs(C1_DOCS, 101);
    build_fdb(&schema, docs, &BuildOptions::new("docs", 4).shard_key("id"), dir.path()).unwrap();
    let ds = FdbDataset::open(dir.path()).unwrap();
    let proj = Projection::all(&ds.meta).unwrap();
    let shards: Vec<_> = (0..ds.num_shards()).map(|i| ds.shard(i).unwrap()).collect();
    let full: Vec<Vec<Record>> = shards.iter().map(|s| s.full_scan(&proj, &mut ScanStats::default()).unwrap()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut matched = 0usize;
    for _ in 0..C1_QUERIES {
        let (q, _) = random_index_query(&mut rng, 2);
        for (s, recs) in shards.iter().zip(&full) {
            let sel = s.select(&q, &mut ScanStats::default()).map_err(|e| format!("{}: {e}", q.describe()))?;
            let got: Vec<u32> = sel.as_slice().iter().copied().filter(|&i| index_query_matches(&q, &recs[i as usize])).collect();
            let want: Vec<u32> = (0..recs.len() as u32).filter(|&i| index_query_matches(&q, &recs[i as usize])).collect();
            if got != want {
                return Err(format!("mismatch on {}: {} vs {} docs", q.describe(), got.len(), want.len()));
            }
            matched += want.len();
        }
    }
    let el = t.elapsed();
    if el > C1_LIMIT {
        return Err(format!("took {el:?}, limit {C1_LIMIT:?}"));
    }
    Ok(format!("{C1_QUERIES} queries over {C1_DOCS} docs, {matched} matches, {:.1}s", el.as_secs_f64()))
}

const RASTER_LEVEL: u8 = 3;

/// Leaf cells at `RASTER_LEVEL` as a bitset.
fn raster(t: &AreaTree) -> Vec<u64> {
    let shift = 2 * CellId::span_bits(RASTER_LEVEL);
    let mut bits = vec![0u64; (1usize << (6 * RASTER_LEVEL as usize)) / 64];
    for c in t.cells() {
        let (lo, hi) = c.code_range();
        for i in (lo >> shift)..(hi >> shift) {
            bits[(i / 64) as usize] |= 1 << (i % 64);
        }
    }
    bits
}

fn raster_bit(bits: &[u64], p: GridPoint) -> bool {
    let i = CellId::containing(p, RASTER_LEVEL).code >> (2 * CellId::span_bits(RASTER_LEVEL));
    bits[(i / 64) as usize] & (1 << (i % 64)) != 0
}

fn random_area(rng: &mut ChaCha8Rng, level: u8) -> AreaTree {
    let lat = rng.gen_range(-70.0..70.0);
    let lng: f64 = rng.gen_range(-170.0..170.0);
    let gp = |a: f64, b: f64| GeoPoint::new(a.clamp(-85.0, 85.0), b.clamp(-179.9, 179.9)).unwrap();
    match rng.gen_range(0..4) {
        0 => {
            let (h, w): (f64, f64) = (rng.gen_range(0.5..30.0), rng.gen_range(0.5..60.0));
            let (w0, w1) = ((lng - w / 2.0).max(-180.0), (lng + w / 2.0).min(180.0));
            let r = LatLngRect::new(lat - h / 2.0, w0, lat + h / 2.0, w1).unwrap();
            AreaTree::from_rect(&r, level).unwrap()
        }
        1 => AreaTree::from_point_radius(gp(lat, lng), rng.gen_range(10_000.0..2_000_000.0), level).unwrap(),
        2 => {
            let ring: Vec<GeoPoint> =
                (0..3).map(|_| gp(lat + rng.gen_range(-20.0..20.0), lng + rng.gen_range(-40.0..40.0))).collect();
            AreaTree::from_polygon(&Polygon::new(vec![ring]).unwrap(), level).unwrap()
        }
        _ => {
            let pts: Vec<GeoPoint> =
                (0..3).map(|_| gp(lat + rng.gen_range(-15.0..15.0), lng + rng.gen_range(-30.0..30.0))).collect();
            AreaTree::from_path(&Polyline::new(pts).unwrap(), rng.gen_range(10_000.0..300_000.0), level).unwrap()
        }
    }
}

/// Area-tree set algebra and queries against a level-3 bitset raster.
fn c2_area_oracle() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut points = 0;
    for i in 0..C2_PAIRS {
        let level = RASTER_LEVEL - (i % 2) as u8;
        let (a, b) = (random_area(&mut rng, level), random_area(&mut rng, level));
        let (ra, rb) = (raster(&a), raster(&b));
        let ops: [(CombineOp, fn(u64, u64) -> u64); 3] =
            [(CombineOp::Union, |x, y| x | y), (CombineOp::Intersection, |x, y| x & y), (CombineOp::Difference, |x, y| x & !y)];
        for (op, f) in ops {
            let c = a.combine(op, &b).map_err(|e| e.to_string())?;
            let want: Vec<u64> = ra.iter().zip(&rb).map(|(x, y)| f(*x, *y)).collect();
            if raster(&c) != want {
                return Err(format!("pair {i}: {op:?} differs from the raster"));
            }
            if !c.is_canonical() {
                return Err(format!("pair {i}: {op:?} result is not canonical"));
            }
        }
        let overlap = ra.iter().zip(&rb).any(|(x, y)| x & y != 0);
        if a.intersects(&b).map_err(|e| e.to_string())? != overlap {
            return Err(format!("pair {i}: intersects disagrees with the raster"));
        }
        let cells = a.cells();
        for k in 0..50 {
            // Half the probes land inside a random cell of `a`.
            let p = match (k % 2, cells.is_empty()) {
                (0, false) => {
                    let r = cells[rng.gen_range(0..cells.len())].rect();
                    GridPoint::new(rng.gen_range(r.x0..r.x1) as u32, rng.gen_range(r.y0..r.y1) as u32)
                }
                _ => GridPoint::new(rng.gen_range(0..1u32 << GRID_BITS), rng.gen_range(0..1u32 << GRID_BITS)),
            };
            if a.contains_point(p) != raster_bit(&ra, p) {
                return Err(format!("pair {i}: contains_point({p:?}) disagrees with the raster"));
            }
            points += 1;
        }
    }
    Ok(format!("{C2_PAIRS} pairs at levels 2-3, 3 ops each, {points} point queries"))
}

/// Projection round trip error per axis.
fn c3_projection() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (mut dlat, mut dlng) = (0f64, 0f64);
    for _ in 0..C3_POINTS {
        let p = GeoPoint::new(rng.gen_range(-MAX_ABS_LAT..MAX_ABS_LAT), rng.gen_range(-180.0..180.0)).unwrap();
        let q = unproject(project(p).map_err(|e| e.to_string())?);
        dlat = dlat.max((p.lat - q.lat).abs());
        dlng = dlng.max((p.lng - q.lng).abs());
    }
    let msg = format!("max error lat {dlat:.3e} deg, lng {dlng:.3e} deg over {C3_POINTS} points (limit {C3_MAX_ERR_DEG:e})");
    if dlat <= C3_MAX_ERR_DEG && dlng <= C3_MAX_ERR_DEG {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// Reference interpreter, adhoc at 1/4/16 workers, batch, and batch with an
/// injected failure followed by a resume all agree on the corpus.
fn c4_mode_parity() -> Result<String, String> {
    let t = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cat = testkit::build_catalog(dir.path(), 3000, 404, 8).unwrap();
    let ctx = EvalContext::default();
    let mut resumed_tasks = 0;
    for (qi, q) in testkit::QUERIES.iter().enumerate() {
        let want = run_reference(q, &cat, &ctx, None).map_err(|e| format!("query {qi}: reference: {e}"))?;
        let p = plan(q, &cat, &ctx, &PlanOptions::default()).map_err(|e| format!("query {qi}: {e}"))?;
        let check = |label: &str, got: &[Record]| -> Result<(), String> {
            match results_match(got, &want, C4_FLOAT_TOL) {
                true => Ok(()),
                false => Err(format!("query {qi} {label}: {} rows vs {} from the reference", got.len(), want.len())),
            }
        };
        for w in [1, 4, 16] {
            let r = execute_adhoc(&p, &ctx, &AdhocOptions::workers(w)).map_err(|e| format!("query {qi}: {e}"))?;
            check(&format!("adhoc({w})"), &r.records)?;
        }
        let ck = tempfile::tempdir().unwrap();
        let r = execute_batch(&p, &ctx, &BatchOptions::new(ck.path())).map_err(|e| format!("query {qi}: {e}"))?;
        check("batch", &r.records)?;

        let ck = tempfile::tempdir().unwrap();
        let fail_at = p.shards.len() / 2;
        let calls = Arc::new(AtomicUsize::new(0));
        let c2 = calls.clone();
        let hook: FailureHook = Arc::new(move |_, _| c2.fetch_add(1, Ordering::SeqCst) == fail_at);
        let mut opts = BatchOptions::new(ck.path());
        opts.workers = 1;
        opts.failures = Some(hook);
        if execute_batch(&p, &ctx, &opts).is_ok() {
            return Err(format!("query {qi}: injected failure did not surface"));
        }
        let manifest = std::fs::read_to_string(ck.path().join(CHECKPOINT_FILE)).ok();
        let pending = match manifest {
            Some(text) => {
                let m = CheckpointManifest::parse(&text).map_err(|e| format!("query {qi}: {e}"))?;
                m.shards.iter().filter(|(_, s)| !matches!(s, ShardStatus::Done { .. })).count()
            }
            None => p.shards.len(),
        };
        opts.failures = None;
        let r = execute_batch(&p, &ctx, &opts).map_err(|e| format!("query {qi}: resume: {e}"))?;
        check("batch resume", &r.records)?;
        if r.stats.shard_tasks_executed != pending || pending != p.shards.len() - fail_at {
            return Err(format!(
                "query {qi}: resume executed {} tasks, manifest had {pending} pending of {}",
                r.stats.shard_tasks_executed,
                p.shards.len()
            ));
        }
        resumed_tasks += pending;
    }
    let el = t.elapsed();
    if el > C4_LIMIT {
        return Err(format!("took {el:?}, limit {C4_LIMIT:?}"));
    }
    Ok(format!(
        "{} queries x 6 modes agree; resumes re-ran exactly the {resumed_tasks} pending shard tasks; {:.1}s",
        testkit::QUERIES.len(),
        el.as_secs_f64()
    ))
}

/// Scaled selection comparison on the traffic workload.
fn c5_selection_table() -> Result<String, String> {
    let t = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cfg = DemoConfig::default();
    demo::build_demo(dir.path(), &cfg).map_err(|e| e.to_string())?;
    let mut s = demo::demo_session(dir.path(), cfg.workers).map_err(|e| e.to_string())?;
    let rows = demo::run_table(&mut s, cfg.seed, C5_REPEATS).map_err(|e| e.to_string())?;
    let mut out = std::io::stdout();
    let _ = write!(out, "{}", demo::render_table(&rows));
    let get = |q: &str, sel: Selection| rows.iter().find(|m| m.query == q && m.selection == sel).unwrap();
    let mut problems = Vec::new();
    let mut min_reduction = f64::INFINITY;
    let (mut wall10, mut wall1) = (Duration::ZERO, Duration::ZERO);
    for q in &DEMO_QUERIES {
        let (g, m) = (get(q.name, Selection::GeoIndex), get(q.name, Selection::MultiIndex));
        if g.docs_scanned <= m.docs_scanned {
            problems.push(format!("{}: docs scanned geo {} <= multi {}", q.name, g.docs_scanned, m.docs_scanned));
        }
        if g.cpu <= m.cpu {
            problems.push(format!("{}: cpu geo {:?} <= multi {:?}", q.name, g.cpu, m.cpu));
        }
        let red = g.docs_scanned as f64 / m.docs_scanned.max(1) as f64;
        min_reduction = min_reduction.min(red);
        if red < C5_MIN_DOC_REDUCTION {
            problems.push(format!("{}: docs reduction {red:.1}x < {C5_MIN_DOC_REDUCTION}x", q.name));
        }
        wall10 += get(q.name, Selection::Sample10).wall;
        wall1 += get(q.name, Selection::Sample1).wall;

        // The 10% estimate must equal the same query evaluated directly on
        // the sampled shards.
        let text = demo::estimate_query(q, Selection::Sample10, cfg.seed);
        let got = s.query(&text).map_err(|e| e.to_string())?;
        let exact = run_reference(&text, &s.catalog, s.context(), None).map_err(|e| e.to_string())?;
        if got.records != exact {
            problems.push(format!("{}: sampled aggregate {:?} != exact-on-sampled-shards {:?}", q.name, got.records, exact));
        }
    }
    let wall_ratio = wall10.as_secs_f64() / wall1.as_secs_f64();
    if wall_ratio > C5_MAX_WALL_RATIO {
        problems.push(format!("wall 10% / 1% = {wall_ratio:.2} > {C5_MAX_WALL_RATIO}"));
    }
    let q = &DEMO_QUERIES[3];
    let mut mean = |sel| -> Result<f64, String> {
        let r = s.query(&demo::estimate_query(q, sel, cfg.seed)).map_err(|e| e.to_string())?;
        demo::mean_of(&r.records).ok_or_else(|| "empty estimate".to_string())
    };
    let (full, est) = (mean(Selection::MultiIndex)?, mean(Selection::Sample10)?);
    let err = rel(est, full);
    if err > C5_MAX_SAMPLE_ERR {
        problems.push(format!("{}: 10% mean {est} vs full {full} ({:.2}%)", q.name, err * 100.0));
    }
    let el = t.elapsed();
    if el > C5_LIMIT {
        problems.push(format!("took {el:?}, limit {C5_LIMIT:?}"));
    }
    let summary = format!(
        "min docs reduction {min_reduction:.1}x; wall 10%/1% {wall_ratio:.2}; {} 10% mean off by {:.2}%; {:.1}s",
        q.name,
        err * 100.0,
        el.as_secs_f64()
    );
    if problems.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{summary}; {}", problems.join("; ")))
    }
}

/// Group-by on the shard key runs entirely below the boundary.
fn c6_shard_key_rewrite() -> Result<String, String> {
    let dir = tempfile::tempdir().unwrap();
    let cat = testkit::build_catalog(dir.path(), 2000, 606, 6).unwrap();
    let ctx = EvalContext::default();
    let q = r#"flow("obs").aggregate(p => {road: p.road}, p => {n: count(), avg: avg(p.speed), sd: stddev(p.speed)})"#;
    let hidden = r#"flow("obs").map(p => {road: p.road, speed: p.speed}).aggregate(p => {road: p.road}, p => {n: count(), avg: avg(p.speed), sd: stddev(p.speed)})"#;
    let p = plan(q, &cat, &ctx, &PlanOptions::default()).map_err(|e| e.to_string())?;
    let p2 = plan(hidden, &cat, &ctx, &PlanOptions::default()).map_err(|e| e.to_string())?;
    if p.has_mixer_merge() {
        return Err(format!("optimized plan merges on the mixer: {:?}", p.node_names()));
    }
    if !p2.has_mixer_merge() {
        return Err(format!("unoptimized plan lacks the mixer merge: {:?}", p2.node_names()));
    }
    let a = execute_adhoc(&p, &ctx, &AdhocOptions::workers(3)).map_err(|e| e.to_string())?;
    let b = execute_adhoc(&p2, &ctx, &AdhocOptions::workers(3)).map_err(|e| e.to_string())?;
    if !results_match(&a.records, &b.records, 1e-12) {
        return Err("rewritten and unoptimized results differ".into());
    }
    Ok(format!("plan {:?}, {} groups equal to the mixer-merge plan", p.node_names(), a.records.len()))
}

/// Pruned read schema size and column-set isolation on a 1000-node schema.
fn c7_minimal_schema() -> Result<String, String> {
    let mut text = String::from("message Wide {\n");
    for g in 0..10 {
        text.push_str(&format!("  g{g}: message {{\n"));
        for f in 0..99 {
            text.push_str(&format!("    f{f}: int;\n"));
        }
        text.push_str(&format!("  }} [colset=c{g}];\n"));
    }
    text.push('}');
    let schema = parse_schema(&text).map_err(|e| e.to_string())?;
    // node_count includes the root message.
    if schema.node_count() - 1 != 1000 {
        return Err(format!("synthetic schema has {} field nodes", schema.node_count() - 1));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let records: Vec<Record> = (0..300)
        .map(|_| {
            let mut r = Record::new();
            for g in 0..10 {
                let mut m = Record::new();
                for f in 0..99 {
                    m.set(&format!("f{f}"), Value::Int(rng.gen_range(0..100)));
                }
                r.set(&format!("g{g}"), Value::Record(m));
            }
            r
        })
        .collect();
    let expected_rows = records.iter().filter(|r| r.get_path("g3.f5").and_then(Value::as_i64).unwrap() > 10).count();
    let (_, shards) = build_mem_shards(&schema, records, &BuildOptions::new("wide", 2)).map_err(|e| e.to_string())?;
    let mut cat = Catalog::new();
    cat.register_dataset("wide", Arc::new(FdbDataset::from_shards(shards).map_err(|e| e.to_string())?))
        .map_err(|e| e.to_string())?;
    let ctx = EvalContext::default();
    let q = r#"flow("wide").filter(p => p.g3.f5 > 10).map(p => {a: p.g3.f5, b: p.g7.f1, c: p.g0.f2})"#;
    let used = ["g3.f5", "g7.f1", "g0.f2"];
    let p = plan(q, &cat, &ctx, &PlanOptions::default()).map_err(|e| e.to_string())?;
    let read = match &p.nodes[0].op {
        Op::Scan { read: ReadSet::Paths(ps), .. } => ps.clone(),
        other => return Err(format!("unexpected first node {}", other.name())),
    };
    let mut got: Vec<&str> = read.iter().map(|f| f.as_str()).collect();
    got.sort();
    let mut want_read = used.to_vec();
    want_read.sort();
    if got != want_read {
        return Err(format!("read set {got:?}, expected {want_read:?}"));
    }
    let mut closure: Vec<String> = Vec::new();
    for u in used {
        let parts: Vec<&str> = u.split('.').collect();
        for k in 1..=parts.len() {
            let pre = parts[..k].join(".");
            if !closure.contains(&pre) {
                closure.push(pre);
            }
        }
    }
    let pruned = prune_schema(&schema, &read).map_err(|e| e.to_string())?;
    if pruned.node_count() - 1 != closure.len() {
        return Err(format!("pruned schema has {} field nodes, |paths + ancestors| = {}", pruned.node_count() - 1, closure.len()));
    }
    let r = execute_adhoc(&p, &ctx, &AdhocOptions::workers(2)).map_err(|e| e.to_string())?;
    if r.records.len() != expected_rows {
        return Err(format!("{} rows, expected {expected_rows}", r.records.len()));
    }
    let colsets = &cat.dataset("wide").unwrap().dataset.manifest().colsets;
    let mut touched: BTreeMap<String, u64> = BTreeMap::new();
    for run in &r.stats.per_shard {
        for (i, b) in run.colset_bytes.iter().enumerate() {
            if *b > 0 {
                *touched.entry(colsets[i].clone()).or_default() += b;
            }
        }
    }
    let names: Vec<&str> = touched.keys().map(String::as_str).collect();
    if names != ["c0", "c3", "c7"] {
        return Err(format!("column sets read: {touched:?}"));
    }
    let total: u64 = touched.values().sum();
    if total != r.stats.totals.bytes_read {
        return Err(format!("colset bytes {total} != bytes_read {}", r.stats.totals.bytes_read));
    }
    Ok(format!("pruned to {} field nodes of 1000; read only {names:?} ({total} bytes)", pruned.node_count() - 1))
}

/// HyperLogLog and Bloom filter accuracy.
fn c8_sketches() -> Result<String, String> {
    let n = 100_000u64;
    let mut h = Hll::new(14)?;
    for i in 0..n {
        h.add(&(i * 7919 + 13).to_le_bytes());
    }
    let err = rel(h.estimate(), n as f64);
    let cap = 10_000u64;
    let mut b = Bloom::new(cap, C8_BLOOM_FPR)?;
    for i in 0..cap {
        b.add(format!("member-{i}").as_bytes());
    }
    let misses = (0..cap).filter(|i| !b.contains(format!("member-{i}").as_bytes())).count();
    let trials = 200_000u64;
    let fp = (0..trials).filter(|i| b.contains(format!("other-{i}").as_bytes())).count();
    let fpr = fp as f64 / trials as f64;
    let msg = format!(
        "hll error {:.3}% at {n} distinct (limit {}%); bloom false negatives {misses}, fpr {fpr:.4} (limit {})",
        err * 100.0,
        C8_HLL_MAX_ERR * 100.0,
        2.0 * C8_BLOOM_FPR
    );
    if err <= C8_HLL_MAX_ERR && misses == 0 && fpr <= 2.0 * C8_BLOOM_FPR {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// Partial/final avg and stddev against a two-pass computation per group.
fn c9_two_phase() -> Result<String, String> {
    let schema = parse_schema("message R { g: int; x: double; }").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut worst = 0f64;
    for trial in 0..C9_TRIALS {
        let n = rng.gen_range(50..1500);
        let groups = rng.gen_range(1..25i64);
        let offset = [0.0, 1e3, -1e6][trial % 3];
        let dist = Normal::new(offset, rng.gen_range(0.01..100.0)).unwrap();
        let mut recs: Vec<Record> = (0..n)
            .map(|_| Record::from_pairs([("g", Value::Int(rng.gen_range(0..groups))), ("x", Value::Double(dist.sample(&mut rng)))]))
            .collect();
        recs.shuffle(&mut rng);
        let mut by: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
        for r in &recs {
            by.entry(r.get("g").unwrap().as_i64().unwrap()).or_default().push(r.get("x").unwrap().as_f64().unwrap());
        }
        let shards = rng.gen_range(1..17);
        let (_, sh) = build_mem_shards(&schema, recs, &BuildOptions::new("r", shards)).map_err(|e| e.to_string())?;
        let mut cat = Catalog::new();
        cat.register_dataset("r", Arc::new(FdbDataset::from_shards(sh).map_err(|e| e.to_string())?))
            .map_err(|e| e.to_string())?;
        let mut s = Session::new(cat);
        s.defaults.workers = 3;
        let res = s
            .query(r#"flow("r").aggregate(p => {g: p.g}, p => {avg: avg(p.x), sd: stddev(p.x)})"#)
            .map_err(|e| e.to_string())?;
        if res.records.len() != by.len() {
            return Err(format!("trial {trial}: {} groups, expected {}", res.records.len(), by.len()));
        }
        for r in &res.records {
            let xs = &by[&r.get("g").unwrap().as_i64().unwrap()];
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            let sd = (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt();
            let (ga, gs) = (r.get("avg").unwrap().as_f64().unwrap(), r.get("sd").unwrap().as_f64().unwrap());
            let e = rel(ga, m).max(if sd == 0.0 { gs.abs() } else { rel(gs, sd) });
            worst = worst.max(e);
            if e > C9_TOL {
                return Err(format!("trial {trial}: avg {ga} vs {m}, sd {gs} vs {sd}"));
            }
        }
    }
    Ok(format!("{C9_TRIALS} random groupings, worst relative error {worst:.2e}"))
}

/// The roads x route-requests model evaluation against a direct computation.
fn c10_end_to_end() -> Result<String, String> {
    let dir = tempfile::tempdir().unwrap();
    let cfg = DemoConfig { observations: 10_000, ..DemoConfig::default() };
    demo::build_demo(dir.path(), &cfg).map_err(|e| e.to_string())?;
    let mut s = demo::demo_session(dir.path(), cfg.workers).map_err(|e| e.to_string())?;
    let got = demo::run_fig1(&mut s).map_err(|e| e.to_string())?;
    let want = demo::fig1_brute_force(&cfg);
    let msg = format!(
        "{} requests; mean error {:.6} vs {:.6}, sd {:.6} vs {:.6}",
        got.n, got.mean, want.mean, got.sd, want.sd
    );
    if got.n == want.n && got.n > 0 && rel(got.mean, want.mean) <= C10_TOL && rel(got.sd, want.sd) <= C10_TOL {
        Ok(msg)
    } else {
        Err(msg)
    }
}

#[test]
fn acceptance_criteria() {
    let criteria: [(&str, fn() -> Result<String, String>); 10] = [
        ("index/scan oracle", c1_index_oracle),
        ("area-tree oracle", c2_area_oracle),
        ("projection precision", c3_projection),
        ("execution-mode parity", c4_mode_parity),
        ("selection comparison at 10^6 docs", c5_selection_table),
        ("shard-key aggregation rewrite", c6_shard_key_rewrite),
        ("minimal viable schema", c7_minimal_schema),
        ("sketch accuracy", c8_sketches),
        ("two-phase aggregation", c9_two_phase),
        ("end-to-end model evaluation", c10_end_to_end),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let line = match &res {
            Ok(d) => format!("criterion {:>2} PASS {name}: {d}\n", i + 1),
            Err(d) => format!("criterion {:>2} FAIL {name}: {d}\n", i + 1),
        };
        let mut out = std::io::stdout();
        let _ = out.write_all(line.as_bytes());
        let _ = out.flush();
        if res.is_err() {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

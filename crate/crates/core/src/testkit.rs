// SPDX-License-Identifier: Apache-2.0

//! Small synthetic datasets and a fixed query corpus, shared by the unit,
//! integration and acceptance tests.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{Catalog, Result};
use crate::fdb::{build_fdb, Bound, BuildOptions, IndexQuery, LocationRegion};
use crate::geo::{project, AreaTree, GeoPoint, LatLngRect};
use crate::schema::{parse_schema, FieldPath, Schema};
use crate::value::{Record, Value};
use crate::wfl::builtins::text_tokens;

pub const OBS_SCHEMA: &str = "message Obs {
  id: int [index_tag];
  road: string [index_tag];
  driver: int [index_range];
  speed: double [index_range, colset=metrics];
  ts: int [index_range, colset=metrics];
  note: string [index_text, colset=text];
  repeated tags: string [index_tag];
  loc: message { lat: double; lng: double; } [index_location, colset=geo];
  repeated legs: message { seg: int; len: double; } [colset=geo];
}";

pub const ROADS_SCHEMA: &str = "message Road {
  road: string [index_tag];
  name: string;
  limit: double [index_range];
  lanes: int;
}";

const NOTES: &[&str] = &["heavy traffic", "light rain", "heavy rain", "clear", "road works ahead", "accident cleared"];
const TAGS: &[&str] = &["fast", "slow", "night", "bus", "truck"];
pub const NUM_ROADS: usize = 12;

pub fn obs_schema() -> Schema {
    parse_schema(OBS_SCHEMA).expect("static schema")
}

pub fn roads_schema() -> Schema {
    parse_schema(ROADS_SCHEMA).expect("static schema")
}

pub fn road_id(i: usize) -> String {
    format!("r{i}")
}

/// Observation records. About 5% lack `speed` and 10% lack `note`.
pub fn gen_obs(n: usize, seed: u64) -> Vec<Record> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let mut r = Record::new();
            r.set("id", Value::Int(i as i64));
            r.set("road", Value::str(road_id(rng.gen_range(0..NUM_ROADS))));
            r.set("driver", Value::Int(rng.gen_range(0..40)));
            if rng.gen_bool(0.95) {
                r.set("speed", Value::Double((rng.gen_range(5.0..90.0f64) * 100.0).round() / 100.0));
            }
            r.set("ts", Value::Int(rng.gen_range(0..86_400)));
            if rng.gen_bool(0.9) {
                r.set("note", Value::str(NOTES[rng.gen_range(0..NOTES.len())]));
            }
            let k = rng.gen_range(0..3);
            r.set("tags", Value::vector((0..k).map(|_| Value::str(TAGS[rng.gen_range(0..TAGS.len())])).collect()));
            let mut loc = Record::new();
            loc.set("lat", Value::Double(rng.gen_range(37.0..38.0)));
            loc.set("lng", Value::Double(rng.gen_range(-123.0..-122.0)));
            r.set("loc", Value::Record(loc));
            let legs = rng.gen_range(0..4);
            r.set(
                "legs",
                Value::vector(
                    (0..legs)
                        .map(|j| {
                            let mut l = Record::new();
                            l.set("seg", Value::Int(j));
                            l.set("len", Value::Double(rng.gen_range(10.0..500.0)));
                            Value::Record(l)
                        })
                        .collect(),
                ),
            );
            r
        })
        .collect()
}

/// One record per road; odd roads are missing from the table so joins drop
/// some observations.
pub fn gen_roads(seed: u64) -> Vec<Record> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    (0..NUM_ROADS)
        .filter(|i| i % 5 != 4)
        .map(|i| {
            let mut r = Record::new();
            r.set("road", Value::str(road_id(i)));
            r.set("name", Value::str(format!("Road {i}")));
            r.set("limit", Value::Double([30.0, 50.0, 70.0, 90.0][rng.gen_range(0..4)]));
            r.set("lanes", Value::Int(rng.gen_range(1..5)));
            r
        })
        .collect()
}

/// Builds `obs` (sharded by road) and `roads` under `dir` and registers both.
pub fn build_catalog(dir: &Path, n: usize, seed: u64, shards: usize) -> Result<Catalog> {
    build_fdb(&obs_schema(), gen_obs(n, seed), &BuildOptions::new("obs", shards).shard_key("road"), &dir.join("obs"))?;
    build_fdb(&roads_schema(), gen_roads(seed), &BuildOptions::new("roads", 2), &dir.join("roads"))?;
    Catalog::load_root(dir)
}

/// Thirty pipelines over `obs` and `roads` covering every flow operator.
pub const QUERIES: [&str; 30] = [
    r#"flow("obs").filter(p => p.speed > 50.0)"#,
    r#"flow("obs").find(p => p.road == "r3")"#,
    r#"flow("obs").find(p => p.speed between 20.0 and 40.0).map(p => {id: p.id, s: p.speed})"#,
    r#"flow("obs").find(p => "fast" in p.tags).map(p => {id: p.id, tags: p.tags})"#,
    r#"flow("obs").find(p => p.loc in rect(37.2, -122.8, 37.6, -122.3)).map(p => {id: p.id, loc: p.loc})"#,
    r#"flow("obs").find(p => text_match(p.note, "heavy")).map(p => {id: p.id, note: p.note})"#,
    r#"flow("obs").aggregate(p => {n: count()})"#,
    r#"flow("obs").aggregate(p => {road: p.road}, p => {n: count(), avg: avg(p.speed), sd: stddev(p.speed)})"#,
    r#"flow("obs").aggregate(p => {d: p.driver}, p => {lo: min(p.speed), hi: max(p.speed), t: sum(p.ts)})"#,
    r#"flow("obs").sort(p => p.speed, "desc").limit(10).map(p => {id: p.id, s: p.speed})"#,
    r#"flow("obs").filter(p => p.driver < 3).sort(p => p.ts).map(p => {id: p.id, ts: p.ts})"#,
    r#"flow("obs").distinct(p => p.road).map(p => {road: p.road})"#,
    r#"flow("obs").flatten(p => p.legs).map(p => {id: p.id, seg: p.legs.seg, len: p.legs.len})"#,
    r#"flow("obs").flatten(p => p.tags).aggregate(p => {t: p.tags}, p => {n: count()})"#,
    r#"flow("obs").join(flow("roads"), p => p.road, r => r.road).map(p => {id: p.id, lim: p.limit, name: p.name})"#,
    r#"flow("obs").join(flow("roads"), p => p.road, r => r.road, "shuffle").aggregate(p => {lim: p.limit}, p => {n: count(), s: avg(p.speed)})"#,
    r#"flow("obs").find(p => p.driver == 7).sub_flow(p => flow("roads").find(r => r.road == p.road)).map(p => {id: p.id, lanes: p.lanes})"#,
    r#"flow("obs").find(p => p.driver < 5 or p.road == "r1").map(p => {id: p.id})"#,
    r#"flow("obs").find(p => !(p.road == "r2") and p.speed > 80.0).map(p => {id: p.id, road: p.road})"#,
    r#"flow("obs").find(p => p.road != "r2").aggregate(p => {n: count()})"#,
    r#"flow("obs").sample(0.5, 7).aggregate(p => {n: count(), s: sum(p.speed)})"#,
    r#"flow("obs").filter(p => p.speed > 30.0).aggregate(p => {h: p.ts / 3600}, p => {n: count(), d: hll_count(p.driver)})"#,
    r#"flow("obs").map(p => {id: p.id, fast: p.speed > 60.0}).filter(r => r.fast)"#,
    r#"flow("obs").find(p => p.road in ["r1", "r4"]).limit(5)"#,
    r#"flow("obs").find(p => p.ts >= 1000 and p.ts < 5000).sort(p => p.ts, "desc").map(p => {id: p.id, ts: p.ts})"#,
    r#"flow("obs").distinct(p => p.driver % 3).map(p => {k: p.driver % 3})"#,
    r#"flow("obs").filter(p => is_null(p.speed)).aggregate(p => {road: p.road}, p => {n: count()})"#,
    r#"flow("obs").find(p => p.driver between 3 and 7).join(flow("roads").filter(r => r.limit > 40.0), p => p.road, r => r.road).aggregate(p => {road: p.road}, p => {n: count()})"#,
    r#"flow("obs").find(p => p.loc in rect(37.0, -123.0, 37.5, -122.5)).find(p => p.ts > 40000).aggregate(p => {road: p.road}, p => {cv: stddev(p.speed) / avg(p.speed)})"#,
    r#"flow("obs").aggregate(p => {road: p.road, d: p.driver % 2}, p => {n: count(), m: max(p.ts)}).filter(g => g.n > 1).sort(g => g.n, "desc")"#,
];

/// Schema with one field per index kind, used by the index oracle tests.
pub const INDEX_SCHEMA: &str = "message Doc {
  id: int [index_tag];
  name: string [index_text];
  repeated tags: string [index_tag];
  n: int [index_range, colset=nums];
  x: double [index_range, colset=nums];
  u: uint [index_range];
  loc: message { lat: double; lng: double; } [index_location, colset=geo];
  radius: double [colset=geo];
  virtual zone: area = area_circle(loc, radius, 4) [index_area(level=4)];
}";

const WORDS: &[&str] = &["red", "green", "blue", "fast", "slow", "road", "bridge", "tunnel"];

pub fn gen_index_docs(n: usize, seed: u64) -> Vec<Record> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let mut r = Record::new();
            r.set("id", Value::Int(i as i64));
            let k = rng.gen_range(0..4);
            let name: Vec<&str> = (0..k).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect();
            r.set("name", Value::str(name.join(if rng.gen_bool(0.5) { " " } else { "-" }).to_uppercase()));
            let t = rng.gen_range(0..3);
            r.set("tags", Value::vector((0..t).map(|_| Value::str(WORDS[rng.gen_range(0..3)])).collect()));
            if rng.gen_bool(0.9) {
                r.set("n", Value::Int(rng.gen_range(-50..50)));
            }
            r.set("x", Value::Double(rng.gen_range(-10.0..10.0)));
            r.set("u", Value::Uint(rng.gen_range(0..1000)));
            let mut loc = Record::new();
            loc.set("lat", Value::Double(rng.gen_range(37.0..38.0)));
            loc.set("lng", Value::Double(rng.gen_range(-123.0..-122.0)));
            r.set("loc", Value::Record(loc));
            r.set("radius", Value::Double(rng.gen_range(50.0..8000.0)));
            r
        })
        .collect()
}

fn random_rect(rng: &mut ChaCha8Rng) -> LatLngRect {
    let (a, b): (f64, f64) = (rng.gen_range(36.9..38.1), rng.gen_range(36.9..38.1));
    let (c, d): (f64, f64) = (rng.gen_range(-123.1..-121.9), rng.gen_range(-123.1..-121.9));
    LatLngRect::new(a.min(b), c.min(d), a.max(b), c.max(d)).unwrap()
}

fn random_point(rng: &mut ChaCha8Rng) -> GeoPoint {
    GeoPoint::new(rng.gen_range(37.0..38.0), rng.gen_range(-123.0..-122.0)).unwrap()
}

/// Random query over `INDEX_SCHEMA` plus whether it contains only exact
/// leaf kinds (area leaves are outer covers and need a residual check).
pub fn random_index_query(rng: &mut ChaCha8Rng, depth: u32) -> (IndexQuery, bool) {
    if depth > 0 && rng.gen_bool(0.35) {
        let k = rng.gen_range(1..4);
        let parts: Vec<(IndexQuery, bool)> = (0..k).map(|_| random_index_query(rng, depth - 1)).collect();
        let exact = parts.iter().all(|p| p.1);
        let qs: Vec<IndexQuery> = parts.into_iter().map(|p| p.0).collect();
        return match rng.gen_range(0..3) {
            0 => (IndexQuery::And(qs), exact),
            1 => (IndexQuery::Or(qs), exact),
            _ => (IndexQuery::Not(Box::new(qs.into_iter().next().unwrap())), exact),
        };
    }
    let bound = |rng: &mut ChaCha8Rng, v: Value| {
        rng.gen_bool(0.8).then(|| Bound { value: v, inclusive: rng.gen_bool(0.5) })
    };
    match rng.gen_range(0..9) {
        0 => {
            let k = rng.gen_range(1..3);
            let text: Vec<&str> = (0..k).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect();
            (IndexQuery::TextMatch { path: FieldPath::new("name"), text: text.join(" ").to_uppercase() }, true)
        }
        1 => (IndexQuery::TagEq { path: FieldPath::new("tags"), value: Value::str(WORDS[rng.gen_range(0..4)]) }, true),
        2 => (IndexQuery::TagEq { path: FieldPath::new("id"), value: Value::Int(rng.gen_range(-5..3000)) }, true),
        3 => {
            let lov = Value::Int(rng.gen_range(-60..60));
            let lo = bound(rng, lov);
            let hiv = Value::Double(rng.gen_range(-60.0..60.0));
            let hi = bound(rng, hiv);
            (IndexQuery::Range { path: FieldPath::new("n"), lo, hi }, true)
        }
        4 => {
            let lov = Value::Double(rng.gen_range(-11.0..11.0));
            let lo = bound(rng, lov);
            let hiv = Value::Int(rng.gen_range(-11..11));
            let hi = bound(rng, hiv);
            (IndexQuery::Range { path: FieldPath::new("x"), lo, hi }, true)
        }
        5 => {
            let lov = Value::Int(rng.gen_range(-100..1100));
            let lo = bound(rng, lov);
            let hiv = Value::Double(rng.gen_range(-100.0..1100.0));
            let hi = bound(rng, hiv);
            (IndexQuery::Range { path: FieldPath::new("u"), lo, hi }, true)
        }
        6 => (IndexQuery::LocationIn { path: FieldPath::new("loc"), region: LocationRegion::Rect(random_rect(rng)) }, true),
        7 => (IndexQuery::AreaContainsPoint { path: FieldPath::new("zone"), point: random_point(rng) }, false),
        _ => {
            let a = AreaTree::from_point_radius(random_point(rng), rng.gen_range(100.0..5000.0), 4).unwrap();
            if rng.gen_bool(0.5) {
                (IndexQuery::AreaIntersects { path: FieldPath::new("zone"), area: Arc::new(a) }, false)
            } else {
                (IndexQuery::LocationIn { path: FieldPath::new("loc"), region: LocationRegion::Area(Arc::new(a)) }, true)
            }
        }
    }
}

fn num_ok(v: Option<&Value>, b: &Option<Bound>, lower: bool) -> bool {
    let Some(b) = b else { return v.is_some() };
    let Some(v) = v else { return false };
    let (x, y) = (v.as_f64().unwrap(), b.value.as_f64().unwrap());
    match (lower, b.inclusive) {
        (true, true) => x >= y,
        (true, false) => x > y,
        (false, true) => x <= y,
        (false, false) => x < y,
    }
}

/// Direct evaluation of a query against one full record.
pub fn index_query_matches(q: &IndexQuery, r: &Record) -> bool {
    match q {
        IndexQuery::All => true,
        IndexQuery::And(qs) => qs.iter().all(|q| index_query_matches(q, r)),
        IndexQuery::Or(qs) => qs.iter().any(|q| index_query_matches(q, r)),
        IndexQuery::Not(q) => !index_query_matches(q, r),
        IndexQuery::TextMatch { path, text } => {
            let have: BTreeSet<String> =
                r.get(path.as_str()).and_then(|v| v.as_str()).map(text_tokens).unwrap_or_default().into_iter().collect();
            text_tokens(text).iter().all(|t| have.contains(t))
        }
        IndexQuery::TagEq { path, value } => match r.get(path.as_str()) {
            Some(Value::Vector(xs)) => xs.iter().any(|x| x == value),
            Some(v) => v == value,
            None => false,
        },
        IndexQuery::Range { path, lo, hi } => {
            let v = r.get(path.as_str());
            v.is_some() && num_ok(v, lo, true) && num_ok(v, hi, false)
        }
        IndexQuery::LocationIn { path, region } => {
            let p = r.get(path.as_str()).and_then(|v| v.as_geo_point()).unwrap();
            match region {
                LocationRegion::Rect(rect) => rect.contains(p),
                LocationRegion::Area(a) => a.contains_point(project(p).unwrap()),
            }
        }
        IndexQuery::AreaContainsPoint { path, point } => match r.get(path.as_str()) {
            Some(Value::Area(a)) => a.contains_point(project(*point).unwrap()),
            _ => false,
        },
        IndexQuery::AreaIntersects { path, area } => match r.get(path.as_str()) {
            Some(Value::Area(a)) => a.intersects(area).unwrap(),
            _ => false,
        },
    }
}

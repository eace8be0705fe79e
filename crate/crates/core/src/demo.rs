// SPDX-License-Identifier: Apache-2.0

//! Synthetic traffic workload.
//!
//! Three datasets are generated from one seed:
//!
//! * `roads`: short polylines with lane count and speed limit, placed in San
//!   Francisco (10%), the wider Bay Area (20%) or elsewhere in California.
//! * `observations`: speed samples of a road at a timestamp within 182 days
//!   from 2024-01-01 UTC, sharded round-robin. A quarter of the samples are
//!   drawn from the 7-10 am window, the rest from the whole day. Weekday mornings at 8 slow a road
//!   down to 60% of its base speed. Speeds are multiples of 0.25 so sums are
//!   exact in any order.
//! * `requests`: route requests with an origin, a route of 2 to 6 road ids
//!   from the origin's area and the observed travel time.
//!
//! The workload asks which roads have highly variable speeds on weekday
//! mornings (8-9 am): per-road coefficient of variation (stddev / mean) of
//! the observed speeds, over five regions and time spans and under four
//! shard and index selection strategies.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::json;

use crate::engine::{Catalog, EngineError, QueryResult, Result, Session, StatementResult};
use crate::fdb::{build_fdb, BuildOptions};
use crate::geo::{GeoPoint, Polyline};
use crate::model::{parse_model, register_model_extension, ModelStore};
use crate::schema::parse_schema;
use crate::value::{Record, Value};
use crate::wfl::Registry;

pub const ROADS_SCHEMA: &str = "message Road {
  id: int [index_tag];
  name: string;
  lanes: int;
  limit: double;
  center: message { lat: double; lng: double; } [index_location];
  repeated pts: message { lat: double; lng: double; } [colset=geom];
}";

pub const OBSERVATIONS_SCHEMA: &str = "message Observation {
  road: int [index_tag];
  ts: int [index_range];
  speed: double [colset=speed];
  loc: message { lat: double; lng: double; } [index_location, colset=geo];
  virtual hour: int = hour(ts) [index_range];
  virtual dow: int = weekday(ts) [index_range];
}";

pub const REQUESTS_SCHEMA: &str = "message Request {
  id: int [index_tag];
  ts: int [index_range];
  origin: message { lat: double; lng: double; } [index_location];
  repeated route: int [index_tag];
  actual: double;
  virtual hour: int = hour(ts) [index_range];
}";

/// Speed model in m/s from `[lanes, limit m/s, hour]`.
pub const SPEED_MODEL: &str = "\
model speed
input 3
layer 2 relu
  w 1.5 0.6 -0.1
  w 0 0.2 0
  b 0 1
layer 1 identity
  w 0.5 0.8
  b 1
";

/// 2024-01-01T00:00:00Z, a Monday.
pub const EPOCH: i64 = 1_704_067_200;
pub const DAY: i64 = 86_400;
pub const SPAN_DAYS: i64 = 182;

const LIMITS: [f64; 4] = [13.4, 17.9, 24.6, 29.1];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub name: &'static str,
    pub lat_lo: f64,
    pub lng_lo: f64,
    pub lat_hi: f64,
    pub lng_hi: f64,
}

impl Region {
    pub fn contains(&self, lat: f64, lng: f64) -> bool {
        lat >= self.lat_lo && lat <= self.lat_hi && lng >= self.lng_lo && lng <= self.lng_hi
    }

    fn rect(&self) -> String {
        format!("rect({}, {}, {}, {})", self.lat_lo, self.lng_lo, self.lat_hi, self.lng_hi)
    }
}

pub const SF: Region = Region { name: "San Francisco", lat_lo: 37.70, lng_lo: -122.52, lat_hi: 37.82, lng_hi: -122.35 };
pub const BAY_AREA: Region = Region { name: "Bay Area", lat_lo: 37.20, lng_lo: -122.60, lat_hi: 38.00, lng_hi: -121.70 };
pub const CALIFORNIA: Region = Region { name: "California", lat_lo: 32.50, lng_lo: -124.40, lat_hi: 42.00, lng_hi: -114.10 };

#[derive(Debug, Clone)]
pub struct DemoConfig {
    pub observations: usize,
    pub roads: usize,
    pub requests: usize,
    pub shards: usize,
    pub seed: u64,
    pub workers: usize,
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig { observations: 1_000_000, roads: 2000, requests: 20_000, shards: 16, seed: 42, workers: 4 }
    }
}

impl DemoConfig {
    fn stamp(&self) -> String {
        format!(
            "observations {}\nroads {}\nrequests {}\nshards {}\nseed {}\n",
            self.observations, self.roads, self.requests, self.shards, self.seed
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct RoadTruth {
    base: f64,
    variability: f64,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn latlng(lat: f64, lng: f64) -> Value {
    let mut r = Record::with_capacity(2);
    r.set("lat", Value::Double(lat));
    r.set("lng", Value::Double(lng));
    Value::Record(r)
}

fn region_of(rng: &mut ChaCha8Rng) -> Region {
    match rng.gen_range(0..10) {
        0 => SF,
        1 | 2 => BAY_AREA,
        _ => CALIFORNIA,
    }
}

/// Road records plus the ground truth the observations are drawn from.
fn roads_with_truth(cfg: &DemoConfig) -> (Vec<Record>, Vec<RoadTruth>) {
    let mut rng = rng_for(cfg.seed, 1);
    let mut roads = Vec::with_capacity(cfg.roads);
    let mut truth = Vec::with_capacity(cfg.roads);
    for i in 0..cfg.roads {
        let reg = region_of(&mut rng);
        let (lat, lng) = (rng.gen_range(reg.lat_lo + 0.01..reg.lat_hi - 0.01), rng.gen_range(reg.lng_lo + 0.01..reg.lng_hi - 0.01));
        let heading: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let n = rng.gen_range(2..6);
        let step = rng.gen_range(0.0005..0.002);
        let pts: Vec<Value> = (0..n)
            .map(|k| {
                let t = k as f64 - (n - 1) as f64 / 2.0;
                latlng(lat + t * step * heading.sin(), lng + t * step * heading.cos())
            })
            .collect();
        let limit = LIMITS[rng.gen_range(0..LIMITS.len())];
        let lanes = rng.gen_range(1..5i64);
        let mut r = Record::new();
        r.set("id", Value::Int(i as i64));
        r.set("name", Value::str(format!("{} road {i}", reg.name)));
        r.set("lanes", Value::Int(lanes));
        r.set("limit", Value::Double(limit));
        r.set("center", latlng(lat, lng));
        r.set("pts", Value::vector(pts));
        roads.push(r);
        truth.push(RoadTruth { base: limit * rng.gen_range(0.5..0.9), variability: rng.gen_range(0.05..0.35) });
    }
    (roads, truth)
}

pub fn gen_roads(cfg: &DemoConfig) -> Vec<Record> {
    roads_with_truth(cfg).0
}

fn road_point(road: &Record, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let pts = road.get("pts").and_then(Value::as_slice).expect("generated road");
    let p = pts[rng.gen_range(0..pts.len())].as_record().expect("point record");
    let f = |k: &str| p.get(k).and_then(Value::as_f64).expect("coordinate");
    (f("lat") + rng.gen_range(-1e-5..1e-5), f("lng") + rng.gen_range(-1e-5..1e-5))
}

fn is_rush(ts: i64) -> bool {
    let hour = ts.rem_euclid(DAY) / 3600;
    let dow = (ts.div_euclid(DAY) + 3).rem_euclid(7) + 1;
    hour == 8 && dow <= 5
}

fn random_ts(rng: &mut ChaCha8Rng) -> i64 {
    let day = rng.gen_range(0..SPAN_DAYS);
    let secs = if rng.gen_bool(0.25) { rng.gen_range(7 * 3600..10 * 3600) } else { rng.gen_range(0..DAY) };
    EPOCH + day * DAY + secs
}

fn speed_sample(t: &RoadTruth, ts: i64, rng: &mut ChaCha8Rng) -> f64 {
    let factor = if is_rush(ts) { 0.6 } else { 1.0 };
    let z: f64 = StandardNormal.sample(rng);
    let v = (t.base * factor * (1.0 + t.variability * z)).max(1.0);
    (v * 4.0).round() / 4.0
}

/// Observation records in generation order; streamed so the full set never
/// sits in memory as records.
pub fn observations<'a>(cfg: &DemoConfig, roads: &'a [Record]) -> impl Iterator<Item = Record> + 'a {
    let truth = roads_with_truth(cfg).1;
    let mut rng = rng_for(cfg.seed, 2);
    (0..cfg.observations).map(move |_| {
        let i = rng.gen_range(0..roads.len());
        let ts = random_ts(&mut rng);
        let (lat, lng) = road_point(&roads[i], &mut rng);
        let mut r = Record::with_capacity(4);
        r.set("road", Value::Int(i as i64));
        r.set("ts", Value::Int(ts));
        r.set("speed", Value::Double(speed_sample(&truth[i], ts, &mut rng)));
        r.set("loc", latlng(lat, lng));
        r
    })
}

fn region_index(road: &Record) -> u8 {
    let c = road.get("center").and_then(Value::as_record).expect("center");
    let (lat, lng) = (c.get("lat").and_then(Value::as_f64).unwrap(), c.get("lng").and_then(Value::as_f64).unwrap());
    if SF.contains(lat, lng) {
        0
    } else if BAY_AREA.contains(lat, lng) {
        1
    } else {
        2
    }
}

/// Length of a generated road polyline in meters.
pub fn road_length_m(road: &Record) -> f64 {
    let pts = road.get("pts").and_then(Value::as_slice).expect("generated road");
    let pts: Vec<GeoPoint> = pts.iter().map(|p| p.as_geo_point().expect("point")).collect();
    Polyline::new(pts).expect("valid polyline").length_m()
}

pub fn gen_requests(cfg: &DemoConfig, roads: &[Record]) -> Vec<Record> {
    let truth = roads_with_truth(cfg).1;
    let mut by_area: [Vec<usize>; 3] = Default::default();
    for (i, r) in roads.iter().enumerate() {
        by_area[region_index(r) as usize].push(i);
    }
    let mut rng = rng_for(cfg.seed, 3);
    (0..cfg.requests)
        .map(|id| {
            let start = rng.gen_range(0..roads.len());
            let pool = &by_area[region_index(&roads[start]) as usize];
            let len = rng.gen_range(2..7);
            let mut route = vec![start];
            for _ in 1..len {
                route.push(pool[rng.gen_range(0..pool.len())]);
            }
            let ts = random_ts(&mut rng);
            let factor = if is_rush(ts) { 0.6 } else { 1.0 };
            let travel: f64 = route.iter().map(|&r| road_length_m(&roads[r]) / (truth[r].base * factor)).sum();
            let (lat, lng) = road_point(&roads[start], &mut rng);
            let mut r = Record::new();
            r.set("id", Value::Int(id as i64));
            r.set("ts", Value::Int(ts));
            r.set("origin", latlng(lat, lng));
            r.set("route", Value::vector(route.iter().map(|&x| Value::Int(x as i64)).collect()));
            r.set("actual", Value::Double(travel * rng.gen_range(0.9..1.2)));
            r
        })
        .collect()
}

const STAMP_FILE: &str = "DEMO";

/// Generates and writes the three datasets under `dir`, unless `dir` already
/// holds datasets from the same configuration.
pub fn build_demo(dir: &Path, cfg: &DemoConfig) -> Result<()> {
    let stamp = dir.join(STAMP_FILE);
    if std::fs::read_to_string(&stamp).ok().as_deref() == Some(cfg.stamp().as_str()) {
        return Ok(());
    }
    std::fs::create_dir_all(dir)?;
    let roads = gen_roads(cfg);
    let schema = |t: &str| parse_schema(t).map_err(EngineError::from);
    build_fdb(&schema(ROADS_SCHEMA)?, roads.iter().cloned(), &BuildOptions::new("roads", 2), &dir.join("roads"))?;
    build_fdb(&schema(REQUESTS_SCHEMA)?, gen_requests(cfg, &roads), &BuildOptions::new("requests", 4), &dir.join("requests"))?;
    build_fdb(
        &schema(OBSERVATIONS_SCHEMA)?,
        observations(cfg, &roads),
        &BuildOptions::new("observations", cfg.shards),
        &dir.join("observations"),
    )?;
    std::fs::write(&stamp, cfg.stamp())?;
    Ok(())
}

pub fn speed_model_store() -> Arc<ModelStore> {
    let store = Arc::new(ModelStore::new());
    store.insert(parse_model(SPEED_MODEL).expect("static model"));
    store
}

/// A session over the datasets in `dir` with the speed model registered.
pub fn demo_session(dir: &Path, workers: usize) -> Result<Session> {
    let reg = Arc::new(Registry::new());
    register_model_extension(&reg, speed_model_store())?;
    let mut s = Session::with_registry(Catalog::load_root(dir)?, reg);
    s.defaults.workers = workers;
    Ok(s)
}

#[derive(Debug, Clone, Copy)]
pub struct DemoQuery {
    pub name: &'static str,
    pub region: Region,
    pub days: i64,
}

pub const QUERIES: [DemoQuery; 5] = [
    DemoQuery { name: "Q1", region: SF, days: 30 },
    DemoQuery { name: "Q2", region: SF, days: SPAN_DAYS },
    DemoQuery { name: "Q3", region: BAY_AREA, days: 30 },
    DemoQuery { name: "Q4", region: BAY_AREA, days: SPAN_DAYS },
    DemoQuery { name: "Q5", region: CALIFORNIA, days: 30 },
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    /// Location index only; time conditions are residual filters.
    GeoIndex,
    /// Location, timestamp, hour and weekday indices.
    MultiIndex,
    Sample10,
    Sample1,
}

pub const SELECTIONS: [Selection; 4] = [Selection::GeoIndex, Selection::MultiIndex, Selection::Sample10, Selection::Sample1];

impl Selection {
    pub fn label(&self) -> &'static str {
        match self {
            Selection::GeoIndex => "geospatial index",
            Selection::MultiIndex => "multiple indices",
            Selection::Sample10 => "10% sample",
            Selection::Sample1 => "1% sample",
        }
    }

    pub fn fraction(&self) -> Option<f64> {
        match self {
            Selection::Sample10 => Some(0.1),
            Selection::Sample1 => Some(0.01),
            _ => None,
        }
    }
}

/// Source and selection stages shared by the demo queries.
pub fn selection_flow(q: &DemoQuery, sel: Selection, seed: u64) -> String {
    let (a, b) = (EPOCH, EPOCH + q.days * DAY);
    let time = format!("p.ts >= {a} and p.ts < {b} and p.hour == 8 and p.dow <= 5");
    let mut s = match sel {
        Selection::GeoIndex => format!("flow(\"observations\").find(p => p.loc in {}).filter(p => {time})", q.region.rect()),
        _ => format!("flow(\"observations\").find(p => p.loc in {} and {time})", q.region.rect()),
    };
    if let Some(f) = sel.fraction() {
        let _ = write!(s, ".sample({f}, {seed})");
    }
    s
}

/// Per-road coefficient of variation of weekday 8-9 am speeds.
pub fn cv_query(q: &DemoQuery, sel: Selection, seed: u64) -> String {
    format!(
        "{}.aggregate(p => {{road: p.road}}, p => {{n: count(), mean: avg(p.speed), cv: stddev(p.speed) / avg(p.speed)}})",
        selection_flow(q, sel, seed)
    )
}

/// Count and exact speed total of the selection, for sampling estimates.
pub fn estimate_query(q: &DemoQuery, sel: Selection, seed: u64) -> String {
    format!("{}.aggregate(p => {{n: count(), total: sum(p.speed)}})", selection_flow(q, sel, seed))
}

/// Mean speed from an `estimate_query` result.
pub fn mean_of(res: &[Record]) -> Option<f64> {
    let r = res.first()?;
    let n = r.get("n")?.as_f64()?;
    Some(r.get("total")?.as_f64()? / n)
}

#[derive(Debug, Clone)]
pub struct Measurement {
    pub query: &'static str,
    pub selection: Selection,
    pub docs_scanned: u64,
    pub postings_read: u64,
    pub bytes_read: u64,
    pub cpu: Duration,
    pub wall: Duration,
    pub rows: usize,
    pub shards: usize,
}

/// Runs `text` `repeats` times and keeps the fastest wall time.
pub fn measure(session: &mut Session, q: &DemoQuery, sel: Selection, text: &str, repeats: usize) -> Result<(Measurement, QueryResult)> {
    let mut best: Option<QueryResult> = None;
    for _ in 0..repeats.max(1) {
        let r = session.query(text)?;
        if best.as_ref().is_none_or(|b| r.stats.wall_ns < b.stats.wall_ns) {
            best = Some(r);
        }
    }
    let r = best.expect("at least one run");
    let st = &r.stats;
    let m = Measurement {
        query: q.name,
        selection: sel,
        docs_scanned: st.totals.docs_scanned,
        postings_read: st.totals.postings_read,
        bytes_read: st.totals.bytes_read,
        cpu: st.cpu_time(),
        wall: st.wall_time(),
        rows: r.records.len(),
        shards: st.shards_planned,
    };
    Ok((m, r))
}

/// Every demo query under every selection strategy.
pub fn run_table(session: &mut Session, seed: u64, repeats: usize) -> Result<Vec<Measurement>> {
    let mut out = Vec::new();
    for q in &QUERIES {
        for sel in SELECTIONS {
            out.push(measure(session, q, sel, &cv_query(q, sel, seed), repeats)?.0);
        }
    }
    Ok(out)
}

pub fn render_table(rows: &[Measurement]) -> String {
    let mut s = format!(
        "{:<5} {:<17} {:>6} {:>12} {:>12} {:>14} {:>10} {:>10} {:>6}\n",
        "query", "selection", "shards", "docs", "postings", "bytes", "cpu_ms", "wall_ms", "rows"
    );
    for m in rows {
        let _ = writeln!(
            s,
            "{:<5} {:<17} {:>6} {:>12} {:>12} {:>14} {:>10.1} {:>10.1} {:>6}",
            m.query,
            m.selection.label(),
            m.shards,
            m.docs_scanned,
            m.postings_read,
            m.bytes_read,
            m.cpu.as_secs_f64() * 1e3,
            m.wall.as_secs_f64() * 1e3,
            m.rows
        );
    }
    s
}

/// FeatureCollection with one LineString per road in `rows` (the output of
/// `cv_query`), carrying its observation count, mean speed and coefficient
/// of variation.
pub fn cv_geojson(rows: &[Record], roads: &[Record]) -> serde_json::Value {
    let features: Vec<serde_json::Value> = rows
        .iter()
        .filter_map(|r| {
            let id = r.get("road")?.as_i64()? as usize;
            let road = roads.get(id)?;
            let coords: Vec<serde_json::Value> = road
                .get("pts")?
                .as_slice()?
                .iter()
                .filter_map(|p| p.as_geo_point().map(|g| json!([g.lng, g.lat])))
                .collect();
            Some(json!({
                "type": "Feature",
                "geometry": {"type": "LineString", "coordinates": coords},
                "properties": {
                    "road": id,
                    "n": r.get("n").and_then(Value::as_f64),
                    "mean": r.get("mean").and_then(Value::as_f64),
                    "cv": r.get("cv").and_then(Value::as_f64),
                },
            }))
        })
        .collect();
    json!({"type": "FeatureCollection", "features": features})
}

/// Speed-model evaluation on San Francisco route requests at 8 am: predicted
/// travel time of each request is the sum over its route of segment length
/// over predicted segment speed; the result is the mean and population
/// stddev of predicted minus actual travel time.
pub fn fig1_program() -> String {
    let r = SF.rect();
    format!(
        "let segs = flow(\"roads\").find(r => r.center in {r})\n\
         \x20 .map(r => {{seg: r.id, dist: length_m(r.pts), speed: model.to_vector(model.apply(\"speed\", [double(r.lanes), r.limit, 8.0]))[0]}})\n\
         \x20 .collect();\n\
         flow(\"requests\").find(q => q.origin in {r} and q.hour == 8)\n\
         \x20 .flatten(q => q.route)\n\
         \x20 .join(segs, q => q.route, s => s.seg)\n\
         \x20 .aggregate(x => {{req: x.id}}, x => {{pred: sum(x.dist / x.speed), actual: max(x.actual)}})\n\
         \x20 .map(x => {{err: x.pred - x.actual}})\n\
         \x20 .aggregate(x => {{n: count(), mean: avg(x.err), sd: stddev(x.err)}})"
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorSummary {
    pub n: u64,
    pub mean: f64,
    pub sd: f64,
}

/// Runs `fig1_program` in a session.
pub fn run_fig1(session: &mut Session) -> Result<ErrorSummary> {
    let out = session.execute(&fig1_program())?;
    let Some(StatementResult::Rows(res)) = out.last() else {
        return Err(EngineError::BadQuery("demo program returned no rows".into()));
    };
    let r = res.records.first().ok_or_else(|| EngineError::BadQuery("no San Francisco requests at 8 am".into()))?;
    let f = |k: &str| r.get(k).and_then(Value::as_f64).unwrap_or(f64::NAN);
    Ok(ErrorSummary { n: f("n") as u64, mean: f("mean"), sd: f("sd") })
}

/// The same computation as `fig1_program` as direct loops over the
/// generated records.
pub fn fig1_brute_force(cfg: &DemoConfig) -> ErrorSummary {
    let roads = gen_roads(cfg);
    let store = speed_model_store();
    let mut errs = Vec::new();
    for q in gen_requests(cfg, &roads) {
        let ts = q.get("ts").and_then(Value::as_i64).unwrap();
        let o = q.get("origin").and_then(Value::as_geo_point).unwrap();
        if ts.rem_euclid(DAY) / 3600 != 8 || !SF.contains(o.lat, o.lng) {
            continue;
        }
        let mut pred = 0.0;
        let mut matched = false;
        for id in q.get("route").and_then(Value::as_slice).unwrap() {
            let road = &roads[id.as_i64().unwrap() as usize];
            let c = road.get("center").and_then(Value::as_geo_point).unwrap();
            if !SF.contains(c.lat, c.lng) {
                continue;
            }
            let lanes = road.get("lanes").and_then(Value::as_f64).unwrap();
            let limit = road.get("limit").and_then(Value::as_f64).unwrap();
            let speed = store.apply("speed", &[lanes, limit, 8.0]).unwrap().data()[0];
            pred += road_length_m(road) / speed;
            matched = true;
        }
        if matched {
            errs.push(pred - q.get("actual").and_then(Value::as_f64).unwrap());
        }
    }
    let n = errs.len() as f64;
    let mean = errs.iter().sum::<f64>() / n;
    let var = errs.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n;
    ErrorSummary { n: errs.len() as u64, mean, sd: var.sqrt() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::results_match;
    use crate::wfl::time::{day_of_week, hour_of_day};

    fn small() -> DemoConfig {
        DemoConfig { observations: 20_000, roads: 200, requests: 3000, shards: 8, seed: 7, workers: 2 }
    }

    #[test]
    fn generator_is_byte_stable() {
        let cfg = small();
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        build_demo(a.path(), &cfg).unwrap();
        build_demo(b.path(), &cfg).unwrap();
        for ds in ["roads", "requests", "observations"] {
            for f in ["MANIFEST", "shard-00000.tst", "shard-00001.tst"] {
                let x = std::fs::read(a.path().join(ds).join(f)).unwrap();
                assert_eq!(x, std::fs::read(b.path().join(ds).join(f)).unwrap(), "{ds}/{f}");
            }
        }
    }

    #[test]
    fn rush_hour_rule_matches_time_builtins() {
        let mut rng = rng_for(1, 9);
        for _ in 0..1000 {
            let ts = random_ts(&mut rng);
            assert_eq!(is_rush(ts), hour_of_day(ts) == 8 && day_of_week(ts) <= 5);
        }
        assert_eq!(day_of_week(EPOCH), 1);
    }

    #[test]
    fn constant_speed_road_has_zero_cv() {
        let mut s = Session::new(Catalog::new());
        s.execute("let obs = [{road: 1, speed: 10.0}, {road: 1, speed: 10.0}, {road: 2, speed: 4.0}, {road: 2, speed: 8.0}];").unwrap();
        let r = s.query("obs.aggregate(p => {road: p.road}, p => {cv: stddev(p.speed) / avg(p.speed)})").unwrap();
        assert_eq!(r.records[0].get("cv"), Some(&Value::Double(0.0)));
        assert_eq!(r.records[1].get("cv"), Some(&Value::Double(2.0 / 6.0)));
    }

    #[test]
    fn selections_agree_and_indices_narrow_the_scan() {
        let cfg = small();
        let dir = tempfile::tempdir().unwrap();
        build_demo(dir.path(), &cfg).unwrap();
        let mut s = demo_session(dir.path(), 2).unwrap();
        let q = &QUERIES[3];
        let (geo, a) = measure(&mut s, q, Selection::GeoIndex, &cv_query(q, Selection::GeoIndex, 1), 1).unwrap();
        let (multi, b) = measure(&mut s, q, Selection::MultiIndex, &cv_query(q, Selection::MultiIndex, 1), 1).unwrap();
        assert!(!a.records.is_empty());
        assert!(results_match(&a.records, &b.records, 1e-12));
        assert!(geo.docs_scanned > multi.docs_scanned);
        let json = cv_geojson(&b.records, &gen_roads(&cfg));
        assert_eq!(json["features"].as_array().unwrap().len(), b.records.len());
    }

    #[test]
    fn fig1_matches_brute_force() {
        let cfg = small();
        let dir = tempfile::tempdir().unwrap();
        build_demo(dir.path(), &cfg).unwrap();
        let mut s = demo_session(dir.path(), 2).unwrap();
        let got = run_fig1(&mut s).unwrap();
        let want = fig1_brute_force(&cfg);
        assert!(want.n > 10, "{want:?}");
        assert_eq!(got.n, want.n);
        assert!(((got.mean - want.mean) / want.mean).abs() <= 1e-9, "{got:?} vs {want:?}");
        assert!(((got.sd - want.sd) / want.sd).abs() <= 1e-9, "{got:?} vs {want:?}");
    }
}

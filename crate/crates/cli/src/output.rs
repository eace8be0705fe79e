// SPDX-License-Identifier: Apache-2.0

//! Result rendering for the `--output` formats.

use std::fmt::Write as _;

use serde_json::{json, Value as J};
use tesserflow::value::{to_json, Record, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Table,
    Jsonl,
    Csv,
    Geojson,
}

/// Column names in order of first appearance.
fn columns(rows: &[Record]) -> Vec<String> {
    let mut cols: Vec<String> = Vec::new();
    for r in rows {
        for n in r.names() {
            if !cols.iter().any(|c| c == n) {
                cols.push(n.to_string());
            }
        }
    }
    cols
}

/// Cell text shared by table and csv: strings verbatim, null as empty,
/// everything else as compact JSON.
fn cell(v: Option<&Value>) -> String {
    match v {
        None | Some(Value::Null) => String::new(),
        Some(Value::Str(s)) => s.to_string(),
        Some(v) => to_json(v).to_string(),
    }
}

pub fn render(rows: &[Record], fmt: Format) -> String {
    match fmt {
        Format::Table => table(rows),
        Format::Jsonl => rows.iter().map(|r| format!("{}\n", to_json(&Value::Record(r.clone())))).collect(),
        Format::Csv => csv(rows),
        Format::Geojson => format!("{}\n", geojson(rows)),
    }
}

fn table(rows: &[Record]) -> String {
    let cols = columns(rows);
    let cells: Vec<Vec<String>> = rows.iter().map(|r| cols.iter().map(|c| cell(r.get(c))).collect()).collect();
    let width: Vec<usize> = cols
        .iter()
        .enumerate()
        .map(|(i, c)| cells.iter().map(|r| r[i].chars().count()).chain([c.chars().count()]).max().unwrap_or(0))
        .collect();
    let line = |vals: &[String]| {
        let mut s = String::new();
        for (i, v) in vals.iter().enumerate() {
            if i > 0 {
                s.push_str("  ");
            }
            let _ = write!(s, "{v:<w$}", w = width[i]);
        }
        s.truncate(s.trim_end().len());
        s.push('\n');
        s
    };
    let mut out = line(&cols);
    out.push_str(&line(&width.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>()));
    for r in &cells {
        out.push_str(&line(r));
    }
    let _ = writeln!(out, "({} rows)", rows.len());
    out
}

fn csv(rows: &[Record]) -> String {
    let cols = columns(rows);
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    w.write_record(&cols).expect("in-memory write");
    for r in rows {
        w.write_record(cols.iter().map(|c| cell(r.get(c)))).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

fn as_point(v: &Value) -> Option<[f64; 2]> {
    match v {
        Value::Record(_) => v.as_geo_point().map(|p| [p.lng, p.lat]),
        _ => None,
    }
}

/// Geometry of the first field holding a shape, a `{lat, lng}` point or a
/// vector of at least two such points.
fn geometry(v: &Value) -> Option<J> {
    match v {
        Value::Geo(_) | Value::Area(_) => Some(to_json(v)),
        Value::Record(_) => as_point(v).map(|c| json!({"type": "Point", "coordinates": c})),
        Value::Vector(xs) if xs.len() >= 2 => {
            let pts: Option<Vec<[f64; 2]>> = xs.iter().map(as_point).collect();
            pts.map(|c| json!({"type": "LineString", "coordinates": c}))
        }
        _ => None,
    }
}

pub fn geojson(rows: &[Record]) -> J {
    let features: Vec<J> = rows
        .iter()
        .map(|r| {
            let geo = r.iter().find_map(|(k, v)| geometry(v).map(|g| (k, g)));
            let mut props = serde_json::Map::new();
            for (k, v) in r.iter() {
                if geo.as_ref().is_some_and(|(g, _)| *g == k) {
                    continue;
                }
                props.insert(k.to_string(), to_json(v));
            }
            json!({"type": "Feature", "geometry": geo.map(|(_, g)| g), "properties": props})
        })
        .collect();
    json!({"type": "FeatureCollection", "features": features})
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows() -> Vec<Record> {
        let mut a = Record::new();
        a.set("name", Value::str("x, \"y\""));
        a.set("n", Value::Int(3));
        let mut loc = Record::new();
        loc.set("lat", Value::Double(37.5));
        loc.set("lng", Value::Double(-122.25));
        a.set("loc", Value::Record(loc));
        let mut b = Record::new();
        b.set("n", Value::Double(0.5));
        vec![a, b]
    }

    #[test]
    fn csv_quotes_and_pads_missing_cells() {
        assert_eq!(
            render(&rows(), Format::Csv),
            "name,n,loc\r\n\"x, \"\"y\"\"\",3,\"{\"\"lat\"\":37.5,\"\"lng\"\":-122.25}\"\r\n,0.5,\r\n"
        );
    }

    #[test]
    fn geojson_takes_first_point_field() {
        let g = geojson(&rows());
        assert_eq!(g["features"][0]["geometry"], json!({"type": "Point", "coordinates": [-122.25, 37.5]}));
        assert_eq!(g["features"][0]["properties"], json!({"name": "x, \"y\"", "n": 3}));
        assert_eq!(g["features"][1]["geometry"], J::Null);
    }

    #[test]
    fn table_aligns_columns() {
        let t = render(&rows()[1..], Format::Table);
        assert_eq!(t, "n\n---\n0.5\n(1 rows)\n");
    }
}

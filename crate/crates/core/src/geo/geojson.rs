// SPDX-License-Identifier: Apache-2.0

use serde_json::{json, Value};

use super::{grid_to_latlng, AreaTree, GeoPoint, Geometry};

fn pos(p: GeoPoint) -> Value {
    json!([p.lng, p.lat])
}

/// GeoJSON `MultiPolygon` with one square per FULL cell.
pub fn area_to_geojson(area: &AreaTree) -> Value {
    let polys: Vec<Value> = area
        .cells()
        .iter()
        .map(|c| {
            let r = c.rect();
            let (x0, y0, x1, y1) = (r.x0 as f64, r.y0 as f64, r.x1 as f64, r.y1 as f64);
            // Exterior ring counter-clockwise in lng/lat (y grows southward).
            let ring = [(x0, y1), (x1, y1), (x1, y0), (x0, y0), (x0, y1)]
                .iter()
                .map(|&(x, y)| pos(grid_to_latlng(x, y)))
                .collect::<Vec<_>>();
            json!([ring])
        })
        .collect();
    json!({"type": "MultiPolygon", "coordinates": polys})
}

pub fn geometry_to_geojson(g: &Geometry) -> Value {
    match g {
        Geometry::Point(p) => json!({"type": "Point", "coordinates": pos(*p)}),
        Geometry::Rect(r) => {
            let (s, w, n, e) = (r.sw.lat, r.sw.lng, r.ne.lat, r.ne.lng);
            json!({
                "type": "Polygon",
                "coordinates": [[[w, s], [e, s], [e, n], [w, n], [w, s]]],
            })
        }
        Geometry::Polygon(p) => json!({
            "type": "Polygon",
            "coordinates": p.rings.iter()
                .map(|r| r.iter().map(|q| pos(*q)).collect::<Vec<_>>())
                .collect::<Vec<_>>(),
        }),
        Geometry::Path(p) => json!({
            "type": "LineString",
            "coordinates": p.points.iter().map(|q| pos(*q)).collect::<Vec<_>>(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{CellId, GridPoint};

    #[test]
    fn one_cell_one_square() {
        let c = CellId::containing(GridPoint::new(1 << 30, 1 << 30), 1);
        let v = area_to_geojson(&AreaTree::single_cell(4, c));
        let coords = v["coordinates"].as_array().unwrap();
        assert_eq!(coords.len(), 1);
        let ring = coords[0][0].as_array().unwrap();
        assert_eq!(ring.len(), 5);
        assert_eq!(ring[0], ring[4]);
        let lng0 = ring[0][0].as_f64().unwrap();
        let lat0 = ring[0][1].as_f64().unwrap();
        assert!(lng0.abs() < 1e-9 && lat0 < 0.0);
    }

    #[test]
    fn point_is_lng_lat() {
        let g = Geometry::Point(GeoPoint::new(10.0, 20.0).unwrap());
        assert_eq!(geometry_to_geojson(&g)["coordinates"], json!([20.0, 10.0]));
    }
}

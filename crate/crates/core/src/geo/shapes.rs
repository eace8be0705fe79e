// SPDX-License-Identifier: Apache-2.0

use super::covering::rect_grid_bounds;
use super::{project, project_f64, GeoError, GeoPoint, GridPoint, GridRect, Result, MAX_ABS_LAT};

/// Rectangle given by its south-west and north-east corners. `ne.lng` may be
/// exactly 180 to reach the east edge of the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatLngRect {
    pub sw: GeoPoint,
    pub ne: GeoPoint,
}

impl LatLngRect {
    pub fn new(sw_lat: f64, sw_lng: f64, ne_lat: f64, ne_lng: f64) -> Result<Self> {
        for v in [sw_lat, sw_lng, ne_lat, ne_lng] {
            if !v.is_finite() {
                return Err(GeoError::InvalidCoordinate(format!("{v}")));
            }
        }
        for lat in [sw_lat, ne_lat] {
            if lat.abs() > MAX_ABS_LAT {
                return Err(GeoError::OutOfBand(lat));
            }
        }
        if !(-180.0..=180.0).contains(&sw_lng) || !(-180.0..=180.0).contains(&ne_lng) {
            return Err(GeoError::InvalidCoordinate(format!(
                "rect longitudes must lie in [-180, 180], got {sw_lng}..{ne_lng}"
            )));
        }
        if sw_lat > ne_lat || sw_lng > ne_lng {
            return Err(GeoError::InvalidCoordinate(format!(
                "rect corners out of order: sw=({sw_lat}, {sw_lng}) ne=({ne_lat}, {ne_lng})"
            )));
        }
        let sw_lng = if sw_lng == 180.0 { 180.0 - 1e-12 } else { sw_lng };
        Ok(LatLngRect {
            sw: GeoPoint { lat: sw_lat, lng: sw_lng },
            ne: GeoPoint { lat: ne_lat, lng: ne_lng },
        })
    }

    /// Inclusive grid bounds as a half-open grid rectangle.
    pub fn grid_rect(&self) -> Result<GridRect> {
        let (lo, hi) = rect_grid_bounds(self.sw, self.ne)?;
        Ok(GridRect::inclusive(lo, hi))
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        match (self.grid_rect(), project(p)) {
            (Ok(r), Ok(g)) => r.contains(g),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    /// Closed rings (first point repeated at the end). Containment uses the
    /// even-odd rule across all rings, so inner rings act as holes.
    pub rings: Vec<Vec<GeoPoint>>,
}

impl Polygon {
    pub fn new(rings: Vec<Vec<GeoPoint>>) -> Result<Self> {
        if rings.is_empty() {
            return Err(GeoError::DegenerateRing);
        }
        let mut out = Vec::with_capacity(rings.len());
        for mut ring in rings {
            let mut distinct: Vec<GeoPoint> = Vec::new();
            for p in &ring {
                if !distinct.iter().any(|q| q == p) {
                    distinct.push(*p);
                }
            }
            if distinct.len() < 3 {
                return Err(GeoError::DegenerateRing);
            }
            if ring.first() != ring.last() {
                ring.push(ring[0]);
            }
            out.push(ring);
        }
        Ok(Polygon { rings: out })
    }

    /// Rings in continuous grid coordinates.
    pub fn grid_rings(&self) -> Vec<Vec<(f64, f64)>> {
        self.rings
            .iter()
            .map(|r| r.iter().map(|p| project_f64(*p)).collect())
            .collect()
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        point_in_polygon(project_f64(p), &self.grid_rings())
    }
}

/// Even-odd containment test in grid space.
pub fn point_in_polygon(p: (f64, f64), rings: &[Vec<(f64, f64)>]) -> bool {
    let (px, py) = p;
    let mut inside = false;
    for ring in rings {
        for w in ring.windows(2) {
            let ((x1, y1), (x2, y2)) = (w[0], w[1]);
            if (y1 > py) != (y2 > py) {
                let xi = x1 + (py - y1) * (x2 - x1) / (y2 - y1);
                if px < xi {
                    inside = !inside;
                }
            }
        }
    }
    inside
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub points: Vec<GeoPoint>,
}

impl Polyline {
    pub fn new(points: Vec<GeoPoint>) -> Result<Self> {
        if points.len() < 2 {
            return Err(GeoError::DegeneratePath);
        }
        Ok(Polyline { points })
    }

    pub fn length_m(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| super::distance_m(w[0], w[1]))
            .sum()
    }
}

/// Geometry values that query text can construct.
#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    Point(GeoPoint),
    Rect(LatLngRect),
    Polygon(Polygon),
    Path(Polyline),
}

impl Geometry {
    pub fn kind(&self) -> &'static str {
        match self {
            Geometry::Point(_) => "point",
            Geometry::Rect(_) => "rect",
            Geometry::Polygon(_) => "polygon",
            Geometry::Path(_) => "path",
        }
    }

    pub fn as_point(&self) -> Option<GeoPoint> {
        match self {
            Geometry::Point(p) => Some(*p),
            _ => None,
        }
    }

    pub fn grid_point(&self) -> Option<GridPoint> {
        self.as_point().and_then(|p| project(p).ok())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_validation() {
        let p = |a, b| GeoPoint::new(a, b).unwrap();
        assert_eq!(
            Polygon::new(vec![vec![p(0.0, 0.0), p(1.0, 1.0), p(0.0, 0.0)]]),
            Err(GeoError::DegenerateRing)
        );
        let poly = Polygon::new(vec![vec![p(0.0, 0.0), p(0.0, 1.0), p(1.0, 1.0)]]).unwrap();
        assert_eq!(poly.rings[0].len(), 4);
        assert!(poly.contains(p(0.25, 0.75)));
        assert!(!poly.contains(p(0.75, 0.25)));
        assert_eq!(Polyline::new(vec![p(0.0, 0.0)]), Err(GeoError::DegeneratePath));
    }

    #[test]
    fn rect_contains_is_inclusive_on_grid() {
        let r = LatLngRect::new(10.0, 20.0, 11.0, 21.0).unwrap();
        assert!(r.contains(GeoPoint::new(10.0, 20.0).unwrap()));
        assert!(r.contains(GeoPoint::new(11.0, 21.0).unwrap()));
        assert!(r.contains(GeoPoint::new(10.5, 20.5).unwrap()));
        assert!(!r.contains(GeoPoint::new(11.001, 20.5).unwrap()));
        assert!(LatLngRect::new(11.0, 20.0, 10.0, 21.0).is_err());
    }

    #[test]
    fn holes_via_even_odd() {
        let p = |a, b| GeoPoint::new(a, b).unwrap();
        let outer = vec![p(0.0, 0.0), p(0.0, 10.0), p(10.0, 10.0), p(10.0, 0.0)];
        let hole = vec![p(4.0, 4.0), p(4.0, 6.0), p(6.0, 6.0), p(6.0, 4.0)];
        let poly = Polygon::new(vec![outer, hole]).unwrap();
        assert!(poly.contains(p(2.0, 2.0)));
        assert!(!poly.contains(p(5.0, 5.0)));
    }
}

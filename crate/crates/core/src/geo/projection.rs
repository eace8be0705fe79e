// SPDX-License-Identifier: Apache-2.0

use std::f64::consts::PI;

use super::{GeoError, Result};

pub const GRID_BITS: u32 = 31;
pub const GRID_SIZE: u64 = 1 << GRID_BITS;
/// Band limit for indexable latitudes. The square Mercator domain ends at
/// `atan(sinh(pi))` = 85.0511287798 degrees.
pub const MAX_ABS_LAT: f64 = 85.05113;
/// Mean earth radius used for all spherical distance math.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

const GRID_F: f64 = GRID_SIZE as f64;
const MAX_UNIT: f64 = (GRID_SIZE - 1) as f64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    pub lat: f64,
    pub lng: f64,
}

impl GeoPoint {
    /// Validates the band limit and normalizes `lng` into `[-180, 180)`.
    pub fn new(lat: f64, lng: f64) -> Result<Self> {
        if !lat.is_finite() || !lng.is_finite() {
            return Err(GeoError::InvalidCoordinate(format!("({lat}, {lng})")));
        }
        if lat.abs() > MAX_ABS_LAT {
            return Err(GeoError::OutOfBand(lat));
        }
        Ok(GeoPoint {
            lat,
            lng: normalize_lng(lng),
        })
    }
}

pub(crate) fn normalize_lng(lng: f64) -> f64 {
    if (-180.0..180.0).contains(&lng) {
        lng
    } else {
        (lng + 180.0).rem_euclid(360.0) - 180.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridPoint {
    pub x: u32,
    pub y: u32,
}

impl GridPoint {
    pub fn new(x: u32, y: u32) -> Self {
        debug_assert!((x as u64) < GRID_SIZE && (y as u64) < GRID_SIZE);
        GridPoint { x, y }
    }
}

/// Continuous (unfloored) grid coordinates of a point. Shapes are rasterized
/// in this space.
pub fn project_f64(p: GeoPoint) -> (f64, f64) {
    let x = (p.lng + 180.0) / 360.0 * GRID_F;
    let y = (1.0 - p.lat.to_radians().tan().asinh() / PI) / 2.0 * GRID_F;
    (x, y)
}

pub fn project(p: GeoPoint) -> Result<GridPoint> {
    if p.lat.abs() > MAX_ABS_LAT || !p.lat.is_finite() {
        return Err(GeoError::OutOfBand(p.lat));
    }
    let (x, y) = project_f64(GeoPoint {
        lat: p.lat,
        lng: normalize_lng(p.lng),
    });
    Ok(GridPoint {
        x: x.floor().clamp(0.0, MAX_UNIT) as u32,
        y: y.floor().clamp(0.0, MAX_UNIT) as u32,
    })
}

/// Inverse projection of continuous grid coordinates.
pub fn grid_to_latlng(x: f64, y: f64) -> GeoPoint {
    let lng = x / GRID_F * 360.0 - 180.0;
    let lat = (PI * (1.0 - 2.0 * y / GRID_F)).sinh().atan().to_degrees();
    GeoPoint { lat, lng }
}

/// Returns the centre of the grid unit.
pub fn unproject(g: GridPoint) -> GeoPoint {
    grid_to_latlng(g.x as f64 + 0.5, g.y as f64 + 0.5)
}

/// Haversine distance on the sphere.
pub fn distance_m(a: GeoPoint, b: GeoPoint) -> f64 {
    let (la, lb) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lb - la;
    let dlng = (b.lng - a.lng).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + la.cos() * lb.cos() * (dlng / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Converts a ground distance to grid units, using the Mercator scale at the
/// given latitude.
pub fn meters_to_units(meters: f64, lat: f64) -> f64 {
    let lat = lat.abs().min(MAX_ABS_LAT).to_radians();
    meters * GRID_F / (2.0 * PI * EARTH_RADIUS_M * lat.cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_maps_to_grid_centre() {
        let g = project(GeoPoint::new(0.0, 0.0).unwrap()).unwrap();
        assert_eq!(g, GridPoint::new(1 << 30, 1 << 30));
    }

    #[test]
    fn west_edge() {
        let g = project(GeoPoint::new(0.0, -180.0).unwrap()).unwrap();
        assert_eq!(g, GridPoint::new(0, 1 << 30));
    }

    #[test]
    fn san_francisco_matches_log_tan_formula() {
        // Web-Mercator written with ln(tan(pi/4 + lat/2)) instead of asinh(tan).
        let (lat, lng) = (37.7749f64, -122.4194f64);
        let ex = ((lng + 180.0) / 360.0 * 2f64.powi(31)).floor() as u32;
        let merc = (PI / 4.0 + lat.to_radians() / 2.0).tan().ln();
        let ey = ((1.0 - merc / PI) / 2.0 * 2f64.powi(31)).floor() as u32;
        let g = project(GeoPoint::new(lat, lng).unwrap()).unwrap();
        assert_eq!((g.x, g.y), (ex, ey));
        assert_eq!((g.x, g.y), (343_481_658, 830_047_391));
    }

    #[test]
    fn out_of_band_rejected() {
        assert_eq!(GeoPoint::new(86.0, 0.0), Err(GeoError::OutOfBand(86.0)));
        let raw = GeoPoint { lat: -85.1, lng: 0.0 };
        assert!(matches!(project(raw), Err(GeoError::OutOfBand(_))));
    }

    #[test]
    fn unproject_centre_and_corner() {
        let c = unproject(GridPoint::new(1 << 30, 1 << 30));
        assert!(c.lat.abs() < 1e-6 && c.lng.abs() < 1e-6);
        let nw = unproject(GridPoint::new(0, 0));
        assert!((nw.lat - 85.05113).abs() < 1e-4);
        assert!((nw.lng + 180.0).abs() < 1e-4);
    }

    #[test]
    fn lng_normalization() {
        assert_eq!(GeoPoint::new(0.0, 180.0).unwrap().lng, -180.0);
        assert_eq!(GeoPoint::new(0.0, 190.0).unwrap().lng, -170.0);
        assert_eq!(GeoPoint::new(0.0, -190.0).unwrap().lng, 170.0);
    }

    #[test]
    fn equator_degree_distance() {
        let a = GeoPoint::new(0.0, 10.0).unwrap();
        let b = GeoPoint::new(0.0, 11.0).unwrap();
        let d = distance_m(a, b);
        let closed_form = 2.0 * PI * EARTH_RADIUS_M / 360.0;
        assert!((d - closed_form).abs() < 1e-6);
        assert!((d - 111_195.0).abs() / 111_195.0 < 0.005);
        assert_eq!(distance_m(a, a), 0.0);
    }
}

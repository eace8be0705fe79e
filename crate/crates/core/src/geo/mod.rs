// SPDX-License-Identifier: Apache-2.0

//! Integer Mercator grid, Morton cells and 64-way area trees.
//!
//! All indexing geometry lives on a square grid of `2^31 x 2^31` units obtained
//! from the spherical Mercator projection. `x` grows eastward from the
//! antimeridian and `y` grows southward from the northern band limit, so one
//! unit is roughly 1.87 cm at the equator.
//!
//! Area trees split every cell into `8 x 8` children. A level-`L` cell spans
//! `2^(31 - 3L)` grid units per axis; level 10 is the finest level.

mod area;
mod cell;
mod covering;
mod geojson;
mod morton;
mod projection;
mod shapes;

pub use area::{AreaTree, Branch, CombineOp, Coverage, Node, DEFAULT_MAX_LEVEL};
pub use cell::{CellId, GridRect, MAX_LEVEL};
pub use covering::{covering_ranges, covering_ranges_grid, CodeRange};
pub use geojson::{area_to_geojson, geometry_to_geojson};
pub use morton::{morton_decode, morton_encode};
pub use projection::{
    distance_m, grid_to_latlng, meters_to_units, project, project_f64, unproject, GeoPoint,
    GridPoint, EARTH_RADIUS_M, GRID_BITS, GRID_SIZE, MAX_ABS_LAT,
};
pub use shapes::{point_in_polygon, Geometry, LatLngRect, Polygon, Polyline};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeoError {
    #[error("latitude {0} is outside the indexable band of +/-{MAX_ABS_LAT} degrees")]
    OutOfBand(f64),
    #[error("invalid coordinate: {0}")]
    InvalidCoordinate(String),
    #[error("area trees have different max levels ({0} vs {1})")]
    LevelMismatch(u8, u8),
    #[error("polygon ring has fewer than 3 distinct points")]
    DegenerateRing,
    #[error("path needs at least 2 points")]
    DegeneratePath,
    #[error("invalid parameter: {0}")]
    BadParam(String),
}

pub type Result<T> = std::result::Result<T, GeoError>;

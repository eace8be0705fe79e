// SPDX-License-Identifier: Apache-2.0

use std::collections::BinaryHeap;

use super::{project, GeoPoint, GridPoint, GridRect, LatLngRect, Result, GRID_BITS};

/// Contiguous half-open span `[lo, hi)` of Morton codes. Each range produced
/// by a covering is the code span of one aligned power-of-two square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CodeRange {
    pub lo: u64,
    pub hi: u64,
}

impl CodeRange {
    pub fn contains(&self, code: u64) -> bool {
        code >= self.lo && code < self.hi
    }
}

/// Aligned square of side `2^bits` whose min corner has Morton code `code`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct QuadCell {
    bits: u32,
    code: u64,
    x: u64,
    y: u64,
}

impl QuadCell {
    fn rect(&self) -> GridRect {
        let s = 1u64 << self.bits;
        GridRect {
            x0: self.x,
            y0: self.y,
            x1: self.x + s,
            y1: self.y + s,
        }
    }

    fn range(&self) -> CodeRange {
        CodeRange {
            lo: self.code,
            hi: self.code + (1u64 << (2 * self.bits)),
        }
    }

    fn children(&self) -> [QuadCell; 4] {
        let b = self.bits - 1;
        let h = 1u64 << b;
        let step = 1u64 << (2 * b);
        [
            QuadCell { bits: b, code: self.code, x: self.x, y: self.y },
            QuadCell { bits: b, code: self.code + step, x: self.x + h, y: self.y },
            QuadCell { bits: b, code: self.code + 2 * step, x: self.x, y: self.y + h },
            QuadCell { bits: b, code: self.code + 3 * step, x: self.x + h, y: self.y + h },
        ]
    }
}

// Max-heap by cell size, then by code for determinism.
impl Ord for QuadCell {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.bits.cmp(&o.bits).then(o.code.cmp(&self.code))
    }
}

impl PartialOrd for QuadCell {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}

/// Covers an inclusive grid rectangle with at most `max_cells` aligned cells.
/// The union of the returned ranges contains the code of every point in the
/// rectangle. Ranges are sorted and disjoint.
pub fn covering_ranges_grid(rect: GridRect, max_cells: usize) -> Vec<CodeRange> {
    let max_cells = max_cells.max(4);
    if rect.is_empty() {
        return Vec::new();
    }
    let root = QuadCell { bits: GRID_BITS, code: 0, x: 0, y: 0 };
    let mut done: Vec<QuadCell> = Vec::new();
    let mut heap = BinaryHeap::new();
    if rect.contains_rect(&root.rect()) {
        done.push(root);
    } else {
        heap.push(root);
    }
    while let Some(cell) = heap.pop() {
        let kids: Vec<QuadCell> = cell
            .children()
            .into_iter()
            .filter(|k| k.rect().intersects(&rect))
            .collect();
        if done.len() + heap.len() + kids.len() > max_cells {
            done.push(cell);
            done.extend(heap.drain());
            break;
        }
        for k in kids {
            if k.bits == 0 || rect.contains_rect(&k.rect()) {
                done.push(k);
            } else {
                heap.push(k);
            }
        }
    }
    let mut out: Vec<CodeRange> = done.iter().map(QuadCell::range).collect();
    out.sort();
    out
}

/// Covering of a lat/lng rectangle. A point is inside the rectangle when its
/// grid point lies between the grid points of the two corners (inclusive).
pub fn covering_ranges(rect: &LatLngRect, max_cells: usize) -> Result<Vec<CodeRange>> {
    Ok(covering_ranges_grid(rect.grid_rect()?, max_cells))
}

pub(crate) fn rect_grid_bounds(sw: GeoPoint, ne: GeoPoint) -> Result<(GridPoint, GridPoint)> {
    let a = project(sw)?;
    let mut b = project(ne)?;
    // The east edge at lng = 180 maps to the last column, not back to 0.
    if ne.lng >= 180.0 {
        b.x = (1u32 << 31) - 1;
    }
    Ok((GridPoint::new(a.x, b.y), GridPoint::new(b.x, a.y)))
}

#[cfg(test)]
pub(crate) fn code_in(ranges: &[CodeRange], p: GridPoint) -> bool {
    let c = super::morton_encode(p);
    let i = ranges.partition_point(|r| r.hi <= c);
    i < ranges.len() && ranges[i].contains(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn full_world_is_one_range() {
        let r = LatLngRect::new(-85.05113, -180.0, 85.05113, 180.0).unwrap();
        let cov = covering_ranges(&r, 16).unwrap();
        assert_eq!(cov, vec![CodeRange { lo: 0, hi: 1 << 62 }]);
    }

    #[test]
    fn point_rect_is_single_code() {
        let r = LatLngRect::new(37.5, -122.25, 37.5, -122.25).unwrap();
        let cov = covering_ranges(&r, 8).unwrap();
        assert_eq!(cov.len(), 1);
        assert_eq!(cov[0].hi - cov[0].lo, 1);
        let g = project(GeoPoint::new(37.5, -122.25).unwrap()).unwrap();
        assert_eq!(cov[0].lo, crate::geo::morton_encode(g));
    }

    #[test]
    fn toy_grid_exhaustive_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let (a, b) = (rng.gen_range(0..256u32), rng.gen_range(0..256u32));
            let (c, d) = (rng.gen_range(0..256u32), rng.gen_range(0..256u32));
            let lo = GridPoint::new(a.min(b), c.min(d));
            let hi = GridPoint::new(a.max(b), c.max(d));
            let rect = GridRect::inclusive(lo, hi);
            let max_cells = rng.gen_range(4..64);
            let cov = covering_ranges_grid(rect, max_cells);
            assert!(cov.len() <= max_cells);
            for w in cov.windows(2) {
                assert!(w[0].hi <= w[1].lo);
            }
            for r in &cov {
                let n = r.hi - r.lo;
                assert!(n.is_power_of_two() && n.trailing_zeros() % 2 == 0);
                assert_eq!(r.lo % n, 0, "range is not an aligned cell");
            }
            for x in 0..256 {
                for y in 0..256 {
                    let p = GridPoint::new(x, y);
                    if rect.contains(p) {
                        assert!(code_in(&cov, p), "{p:?} missing from covering of {rect:?}");
                    }
                }
            }
        }
    }
}

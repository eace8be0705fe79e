// SPDX-License-Identifier: Apache-2.0

use super::{morton_decode, morton_encode, GridPoint, GRID_BITS};

/// Finest area-tree level: `31 - 3 * 10 = 1`, i.e. 2-unit cells.
pub const MAX_LEVEL: u8 = 10;

/// An area-tree cell: the Morton code of its min corner plus its level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellId {
    pub level: u8,
    pub code: u64,
}

impl CellId {
    pub const ROOT: CellId = CellId { level: 0, code: 0 };

    /// Number of bits per axis covered by a cell at `level`.
    #[inline]
    pub fn span_bits(level: u8) -> u32 {
        debug_assert!(level <= MAX_LEVEL);
        GRID_BITS - 3 * level as u32
    }

    pub fn containing(p: GridPoint, level: u8) -> CellId {
        let shift = 2 * Self::span_bits(level);
        let code = morton_encode(p);
        CellId {
            level,
            code: if shift >= 64 { 0 } else { code & !((1u64 << shift) - 1) },
        }
    }

    /// Edge length in grid units.
    #[inline]
    pub fn size(&self) -> u64 {
        1u64 << Self::span_bits(self.level)
    }

    /// Half-open range of Morton codes of all grid points in the cell.
    pub fn code_range(&self) -> (u64, u64) {
        let n = 1u64 << (2 * Self::span_bits(self.level));
        (self.code, self.code + n)
    }

    pub fn min_corner(&self) -> GridPoint {
        morton_decode(self.code)
    }

    pub fn rect(&self) -> GridRect {
        let c = self.min_corner();
        let s = self.size();
        GridRect {
            x0: c.x as u64,
            y0: c.y as u64,
            x1: c.x as u64 + s,
            y1: c.y as u64 + s,
        }
    }

    /// Child at `slot` (0..64), where the slot is the 6-bit Morton code of the
    /// child position inside the `8 x 8` split. Slot order equals code order.
    pub fn child(&self, slot: u32) -> CellId {
        debug_assert!(self.level < MAX_LEVEL && slot < 64);
        let child_level = self.level + 1;
        let shift = 2 * Self::span_bits(child_level);
        CellId {
            level: child_level,
            code: self.code | ((slot as u64) << shift),
        }
    }

    pub fn children(&self) -> impl Iterator<Item = CellId> + '_ {
        (0..64).map(move |s| self.child(s))
    }

    pub fn parent(&self) -> Option<CellId> {
        if self.level == 0 {
            return None;
        }
        let level = self.level - 1;
        let shift = 2 * Self::span_bits(level);
        Some(CellId {
            level,
            code: if shift >= 64 { 0 } else { self.code & !((1u64 << shift) - 1) },
        })
    }

    /// Slot of this cell inside its parent.
    pub fn slot(&self) -> u32 {
        ((self.code >> (2 * Self::span_bits(self.level))) & 63) as u32
    }

    pub fn contains_point(&self, p: GridPoint) -> bool {
        let (lo, hi) = self.code_range();
        (lo..hi).contains(&morton_encode(p))
    }

    pub fn contains_cell(&self, other: &CellId) -> bool {
        if other.level < self.level {
            return false;
        }
        let (lo, hi) = self.code_range();
        (lo..hi).contains(&other.code)
    }

    /// All cells from the root down to (and including) this one.
    pub fn ancestors_inclusive(&self) -> Vec<CellId> {
        let mut out = Vec::with_capacity(self.level as usize + 1);
        let mut cur = Some(*self);
        while let Some(c) = cur {
            out.push(c);
            cur = c.parent();
        }
        out.reverse();
        out
    }
}

/// Half-open axis-aligned rectangle in grid units: `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridRect {
    pub x0: u64,
    pub y0: u64,
    pub x1: u64,
    pub y1: u64,
}

impl GridRect {
    /// Rectangle covering the inclusive point range `lo..=hi`.
    pub fn inclusive(lo: GridPoint, hi: GridPoint) -> GridRect {
        GridRect {
            x0: lo.x as u64,
            y0: lo.y as u64,
            x1: hi.x as u64 + 1,
            y1: hi.y as u64 + 1,
        }
    }

    pub fn contains(&self, p: GridPoint) -> bool {
        let (x, y) = (p.x as u64, p.y as u64);
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn intersects(&self, o: &GridRect) -> bool {
        self.x0 < o.x1 && o.x0 < self.x1 && self.y0 < o.y1 && o.y0 < self.y1
    }

    pub fn contains_rect(&self, o: &GridRect) -> bool {
        o.x0 >= self.x0 && o.x1 <= self.x1 && o.y0 >= self.y0 && o.y1 <= self.y1
    }

    pub fn is_empty(&self) -> bool {
        self.x0 >= self.x1 || self.y0 >= self.y1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_spans() {
        assert_eq!(CellId::ROOT.size(), 1 << 31);
        assert_eq!(CellId::ROOT.code_range(), (0, 1 << 62));
        let p = GridPoint::new(12345, 999_999);
        let leaf = CellId::containing(p, 10);
        assert_eq!(leaf.size(), 2);
        assert!(leaf.contains_point(p));
    }

    #[test]
    fn every_cell_has_64_children_tiling_it() {
        for level in 0..MAX_LEVEL {
            let p = GridPoint::new(0x1234_5678 & 0x7fff_ffff, 0x0765_4321);
            let cell = CellId::containing(p, level);
            let r = cell.rect();
            let kids: Vec<_> = cell.children().collect();
            assert_eq!(kids.len(), 64);
            let mut area = 0u128;
            for (i, k) in kids.iter().enumerate() {
                assert_eq!(k.parent(), Some(cell));
                assert_eq!(k.slot(), i as u32);
                let kr = k.rect();
                assert!(r.contains_rect(&kr));
                area += ((kr.x1 - kr.x0) as u128) * ((kr.y1 - kr.y0) as u128);
                for other in &kids[i + 1..] {
                    assert!(!kr.intersects(&other.rect()));
                }
            }
            assert_eq!(area, ((r.x1 - r.x0) as u128).pow(2));
            // Child code ranges partition the parent's range in slot order.
            assert_eq!(kids[0].code_range().0, cell.code_range().0);
            assert_eq!(kids[63].code_range().1, cell.code_range().1);
            for w in kids.windows(2) {
                assert_eq!(w[0].code_range().1, w[1].code_range().0);
            }
        }
    }

    #[test]
    fn ancestors_chain() {
        let c = CellId::containing(GridPoint::new(77, 88), 5);
        let a = c.ancestors_inclusive();
        assert_eq!(a.len(), 6);
        assert_eq!(a[0], CellId::ROOT);
        assert_eq!(*a.last().unwrap(), c);
        assert!(a.iter().all(|x| x.contains_cell(&c)));
    }
}

// SPDX-License-Identifier: Apache-2.0

use super::GridPoint;

#[inline]
fn spread(v: u32) -> u64 {
    let mut x = v as u64 & 0xffff_ffff;
    x = (x | (x << 16)) & 0x0000_ffff_0000_ffff;
    x = (x | (x << 8)) & 0x00ff_00ff_00ff_00ff;
    x = (x | (x << 4)) & 0x0f0f_0f0f_0f0f_0f0f;
    x = (x | (x << 2)) & 0x3333_3333_3333_3333;
    x = (x | (x << 1)) & 0x5555_5555_5555_5555;
    x
}

#[inline]
fn compact(v: u64) -> u32 {
    let mut x = v & 0x5555_5555_5555_5555;
    x = (x | (x >> 1)) & 0x3333_3333_3333_3333;
    x = (x | (x >> 2)) & 0x0f0f_0f0f_0f0f_0f0f;
    x = (x | (x >> 4)) & 0x00ff_00ff_00ff_00ff;
    x = (x | (x >> 8)) & 0x0000_ffff_0000_ffff;
    x = (x | (x >> 16)) & 0x0000_0000_ffff_ffff;
    x as u32
}

/// Interleaves `x` into the even bits and `y` into the odd bits.
#[inline]
pub fn morton_encode(g: GridPoint) -> u64 {
    spread(g.x) | (spread(g.y) << 1)
}

#[inline]
pub fn morton_decode(code: u64) -> GridPoint {
    GridPoint {
        x: compact(code),
        y: compact(code >> 1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn interleave_definition() {
        assert_eq!(morton_encode(GridPoint::new(0, 0)), 0);
        assert_eq!(morton_encode(GridPoint::new(1, 0)), 1);
        assert_eq!(morton_encode(GridPoint::new(0, 1)), 2);
        assert_eq!(morton_encode(GridPoint::new(3, 3)), 15);
        let max = (1u32 << 31) - 1;
        assert_eq!(morton_encode(GridPoint::new(max, max)), (1u64 << 62) - 1);
    }

    #[test]
    fn exhaustive_small_grid_round_trip() {
        let mut seen = std::collections::HashSet::new();
        for x in 0..256 {
            for y in 0..256 {
                let g = GridPoint::new(x, y);
                let c = morton_encode(g);
                assert!(c < 1 << 16);
                assert_eq!(morton_decode(c), g);
                assert!(seen.insert(c));
            }
        }
    }

    #[test]
    fn random_round_trip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100_000 {
            let g = GridPoint::new(rng.gen_range(0..1 << 31), rng.gen_range(0..1 << 31));
            assert_eq!(morton_decode(morton_encode(g)), g);
        }
    }
}

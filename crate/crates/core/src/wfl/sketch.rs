// SPDX-License-Identifier: Apache-2.0

//! HyperLogLog, Bloom filter and a static interval tree.

use crate::codec::{fnv1a64, mix64, put_varint, Reader};

pub fn hash_bytes(b: &[u8]) -> u64 {
    mix64(fnv1a64(b))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sketch {
    Hll(Hll),
    Bloom(Bloom),
    Intervals(IntervalTree),
}

impl Sketch {
    pub fn kind(&self) -> &'static str {
        match self {
            Sketch::Hll(_) => "hll",
            Sketch::Bloom(_) => "bloom",
            Sketch::Intervals(_) => "interval_tree",
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Sketch::Hll(h) => {
                out.push(0);
                out.push(h.precision);
                out.extend_from_slice(&h.registers);
            }
            Sketch::Bloom(b) => {
                out.push(1);
                put_varint(&mut out, b.num_bits);
                put_varint(&mut out, b.num_hashes as u64);
                for w in &b.bits {
                    out.extend(w.to_le_bytes());
                }
            }
            Sketch::Intervals(t) => {
                out.push(2);
                put_varint(&mut out, t.items.len() as u64);
                for (lo, hi) in &t.items {
                    out.extend(lo.to_le_bytes());
                    out.extend(hi.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Sketch, String> {
        let mut r = Reader::new(b);
        let e = |_| "truncated sketch".to_string();
        let s = match r.byte().map_err(e)? {
            0 => {
                let p = r.byte().map_err(e)?;
                let mut h = Hll::new(p)?;
                let regs = r.take(h.registers.len()).map_err(e)?;
                h.registers.copy_from_slice(regs);
                Sketch::Hll(h)
            }
            1 => {
                let num_bits = r.varint().map_err(e)?;
                let num_hashes = r.varint().map_err(e)? as u32;
                let words = num_bits.div_ceil(64);
                if num_bits == 0 || words * 8 > r.remaining().len() as u64 || num_hashes == 0 {
                    return Err("bad bloom filter header".into());
                }
                let bits = (0..words)
                    .map(|_| r.array::<8>().map(u64::from_le_bytes).map_err(e))
                    .collect::<Result<Vec<_>, _>>()?;
                Sketch::Bloom(Bloom { num_bits, num_hashes, bits })
            }
            2 => {
                let n = r.varint().map_err(e)?;
                if n * 16 > r.remaining().len() as u64 {
                    return Err("bad interval count".into());
                }
                let items = (0..n)
                    .map(|_| {
                        let lo = f64::from_le_bytes(r.array().map_err(e)?);
                        let hi = f64::from_le_bytes(r.array().map_err(e)?);
                        Ok((lo, hi))
                    })
                    .collect::<Result<Vec<_>, String>>()?;
                Sketch::Intervals(IntervalTree::build(items)?)
            }
            k => return Err(format!("unknown sketch kind {k}")),
        };
        if !r.is_empty() {
            return Err("trailing bytes in sketch".into());
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hll {
    precision: u8,
    registers: Vec<u8>,
}

impl Hll {
    pub fn new(precision: u8) -> Result<Hll, String> {
        if !(4..=16).contains(&precision) {
            return Err(format!("hll precision must be in 4..=16, got {precision}"));
        }
        Ok(Hll { precision, registers: vec![0; 1 << precision] })
    }

    pub fn precision(&self) -> u8 {
        self.precision
    }

    pub fn add_hash(&mut self, h: u64) {
        let p = self.precision as u32;
        let idx = (h >> (64 - p)) as usize;
        let w = h << p;
        let rho = (w.leading_zeros().min(64 - p) + 1) as u8;
        if rho > self.registers[idx] {
            self.registers[idx] = rho;
        }
    }

    pub fn add(&mut self, key: &[u8]) {
        self.add_hash(hash_bytes(key));
    }

    pub fn merge(&mut self, other: &Hll) -> Result<(), String> {
        if other.precision != self.precision {
            return Err(format!(
                "cannot merge hll sketches of precision {} and {}",
                self.precision, other.precision
            ));
        }
        for (a, b) in self.registers.iter_mut().zip(&other.registers) {
            *a = (*a).max(*b);
        }
        Ok(())
    }

    pub fn estimate(&self) -> f64 {
        let m = self.registers.len() as f64;
        let alpha = match self.registers.len() {
            16 => 0.673,
            32 => 0.697,
            64 => 0.709,
            _ => 0.7213 / (1.0 + 1.079 / m),
        };
        let sum: f64 = self.registers.iter().map(|&r| 2f64.powi(-(r as i32))).sum();
        let raw = alpha * m * m / sum;
        let zeros = self.registers.iter().filter(|&&r| r == 0).count();
        if raw <= 2.5 * m && zeros > 0 {
            m * (m / zeros as f64).ln()
        } else {
            raw
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bloom {
    num_bits: u64,
    num_hashes: u32,
    bits: Vec<u64>,
}

impl Bloom {
    /// Sized for `n` items at false-positive rate `fpr`.
    pub fn new(n: u64, fpr: f64) -> Result<Bloom, String> {
        if n == 0 {
            return Err("bloom filter capacity must be positive".into());
        }
        if !(fpr > 0.0 && fpr < 1.0) {
            return Err(format!("bloom fpr must be in (0, 1), got {fpr}"));
        }
        let ln2 = std::f64::consts::LN_2;
        let m = (-(n as f64) * fpr.ln() / (ln2 * ln2)).ceil().max(64.0) as u64;
        let k = ((m as f64 / n as f64) * ln2).round().clamp(1.0, 30.0) as u32;
        Ok(Bloom { num_bits: m, num_hashes: k, bits: vec![0; m.div_ceil(64) as usize] })
    }

    fn positions(&self, key: &[u8]) -> impl Iterator<Item = u64> + '_ {
        let h1 = hash_bytes(key);
        let h2 = mix64(h1 ^ 0x9e37_79b9_7f4a_7c15) | 1;
        (0..self.num_hashes as u64).map(move |i| h1.wrapping_add(i.wrapping_mul(h2)) % self.num_bits)
    }

    pub fn add(&mut self, key: &[u8]) {
        let pos: Vec<u64> = self.positions(key).collect();
        for p in pos {
            self.bits[(p / 64) as usize] |= 1 << (p % 64);
        }
    }

    pub fn contains(&self, key: &[u8]) -> bool {
        self.positions(key).all(|p| self.bits[(p / 64) as usize] & (1 << (p % 64)) != 0)
    }

    pub fn num_bits(&self) -> u64 {
        self.num_bits
    }

    pub fn num_hashes(&self) -> u32 {
        self.num_hashes
    }
}

/// Static interval tree over closed intervals, stored as a sorted array with
/// subtree maxima of the right endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalTree {
    items: Vec<(f64, f64)>,
    max_hi: Vec<f64>,
}

impl IntervalTree {
    pub fn build(mut items: Vec<(f64, f64)>) -> Result<IntervalTree, String> {
        for &(lo, hi) in &items {
            if !(lo <= hi) {
                return Err(format!("interval [{lo}, {hi}] has lo > hi"));
            }
        }
        items.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut t = IntervalTree { max_hi: vec![f64::NEG_INFINITY; items.len()], items };
        if !t.items.is_empty() {
            t.fill(0, t.items.len());
        }
        Ok(t)
    }

    // The node for [lo, hi) sits at its midpoint.
    fn fill(&mut self, lo: usize, hi: usize) -> f64 {
        if lo >= hi {
            return f64::NEG_INFINITY;
        }
        let mid = (lo + hi) / 2;
        let m = self.items[mid].1.max(self.fill(lo, mid)).max(self.fill(mid + 1, hi));
        self.max_hi[mid] = m;
        m
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Intervals overlapping `[a, b]`, in ascending order.
    pub fn query(&self, a: f64, b: f64) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        self.walk(0, self.items.len(), a, b, &mut out);
        out
    }

    fn walk(&self, lo: usize, hi: usize, a: f64, b: f64, out: &mut Vec<(f64, f64)>) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        if self.max_hi[mid] < a {
            return;
        }
        self.walk(lo, mid, a, b, out);
        let (x, y) = self.items[mid];
        if x <= b && y >= a {
            out.push((x, y));
        }
        if x <= b {
            self.walk(mid + 1, hi, a, b, out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn hll_empty_and_merge() {
        let h = Hll::new(14).unwrap();
        assert_eq!(h.estimate(), 0.0);
        assert!(Hll::new(3).is_err() && Hll::new(17).is_err());
        let mut a = Hll::new(10).unwrap();
        let mut b = Hll::new(10).unwrap();
        for i in 0..1000u32 {
            a.add(&i.to_le_bytes());
            b.add(&(i + 500).to_le_bytes());
        }
        let mut ab = a.clone();
        ab.merge(&b).unwrap();
        let mut ba = b.clone();
        ba.merge(&a).unwrap();
        assert_eq!(ab, ba);
        assert!(a.merge(&Hll::new(11).unwrap()).is_err());
    }

    #[test]
    fn hll_error_at_1e5() {
        let mut h = Hll::new(14).unwrap();
        for i in 0..100_000u64 {
            h.add(&i.to_be_bytes());
            h.add(&i.to_be_bytes());
        }
        let rel = (h.estimate() - 100_000.0).abs() / 100_000.0;
        assert!(rel <= 0.02, "relative error {rel}");
    }

    #[test]
    fn bloom_no_false_negatives_and_fpr() {
        let n = 20_000u64;
        let fpr = 0.01;
        let mut b = Bloom::new(n, fpr).unwrap();
        for i in 0..n {
            b.add(format!("in-{i}").as_bytes());
        }
        for i in 0..n {
            assert!(b.contains(format!("in-{i}").as_bytes()));
        }
        let trials = 100_000;
        let fp = (0..trials).filter(|i| b.contains(format!("out-{i}").as_bytes())).count();
        assert!((fp as f64 / trials as f64) <= 2.0 * fpr);
        assert!(Bloom::new(10, 0.0).is_err() && Bloom::new(10, 1.0).is_err());
    }

    #[test]
    fn interval_query_equals_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        for _ in 0..200 {
            let n = rng.gen_range(0..60);
            let items: Vec<(f64, f64)> = (0..n)
                .map(|_| {
                    let a = rng.gen_range(0..100) as f64;
                    (a, a + rng.gen_range(0..20) as f64)
                })
                .collect();
            let t = IntervalTree::build(items.clone()).unwrap();
            for _ in 0..20 {
                let a = rng.gen_range(-5..120) as f64;
                let b = a + rng.gen_range(0..10) as f64;
                let mut expect: Vec<(f64, f64)> =
                    items.iter().copied().filter(|&(x, y)| x <= b && y >= a).collect();
                expect.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.total_cmp(&q.1)));
                assert_eq!(t.query(a, b), expect);
            }
        }
        assert!(IntervalTree::build(vec![(2.0, 1.0)]).is_err());
    }

    #[test]
    fn serialization_round_trip() {
        let mut h = Hll::new(6).unwrap();
        h.add(b"x");
        let mut b = Bloom::new(100, 0.1).unwrap();
        b.add(b"y");
        let t = IntervalTree::build(vec![(1.0, 2.0), (0.0, 5.0)]).unwrap();
        for s in [Sketch::Hll(h), Sketch::Bloom(b), Sketch::Intervals(t)] {
            assert_eq!(Sketch::from_bytes(&s.to_bytes()).unwrap(), s);
        }
        assert!(Sketch::from_bytes(&[0, 6, 1]).is_err());
    }
}

// SPDX-License-Identifier: Apache-2.0

/// Sorted, deduplicated set of shard-local document ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DocIdSet {
    ids: Vec<u32>,
}

impl DocIdSet {
    pub fn empty() -> Self {
        DocIdSet::default()
    }

    pub fn all(n: u32) -> Self {
        DocIdSet { ids: (0..n).collect() }
    }

    pub fn from_unsorted(mut ids: Vec<u32>) -> Self {
        ids.sort_unstable();
        ids.dedup();
        DocIdSet { ids }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.ids
    }

    pub fn contains(&self, id: u32) -> bool {
        self.ids.binary_search(&id).is_ok()
    }

    pub fn intersect(&self, o: &DocIdSet) -> DocIdSet {
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < self.ids.len() && j < o.ids.len() {
            match self.ids[i].cmp(&o.ids[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    out.push(self.ids[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        DocIdSet { ids: out }
    }

    pub fn union(&self, o: &DocIdSet) -> DocIdSet {
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::with_capacity(self.ids.len() + o.ids.len());
        while i < self.ids.len() || j < o.ids.len() {
            let a = self.ids.get(i).copied().unwrap_or(u32::MAX);
            let b = o.ids.get(j).copied().unwrap_or(u32::MAX);
            let take_a = i < self.ids.len() && (j >= o.ids.len() || a <= b);
            let take_b = j < o.ids.len() && (i >= self.ids.len() || b <= a);
            out.push(if take_a { a } else { b });
            if take_a {
                i += 1;
            }
            if take_b {
                j += 1;
            }
        }
        DocIdSet { ids: out }
    }

    /// Ids in `0..n` not in this set.
    pub fn complement(&self, n: u32) -> DocIdSet {
        let mut out = Vec::with_capacity(n as usize - self.ids.len().min(n as usize));
        let mut it = self.ids.iter().peekable();
        for id in 0..n {
            if it.peek() == Some(&&id) {
                it.next();
            } else {
                out.push(id);
            }
        }
        DocIdSet { ids: out }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    proptest! {
        #[test]
        fn set_ops_match_btreeset(a in proptest::collection::vec(0u32..200, 0..80),
                                  b in proptest::collection::vec(0u32..200, 0..80)) {
            let (sa, sb): (BTreeSet<u32>, BTreeSet<u32>) = (a.iter().copied().collect(), b.iter().copied().collect());
            let (da, db) = (DocIdSet::from_unsorted(a), DocIdSet::from_unsorted(b));
            let inter: Vec<u32> = sa.intersection(&sb).copied().collect();
            let uni: Vec<u32> = sa.union(&sb).copied().collect();
            let comp: Vec<u32> = (0..200).filter(|x| !sa.contains(x)).collect();
            prop_assert_eq!(da.intersect(&db).as_slice().to_vec(), inter);
            prop_assert_eq!(da.union(&db).as_slice().to_vec(), uni);
            prop_assert_eq!(da.complement(200).as_slice().to_vec(), comp);
        }
    }
}

// SPDX-License-Identifier: Apache-2.0

use std::sync::Arc;

use super::build::{scalar_term, value_terms};
use super::docset::DocIdSet;
use super::keys::{area_term, decode_location_term, double_term, index_prefix, int_term, location_term, split_posting, string_term, term_end, term_start, uint_term};
use super::manifest::IndexDesc;
use super::read::{FdbShard, ScanStats};
use super::{FdbError, Result};
use crate::geo::{morton_decode, project, AreaTree, CellId, GeoPoint, LatLngRect, MAX_LEVEL};
use crate::schema::{FieldPath, FieldType, IndexKind};
use crate::value::Value;
use crate::wfl::builtins::text_tokens;

/// One end of a range; `inclusive` selects `<=`/`>=` over `<`/`>`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bound {
    pub value: Value,
    pub inclusive: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LocationRegion {
    Rect(LatLngRect),
    Area(Arc<AreaTree>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum IndexQuery {
    /// Documents whose text field contains every token of `text`.
    TextMatch { path: FieldPath, text: String },
    TagEq { path: FieldPath, value: Value },
    Range { path: FieldPath, lo: Option<Bound>, hi: Option<Bound> },
    LocationIn { path: FieldPath, region: LocationRegion },
    AreaContainsPoint { path: FieldPath, point: GeoPoint },
    AreaIntersects { path: FieldPath, area: Arc<AreaTree> },
    And(Vec<IndexQuery>),
    Or(Vec<IndexQuery>),
    Not(Box<IndexQuery>),
    All,
}

impl IndexQuery {
    pub fn paths(&self, out: &mut Vec<FieldPath>) {
        match self {
            IndexQuery::TextMatch { path, .. }
            | IndexQuery::TagEq { path, .. }
            | IndexQuery::Range { path, .. }
            | IndexQuery::LocationIn { path, .. }
            | IndexQuery::AreaContainsPoint { path, .. }
            | IndexQuery::AreaIntersects { path, .. } => {
                if !out.contains(path) {
                    out.push(path.clone());
                }
            }
            IndexQuery::And(qs) | IndexQuery::Or(qs) => qs.iter().for_each(|q| q.paths(out)),
            IndexQuery::Not(q) => q.paths(out),
            IndexQuery::All => {}
        }
    }

    /// Canonical text form, used in plan prints.
    pub fn describe(&self) -> String {
        fn b(x: &Option<Bound>, lo: bool) -> String {
            match x {
                None => if lo { "(-inf".into() } else { "+inf)".into() },
                Some(b) => {
                    let v = b.value.to_string();
                    match (lo, b.inclusive) {
                        (true, true) => format!("[{v}"),
                        (true, false) => format!("({v}"),
                        (false, true) => format!("{v}]"),
                        (false, false) => format!("{v})"),
                    }
                }
            }
        }
        match self {
            IndexQuery::TextMatch { path, text } => format!("text({path}, {text:?})"),
            IndexQuery::TagEq { path, value } => format!("tag({path} = {value})"),
            IndexQuery::Range { path, lo, hi } => format!("range({path} in {}, {})", b(lo, true), b(hi, false)),
            IndexQuery::LocationIn { path, region: LocationRegion::Rect(r) } => format!(
                "location({path} in rect({}, {}, {}, {}))",
                r.sw.lat, r.sw.lng, r.ne.lat, r.ne.lng
            ),
            IndexQuery::LocationIn { path, region: LocationRegion::Area(a) } => {
                format!("location({path} in area[{} cells, {:016x}])", a.cell_count(), area_digest(a))
            }
            IndexQuery::AreaContainsPoint { path, point } => format!("area({path} contains ({}, {}))", point.lat, point.lng),
            IndexQuery::AreaIntersects { path, area } => {
                format!("area({path} intersects area[{} cells, {:016x}])", area.cell_count(), area_digest(area))
            }
            IndexQuery::And(qs) => format!("and({})", qs.iter().map(|q| q.describe()).collect::<Vec<_>>().join(", ")),
            IndexQuery::Or(qs) => format!("or({})", qs.iter().map(|q| q.describe()).collect::<Vec<_>>().join(", ")),
            IndexQuery::Not(q) => format!("not({})", q.describe()),
            IndexQuery::All => "all".into(),
        }
    }
}

fn area_digest(a: &AreaTree) -> u64 {
    let mut bytes = Vec::new();
    for c in a.cells() {
        bytes.extend(area_term(c));
    }
    crate::codec::fnv1a64(&bytes)
}

/// Inclusive term bounds for a range over a field type, or None when the
/// range is empty.
fn range_terms(ty: &FieldType, lo: &Option<Bound>, hi: &Option<Bound>) -> Result<Option<([u8; 8], [u8; 8])>> {
    let bad = |v: &Value| FdbError::BadQuery(format!("range bound {v} is not numeric"));
    for b in [lo, hi].into_iter().flatten() {
        if !b.value.is_numeric() {
            return Err(bad(&b.value));
        }
        if b.value.as_f64().is_some_and(f64::is_nan) {
            return Ok(None);
        }
    }
    match ty {
        FieldType::Int | FieldType::Uint => {
            let (min, max) = if *ty == FieldType::Int { (i64::MIN as i128, i64::MAX as i128) } else { (0, u64::MAX as i128) };
            let lo_i = match lo {
                None => min,
                Some(b) => int_bound(&b.value, b.inclusive, true),
            };
            let hi_i = match hi {
                None => max,
                Some(b) => int_bound(&b.value, b.inclusive, false),
            };
            let (l, h) = (lo_i.max(min), hi_i.min(max));
            if l > h {
                return Ok(None);
            }
            Ok(Some(if *ty == FieldType::Int {
                (int_term(l as i64), int_term(h as i64))
            } else {
                (uint_term(l as u64), uint_term(h as u64))
            }))
        }
        FieldType::Float | FieldType::Double => {
            let l = match lo {
                None => f64::NEG_INFINITY,
                Some(b) => {
                    let x = b.value.as_f64().unwrap();
                    if b.inclusive { x } else { x.next_up() }
                }
            };
            let h = match hi {
                None => f64::INFINITY,
                Some(b) => {
                    let x = b.value.as_f64().unwrap();
                    if b.inclusive { x } else { x.next_down() }
                }
            };
            if l > h {
                return Ok(None);
            }
            Ok(Some((double_term(l), double_term(h))))
        }
        _ => Err(FdbError::BadQuery(format!("range index on {} field", ty.name()))),
    }
}

/// Smallest (lower) or largest (upper) integer satisfying the bound, widened
/// to i128 so that out-of-domain bounds clamp correctly.
fn int_bound(v: &Value, inclusive: bool, lower: bool) -> i128 {
    match v {
        Value::Int(i) => *i as i128 + if inclusive { 0 } else if lower { 1 } else { -1 },
        Value::Uint(u) => *u as i128 + if inclusive { 0 } else if lower { 1 } else { -1 },
        _ => {
            let x = v.as_f64().unwrap();
            let clamp = |y: f64| y.clamp(-1.0e20, 1.0e20) as i128;
            match (lower, inclusive) {
                (true, true) => clamp(x.ceil()),
                (true, false) => clamp(x.floor()) + 1,
                (false, true) => clamp(x.floor()),
                (false, false) => clamp(x.ceil()) - 1,
            }
        }
    }
}

impl FdbShard {
    fn index(&self, path: &FieldPath, kind: IndexKind) -> Result<(&IndexDesc, &FieldType)> {
        let d = self
            .meta
            .manifest
            .index_for(path, kind)
            .ok_or_else(|| FdbError::UnindexedField(format!("{path} ({})", kind.name())))?;
        let node = self.meta.schema.resolve(path).ok_or_else(|| FdbError::UnindexedField(path.to_string()))?;
        Ok((d, &node.ty))
    }

    /// Collects doc ids of postings in `[start, end)`, optionally filtering
    /// on the term.
    fn scan_postings(
        &self,
        id: u32,
        start: &[u8],
        end: &[u8],
        stats: &mut ScanStats,
        keep: &dyn Fn(&[u8]) -> bool,
        out: &mut Vec<u32>,
    ) {
        let plen = index_prefix(id).len();
        self.table.scan(start, end, &mut |k, _| {
            stats.postings_read += 1;
            stats.bytes_read += k.len() as u64;
            if let Some((t, d)) = split_posting(k, plen) {
                if keep(t) {
                    out.push(d);
                }
            }
        });
    }

    fn term_ids(&self, id: u32, term: &[u8], stats: &mut ScanStats, out: &mut Vec<u32>) {
        self.scan_postings(id, &term_start(id, term), &term_end(id, term), stats, &|_| true, out);
    }

    /// Evaluates an index query to the set of matching documents.
    pub fn select(&self, q: &IndexQuery, stats: &mut ScanStats) -> Result<DocIdSet> {
        let mut ids = Vec::new();
        match q {
            IndexQuery::All => return Ok(self.all_ids()),
            IndexQuery::And(qs) => {
                let mut acc = self.all_ids();
                for q in qs {
                    acc = acc.intersect(&self.select(q, stats)?);
                }
                return Ok(acc);
            }
            IndexQuery::Or(qs) => {
                let mut acc = DocIdSet::empty();
                for q in qs {
                    acc = acc.union(&self.select(q, stats)?);
                }
                return Ok(acc);
            }
            IndexQuery::Not(q) => return Ok(self.select(q, stats)?.complement(self.doc_count)),
            IndexQuery::TextMatch { path, text } => {
                let (d, _) = self.index(path, IndexKind::Text)?;
                let toks = text_tokens(text);
                if toks.is_empty() {
                    return Ok(self.all_ids());
                }
                let mut acc: Option<DocIdSet> = None;
                for t in toks {
                    let mut v = Vec::new();
                    self.term_ids(d.id, &string_term(t.as_bytes()), stats, &mut v);
                    let s = DocIdSet::from_unsorted(v);
                    acc = Some(match acc {
                        None => s,
                        Some(a) => a.intersect(&s),
                    });
                }
                return Ok(acc.unwrap_or_default());
            }
            IndexQuery::TagEq { path, value } => {
                let (d, ty) = self.index(path, IndexKind::Tag)?;
                if let Some(t) = scalar_term(ty, value) {
                    self.term_ids(d.id, &t, stats, &mut ids);
                }
            }
            IndexQuery::Range { path, lo, hi } => {
                let (d, ty) = self.index(path, IndexKind::Range)?;
                if let Some((l, h)) = range_terms(ty, lo, hi)? {
                    self.scan_postings(d.id, &term_start(d.id, &l), &term_end(d.id, &h), stats, &|_| true, &mut ids);
                }
            }
            IndexQuery::LocationIn { path, region } => {
                let (d, _) = self.index(path, IndexKind::Location)?;
                match region {
                    LocationRegion::Rect(r) => {
                        let grid = r.grid_rect().map_err(|e| FdbError::BadQuery(e.to_string()))?;
                        let ranges = crate::geo::covering_ranges_grid(grid, 64);
                        let keep = |t: &[u8]| decode_location_term(t).is_some_and(|c| grid.contains(morton_decode(c)));
                        for cr in ranges {
                            let start = term_start(d.id, &location_term(cr.lo));
                            let end = term_start(d.id, &location_term(cr.hi));
                            self.scan_postings(d.id, &start, &end, stats, &keep, &mut ids);
                        }
                    }
                    LocationRegion::Area(a) => {
                        for c in a.cells() {
                            let (lo, hi) = c.code_range();
                            let start = term_start(d.id, &location_term(lo));
                            let end = term_start(d.id, &location_term(hi));
                            self.scan_postings(d.id, &start, &end, stats, &|_| true, &mut ids);
                        }
                    }
                }
            }
            IndexQuery::AreaContainsPoint { path, point } => {
                let (d, _) = self.index(path, IndexKind::Area)?;
                if let Ok(g) = project(*point) {
                    for level in 0..=MAX_LEVEL {
                        self.term_ids(d.id, &area_term(CellId::containing(g, level)), stats, &mut ids);
                    }
                }
            }
            IndexQuery::AreaIntersects { path, area } => {
                let (d, _) = self.index(path, IndexKind::Area)?;
                let cells = area.cells();
                let mut ancestors: Vec<CellId> = cells.iter().flat_map(|c| c.ancestors_inclusive()).collect();
                ancestors.sort_unstable();
                ancestors.dedup();
                for c in ancestors {
                    self.term_ids(d.id, &area_term(c), stats, &mut ids);
                }
                for c in &cells {
                    let (lo, hi) = c.code_range();
                    for level in c.level + 1..=MAX_LEVEL {
                        let start = term_start(d.id, &area_term(CellId { level, code: lo }));
                        let end = term_start(d.id, &area_term(CellId { level, code: hi }));
                        self.scan_postings(d.id, &start, &end, stats, &|_| true, &mut ids);
                    }
                }
            }
        }
        Ok(DocIdSet::from_unsorted(ids))
    }

    /// Terms a single value would produce under an index, for callers that
    /// need to recount postings.
    pub fn terms_of(&self, path: &FieldPath, kind: IndexKind, v: &Value) -> Result<Vec<Vec<u8>>> {
        let (_, ty) = self.index(path, kind)?;
        let mut out = Vec::new();
        value_terms(kind, ty, v, &mut out);
        Ok(out)
    }
}

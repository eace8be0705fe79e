// SPDX-License-Identifier: Apache-2.0

//! Area trees: canonical 64-way region sets over the grid.

use super::{
    meters_to_units, point_in_polygon, project, project_f64, CellId, GeoError, GeoPoint,
    GridPoint, GridRect, LatLngRect, Polygon, Polyline, Result, EARTH_RADIUS_M, MAX_ABS_LAT,
    MAX_LEVEL,
};

pub const DEFAULT_MAX_LEVEL: u8 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CombineOp {
    Union,
    Intersection,
    Difference,
}

/// Result of classifying a cell against a shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coverage {
    Outside,
    Inside,
    Partial,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Node {
    Empty,
    Full,
    Partial(Box<Branch>),
}

/// A partially covered cell. `full` marks FULL children, `partial` marks
/// PARTIAL children whose subtrees are stored in slot order in `children`.
/// Canonical form: the two masks are disjoint and the branch is neither
/// entirely FULL nor entirely EMPTY.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Branch {
    pub full: u64,
    pub partial: u64,
    pub children: Vec<Branch>,
}

#[derive(Clone, Copy)]
enum NodeRef<'a> {
    Empty,
    Full,
    Partial(&'a Branch),
}

impl Node {
    fn as_ref(&self) -> NodeRef<'_> {
        match self {
            Node::Empty => NodeRef::Empty,
            Node::Full => NodeRef::Full,
            Node::Partial(b) => NodeRef::Partial(b),
        }
    }
}

impl NodeRef<'_> {
    fn to_node(self) -> Node {
        match self {
            NodeRef::Empty => Node::Empty,
            NodeRef::Full => Node::Full,
            NodeRef::Partial(b) => Node::Partial(Box::new(b.clone())),
        }
    }
}

impl Branch {
    fn child(&self, slot: u32) -> NodeRef<'_> {
        let bit = 1u64 << slot;
        if self.full & bit != 0 {
            NodeRef::Full
        } else if self.partial & bit != 0 {
            let idx = (self.partial & (bit - 1)).count_ones() as usize;
            NodeRef::Partial(&self.children[idx])
        } else {
            NodeRef::Empty
        }
    }

    fn complement(&self) -> Branch {
        Branch {
            full: !(self.full | self.partial),
            partial: self.partial,
            children: self.children.iter().map(Branch::complement).collect(),
        }
    }
}

#[derive(Default)]
struct BranchBuilder {
    full: u64,
    partial: u64,
    children: Vec<Branch>,
}

impl BranchBuilder {
    /// Slots must be pushed in increasing order.
    fn push(&mut self, slot: u32, node: Node) {
        match node {
            Node::Empty => {}
            Node::Full => self.full |= 1 << slot,
            Node::Partial(b) => {
                self.partial |= 1 << slot;
                self.children.push(*b);
            }
        }
    }

    fn finish(self) -> Node {
        if self.partial == 0 && self.full == 0 {
            Node::Empty
        } else if self.partial == 0 && self.full == u64::MAX {
            Node::Full
        } else {
            Node::Partial(Box::new(Branch {
                full: self.full,
                partial: self.partial,
                children: self.children,
            }))
        }
    }
}

fn combine_nodes(op: CombineOp, a: NodeRef<'_>, b: NodeRef<'_>) -> Node {
    use NodeRef as R;
    match op {
        CombineOp::Union => match (a, b) {
            (R::Full, _) | (_, R::Full) => Node::Full,
            (R::Empty, x) | (x, R::Empty) => x.to_node(),
            (R::Partial(x), R::Partial(y)) => combine_branches(op, x, y),
        },
        CombineOp::Intersection => match (a, b) {
            (R::Empty, _) | (_, R::Empty) => Node::Empty,
            (R::Full, x) | (x, R::Full) => x.to_node(),
            (R::Partial(x), R::Partial(y)) => combine_branches(op, x, y),
        },
        CombineOp::Difference => match (a, b) {
            (R::Empty, _) | (_, R::Full) => Node::Empty,
            (x, R::Empty) => x.to_node(),
            (R::Full, R::Partial(y)) => Node::Partial(Box::new(y.complement())),
            (R::Partial(x), R::Partial(y)) => combine_branches(op, x, y),
        },
    }
}

fn combine_branches(op: CombineOp, a: &Branch, b: &Branch) -> Node {
    let mut out = BranchBuilder::default();
    let touched = a.full | a.partial | b.full | b.partial;
    for slot in 0..64u32 {
        if touched & (1 << slot) == 0 {
            continue;
        }
        out.push(slot, combine_nodes(op, a.child(slot), b.child(slot)));
    }
    out.finish()
}

fn intersects_nodes(a: NodeRef<'_>, b: NodeRef<'_>) -> bool {
    use NodeRef as R;
    match (a, b) {
        (R::Empty, _) | (_, R::Empty) => false,
        (R::Full, _) | (_, R::Full) => true,
        (R::Partial(x), R::Partial(y)) => {
            if x.full & (y.full | y.partial) != 0 || y.full & x.partial != 0 {
                return true;
            }
            let both = x.partial & y.partial;
            (0..64u32)
                .filter(|s| both & (1 << s) != 0)
                .any(|s| intersects_nodes(x.child(s), y.child(s)))
        }
    }
}

/// Canonical region set over the grid, resolved down to `max_level` cells.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AreaTree {
    max_level: u8,
    root: Node,
}

impl AreaTree {
    pub fn empty(max_level: u8) -> Self {
        AreaTree { max_level: max_level.min(MAX_LEVEL), root: Node::Empty }
    }

    pub fn full(max_level: u8) -> Self {
        AreaTree { max_level: max_level.min(MAX_LEVEL), root: Node::Full }
    }

    pub fn max_level(&self) -> u8 {
        self.max_level
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn is_empty(&self) -> bool {
        self.root == Node::Empty
    }

    /// Builds a tree by classifying cells top-down. Cells classified as
    /// `Partial` at `max_level` are included (outer cover).
    pub fn from_classifier<F>(max_level: u8, mut classify: F) -> Self
    where
        F: FnMut(&GridRect) -> Coverage,
    {
        let max_level = max_level.min(MAX_LEVEL);
        let root = build_node(CellId::ROOT, max_level, &mut classify);
        AreaTree { max_level, root }
    }

    /// Union of the given cells, each coarsened or kept as-is. Cells deeper
    /// than `max_level` are replaced by their `max_level` ancestor.
    pub fn from_cells(max_level: u8, cells: &[CellId]) -> Self {
        let mut t = AreaTree::empty(max_level);
        for c in cells {
            let mut c = *c;
            while c.level > t.max_level {
                c = c.parent().expect("non-root cell has a parent");
            }
            t = t.combine(CombineOp::Union, &AreaTree::single_cell(t.max_level, c))
                .expect("same level");
        }
        t
    }

    pub fn single_cell(max_level: u8, cell: CellId) -> Self {
        let mut node = Node::Full;
        let mut c = cell;
        while let Some(parent) = c.parent() {
            let mut b = BranchBuilder::default();
            b.push(c.slot(), node);
            node = b.finish();
            c = parent;
        }
        AreaTree { max_level: max_level.min(MAX_LEVEL), root: node }
    }

    pub fn from_rect(rect: &LatLngRect, max_level: u8) -> Result<Self> {
        let r = rect.grid_rect()?;
        Ok(Self::from_classifier(max_level, |cell| {
            if !cell.intersects(&r) {
                Coverage::Outside
            } else if r.contains_rect(cell) {
                Coverage::Inside
            } else {
                Coverage::Partial
            }
        }))
    }

    /// Outer cover of a polygon: a leaf is included iff its interior meets
    /// the polygon interior. Edges are straight lines in grid space.
    pub fn from_polygon(poly: &Polygon, max_level: u8) -> Result<Self> {
        let rings = poly.grid_rings();
        let edges: Vec<Segment> = rings
            .iter()
            .flat_map(|r| r.windows(2).map(|w| Segment { a: w[0], b: w[1] }))
            .collect();
        Ok(Self::from_classifier(max_level, |cell| {
            let r = FRect::from(cell);
            if edges.iter().any(|e| e.crosses_open_rect(&r)) {
                Coverage::Partial
            } else if point_in_polygon(r.center(), &rings) {
                Coverage::Inside
            } else {
                Coverage::Outside
            }
        }))
    }

    /// Disk of `radius_m` meters around `center`, rasterized in grid space.
    pub fn from_point_radius(center: GeoPoint, radius_m: f64, max_level: u8) -> Result<Self> {
        if !(radius_m > 0.0) || !radius_m.is_finite() {
            return Err(GeoError::BadParam(format!("radius must be positive, got {radius_m}")));
        }
        project(center)?;
        let c = project_f64(center);
        let r = radius_units(radius_m, &[center]);
        Ok(Self::from_classifier(max_level, |cell| {
            let fr = FRect::from(cell);
            if fr.min_dist2(c) > r * r {
                Coverage::Outside
            } else if fr.max_dist2(c) <= r * r {
                Coverage::Inside
            } else {
                Coverage::Partial
            }
        }))
    }

    /// Strip of total width `width_m` around a path: union of per-segment
    /// capsules with rounded end caps.
    pub fn from_path(path: &Polyline, width_m: f64, max_level: u8) -> Result<Self> {
        if path.points.len() < 2 {
            return Err(GeoError::DegeneratePath);
        }
        if !(width_m > 0.0) || !width_m.is_finite() {
            return Err(GeoError::BadParam(format!("width must be positive, got {width_m}")));
        }
        for p in &path.points {
            project(*p)?;
        }
        let r = radius_units(width_m / 2.0, &path.points);
        let segs: Vec<Segment> = path
            .points
            .windows(2)
            .map(|w| Segment { a: project_f64(w[0]), b: project_f64(w[1]) })
            .collect();
        let max_level = max_level.min(MAX_LEVEL);
        let idx: Vec<usize> = (0..segs.len()).collect();
        let root = build_capsules(CellId::ROOT, max_level, &segs, r, &idx);
        Ok(AreaTree { max_level, root })
    }

    pub fn combine(&self, op: CombineOp, other: &AreaTree) -> Result<AreaTree> {
        if self.max_level != other.max_level {
            return Err(GeoError::LevelMismatch(self.max_level, other.max_level));
        }
        Ok(AreaTree {
            max_level: self.max_level,
            root: combine_nodes(op, self.root.as_ref(), other.root.as_ref()),
        })
    }

    pub fn contains_point(&self, p: GridPoint) -> bool {
        let mut node = self.root.as_ref();
        let mut cell = CellId::ROOT;
        loop {
            match node {
                NodeRef::Empty => return false,
                NodeRef::Full => return true,
                NodeRef::Partial(b) => {
                    cell = CellId::containing(p, cell.level + 1);
                    node = b.child(cell.slot());
                }
            }
        }
    }

    pub fn intersects(&self, other: &AreaTree) -> Result<bool> {
        if self.max_level != other.max_level {
            return Err(GeoError::LevelMismatch(self.max_level, other.max_level));
        }
        Ok(intersects_nodes(self.root.as_ref(), other.root.as_ref()))
    }

    /// FULL cells of the canonical tree in code order.
    pub fn cells(&self) -> Vec<CellId> {
        let mut out = Vec::new();
        collect_cells(self.root.as_ref(), CellId::ROOT, &mut out);
        out
    }

    pub fn cell_count(&self) -> usize {
        fn count(n: NodeRef<'_>) -> usize {
            match n {
                NodeRef::Empty => 0,
                NodeRef::Full => 1,
                NodeRef::Partial(b) => {
                    b.full.count_ones() as usize
                        + b.children.iter().map(|c| count(NodeRef::Partial(c))).sum::<usize>()
                }
            }
        }
        count(self.root.as_ref())
    }

    /// Checks the canonical-form invariants. Used by tests and decoders.
    pub fn is_canonical(&self) -> bool {
        fn check(b: &Branch, level: u8, max: u8) -> bool {
            if b.full & b.partial != 0 || b.children.len() != b.partial.count_ones() as usize {
                return false;
            }
            if b.partial == 0 && (b.full == 0 || b.full == u64::MAX) {
                return false;
            }
            if level + 1 >= max && b.partial != 0 {
                return false;
            }
            b.children.iter().all(|c| check(c, level + 1, max))
        }
        match &self.root {
            Node::Partial(b) => self.max_level > 0 && check(b, 0, self.max_level),
            _ => true,
        }
    }
}

fn collect_cells(node: NodeRef<'_>, cell: CellId, out: &mut Vec<CellId>) {
    match node {
        NodeRef::Empty => {}
        NodeRef::Full => out.push(cell),
        NodeRef::Partial(b) => {
            for s in 0..64u32 {
                let bit = 1u64 << s;
                if (b.full | b.partial) & bit != 0 {
                    collect_cells(b.child(s), cell.child(s), out);
                }
            }
        }
    }
}

fn build_node<F>(cell: CellId, max_level: u8, classify: &mut F) -> Node
where
    F: FnMut(&GridRect) -> Coverage,
{
    match classify(&cell.rect()) {
        Coverage::Outside => Node::Empty,
        Coverage::Inside => Node::Full,
        Coverage::Partial if cell.level >= max_level => Node::Full,
        Coverage::Partial => {
            let mut b = BranchBuilder::default();
            for s in 0..64 {
                b.push(s, build_node(cell.child(s), max_level, classify));
            }
            b.finish()
        }
    }
}

fn build_capsules(cell: CellId, max_level: u8, segs: &[Segment], r: f64, live: &[usize]) -> Node {
    let fr = FRect::from(&cell.rect());
    let mut touching = Vec::new();
    for &i in live {
        let s = &segs[i];
        if s.min_dist2_rect(&fr) > r * r {
            continue;
        }
        if fr.corners().iter().all(|c| s.dist2(*c) <= r * r) {
            return Node::Full;
        }
        touching.push(i);
    }
    if touching.is_empty() {
        return Node::Empty;
    }
    if cell.level >= max_level {
        return Node::Full;
    }
    let mut b = BranchBuilder::default();
    for s in 0..64 {
        b.push(s, build_capsules(cell.child(s), max_level, segs, r, &touching));
    }
    b.finish()
}

/// Distance in grid units that is at least `meters` anywhere within
/// `meters` of the given points.
fn radius_units(meters: f64, pts: &[GeoPoint]) -> f64 {
    let dlat = (meters / EARTH_RADIUS_M).to_degrees();
    let worst = pts
        .iter()
        .map(|p| p.lat.abs() + dlat)
        .fold(0.0f64, f64::max)
        .min(MAX_ABS_LAT);
    meters_to_units(meters, worst) * 1.000_001 + 1.0
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct FRect {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

impl From<&GridRect> for FRect {
    fn from(r: &GridRect) -> Self {
        FRect { x0: r.x0 as f64, y0: r.y0 as f64, x1: r.x1 as f64, y1: r.y1 as f64 }
    }
}

impl FRect {
    fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }

    fn corners(&self) -> [(f64, f64); 4] {
        [(self.x0, self.y0), (self.x1, self.y0), (self.x0, self.y1), (self.x1, self.y1)]
    }

    fn min_dist2(&self, (px, py): (f64, f64)) -> f64 {
        let dx = (self.x0 - px).max(0.0).max(px - self.x1);
        let dy = (self.y0 - py).max(0.0).max(py - self.y1);
        dx * dx + dy * dy
    }

    fn max_dist2(&self, (px, py): (f64, f64)) -> f64 {
        let dx = (px - self.x0).abs().max((px - self.x1).abs());
        let dy = (py - self.y0).abs().max((py - self.y1).abs());
        dx * dx + dy * dy
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: (f64, f64),
    b: (f64, f64),
}

impl Segment {
    /// True when some point of the segment lies strictly inside the rectangle.
    fn crosses_open_rect(&self, r: &FRect) -> bool {
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut open_lo = false;
        let mut open_hi = false;
        for (p, d, min, max) in [
            (self.a.0, self.b.0 - self.a.0, r.x0, r.x1),
            (self.a.1, self.b.1 - self.a.1, r.y0, r.y1),
        ] {
            if d == 0.0 {
                if p <= min || p >= max {
                    return false;
                }
                continue;
            }
            let (t0, t1) = {
                let u = (min - p) / d;
                let v = (max - p) / d;
                if u < v { (u, v) } else { (v, u) }
            };
            if t0 >= lo {
                lo = t0;
                open_lo = true;
            }
            if t1 <= hi {
                hi = t1;
                open_hi = true;
            }
        }
        if open_lo || open_hi {
            lo < hi
        } else {
            lo <= hi
        }
    }

    fn dist2(&self, p: (f64, f64)) -> f64 {
        let (dx, dy) = (self.b.0 - self.a.0, self.b.1 - self.a.1);
        let len2 = dx * dx + dy * dy;
        let t = if len2 == 0.0 {
            0.0
        } else {
            (((p.0 - self.a.0) * dx + (p.1 - self.a.1) * dy) / len2).clamp(0.0, 1.0)
        };
        let (qx, qy) = (self.a.0 + t * dx, self.a.1 + t * dy);
        (p.0 - qx).powi(2) + (p.1 - qy).powi(2)
    }

    fn touches_closed_rect(&self, r: &FRect) -> bool {
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for (p, d, min, max) in [
            (self.a.0, self.b.0 - self.a.0, r.x0, r.x1),
            (self.a.1, self.b.1 - self.a.1, r.y0, r.y1),
        ] {
            if d == 0.0 {
                if p < min || p > max {
                    return false;
                }
                continue;
            }
            let u = (min - p) / d;
            let v = (max - p) / d;
            lo = lo.max(u.min(v));
            hi = hi.min(u.max(v));
        }
        lo <= hi
    }

    fn min_dist2_rect(&self, r: &FRect) -> f64 {
        if self.touches_closed_rect(r) {
            return 0.0;
        }
        let mut best = r.min_dist2(self.a).min(r.min_dist2(self.b));
        for c in r.corners() {
            best = best.min(self.dist2(c));
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn gp(lat: f64, lng: f64) -> GeoPoint {
        GeoPoint::new(lat, lng).unwrap()
    }

    #[test]
    fn single_cell_is_canonical() {
        let c = CellId::containing(GridPoint::new(123_456, 654_321), 3);
        let t = AreaTree::single_cell(3, c);
        assert!(t.is_canonical());
        assert_eq!(t.cells(), vec![c]);
        assert!(t.contains_point(GridPoint::new(123_456, 654_321)));
    }

    #[test]
    fn all_children_collapse_to_full() {
        let parent = CellId::containing(GridPoint::new(1 << 20, 1 << 21), 2);
        let kids: Vec<_> = parent.children().collect();
        let t = AreaTree::from_cells(4, &kids);
        assert_eq!(t, AreaTree::single_cell(4, parent));
    }

    #[test]
    fn combine_identities() {
        let a = AreaTree::from_point_radius(gp(10.0, 10.0), 300_000.0, 3).unwrap();
        let e = AreaTree::empty(3);
        assert_eq!(a.combine(CombineOp::Union, &e).unwrap(), a);
        assert_eq!(a.combine(CombineOp::Difference, &a).unwrap(), e);
        assert_eq!(a.combine(CombineOp::Intersection, &AreaTree::full(3)).unwrap(), a);
        assert!(matches!(
            a.combine(CombineOp::Union, &AreaTree::empty(4)),
            Err(GeoError::LevelMismatch(3, 4))
        ));
    }

    #[test]
    fn empty_and_full_queries() {
        let e = AreaTree::empty(5);
        let f = AreaTree::full(5);
        let p = GridPoint::new(99, 77);
        assert!(!e.contains_point(p));
        assert!(f.contains_point(p));
        let a = AreaTree::single_cell(5, CellId::containing(p, 5));
        assert!(f.intersects(&a).unwrap());
        assert!(!e.intersects(&a).unwrap());
        assert!(!f.intersects(&e).unwrap());
    }

    #[test]
    fn tiny_triangle_is_single_leaf() {
        let leaf = CellId::containing(project(gp(20.0, 30.0)).unwrap(), 6);
        let r = leaf.rect();
        let (cx, cy) = ((r.x0 + r.x1) as f64 / 2.0, (r.y0 + r.y1) as f64 / 2.0);
        let d = (r.x1 - r.x0) as f64 / 10.0;
        let to_geo = |x: f64, y: f64| super::super::grid_to_latlng(x, y);
        let poly = Polygon::new(vec![vec![to_geo(cx, cy), to_geo(cx + d, cy), to_geo(cx, cy + d)]])
            .unwrap();
        let t = AreaTree::from_polygon(&poly, 6).unwrap();
        assert_eq!(t.cells(), vec![leaf]);
    }

    #[test]
    fn aligned_square_is_exactly_its_cell() {
        let cell = CellId::containing(GridPoint::new(3 << 25, 5 << 25), 2);
        let r = cell.rect();
        let g = |x: u64, y: u64| super::super::grid_to_latlng(x as f64, y as f64);
        let ring = vec![g(r.x0, r.y0), g(r.x1, r.y0), g(r.x1, r.y1), g(r.x0, r.y1)];
        let poly = Polygon::new(vec![ring]).unwrap();
        // Round-tripping corners through lat/lng must land on the cell edges.
        for ring in poly.grid_rings() {
            for (x, y) in ring {
                assert!((x - x.round()).abs() < 1e-3 && (y - y.round()).abs() < 1e-3);
            }
        }
        let t = AreaTree::from_polygon(&poly, 4).unwrap();
        assert_eq!(t.cells(), vec![cell]);
    }

    #[test]
    fn circle_contains_center_excludes_far_points() {
        let c = gp(37.77, -122.42);
        let t = AreaTree::from_point_radius(c, 500.0, 8).unwrap();
        assert!(t.contains_point(project(c).unwrap()));
        let far = gp(37.77 + 1000.0 / 111_195.0, -122.42);
        assert!(!t.contains_point(project(far).unwrap()));
    }

    #[test]
    fn circle_sampled_containment() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let c = gp(rng.gen_range(-60.0..60.0), rng.gen_range(-170.0..170.0));
            let radius = rng.gen_range(50.0..2000.0);
            let level = 8;
            let t = AreaTree::from_point_radius(c, radius, level).unwrap();
            let leaf_diag_m = {
                let size = CellId::span_bits(level);
                let units = (1u64 << size) as f64 * std::f64::consts::SQRT_2;
                units / meters_to_units(1.0, c.lat.abs() - 1.0)
            };
            for _ in 0..200 {
                let bearing: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let dist = rng.gen_range(0.0..3.0 * radius);
                let dlat = dist * bearing.cos() / 111_195.0;
                let dlng = dist * bearing.sin() / (111_195.0 * c.lat.to_radians().cos());
                let p = gp(c.lat + dlat, c.lng + dlng);
                let d = super::super::distance_m(c, p);
                let inside = t.contains_point(project(p).unwrap());
                if d <= radius {
                    assert!(inside, "point at {d} m of radius {radius} not contained");
                }
                if d > radius + leaf_diag_m {
                    assert!(!inside, "point at {d} m contained by radius {radius}");
                }
            }
        }
    }

    #[test]
    fn path_strip_contains_sampled_points() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let mut pts = vec![gp(rng.gen_range(-50.0..50.0), rng.gen_range(-150.0..150.0))];
            for _ in 0..4 {
                let last = *pts.last().unwrap();
                pts.push(gp(
                    last.lat + rng.gen_range(-0.01..0.01),
                    last.lng + rng.gen_range(-0.01..0.01),
                ));
            }
            let path = Polyline::new(pts.clone()).unwrap();
            let t = AreaTree::from_path(&path, 20.0, 8).unwrap();
            assert!(t.is_canonical());
            for p in &pts {
                assert!(t.contains_point(project(*p).unwrap()));
            }
            // 100 uniform samples by arc length in grid space.
            let grid: Vec<(f64, f64)> = pts.iter().map(|p| project_f64(*p)).collect();
            let lens: Vec<f64> = grid
                .windows(2)
                .map(|w| ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt())
                .collect();
            let total: f64 = lens.iter().sum();
            for i in 0..100 {
                let mut s = total * i as f64 / 99.0;
                let mut k = 0;
                while k + 1 < lens.len() && s > lens[k] {
                    s -= lens[k];
                    k += 1;
                }
                let f = if lens[k] == 0.0 { 0.0 } else { (s / lens[k]).min(1.0) };
                let x = grid[k].0 + f * (grid[k + 1].0 - grid[k].0);
                let y = grid[k].1 + f * (grid[k + 1].1 - grid[k].1);
                let gpnt = GridPoint::new(x.floor() as u32, y.floor() as u32);
                assert!(t.contains_point(gpnt));
            }
        }
    }

    #[test]
    fn single_segment_is_capsule_union_of_circles_and_band() {
        let a = gp(1.0, 1.0);
        let b = gp(1.0, 1.001);
        let path = AreaTree::from_path(&Polyline::new(vec![a, b]).unwrap(), 40.0, 8).unwrap();
        let ca = AreaTree::from_point_radius(a, 20.0, 8).unwrap();
        let cb = AreaTree::from_point_radius(b, 20.0, 8).unwrap();
        // The end caps are inside the strip.
        assert_eq!(ca.combine(CombineOp::Difference, &path).unwrap(), AreaTree::empty(8));
        assert_eq!(cb.combine(CombineOp::Difference, &path).unwrap(), AreaTree::empty(8));
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(
            AreaTree::from_point_radius(gp(0.0, 0.0), 0.0, 5),
            Err(GeoError::BadParam(_))
        ));
        let one = Polyline { points: vec![gp(0.0, 0.0)] };
        assert_eq!(AreaTree::from_path(&one, 5.0, 5), Err(GeoError::DegeneratePath));
        let bad = GeoPoint { lat: 89.0, lng: 0.0 };
        assert!(matches!(AreaTree::from_point_radius(bad, 5.0, 5), Err(GeoError::OutOfBand(_))));
    }
}

//! Line-of-sight over Gaussian-mixture terrain.
//!
//! Each terrain component is enclosed in an axis-aligned 2D box of
//! half-widths `box_sigmas * sigma`; the boxes form a balanced BVH.
//! A query marches the segment by adaptive bisection: intervals whose
//! ground projection touches no box are discarded whole, and the terrain
//! surface is only ever evaluated at midpoints that fall inside a leaf
//! box. Terrain outside every box is treated as base level, which is the
//! approximation the box construction commits to; enlarge `box_sigmas`
//! to tighten it.

use alloc::collections::VecDeque;
use alloc::vec::Vec;
use core::fmt;
#[allow(unused_imports)]
use num_traits::Float;

use crate::geometry::Point3;
use crate::terrain::TerrainModel;

/// Axis-aligned 2D box, closed on all sides.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb2 {
    pub min_x: f64,
    pub max_x: f64,
    pub min_y: f64,
    pub max_y: f64,
}

impl Aabb2 {
    pub fn new(min_x: f64, max_x: f64, min_y: f64, max_y: f64) -> Self {
        Self { min_x, max_x, min_y, max_y }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min_x && x <= self.max_x && y >= self.min_y && y <= self.max_y
    }

    pub fn union(&self, other: &Aabb2) -> Aabb2 {
        Aabb2 {
            min_x: self.min_x.min(other.min_x),
            max_x: self.max_x.max(other.max_x),
            min_y: self.min_y.min(other.min_y),
            max_y: self.max_y.max(other.max_y),
        }
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.min_x + self.max_x), 0.5 * (self.min_y + self.max_y))
    }

    /// Exact segment test by slab clipping; touching an edge counts as a hit.
    pub fn segment_intersects(&self, ax: f64, ay: f64, bx: f64, by: f64) -> bool {
        let mut t0 = 0.0_f64;
        let mut t1 = 1.0_f64;
        for (o, d, lo, hi) in [
            (ax, bx - ax, self.min_x, self.max_x),
            (ay, by - ay, self.min_y, self.max_y),
        ] {
            if d == 0.0 {
                if o < lo || o > hi {
                    return false;
                }
            } else {
                let inv = 1.0 / d;
                let mut ta = (lo - o) * inv;
                let mut tb = (hi - o) * inv;
                if ta > tb {
                    core::mem::swap(&mut ta, &mut tb);
                }
                t0 = t0.max(ta);
                t1 = t1.min(tb);
                if t0 > t1 {
                    return false;
                }
            }
        }
        true
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { bbox: Aabb2, component: usize },
    Internal { bbox: Aabb2, left: usize, right: usize },
}

impl Node {
    fn bbox(&self) -> &Aabb2 {
        match self {
            Node::Leaf { bbox, .. } | Node::Internal { bbox, .. } => bbox,
        }
    }
}

/// Balanced bounding volume hierarchy over terrain components.
#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    root: Option<usize>,
    box_sigmas: f64,
}

impl Bvh {
    /// Builds the hierarchy with per-component boxes of half-width
    /// `box_sigmas * sigma` on each axis. Splits recursively at the
    /// median of child box centers along the longer extent of the node
    /// box, so the tree stays balanced. An empty model yields an empty
    /// hierarchy that intersects nothing.
    pub fn build(model: &TerrainModel, box_sigmas: f64) -> Bvh {
        let mut items: Vec<(usize, Aabb2)> = model
            .components
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let rx = box_sigmas * c.sigma_x;
                let ry = box_sigmas * c.sigma_y;
                (
                    i,
                    Aabb2::new(c.center_x - rx, c.center_x + rx, c.center_y - ry, c.center_y + ry),
                )
            })
            .collect();
        let mut nodes = Vec::with_capacity(items.len().saturating_mul(2));
        let root = if items.is_empty() {
            None
        } else {
            Some(Self::build_node(&mut items, &mut nodes))
        };
        Bvh { nodes, root, box_sigmas }
    }

    fn build_node(items: &mut [(usize, Aabb2)], nodes: &mut Vec<Node>) -> usize {
        if items.len() == 1 {
            nodes.push(Node::Leaf { bbox: items[0].1, component: items[0].0 });
            return nodes.len() - 1;
        }
        let bbox = items[1..]
            .iter()
            .fold(items[0].1, |acc, (_, b)| acc.union(b));
        let split_x = (bbox.max_x - bbox.min_x) >= (bbox.max_y - bbox.min_y);
        items.sort_by(|a, b| {
            let ca = a.1.center();
            let cb = b.1.center();
            if split_x {
                ca.0.total_cmp(&cb.0)
            } else {
                ca.1.total_cmp(&cb.1)
            }
        });
        let mid = (items.len() + 1) / 2;
        let (left_items, right_items) = items.split_at_mut(mid);
        let left = Self::build_node(left_items, nodes);
        let right = Self::build_node(right_items, nodes);
        nodes.push(Node::Internal { bbox, left, right });
        nodes.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.root.is_none()
    }

    pub fn box_sigmas(&self) -> f64 {
        self.box_sigmas
    }

    pub fn root_box(&self) -> Option<Aabb2> {
        self.root.map(|r| *self.nodes[r].bbox())
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    /// Leaf boxes with their component indices, in tree order.
    pub fn leaves(&self) -> impl Iterator<Item = (usize, Aabb2)> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { bbox, component } => Some((*component, *bbox)),
            Node::Internal { .. } => None,
        })
    }

    /// Number of node levels; a lone leaf has height 1, the empty tree 0.
    pub fn height(&self) -> usize {
        fn rec(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 1,
                Node::Internal { left, right, .. } => 1 + rec(nodes, *left).max(rec(nodes, *right)),
            }
        }
        self.root.map_or(0, |r| rec(&self.nodes, r))
    }

    /// True when the ground point lies inside at least one leaf box.
    pub fn point_in_leaf(&self, x: f64, y: f64) -> bool {
        let Some(root) = self.root else { return false };
        let mut stack = [0usize; 64];
        let mut top = 0;
        stack[top] = root;
        top += 1;
        while top > 0 {
            top -= 1;
            match &self.nodes[stack[top]] {
                Node::Leaf { bbox, .. } => {
                    if bbox.contains(x, y) {
                        return true;
                    }
                }
                Node::Internal { bbox, left, right } => {
                    if bbox.contains(x, y) {
                        stack[top] = *left;
                        top += 1;
                        stack[top] = *right;
                        top += 1;
                    }
                }
            }
        }
        false
    }

    /// True when the 2D segment touches the root box.
    pub fn segment_hits_root(&self, ax: f64, ay: f64, bx: f64, by: f64) -> bool {
        self.root
            .map_or(false, |r| self.nodes[r].bbox().segment_intersects(ax, ay, bx, by))
    }

    /// True when the 2D segment touches at least one leaf box.
    pub fn segment_intersects_any(&self, ax: f64, ay: f64, bx: f64, by: f64) -> bool {
        let Some(root) = self.root else { return false };
        let mut stack = [0usize; 64];
        let mut top = 0;
        stack[top] = root;
        top += 1;
        while top > 0 {
            top -= 1;
            match &self.nodes[stack[top]] {
                Node::Leaf { bbox, .. } => {
                    if bbox.segment_intersects(ax, ay, bx, by) {
                        return true;
                    }
                }
                Node::Internal { bbox, left, right } => {
                    if bbox.segment_intersects(ax, ay, bx, by) {
                        stack[top] = *left;
                        top += 1;
                        stack[top] = *right;
                        top += 1;
                    }
                }
            }
        }
        false
    }
}

/// One line-of-sight question: is the open segment from `from` to `to`
/// clear of terrain?
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LosQuery {
    pub from: Point3,
    pub to: Point3,
    /// Bisection stops once interval widths in t drop to this value.
    pub epsilon: f64,
}

impl LosQuery {
    pub fn new(from: Point3, to: Point3, epsilon: f64) -> Result<Self, LosError> {
        if !from.is_finite() || !to.is_finite() {
            return Err(LosError::NonFinite);
        }
        if from == to {
            return Err(LosError::DegenerateSegment);
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(LosError::EpsilonOutOfRange { value: epsilon });
        }
        Ok(Self { from, to, epsilon })
    }
}

/// Verdict of a LoS evaluation plus the work it took.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LosOutcome {
    pub visible: bool,
    /// Number of terrain-surface evaluations performed.
    pub terrain_evals: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LosError {
    NonFinite,
    DegenerateSegment,
    EpsilonOutOfRange { value: f64 },
    StepOutOfRange { value: f64 },
}

impl fmt::Display for LosError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LosError::NonFinite => write!(f, "segment endpoint is not finite"),
            LosError::DegenerateSegment => write!(f, "segment endpoints coincide"),
            LosError::EpsilonOutOfRange { value } => {
                write!(f, "epsilon must lie in (0,1), got {value}")
            }
            LosError::StepOutOfRange { value } => {
                write!(f, "oracle step must lie in (0, 1e-3], got {value}")
            }
        }
    }
}

impl core::error::Error for LosError {}

/// Adaptive-bisection LoS query.
///
/// Early-accepts when the ground projection misses the root box. The
/// worklist starts at the whole interval [0,1]; an interval is dropped
/// when its projected sub-segment touches no box, otherwise its midpoint
/// is tested against the surface (only if that midpoint lies inside a
/// leaf box; ties z = surface count as blocked) and the two halves are
/// queued. Intervals narrower than `epsilon` are not refined further.
/// Returns visible when no tested midpoint is blocked.
pub fn los_query(bvh: &Bvh, terrain: &TerrainModel, q: &LosQuery) -> LosOutcome {
    let a = q.from;
    let b = q.to;
    if !bvh.segment_hits_root(a.x, a.y, b.x, b.y) {
        return LosOutcome { visible: true, terrain_evals: 0 };
    }
    let mut evals = 0;
    let mut work: VecDeque<(f64, f64)> = VecDeque::new();
    work.push_back((0.0, 1.0));
    while let Some((t0, t1)) = work.pop_front() {
        if t1 - t0 <= q.epsilon {
            continue;
        }
        let p0 = a.lerp(&b, t0);
        let p1 = a.lerp(&b, t1);
        if !bvh.segment_intersects_any(p0.x, p0.y, p1.x, p1.y) {
            continue;
        }
        let tm = 0.5 * (t0 + t1);
        let pm = a.lerp(&b, tm);
        if bvh.point_in_leaf(pm.x, pm.y) {
            evals += 1;
            if pm.z <= terrain.elevation(pm.x, pm.y) {
                return LosOutcome { visible: false, terrain_evals: evals };
            }
        }
        work.push_back((t0, tm));
        work.push_back((tm, t1));
    }
    LosOutcome { visible: true, terrain_evals: evals }
}

/// Brute-force LoS ground truth: samples t = 0, step, 2*step, ..., 1 and
/// reports blocked on the first sample at or below the surface. The
/// final sample is clamped to t = 1 so the far endpoint is always
/// checked. Coincident endpoints are decided by the single sample.
pub fn los_dense_oracle(
    terrain: &TerrainModel,
    from: Point3,
    to: Point3,
    step: f64,
) -> Result<LosOutcome, LosError> {
    if !(step > 0.0 && step <= 1e-3) {
        return Err(LosError::StepOutOfRange { value: step });
    }
    if !from.is_finite() || !to.is_finite() {
        return Err(LosError::NonFinite);
    }
    if from == to {
        let blocked = from.z <= terrain.elevation(from.x, from.y);
        return Ok(LosOutcome { visible: !blocked, terrain_evals: 1 });
    }
    let n = (1.0 / step).ceil() as usize;
    let mut evals = 0;
    for k in 0..=n {
        let t = ((k as f64) * step).min(1.0);
        let p = from.lerp(&to, t);
        evals += 1;
        if p.z <= terrain.elevation(p.x, p.y) {
            return Ok(LosOutcome { visible: false, terrain_evals: evals });
        }
    }
    Ok(LosOutcome { visible: true, terrain_evals: evals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::GaussianBump;
    use alloc::vec;

    fn one_bump() -> TerrainModel {
        TerrainModel {
            base: 0.0,
            components: vec![GaussianBump {
                height: 100.0,
                center_x: 500.0,
                center_y: 500.0,
                sigma_x: 100.0,
                sigma_y: 100.0,
            }],
        }
    }

    #[test]
    fn single_bump_box_is_exact() {
        let bvh = Bvh::build(&one_bump(), 2.0);
        assert_eq!(bvh.leaf_count(), 1);
        assert_eq!(bvh.height(), 1);
        assert_eq!(bvh.root_box(), Some(Aabb2::new(300.0, 700.0, 300.0, 700.0)));
    }

    #[test]
    fn empty_model_builds_empty_hierarchy() {
        let flat = TerrainModel::flat(0.0);
        let bvh = Bvh::build(&flat, 2.0);
        assert!(bvh.is_empty());
        assert_eq!(bvh.height(), 0);
        assert!(!bvh.point_in_leaf(0.0, 0.0));
        assert!(!bvh.segment_hits_root(-1e6, -1e6, 1e6, 1e6));

        let q = LosQuery::new(Point3::new(0.0, 0.0, 1.0), Point3::new(10.0, 0.0, 1.0), 1e-5).unwrap();
        let out = los_query(&bvh, &flat, &q);
        assert!(out.visible);
        assert_eq!(out.terrain_evals, 0);
    }

    #[test]
    fn row_of_four_bumps_splits_by_x_median() {
        let model = TerrainModel {
            base: 0.0,
            components: (0..4)
                .map(|i| GaussianBump {
                    height: 50.0,
                    center_x: 1000.0 * i as f64,
                    center_y: 0.0,
                    sigma_x: 50.0,
                    sigma_y: 50.0,
                })
                .collect(),
        };
        let bvh = Bvh::build(&model, 2.0);
        assert_eq!(bvh.leaf_count(), 4);
        assert_eq!(bvh.height(), 3);
        // every leaf box sits inside the root box
        let root = bvh.root_box().unwrap();
        for (i, leaf) in bvh.leaves() {
            assert_eq!(root.union(&leaf), root, "leaf {i} escapes the root box");
            let c = model.components[i];
            assert!(leaf.contains(c.center_x, c.center_y));
        }
    }

    #[test]
    fn query_blocked_through_the_bump_and_clear_above_it() {
        let model = one_bump();
        let bvh = Bvh::build(&model, 2.0);

        let low = LosQuery::new(Point3::new(0.0, 500.0, 50.0), Point3::new(1000.0, 500.0, 50.0), 1e-5).unwrap();
        let out = los_query(&bvh, &model, &low);
        assert!(!out.visible);
        assert!(out.terrain_evals >= 1);
        let oracle = los_dense_oracle(&model, low.from, low.to, 1e-4).unwrap();
        assert!(!oracle.visible);

        let high = LosQuery::new(Point3::new(0.0, 500.0, 200.0), Point3::new(1000.0, 500.0, 200.0), 1e-5).unwrap();
        assert!(los_query(&bvh, &model, &high).visible);
        assert!(los_dense_oracle(&model, high.from, high.to, 1e-4).unwrap().visible);
    }

    #[test]
    fn clearance_of_ten_meters_everywhere_stays_visible() {
        let model = one_bump();
        let bvh = Bvh::build(&model, 2.0);
        let q = LosQuery::new(Point3::new(0.0, 500.0, 110.0), Point3::new(1000.0, 500.0, 110.0), 1e-5).unwrap();
        assert!(los_query(&bvh, &model, &q).visible);
        assert!(los_dense_oracle(&model, q.from, q.to, 1e-4).unwrap().visible);
    }

    #[test]
    fn vertical_segment_is_handled_as_constant_ground_track() {
        let model = one_bump();
        let bvh = Bvh::build(&model, 2.0);
        let q = LosQuery::new(Point3::new(500.0, 500.0, 300.0), Point3::new(500.0, 500.0, 20.0), 1e-5).unwrap();
        assert!(!los_query(&bvh, &model, &q).visible);
        // same track kept above the peak is clear
        let q = LosQuery::new(Point3::new(500.0, 500.0, 300.0), Point3::new(500.0, 500.0, 101.0), 1e-5).unwrap();
        assert!(los_query(&bvh, &model, &q).visible);
    }

    #[test]
    fn raising_a_blocked_segment_clears_it() {
        let model = one_bump();
        let bvh = Bvh::build(&model, 2.0);
        let mut blocked_seen = false;
        for z in [20.0, 60.0, 99.0, 101.0, 150.0] {
            let q = LosQuery::new(Point3::new(0.0, 500.0, z), Point3::new(1000.0, 500.0, z), 1e-5).unwrap();
            let visible = los_query(&bvh, &model, &q).visible;
            if !visible {
                blocked_seen = true;
            } else {
                // once clear, every higher altitude stays clear
                assert!(blocked_seen, "expected lower altitudes to be blocked first");
            }
        }
    }

    #[test]
    fn query_validation_rejects_bad_inputs() {
        let p = Point3::new(0.0, 0.0, 0.0);
        let q = Point3::new(1.0, 0.0, 0.0);
        assert_eq!(LosQuery::new(p, p, 1e-5), Err(LosError::DegenerateSegment));
        assert_eq!(
            LosQuery::new(p, q, 0.0),
            Err(LosError::EpsilonOutOfRange { value: 0.0 })
        );
        assert_eq!(
            LosQuery::new(p, q, 1.0),
            Err(LosError::EpsilonOutOfRange { value: 1.0 })
        );
        assert_eq!(
            LosQuery::new(Point3::new(f64::NAN, 0.0, 0.0), q, 1e-5),
            Err(LosError::NonFinite)
        );
        assert_eq!(
            los_dense_oracle(&one_bump(), p, q, 2e-3),
            Err(LosError::StepOutOfRange { value: 2e-3 })
        );
    }

    #[test]
    fn oracle_decides_coincident_endpoints_with_one_sample() {
        let model = one_bump();
        let above = Point3::new(500.0, 500.0, 150.0);
        let below = Point3::new(500.0, 500.0, 50.0);
        let out = los_dense_oracle(&model, above, above, 1e-4).unwrap();
        assert!(out.visible);
        assert_eq!(out.terrain_evals, 1);
        let out = los_dense_oracle(&model, below, below, 1e-4).unwrap();
        assert!(!out.visible);
        assert_eq!(out.terrain_evals, 1);
    }
}

//! Intersecting nodes between the observable region and lane centerlines,
//! their static/dynamic and relevant/irrelevant classification, and
//! lane-bound forward reachable intervals.

use crate::geometry::{segment_crossing, Point2, Polygon, Polyline};
use crate::scenario::{LaneMap, Route};

/// Default exclusion distance between a node and a visible vehicle footprint.
pub const DEFAULT_CLEARANCE: f64 = 0.5;

/// Step used when searching a lane for its first conflict with the ego route.
const CONFLICT_SEARCH_STEP: f64 = 0.5;

/// Anything that can answer "is this point visible".
pub trait Region {
    fn contains_point(&self, p: Point2) -> bool;
}

impl Region for Polygon {
    fn contains_point(&self, p: Point2) -> bool {
        self.contains(p)
    }
}

impl Region for crate::geometry::VisibilityPolygon {
    fn contains_point(&self, p: Point2) -> bool {
        self.contains(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Motion {
    Static,
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relevance {
    Relevant,
    Irrelevant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeKind {
    pub motion: Motion,
    pub relevance: Relevance,
}

impl Default for NodeKind {
    fn default() -> Self {
        Self { motion: Motion::Dynamic, relevance: Relevance::Irrelevant }
    }
}

/// Which way the lane crosses the visibility boundary, in lane direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundarySense {
    /// visible upstream, occluded downstream
    EnteringOcclusion,
    /// occluded upstream, visible downstream
    LeavingOcclusion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntersectingNode {
    pub position: Point2,
    pub lane_id: String,
    pub s_on_lane: f64,
    pub kind: NodeKind,
    pub boundary_sense: BoundarySense,
}

impl IntersectingNode {
    pub fn is_relevant(&self) -> bool {
        self.kind.relevance == Relevance::Relevant
    }

    pub fn is_static(&self) -> bool {
        self.kind.motion == Motion::Static
    }
}

/// Forward reachable interval of a lane-bound vehicle. `s_hi` may run past
/// the end of `lane_id`, in which case the interval continues into every
/// successor.
#[derive(Debug, Clone, PartialEq)]
pub struct FrsInterval {
    pub lane_id: String,
    pub s_lo: f64,
    pub s_hi: f64,
}

impl FrsInterval {
    /// Per-lane pieces of the interval, following all successors.
    pub fn lane_segments(&self, map: &LaneMap) -> Vec<(String, f64, f64)> {
        let mut out = Vec::new();
        let mut stack = vec![(self.lane_id.clone(), self.s_lo, self.s_hi)];
        while let Some((id, lo, hi)) = stack.pop() {
            let Some(lane) = map.lane(&id) else { continue };
            let len = lane.centerline.length();
            out.push((id.clone(), lo, hi.min(len)));
            if hi > len {
                for succ in lane.successors.iter().rev() {
                    if out.iter().all(|(seen, _, _)| seen != succ) {
                        stack.push((succ.clone(), 0.0, hi - len));
                    }
                }
            }
        }
        out
    }
}

pub fn pv_frs_interval(node_s: f64, lane_id: &str, v_max: f64, t_pred: f64, _map: &LaneMap) -> FrsInterval {
    FrsInterval { lane_id: lane_id.to_string(), s_lo: node_s, s_hi: node_s + v_max.max(0.0) * t_pred }
}

/// A lane chain seen from one anchor lane: the anchor lane starts at
/// `anchor_offset` along `polyline`; lane coordinates are `path_s - anchor_offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct LanePath {
    pub polyline: Polyline,
    pub anchor_lane: String,
    pub anchor_offset: f64,
}

impl LanePath {
    pub fn point_at_lane_s(&self, lane_s: f64) -> Point2 {
        self.polyline.point_at(lane_s + self.anchor_offset)
    }

    /// Lane coordinate range covered by the chain.
    pub fn lane_s_range(&self) -> (f64, f64) {
        (-self.anchor_offset, self.polyline.length() - self.anchor_offset)
    }
}

/// Every downstream branch starting at `lane_id` that covers at least
/// `ahead` meters beyond `from_s` (or ends where the map ends).
pub fn downstream_paths(map: &LaneMap, lane_id: &str, from_s: f64, ahead: f64) -> Vec<LanePath> {
    let Some(lane) = map.lane(lane_id) else { return Vec::new() };
    let mut out = Vec::new();
    let mut stack = vec![(lane.centerline.clone(), vec![lane.id.clone()])];
    while let Some((line, visited)) = stack.pop() {
        let last = map.lane(visited.last().expect("non-empty")).expect("known lane");
        let open: Vec<&String> =
            last.successors.iter().filter(|s| !visited.contains(s)).collect();
        if line.length() >= from_s + ahead || open.is_empty() {
            out.push(LanePath { polyline: line, anchor_lane: lane_id.to_string(), anchor_offset: 0.0 });
            continue;
        }
        for succ in open.into_iter().rev() {
            let next = map.lane(succ).expect("validated successor");
            let mut v = visited.clone();
            v.push(succ.clone());
            stack.push((line.concat(&next.centerline), v));
        }
    }
    out
}

/// Prepends predecessor lanes (first in map order) until at least `behind`
/// meters are available upstream of lane coordinate `from_s`.
pub fn extend_upstream(map: &LaneMap, path: LanePath, from_s: f64, behind: f64) -> LanePath {
    let mut path = path;
    let mut head = path.anchor_lane.clone();
    let mut visited = vec![head.clone()];
    while from_s + path.anchor_offset < behind {
        let Some(pred) = map.predecessors(&head).find(|l| !visited.contains(&l.id)) else {
            break;
        };
        path = LanePath {
            polyline: pred.centerline.concat(&path.polyline),
            anchor_lane: path.anchor_lane,
            anchor_offset: path.anchor_offset + pred.centerline.length(),
        };
        head = pred.id.clone();
        visited.push(head.clone());
    }
    path
}

/// First point downstream of a node where the lane enters the ego corridor.
#[derive(Debug, Clone, PartialEq)]
pub struct Conflict {
    pub path: LanePath,
    /// lane coordinate of the conflict on the phantom vehicle's lane chain
    pub s_pv: f64,
    /// arc length of the conflict on the ego route
    pub s_ego: f64,
}

fn in_corridor(route: &Route, ego_s: f64, p: Point2) -> Option<f64> {
    let f = route.path.project(p);
    let interior = f.s > 1e-9 && f.s < route.length() - 1e-9;
    (interior && f.s >= ego_s && f.d.abs() <= route.corridor_half_width).then_some(f.s)
}

/// Searches each downstream branch of `lane_id` from `node_s` for up to
/// `max_reach` meters and returns the nearest corridor entry.
pub fn find_conflict(
    map: &LaneMap,
    lane_id: &str,
    node_s: f64,
    route: &Route,
    ego_s: f64,
    max_reach: f64,
) -> Option<Conflict> {
    let mut best: Option<Conflict> = None;
    for path in downstream_paths(map, lane_id, node_s, max_reach) {
        let end = path.lane_s_range().1.min(node_s + max_reach);
        let mut prev = node_s;
        if let Some(s_ego) = in_corridor(route, ego_s, path.point_at_lane_s(node_s)) {
            return Some(Conflict { path, s_pv: node_s, s_ego });
        }
        let mut s = node_s;
        while s < end {
            s = (s + CONFLICT_SEARCH_STEP).min(end);
            if in_corridor(route, ego_s, path.point_at_lane_s(s)).is_some() {
                // bisect the corridor boundary
                let (mut lo, mut hi) = (prev, s);
                for _ in 0..30 {
                    let mid = 0.5 * (lo + hi);
                    if in_corridor(route, ego_s, path.point_at_lane_s(mid)).is_some() {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                let s_ego = in_corridor(route, ego_s, path.point_at_lane_s(hi)).expect("inside");
                if best.as_ref().is_none_or(|b| hi < b.s_pv) {
                    best = Some(Conflict { path: path.clone(), s_pv: hi, s_ego });
                }
                break;
            }
            prev = s;
        }
    }
    best
}

/// Crossings of every lane centerline with the boundary of `obs`. Nodes
/// within `clearance` of a known vehicle footprint are dropped.
pub fn intersect_observable_with_lanes(
    obs: &Polygon,
    map: &LaneMap,
    other_vehicles: &[Polygon],
    clearance: f64,
) -> Vec<IntersectingNode> {
    intersect_region_with_lanes(obs, obs, map, other_vehicles, clearance)
}

/// Same as [`intersect_observable_with_lanes`] with a separate (faster)
/// containment oracle for the region bounded by `boundary`.
pub fn intersect_region_with_lanes(
    boundary: &Polygon,
    region: &impl Region,
    map: &LaneMap,
    other_vehicles: &[Polygon],
    clearance: f64,
) -> Vec<IntersectingNode> {
    let (lo, hi) = bbox(boundary.vertices());
    let mut nodes = Vec::new();
    for lane in map.lanes() {
        let pts = lane.centerline.points();
        let cum = lane.centerline.cumulative_arc_length();
        let mut hits: Vec<f64> = Vec::new();
        for i in 0..pts.len() - 1 {
            let (a, b) = (pts[i], pts[i + 1]);
            let (slo, shi) = bbox(&[a, b]);
            if shi.x < lo.x || slo.x > hi.x || shi.y < lo.y || slo.y > hi.y {
                continue;
            }
            let seg_len = cum[i + 1] - cum[i];
            for (c, d) in boundary.edges() {
                if let Some((t, _)) = segment_crossing(a, b, c, d) {
                    hits.push(cum[i] + t * seg_len);
                }
            }
        }
        hits.sort_by(|a, b| a.total_cmp(b));
        hits.dedup_by(|a, b| (*a - *b).abs() < 1e-7);
        let len = lane.centerline.length();
        for s in hits {
            let probe = 1e-4;
            let before = region.contains_point(lane.centerline.point_at((s - probe).max(0.0)));
            let after = region.contains_point(lane.centerline.point_at((s + probe).min(len)));
            let sense = match (before, after) {
                (true, false) => BoundarySense::EnteringOcclusion,
                (false, true) => BoundarySense::LeavingOcclusion,
                // grazing contact or a lane end sitting on the boundary
                _ => continue,
            };
            let position = lane.centerline.point_at(s);
            if other_vehicles.iter().any(|v| v.distance_to(position) <= clearance) {
                continue;
            }
            nodes.push(IntersectingNode {
                position,
                lane_id: lane.id.clone(),
                s_on_lane: s,
                kind: NodeKind::default(),
                boundary_sense: sense,
            });
        }
    }
    nodes
}

fn bbox(pts: &[Point2]) -> (Point2, Point2) {
    pts.iter().fold(
        (Point2::new(f64::INFINITY, f64::INFINITY), Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY)),
        |(lo, hi), p| (Point2::new(lo.x.min(p.x), lo.y.min(p.y)), Point2::new(hi.x.max(p.x), hi.y.max(p.y))),
    )
}

/// A node is static iff it sits inside the ego corridor within the ego's
/// route-constrained reach `[ego_s, ego_s + ego_v_max * t_pred]`.
pub fn classify_static_dynamic(
    nodes: &mut [IntersectingNode],
    ego_route: &Route,
    ego_s: f64,
    ego_v_max: f64,
    t_pred: f64,
) {
    let reach = ego_s + ego_v_max * t_pred;
    for node in nodes.iter_mut() {
        let f = ego_route.path.project(node.position);
        let inside = f.d.abs() <= ego_route.corridor_half_width && f.s >= ego_s && f.s <= reach;
        node.kind.motion = if inside { Motion::Static } else { Motion::Dynamic };
    }
}

/// Dynamic nodes are relevant when their lane reach hits the ego corridor
/// ahead of the ego; nodes on the ego's own lanes never spawn crossing
/// hypotheses. Only the first static node along the route is relevant.
pub fn classify_relevance(
    nodes: &mut [IntersectingNode],
    ego_route: &Route,
    ego_s: f64,
    t_pred: f64,
    v_max: f64,
    map: &LaneMap,
) {
    let reach = v_max * t_pred;
    let mut first_static: Option<(usize, f64)> = None;
    for (i, node) in nodes.iter_mut().enumerate() {
        node.kind.relevance = Relevance::Irrelevant;
        match node.kind.motion {
            Motion::Static => {
                let s = ego_route.path.project(node.position).s;
                if first_static.is_none_or(|(_, best)| s < best) {
                    first_static = Some((i, s));
                }
            }
            Motion::Dynamic => {
                if ego_route.contains_lane(&node.lane_id) {
                    continue;
                }
                let hit = find_conflict(map, &node.lane_id, node.s_on_lane, ego_route, ego_s, reach);
                if hit.is_some_and(|c| c.s_pv - node.s_on_lane <= reach + 1e-9) {
                    node.kind.relevance = Relevance::Relevant;
                }
            }
        }
    }
    if let Some((i, _)) = first_static {
        nodes[i].kind.relevance = Relevance::Relevant;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{build_route, Lane};

    fn lane(id: &str, pts: &[(f64, f64)], succ: &[&str]) -> Lane {
        Lane {
            id: id.into(),
            centerline: Polyline::new(pts.iter().map(|&(x, y)| Point2::new(x, y)).collect()).unwrap(),
            width: 3.5,
            successors: succ.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Ego drives east along y=0 from x=0 to x=200; a crossing lane runs
    /// north along x=100 from y=-150 to y=50.
    fn crossing_map() -> (LaneMap, Route) {
        let map = LaneMap::new(vec![
            lane("ego", &[(0.0, 0.0), (200.0, 0.0)], &[]),
            lane("cross", &[(100.0, -150.0), (100.0, 50.0)], &[]),
        ])
        .unwrap();
        let route = build_route(&map, &["ego".into()]).unwrap();
        (map, route)
    }

    fn square(cx: f64, cy: f64, half: f64) -> Polygon {
        Polygon::oriented_rect(Point2::new(cx, cy), 0.0, 2.0 * half, 2.0 * half)
    }

    #[test]
    fn centerline_inside_region_has_no_nodes() {
        let map = LaneMap::new(vec![lane("a", &[(-5.0, 0.0), (5.0, 0.0)], &[])]).unwrap();
        let nodes = intersect_observable_with_lanes(&square(0.0, 0.0, 20.0), &map, &[], 0.5);
        assert!(nodes.is_empty());
    }

    #[test]
    fn straight_lane_through_square_gives_two_nodes() {
        let map = LaneMap::new(vec![lane("a", &[(-50.0, 0.0), (50.0, 0.0)], &[])]).unwrap();
        let region = square(0.0, 0.0, 10.0);
        let nodes = intersect_observable_with_lanes(&region, &map, &[], 0.5);
        // oracle: brute-force segment/edge crossings
        let seg = (Point2::new(-50.0, 0.0), Point2::new(50.0, 0.0));
        let expected = region.edges().filter(|&(c, d)| segment_crossing(seg.0, seg.1, c, d).is_some()).count();
        assert_eq!(nodes.len(), expected);
        assert_eq!(nodes.len(), 2);
        // visible inside the square: lane enters the region at x=-10 (leaving occlusion)
        assert_eq!(nodes[0].boundary_sense, BoundarySense::LeavingOcclusion);
        assert!((nodes[0].s_on_lane - 40.0).abs() < 1e-9);
        assert_eq!(nodes[1].boundary_sense, BoundarySense::EnteringOcclusion);
        assert!((nodes[1].s_on_lane - 60.0).abs() < 1e-9);
    }

    #[test]
    fn node_close_to_vehicle_is_excluded() {
        let map = LaneMap::new(vec![lane("a", &[(-50.0, 0.0), (50.0, 0.0)], &[])]).unwrap();
        let region = square(0.0, 0.0, 10.0);
        // vehicle footprint 0.3 m beyond the x=10 node
        let parked = Polygon::oriented_rect(Point2::new(12.55, 0.0), 0.0, 4.5, 1.8);
        let nodes = intersect_observable_with_lanes(&region, &map, &[parked], 0.5);
        assert_eq!(nodes.len(), 1);
        assert!((nodes[0].position.x + 10.0).abs() < 1e-9);
    }

    #[test]
    fn frs_interval_examples() {
        let map = LaneMap::new(vec![
            lane("a", &[(0.0, 0.0), (20.0, 0.0)], &["b"]),
            lane("b", &[(20.0, 0.0), (60.0, 0.0)], &[]),
        ])
        .unwrap();
        let i = pv_frs_interval(0.0, "a", 10.0, 2.0, &map);
        assert_eq!((i.s_lo, i.s_hi), (0.0, 20.0));
        let spill = pv_frs_interval(15.0, "a", 10.0, 2.0, &map).lane_segments(&map);
        // oracle: 5 m remain on a, then 15 m into b
        assert_eq!(spill, vec![("a".to_string(), 15.0, 20.0), ("b".to_string(), 0.0, 15.0)]);
        let z = pv_frs_interval(7.0, "a", 0.0, 2.0, &map);
        assert_eq!((z.s_lo, z.s_hi), (7.0, 7.0));
    }

    fn node_at(map: &LaneMap, lane_id: &str, s: f64) -> IntersectingNode {
        IntersectingNode {
            position: map.lane(lane_id).unwrap().centerline.point_at(s),
            lane_id: lane_id.into(),
            s_on_lane: s,
            kind: NodeKind::default(),
            boundary_sense: BoundarySense::LeavingOcclusion,
        }
    }

    #[test]
    fn static_dynamic_examples() {
        let (map, route) = crossing_map();
        let mut nodes = vec![
            node_at(&map, "ego", 10.0),
            // crossing lane, 5 m right of the route
            IntersectingNode { position: Point2::new(100.0, -5.0), ..node_at(&map, "cross", 145.0) },
            node_at(&map, "ego", 100.0),
        ];
        classify_static_dynamic(&mut nodes, &route, 0.0, 10.0, 3.0);
        assert_eq!(nodes[0].kind.motion, Motion::Static);
        assert_eq!(nodes[1].kind.motion, Motion::Dynamic);
        // reach is 30 m, node is 100 m ahead
        assert_eq!(nodes[2].kind.motion, Motion::Dynamic);
    }

    #[test]
    fn relevance_examples() {
        let (map, route) = crossing_map();
        // corridor edge on the crossing lane is at y=-1.75, i.e. lane s=148.25
        let near = node_at(&map, "cross", 148.25 - 40.0);
        let far = node_at(&map, "cross", 148.25 - 80.0);
        let mut nodes = vec![near, far];
        classify_static_dynamic(&mut nodes, &route, 0.0, 10.0, 3.0);
        classify_relevance(&mut nodes, &route, 0.0, 3.0, 20.0, &map);
        assert!(nodes[0].is_relevant());
        assert!(!nodes[1].is_relevant());

        let mut statics = vec![node_at(&map, "ego", 25.0), node_at(&map, "ego", 10.0)];
        classify_static_dynamic(&mut statics, &route, 0.0, 10.0, 3.0);
        classify_relevance(&mut statics, &route, 0.0, 3.0, 20.0, &map);
        assert!(!statics[0].is_relevant());
        assert!(statics[1].is_relevant());
    }

    #[test]
    fn conflict_search_bisects_corridor_edge() {
        let (map, route) = crossing_map();
        let c = find_conflict(&map, "cross", 100.0, &route, 0.0, 60.0).unwrap();
        assert!((c.s_pv - 148.25).abs() < 1e-6);
        assert!((c.s_ego - 100.0).abs() < 1e-6);
        assert!(find_conflict(&map, "cross", 100.0, &route, 0.0, 40.0).is_none());
        // conflict behind the ego is ignored
        assert!(find_conflict(&map, "cross", 100.0, &route, 120.0, 60.0).is_none());
    }
}

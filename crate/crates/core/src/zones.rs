//! Phantom vehicle sets (occluded lane intervals) and the phantom
//! pedestrian zone (occluded cells within walking reach of the route).

use crate::geometry::{Point2, Polyline};
use crate::nodes::{extend_upstream, find_conflict, IntersectingNode, LanePath, Region};
use crate::scenario::{LaneMap, Route};

pub const DEFAULT_WALK_STEP: f64 = 0.5;
pub const DEFAULT_CELL_SIZE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PvsKind {
    Static,
    Dynamic,
}

/// One hypothesised hidden vehicle somewhere in `[s_s, s_e]` (lane
/// coordinates of `lane_id`, extended along `path`).
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomVehicleSet {
    pub kind: PvsKind,
    pub lane_id: String,
    pub s_s: f64,
    pub s_e: f64,
    pub conflict_s_ego: f64,
    pub conflict_s_pv: f64,
    pub path: LanePath,
}

impl PhantomVehicleSet {
    pub fn length(&self) -> f64 {
        self.s_e - self.s_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpzCell {
    pub center: Point2,
    pub closest_route_s: f64,
    pub distance_to_route: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PhantomPedestrianZone {
    pub cell_size: f64,
    pub cells: Vec<PpzCell>,
}

impl PhantomPedestrianZone {
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Degenerate set at a relevant static node: the hidden vehicle is assumed
/// to be standing there.
pub fn build_static_pvs(node: &IntersectingNode, ego_route: &Route, map: &LaneMap) -> Option<PhantomVehicleSet> {
    if !(node.is_static() && node.is_relevant()) {
        return None;
    }
    let lane = map.lane(&node.lane_id)?;
    Some(PhantomVehicleSet {
        kind: PvsKind::Static,
        lane_id: node.lane_id.clone(),
        s_s: node.s_on_lane,
        s_e: node.s_on_lane,
        conflict_s_ego: ego_route.path.project(node.position).s,
        conflict_s_pv: node.s_on_lane,
        path: LanePath { polyline: lane.centerline.clone(), anchor_lane: lane.id.clone(), anchor_offset: 0.0 },
    })
}

/// Walks upstream from a relevant dynamic node while the lane stays occluded
/// and every walked point can still reach the conflict within `t_pred`.
#[allow(clippy::too_many_arguments)]
pub fn build_dynamic_pvs(
    start_node: &IntersectingNode,
    obs: &impl Region,
    ego_route: &Route,
    ego_s: f64,
    v_max: f64,
    t_pred: f64,
    step: f64,
    map: &LaneMap,
) -> Option<PhantomVehicleSet> {
    let reach = v_max * t_pred;
    let s_e = start_node.s_on_lane;
    let conflict = find_conflict(map, &start_node.lane_id, s_e, ego_route, ego_s, reach)?;
    let path = extend_upstream(map, conflict.path, s_e, reach + step);
    let s_floor = path.lane_s_range().0;
    let frs_floor = conflict.s_pv - reach;
    let occluded = |s: f64| !obs.contains_point(path.point_at_lane_s(s));

    let mut last_ok = s_e;
    let s_s = loop {
        let cand = last_ok - step;
        if cand < frs_floor {
            // the reach condition binds between samples: exact bound
            break if occluded(frs_floor.max(s_floor)) { frs_floor.max(s_floor) } else { bisect(last_ok, cand, &occluded) };
        }
        if cand < s_floor {
            break if occluded(s_floor) { s_floor } else { bisect(last_ok, s_floor, &occluded) };
        }
        if !occluded(cand) {
            break bisect(last_ok, cand, &occluded);
        }
        last_ok = cand;
    };
    let s_s = s_s.min(s_e);
    Some(PhantomVehicleSet {
        kind: PvsKind::Dynamic,
        lane_id: start_node.lane_id.clone(),
        s_s,
        s_e,
        conflict_s_ego: conflict.s_ego,
        conflict_s_pv: conflict.s_pv,
        path,
    })
}

/// Occluded end of the occluded/visible transition between `occ` and `vis`.
fn bisect(mut occ: f64, mut vis: f64, occluded: &impl Fn(f64) -> bool) -> f64 {
    for _ in 0..40 {
        let mid = 0.5 * (occ + vis);
        if occluded(mid) {
            occ = mid;
        } else {
            vis = mid;
        }
        if (occ - vis).abs() < 1e-9 {
            break;
        }
    }
    occ
}

/// Occluded grid cells within `v_max_pp * t_pred` of the route window.
/// The grid is anchored at multiples of `cell_size` so that zones built for
/// different observable regions share cells.
pub fn build_ppz(
    obs: &impl Region,
    ego_route: &Route,
    v_max_pp: f64,
    t_pred: f64,
    cell_size: f64,
    route_window: (f64, f64),
) -> PhantomPedestrianZone {
    let radius = v_max_pp * t_pred;
    let mut zone = PhantomPedestrianZone { cell_size, cells: Vec::new() };
    let (w0, w1) = (route_window.0.max(0.0), route_window.1.min(ego_route.length()));
    let Some(window) = ego_route.path.slice(w0, w1) else { return zone };
    let (mut lo, mut hi) = (window.start(), window.start());
    for p in window.points() {
        lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let i0 = ((lo.x - radius) / cell_size).floor() as i64;
    let i1 = ((hi.x + radius) / cell_size).ceil() as i64;
    let j0 = ((lo.y - radius) / cell_size).floor() as i64;
    let j1 = ((hi.y + radius) / cell_size).ceil() as i64;
    for i in i0..=i1 {
        for j in j0..=j1 {
            let center = Point2::new(i as f64 * cell_size, j as f64 * cell_size);
            if let Some(cell) = classify_cell(center, &window, w0, radius, obs) {
                zone.cells.push(cell);
            }
        }
    }
    zone
}

fn classify_cell(center: Point2, window: &Polyline, w0: f64, radius: f64, obs: &impl Region) -> Option<PpzCell> {
    let f = window.project(center);
    let distance = f.d.abs();
    if distance > radius + 1e-12 || obs.contains_point(center) {
        return None;
    }
    Some(PpzCell { center, closest_route_s: w0 + f.s, distance_to_route: distance })
}

/// Route window for pedestrian search: from the ego forward by the larger of
/// the stopping distance and `min_lookahead`.
pub fn ppz_window(ego_s: f64, ego_v: f64, decel: f64, min_lookahead: f64) -> (f64, f64) {
    let stopping = ego_v * ego_v / (2.0 * decel);
    (ego_s, ego_s + stopping.max(min_lookahead))
}

/// Dynamic sets for every relevant dynamic node, skipping nodes whose set
/// would be empty.
#[allow(clippy::too_many_arguments)]
pub fn build_all_dynamic_pvs(
    nodes: &[IntersectingNode],
    obs: &impl Region,
    ego_route: &Route,
    ego_s: f64,
    v_max: f64,
    t_pred: f64,
    step: f64,
    map: &LaneMap,
) -> Vec<PhantomVehicleSet> {
    nodes
        .iter()
        .filter(|n| !n.is_static() && n.is_relevant())
        .filter(|n| n.boundary_sense == crate::nodes::BoundarySense::LeavingOcclusion)
        .filter_map(|n| build_dynamic_pvs(n, obs, ego_route, ego_s, v_max, t_pred, step, map))
        .filter(|p| p.length() > 0.0)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Polygon;
    use crate::nodes::{BoundarySense, Motion, NodeKind, Relevance};
    use crate::scenario::{build_route, Lane};

    /// Ego drives east along y=0; the crossing lane runs north along x=100
    /// and enters the ego corridor (half width 1.75) at lane s = 148.25.
    fn crossing_map() -> (LaneMap, Route) {
        let lane = |id: &str, a: (f64, f64), b: (f64, f64)| Lane {
            id: id.into(),
            centerline: Polyline::new(vec![Point2::new(a.0, a.1), Point2::new(b.0, b.1)]).unwrap(),
            width: 3.5,
            successors: vec![],
        };
        let map = LaneMap::new(vec![lane("ego", (0.0, 0.0), (200.0, 0.0)), lane("cross", (100.0, -150.0), (100.0, 50.0))])
            .unwrap();
        let route = build_route(&map, &["ego".into()]).unwrap();
        (map, route)
    }

    fn dyn_node(map: &LaneMap, s: f64) -> IntersectingNode {
        IntersectingNode {
            position: map.lane("cross").unwrap().centerline.point_at(s),
            lane_id: "cross".into(),
            s_on_lane: s,
            kind: NodeKind { motion: Motion::Dynamic, relevance: Relevance::Relevant },
            boundary_sense: BoundarySense::LeavingOcclusion,
        }
    }

    /// Visible everywhere except a band of the crossing lane below `y_top`
    /// extending `depth` meters south.
    struct Shadow {
        y_top: f64,
        depth: f64,
    }

    impl Region for Shadow {
        fn contains_point(&self, p: Point2) -> bool {
            !((p.x - 100.0).abs() < 5.0 && p.y < self.y_top && p.y > self.y_top - self.depth)
        }
    }

    const CONFLICT: f64 = 148.25;

    #[test]
    fn occlusion_boundary_binds() {
        let (map, route) = crossing_map();
        let s_e = CONFLICT - 10.0;
        let y_top = -150.0 + s_e;
        let shadow = Shadow { y_top, depth: 30.0 };
        let node = dyn_node(&map, s_e);
        let pvs = build_dynamic_pvs(&node, &shadow, &route, 0.0, 20.0, 3.0, 0.5, &map).unwrap();
        // oracle: per-point occlusion + reach test on a fine grid
        let mut s = s_e;
        while !shadow.contains_point(map.lane("cross").unwrap().centerline.point_at(s - 1e-3))
            && CONFLICT - (s - 1e-3) <= 60.0
        {
            s -= 1e-3;
        }
        assert!((pvs.s_s - s).abs() < 2e-3);
        assert!((pvs.length() - 30.0).abs() < 1e-6, "{}", pvs.length());
        assert!((pvs.conflict_s_pv - CONFLICT).abs() < 1e-6);
        assert!((pvs.conflict_s_ego - 100.0).abs() < 1e-6);
    }

    #[test]
    fn reach_condition_binds() {
        let (map, route) = crossing_map();
        let s_e = CONFLICT - 10.0;
        let shadow = Shadow { y_top: -150.0 + s_e, depth: 100.0 };
        let node = dyn_node(&map, s_e);
        let pvs = build_dynamic_pvs(&node, &shadow, &route, 0.0, 20.0, 3.0, 0.5, &map).unwrap();
        assert!((pvs.length() - 50.0).abs() < 1e-9, "{}", pvs.length());
        assert!(pvs.length() <= 60.0);
    }

    #[test]
    fn visible_upstream_gives_empty_walk() {
        let (map, route) = crossing_map();
        let node = dyn_node(&map, CONFLICT - 10.0);
        let all_visible = Polygon::oriented_rect(Point2::new(100.0, 0.0), 0.0, 500.0, 500.0);
        let pvs = build_dynamic_pvs(&node, &all_visible, &route, 0.0, 20.0, 3.0, 0.5, &map).unwrap();
        assert_eq!(pvs.s_s, pvs.s_e);
    }

    #[test]
    fn static_pvs_is_degenerate() {
        let (map, route) = crossing_map();
        let node = IntersectingNode {
            position: Point2::new(42.0, 0.0),
            lane_id: "ego".into(),
            s_on_lane: 42.0,
            kind: NodeKind { motion: Motion::Static, relevance: Relevance::Relevant },
            boundary_sense: BoundarySense::EnteringOcclusion,
        };
        let pvs = build_static_pvs(&node, &route, &map).unwrap();
        assert_eq!((pvs.s_s, pvs.s_e), (42.0, 42.0));
        assert_eq!(pvs.kind, PvsKind::Static);
        let at_bumper = IntersectingNode { position: Point2::new(0.0, 0.0), s_on_lane: 0.0, ..node.clone() };
        let pvs0 = build_static_pvs(&at_bumper, &route, &map).unwrap();
        assert_eq!((pvs0.s_e, pvs0.conflict_s_ego), (0.0, 0.0));
        let irrelevant = IntersectingNode { kind: NodeKind { motion: Motion::Static, relevance: Relevance::Irrelevant }, ..node };
        assert!(build_static_pvs(&irrelevant, &route, &map).is_none());
    }

    #[test]
    fn fully_visible_corridor_has_empty_ppz() {
        let (_, route) = crossing_map();
        let everything = Polygon::oriented_rect(Point2::new(100.0, 0.0), 0.0, 500.0, 500.0);
        let ppz = build_ppz(&everything, &route, 2.0, 2.0, 0.5, (0.0, 40.0));
        assert!(ppz.is_empty());
    }

    #[test]
    fn ppz_behind_parked_car() {
        let (_, route) = crossing_map();
        // hand-built visibility: everything except the shadow strip y in [-8, -2], x in [20, 30]
        struct Behind;
        impl Region for Behind {
            fn contains_point(&self, p: Point2) -> bool {
                !(p.x >= 20.0 && p.x <= 30.0 && p.y <= -2.0 && p.y >= -8.0)
            }
        }
        let ppz = build_ppz(&Behind, &route, 2.0, 2.0, 0.5, (0.0, 60.0));
        assert!(!ppz.is_empty());
        for c in &ppz.cells {
            // per-cell distance + containment oracle
            assert!(c.center.y.abs() <= 4.0 + 1e-12);
            assert!(!Behind.contains_point(c.center));
            assert!((c.distance_to_route - c.center.y.abs()).abs() < 1e-9);
            assert!((c.closest_route_s - c.center.x).abs() < 1e-9);
        }
        // cell centres at exactly 4 m are kept (closed reach set)
        assert!(ppz.cells.iter().any(|c| (c.center.y + 4.0).abs() < 1e-12));
        let expected = 21 * 5; // x = 20..30 step .5, y = -4..-2 step .5
        assert_eq!(ppz.cells.len(), expected);
    }
}

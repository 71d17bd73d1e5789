//! One perception-to-directive cycle: visibility, lane nodes, phantom
//! vehicles and pedestrians, route risk, clusters and speed directives.

use crate::geometry::{build_visibility_polygon, GeometryError, Point2, Polygon, VisibilityPolygon};
use crate::nodes::{classify_relevance, classify_static_dynamic, intersect_region_with_lanes, IntersectingNode};
use crate::risk::{
    filter_far_pvs, pedestrian_risk_profile, project_pvs_risk_window, LateralModel, RiskProfile, SrqParams,
};
use crate::scenario::{ScenarioConfig, ScenarioParams};
use crate::strategy::{
    cluster_risk, directives_from_clusters, static_stop_directive, RiskCluster, SpeedLimitDirective,
    SpeedLimitParams, DEFAULT_APPROACH_DECEL, DEFAULT_GAP_TOLERANCE,
};
use crate::zones::{
    build_all_dynamic_pvs, build_ppz, build_static_pvs, ppz_window, PhantomPedestrianZone, PhantomVehicleSet,
    DEFAULT_CELL_SIZE, DEFAULT_WALK_STEP,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssessmentConfig {
    /// Angular spacing of the visibility sweep's fill rays (radians).
    pub angular_resolution: f64,
    pub walk_step: f64,
    pub sample_step: f64,
    pub cell_size: f64,
    /// Far-filter horizon: `max(k_threshold * v, far_floor)` metres ahead.
    pub k_threshold: f64,
    pub far_floor: f64,
    pub gap_tolerance: f64,
    /// Clustering floor as a fraction of `c_th_min`.
    pub min_risk_fraction: f64,
    pub approach_decel: f64,
    pub static_brake: f64,
    pub static_standoff: f64,
    /// Deceleration assumed when sizing the pedestrian search window.
    pub ppz_decel: f64,
    pub ppz_min_lookahead: f64,
    /// Half-width of the route window around each vehicle conflict, as a
    /// multiple of lane width.
    pub conflict_window_lanes: f64,
}

impl Default for AssessmentConfig {
    fn default() -> Self {
        Self {
            angular_resolution: 1.0_f64.to_radians(),
            walk_step: DEFAULT_WALK_STEP,
            sample_step: 0.5,
            cell_size: DEFAULT_CELL_SIZE,
            k_threshold: 8.0,
            far_floor: 20.0,
            gap_tolerance: DEFAULT_GAP_TOLERANCE,
            min_risk_fraction: 0.01,
            approach_decel: DEFAULT_APPROACH_DECEL,
            static_brake: 4.0,
            static_standoff: 2.0,
            ppz_decel: 4.0,
            ppz_min_lookahead: 20.0,
            conflict_window_lanes: 2.0,
        }
    }
}

/// What the ego knows at the start of a cycle.
#[derive(Debug, Clone, Copy)]
pub struct EgoView<'a> {
    pub route_s: f64,
    pub v: f64,
    pub sensor_origin: Point2,
    /// Footprints of currently visible vehicles (nodes near them are
    /// explained by the vehicle, not by occlusion).
    pub visible_vehicles: &'a [Polygon],
}

#[derive(Debug, Clone)]
pub struct Assessment {
    pub nodes: Vec<IntersectingNode>,
    pub static_pvs: Option<PhantomVehicleSet>,
    pub dynamic_pvs: Vec<PhantomVehicleSet>,
    pub ppz: PhantomPedestrianZone,
    pub profile: RiskProfile,
    pub clusters: Vec<RiskCluster>,
    /// Directives in route coordinates of the ego reference point.
    pub directives: Vec<SpeedLimitDirective>,
}

impl Assessment {
    /// Risk summed over `[from, to]` along the route.
    pub fn risk_ahead(&self, from: f64, to: f64) -> f64 {
        self.profile.risk_between(from, to)
    }
}

/// Full cycle including visibility construction.
pub fn assess(
    scn: &ScenarioConfig,
    params: &ScenarioParams,
    view: &EgoView<'_>,
    cfg: &AssessmentConfig,
) -> Result<(VisibilityPolygon, Assessment), GeometryError> {
    let vis = build_visibility_polygon(view.sensor_origin, &scn.obstacles, params.sensor_range, cfg.angular_resolution)?;
    let a = assess_with_visibility(scn, params, view, &vis, cfg);
    Ok((vis, a))
}

/// Cycle from a precomputed observable region.
pub fn assess_with_visibility(
    scn: &ScenarioConfig,
    params: &ScenarioParams,
    view: &EgoView<'_>,
    vis: &VisibilityPolygon,
    cfg: &AssessmentConfig,
) -> Assessment {
    let route = &scn.ego_route;
    let map = &scn.lane_map;
    let t = params.t_pred;

    let mut nodes = intersect_region_with_lanes(vis.polygon(), vis, map, view.visible_vehicles, params.clearance);
    classify_static_dynamic(&mut nodes, route, view.route_s, params.road_speed_limit, t);
    classify_relevance(&mut nodes, route, view.route_s, t, params.v_max_pv, map);

    let static_pvs = nodes
        .iter()
        .filter(|n| n.is_static() && n.is_relevant())
        .find_map(|n| build_static_pvs(n, route, map));

    let dynamic = build_all_dynamic_pvs(&nodes, vis, route, view.route_s, params.v_max_pv, t, cfg.walk_step, map);
    let dynamic_pvs = filter_far_pvs(
        dynamic,
        view.route_s,
        view.v,
        static_pvs.as_ref().map(|p| p.conflict_s_ego),
        cfg.k_threshold,
        cfg.far_floor,
    );

    let mut profiles = Vec::with_capacity(dynamic_pvs.len() + 1);
    for (i, pvs) in dynamic_pvs.iter().enumerate() {
        let Ok(srq) = SrqParams::new(params.v_max_pv, t, pvs.s_s, pvs.s_e) else { continue };
        let width = map.lane(&pvs.lane_id).map_or(3.5, |l| l.width);
        let Ok(model) = LateralModel::new(width, params.confidence) else { continue };
        profiles.push(project_pvs_risk_window(
            pvs,
            route,
            &srq,
            &model,
            cfg.sample_step,
            cfg.conflict_window_lanes * width,
            i,
        ));
    }

    let window = ppz_window(view.route_s, view.v, cfg.ppz_decel, cfg.ppz_min_lookahead);
    let mut ppz = build_ppz(vis, route, params.v_max_pp, t, cfg.cell_size, window);
    // hidden pedestrians stand beside obstacles, not inside them
    ppz.cells.retain(|c| !scn.obstacles.iter().any(|o| o.contains(c.center)));
    let pp_reach = params.v_max_pp * t;
    profiles.push(pedestrian_risk_profile(&ppz, route, params.v_max_pp, t, pp_reach, cfg.sample_step));

    let profile = RiskProfile::combine(profiles.iter(), cfg.sample_step);
    let limits = SpeedLimitParams::from(params);
    let clusters = cluster_risk(&profile, cfg.gap_tolerance, limits.c_th_min * cfg.min_risk_fraction);
    let mut directives = directives_from_clusters(&clusters, &limits, cfg.approach_decel);
    directives.extend(static_stop_directive(static_pvs.as_ref(), cfg.static_brake, cfg.static_standoff));

    Assessment { nodes, static_pvs, dynamic_pvs, ppz, profile, clusters, directives }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Polyline;
    use crate::scenario::{build_route, EgoStart, Lane, LaneMap};

    fn lane(id: &str, a: (f64, f64), b: (f64, f64)) -> Lane {
        Lane {
            id: id.into(),
            centerline: Polyline::new(vec![Point2::new(a.0, a.1), Point2::new(b.0, b.1)]).unwrap(),
            width: 3.5,
            successors: vec![],
        }
    }

    /// Ego heads north on x=0; a lane from the west crosses at y=60; a
    /// building hides the western approach.
    fn blind_crossing() -> ScenarioConfig {
        let map = LaneMap::new(vec![lane("ego", (0.0, 0.0), (0.0, 150.0)), lane("cross", (-100.0, 60.0), (50.0, 60.0))])
            .unwrap();
        let route = build_route(&map, &["ego".into()]).unwrap();
        let building = Polygon::new(vec![
            Point2::new(-40.0, 20.0),
            Point2::new(-4.0, 20.0),
            Point2::new(-4.0, 56.0),
            Point2::new(-40.0, 56.0),
        ])
        .unwrap();
        let mut params = ScenarioParams::with_road_limit(30.0 / 3.6);
        params.c_th_min = 100.0;
        params.c_th_max = 2000.0;
        ScenarioConfig {
            name: "blind".into(),
            lane_map: map,
            ego_route: route,
            ego_start: EgoStart { s: 0.0, v: 8.0 },
            obstacles: vec![building],
            agents: vec![],
            params,
        }
    }

    #[test]
    fn hidden_crossing_yields_capped_cluster() {
        let scn = blind_crossing();
        let view = EgoView { route_s: 35.0, v: 8.0, sensor_origin: Point2::new(0.0, 37.0), visible_vehicles: &[] };
        let (_, a) = assess(&scn, &scn.params, &view, &AssessmentConfig::default()).unwrap();
        assert_eq!(a.dynamic_pvs.len(), 1);
        assert_eq!(a.dynamic_pvs[0].lane_id, "cross");
        let c = a.clusters.iter().find(|c| (c.s_min()..=c.s_max()).contains(&60.0)).expect("cluster at crossing");
        assert!((c.p_limit_s - 60.0).abs() < 3.0, "{}", c.p_limit_s);
        let d = a.directives.iter().find(|d| d.kind == crate::strategy::DirectiveKind::Occlusion).unwrap();
        assert!(d.v_limit < scn.params.v_occ_max + 1e-9 && d.v_limit >= scn.params.v_occ_min);
    }

    #[test]
    fn open_crossing_has_no_vehicle_risk() {
        let mut scn = blind_crossing();
        scn.obstacles.clear();
        let view = EgoView { route_s: 35.0, v: 8.0, sensor_origin: Point2::new(0.0, 37.0), visible_vehicles: &[] };
        let (_, a) = assess(&scn, &scn.params, &view, &AssessmentConfig::default()).unwrap();
        assert!(a.dynamic_pvs.is_empty());
        assert!(a.ppz.is_empty());
        assert!(a.directives.is_empty());
    }

    #[test]
    fn over_approximating_thresholds_stop_at_every_cluster() {
        let scn = blind_crossing();
        let mut params = scn.params.clone();
        params.c_th_min = 0.0;
        params.v_occ_min = 0.0;
        params.v_occ_max = 0.0;
        let view = EgoView { route_s: 35.0, v: 8.0, sensor_origin: Point2::new(0.0, 37.0), visible_vehicles: &[] };
        let (_, a) = assess(&scn, &params, &view, &AssessmentConfig::default()).unwrap();
        assert!(!a.clusters.is_empty());
        assert_eq!(a.directives.len(), a.clusters.len());
        assert!(a.directives.iter().all(|d| d.v_limit == 0.0));
    }
}

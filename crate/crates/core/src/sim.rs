//! Closed-loop simulation: a point-kinematic ego that follows its speed plan
//! along a fixed route, constant-speed hidden agents on their own paths,
//! and per-run metrics. Runs are deterministic given the scenario, variant
//! and seed; batches run in parallel with an order-preserving reduction.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::assessment::{Assessment, AssessmentConfig, EgoView};
use crate::geometry::{Point2, Polygon, Polyline, VisibilityPolygon};
use crate::scenario::{AgentKind, ScenarioConfig, ScenarioParams};
use crate::strategy::{
    CurvatureLimit, DirectiveKind, EgoKinematics, PjsoPlanner, PlannerConfig, SpeedLimitDirective, VelocityPlan,
};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MethodVariant {
    /// Risk-scaled speed limits from occlusion assessment.
    Proposed,
    /// Reacts only to agents it can see.
    Baseline1,
    /// Over-approximation: every risk cluster is a stop.
    Baseline3,
}

impl MethodVariant {
    pub const ALL: [MethodVariant; 3] = [MethodVariant::Proposed, MethodVariant::Baseline1, MethodVariant::Baseline3];

    pub fn name(self) -> &'static str {
        match self {
            MethodVariant::Proposed => "proposed",
            MethodVariant::Baseline1 => "baseline1",
            MethodVariant::Baseline3 => "baseline3",
        }
    }

    pub fn uses_occlusion(self) -> bool {
        self != MethodVariant::Baseline1
    }

    /// Scenario parameters as this variant sees them.
    pub fn effective_params(self, base: &ScenarioParams) -> ScenarioParams {
        let mut p = base.clone();
        if self == MethodVariant::Baseline3 {
            p.c_th_min = 0.0;
            p.v_occ_min = 0.0;
            p.v_occ_max = 0.0;
        }
        p
    }
}

impl FromStr for MethodVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "proposed" => Ok(MethodVariant::Proposed),
            "baseline1" => Ok(MethodVariant::Baseline1),
            "baseline3" => Ok(MethodVariant::Baseline3),
            other => Err(format!("unknown variant '{other}' (expected proposed, baseline1 or baseline3)")),
        }
    }
}

impl std::fmt::Display for MethodVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SimConfig {
    pub tick: f64,
    /// Ticks between risk assessment / replanning cycles.
    pub replan_every: usize,
    pub planner: PlannerConfig,
    pub assessment: AssessmentConfig,
    pub freeze_window: f64,
    pub freeze_v_eps: f64,
    pub emergency_decel: f64,
    /// Deceleration shaping the approach to a yield stop line.
    pub yield_decel: f64,
    /// Agents further than this (in time) from the conflict are ignored.
    pub yield_horizon: f64,
    /// Extra time the ego wants between clearing a conflict and the
    /// agent's arrival before it goes first.
    pub yield_buffer: f64,
    pub conflict_margin: f64,
    pub pedestrian_radius: f64,
    pub agent_length: f64,
    pub agent_width: f64,
    pub record_trace: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            tick: 0.05,
            replan_every: 4,
            planner: PlannerConfig::default(),
            assessment: AssessmentConfig::default(),
            freeze_window: 20.0,
            freeze_v_eps: 0.1,
            emergency_decel: 8.0,
            yield_decel: 5.5,
            yield_horizon: 8.0,
            yield_buffer: 1.5,
            conflict_margin: 0.5,
            pedestrian_radius: 0.3,
            agent_length: 4.5,
            agent_width: 1.8,
            record_trace: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgoState {
    pub route_s: f64,
    pub v: f64,
    pub a: f64,
    pub length: f64,
    pub width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Footprint {
    Rect(Polygon4),
    Disc { center: Point2, radius: f64 },
}

/// Four-corner convex footprint (counter-clockwise).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Polygon4(pub [Point2; 4]);

impl Polygon4 {
    pub fn oriented(center: Point2, heading: f64, length: f64, width: f64) -> Self {
        let f = Point2::from_polar(length / 2.0, heading);
        let l = Point2::from_polar(width / 2.0, heading + std::f64::consts::FRAC_PI_2);
        Self([center - f - l, center + f - l, center + f + l, center - f + l])
    }

    pub fn to_polygon(self) -> Polygon {
        Polygon::from_ccw_unchecked(self.0.to_vec())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub kind: AgentKind,
    pub path_s: f64,
    pub v: f64,
    pub footprint: Footprint,
}

/// Closed separating-axis overlap test for convex quadrilaterals; touching
/// counts as overlap.
pub fn rects_overlap(a: &Polygon4, b: &Polygon4) -> bool {
    for poly in [a, b] {
        for i in 0..4 {
            let e = poly.0[(i + 1) % 4] - poly.0[i];
            let axis = e.perp();
            let (amin, amax) = project(a, axis);
            let (bmin, bmax) = project(b, axis);
            if amax < bmin || bmax < amin {
                return false;
            }
        }
    }
    true
}

fn project(p: &Polygon4, axis: Point2) -> (f64, f64) {
    p.0.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        let d = v.dot(axis);
        (lo.min(d), hi.max(d))
    })
}

fn disc_overlaps_rect(center: Point2, radius: f64, rect: &Polygon4) -> bool {
    let inside = (0..4).all(|i| (rect.0[(i + 1) % 4] - rect.0[i]).cross(center - rect.0[i]) >= 0.0);
    inside
        || (0..4).any(|i| crate::geometry::point_segment_distance(center, rect.0[i], rect.0[(i + 1) % 4]) <= radius)
}

pub fn ego_footprint(ego: &EgoState, route: &Polyline) -> Polygon4 {
    Polygon4::oriented(route.point_at(ego.route_s), route.heading_at(ego.route_s), ego.length, ego.width)
}

/// True iff the ego footprint touches or overlaps any agent footprint.
pub fn detect_collision(ego: &EgoState, route: &Polyline, agents: &[AgentState]) -> bool {
    let fp = ego_footprint(ego, route);
    agents.iter().any(|a| match &a.footprint {
        Footprint::Rect(r) => rects_overlap(&fp, r),
        Footprint::Disc { center, radius } => disc_overlaps_rect(*center, *radius, &fp),
    })
}

/// Time-average of `max(0, |a| − a_th)` over a uniformly sampled trace
/// `(t, a)`, integrated with the trapezoid rule.
pub fn discomfort_score(accel_trace: &[(f64, f64)], a_th: f64) -> f64 {
    if accel_trace.len() < 2 {
        return 0.0;
    }
    let excess = |a: f64| (a.abs() - a_th).max(0.0);
    let integral: f64 =
        accel_trace.windows(2).map(|w| 0.5 * (excess(w[0].1) + excess(w[1].1)) * (w[1].0 - w[0].0)).sum();
    let span = accel_trace[accel_trace.len() - 1].0 - accel_trace[0].0;
    if span > 0.0 {
        integral / span
    } else {
        0.0
    }
}

/// True iff the goal was not reached, an occlusion directive lies ahead and
/// the speed stayed below `v_eps` for the whole trailing `window`.
pub fn detect_freeze(v_trace: &[(f64, f64)], window: f64, v_eps: f64, goal_reached: bool, directive_ahead: bool) -> bool {
    if goal_reached || !directive_ahead {
        return false;
    }
    let Some(&(t_end, _)) = v_trace.last() else { return false };
    if t_end - v_trace[0].0 < window - 1e-9 {
        return false;
    }
    v_trace.iter().rev().take_while(|&&(t, _)| t >= t_end - window - 1e-9).all(|&(_, v)| v < v_eps)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub s: f64,
    pub v: f64,
    pub a: f64,
    pub active_limit: Option<f64>,
    pub risk_ahead: f64,
}

pub const TRACE_HEADER: &str = "t,s,v,a,active_limit,risk_ahead";

/// Fixed-precision CSV; identical runs give identical bytes.
pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::with_capacity(rows.len() * 48 + 40);
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in rows {
        // adding +0.0 turns a negative zero into "0.0000" rather than "-0.0000"
        let limit = r.active_limit.map_or(String::new(), |v| format!("{:.4}", v + 0.0));
        let _ = writeln!(out, "{:.2},{:.4},{:.4},{:.4},{},{:.4}", r.t, r.s + 0.0, r.v + 0.0, r.a + 0.0, limit, r.risk_ahead + 0.0);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunMetrics {
    pub collided: bool,
    pub discomfort: f64,
    /// Time to the goal; runs that froze or timed out report `max_time`.
    pub traversal_time: f64,
    pub froze: bool,
    pub reached_goal: bool,
    pub peak_abs_accel: f64,
    pub mean_cycle_time_ms: f64,
    pub p99_cycle_time_ms: f64,
}

impl RunMetrics {
    /// Metrics with wall-clock timing stripped, for determinism checks.
    pub fn outcome(&self) -> (bool, f64, f64, bool, bool, f64) {
        (self.collided, self.discomfort, self.traversal_time, self.froze, self.reached_goal, self.peak_abs_accel)
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub metrics: RunMetrics,
    pub trace: Vec<TraceRow>,
    pub cycle_times_ms: Vec<f64>,
}

/// Where an agent's path crosses the ego corridor, in both path and route
/// coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
struct ConflictZone {
    path_lo: f64,
    path_hi: f64,
    route_lo: f64,
    route_hi: f64,
}

#[derive(Debug, Clone)]
struct Agent {
    kind: AgentKind,
    path: Polyline,
    s: f64,
    v: f64,
    length: f64,
    width: f64,
    zone: Option<ConflictZone>,
    visible_since: Option<f64>,
}

impl Agent {
    fn active(&self) -> bool {
        self.s - self.length / 2.0 <= self.path.length()
    }

    fn state(&self, ped_radius: f64) -> AgentState {
        let c = self.path.point_at(self.s);
        let footprint = match self.kind {
            AgentKind::Vehicle => {
                Footprint::Rect(Polygon4::oriented(c, self.path.heading_at(self.s), self.length, self.width))
            }
            AgentKind::Pedestrian => Footprint::Disc { center: c, radius: ped_radius },
        };
        AgentState { kind: self.kind, path_s: self.s, v: self.v, footprint }
    }

    fn seen_by(&self, vis: &VisibilityPolygon, ped_radius: f64) -> bool {
        match self.state(ped_radius).footprint {
            Footprint::Rect(r) => {
                let c = self.path.point_at(self.s);
                vis.contains(c) || r.0.iter().any(|&p| vis.contains(p))
            }
            Footprint::Disc { center, radius } => {
                vis.contains(center)
                    || (0..4).any(|i| {
                        vis.contains(center + Point2::from_polar(radius, i as f64 * std::f64::consts::FRAC_PI_2))
                    })
            }
        }
    }
}

fn conflict_zone(path: &Polyline, route: &Polyline, reach: f64) -> Option<ConflictZone> {
    let step = 0.25;
    let n = (path.length() / step).ceil() as usize;
    let route_len = route.length();
    let mut zone: Option<ConflictZone> = None;
    for i in 0..=n {
        let a = (i as f64 * step).min(path.length());
        let f = route.project(path.point_at(a));
        if f.d.abs() > reach || f.s <= 0.0 || f.s >= route_len {
            continue;
        }
        let z = zone.get_or_insert(ConflictZone { path_lo: a, path_hi: a, route_lo: f.s, route_hi: f.s });
        z.path_lo = z.path_lo.min(a);
        z.path_hi = z.path_hi.max(a);
        z.route_lo = z.route_lo.min(f.s);
        z.route_hi = z.route_hi.max(f.s);
    }
    zone
}

/// One simulated world; advance with [`World::step`].
pub struct World<'a> {
    scn: &'a ScenarioConfig,
    variant: MethodVariant,
    params: ScenarioParams,
    cfg: SimConfig,
    planner: PjsoPlanner,
    curvature: CurvatureLimit,
    pub t: f64,
    pub ego: EgoState,
    agents: Vec<Agent>,
    ticks: usize,
    plan: Option<(f64, VelocityPlan)>,
    directives: Vec<SpeedLimitDirective>,
    last_assessment: Option<Assessment>,
    vis: Option<VisibilityPolygon>,
    stopped_since: Option<f64>,
    accel_trace: Vec<(f64, f64)>,
    pub trace: Vec<TraceRow>,
    pub cycle_times_ms: Vec<f64>,
    pub collided: bool,
    pub froze: bool,
    pub reached_goal: bool,
    pub finished: bool,
}

impl<'a> World<'a> {
    pub fn new(scn: &'a ScenarioConfig, variant: MethodVariant, run_seed: u64, cfg: SimConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
        let params = variant.effective_params(&scn.params);
        let route = &scn.ego_route.path;
        let ego = EgoState {
            route_s: scn.ego_start.s,
            v: scn.ego_start.v,
            a: 0.0,
            length: params.ego_length,
            width: params.ego_width,
        };
        let agents = scn
            .agents
            .iter()
            .map(|spec| {
                let [lo, hi] = spec.speed_range;
                let v = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
                let jitter = if params.spawn_jitter > 0.0 {
                    rng.gen_range(-params.spawn_jitter..=params.spawn_jitter)
                } else {
                    0.0
                };
                let path = scn.agent_polyline(spec);
                let (length, width) = match spec.kind {
                    AgentKind::Vehicle => (cfg.agent_length, cfg.agent_width),
                    AgentKind::Pedestrian => (2.0 * cfg.pedestrian_radius, 2.0 * cfg.pedestrian_radius),
                };
                let reach = ego.width / 2.0 + width / 2.0 + cfg.conflict_margin;
                let zone = conflict_zone(&path, route, reach).map(|mut z| {
                    let pad = length / 2.0 + cfg.conflict_margin;
                    z.route_lo -= width / 2.0 + cfg.conflict_margin;
                    z.route_hi += width / 2.0 + cfg.conflict_margin;
                    z.path_lo -= pad - length / 2.0;
                    z.path_hi += pad - length / 2.0;
                    z
                });
                Agent {
                    kind: spec.kind,
                    path,
                    s: (spec.spawn_s + jitter).max(0.0),
                    v,
                    length,
                    width,
                    zone,
                    visible_since: None,
                }
            })
            .collect();
        let curvature = CurvatureLimit::from_route(&scn.ego_route, params.a_lateral_max, 1.0);
        Self {
            scn,
            variant,
            params,
            cfg,
            planner: PjsoPlanner::new(cfg.planner),
            curvature,
            t: 0.0,
            ego,
            agents,
            ticks: 0,
            plan: None,
            directives: Vec::new(),
            last_assessment: None,
            vis: None,
            stopped_since: None,
            accel_trace: Vec::new(),
            trace: Vec::new(),
            cycle_times_ms: Vec::new(),
            collided: false,
            froze: false,
            reached_goal: false,
            finished: false,
        }
    }

    pub fn agent_states(&self) -> Vec<AgentState> {
        self.agents.iter().filter(|a| a.active()).map(|a| a.state(self.cfg.pedestrian_radius)).collect()
    }

    pub fn visibility(&self) -> Option<&VisibilityPolygon> {
        self.vis.as_ref()
    }

    pub fn directives(&self) -> &[SpeedLimitDirective] {
        &self.directives
    }

    pub fn last_assessment(&self) -> Option<&Assessment> {
        self.last_assessment.as_ref()
    }

    /// Visibility flags of the agents (in scenario order) as of the last
    /// cycle.
    pub fn agent_visibility(&self) -> Vec<bool> {
        self.agents.iter().map(|a| a.visible_since.is_some()).collect()
    }

    fn goal_s(&self) -> f64 {
        self.scn.ego_route.length() - self.ego.length
    }

    fn sensor_origin(&self) -> Point2 {
        let route = &self.scn.ego_route.path;
        route.point_at(self.ego.route_s + self.ego.length / 2.0)
    }

    /// Perception, assessment and planning for the current state.
    fn cycle(&mut self) {
        let started = Instant::now();
        let origin = self.sensor_origin();
        let vis = crate::geometry::build_visibility_polygon(
            origin,
            &self.scn.obstacles,
            self.params.sensor_range,
            self.cfg.assessment.angular_resolution,
        )
        .ok();

        // agent perception
        for agent in &mut self.agents {
            let seen = agent.active() && vis.as_ref().is_some_and(|v| agent.seen_by(v, self.cfg.pedestrian_radius));
            agent.visible_since = match (seen, agent.visible_since) {
                (true, Some(t0)) => Some(t0),
                (true, None) => Some(self.t),
                (false, _) => None,
            };
        }

        let mut directives = Vec::new();
        if self.variant.uses_occlusion() {
            if let Some(vis) = vis.as_ref() {
                let visible_vehicles: Vec<Polygon> = self
                    .agents
                    .iter()
                    .filter(|a| a.visible_since.is_some() && a.kind == AgentKind::Vehicle)
                    .map(|a| match a.state(self.cfg.pedestrian_radius).footprint {
                        Footprint::Rect(r) => r.to_polygon(),
                        Footprint::Disc { .. } => unreachable!("vehicles have rectangular footprints"),
                    })
                    .collect();
                let view = EgoView {
                    route_s: self.ego.route_s + self.ego.length / 2.0,
                    v: self.ego.v,
                    sensor_origin: origin,
                    visible_vehicles: &visible_vehicles,
                };
                let a = crate::assessment::assess_with_visibility(self.scn, &self.params, &view, vis, &self.cfg.assessment);
                directives.extend(a.directives.iter().map(|d| d.shifted(self.ego.length / 2.0)));
                self.last_assessment = Some(a);
            }
        }
        directives.extend(self.yield_directives());
        self.vis = vis;

        let ego = EgoKinematics { s: self.ego.route_s, v: self.ego.v, a: self.ego.a };
        let cruise = self.params.road_speed_limit;
        self.plan = match self.planner.plan(ego, cruise, &directives, Some(&self.curvature)) {
            Ok(plan) => Some((self.t, plan)),
            Err(_) => {
                self.planner.reset();
                None
            }
        };
        self.directives = directives;
        self.cycle_times_ms.push(started.elapsed().as_secs_f64() * 1e3);
    }

    /// Stop lines in front of visible agents that will occupy a conflict
    /// zone before the ego can clear it.
    fn yield_directives(&self) -> Vec<SpeedLimitDirective> {
        let cfg = &self.cfg;
        let ego = &self.ego;
        let front = ego.route_s + ego.length / 2.0;
        let rear = ego.route_s - ego.length / 2.0;
        let mut out = Vec::new();
        for agent in &self.agents {
            let (Some(zone), Some(seen)) = (agent.zone, agent.visible_since) else { continue };
            if !agent.active() || self.t - seen < self.params.reaction_time - 1e-9 {
                continue;
            }
            let agent_rear = agent.s - agent.length / 2.0;
            let agent_front = agent.s + agent.length / 2.0;
            if agent_rear > zone.path_hi || rear > zone.route_hi {
                continue; // one of the two is already through
            }
            if front >= zone.route_lo {
                continue; // committed: stopping now would leave the ego in the zone
            }
            let t_arrive = (zone.path_lo - agent_front).max(0.0) / agent.v.max(1e-3);
            if t_arrive > cfg.yield_horizon {
                continue;
            }
            let t_ego_clear = (zone.route_hi - rear) / ego.v.max(0.1);
            if t_ego_clear + cfg.yield_buffer < t_arrive {
                continue;
            }
            let stop_center = zone.route_lo - cfg.conflict_margin - ego.length / 2.0;
            out.push(SpeedLimitDirective::stop_at(stop_center, cfg.yield_decel, DirectiveKind::Yield));
        }
        out
    }

    fn occlusion_directive_ahead(&self) -> bool {
        self.directives.iter().any(|d| {
            matches!(d.kind, DirectiveKind::Occlusion | DirectiveKind::StaticStop) && d.enforce_to >= self.ego.route_s
        })
    }

    /// Advances the world by one tick.
    pub fn step(&mut self) {
        if self.finished {
            return;
        }
        let dt = self.cfg.tick;
        if self.ticks % self.cfg.replan_every.max(1) == 0 {
            self.cycle();
        }
        let risk_ahead = self.last_assessment.as_ref().map_or(0.0, |a| {
            let front = self.ego.route_s + self.ego.length / 2.0;
            a.risk_ahead(front, front + self.params.sensor_range)
        });
        let active_limit = self
            .directives
            .iter()
            .map(|d| d.cap_at(self.ego.route_s))
            .fold(None, |m: Option<f64>, c| if c.is_finite() { Some(m.map_or(c, |m| m.min(c))) } else { m });
        if self.cfg.record_trace {
            self.trace.push(TraceRow {
                t: self.t,
                s: self.ego.route_s,
                v: self.ego.v,
                a: self.ego.a,
                active_limit,
                risk_ahead,
            });
        }
        self.accel_trace.push((self.t, self.ego.a));

        // ego
        let t_next = self.t + dt;
        match &self.plan {
            Some((t0, plan)) => {
                let st = plan.sample(t_next - t0);
                self.ego.route_s = st.s.max(self.ego.route_s);
                self.ego.v = st.v.max(0.0);
                self.ego.a = if self.ego.v > 0.0 { st.a } else { st.a.max(0.0) };
            }
            None => {
                let v0 = self.ego.v;
                let v1 = (v0 - self.cfg.emergency_decel * dt).max(0.0);
                self.ego.route_s += 0.5 * (v0 + v1) * dt;
                self.ego.v = v1;
                self.ego.a = if v1 > 0.0 { -self.cfg.emergency_decel } else { 0.0 };
            }
        }
        for agent in &mut self.agents {
            agent.s += agent.v * dt;
        }
        self.t = t_next;
        self.ticks += 1;

        if detect_collision(&self.ego, &self.scn.ego_route.path, &self.agent_states()) {
            self.collided = true;
            self.finished = true;
        } else if self.ego.route_s >= self.goal_s() {
            self.reached_goal = true;
            self.finished = true;
        }
        if self.ego.v < self.cfg.freeze_v_eps {
            self.stopped_since.get_or_insert(self.t);
        } else {
            self.stopped_since = None;
        }
        if !self.finished {
            let stalled = self.stopped_since.is_some_and(|t0| self.t - t0 >= self.cfg.freeze_window - 1e-9);
            if stalled && self.occlusion_directive_ahead() {
                self.froze = true;
                self.finished = true;
            } else if self.t >= self.params.max_time - 1e-9 {
                self.finished = true;
            }
        }
        if self.finished {
            self.accel_trace.push((self.t, self.ego.a));
            if self.cfg.record_trace {
                self.trace.push(TraceRow {
                    t: self.t,
                    s: self.ego.route_s,
                    v: self.ego.v,
                    a: self.ego.a,
                    active_limit,
                    risk_ahead,
                });
            }
        }
    }

    pub fn metrics(&self) -> RunMetrics {
        let mut sorted = self.cycle_times_ms.clone();
        sorted.sort_by(f64::total_cmp);
        let mean = if sorted.is_empty() { 0.0 } else { sorted.iter().sum::<f64>() / sorted.len() as f64 };
        RunMetrics {
            collided: self.collided,
            discomfort: discomfort_score(&self.accel_trace, self.params.a_th),
            // a run that never got through is charged the whole time budget
            traversal_time: if self.reached_goal || self.collided { self.t } else { self.params.max_time },
            froze: self.froze,
            reached_goal: self.reached_goal,
            peak_abs_accel: self.accel_trace.iter().fold(0.0, |m, &(_, a)| m.max(a.abs())),
            mean_cycle_time_ms: mean,
            p99_cycle_time_ms: percentile(&sorted, 0.99),
        }
    }
}

/// Nearest-rank percentile of an ascending slice.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Seed of run `index` within a batch seeded with `seed`.
pub fn run_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add((index as u64).wrapping_mul(GOLDEN))
}

/// Simulates one run to termination.
pub fn simulate(scn: &ScenarioConfig, variant: MethodVariant, seed: u64, cfg: SimConfig) -> RunResult {
    let mut world = World::new(scn, variant, seed, cfg);
    while !world.finished {
        world.step();
    }
    RunResult { metrics: world.metrics(), trace: std::mem::take(&mut world.trace), cycle_times_ms: world.cycle_times_ms }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub n_runs: usize,
    pub collision_rate: f64,
    pub mean_discomfort: f64,
    /// Mean termination time over runs that did not end in a collision.
    pub mean_traversal_time: f64,
    pub freeze_rate: f64,
    pub mean_cycle_time_ms: f64,
    pub p99_cycle_time_ms: f64,
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    pub runs: Vec<RunMetrics>,
    pub aggregate: Aggregate,
}

pub fn aggregate(runs: &[RunMetrics], cycle_times_ms: &[f64]) -> Aggregate {
    let n = runs.len().max(1) as f64;
    let survivors: Vec<&RunMetrics> = runs.iter().filter(|r| !r.collided).collect();
    let mut sorted = cycle_times_ms.to_vec();
    sorted.sort_by(f64::total_cmp);
    Aggregate {
        n_runs: runs.len(),
        collision_rate: runs.iter().filter(|r| r.collided).count() as f64 / n,
        mean_discomfort: runs.iter().map(|r| r.discomfort).sum::<f64>() / n,
        mean_traversal_time: if survivors.is_empty() {
            f64::NAN
        } else {
            survivors.iter().map(|r| r.traversal_time).sum::<f64>() / survivors.len() as f64
        },
        freeze_rate: runs.iter().filter(|r| r.froze).count() as f64 / n,
        mean_cycle_time_ms: if sorted.is_empty() { 0.0 } else { sorted.iter().sum::<f64>() / sorted.len() as f64 },
        p99_cycle_time_ms: percentile(&sorted, 0.99),
    }
}

/// `n_runs` seeded runs in parallel; results keep run order.
pub fn run_batch(scn: &ScenarioConfig, variant: MethodVariant, n_runs: usize, seed: u64, cfg: SimConfig) -> BatchResult {
    let cfg = SimConfig { record_trace: false, ..cfg };
    let results: Vec<RunResult> =
        (0..n_runs).into_par_iter().map(|i| simulate(scn, variant, run_seed(seed, i), cfg)).collect();
    let cycles: Vec<f64> = results.iter().flat_map(|r| r.cycle_times_ms.iter().copied()).collect();
    let runs: Vec<RunMetrics> = results.iter().map(|r| r.metrics).collect();
    let aggregate = aggregate(&runs, &cycles);
    BatchResult { runs, aggregate }
}

//! Turning route risk into speed-limit directives, and planning a velocity
//! profile that honours them as hard constraints.
//!
//! Risk samples along the route are grouped into clusters; each cluster
//! yields one speed cap placed at its risk-weighted position, with the cap
//! interpolated linearly between two risk thresholds. The planner is a
//! piecewise-jerk speed optimisation solved as a dense convex QP.

use thiserror::Error;

use crate::qp::{AdmmSettings, AdmmSolver, Dense, QpError, QpProblem, QpStatus};
use crate::risk::RiskProfile;
use crate::scenario::{Route, ScenarioParams};
use crate::zones::PhantomVehicleSet;

pub const DEFAULT_GAP_TOLERANCE: f64 = 3.0;
/// Deceleration used to shape the approach envelope in front of an
/// occlusion limit.
pub const DEFAULT_APPROACH_DECEL: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterSample {
    pub route_s: f64,
    pub risk: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskCluster {
    pub id: usize,
    pub members: Vec<ClusterSample>,
    pub r_total: f64,
    /// Risk-weighted mean position of the members.
    pub p_limit_s: f64,
}

impl RiskCluster {
    pub fn s_min(&self) -> f64 {
        self.members.first().map_or(self.p_limit_s, |m| m.route_s)
    }

    pub fn s_max(&self) -> f64 {
        self.members.last().map_or(self.p_limit_s, |m| m.route_s)
    }
}

/// Maximal runs of samples with `risk >= min_risk` (and strictly positive)
/// whose consecutive spacing is at most `gap_tolerance`.
pub fn cluster_risk(profile: &RiskProfile, gap_tolerance: f64, min_risk: f64) -> Vec<RiskCluster> {
    let mut clusters: Vec<RiskCluster> = Vec::new();
    let mut current: Vec<ClusterSample> = Vec::new();
    let flush = |current: &mut Vec<ClusterSample>, clusters: &mut Vec<RiskCluster>| {
        if current.is_empty() {
            return;
        }
        let members = std::mem::take(current);
        let r_total: f64 = members.iter().map(|m| m.risk).sum();
        let p = members.iter().map(|m| m.risk * m.route_s).sum::<f64>() / r_total;
        // guard the convex combination against rounding
        let p = p.clamp(members[0].route_s, members[members.len() - 1].route_s);
        clusters.push(RiskCluster { id: clusters.len(), members, r_total, p_limit_s: p });
    };
    for sample in &profile.samples {
        if !(sample.risk > 0.0 && sample.risk >= min_risk) {
            continue;
        }
        if let Some(last) = current.last() {
            if sample.route_s - last.route_s > gap_tolerance {
                flush(&mut current, &mut clusters);
            }
        }
        current.push(ClusterSample { route_s: sample.route_s, risk: sample.risk });
    }
    flush(&mut current, &mut clusters);
    clusters
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedLimitParams {
    pub c_th_min: f64,
    pub c_th_max: f64,
    pub v_occ_min: f64,
    pub v_occ_max: f64,
}

impl From<&ScenarioParams> for SpeedLimitParams {
    fn from(p: &ScenarioParams) -> Self {
        Self { c_th_min: p.c_th_min, c_th_max: p.c_th_max, v_occ_min: p.v_occ_min, v_occ_max: p.v_occ_max }
    }
}

/// Speed cap for a cluster's total risk: no cap below `c_th_min`, a linear
/// ramp from `v_occ_max` down to `v_occ_min` across the thresholds, and
/// `v_occ_min` beyond.
pub fn speed_limit_value(r_total: f64, p: &SpeedLimitParams) -> Option<f64> {
    if r_total < p.c_th_min {
        return None;
    }
    if r_total >= p.c_th_max {
        return Some(p.v_occ_min);
    }
    let span = p.c_th_max - p.c_th_min;
    let frac = if span > 0.0 { (r_total - p.c_th_min) / span } else { 1.0 };
    Some(p.v_occ_max - frac * (p.v_occ_max - p.v_occ_min))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectiveKind {
    Occlusion,
    StaticStop,
    /// Stop line in front of a visible crossing agent.
    Yield,
}

/// A speed cap over `[enforce_from, enforce_to]` along the route, preceded
/// by a braking envelope so the cap is reachable at constant deceleration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedLimitDirective {
    pub route_s: f64,
    pub v_limit: f64,
    pub enforce_from: f64,
    pub enforce_to: f64,
    pub approach_decel: f64,
    pub kind: DirectiveKind,
}

impl SpeedLimitDirective {
    /// Cap applying to a point limit at `route_s` held over `extent` metres.
    pub fn point(route_s: f64, v_limit: f64, extent: f64, approach_decel: f64) -> Self {
        Self {
            route_s,
            v_limit,
            enforce_from: route_s,
            enforce_to: route_s + extent.max(0.0),
            approach_decel,
            kind: DirectiveKind::Occlusion,
        }
    }

    /// Standstill from `stop_s` onward.
    pub fn stop_at(stop_s: f64, decel: f64, kind: DirectiveKind) -> Self {
        Self {
            route_s: stop_s,
            v_limit: 0.0,
            enforce_from: stop_s,
            enforce_to: f64::INFINITY,
            approach_decel: decel,
            kind,
        }
    }

    pub fn cap_at(&self, s: f64) -> f64 {
        self.cap_over(s, s)
    }

    /// Tightest cap over the route interval `[lo, hi]`.
    pub fn cap_over(&self, lo: f64, hi: f64) -> f64 {
        if hi < self.enforce_from {
            let gap = self.enforce_from - hi;
            (self.v_limit * self.v_limit + 2.0 * self.approach_decel * gap).sqrt()
        } else if lo > self.enforce_to {
            f64::INFINITY
        } else {
            self.v_limit
        }
    }

    /// Plane `e·v + a·h <= (vl² + 2·a·from + e²) / 2` supporting the convex
    /// set `v² + 2·a·h <= vl² + 2·a·from` at its boundary point of speed `e`.
    ///
    /// A zero-speed envelope has a vertical tangent at its line, where cuts
    /// converge only linearly; its planes are therefore taken against a line
    /// pulled back by [`STOP_MARGIN`], which leaves slack at the line.
    fn envelope_plane(&self, e: f64) -> Cut {
        let a = self.approach_decel;
        let from = if self.v_limit <= 0.0 { self.enforce_from - STOP_MARGIN } else { self.enforce_from };
        let c = self.v_limit * self.v_limit + 2.0 * a * from;
        Cut { v: e, h: a, rhs: 0.5 * (c + e * e) }
    }

    /// The same directive expressed for a reference point `offset` metres
    /// ahead of the route coordinate (e.g. the vehicle front).
    pub fn shifted(&self, offset: f64) -> Self {
        Self {
            route_s: self.route_s - offset,
            enforce_from: self.enforce_from - offset,
            enforce_to: self.enforce_to - offset,
            ..*self
        }
    }
}

/// One occlusion directive per cluster whose risk reaches `c_th_min`,
/// enforced across the cluster's extent.
pub fn directives_from_clusters(
    clusters: &[RiskCluster],
    params: &SpeedLimitParams,
    approach_decel: f64,
) -> Vec<SpeedLimitDirective> {
    clusters
        .iter()
        .filter_map(|c| {
            speed_limit_value(c.r_total, params).map(|v| SpeedLimitDirective {
                route_s: c.p_limit_s,
                v_limit: v,
                enforce_from: c.s_min(),
                enforce_to: c.s_max(),
                approach_decel,
                kind: DirectiveKind::Occlusion,
            })
        })
        .collect()
}

/// Standstill at `standoff` before a hidden vehicle assumed parked at the
/// static node, approached on a braking envelope of `a_brake`.
pub fn static_stop_directive(
    static_pvs: Option<&PhantomVehicleSet>,
    a_brake: f64,
    standoff: f64,
) -> Vec<SpeedLimitDirective> {
    match static_pvs {
        Some(pvs) => {
            let stop = pvs.conflict_s_ego - standoff;
            let mut d = SpeedLimitDirective::stop_at(stop, a_brake, DirectiveKind::StaticStop);
            d.route_s = pvs.conflict_s_ego;
            vec![d]
        }
        None => Vec::new(),
    }
}

/// Lateral-acceleration speed cap sampled along a route.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureLimit {
    pub a_lateral_max: f64,
    pub step: f64,
    kappa: Vec<f64>,
}

impl CurvatureLimit {
    pub fn from_route(route: &Route, a_lateral_max: f64, step: f64) -> Self {
        let len = route.length();
        let n = (len / step).ceil() as usize + 1;
        let kappa = (0..n)
            .map(|i| route.path.curvature_at((i as f64 * step).min(len), step).abs())
            .collect();
        Self { a_lateral_max, step, kappa }
    }

    pub fn cap_over(&self, lo: f64, hi: f64) -> f64 {
        if self.kappa.is_empty() {
            return f64::INFINITY;
        }
        let last = self.kappa.len() - 1;
        let i0 = ((lo / self.step).floor().max(0.0) as usize).min(last);
        let i1 = ((hi / self.step).ceil().max(0.0) as usize).min(last);
        let k = self.kappa[i0..=i1.max(i0)].iter().fold(0.0_f64, |m, &k| m.max(k));
        if k <= 1e-9 {
            f64::INFINITY
        } else {
            (self.a_lateral_max / k).sqrt()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostWeights {
    pub w_a: f64,
    pub w_j: f64,
    pub w_v: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self { w_a: 1.0, w_j: 10.0, w_v: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionBounds {
    pub a_min: f64,
    pub a_max: f64,
    pub j_min: f64,
    pub j_max: f64,
}

impl Default for MotionBounds {
    fn default() -> Self {
        Self { a_min: -6.0, a_max: 2.5, j_min: -10.0, j_max: 10.0 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PlannerConfig {
    pub horizon: f64,
    pub dt: f64,
    pub weights: CostWeights,
    pub bounds: MotionBounds,
    pub max_passes: usize,
    pub solver: AdmmSettings,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            horizon: 6.0,
            dt: 0.2,
            weights: CostWeights::default(),
            bounds: MotionBounds::default(),
            max_passes: 8,
            solver: AdmmSettings::default(),
        }
    }
}

impl PlannerConfig {
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EgoKinematics {
    pub s: f64,
    pub v: f64,
    pub a: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanState {
    pub t: f64,
    pub s: f64,
    pub v: f64,
    pub a: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VelocityPlan {
    pub dt: f64,
    pub states: Vec<PlanState>,
    pub jerk: Vec<f64>,
    /// Speed cap over each state's route interval at the planned
    /// positions (`caps[0]` is unconstrained).
    pub caps: Vec<f64>,
    /// Speed reference each state was tracked against.
    pub reference: Vec<f64>,
    pub objective: f64,
    pub passes: usize,
    /// Solver iterations summed over all passes.
    pub iterations: usize,
}

impl VelocityPlan {
    /// State at time `t`, exact under the piecewise-constant jerk model;
    /// clamps to the plan's time span.
    pub fn sample(&self, t: f64) -> PlanState {
        let last = self.states.len() - 1;
        if t <= 0.0 || last == 0 {
            return self.states[0];
        }
        let k = ((t / self.dt).floor() as usize).min(last - 1);
        let tau = (t - k as f64 * self.dt).clamp(0.0, self.dt);
        let st = self.states[k];
        let j = self.jerk[k];
        PlanState {
            t,
            s: st.s + st.v * tau + st.a * tau * tau / 2.0 + j * tau.powi(3) / 6.0,
            v: st.v + st.a * tau + j * tau * tau / 2.0,
            a: st.a + j * tau,
        }
    }

    /// Route position where the speed first drops to `v_target + tol`
    /// (linear interpolation between states).
    pub fn first_s_reaching(&self, v_target: f64, tol: f64) -> Option<f64> {
        let thr = v_target + tol;
        if self.states[0].v <= thr {
            return Some(self.states[0].s);
        }
        self.states.windows(2).find_map(|w| {
            (w[1].v <= thr).then(|| {
                let f = (w[0].v - thr) / (w[0].v - w[1].v);
                w[0].s + f * (w[1].s - w[0].s)
            })
        })
    }

    /// Speed at route position `s` (linear interpolation), if covered.
    pub fn v_at_s(&self, s: f64) -> Option<f64> {
        self.states.windows(2).find_map(|w| {
            (w[0].s <= s && s <= w[1].s).then(|| {
                let span = w[1].s - w[0].s;
                if span <= 0.0 {
                    w[0].v.min(w[1].v)
                } else {
                    w[0].v + (s - w[0].s) / span * (w[1].v - w[0].v)
                }
            })
        })
    }
}

/// Plan cost `w_a Σa² + w_j Σjerk² + w_v Σ(v − ref)²` over states 1..N.
pub fn plan_cost(plan: &VelocityPlan, w: &CostWeights) -> f64 {
    let acc: f64 = plan.states[1..].iter().map(|s| s.a * s.a).sum();
    let jerk: f64 = plan.jerk.iter().map(|j| j * j).sum();
    let track: f64 = plan.states[1..].iter().zip(&plan.reference[1..]).map(|(s, r)| (s.v - r).powi(2)).sum();
    w.w_a * acc + w.w_j * jerk + w.w_v * track
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BindingConstraint {
    Accel(usize),
    Jerk(usize),
    Speed(usize),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("invalid planner input: {0}")]
    InvalidInput(String),
    #[error("speed plan infeasible; binding constraints {binding:?}")]
    Infeasible { binding: Vec<BindingConstraint> },
    #[error("speed-cap fixed point did not settle after {passes} passes (cap violation {violation:.3e})")]
    NonConvergent { passes: usize, violation: f64 },
    #[error(transparent)]
    Solver(#[from] QpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    /// Directives are hard caps.
    HardLimit,
    /// Directives only change the tracked speed once the plan passes them.
    TargetVelocity,
}

/// Caps and references derived from position-dependent limits.
struct Limits<'a> {
    cruise_v: f64,
    directives: &'a [SpeedLimitDirective],
    curvature: Option<&'a CurvatureLimit>,
}

impl Limits<'_> {
    fn base_cap(&self, lo: f64, hi: f64) -> f64 {
        let curv = self.curvature.map_or(f64::INFINITY, |c| c.cap_over(lo, hi));
        self.cruise_v.min(curv)
    }

    fn directive_cap(&self, lo: f64, hi: f64) -> f64 {
        self.directives.iter().fold(f64::INFINITY, |m, d| m.min(d.cap_over(lo, hi)))
    }

    /// Rough trajectory that accelerates towards, and brakes onto, the caps;
    /// seeds the position-to-cap fixed point.
    fn follow_caps(&self, ego: &EgoKinematics, cfg: &PlannerConfig, n: usize, mode: Mode) -> (Vec<f64>, Vec<f64>) {
        let b = cfg.bounds;
        let dt = cfg.dt;
        let (mut s, mut v) = (ego.s, ego.v);
        let mut out = vec![s];
        let mut speeds = vec![v];
        for _ in 0..n {
            let ahead = s + v * dt;
            let mut cap = self.base_cap(s, ahead);
            if mode == Mode::HardLimit {
                cap = cap.min(self.directive_cap(s, ahead));
            }
            let v_next = (v + b.a_max * dt).min(cap).max((v + b.a_min * dt).max(0.0));
            s += 0.5 * (v + v_next) * dt;
            v = v_next;
            out.push(s);
            speeds.push(v);
        }
        (out, speeds)
    }

    /// Hard-limit constraints linearised about a trajectory with positions
    /// `s[0..=N]` and speeds `v[0..=N]`. Directives the interval has passed
    /// drop out and those it has reached fold into the constant caps. Those
    /// still ahead (and stop lines throughout) become planes supporting the
    /// braking envelope: one at the boundary point above the interval end,
    /// one at the boundary point with the planned speed.
    fn linearize(&self, s: &[f64], v: &[f64]) -> Linearized {
        let n = s.len();
        let nd = self.directives.len();
        let (mut caps, refs) = self.map_base(s);
        let mut cuts = vec![None; (n - 1) * nd * CUTS_PER_SLOT];
        let mut regimes = vec![Regime::Passed; (n - 1) * nd];
        for k in 1..n {
            let (lo, hi) = interval(s, k);
            for (i, d) in self.directives.iter().enumerate() {
                let slot = (k - 1) * nd + i;
                // With a zero limit the envelope set is exact past the line
                // too, so a stop never turns into a per-state pin at zero.
                // Once the ego is past the line the pin is exact, and once it
                // has stopped at the line it costs at most the snap distance;
                // the envelope is too steep there to linearise.
                let held = s[0] >= d.enforce_from - STOP_SNAP && v[0] <= STOP_SNAP;
                let stop = d.v_limit <= 0.0 && lo <= d.enforce_to && !held && s[0] < d.enforce_from;
                if d.v_limit <= 0.0 && lo <= d.enforce_to && held {
                    regimes[slot] = Regime::Reached;
                    caps[k] = 0.0;
                } else if (hi < d.enforce_from || stop) && d.approach_decel > 0.0 && d.approach_decel.is_finite() {
                    let at_h = if hi < d.enforce_from { d.cap_over(lo, hi) } else { 0.0 };
                    cuts[slot * CUTS_PER_SLOT] = Some(d.envelope_plane(at_h));
                    if v[k] > d.v_limit {
                        cuts[slot * CUTS_PER_SLOT + 1] = Some(d.envelope_plane(v[k]));
                    }
                    regimes[slot] = Regime::Envelope;
                } else {
                    let cap = d.cap_over(lo, hi);
                    if cap.is_finite() {
                        regimes[slot] = Regime::Reached;
                    }
                    caps[k] = caps[k].min(cap);
                }
            }
        }
        Linearized { caps, refs, cuts, regimes }
    }

    fn map_base(&self, s: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = s.len();
        let mut caps = vec![f64::INFINITY; n];
        let mut refs = vec![self.cruise_v; n];
        for k in 1..n {
            let (lo, hi) = interval(s, k);
            caps[k] = self.base_cap(lo, hi);
            refs[k] = self.cruise_v.min(caps[k]);
        }
        (caps, refs)
    }

    /// Per-state caps and references for a trajectory `s[0..=N]`. The cap
    /// for state k covers `[s_{k-1}, s_{k+1}]`, so a limit region cannot
    /// fall between two samples unnoticed.
    fn map(&self, s: &[f64], mode: Mode) -> (Vec<f64>, Vec<f64>) {
        let n = s.len();
        let mut caps = vec![f64::INFINITY; n];
        let mut refs = vec![self.cruise_v; n];
        for k in 1..n {
            let (lo, hi) = interval(s, k);
            let base = self.base_cap(lo, hi);
            match mode {
                Mode::HardLimit => {
                    caps[k] = base.min(self.directive_cap(lo, hi));
                    refs[k] = self.cruise_v.min(base);
                }
                Mode::TargetVelocity => {
                    caps[k] = base;
                    let target = self
                        .directives
                        .iter()
                        .filter(|d| s[k] >= d.route_s)
                        .fold(self.cruise_v, |m, d| m.min(d.v_limit));
                    refs[k] = target.min(base);
                }
            }
        }
        (caps, refs)
    }
}

/// Constraint rows per (state, directive): this pass's two envelope planes
/// plus the previous pass's, kept while the directive stays ahead.
const CUTS_PER_SLOT: usize = 4;

/// Distance (m) and speed (m/s) within which an ego counts as stopped at a
/// stop line.
const STOP_SNAP: f64 = 1e-3;

/// Distance (m) short of a stop line at which planned stops aim.
const STOP_MARGIN: f64 = 1e-4;

/// Route interval covered by state k: `[s_{k-1}, s_{k+1}]`, extrapolating
/// one step past the last state.
fn interval(s: &[f64], k: usize) -> (f64, f64) {
    let hi = if k + 1 < s.len() { s[k + 1] } else { s[k] + (s[k] - s[k - 1]).max(0.0) };
    (s[k - 1], hi)
}

/// Linear constraint `v·v_k + h·hi_k <= rhs` on a state's speed and the
/// far end of its interval.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Cut {
    v: f64,
    h: f64,
    rhs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Regime {
    Passed,
    Reached,
    Envelope,
}

struct Linearized {
    caps: Vec<f64>,
    refs: Vec<f64>,
    /// `CUTS_PER_SLOT` rows per (state 1..=N, directive), state-major.
    cuts: Vec<Option<Cut>>,
    regimes: Vec<Regime>,
}

impl Linearized {
    /// Carries the previous pass's planes into the spare rows of every
    /// directive that is still ahead. All of them support the same convex
    /// set, so together they only sharpen the outer approximation.
    fn with_history(mut self, prev: &Linearized) -> Self {
        for (slot, (now, before)) in self.regimes.iter().zip(&prev.regimes).enumerate() {
            if *now == Regime::Envelope && now == before {
                let base = slot * CUTS_PER_SLOT;
                self.cuts[base + 2] = prev.cuts[base];
                self.cuts[base + 3] = prev.cuts[base + 1];
            }
        }
        self
    }
}

/// Stateful piecewise-jerk speed planner; keeps solver warm starts between
/// calls with the same horizon.
#[derive(Debug, Clone)]
pub struct PjsoPlanner {
    pub config: PlannerConfig,
    solver: AdmmSolver,
}

impl PjsoPlanner {
    pub fn new(config: PlannerConfig) -> Self {
        Self { config, solver: AdmmSolver::new(config.solver) }
    }

    pub fn reset(&mut self) {
        self.solver.clear_warm_start();
    }

    /// Plan with directives (and curvature) as hard speed caps.
    pub fn plan(
        &mut self,
        ego: EgoKinematics,
        cruise_v: f64,
        directives: &[SpeedLimitDirective],
        curvature: Option<&CurvatureLimit>,
    ) -> Result<VelocityPlan, PlanError> {
        self.plan_mode(ego, Limits { cruise_v, directives, curvature }, Mode::HardLimit)
    }

    /// Plan that only lowers the tracked speed once the plan has reached a
    /// directive's position; no hard cap from directives.
    pub fn plan_target_velocity(
        &mut self,
        ego: EgoKinematics,
        cruise_v: f64,
        directives: &[SpeedLimitDirective],
        curvature: Option<&CurvatureLimit>,
    ) -> Result<VelocityPlan, PlanError> {
        self.plan_mode(ego, Limits { cruise_v, directives, curvature }, Mode::TargetVelocity)
    }

    fn validate(&self, ego: &EgoKinematics, cruise_v: f64) -> Result<usize, PlanError> {
        let c = &self.config;
        let n = c.steps();
        let bad = |m: &str| Err(PlanError::InvalidInput(m.to_string()));
        if !(c.dt > 0.0) || !c.horizon.is_finite() {
            return bad("dt must be positive");
        }
        if n == 0 || n > 500 {
            return bad("horizon must span 1..=500 steps");
        }
        if !(ego.s.is_finite() && ego.v.is_finite() && ego.a.is_finite()) || ego.v < 0.0 {
            return bad("ego state must be finite with v >= 0");
        }
        if !(cruise_v >= 0.0) {
            return bad("cruise speed must be non-negative");
        }
        let b = &c.bounds;
        if !(b.a_min < 0.0 && b.a_max > 0.0 && b.j_min < 0.0 && b.j_max > 0.0) {
            return bad("motion bounds must bracket zero");
        }
        Ok(n)
    }

    fn plan_mode(&mut self, ego: EgoKinematics, limits: Limits<'_>, mode: Mode) -> Result<VelocityPlan, PlanError> {
        let n = self.validate(&ego, limits.cruise_v)?;
        let cfg = self.config;
        let b = cfg.bounds;
        let a0 = ego.a.clamp(b.a_min, b.a_max);
        let dt = cfg.dt;
        let qp = QpShape::new(n, dt, ego.v, a0, ego.s);

        // Hardest braking covers the least ground, so for caps that tighten
        // along the route it sees the loosest caps: if it still breaks them,
        // nothing can satisfy them.
        let (brake_s, brake_v) = qp.hardest_braking(&cfg);
        let (brake_caps, _) = limits.map(&brake_s, mode);
        let binding: Vec<BindingConstraint> =
            (1..=n).filter(|&k| brake_v[k] > brake_caps[k] + 1e-9).map(BindingConstraint::Speed).collect();
        if !binding.is_empty() {
            return Err(PlanError::Infeasible { binding });
        }

        let (s_guess, v_guess) = limits.follow_caps(&ego, &cfg, n, mode);
        let constraints_at = |s: &[f64], v: &[f64]| match mode {
            Mode::HardLimit => limits.linearize(s, v),
            Mode::TargetVelocity => {
                let (caps, refs) = limits.map(s, mode);
                Linearized { caps, refs, cuts: Vec::new(), regimes: Vec::new() }
            }
        };
        let per_state = if mode == Mode::HardLimit { limits.directives.len() * CUTS_PER_SLOT } else { 0 };
        let mut lin = constraints_at(&s_guess, &v_guess);
        let mut last_violation = f64::INFINITY;
        let mut best: Option<VelocityPlan> = None;
        let mut iterations = 0;
        let mut from_brake = false;
        let passes = cfg.max_passes.max(1);
        let merge_from = passes.saturating_sub(2).max(1);

        for pass in 1..=passes {
            let problem = qp.problem(&cfg, &lin.caps, &lin.refs, &lin.cuts);
            let sol = self.solver.solve(&problem)?;
            iterations += sol.iterations;
            let violation = if sol.status == QpStatus::PrimalInfeasible {
                f64::INFINITY
            } else {
                problem.primal_violation(&sol.x)
            };
            if sol.status == QpStatus::PrimalInfeasible || violation > 1e-6 {
                self.solver.clear_warm_start();
                // Retry once from the braking profile; if that fails too,
                // further passes would only repeat it.
                if pass < passes && !from_brake {
                    lin = constraints_at(&brake_s, &brake_v);
                    from_brake = true;
                    continue;
                }
                if let Some(plan) = best {
                    return Ok(plan);
                }
                if sol.status == QpStatus::PrimalInfeasible {
                    return Err(PlanError::Infeasible {
                        binding: qp.certificate_rows(&sol.certificate_rows, per_state),
                    });
                }
                return Err(PlanError::NonConvergent { passes: pass, violation });
            }
            let mut plan = qp.rollout(&sol.x, &lin.refs, pass, &cfg.weights);
            plan.iterations = iterations;
            let s_now: Vec<f64> = plan.states.iter().map(|st| st.s).collect();
            let v_now: Vec<f64> = plan.states.iter().map(|st| st.v).collect();
            let (true_caps, _) = limits.map(&s_now, mode);
            let cap_violation = plan
                .states
                .iter()
                .zip(&true_caps)
                .skip(1)
                .map(|(st, c)| st.v - c)
                .fold(0.0_f64, f64::max);
            plan.caps = true_caps;
            let now = constraints_at(&s_now, &v_now).with_history(&lin);
            from_brake = false;
            let ref_shift = lin.refs.iter().zip(&now.refs).map(|(a, b)| (a - b).abs()).fold(0.0_f64, f64::max);
            // Envelope cuts relax the true caps, so a plan that satisfies
            // the true caps without changing which directives are ahead,
            // reached or passed is optimal for the limits themselves.
            if cap_violation <= 1e-6 && ref_shift <= 1e-9 && now.regimes == lin.regimes {
                return Ok(plan);
            }
            last_violation = cap_violation.max(ref_shift);
            if cap_violation <= 1e-6 && best.as_ref().map_or(true, |b| plan.objective < b.objective) {
                best = Some(plan);
            }
            if mode == Mode::TargetVelocity && pass >= merge_from {
                // late passes only tighten, which damps oscillation
                for k in 0..lin.caps.len() {
                    lin.caps[k] = lin.caps[k].min(now.caps[k]);
                    lin.refs[k] = lin.refs[k].min(now.refs[k]);
                }
            } else {
                lin = now;
            }
        }
        // Caps that hold while the reference or the active directives keep
        // shifting between samples are safe: the best such plan stands.
        if let Some(plan) = best {
            return Ok(plan);
        }
        Err(PlanError::NonConvergent { passes, violation: last_violation })
    }
}

/// Convenience one-shot planner call.
pub fn pjso_plan(
    config: PlannerConfig,
    ego: EgoKinematics,
    cruise_v: f64,
    directives: &[SpeedLimitDirective],
    curvature: Option<&CurvatureLimit>,
) -> Result<VelocityPlan, PlanError> {
    PjsoPlanner::new(config).plan(ego, cruise_v, directives, curvature)
}

/// Affine maps from the decision vector `x = (a_1..a_N)` to speed and
/// position at each state, given the fixed initial state.
struct QpShape {
    n: usize,
    dt: f64,
    v0: f64,
    a0: f64,
    s0: f64,
    /// `v_k = v_coef[k]·x + v_const[k]`, k = 0..=N.
    v_coef: Vec<Vec<f64>>,
    v_const: Vec<f64>,
    /// `s_k = s_coef[k]·x + s_const[k]`, k = 0..=N.
    s_coef: Vec<Vec<f64>>,
    s_const: Vec<f64>,
}

impl QpShape {
    fn new(n: usize, dt: f64, v0: f64, a0: f64, s0: f64) -> Self {
        let mut v_coef = vec![vec![0.0; n]; n + 1];
        let mut v_const = vec![v0; n + 1];
        for k in 0..n {
            let mut coef = v_coef[k].clone();
            let mut c = v_const[k];
            if k == 0 {
                c += a0 * dt / 2.0;
            } else {
                coef[k - 1] += dt / 2.0;
            }
            coef[k] += dt / 2.0;
            v_coef[k + 1] = coef;
            v_const[k + 1] = c;
        }
        // s_{k+1} = s_k + v_k·dt + a_k·dt²/3 + a_{k+1}·dt²/6
        let mut s_coef = vec![vec![0.0; n]; n + 1];
        let mut s_const = vec![s0; n + 1];
        for k in 0..n {
            let mut coef = s_coef[k].clone();
            let mut c = s_const[k] + v_const[k] * dt;
            for (ci, vi) in coef.iter_mut().zip(&v_coef[k]) {
                *ci += vi * dt;
            }
            if k == 0 {
                c += a0 * dt * dt / 3.0;
            } else {
                coef[k - 1] += dt * dt / 3.0;
            }
            coef[k] += dt * dt / 6.0;
            s_coef[k + 1] = coef;
            s_const[k + 1] = c;
        }
        Self { n, dt, v0, a0, s0, v_coef, v_const, s_coef, s_const }
    }

    /// Far end of state k's interval as an affine map of `x`.
    fn interval_end(&self, k: usize) -> (Vec<f64>, f64) {
        if k < self.n {
            (self.s_coef[k + 1].clone(), self.s_const[k + 1])
        } else {
            let (a, b) = (&self.s_coef[k], &self.s_coef[k - 1]);
            (a.iter().zip(b).map(|(a, b)| 2.0 * a - b).collect(), 2.0 * self.s_const[k] - self.s_const[k - 1])
        }
    }

    fn problem(&self, cfg: &PlannerConfig, caps: &[f64], refs: &[f64], cuts: &[Option<Cut>]) -> QpProblem {
        let n = self.n;
        let dt = self.dt;
        let w = cfg.weights;
        let b = cfg.bounds;
        let mut p = Dense::zeros(n, n);
        let mut q = vec![0.0; n];
        let wj = w.w_j / (dt * dt);
        for i in 0..n {
            p.add(i, i, 2.0 * w.w_a);
        }
        // jerk: (a_1 - a0)^2 and (a_{k+1} - a_k)^2
        p.add(0, 0, 2.0 * wj);
        q[0] -= 2.0 * wj * self.a0;
        for k in 1..n {
            p.add(k, k, 2.0 * wj);
            p.add(k - 1, k - 1, 2.0 * wj);
            p.add(k, k - 1, -2.0 * wj);
            p.add(k - 1, k, -2.0 * wj);
        }
        for k in 1..=n {
            let coef = &self.v_coef[k];
            let off = self.v_const[k] - refs[k];
            for i in 0..k.min(n) {
                if coef[i] == 0.0 {
                    continue;
                }
                q[i] += 2.0 * w.w_v * off * coef[i];
                for j in 0..k.min(n) {
                    p.add(i, j, 2.0 * w.w_v * coef[i] * coef[j]);
                }
            }
        }

        let m = 3 * n + cuts.len();
        let mut a = Dense::zeros(m, n);
        let mut l = vec![0.0; m];
        let mut u = vec![0.0; m];
        for k in 0..n {
            a.set(k, k, 1.0);
            l[k] = b.a_min;
            u[k] = b.a_max;
        }
        for k in 0..n {
            let r = n + k;
            a.set(r, k, 1.0);
            if k == 0 {
                l[r] = b.j_min * dt + self.a0;
                u[r] = b.j_max * dt + self.a0;
            } else {
                a.set(r, k - 1, -1.0);
                l[r] = b.j_min * dt;
                u[r] = b.j_max * dt;
            }
        }
        for k in 1..=n {
            let r = 2 * n + k - 1;
            for i in 0..k.min(n) {
                a.set(r, i, self.v_coef[k][i]);
            }
            l[r] = -self.v_const[k];
            u[r] = caps[k] - self.v_const[k];
        }
        // unused slots stay as free rows so the problem shape (and the
        // solver's warm start) survives changes in which cuts are active
        let per_state = cuts.len() / n;
        for (i, cut) in cuts.iter().enumerate() {
            let r = 3 * n + i;
            l[r] = f64::NEG_INFINITY;
            u[r] = f64::INFINITY;
            if let Some(c) = cut {
                let k = i / per_state + 1;
                let (h_coef, h_const) = self.interval_end(k);
                for j in 0..n {
                    a.set(r, j, c.v * self.v_coef[k][j] + c.h * h_coef[j]);
                }
                u[r] = c.rhs - c.v * self.v_const[k] - c.h * h_const;
            }
        }
        QpProblem { p, q, a, l, u }
    }

    fn rollout(&self, x: &[f64], refs: &[f64], passes: usize, w: &CostWeights) -> VelocityPlan {
        let dt = self.dt;
        let mut states = Vec::with_capacity(self.n + 1);
        let mut jerk = Vec::with_capacity(self.n);
        let mut st = PlanState { t: 0.0, s: self.s0, v: self.v0, a: self.a0 };
        states.push(st);
        for k in 0..self.n {
            let a_next = x[k];
            let j = (a_next - st.a) / dt;
            jerk.push(j);
            st = PlanState {
                t: (k + 1) as f64 * dt,
                s: st.s + st.v * dt + st.a * dt * dt / 2.0 + j * dt.powi(3) / 6.0,
                v: st.v + st.a * dt + j * dt * dt / 2.0,
                a: a_next,
            };
            states.push(st);
        }
        let mut plan = VelocityPlan {
            dt,
            states,
            jerk,
            caps: Vec::new(),
            reference: refs.to_vec(),
            objective: 0.0,
            passes,
            iterations: 0,
        };
        plan.objective = plan_cost(&plan, w);
        plan
    }

    /// Positions and speeds under maximal braking from the initial state
    /// (speed clamped at zero once stopped).
    fn hardest_braking(&self, cfg: &PlannerConfig) -> (Vec<f64>, Vec<f64>) {
        let b = cfg.bounds;
        let (mut s, mut v, mut a) = (self.s0, self.v0, self.a0);
        let mut ss = vec![s];
        let mut vs = vec![v];
        for _ in 0..self.n {
            let a_next = (a + b.j_min * self.dt).max(b.a_min);
            let v_next = (v + (a + a_next) * self.dt / 2.0).max(0.0);
            s += 0.5 * (v + v_next) * self.dt;
            v = v_next;
            a = if v > 0.0 { a_next } else { 0.0 };
            ss.push(s);
            vs.push(v);
        }
        (ss, vs)
    }

    fn certificate_rows(&self, rows: &[usize], per_state: usize) -> Vec<BindingConstraint> {
        let n = self.n;
        let mut out: Vec<BindingConstraint> = rows
            .iter()
            .map(|&r| match r / n {
                0 => BindingConstraint::Accel(r + 1),
                1 => BindingConstraint::Jerk(r - n),
                2 => BindingConstraint::Speed(r - 2 * n + 1),
                _ => BindingConstraint::Speed((r - 3 * n) / per_state.max(1) + 1),
            })
            .collect();
        out.dedup();
        out
    }
}

/// Where a limit-constrained and a target-velocity plan first reach the
/// reduced speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitVsTarget {
    pub v_reduced: f64,
    pub limit_meets_at: Option<f64>,
    pub target_meets_at: Option<f64>,
}

impl LimitVsTarget {
    /// True when the limit plan reaches the reduced speed at or before
    /// `position` and the target plan reaches it strictly later (or never
    /// within its horizon).
    pub fn limit_leads(&self, position: f64) -> bool {
        match (self.limit_meets_at, self.target_meets_at) {
            (Some(l), Some(t)) => l <= position + 1e-6 && t > l,
            (Some(l), None) => l <= position + 1e-6,
            _ => false,
        }
    }
}

pub fn speed_limit_vs_target_velocity_demo(
    limit_plan: &VelocityPlan,
    target_plan: &VelocityPlan,
    v_reduced: f64,
) -> LimitVsTarget {
    const TOL: f64 = 1e-3;
    LimitVsTarget {
        v_reduced,
        limit_meets_at: limit_plan.first_s_reaching(v_reduced, TOL),
        target_meets_at: target_plan.first_s_reaching(v_reduced, TOL),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::risk::{RiskSample, RiskSource};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn profile(pts: &[(f64, f64)]) -> RiskProfile {
        RiskProfile {
            samples: pts.iter().map(|&(s, r)| RiskSample { route_s: s, risk: r, source: RiskSource::Combined }).collect(),
        }
    }

    #[test]
    fn cluster_positions() {
        let c = cluster_risk(&profile(&[(10.0, 1.0), (20.0, 1.0)]), 15.0, 0.0);
        assert_eq!(c.len(), 1);
        assert_abs_diff_eq!(c[0].p_limit_s, 15.0, epsilon = 1e-12);
        let c = cluster_risk(&profile(&[(10.0, 100.0), (20.0, 300.0)]), 15.0, 0.0);
        // oracle: (100*10 + 300*20) / 400
        assert_abs_diff_eq!(c[0].p_limit_s, (100.0 * 10.0 + 300.0 * 20.0) / 400.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c[0].r_total, 400.0, epsilon = 1e-12);
        let c = cluster_risk(&profile(&[(10.0, 1.0), (40.0, 1.0)]), 5.0, 0.0);
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn cluster_skips_low_and_zero_risk() {
        let c = cluster_risk(&profile(&[(0.0, 0.0), (1.0, 5.0), (2.0, 0.5), (3.0, 5.0)]), 3.0, 1.0);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].members.len(), 2);
        assert!(cluster_risk(&profile(&[(0.0, 0.0)]), 3.0, 0.0).is_empty());
    }

    #[test]
    fn speed_limit_ramp() {
        let p = SpeedLimitParams { c_th_min: 100.0, c_th_max: 1000.0, v_occ_min: 10.0 / 3.6, v_occ_max: 30.0 / 3.6 };
        assert_abs_diff_eq!(speed_limit_value(550.0, &p).unwrap(), 20.0 / 3.6, epsilon = 1e-12);
        assert_eq!(speed_limit_value(50.0, &p), None);
        assert_eq!(speed_limit_value(1e6, &p), Some(p.v_occ_min));
        assert_eq!(speed_limit_value(100.0, &p), Some(p.v_occ_max));
        assert_abs_diff_eq!(speed_limit_value(1000.0 - 1e-9, &p).unwrap(), p.v_occ_min, epsilon = 1e-9);
    }

    #[test]
    fn static_stop_envelope() {
        use crate::nodes::LanePath;
        use crate::geometry::{Point2, Polyline};
        use crate::zones::PvsKind;
        let line = Polyline::new(vec![Point2::new(0.0, 0.0), Point2::new(100.0, 0.0)]).unwrap();
        let pvs = PhantomVehicleSet {
            kind: PvsKind::Static,
            lane_id: "a".into(),
            s_s: 50.0,
            s_e: 50.0,
            conflict_s_ego: 50.0,
            conflict_s_pv: 50.0,
            path: LanePath { polyline: line, anchor_lane: "a".into(), anchor_offset: 0.0 },
        };
        let d = static_stop_directive(Some(&pvs), 4.0, 2.0);
        assert_eq!(d.len(), 1);
        assert_abs_diff_eq!(d[0].cap_at(18.0), (2.0_f64 * 4.0 * 30.0).sqrt(), epsilon = 1e-12);
        assert_eq!(d[0].cap_at(48.0), 0.0);
        assert_eq!(d[0].cap_at(60.0), 0.0);
        assert!(static_stop_directive(None, 4.0, 2.0).is_empty());
    }

    fn max_violation(plan: &VelocityPlan, bounds: &MotionBounds) -> f64 {
        let mut worst = 0.0_f64;
        for st in plan.states.iter().skip(1) {
            worst = worst.max(bounds.a_min - st.a).max(st.a - bounds.a_max).max(-st.v);
        }
        for j in &plan.jerk {
            worst = worst.max(bounds.j_min - j).max(j - bounds.j_max);
        }
        worst
    }

    #[test]
    fn ramp_from_rest_with_tracking_weight() {
        let cfg = PlannerConfig {
            horizon: 10.0,
            weights: CostWeights { w_a: 1.0, w_j: 10.0, w_v: 100.0 },
            bounds: MotionBounds { a_min: -4.0, a_max: 2.0, j_min: -10.0, j_max: 10.0 },
            ..Default::default()
        };
        let plan = pjso_plan(cfg, EgoKinematics::default(), 10.0, &[], None).unwrap();
        // monotone up to the jerk-limited settle onto the cruise cap
        assert!(plan.states.windows(2).all(|w| w[1].v >= w[0].v - 5e-3));
        assert!(plan.sample(6.0).v >= 9.9, "v(6) = {}", plan.sample(6.0).v);
        assert!(max_violation(&plan, &cfg.bounds) <= 1e-6);
    }

    #[test]
    fn respects_point_limit() {
        let cfg = PlannerConfig { horizon: 8.0, ..Default::default() };
        let d = SpeedLimitDirective::point(50.0, 5.0, 5.0, 2.5);
        let plan = pjso_plan(cfg, EgoKinematics { s: 0.0, v: 10.0, a: 0.0 }, 10.0, &[d], None).unwrap();
        let v50 = plan.v_at_s(50.0).expect("plan covers s=50");
        assert!(v50 <= 5.0 + 1e-3, "v(50) = {v50}");
        for (st, cap) in plan.states.iter().zip(&plan.caps).skip(1) {
            assert!(st.v <= cap + 1e-6);
        }
    }

    #[test]
    fn stops_before_stop_line() {
        let cfg = PlannerConfig {
            horizon: 8.0,
            bounds: MotionBounds { a_min: -4.0, a_max: 2.0, j_min: -10.0, j_max: 10.0 },
            ..Default::default()
        };
        let d = SpeedLimitDirective::stop_at(20.0, 4.0, DirectiveKind::StaticStop);
        let plan = pjso_plan(cfg, EgoKinematics { s: 0.0, v: 10.0, a: 0.0 }, 10.0, &[d], None).unwrap();
        let last = plan.states.last().unwrap();
        assert!(last.v < 1e-3 && last.s <= 20.0 + 1e-6, "{last:?}");
        assert!(plan.states.iter().all(|s| s.s <= 20.0 + 1e-6));
    }

    #[test]
    fn waiting_at_stop_line_stays_put() {
        let d = SpeedLimitDirective::stop_at(20.0, 2.5, DirectiveKind::StaticStop);
        for s in [20.0 - 2e-6, 20.0, 20.0 + 1e-4] {
            let plan = pjso_plan(PlannerConfig::default(), EgoKinematics { s, v: 0.0, a: 0.0 }, 8.0, &[d], None).unwrap();
            assert_eq!(plan.passes, 1, "s0 = {s}");
            assert!(plan.states.iter().all(|st| st.v.abs() <= 1e-9 && (st.s - s).abs() <= 1e-9), "s0 = {s}");
        }
    }

    #[test]
    fn impossible_stop_is_infeasible() {
        let d = SpeedLimitDirective::stop_at(3.0, 4.0, DirectiveKind::StaticStop);
        let err = pjso_plan(PlannerConfig::default(), EgoKinematics { s: 0.0, v: 15.0, a: 0.0 }, 15.0, &[d], None)
            .unwrap_err();
        match err {
            PlanError::Infeasible { binding } => assert!(binding.iter().any(|b| matches!(b, BindingConstraint::Speed(_)))),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn target_velocity_lags_limit() {
        let cfg = PlannerConfig { horizon: 12.0, weights: CostWeights { w_v: 1.0, ..Default::default() }, ..Default::default() };
        let d = SpeedLimitDirective::point(50.0, 5.0, 20.0, 2.0);
        let ego = EgoKinematics { s: 0.0, v: 10.0, a: 0.0 };
        let mut planner = PjsoPlanner::new(cfg);
        let lim = planner.plan(ego, 10.0, &[d], None).unwrap();
        let tgt = planner.plan_target_velocity(ego, 10.0, &[d], None).unwrap();
        let rec = speed_limit_vs_target_velocity_demo(&lim, &tgt, 5.0);
        assert!(rec.limit_leads(50.0), "{rec:?}");

        let free_a = planner.plan(ego, 10.0, &[], None).unwrap();
        let free_b = planner.plan_target_velocity(ego, 10.0, &[], None).unwrap();
        for (a, b) in free_a.states.iter().zip(&free_b.states) {
            assert_abs_diff_eq!(a.v, b.v, epsilon = 1e-6);
        }
    }

    proptest! {
        #[test]
        fn speed_limit_monotone(r1 in 0.0..5000.0f64, r2 in 0.0..5000.0f64) {
            let p = SpeedLimitParams { c_th_min: 1000.0, c_th_max: 3000.0, v_occ_min: 2.0, v_occ_max: 8.0 };
            let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
            if let (Some(a), Some(b)) = (speed_limit_value(lo, &p), speed_limit_value(hi, &p)) {
                prop_assert!(b <= a + 1e-12);
            }
            if let Some(v) = speed_limit_value(hi, &p) {
                prop_assert!((p.v_occ_min..=p.v_occ_max).contains(&v));
            }
        }

        #[test]
        fn cluster_position_is_convex(risks in proptest::collection::vec(0.01..100.0f64, 1..40)) {
            let pts: Vec<(f64, f64)> = risks.iter().enumerate().map(|(i, &r)| (i as f64 * 0.5, r)).collect();
            for c in cluster_risk(&profile(&pts), 3.0, 0.0) {
                prop_assert!(c.p_limit_s >= c.s_min() && c.p_limit_s <= c.s_max());
                prop_assert!(c.r_total > 0.0);
            }
        }
    }
}

//! Closed-form reachability quantification of phantom agents and its
//! projection onto the ego route.
//!
//! A phantom vehicle starts uniformly in `[s_s, s_e]` with a constant speed
//! uniform in `[0, v_max]`. [`srq_g`] is the measure of (start, speed) pairs
//! that pass position `s` within `t_pred`; it is piecewise quadratic with
//! three branches joined continuously at `s_e` and `s_s + v_max * t_pred`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::scenario::Route;
use crate::zones::{PhantomPedestrianZone, PhantomVehicleSet, PvsKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RiskError {
    #[error("invalid reachability parameters: {0}")]
    InvalidParams(String),
    #[error("invalid lateral model: {0}")]
    InvalidLateral(String),
}

/// Tolerance on `s_e - s_s <= v_max * t_pred`.
const LENGTH_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SrqParams {
    pub v_max: f64,
    pub t_pred: f64,
    pub s_s: f64,
    pub s_e: f64,
}

impl SrqParams {
    pub fn new(v_max: f64, t_pred: f64, s_s: f64, s_e: f64) -> Result<Self, RiskError> {
        if !(v_max >= 0.0 && t_pred > 0.0 && v_max.is_finite() && t_pred.is_finite()) {
            return Err(RiskError::InvalidParams(format!("v_max={v_max}, t_pred={t_pred}")));
        }
        if !(s_s <= s_e) {
            return Err(RiskError::InvalidParams(format!("s_s={s_s} > s_e={s_e}")));
        }
        if s_e - s_s > v_max * t_pred + LENGTH_TOL {
            return Err(RiskError::InvalidParams(format!(
                "interval length {} exceeds reach {}",
                s_e - s_s,
                v_max * t_pred
            )));
        }
        Ok(Self { v_max, t_pred, s_s, s_e })
    }

    pub fn reach(&self) -> f64 {
        self.v_max * self.t_pred
    }

    pub fn length(&self) -> f64 {
        self.s_e - self.s_s
    }

    /// Support of `g`: `[s_s, s_e + v_max * t_pred]`.
    pub fn support(&self) -> (f64, f64) {
        (self.s_s, self.s_e + self.reach())
    }
}

/// Reachability mass at `s` (units m^2/s).
pub fn srq_g(s: f64, p: &SrqParams) -> f64 {
    let (v, t, ss, se) = (p.v_max, p.t_pred, p.s_s, p.s_e);
    let reach = v * t;
    if s < ss || s > se + reach {
        return 0.0;
    }
    let g = if s <= se {
        0.5 * (2.0 * v - (s - ss) / t) * (s - ss)
    } else if s <= ss + reach {
        0.5 * (2.0 * v - (s - ss) / t - (s - se) / t) * (se - ss)
    } else {
        0.5 * (v - (s - se) / t) * (se - (s - reach))
    };
    g.max(0.0)
}

/// Occlusion risk: reachability mass scaled by the occluded interval length.
pub fn occlusion_risk_o(s: f64, p: &SrqParams) -> f64 {
    p.length() * srq_g(s, p)
}

/// Zero-mean normal lateral spread whose central `confidence` interval spans
/// the lane width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LateralModel {
    pub lane_width: f64,
    pub confidence: f64,
    pub sigma: f64,
}

impl LateralModel {
    pub fn new(lane_width: f64, confidence: f64) -> Result<Self, RiskError> {
        if !(lane_width > 0.0 && lane_width.is_finite()) {
            return Err(RiskError::InvalidLateral(format!("lane_width={lane_width}")));
        }
        if !(confidence > 0.0 && confidence < 1.0) {
            return Err(RiskError::InvalidLateral(format!("confidence={confidence}")));
        }
        let z = Normal::standard().inverse_cdf(1.0 - 0.5 * (1.0 - confidence));
        Ok(Self { lane_width, confidence, sigma: lane_width / (2.0 * z) })
    }
}

/// Normal density at `d_offset`.
pub fn lateral_weight(d_offset: f64, model: &LateralModel) -> f64 {
    let u = d_offset / model.sigma;
    (-0.5 * u * u).exp() / (model.sigma * (2.0 * PI).sqrt())
}

pub fn risk_r(s: f64, d_offset: f64, params: &SrqParams, model: &LateralModel) -> f64 {
    occlusion_risk_o(s, params) * lateral_weight(d_offset, model)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RiskSource {
    Pvs(usize),
    Ppz,
    Combined,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskSample {
    pub route_s: f64,
    pub risk: f64,
    pub source: RiskSource,
}

/// Risk sampled along the ego route, sorted by `route_s`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RiskProfile {
    pub samples: Vec<RiskSample>,
}

impl RiskProfile {
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.samples.iter().map(|s| s.risk).sum()
    }

    pub fn max_risk(&self) -> f64 {
        self.samples.iter().map(|s| s.risk).fold(0.0, f64::max)
    }

    /// Pointwise sum on the grid `k * step`.
    pub fn combine<'a>(profiles: impl IntoIterator<Item = &'a RiskProfile>, step: f64) -> RiskProfile {
        let mut acc: BTreeMap<i64, f64> = BTreeMap::new();
        for p in profiles {
            for s in &p.samples {
                *acc.entry((s.route_s / step).round() as i64).or_default() += s.risk;
            }
        }
        RiskProfile {
            samples: acc
                .into_iter()
                .filter(|&(_, r)| r > 0.0)
                .map(|(k, risk)| RiskSample { route_s: k as f64 * step, risk, source: RiskSource::Combined })
                .collect(),
        }
    }

    /// Summed risk on `[from, to]`.
    pub fn risk_between(&self, from: f64, to: f64) -> f64 {
        self.samples.iter().filter(|s| s.route_s >= from && s.route_s <= to).map(|s| s.risk).sum()
    }
}

/// Evaluates `r(s, d)` at route samples around the conflict: `s` is the
/// sample's projection onto the phantom vehicle's lane chain and `d` its
/// lateral offset from that centerline. Static sets carry no dynamic risk.
pub fn project_pvs_risk_to_route(
    pvs: &PhantomVehicleSet,
    ego_route: &Route,
    params: &SrqParams,
    model: &LateralModel,
    sample_step: f64,
) -> RiskProfile {
    project_pvs_risk_window(pvs, ego_route, params, model, sample_step, 2.0 * model.lane_width, 0)
}

/// [`project_pvs_risk_to_route`] with an explicit half-window around the
/// conflict and a source id.
pub fn project_pvs_risk_window(
    pvs: &PhantomVehicleSet,
    ego_route: &Route,
    params: &SrqParams,
    model: &LateralModel,
    sample_step: f64,
    half_window: f64,
    source_id: usize,
) -> RiskProfile {
    if pvs.kind != PvsKind::Dynamic || params.length() <= 0.0 {
        return RiskProfile::default();
    }
    let path = &pvs.path;
    let path_len = path.polyline.length();
    let lo = (pvs.conflict_s_ego - half_window).max(0.0);
    let hi = (pvs.conflict_s_ego + half_window).min(ego_route.length());
    let k0 = (lo / sample_step).ceil() as i64;
    let k1 = (hi / sample_step).floor() as i64;
    let mut samples = Vec::new();
    for k in k0..=k1 {
        let route_s = k as f64 * sample_step;
        let f = path.polyline.project(ego_route.path.point_at(route_s));
        if f.s <= 1e-9 || f.s >= path_len - 1e-9 {
            continue;
        }
        let r = risk_r(f.s - path.anchor_offset, f.d, params, model);
        if r > 0.0 {
            samples.push(RiskSample { route_s, risk: r, source: RiskSource::Pvs(source_id) });
        }
    }
    RiskProfile { samples }
}

/// Drops dynamic sets whose conflict lies beyond the nearest static node or
/// beyond `ego_s + max(k_threshold * v, floor_distance)`.
pub fn filter_far_pvs(
    pvs_list: Vec<PhantomVehicleSet>,
    ego_s: f64,
    ego_v: f64,
    static_node_s: Option<f64>,
    k_threshold: f64,
    floor_distance: f64,
) -> Vec<PhantomVehicleSet> {
    let horizon = ego_s + (k_threshold * ego_v).max(floor_distance);
    let limit = static_node_s.map_or(horizon, |s| s.min(horizon));
    pvs_list
        .into_iter()
        .filter(|p| p.kind != PvsKind::Dynamic || p.conflict_s_ego <= limit)
        .collect()
}

/// Per-cell reachability for a phantom pedestrian walking straight to the
/// route. The cell is the occluded interval `[0, c]` along the approach line
/// and the route edge lies `gap` beyond the cell's near edge.
pub fn pedestrian_cell_risk(gap: f64, cell_size: f64, v_max_pp: f64, t_pred: f64) -> f64 {
    let len = cell_size.min(v_max_pp * t_pred);
    let Ok(params) = SrqParams::new(v_max_pp, t_pred, 0.0, len) else { return 0.0 };
    occlusion_risk_o(len + gap.max(0.0), &params)
}

/// Pedestrian risk binned onto route samples by each cell's closest route
/// point. Cells farther than `distance_cutoff` contribute nothing.
pub fn pedestrian_risk_profile(
    ppz: &PhantomPedestrianZone,
    _ego_route: &Route,
    v_max_pp: f64,
    t_pred: f64,
    distance_cutoff: f64,
    sample_step: f64,
) -> RiskProfile {
    let mut bins: BTreeMap<i64, f64> = BTreeMap::new();
    for cell in &ppz.cells {
        if cell.distance_to_route > distance_cutoff {
            continue;
        }
        let gap = (cell.distance_to_route - 0.5 * ppz.cell_size).max(0.0);
        let r = pedestrian_cell_risk(gap, ppz.cell_size, v_max_pp, t_pred);
        if r > 0.0 {
            *bins.entry((cell.closest_route_s / sample_step).round() as i64).or_default() += r;
        }
    }
    RiskProfile {
        samples: bins
            .into_iter()
            .map(|(k, risk)| RiskSample { route_s: k as f64 * sample_step, risk, source: RiskSource::Ppz })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn fixture() -> SrqParams {
        SrqParams::new(10.0, 2.0, 0.0, 10.0).unwrap()
    }

    /// Midpoint-rule integral of 1[x <= s <= x + v t] over the start/speed box.
    fn grid_oracle(s: f64, p: &SrqParams, n: usize) -> f64 {
        let (dx, dv) = (p.length() / n as f64, p.v_max / n as f64);
        let mut hits = 0usize;
        for i in 0..n {
            let x = p.s_s + (i as f64 + 0.5) * dx;
            for j in 0..n {
                let v = (j as f64 + 0.5) * dv;
                if x <= s && s <= x + v * p.t_pred {
                    hits += 1;
                }
            }
        }
        hits as f64 * dx * dv
    }

    #[test]
    fn worked_values_match_grid_oracle() {
        let p = fixture();
        for (s, expected) in [(10.0, 75.0), (20.0, 25.0), (25.0, 6.25), (30.0, 0.0)] {
            let oracle = grid_oracle(s, &p, 2000);
            assert_abs_diff_eq!(oracle, expected, epsilon = 0.1);
            assert_abs_diff_eq!(srq_g(s, &p), expected, epsilon = 1e-9);
        }
        assert_eq!(srq_g(0.0, &p), 0.0);
        assert_abs_diff_eq!(occlusion_risk_o(10.0, &p), 750.0, epsilon = 1e-9);
    }

    #[test]
    fn degenerate_interval_has_no_risk() {
        let p = SrqParams::new(10.0, 2.0, 5.0, 5.0).unwrap();
        for k in 0..100 {
            assert_eq!(occlusion_risk_o(k as f64 * 0.5, &p), 0.0);
        }
        assert_eq!(occlusion_risk_o(31.0, &fixture()), 0.0);
    }

    #[test]
    fn rejects_overlong_interval() {
        assert!(SrqParams::new(1.0, 2.0, 0.0, 2.5).is_err());
        assert!(SrqParams::new(1.0, 2.0, 3.0, 2.5).is_err());
    }

    /// Inverse normal CDF by bisection on a Simpson-integrated density.
    fn quantile_oracle(p: f64) -> f64 {
        let cdf = |z: f64| {
            let n = 20_000;
            let h = z / n as f64;
            let f = |x: f64| (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
            let mut acc = f(0.0) + f(z);
            for i in 1..n {
                acc += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            0.5 + acc * h / 3.0
        };
        let (mut lo, mut hi) = (0.0, 10.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn lateral_model_examples() {
        let z = quantile_oracle(0.95);
        assert_abs_diff_eq!(z, 1.6449, epsilon = 1e-4);
        let m = LateralModel::new(3.5, 0.90).unwrap();
        assert_abs_diff_eq!(m.sigma, 3.5 / (2.0 * z), epsilon = 1e-9);
        assert_abs_diff_eq!(m.sigma, 1.0639, epsilon = 1e-4);
        assert_abs_diff_eq!(lateral_weight(0.0, &m), 1.0 / (m.sigma * (2.0 * PI).sqrt()), epsilon = 1e-12);
        assert_abs_diff_eq!(lateral_weight(0.0, &m), 0.3750, epsilon = 1e-4);
        assert_eq!(lateral_weight(1.0, &m), lateral_weight(-1.0, &m));
    }

    #[test]
    fn lateral_weight_integrates_to_one() {
        let m = LateralModel::new(3.5, 0.90).unwrap();
        let (a, n) = (12.0 * m.sigma, 200_000);
        let h = 2.0 * a / n as f64;
        let mut acc = lateral_weight(-a, &m) + lateral_weight(a, &m);
        for i in 1..n {
            acc += lateral_weight(-a + i as f64 * h, &m) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        assert_abs_diff_eq!(acc * h / 3.0, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn risk_r_examples() {
        let p = fixture();
        let m = LateralModel::new(3.5, 0.90).unwrap();
        let expected = 750.0 * lateral_weight(0.0, &m);
        assert_abs_diff_eq!(risk_r(10.0, 0.0, &p, &m), expected, epsilon = 1e-9);
        assert_abs_diff_eq!(risk_r(10.0, 0.0, &p, &m), 281.25, epsilon = 0.05);
        assert!(risk_r(10.0, 50.0, &p, &m) < 1e-100);
        assert_eq!(risk_r(40.0, 0.0, &p, &m), 0.0);
    }

    #[test]
    fn pedestrian_cell_risk_peaks_at_the_route() {
        let at_route = pedestrian_cell_risk(0.0, 0.5, 6.0 / 3.6, 3.0);
        let mut prev = at_route;
        for k in 1..=40 {
            let r = pedestrian_cell_risk(k as f64 * 0.125, 0.5, 6.0 / 3.6, 3.0);
            assert!(r <= prev + 1e-12);
            prev = r;
        }
        assert!(at_route > 0.0);
        assert_eq!(pedestrian_cell_risk(10.0, 0.5, 6.0 / 3.6, 3.0), 0.0);
    }

    fn params_strategy() -> impl Strategy<Value = SrqParams> {
        (0.5f64..30.0, 0.5f64..5.0, -50.0f64..50.0, 0.0f64..1.0).prop_map(|(v, t, ss, frac)| {
            SrqParams::new(v, t, ss, ss + frac * v * t).unwrap()
        })
    }

    proptest! {
        #[test]
        fn branches_join_continuously(p in params_strategy()) {
            let (ss, se, reach) = (p.s_s, p.s_e, p.reach());
            let i1 = |s: f64| 0.5 * (2.0 * p.v_max - (s - ss) / p.t_pred) * (s - ss);
            let i2 = |s: f64| 0.5 * (2.0 * p.v_max - (s - ss) / p.t_pred - (s - se) / p.t_pred) * (se - ss);
            let i3 = |s: f64| 0.5 * (p.v_max - (s - se) / p.t_pred) * (se - (s - reach));
            prop_assert!((i1(se) - i2(se)).abs() <= 1e-9 * (1.0 + i1(se).abs()));
            prop_assert!((i2(ss + reach) - i3(ss + reach)).abs() <= 1e-9 * (1.0 + i2(ss + reach).abs()));
            prop_assert_eq!(srq_g(ss, &p), 0.0);
            prop_assert!(srq_g(se + reach, &p).abs() <= 1e-9);
        }

        #[test]
        fn support_and_shape(p in params_strategy()) {
            let (lo, hi) = p.support();
            prop_assert_eq!(srq_g(lo - 1e-6, &p), 0.0);
            prop_assert_eq!(srq_g(hi + 1e-6, &p), 0.0);
            let n = 400;
            let (mut prev, mut prev_s) = (0.0, f64::NEG_INFINITY);
            for k in 0..=n {
                let s = lo + (hi - lo) * k as f64 / n as f64;
                let g = srq_g(s, &p);
                prop_assert!(g >= 0.0);
                if s <= p.s_e {
                    prop_assert!(g + 1e-9 >= prev);
                } else if prev_s >= p.s_e {
                    prop_assert!(g <= prev + 1e-9);
                }
                prev = g;
                prev_s = s;
            }
        }

        #[test]
        fn risk_scales_with_interval_length(v in 1.0f64..20.0, t in 1.0f64..4.0, frac in 0.05f64..0.5, u in 0.0f64..1.0) {
            // doubling the interval at a probe inside the shared I_1 range doubles g's length factor
            let short = SrqParams::new(v, t, 0.0, frac * v * t).unwrap();
            let long = SrqParams::new(v, t, 0.0, 2.0 * frac * v * t).unwrap();
            let s = u * short.s_e;
            let g_ratio = srq_g(s, &long) - srq_g(s, &short);
            prop_assert!(g_ratio.abs() <= 1e-9 * (1.0 + srq_g(s, &short)));
            let o_short = occlusion_risk_o(s, &short);
            let o_long = occlusion_risk_o(s, &long);
            prop_assert!((o_long - 2.0 * o_short).abs() <= 1e-9 * (1.0 + o_long));
        }
    }
}

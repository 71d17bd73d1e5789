//! Timing of the perception-to-directive cycle, isolated from simulation
//! stepping, plus an occlusion-severity knob for scaling studies.

use std::time::Instant;

use crate::assessment::{assess, assess_with_visibility, AssessmentConfig, EgoView};
use crate::geometry::{build_visibility_polygon, Point2, Polygon};
use crate::scenario::{ScenarioConfig, ScenarioParams};
use crate::sim::percentile;

/// Summary of a set of wall-clock samples in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingStats {
    pub samples: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p99_ms: f64,
}

impl TimingStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mean = if sorted.is_empty() { 0.0 } else { sorted.iter().sum::<f64>() / sorted.len() as f64 };
        Self {
            samples: sorted.len(),
            mean_ms: mean,
            median_ms: percentile(&sorted, 0.5),
            p99_ms: percentile(&sorted, 0.99),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleTimings {
    /// Visibility polygon construction included.
    pub with_visibility: TimingStats,
    /// Visibility precomputed; risk assessment and directives only.
    pub assessment_only: TimingStats,
}

/// Ego stations the benchmark cycles through: every `step` metres over the
/// first `span` metres of the route from the start position.
pub fn bench_stations(scn: &ScenarioConfig, span: f64, step: f64) -> Vec<f64> {
    let start = scn.ego_start.s + scn.params.ego_length / 2.0;
    let end = (start + span).min(scn.ego_route.length());
    let mut out = Vec::new();
    let mut s = start;
    while s <= end + 1e-9 {
        out.push(s);
        s += step;
    }
    if out.is_empty() {
        out.push(start.min(scn.ego_route.length()));
    }
    out
}

/// Times `iterations` assessment cycles, rotating through ego stations along
/// the route so that every phase of the approach is represented.
pub fn bench_cycle(
    scn: &ScenarioConfig,
    params: &ScenarioParams,
    cfg: &AssessmentConfig,
    iterations: usize,
) -> CycleTimings {
    let stations = bench_stations(scn, 80.0, 5.0);
    let v = scn.ego_start.v.max(params.road_speed_limit * 0.5);
    let views: Vec<EgoView<'_>> = stations
        .iter()
        .map(|&s| EgoView { route_s: s, v, sensor_origin: scn.ego_route.path.point_at(s), visible_vehicles: &[] })
        .collect();
    let visibilities: Vec<_> = views
        .iter()
        .map(|view| build_visibility_polygon(view.sensor_origin, &scn.obstacles, params.sensor_range, cfg.angular_resolution).ok())
        .collect();

    let mut with_vis = Vec::with_capacity(iterations);
    let mut only = Vec::with_capacity(iterations);
    for i in 0..iterations {
        let k = i % views.len();
        let started = Instant::now();
        let _ = std::hint::black_box(assess(scn, params, &views[k], cfg));
        with_vis.push(started.elapsed().as_secs_f64() * 1e3);

        if let Some(vis) = &visibilities[k] {
            let started = Instant::now();
            let _ = std::hint::black_box(assess_with_visibility(scn, params, &views[k], vis, cfg));
            only.push(started.elapsed().as_secs_f64() * 1e3);
        }
    }
    CycleTimings { with_visibility: TimingStats::from_samples(&with_vis), assessment_only: TimingStats::from_samples(&only) }
}

/// Copy of the scenario with every obstacle enlarged `factor` times about
/// its vertex nearest the ego route. Obstacles grow away from the road, so
/// the hidden area increases while the drivable corridor stays clear.
pub fn scale_occlusion(scn: &ScenarioConfig, factor: f64) -> ScenarioConfig {
    let route = &scn.ego_route.path;
    let obstacles = scn
        .obstacles
        .iter()
        .map(|poly| {
            let anchor = poly
                .vertices()
                .iter()
                .copied()
                .min_by(|a, b| route.project(*a).d.abs().total_cmp(&route.project(*b).d.abs()))
                .unwrap_or_default();
            scale_about(poly, anchor, factor)
        })
        .collect();
    ScenarioConfig { obstacles, ..scn.clone() }
}

fn scale_about(poly: &Polygon, anchor: Point2, factor: f64) -> Polygon {
    let vertices = poly.vertices().iter().map(|&v| anchor + (v - anchor) * factor).collect();
    Polygon::new(vertices).unwrap_or_else(|_| poly.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_of_known_samples() {
        let s = TimingStats::from_samples(&[3.0, 1.0, 2.0, 4.0]);
        assert_eq!(s.samples, 4);
        assert_eq!(s.mean_ms, 2.5);
        assert_eq!(s.median_ms, 2.0);
        assert_eq!(s.p99_ms, 4.0);
    }

    #[test]
    fn scaling_keeps_the_near_vertex() {
        let poly = Polygon::new(vec![
            Point2::new(2.0, 3.0),
            Point2::new(6.0, 3.0),
            Point2::new(6.0, 5.0),
            Point2::new(2.0, 5.0),
        ])
        .unwrap();
        let big = scale_about(&poly, Point2::new(2.0, 3.0), 2.0);
        assert!((big.area() - 4.0 * poly.area()).abs() < 1e-9);
        assert!(big.vertices().iter().all(|v| v.y >= 3.0 - 1e-12 && v.x >= 2.0 - 1e-12));
    }
}

//! Lane maps, ego routes and the JSON scenario file format.
//!
//! A scenario file is a single JSON document:
//!
//! ```json
//! {
//!   "schema": 1,
//!   "lanes": [{"id": "a", "width": 3.5, "centerline": [[0,0],[50,0]], "successors": []}],
//!   "obstacles": [[[10,3],[20,3],[20,8],[10,8]]],
//!   "ego": {"route": ["a"], "start_s": 0.0, "start_v": 5.0},
//!   "agents": [{"kind": "vehicle", "lane": "b", "spawn_s": 0.0, "speed_range": [8.3, 12.5]}],
//!   "params": {"T_pred": 3.0}
//! }
//! ```
//!
//! Omitted params take the defaults listed on [`ScenarioParams`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, Point2, Polygon, Polyline};

pub const SCHEMA_VERSION: u32 = 1;

/// Maximum gap between a lane end and its successor start.
pub const CONNECT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },
    #[error("lanes {0} and {1} are not connected")]
    DisconnectedLanes(String, String),
    #[error("unknown lane {0}")]
    UnknownLane(String),
}

impl ScenarioError {
    fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::Validation { field: field.into(), reason: reason.into() }
    }

    fn geometry(field: impl Into<String>, e: GeometryError) -> Self {
        Self::invalid(field, e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lane {
    pub id: String,
    pub centerline: Polyline,
    pub width: f64,
    pub successors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaneMap {
    lanes: Vec<Lane>,
}

impl LaneMap {
    pub fn new(lanes: Vec<Lane>) -> Result<Self, ScenarioError> {
        for (i, lane) in lanes.iter().enumerate() {
            if !(lane.width > 0.0 && lane.width.is_finite()) {
                return Err(ScenarioError::invalid(
                    format!("lanes[{i}].width"),
                    format!("must be positive, got {}", lane.width),
                ));
            }
            if lanes[..i].iter().any(|l| l.id == lane.id) {
                return Err(ScenarioError::invalid(
                    format!("lanes[{i}].id"),
                    format!("duplicate id {}", lane.id),
                ));
            }
        }
        for lane in &lanes {
            for succ in &lane.successors {
                let next = lanes
                    .iter()
                    .find(|l| &l.id == succ)
                    .ok_or_else(|| ScenarioError::UnknownLane(succ.clone()))?;
                if next.centerline.start().dist(lane.centerline.end()) > CONNECT_TOL {
                    return Err(ScenarioError::DisconnectedLanes(lane.id.clone(), succ.clone()));
                }
            }
        }
        Ok(Self { lanes })
    }

    pub fn lanes(&self) -> &[Lane] {
        &self.lanes
    }

    pub fn lane(&self, id: &str) -> Option<&Lane> {
        self.lanes.iter().find(|l| l.id == id)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.lanes.iter().position(|l| l.id == id)
    }

    /// Lanes listing `id` as a successor, in map order.
    pub fn predecessors<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a Lane> + 'a {
        self.lanes.iter().filter(move |l| l.successors.iter().any(|s| s == id))
    }

    pub fn len(&self) -> usize {
        self.lanes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lanes.is_empty()
    }
}

/// The ego vehicle's fixed path.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub path: Polyline,
    pub lane_sequence: Vec<String>,
    pub corridor_half_width: f64,
}

impl Route {
    pub fn length(&self) -> f64 {
        self.path.length()
    }

    pub fn contains_lane(&self, id: &str) -> bool {
        self.lane_sequence.iter().any(|l| l == id)
    }
}

pub fn build_route(map: &LaneMap, lane_sequence: &[String]) -> Result<Route, ScenarioError> {
    let first = lane_sequence
        .first()
        .ok_or_else(|| ScenarioError::invalid("ego.route", "empty lane sequence"))?;
    let mut lane = map.lane(first).ok_or_else(|| ScenarioError::UnknownLane(first.clone()))?;
    let mut path = lane.centerline.clone();
    let mut min_width = lane.width;
    for next_id in &lane_sequence[1..] {
        let next = map.lane(next_id).ok_or_else(|| ScenarioError::UnknownLane(next_id.clone()))?;
        let connected = lane.successors.iter().any(|s| s == next_id)
            && next.centerline.start().dist(lane.centerline.end()) <= CONNECT_TOL;
        if !connected {
            return Err(ScenarioError::DisconnectedLanes(lane.id.clone(), next_id.clone()));
        }
        path = path.concat(&next.centerline);
        min_width = min_width.min(next.width);
        lane = next;
    }
    Ok(Route {
        path,
        lane_sequence: lane_sequence.to_vec(),
        corridor_half_width: min_width / 2.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Vehicle,
    Pedestrian,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AgentPath {
    Lane(String),
    Path(Polyline),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentSpec {
    pub kind: AgentKind,
    pub path: AgentPath,
    pub spawn_s: f64,
    pub speed_range: [f64; 2],
}

/// Scenario-level parameters. Units: meters, seconds, m/s.
///
/// Defaults when omitted from a scenario file: `T_pred` 3 s, `sensor_range`
/// 50 m, `confidence` 0.90, `a_th` 4 m/s^2, `road_speed_limit` 30 km/h,
/// `v_max_pv` 1.5 x road limit, `v_max_pp` 6 km/h, `c_th_min` 1000,
/// `c_th_max` 20000, `v_occ_min` 2 m/s, `v_occ_max` road limit,
/// `a_lateral_max` 2 m/s^2, `seed` 0. Only `confidence` and `a_th` are
/// grounded in published values; the rest are tuning defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    #[serde(rename = "T_pred")]
    pub t_pred: f64,
    pub v_max_pv: f64,
    pub v_max_pp: f64,
    pub sensor_range: f64,
    pub road_speed_limit: f64,
    pub c_th_min: f64,
    pub c_th_max: f64,
    pub v_occ_min: f64,
    pub v_occ_max: f64,
    pub confidence: f64,
    pub a_th: f64,
    pub a_lateral_max: f64,
    pub seed: u64,
    pub ego_length: f64,
    pub ego_width: f64,
    /// Minimum distance between an intersecting node and a visible vehicle.
    pub clearance: f64,
    pub max_time: f64,
    /// Half-width of the uniform jitter applied to agent spawn positions.
    pub spawn_jitter: f64,
    /// Seconds an agent must be continuously visible before the ego reacts.
    pub reaction_time: f64,
}

impl ScenarioParams {
    pub fn with_road_limit(road_speed_limit: f64) -> Self {
        Self {
            t_pred: 3.0,
            v_max_pv: 1.5 * road_speed_limit,
            v_max_pp: 6.0 / 3.6,
            sensor_range: 50.0,
            road_speed_limit,
            c_th_min: 1000.0,
            c_th_max: 20000.0,
            v_occ_min: 2.0,
            v_occ_max: road_speed_limit,
            confidence: 0.90,
            a_th: 4.0,
            a_lateral_max: 2.0,
            seed: 0,
            ego_length: 4.5,
            ego_width: 1.8,
            clearance: 0.5,
            max_time: 60.0,
            spawn_jitter: 3.0,
            reaction_time: 0.3,
        }
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        let positive = [
            ("T_pred", self.t_pred),
            ("v_max_pv", self.v_max_pv),
            ("v_max_pp", self.v_max_pp),
            ("sensor_range", self.sensor_range),
            ("road_speed_limit", self.road_speed_limit),
            ("a_th", self.a_th),
            ("a_lateral_max", self.a_lateral_max),
            ("ego_length", self.ego_length),
            ("ego_width", self.ego_width),
            ("max_time", self.max_time),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ScenarioError::invalid(field, format!("must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("c_th_min", self.c_th_min),
            ("v_occ_min", self.v_occ_min),
            ("clearance", self.clearance),
            ("spawn_jitter", self.spawn_jitter),
            ("reaction_time", self.reaction_time),
        ];
        for (field, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ScenarioError::invalid(field, format!("must be >= 0, got {v}")));
            }
        }
        if !(self.c_th_min < self.c_th_max) {
            return Err(ScenarioError::invalid("c_th", "min >= max"));
        }
        if !(self.v_occ_min <= self.v_occ_max) {
            return Err(ScenarioError::invalid("v_occ", "min > max"));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(ScenarioError::invalid("confidence", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self::with_road_limit(30.0 / 3.6)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EgoStart {
    pub s: f64,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub lane_map: LaneMap,
    pub ego_route: Route,
    pub ego_start: EgoStart,
    pub obstacles: Vec<Polygon>,
    pub agents: Vec<AgentSpec>,
    pub params: ScenarioParams,
}

impl ScenarioConfig {
    /// The agent's travel path as a polyline (lane chains follow first successors).
    pub fn agent_polyline(&self, agent: &AgentSpec) -> Polyline {
        match &agent.path {
            AgentPath::Path(p) => p.clone(),
            AgentPath::Lane(id) => {
                let mut lane = self.lane_map.lane(id).expect("validated lane id");
                let mut path = lane.centerline.clone();
                let mut seen = vec![lane.id.as_str()];
                while let Some(next) = lane.successors.first() {
                    if seen.contains(&next.as_str()) {
                        break;
                    }
                    lane = self.lane_map.lane(next).expect("validated successor");
                    seen.push(&lane.id);
                    path = path.concat(&lane.centerline);
                }
                path
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ScenarioFile::from(self)).expect("serializable scenario")
    }
}

// ---- file representation ----

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    schema: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    lanes: Vec<LaneFile>,
    #[serde(default)]
    obstacles: Vec<Vec<[f64; 2]>>,
    ego: EgoFile,
    #[serde(default)]
    agents: Vec<AgentFile>,
    #[serde(default)]
    params: ParamsFile,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LaneFile {
    id: String,
    width: f64,
    centerline: Vec<[f64; 2]>,
    #[serde(default)]
    successors: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EgoFile {
    route: Vec<String>,
    #[serde(default)]
    start_s: f64,
    #[serde(default)]
    start_v: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentFile {
    kind: AgentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lane: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    path: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    spawn_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    speed_range: Option<[f64; 2]>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsFile {
    #[serde(rename = "T_pred", skip_serializing_if = "Option::is_none")]
    t_pred: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    v_max_pv: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    v_max_pp: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sensor_range: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    road_speed_limit: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    c_th_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    c_th_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    v_occ_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    v_occ_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    confidence: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    a_th: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    a_lateral_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ego_length: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ego_width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    clearance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    spawn_jitter: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reaction_time: Option<f64>,
}

impl ParamsFile {
    fn resolve(self) -> ScenarioParams {
        let d = ScenarioParams::with_road_limit(
            self.road_speed_limit.unwrap_or(ScenarioParams::default().road_speed_limit),
        );
        ScenarioParams {
            t_pred: self.t_pred.unwrap_or(d.t_pred),
            v_max_pv: self.v_max_pv.unwrap_or(d.v_max_pv),
            v_max_pp: self.v_max_pp.unwrap_or(d.v_max_pp),
            sensor_range: self.sensor_range.unwrap_or(d.sensor_range),
            road_speed_limit: d.road_speed_limit,
            c_th_min: self.c_th_min.unwrap_or(d.c_th_min),
            c_th_max: self.c_th_max.unwrap_or(d.c_th_max),
            v_occ_min: self.v_occ_min.unwrap_or(d.v_occ_min),
            v_occ_max: self.v_occ_max.unwrap_or(d.v_occ_max),
            confidence: self.confidence.unwrap_or(d.confidence),
            a_th: self.a_th.unwrap_or(d.a_th),
            a_lateral_max: self.a_lateral_max.unwrap_or(d.a_lateral_max),
            seed: self.seed.unwrap_or(d.seed),
            ego_length: self.ego_length.unwrap_or(d.ego_length),
            ego_width: self.ego_width.unwrap_or(d.ego_width),
            clearance: self.clearance.unwrap_or(d.clearance),
            max_time: self.max_time.unwrap_or(d.max_time),
            spawn_jitter: self.spawn_jitter.unwrap_or(d.spawn_jitter),
            reaction_time: self.reaction_time.unwrap_or(d.reaction_time),
        }
    }

    fn from_params(p: &ScenarioParams) -> Self {
        Self {
            t_pred: Some(p.t_pred),
            v_max_pv: Some(p.v_max_pv),
            v_max_pp: Some(p.v_max_pp),
            sensor_range: Some(p.sensor_range),
            road_speed_limit: Some(p.road_speed_limit),
            c_th_min: Some(p.c_th_min),
            c_th_max: Some(p.c_th_max),
            v_occ_min: Some(p.v_occ_min),
            v_occ_max: Some(p.v_occ_max),
            confidence: Some(p.confidence),
            a_th: Some(p.a_th),
            a_lateral_max: Some(p.a_lateral_max),
            seed: Some(p.seed),
            ego_length: Some(p.ego_length),
            ego_width: Some(p.ego_width),
            clearance: Some(p.clearance),
            max_time: Some(p.max_time),
            spawn_jitter: Some(p.spawn_jitter),
            reaction_time: Some(p.reaction_time),
        }
    }
}

fn to_points(raw: &[[f64; 2]]) -> Vec<Point2> {
    raw.iter().map(|&[x, y]| Point2::new(x, y)).collect()
}

fn from_points(pts: &[Point2]) -> Vec<[f64; 2]> {
    pts.iter().map(|p| [p.x, p.y]).collect()
}

impl From<&ScenarioConfig> for ScenarioFile {
    fn from(c: &ScenarioConfig) -> Self {
        ScenarioFile {
            schema: SCHEMA_VERSION,
            name: Some(c.name.clone()),
            lanes: c
                .lane_map
                .lanes()
                .iter()
                .map(|l| LaneFile {
                    id: l.id.clone(),
                    width: l.width,
                    centerline: from_points(l.centerline.points()),
                    successors: l.successors.clone(),
                })
                .collect(),
            obstacles: c.obstacles.iter().map(|o| from_points(o.vertices())).collect(),
            ego: EgoFile {
                route: c.ego_route.lane_sequence.clone(),
                start_s: c.ego_start.s,
                start_v: c.ego_start.v,
            },
            agents: c
                .agents
                .iter()
                .map(|a| AgentFile {
                    kind: a.kind,
                    lane: match &a.path {
                        AgentPath::Lane(id) => Some(id.clone()),
                        AgentPath::Path(_) => None,
                    },
                    path: match &a.path {
                        AgentPath::Path(p) => Some(from_points(p.points())),
                        AgentPath::Lane(_) => None,
                    },
                    spawn_s: a.spawn_s,
                    speed_range: Some(a.speed_range),
                })
                .collect(),
            params: ParamsFile::from_params(&c.params),
        }
    }
}

pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let file: ScenarioFile = serde_json::from_str(text)
        .map_err(|e| ScenarioError::Parse { line: e.line(), reason: e.to_string() })?;
    if file.schema != SCHEMA_VERSION {
        return Err(ScenarioError::invalid(
            "schema",
            format!("unsupported version {}, expected {SCHEMA_VERSION}", file.schema),
        ));
    }
    let params = file.params.resolve();
    params.validate()?;

    let mut lanes = Vec::with_capacity(file.lanes.len());
    for (i, l) in file.lanes.into_iter().enumerate() {
        let centerline = Polyline::new(to_points(&l.centerline))
            .map_err(|e| ScenarioError::geometry(format!("lanes[{i}].centerline"), e))?;
        lanes.push(Lane { id: l.id, centerline, width: l.width, successors: l.successors });
    }
    let lane_map = LaneMap::new(lanes)?;
    let ego_route = build_route(&lane_map, &file.ego.route)?;
    if !(0.0..=ego_route.length()).contains(&file.ego.start_s) {
        return Err(ScenarioError::invalid("ego.start_s", "outside the route"));
    }
    if !(file.ego.start_v >= 0.0 && file.ego.start_v.is_finite()) {
        return Err(ScenarioError::invalid("ego.start_v", "must be >= 0"));
    }

    let obstacles = file
        .obstacles
        .iter()
        .enumerate()
        .map(|(i, o)| {
            Polygon::new(to_points(o)).map_err(|e| ScenarioError::geometry(format!("obstacles[{i}]"), e))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut agents = Vec::with_capacity(file.agents.len());
    for (i, a) in file.agents.into_iter().enumerate() {
        let path = match (a.lane, a.path) {
            (Some(id), None) => {
                if lane_map.lane(&id).is_none() {
                    return Err(ScenarioError::UnknownLane(id));
                }
                AgentPath::Lane(id)
            }
            (None, Some(pts)) => AgentPath::Path(
                Polyline::new(to_points(&pts))
                    .map_err(|e| ScenarioError::geometry(format!("agents[{i}].path"), e))?,
            ),
            _ => {
                return Err(ScenarioError::invalid(
                    format!("agents[{i}]"),
                    "exactly one of `lane` or `path` is required",
                ))
            }
        };
        let speed_range = a.speed_range.unwrap_or(match a.kind {
            AgentKind::Vehicle => [params.road_speed_limit, 1.5 * params.road_speed_limit],
            AgentKind::Pedestrian => [4.0 / 3.6, 6.0 / 3.6],
        });
        if !(speed_range[0] > 0.0 && speed_range[0] <= speed_range[1]) {
            return Err(ScenarioError::invalid(
                format!("agents[{i}].speed_range"),
                "must satisfy 0 < lo <= hi",
            ));
        }
        agents.push(AgentSpec { kind: a.kind, path, spawn_s: a.spawn_s, speed_range });
    }

    Ok(ScenarioConfig {
        name: file.name.unwrap_or_else(|| "scenario".to_string()),
        lane_map,
        ego_route,
        ego_start: EgoStart { s: file.ego.start_s, v: file.ego.start_v },
        obstacles,
        agents,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "schema": 1,
        "lanes": [{"id": "a", "width": 3.5, "centerline": [[0,0],[100,0]]}],
        "ego": {"route": ["a"]}
    }"#;

    fn two_lane_map() -> LaneMap {
        let lane = |id: &str, x0: f64, succ: Vec<&str>| Lane {
            id: id.into(),
            centerline: Polyline::new(vec![Point2::new(x0, 0.0), Point2::new(x0 + 10.0, 0.0)])
                .unwrap(),
            width: 3.5,
            successors: succ.into_iter().map(String::from).collect(),
        };
        LaneMap::new(vec![lane("A", 0.0, vec!["B"]), lane("B", 10.0, vec![]), lane("C", 20.0, vec![])])
            .unwrap()
    }

    #[test]
    fn minimal_file_gets_defaults() {
        let c = parse_scenario(MINIMAL).unwrap();
        assert!(c.obstacles.is_empty());
        assert_eq!(c.params, ScenarioParams::default());
        assert_eq!(c.params.t_pred, 3.0);
        assert_eq!(c.params.sensor_range, 50.0);
        assert_eq!(c.params.confidence, 0.90);
        assert_eq!(c.params.a_th, 4.0);
    }

    #[test]
    fn rejects_inverted_thresholds() {
        let text = MINIMAL.replace(
            r#""ego": {"route": ["a"]}"#,
            r#""ego": {"route": ["a"]}, "params": {"c_th_min": 1000, "c_th_max": 100}"#,
        );
        let err = parse_scenario(&text).unwrap_err();
        assert_eq!(
            err,
            ScenarioError::Validation { field: "c_th".into(), reason: "min >= max".into() }
        );
    }

    #[test]
    fn parse_error_reports_line() {
        let err = parse_scenario("{\n  \"schema\": 1,\n  oops\n}").unwrap_err();
        assert!(matches!(err, ScenarioError::Parse { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn route_examples() {
        let map = two_lane_map();
        let single = build_route(&map, &["A".into()]).unwrap();
        assert_eq!(single.path, map.lane("A").unwrap().centerline);
        let double = build_route(&map, &["A".into(), "B".into()]).unwrap();
        assert!((double.length() - 20.0).abs() < 1e-9);
        assert_eq!(double.corridor_half_width, 1.75);
        assert_eq!(
            build_route(&map, &["A".into(), "C".into()]).unwrap_err(),
            ScenarioError::DisconnectedLanes("A".into(), "C".into())
        );
    }

    #[test]
    fn map_rejects_gapped_successor() {
        let a = Lane {
            id: "a".into(),
            centerline: Polyline::new(vec![Point2::new(0.0, 0.0), Point2::new(10.0, 0.0)]).unwrap(),
            width: 3.0,
            successors: vec!["b".into()],
        };
        let b = Lane {
            id: "b".into(),
            centerline: Polyline::new(vec![Point2::new(10.1, 0.0), Point2::new(20.0, 0.0)])
                .unwrap(),
            width: 3.0,
            successors: vec![],
        };
        assert!(matches!(LaneMap::new(vec![a, b]), Err(ScenarioError::DisconnectedLanes(_, _))));
    }

    #[test]
    fn agent_needs_exactly_one_path() {
        let text = MINIMAL.replace(
            r#""ego": {"route": ["a"]}"#,
            r#""ego": {"route": ["a"]}, "agents": [{"kind": "vehicle", "spawn_s": 0}]"#,
        );
        assert!(matches!(parse_scenario(&text), Err(ScenarioError::Validation { .. })));
    }
}

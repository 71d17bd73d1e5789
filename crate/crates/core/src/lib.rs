//! Occlusion-aware risk assessment for automated driving.
//!
//! The pipeline runs once per planning cycle: a line-of-sight visibility
//! polygon is intersected with the lane map ([`nodes`]), occluded lane
//! intervals and pedestrian cells become phantom-agent hypotheses
//! ([`zones`]), each hypothesis is quantified in closed form ([`risk`]) and
//! the resulting route risk is turned into speed limits for a
//! piecewise-jerk speed optimizer ([`strategy`]). [`sim`] closes the loop
//! around hidden agents and reports comparison metrics; [`bench`] times the
//! assessment cycle in isolation.

pub mod assessment;
pub mod bench;
pub mod geometry;
pub mod nodes;
pub mod qp;
pub mod risk;
pub mod scenario;
pub mod sim;
pub mod strategy;
pub mod zones;

pub use geometry::{Point2, Polygon, Polyline};
pub use scenario::{parse_scenario, ScenarioConfig};

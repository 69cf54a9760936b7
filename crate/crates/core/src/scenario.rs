//! Scenario files: geographic inputs resolved into the local frame.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::export::contract_from_json;
use crate::ovmodel::{Contract, NoFlyZone};
use crate::pipeline::{PipelineConfig, PlanRequest};
use crate::planner::{Environment, Route, SpeedSpec};
use crate::sim::{AircraftModel, UncertaintyConfig};
use crate::{GeoPoint, LocalPoint, Point2, Projection, Rect};

const DEFAULT_BOUNDS_MARGIN: f64 = 1500.0;

fn default_speed() -> SpeedSpec {
    SpeedSpec::Cruise(AircraftModel::default().cruise_tas)
}

fn default_alt_range() -> [f64; 2] {
    [0.0, f64::MAX]
}

fn default_margin() -> f64 {
    DEFAULT_BOUNDS_MARGIN
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioNfz {
    pub id: String,
    /// `[lat, lon]` vertices.
    pub polygon: Vec<[f64; 2]>,
    #[serde(default = "default_alt_range")]
    pub alt_range: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub name: String,
    pub origin: GeoPoint,
    pub destination: GeoPoint,
    #[serde(default)]
    pub departure_time: f64,
    #[serde(default = "default_speed")]
    pub speed: SpeedSpec,
    /// Fixed route; when present no planning is done.
    #[serde(default)]
    pub route: Option<Vec<GeoPoint>>,
    #[serde(default)]
    pub leg_speeds: Option<Vec<f64>>,
    #[serde(default)]
    pub nfzs: Vec<ScenarioNfz>,
    /// Contract JSON files of other operators, relative to the scenario file.
    #[serde(default)]
    pub foreign_contracts: Vec<PathBuf>,
    #[serde(default)]
    pub aircraft: AircraftModel,
    #[serde(default)]
    pub uncertainty: UncertaintyConfig,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Planning area: bounding box of all inputs grown by this, m.
    #[serde(default = "default_margin")]
    pub bounds_margin: f64,
    #[serde(default)]
    pub route_id: Option<String>,
    #[serde(default)]
    pub aircraft_id: Option<String>,
}

/// A scenario in the local frame of its origin.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub proj: Projection,
    pub origin: LocalPoint,
    pub destination: LocalPoint,
    pub env: Environment,
    pub departure_time: f64,
    pub speed: SpeedSpec,
    pub route: Option<Route>,
    pub aircraft: AircraftModel,
    pub uncertainty: UncertaintyConfig,
    pub pipeline: PipelineConfig,
    pub foreign_contracts: Vec<PathBuf>,
    pub route_id: String,
    pub aircraft_id: String,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("scenario line {} column {}: {e}", e.line(), e.column())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut s = Self::parse(&std::fs::read_to_string(path)?)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        for f in &mut s.foreign_contracts {
            if f.is_relative() {
                *f = dir.join(&*f);
            }
        }
        Ok(s)
    }

    pub fn resolve(&self) -> Result<Scenario> {
        self.origin.validate()?;
        self.destination.validate()?;
        let proj = Projection::new(GeoPoint { alt: 0.0, ..self.origin })?;
        let origin = proj.to_local(&self.origin)?;
        let destination = proj.to_local(&self.destination)?;
        let nfzs = self
            .nfzs
            .iter()
            .map(|z| {
                let polygon = z
                    .polygon
                    .iter()
                    .map(|&[lat, lon]| proj.to_local(&GeoPoint { lat, lon, alt: 0.0 }).map(|p| Point2::new(p.x, p.y)))
                    .collect::<Result<Vec<_>>>()?;
                NoFlyZone::new(z.id.clone(), polygon, z.alt_range)
            })
            .collect::<Result<Vec<_>>>()?;
        let route = match &self.route {
            Some(wps) => {
                let pts = wps.iter().map(|p| proj.to_local(p)).collect::<Result<Vec<_>>>()?;
                let mut r = Route::new(pts, self.departure_time, self.speed)?;
                r.leg_speeds = self.leg_speeds.clone();
                r.validate()?;
                Some(r)
            }
            None => None,
        };

        let mut pts: Vec<Point2> = vec![Point2::new(origin.x, origin.y), Point2::new(destination.x, destination.y)];
        pts.extend(nfzs.iter().flat_map(|z| z.polygon.iter().copied()));
        if let Some(r) = &route {
            pts.extend(r.waypoints.iter().map(|p| Point2::new(p.x, p.y)));
        }
        let bounds = Rect::bounding(&pts).expect("non-empty").expanded(self.bounds_margin.max(0.0));
        let env = Environment::new(bounds, nfzs);
        env.validate()?;
        env.validate_endpoint("origin", &pts[0])?;
        env.validate_endpoint("destination", &pts[1])?;

        let (lo, hi) = self.speed.range();
        if !(lo > 0.0 && lo <= hi) {
            return Err(Error::Config(format!("speed bounds [{lo}, {hi}] are invalid")));
        }
        self.aircraft.validate()?;
        let mut pipeline = self.pipeline.clone();
        if let Some(seed) = self.seed {
            pipeline.seed = seed;
        }
        pipeline.validate()?;
        self.uncertainty.validate()?;

        let name = if self.name.is_empty() { "scenario".to_string() } else { self.name.clone() };
        Ok(Scenario {
            route_id: self.route_id.clone().unwrap_or_else(|| format!("{name}-route")),
            aircraft_id: self.aircraft_id.clone().unwrap_or_else(|| format!("{name}-aircraft")),
            name,
            proj,
            origin,
            destination,
            env,
            departure_time: self.departure_time,
            speed: self.speed,
            route,
            aircraft: self.aircraft,
            uncertainty: self.uncertainty,
            pipeline,
            foreign_contracts: self.foreign_contracts.clone(),
        })
    }
}

impl Scenario {
    /// Reads the foreign contracts. Boxes are local coordinates, so a file
    /// that names a different origin cannot be used as is.
    pub fn load_foreign(&self) -> Result<Vec<Contract>> {
        let o = &self.proj.origin;
        self.foreign_contracts
            .iter()
            .map(|path| {
                let (c, origin) = contract_from_json(&std::fs::read_to_string(path)?)?;
                if let Some(g) = origin {
                    if (g.lat - o.lat).abs() > 1e-9 || (g.lon - o.lon).abs() > 1e-9 {
                        return Err(Error::Config(format!(
                            "{} uses origin ({}, {}) but the scenario uses ({}, {})",
                            path.display(),
                            g.lat,
                            g.lon,
                            o.lat,
                            o.lon
                        )));
                    }
                }
                Ok(c)
            })
            .collect()
    }

    pub fn request(&self, foreign: Vec<Contract>) -> PlanRequest {
        PlanRequest {
            env: self.env.clone(),
            origin: self.origin,
            destination: self.destination,
            departure_time: self.departure_time,
            speed: self.speed,
            foreign,
            route_id: self.route_id.clone(),
            aircraft_id: self.aircraft_id.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "origin": {"lat": 52.0, "lon": -1.0, "alt": 60.0},
        "destination": {"lat": 52.02, "lon": -1.0, "alt": 60.0}
    }"#;

    #[test]
    fn minimal_scenario_resolves() {
        let s = ScenarioFile::parse(MINIMAL).unwrap().resolve().unwrap();
        assert_eq!(s.origin, LocalPoint::new(0.0, 0.0, 60.0));
        assert!((s.destination.y - 0.02 * s.proj.m_per_deg_lat).abs() < 1e-9);
        assert!(s.env.bounds.contains(&Point2::new(0.0, -1000.0)));
        assert_eq!(s.pipeline, PipelineConfig::default());
    }

    #[test]
    fn unknown_fields_are_rejected_with_position() {
        let text = MINIMAL.replace("\"origin\"", "\"orgin\"");
        let err = ScenarioFile::parse(&text).unwrap_err().to_string();
        assert!(err.contains("line"), "{err}");
        let text = MINIMAL.replacen('}', ", \"speed_of_light\": 1}", 1);
        assert!(ScenarioFile::parse(&text).is_err());
        let at_top = format!("{}, \"speed_of_light\": 1}}", MINIMAL.trim_end().trim_end_matches('}'));
        assert!(ScenarioFile::parse(&at_top).is_err());
    }

    #[test]
    fn goal_inside_zone_is_rejected() {
        let mut f = ScenarioFile::parse(MINIMAL).unwrap();
        f.nfzs.push(ScenarioNfz {
            id: "z".into(),
            polygon: vec![[52.019, -1.001], [52.019, -0.999], [52.021, -0.999], [52.021, -1.001]],
            alt_range: default_alt_range(),
        });
        assert!(matches!(f.resolve(), Err(Error::Config(_))));
    }

    #[test]
    fn foreign_contract_in_another_frame_is_rejected() {
        let dir = std::env::temp_dir().join(format!("airlane-foreign-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let c = Contract::new("other", "ac", 60.0, 15.0);
        let here = GeoPoint { lat: 52.0, lon: -1.0, alt: 0.0 };
        let there = GeoPoint { lat: 51.0, lon: -1.0, alt: 0.0 };
        std::fs::write(dir.join("same.json"), crate::export::contract_to_json(&c, Some(&here)).unwrap()).unwrap();
        std::fs::write(dir.join("other.json"), crate::export::contract_to_json(&c, Some(&there)).unwrap()).unwrap();

        let mut f = ScenarioFile::parse(MINIMAL).unwrap();
        f.foreign_contracts = vec![dir.join("same.json")];
        assert_eq!(f.resolve().unwrap().load_foreign().unwrap(), vec![c]);
        f.foreign_contracts.push(dir.join("other.json"));
        assert!(matches!(f.resolve().unwrap().load_foreign(), Err(Error::Config(_))));
        std::fs::remove_dir_all(&dir).unwrap();
    }
}

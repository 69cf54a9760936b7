use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::LocalPoint;

/// Either a fixed cruise speed or an admissible speed band, m/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SpeedSpec {
    Cruise(f64),
    Bounds { min: f64, max: f64 },
}

impl SpeedSpec {
    /// `(slowest, fastest)`.
    pub fn range(&self) -> (f64, f64) {
        match *self {
            SpeedSpec::Cruise(v) => (v, v),
            SpeedSpec::Bounds { min, max } => (min, max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub waypoints: Vec<LocalPoint>,
    pub departure_time: f64,
    pub speed: SpeedSpec,
    /// Optional speed command for the leg ending at each waypoint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leg_speeds: Option<Vec<f64>>,
}

impl Route {
    pub fn new(waypoints: Vec<LocalPoint>, departure_time: f64, speed: SpeedSpec) -> Result<Self> {
        let r = Self { waypoints, departure_time, speed, leg_speeds: None };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if self.waypoints.len() < 2 {
            return Err(Error::Config("a route needs at least two waypoints".into()));
        }
        for (i, w) in self.waypoints.windows(2).enumerate() {
            if w[0].horizontal_distance(&w[1]) == 0.0 && w[0].z == w[1].z {
                return Err(Error::Config(format!("waypoints {i} and {} coincide", i + 1)));
            }
        }
        if let Some(s) = &self.leg_speeds {
            if s.len() != self.waypoints.len() || s.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::Config("leg speeds must be positive, one per waypoint".into()));
            }
        }
        Ok(())
    }

    pub fn leg_speed(&self, j: usize, default: f64) -> f64 {
        self.leg_speeds.as_ref().and_then(|s| s.get(j).copied()).unwrap_or(default)
    }

    /// Horizontal length in meters.
    pub fn length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| w[0].horizontal_distance(&w[1])).sum()
    }

    /// Heading of the first leg, degrees clockwise from north.
    pub fn initial_heading(&self) -> f64 {
        let (a, b) = (self.waypoints[0], self.waypoints[1]);
        crate::sim::normalize_heading((b.x - a.x).atan2(b.y - a.y).to_degrees())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedWaypoint {
    pub point: LocalPoint,
    pub earliest: f64,
    pub latest: f64,
}

/// Arrival window at each waypoint from cumulative distance and the speed band.
pub fn estimate_timed_route(route: &Route) -> Result<Vec<TimedWaypoint>> {
    let (slow, fast) = route.speed.range();
    if !(slow > 0.0 && fast >= slow && fast.is_finite()) {
        return Err(Error::Config(format!("invalid speed specification {:?}", route.speed)));
    }
    let mut dist = 0.0;
    let mut out = Vec::with_capacity(route.waypoints.len());
    for (i, w) in route.waypoints.iter().enumerate() {
        if i > 0 {
            dist += route.waypoints[i - 1].horizontal_distance(w);
        }
        out.push(TimedWaypoint {
            point: *w,
            earliest: route.departure_time + dist / fast,
            latest: route.departure_time + dist / slow,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(xs: &[(f64, f64)]) -> Vec<LocalPoint> {
        xs.iter().map(|&(x, y)| LocalPoint::new(x, y, 30.0)).collect()
    }

    #[test]
    fn fixed_speed_arrival() {
        let r = Route::new(pts(&[(0.0, 0.0), (1000.0, 0.0)]), 10.0, SpeedSpec::Cruise(20.0)).unwrap();
        let t = estimate_timed_route(&r).unwrap();
        assert_eq!(t[1].earliest, 60.0);
        assert_eq!(t[1].latest, 60.0);
    }

    #[test]
    fn speed_band_window() {
        let r = Route::new(
            pts(&[(0.0, 0.0), (1000.0, 0.0), (1000.0, 1600.0)]),
            0.0,
            SpeedSpec::Bounds { min: 16.0, max: 26.0 },
        )
        .unwrap();
        let t = estimate_timed_route(&r).unwrap();
        assert!((t[2].earliest - 100.0).abs() < 1e-12);
        assert!((t[2].latest - 162.5).abs() < 1e-12);
        assert!(t.iter().all(|w| w.earliest <= w.latest));
    }

    #[test]
    fn bad_speed_and_route() {
        let r = Route::new(pts(&[(0.0, 0.0), (1.0, 0.0)]), 0.0, SpeedSpec::Cruise(0.0)).unwrap();
        assert!(matches!(estimate_timed_route(&r), Err(Error::Config(_))));
        assert!(Route::new(pts(&[(0.0, 0.0)]), 0.0, SpeedSpec::Cruise(1.0)).is_err());
        assert!(Route::new(pts(&[(0.0, 0.0), (0.0, 0.0)]), 0.0, SpeedSpec::Cruise(1.0)).is_err());
    }
}

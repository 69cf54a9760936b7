use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    clip_segment_to_rect, point_in_polygon, polygons_intersect, rect_intersects_polygon, segment_intersects_polygon,
    swept_square,
};
use crate::ovmodel::NoFlyZone;
use crate::{Point2, Rect};

/// Footprint of a foreign OV entry with the interval during which it is valid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicObstacle {
    pub footprint: Rect,
    pub active: [f64; 2],
}

/// Planning space in the local plane. Zones are treated as full-height
/// obstacles since planning is horizontal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub bounds: Rect,
    pub nfzs: Vec<NoFlyZone>,
    pub dynamic_obstacles: Vec<DynamicObstacle>,
    /// Extra stand-off per zone, same order as `nfzs`, measured in the
    /// max norm so that it matches axis-aligned OV boxes. Grown by the
    /// pipeline when an OV clips a zone the route itself clears.
    pub clearance: Vec<f64>,
    /// Dynamic obstacles promoted to static ones during conflict repair.
    pub blocked: Vec<Rect>,
}

impl Environment {
    pub fn new(bounds: Rect, nfzs: Vec<NoFlyZone>) -> Self {
        let clearance = vec![0.0; nfzs.len()];
        Self { bounds, nfzs, dynamic_obstacles: Vec::new(), clearance, blocked: Vec::new() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bounds.width() > 0.0 && self.bounds.height() > 0.0) {
            return Err(Error::Config("planning bounds are empty".into()));
        }
        if self.clearance.len() != self.nfzs.len() {
            return Err(Error::Config("one clearance value per no-fly zone".into()));
        }
        for z in &self.nfzs {
            z.validate()?;
        }
        Ok(())
    }

    /// Checks that an endpoint lies in bounds and outside every obstacle.
    pub fn validate_endpoint(&self, name: &str, p: &Point2) -> Result<()> {
        if !self.bounds.contains(p) {
            return Err(Error::Config(format!("{name} ({:.1}, {:.1}) outside planning bounds", p.x, p.y)));
        }
        if let Some(z) = self.nfzs.iter().find(|z| point_in_polygon(p, &z.polygon)) {
            return Err(Error::Config(format!("{name} lies inside no-fly zone {}", z.id)));
        }
        Ok(())
    }

    pub fn point_free(&self, p: &Point2) -> bool {
        if !self.bounds.contains(p) {
            return false;
        }
        let zones_clear = self.nfzs.iter().zip(&self.clearance).all(|(z, &c)| {
            if c > 0.0 {
                !rect_intersects_polygon(&Rect::new(p.x - c, p.y - c, p.x + c, p.y + c), &z.polygon)
            } else {
                !point_in_polygon(p, &z.polygon)
            }
        });
        zones_clear && !self.blocked.iter().any(|r| r.contains(p))
    }

    pub fn segment_free(&self, a: &Point2, b: &Point2) -> bool {
        if !self.bounds.contains(a) || !self.bounds.contains(b) {
            return false;
        }
        let zones_clear = self.nfzs.iter().zip(&self.clearance).all(|(z, &c)| {
            let zb = z.bounds().expanded(c.max(0.0));
            let seg = Rect::bounding([a, b]).expect("two points");
            if !zb.intersects(&seg) {
                return true;
            }
            if c > 0.0 {
                !polygons_intersect(&swept_square(a, b, c), &z.polygon)
            } else {
                !segment_intersects_polygon(a, b, &z.polygon)
            }
        });
        zones_clear && !self.blocked.iter().any(|r| clip_segment_to_rect(a, b, r).is_some())
    }

    pub fn path_free(&self, path: &[Point2]) -> bool {
        path.windows(2).all(|w| self.segment_free(&w[0], &w[1]))
    }
}

pub fn path_length(path: &[Point2]) -> f64 {
    path.windows(2).map(|w| w[0].dist(&w[1])).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env_with_square() -> Environment {
        let z = NoFlyZone::from_rect("sq", &Rect::new(40.0, 40.0, 60.0, 60.0));
        Environment::new(Rect::new(0.0, 0.0, 100.0, 100.0), vec![z])
    }

    #[test]
    fn segments_and_points() {
        let mut env = env_with_square();
        assert!(env.segment_free(&Point2::new(0.0, 10.0), &Point2::new(100.0, 10.0)));
        assert!(!env.segment_free(&Point2::new(0.0, 50.0), &Point2::new(100.0, 50.0)));
        assert!(!env.point_free(&Point2::new(50.0, 50.0)));
        assert!(!env.point_free(&Point2::new(150.0, 50.0)));
        env.clearance[0] = 35.0;
        assert!(!env.segment_free(&Point2::new(0.0, 10.0), &Point2::new(100.0, 10.0)));
        assert!(env.segment_free(&Point2::new(0.0, 4.0), &Point2::new(100.0, 4.0)));
        env.blocked.push(Rect::new(0.0, 0.0, 10.0, 10.0));
        assert!(!env.segment_free(&Point2::new(0.0, 4.0), &Point2::new(100.0, 4.0)));
    }

    #[test]
    fn clearance_is_max_norm() {
        let mut env = env_with_square();
        env.clearance[0] = 10.0;
        // Euclidean distance to the corner is 11.3 but the square around the
        // point still reaches the zone.
        assert!(!env.point_free(&Point2::new(32.0, 32.0)));
        assert!(env.point_free(&Point2::new(29.0, 32.0)));
        assert!(!env.segment_free(&Point2::new(0.0, 64.0), &Point2::new(64.0, 0.0)));
        assert!(env.segment_free(&Point2::new(0.0, 59.0), &Point2::new(59.0, 0.0)));
    }

    #[test]
    fn endpoint_validation() {
        let env = env_with_square();
        assert!(env.validate_endpoint("goal", &Point2::new(50.0, 50.0)).is_err());
        assert!(env.validate_endpoint("goal", &Point2::new(500.0, 50.0)).is_err());
        assert!(env.validate_endpoint("goal", &Point2::new(5.0, 5.0)).is_ok());
    }
}

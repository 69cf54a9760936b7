//! Route planning and probabilistic 4D operational-volume contracts for
//! small unmanned and urban air mobility aircraft.
//!
//! Geometry and geodesy are generic over [`num::Scalar`]; the aliases below
//! fix them to `f64`, which is what the simulation, reachability and planning
//! layers use.

// Validity checks are written `!(x > 0.0)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod export;
pub mod geo;
pub mod geometry;
pub mod num;
pub mod ovmodel;
pub mod pipeline;
pub mod planner;
pub mod reach;
pub mod rng;
pub mod scenario;
pub mod sim;

pub use error::{Error, Result};

pub type GeoPoint = geo::GeoPoint<f64>;
pub type LocalPoint = geo::LocalPoint<f64>;
pub type Projection = geo::Projection<f64>;
pub type NormalizationBox = geo::NormalizationBox<f64>;
pub type Point2 = geometry::Point2<f64>;
pub type Rect = geometry::Rect<f64>;
pub type Aabb = geometry::Aabb<f64>;

pub type GeoPointF32 = geo::GeoPoint<f32>;
pub type LocalPointF32 = geo::LocalPoint<f32>;
pub type ProjectionF32 = geo::Projection<f32>;

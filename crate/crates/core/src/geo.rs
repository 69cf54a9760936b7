//! Geographic coordinates, the local flat-plane projection and per-axis
//! normalization into the unit cube.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Scalar;

/// Half-width, in degrees, of the window around the projection origin in
/// which the flat-plane approximation is accepted.
pub const VALIDITY_WINDOW_DEG: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeoPoint<T> {
    pub lat: T,
    pub lon: T,
    pub alt: T,
}

impl<T: Scalar> GeoPoint<T> {
    pub fn new(lat: T, lon: T, alt: T) -> Result<Self> {
        let p = Self { lat, lon, alt };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lat.is_finite() && self.lon.is_finite() && self.alt.is_finite()) {
            return Err(Error::Domain(format!("non-finite geographic point {self:?}")));
        }
        if self.lat.abs() > T::lit(90.0) {
            return Err(Error::Domain(format!("latitude {} outside [-90, 90]", self.lat)));
        }
        if self.lon.abs() > T::lit(180.0) {
            return Err(Error::Domain(format!("longitude {} outside [-180, 180]", self.lon)));
        }
        if self.alt < T::zero() {
            return Err(Error::Domain(format!("negative altitude {}", self.alt)));
        }
        Ok(())
    }
}

/// Meters east (`x`), north (`y`) and up (`z`) of a projection origin.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LocalPoint<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Scalar> LocalPoint<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn xy(x: T, y: T) -> Self {
        Self { x, y, z: T::zero() }
    }

    pub fn horizontal_distance(&self, other: &Self) -> T {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn as_array(&self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [T; 3]) -> Self {
        Self { x: a[0], y: a[1], z: a[2] }
    }
}

/// Length in meters of one degree of latitude and of longitude at `lat`
/// (degrees), from the truncated cosine series of the reference ellipsoid.
pub fn meters_per_degree<T: Scalar>(lat: T) -> Result<(T, T)> {
    if !lat.is_finite() || lat.abs() > T::lit(90.0) {
        return Err(Error::Domain(format!("latitude {lat} outside [-90, 90]")));
    }
    let phi = lat.to_radians();
    let c = |k: f64| (T::lit(k) * phi).cos();
    let m_lat = T::lit(111_132.92) - T::lit(559.82) * c(2.0) + T::lit(1.175) * c(4.0)
        - T::lit(0.0023) * c(6.0);
    let m_lon = T::lit(111_412.84) * c(1.0) - T::lit(93.5) * c(3.0) + T::lit(0.118) * c(5.0);
    Ok((m_lat, m_lon))
}

/// Local tangent-plane projection anchored at a scenario origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection<T> {
    pub origin: GeoPoint<T>,
    pub m_per_deg_lat: T,
    pub m_per_deg_lon: T,
}

impl<T: Scalar> Projection<T> {
    pub fn new(origin: GeoPoint<T>) -> Result<Self> {
        origin.validate()?;
        let (m_per_deg_lat, m_per_deg_lon) = meters_per_degree(origin.lat)?;
        if m_per_deg_lon <= T::lit(1.0) {
            return Err(Error::Domain(format!(
                "origin latitude {} too close to a pole for a flat projection",
                origin.lat
            )));
        }
        Ok(Self { origin, m_per_deg_lat, m_per_deg_lon })
    }

    pub fn to_local(&self, p: &GeoPoint<T>) -> Result<LocalPoint<T>> {
        let dlat = p.lat - self.origin.lat;
        let dlon = p.lon - self.origin.lon;
        let window = T::lit(VALIDITY_WINDOW_DEG);
        if !(dlat.abs() <= window && dlon.abs() <= window) {
            return Err(Error::Range(format!(
                "({}, {}) is outside the ±{}° projection window around ({}, {})",
                p.lat, p.lon, VALIDITY_WINDOW_DEG, self.origin.lat, self.origin.lon
            )));
        }
        Ok(LocalPoint {
            x: dlon * self.m_per_deg_lon,
            y: dlat * self.m_per_deg_lat,
            z: p.alt,
        })
    }

    pub fn to_geo(&self, p: &LocalPoint<T>) -> Result<GeoPoint<T>> {
        if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
            return Err(Error::Domain(format!("non-finite local point {p:?}")));
        }
        Ok(GeoPoint {
            lat: self.origin.lat + p.y / self.m_per_deg_lat,
            lon: self.origin.lon + p.x / self.m_per_deg_lon,
            alt: p.z,
        })
    }
}

/// Axis-aligned box mapping three coordinates affinely onto `[0, 1]`.
///
/// An axis with zero extent is degenerate and maps every value to `0.5`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationBox<T> {
    pub min: [T; 3],
    pub max: [T; 3],
}

impl<T: Scalar> NormalizationBox<T> {
    pub fn new(min: [T; 3], max: [T; 3]) -> Result<Self> {
        for a in 0..3 {
            if !(min[a].is_finite() && max[a].is_finite()) || max[a] < min[a] {
                return Err(Error::Domain(format!("invalid normalization axis {a}: [{}, {}]", min[a], max[a])));
            }
        }
        Ok(Self { min, max })
    }

    /// Smallest box enclosing every point. Fails on an empty input.
    pub fn enclosing<I>(points: I) -> Result<Self>
    where
        I: IntoIterator<Item = [T; 3]>,
    {
        let mut it = points.into_iter();
        let first = it
            .next()
            .ok_or_else(|| Error::InsufficientData("cannot bound an empty point set".into()))?;
        let (mut min, mut max) = (first, first);
        for p in it {
            for a in 0..3 {
                min[a] = min[a].min(p[a]);
                max[a] = max[a].max(p[a]);
            }
        }
        Self::new(min, max)
    }

    /// Grows every axis by `margin[a]` on both sides.
    pub fn padded(&self, margin: [T; 3]) -> Self {
        let mut out = *self;
        for ((lo, hi), m) in out.min.iter_mut().zip(out.max.iter_mut()).zip(margin) {
            *lo = *lo - m;
            *hi = *hi + m;
        }
        out
    }

    pub fn extent(&self, axis: usize) -> T {
        self.max[axis] - self.min[axis]
    }

    pub fn is_degenerate(&self, axis: usize) -> bool {
        self.extent(axis) <= T::zero()
    }

    pub fn contains(&self, p: &[T; 3]) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn normalize_point(&self, p: &[T; 3]) -> Result<[T; 3]> {
        if !self.contains(p) {
            return Err(Error::Range(format!("point {p:?} outside normalization box {self:?}")));
        }
        Ok(self.normalize_unchecked(p))
    }

    /// Affine map without the containment check; values outside the box
    /// land outside `[0, 1]`.
    pub fn normalize_unchecked(&self, p: &[T; 3]) -> [T; 3] {
        let mut out = [T::half(); 3];
        for a in 0..3 {
            if !self.is_degenerate(a) {
                out[a] = (p[a] - self.min[a]) / self.extent(a);
            }
        }
        out
    }

    pub fn normalize(&self, points: &[[T; 3]]) -> Result<Vec<[T; 3]>> {
        points.iter().map(|p| self.normalize_point(p)).collect()
    }

    /// Inverse affine map. Accepts values outside `[0, 1]`; degenerate axes
    /// collapse to their single coordinate.
    pub fn denormalize_point(&self, q: &[T; 3]) -> [T; 3] {
        let mut out = self.min;
        for a in 0..3 {
            if !self.is_degenerate(a) {
                out[a] = self.min[a] + q[a] * self.extent(a);
            }
        }
        out
    }

    pub fn denormalize(&self, points: &[[T; 3]]) -> Vec<[T; 3]> {
        points.iter().map(|q| self.denormalize_point(q)).collect()
    }

    /// Converts a length along `axis` from normalized units to meters.
    pub fn denormalize_length(&self, axis: usize, len: T) -> T {
        len * self.extent(axis)
    }

    /// Converts a length in meters along `axis` to normalized units.
    pub fn normalize_length(&self, axis: usize, len: T) -> T {
        if self.is_degenerate(axis) {
            T::zero()
        } else {
            len / self.extent(axis)
        }
    }
}

//! Operational volumes, contracts, occupancy grids and the queries the
//! planner and the evaluation run against them.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{rect_intersects_polygon, union_area};
use crate::reach::ReachTube;
use crate::sim::TrajectorySet;
use crate::{Aabb, LocalPoint, Point2, Projection, Rect};

pub const DEFAULT_CELL_SIZE: f64 = 10.0;
const TIME_EPS: f64 = 1e-9;

/// Square-cell histogram of aircraft positions at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyGrid {
    pub cell_size: f64,
    /// South-west corner of cell `(0, 0)`.
    pub origin: LocalPoint,
    pub rows: usize,
    pub cols: usize,
    /// Row-major, row index grows northward.
    pub counts: Vec<u32>,
    pub n_total: usize,
}

impl OccupancyGrid {
    /// Grid aligned to multiples of `cell_size`, covering `region` and every
    /// point, with one count per point.
    pub fn build(points: &[[f64; 3]], region: &Rect, cell_size: f64) -> Result<Self> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(Error::Config(format!("cell size must be positive, got {cell_size}")));
        }
        let mut ext = *region;
        for p in points {
            ext = ext.union(&Rect::new(p[0], p[1], p[0], p[1]));
        }
        let ox = (ext.min_x / cell_size).floor() * cell_size;
        let oy = (ext.min_y / cell_size).floor() * cell_size;
        let cols = ((ext.max_x - ox) / cell_size).floor() as usize + 1;
        let rows = ((ext.max_y - oy) / cell_size).floor() as usize + 1;
        let mut grid = Self {
            cell_size,
            origin: LocalPoint::new(ox, oy, 0.0),
            rows,
            cols,
            counts: vec![0; rows * cols],
            n_total: points.len(),
        };
        for p in points {
            let (r, c) = grid.cell_of(p[0], p[1]).expect("grid covers every sample");
            grid.counts[r * cols + c] += 1;
        }
        Ok(grid)
    }

    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let c = ((x - self.origin.x) / self.cell_size).floor();
        let r = ((y - self.origin.y) / self.cell_size).floor();
        if c < 0.0 || r < 0.0 || c >= self.cols as f64 || r >= self.rows as f64 || !c.is_finite() || !r.is_finite() {
            return None;
        }
        Some((r as usize, c as usize))
    }

    pub fn count(&self, row: usize, col: usize) -> u32 {
        self.counts[row * self.cols + col]
    }

    pub fn count_at(&self, x: f64, y: f64) -> u32 {
        self.cell_of(x, y).map_or(0, |(r, c)| self.count(r, c))
    }

    pub fn probability_at(&self, x: f64, y: f64) -> f64 {
        if self.n_total == 0 {
            return 0.0;
        }
        self.count_at(x, y) as f64 / self.n_total as f64
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    pub fn cell_rect(&self, row: usize, col: usize) -> Rect {
        let x = self.origin.x + col as f64 * self.cell_size;
        let y = self.origin.y + row as f64 * self.cell_size;
        Rect::new(x, y, x + self.cell_size, y + self.cell_size)
    }

    pub fn bounds(&self) -> Rect {
        Rect::new(
            self.origin.x,
            self.origin.y,
            self.origin.x + self.cols as f64 * self.cell_size,
            self.origin.y + self.rows as f64 * self.cell_size,
        )
    }
}

/// One `(region, time, distribution)` triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvEntry {
    pub region: Aabb,
    pub t: f64,
    pub dist: OccupancyGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperationalVolume {
    pub entries: Vec<OvEntry>,
    pub t0: f64,
    pub t_d: f64,
    pub delta: f64,
}

impl OperationalVolume {
    pub fn end(&self) -> f64 {
        self.t0 + self.t_d
    }

    pub fn is_active(&self, t: f64) -> bool {
        t >= self.t0 - TIME_EPS && t <= self.end() + TIME_EPS
    }

    /// Entry for the one-second interval containing `t`.
    pub fn entry_at(&self, t: f64) -> Option<&OvEntry> {
        if !self.is_active(t) || self.entries.is_empty() {
            return None;
        }
        let k = ((t - self.t0 + TIME_EPS).floor().max(0.0) as usize).min(self.entries.len() - 1);
        Some(&self.entries[k])
    }

    pub fn footprints(&self) -> Vec<Rect> {
        self.entries.iter().map(|e| e.region.footprint()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contract {
    pub route_id: String,
    pub aircraft_id: String,
    pub t_d: f64,
    pub delta: f64,
    pub ovs: Vec<OperationalVolume>,
}

impl Contract {
    pub fn new(route_id: impl Into<String>, aircraft_id: impl Into<String>, t_d: f64, delta: f64) -> Self {
        Self { route_id: route_id.into(), aircraft_id: aircraft_id.into(), t_d, delta, ovs: Vec::new() }
    }

    pub fn active_count(&self, t: f64) -> usize {
        self.ovs.iter().filter(|o| o.is_active(t)).count()
    }

    pub fn span(&self) -> Option<(f64, f64)> {
        Some((self.ovs.first()?.t0, self.ovs.last()?.end()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoFlyZone {
    pub id: String,
    pub polygon: Vec<Point2>,
    pub alt_range: [f64; 2],
}

impl NoFlyZone {
    pub fn new(id: impl Into<String>, polygon: Vec<Point2>, alt_range: [f64; 2]) -> Result<Self> {
        let z = Self { id: id.into(), polygon, alt_range };
        z.validate()?;
        Ok(z)
    }

    /// Rectangular zone covering every altitude.
    pub fn from_rect(id: impl Into<String>, r: &Rect) -> Self {
        Self { id: id.into(), polygon: r.corners().to_vec(), alt_range: [0.0, f64::MAX] }
    }

    pub fn validate(&self) -> Result<()> {
        if !crate::geometry::polygon_is_simple(&self.polygon) {
            return Err(Error::Config(format!("no-fly zone {} is not a simple polygon", self.id)));
        }
        if !(self.alt_range[0] <= self.alt_range[1]) {
            return Err(Error::Config(format!("no-fly zone {} has an empty altitude range", self.id)));
        }
        Ok(())
    }

    pub fn bounds(&self) -> Rect {
        Rect::bounding(&self.polygon).expect("validated polygon")
    }
}

/// Assembles an OV from a reach tube and the batch it was learned from.
/// `positions[traj][k]` are local meters aligned with the tube.
pub fn build_ov_from_positions(
    tube: &ReachTube,
    positions: &[Vec<[f64; 3]>],
    delta: f64,
    cell_size: f64,
) -> Result<OperationalVolume> {
    let t_d = tube.duration as f64;
    if !(0.0..t_d).contains(&delta) {
        return Err(Error::Config(format!("offset {delta} outside [0, {t_d})")));
    }
    if positions.is_empty() || positions.iter().any(|p| p.len() != tube.duration + 1) {
        return Err(Error::Alignment(format!(
            "trajectories must each have {} samples to match the tube",
            tube.duration + 1
        )));
    }
    let mut at_k = Vec::with_capacity(positions.len());
    let entries = (0..=tube.duration)
        .map(|k| {
            let region = tube.segments[tube.segment_index(k)];
            at_k.clear();
            at_k.extend(positions.iter().map(|tr| tr[k]));
            Ok(OvEntry {
                region,
                t: tube.t0 + k as f64,
                dist: OccupancyGrid::build(&at_k, &region.footprint(), cell_size)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OperationalVolume { entries, t0: tube.t0, t_d, delta })
}

pub fn build_ov(
    tube: &ReachTube,
    traj: &TrajectorySet,
    proj: &Projection,
    delta: f64,
    cell_size: f64,
) -> Result<OperationalVolume> {
    if (traj.t0 - tube.t0).abs() > TIME_EPS || traj.duration != tube.duration {
        return Err(Error::Alignment(format!(
            "batch [{}, +{}] does not match tube [{}, +{}]",
            traj.t0, traj.duration, tube.t0, tube.duration
        )));
    }
    build_ov_from_positions(tube, &traj.local_positions(proj)?, delta, cell_size)
}

/// Union of the horizontal footprints, km².
pub fn ov_total_volume(ov: &OperationalVolume) -> f64 {
    union_area(&ov.footprints()) / 1e6
}

/// Fraction of the simulated aircraft in the grid cell containing `s` at
/// the entry covering `t`.
pub fn probability(ov: &OperationalVolume, s: &LocalPoint, t: f64) -> Result<f64> {
    let entry = ov
        .entry_at(t)
        .ok_or(Error::TemporalRange { t, start: ov.t0, end: ov.end() })?;
    Ok(entry.dist.probability_at(s.x, s.y))
}

pub fn ov_contains(ov: &OperationalVolume, p: &LocalPoint, t: f64) -> bool {
    ov.entry_at(t).is_some_and(|e| e.region.contains(&p.as_array()))
}

pub fn contract_contains(contract: &Contract, p: &LocalPoint, t: f64) -> bool {
    contract.ovs.iter().any(|ov| ov_contains(ov, p, t))
}

pub fn ov_intersects_nfz(ov: &OperationalVolume, nfz: &NoFlyZone) -> bool {
    violating_entries(ov, nfz).next().is_some()
}

/// Indices of entries whose box meets the zone.
pub fn violating_entries<'a>(ov: &'a OperationalVolume, nfz: &'a NoFlyZone) -> impl Iterator<Item = usize> + 'a {
    let zb = nfz.bounds();
    ov.entries.iter().enumerate().filter_map(move |(i, e)| {
        let alt_overlap = e.region.min[2] <= nfz.alt_range[1] && nfz.alt_range[0] <= e.region.max[2];
        let fp = e.region.footprint();
        (alt_overlap && fp.intersects(&zb) && rect_intersects_polygon(&fp, &nfz.polygon)).then_some(i)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DurationMismatch { ov: usize, t_d: f64, expected: f64 },
    OffsetMismatch { ov: usize, delta: f64, expected: f64 },
    OffsetOutOfRange { ov: usize, delta: f64 },
    IrregularSpacing { ov: usize, entry: usize },
    EntryCount { ov: usize, found: usize, expected: usize },
    StartChain { ov: usize, gap: f64, expected: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DurationMismatch { ov, t_d, expected } => {
                write!(f, "OV {ov}: duration {t_d} s differs from contract duration {expected} s")
            }
            Violation::OffsetMismatch { ov, delta, expected } => {
                write!(f, "OV {ov}: offset {delta} s differs from contract offset {expected} s")
            }
            Violation::OffsetOutOfRange { ov, delta } => write!(f, "OV {ov}: offset {delta} s outside [0, t_d)"),
            Violation::IrregularSpacing { ov, entry } => write!(f, "OV {ov}: entry {entry} is not 1 s after its predecessor"),
            Violation::EntryCount { ov, found, expected } => {
                write!(f, "OV {ov}: {found} entries, expected {expected}")
            }
            Violation::StartChain { ov, gap, expected } => {
                write!(f, "OV {ov}: starts {gap} s after its predecessor, expected {expected} s")
            }
        }
    }
}

/// Checks uniform durations, regular 1 s spacing and the start-time chain
/// `t0[j+1] = t0[j] + t_d - delta`.
pub fn validate_contract(contract: &Contract) -> Vec<Violation> {
    let mut out = Vec::new();
    let (t_d, delta) = (contract.t_d, contract.delta);
    for (i, ov) in contract.ovs.iter().enumerate() {
        if (ov.t_d - t_d).abs() > TIME_EPS {
            out.push(Violation::DurationMismatch { ov: i, t_d: ov.t_d, expected: t_d });
        }
        if (ov.delta - delta).abs() > TIME_EPS {
            out.push(Violation::OffsetMismatch { ov: i, delta: ov.delta, expected: delta });
        }
        if !(ov.delta >= 0.0 && ov.delta < ov.t_d) {
            out.push(Violation::OffsetOutOfRange { ov: i, delta: ov.delta });
        }
        let expected = ov.t_d.round() as usize + 1;
        if ov.entries.len() != expected {
            out.push(Violation::EntryCount { ov: i, found: ov.entries.len(), expected });
        }
        if let Some(first) = ov.entries.first() {
            if (first.t - ov.t0).abs() > TIME_EPS {
                out.push(Violation::IrregularSpacing { ov: i, entry: 0 });
            }
        }
        for (k, w) in ov.entries.windows(2).enumerate() {
            if (w[1].t - w[0].t - 1.0).abs() > TIME_EPS {
                out.push(Violation::IrregularSpacing { ov: i, entry: k + 1 });
            }
        }
        if i > 0 {
            let gap = ov.t0 - contract.ovs[i - 1].t0;
            if (gap - (t_d - delta)).abs() > TIME_EPS {
                out.push(Violation::StartChain { ov: i, gap, expected: t_d - delta });
            }
        }
    }
    out
}

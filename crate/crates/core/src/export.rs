//! File formats: contract JSON, GeoJSON geometry, CSV dumps.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::ovmodel::{Contract, OccupancyGrid, OperationalVolume, OvEntry};
use crate::planner::{PlanTree, Route};
use crate::sim::TrajectorySet;
use crate::{Aabb, GeoPoint, LocalPoint, Projection};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridDoc {
    origin: [f64; 2],
    cell_size: f64,
    rows: usize,
    cols: usize,
    counts: Vec<u32>,
    n_total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryDoc {
    t: f64,
    #[serde(rename = "box")]
    bx: [f64; 6],
    grid: GridDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OvDoc {
    t0: f64,
    entries: Vec<EntryDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ContractDoc {
    route_id: String,
    aircraft_id: String,
    t_d: f64,
    delta: f64,
    /// Geographic origin of the local frame the boxes are expressed in.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    origin: Option<GeoPoint>,
    ovs: Vec<OvDoc>,
}

pub fn contract_to_json(contract: &Contract, origin: Option<&GeoPoint>) -> Result<String> {
    let doc = ContractDoc {
        route_id: contract.route_id.clone(),
        aircraft_id: contract.aircraft_id.clone(),
        t_d: contract.t_d,
        delta: contract.delta,
        origin: origin.copied(),
        ovs: contract
            .ovs
            .iter()
            .map(|ov| OvDoc {
                t0: ov.t0,
                entries: ov
                    .entries
                    .iter()
                    .map(|e| EntryDoc {
                        t: e.t,
                        bx: e.region.to_array(),
                        grid: GridDoc {
                            origin: [e.dist.origin.x, e.dist.origin.y],
                            cell_size: e.dist.cell_size,
                            rows: e.dist.rows,
                            cols: e.dist.cols,
                            counts: e.dist.counts.clone(),
                            n_total: e.dist.n_total,
                        },
                    })
                    .collect(),
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

/// Parses a contract and the origin of its frame, if recorded.
pub fn contract_from_json(text: &str) -> Result<(Contract, Option<GeoPoint>)> {
    let doc: ContractDoc = serde_json::from_str(text)
        .map_err(|e| Error::Format(format!("contract line {} column {}: {e}", e.line(), e.column())))?;
    let ovs = doc
        .ovs
        .into_iter()
        .map(|ov| {
            let entries = ov
                .entries
                .into_iter()
                .map(|e| {
                    let g = e.grid;
                    if g.counts.len() != g.rows * g.cols {
                        return Err(Error::Format(format!("grid at t = {} has {} counts for {}x{}", e.t, g.counts.len(), g.rows, g.cols)));
                    }
                    Ok(OvEntry {
                        region: Aabb::from_array(e.bx),
                        t: e.t,
                        dist: OccupancyGrid {
                            cell_size: g.cell_size,
                            origin: LocalPoint::new(g.origin[0], g.origin[1], 0.0),
                            rows: g.rows,
                            cols: g.cols,
                            counts: g.counts,
                            n_total: g.n_total,
                        },
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(OperationalVolume { entries, t0: ov.t0, t_d: doc.t_d, delta: doc.delta })
        })
        .collect::<Result<Vec<_>>>()?;
    let contract = Contract { route_id: doc.route_id, aircraft_id: doc.aircraft_id, t_d: doc.t_d, delta: doc.delta, ovs };
    Ok((contract, doc.origin))
}

fn lon_lat(proj: &Projection, x: f64, y: f64) -> Result<[f64; 2]> {
    let g = proj.to_geo(&LocalPoint::new(x, y, 0.0))?;
    Ok([g.lon, g.lat])
}

/// One closed 4-vertex polygon per OV entry.
pub fn footprints_geojson(contract: &Contract, proj: &Projection) -> Result<Value> {
    let mut features = Vec::new();
    for (j, ov) in contract.ovs.iter().enumerate() {
        for e in &ov.entries {
            let fp = e.region.footprint();
            let mut ring = fp.corners().iter().map(|c| lon_lat(proj, c.x, c.y)).collect::<Result<Vec<_>>>()?;
            ring.push(ring[0]);
            features.push(json!({
                "type": "Feature",
                "geometry": {"type": "Polygon", "coordinates": [ring]},
                "properties": {"t": e.t, "ov_index": j, "alt_range": [e.region.min[2], e.region.max[2]]},
            }));
        }
    }
    Ok(json!({"type": "FeatureCollection", "features": features}))
}

pub fn route_geojson(route: &Route, proj: &Projection) -> Result<Value> {
    let coords = route
        .waypoints
        .iter()
        .map(|p| proj.to_geo(p).map(|g| [g.lon, g.lat, g.alt]))
        .collect::<Result<Vec<_>>>()?;
    let (lo, hi) = route.speed.range();
    Ok(json!({
        "type": "FeatureCollection",
        "features": [{
            "type": "Feature",
            "geometry": {"type": "LineString", "coordinates": coords},
            "properties": {"departure_time": route.departure_time, "speed_bounds": [lo, hi]},
        }],
    }))
}

/// Shortest `%g`-style rendering with nine significant digits.
pub fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let mag = v.abs().log10().floor() as i32;
    if (-5..9).contains(&mag) {
        let decimals = (8 - mag).max(0) as usize;
        let s = format!("{v:.decimals$}");
        let s = if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.').to_string() } else { s };
        if s == "-0" { "0".into() } else { s }
    } else {
        format!("{v:.8e}")
    }
}

pub fn trajectories_csv(sets: &[TrajectorySet]) -> String {
    let mut out = String::from("traj_id,t,lat,lon,alt,heading,vs,tas\n");
    for (h, set) in sets.iter().enumerate() {
        for (i, tr) in set.trajectories.iter().enumerate() {
            for s in tr {
                let _ = writeln!(
                    out,
                    "{h}-{i},{},{},{},{},{},{},{}",
                    fmt_num(s.t),
                    fmt_num(s.pos.lat),
                    fmt_num(s.pos.lon),
                    fmt_num(s.pos.alt),
                    fmt_num(s.heading),
                    fmt_num(s.vs),
                    fmt_num(s.tas)
                );
            }
        }
    }
    out
}

/// Parent links as an edge list, for plotting the search tree.
pub fn tree_edges_csv(tree: &PlanTree) -> String {
    let mut out = String::from("node,parent,x,y,parent_x,parent_y,cost\n");
    for (i, n) in tree.iter() {
        let Some(p) = n.parent else { continue };
        let pn = tree.node(p).expect("live parent");
        let _ = writeln!(
            out,
            "{i},{p},{},{},{},{},{}",
            fmt_num(n.pos.x),
            fmt_num(n.pos.y),
            fmt_num(pn.pos.x),
            fmt_num(pn.pos.y),
            fmt_num(n.cost)
        );
    }
    out
}

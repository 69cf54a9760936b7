//! Brute-force oracles shared by the integration and acceptance tests. They
//! avoid the library's geometry so that a bug there cannot hide itself.
#![allow(dead_code)]

use airlane_core::ovmodel::{Contract, NoFlyZone, OccupancyGrid, OperationalVolume, OvEntry};
use airlane_core::pipeline::{plan_and_contract, PlanResult};
use airlane_core::planner::{Route, SpeedSpec};
use airlane_core::scenario::Scenario;
use airlane_core::{Aabb, Point2, Rect};

/// Even-odd ray casting.
pub fn inside_polygon(x: f64, y: f64, poly: &[Point2]) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if (a.y > y) != (b.y > y) {
            let xc = a.x + (y - a.y) / (b.y - a.y) * (b.x - a.x);
            if x < xc {
                inside = !inside;
            }
        }
    }
    inside
}

fn samples(a: Point2, b: Point2, spacing: f64) -> impl Iterator<Item = (f64, Point2)> {
    let len = ((b.x - a.x).powi(2) + (b.y - a.y).powi(2)).sqrt();
    let n = (len / spacing).ceil().max(1.0) as usize;
    (0..=n).map(move |k| {
        let u = k as f64 / n as f64;
        (u * len, Point2::new(a.x + (b.x - a.x) * u, a.y + (b.y - a.y) * u))
    })
}

fn rect_meets_polygon(r: &Rect, poly: &[Point2]) -> bool {
    let inside_rect = |p: &Point2| p.x >= r.min_x && p.x <= r.max_x && p.y >= r.min_y && p.y <= r.max_y;
    let n = poly.len();
    for i in 0..n {
        if samples(poly[i], poly[(i + 1) % n], 1.0).any(|(_, p)| inside_rect(&p)) {
            return true;
        }
    }
    let g = 12;
    (0..=g).any(|i| {
        (0..=g).any(|j| {
            let x = r.min_x + r.width() * i as f64 / g as f64;
            let y = r.min_y + r.height() * j as f64 / g as f64;
            inside_polygon(x, y, poly)
        })
    })
}

/// Route points every 2 m and every OV box, checked against every zone.
pub fn nfz_oracle(route: &Route, contract: &Contract, nfzs: &[NoFlyZone]) -> Result<(), String> {
    for z in nfzs {
        for w in route.waypoints.windows(2) {
            let (a, b) = (Point2::new(w[0].x, w[0].y), Point2::new(w[1].x, w[1].y));
            if let Some((_, p)) = samples(a, b, 2.0).find(|(_, p)| inside_polygon(p.x, p.y, &z.polygon)) {
                return Err(format!("route enters {} at ({:.1}, {:.1})", z.id, p.x, p.y));
            }
        }
        for (j, ov) in contract.ovs.iter().enumerate() {
            for e in &ov.entries {
                let r = &e.region;
                if r.max[2] < z.alt_range[0] || r.min[2] > z.alt_range[1] {
                    continue;
                }
                let fp = Rect::new(r.min[0], r.min[1], r.max[0], r.max[1]);
                if rect_meets_polygon(&fp, &z.polygon) {
                    return Err(format!("OV {j} at t = {} meets {}", e.t, z.id));
                }
            }
        }
    }
    Ok(())
}

/// Occupancy probability recomputed from the raw counts.
fn cell_probability(ov: &OperationalVolume, k: usize, x: f64, y: f64) -> f64 {
    let g = &ov.entries[k].dist;
    let c = ((x - g.origin.x) / g.cell_size).floor();
    let r = ((y - g.origin.y) / g.cell_size).floor();
    if c < 0.0 || r < 0.0 || c as usize >= g.cols || r as usize >= g.rows {
        return 0.0;
    }
    g.counts[r as usize * g.cols + c as usize] as f64 / g.n_total as f64
}

/// Every route point (2 m spacing, arrival window from the speed bounds)
/// against every foreign entry.
pub fn conflict_oracle(route: &Route, foreign: &[Contract], threshold: f64) -> Result<(), String> {
    let (lo, hi) = match route.speed {
        SpeedSpec::Cruise(v) => (v, v),
        SpeedSpec::Bounds { min, max } => (min, max),
    };
    let mut along = 0.0;
    for w in route.waypoints.windows(2) {
        let (a, b) = (Point2::new(w[0].x, w[0].y), Point2::new(w[1].x, w[1].y));
        for (d, p) in samples(a, b, 2.0) {
            let s = along + d;
            let window = [route.departure_time + s / hi, route.departure_time + s / lo];
            for c in foreign {
                for ov in &c.ovs {
                    for (k, e) in ov.entries.iter().enumerate() {
                        let end = if k + 1 == ov.entries.len() { e.t } else { e.t + 1.0 };
                        if window[1] < e.t || window[0] > end {
                            continue;
                        }
                        let r = &e.region;
                        if p.x < r.min[0] || p.x > r.max[0] || p.y < r.min[1] || p.y > r.max[1] {
                            continue;
                        }
                        let prob = cell_probability(ov, k, p.x, p.y);
                        if prob > threshold {
                            return Err(format!("({:.1}, {:.1}) meets {} at t = {} with p = {prob}", p.x, p.y, c.route_id, e.t));
                        }
                    }
                }
            }
        }
        along += ((b.x - a.x).powi(2) + (b.y - a.y).powi(2)).sqrt();
    }
    Ok(())
}

/// Fraction of each batch's samples inside the box of its own OV entry.
pub fn tube_scan(result: &PlanResult, scenario: &Scenario, threshold: f64) -> Result<(), String> {
    if result.batches.len() != result.contract.ovs.len() {
        return Err("one batch per OV expected".into());
    }
    for (j, (batch, ov)) in result.batches.iter().zip(&result.contract.ovs).enumerate() {
        let positions = batch.local_positions(&scenario.proj).map_err(|e| e.to_string())?;
        let (mut total, mut inside) = (0usize, 0usize);
        for tr in &positions {
            for (k, p) in tr.iter().enumerate() {
                total += 1;
                let e = &ov.entries[k];
                if (0..3).all(|a| p[a] >= e.region.min[a] && p[a] <= e.region.max[a]) {
                    inside += 1;
                }
            }
        }
        let ratio = inside as f64 / total as f64;
        if ratio < threshold {
            return Err(format!("OV {j}: {inside}/{total} samples inside"));
        }
    }
    Ok(())
}

/// All three oracles on an accepted result.
pub fn audit(result: &PlanResult, scenario: &Scenario, foreign: &[Contract]) -> Result<(), String> {
    let route = result.route.as_ref().ok_or("accepted result without a route")?;
    nfz_oracle(route, &result.contract, &scenario.env.nfzs)?;
    conflict_oracle(route, foreign, scenario.pipeline.conflict_threshold)?;
    tube_scan(result, scenario, scenario.pipeline.verification_threshold)
}

pub fn plan(scenario: &Scenario, foreign: Vec<Contract>) -> PlanResult {
    plan_and_contract(&scenario.request(foreign), &scenario.proj, &scenario.aircraft, &scenario.uncertainty, &scenario.pipeline)
        .expect("pipeline runs")
}

/// A foreign contract that keeps a dense block of traffic around `center`
/// for `span` seconds: 200 aircraft spread over eight 100 m cells.
pub fn blocking_contract(center: Point2, span: f64) -> Contract {
    let fp = Rect::new(center.x - 100.0, center.y - 200.0, center.x + 100.0, center.y + 200.0);
    let points: Vec<[f64; 3]> = (0..200)
        .map(|i| {
            let (col, row) = ((i % 8) % 2, (i % 8) / 2);
            [fp.min_x + 50.0 + 100.0 * col as f64, fp.min_y + 50.0 + 100.0 * row as f64, 60.0]
        })
        .collect();
    let grid = OccupancyGrid::build(&points, &fp, 100.0).unwrap();
    let mut c = Contract::new("block", "swarm", 60.0, 15.0);
    let mut t0 = 0.0;
    while t0 < span {
        c.ovs.push(OperationalVolume {
            entries: (0..=60)
                .map(|k| OvEntry {
                    region: Aabb::new([fp.min_x, fp.min_y, 0.0], [fp.max_x, fp.max_y, 200.0]),
                    t: t0 + k as f64,
                    dist: grid.clone(),
                })
                .collect(),
            t0,
            t_d: 60.0,
            delta: 15.0,
        });
        t0 += 45.0;
    }
    c
}

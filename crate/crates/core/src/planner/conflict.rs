use serde::{Deserialize, Serialize};

use super::env::DynamicObstacle;
use super::route::TimedWaypoint;
use crate::geometry::clip_segment_to_rect;
use crate::ovmodel::{Contract, OvEntry};
use crate::{Point2, Rect};

/// A route segment passing a foreign OV cell whose occupancy exceeds the
/// threshold while the aircraft may be there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conflict {
    pub contract: usize,
    pub ov: usize,
    pub entry: usize,
    pub segment: usize,
    /// Witness point and time inside the offending cell.
    pub point: Point2,
    pub t: f64,
    pub probability: f64,
    pub footprint: Rect,
}

/// Time interval during which an entry describes the airspace. The last
/// entry of an OV only covers its own instant.
pub fn entry_interval(entries: &[OvEntry], k: usize) -> [f64; 2] {
    let t = entries[k].t;
    if k + 1 == entries.len() {
        [t, t]
    } else {
        [t, t + 1.0]
    }
}

/// Range of the segment parameter `u` whose arrival window overlaps `[lo, hi]`.
/// Arrival windows are interpolated linearly between the endpoint windows.
fn time_gate(a: &TimedWaypoint, b: &TimedWaypoint, lo: f64, hi: f64) -> Option<(f64, f64)> {
    let mut u0: f64 = 0.0;
    let mut u1: f64 = 1.0;
    // earliest(u) = a.earliest + u (b.earliest - a.earliest) <= hi
    let de = b.earliest - a.earliest;
    if de.abs() < 1e-12 {
        if a.earliest > hi {
            return None;
        }
    } else {
        u1 = u1.min((hi - a.earliest) / de);
    }
    // latest(u) >= lo
    let dl = b.latest - a.latest;
    if dl.abs() < 1e-12 {
        if a.latest < lo {
            return None;
        }
    } else {
        u0 = u0.max((lo - a.latest) / dl);
    }
    (u0 <= u1).then_some((u0, u1))
}

fn intersect(a: &Rect, b: &Rect) -> Option<Rect> {
    let r = Rect::new(a.min_x.max(b.min_x), a.min_y.max(b.min_y), a.max_x.min(b.max_x), a.max_y.min(b.max_y));
    (r.min_x <= r.max_x && r.min_y <= r.max_y).then_some(r)
}

/// Conflicts of a timed route against foreign contracts. A segment point
/// conflicts when any speed within the bounds puts the aircraft there while
/// an entry is valid and the entry's cell at that point holds more than
/// `threshold` of the foreign batch.
pub fn find_conflicts(timed: &[TimedWaypoint], foreign: &[Contract], threshold: f64) -> Vec<Conflict> {
    let mut out = Vec::new();
    for (s, w) in timed.windows(2).enumerate() {
        let (wa, wb) = (&w[0], &w[1]);
        let (a, b) = (Point2::new(wa.point.x, wa.point.y), Point2::new(wb.point.x, wb.point.y));
        let seg_box = Rect::bounding([&a, &b]).expect("two points");
        for (c, contract) in foreign.iter().enumerate() {
            for (o, ov) in contract.ovs.iter().enumerate() {
                if wa.earliest > ov.end() || wb.latest < ov.t0 {
                    continue;
                }
                for k in 0..ov.entries.len() {
                    let e = &ov.entries[k];
                    let fp = e.region.footprint();
                    if !fp.intersects(&seg_box) {
                        continue;
                    }
                    let [lo, hi] = entry_interval(&ov.entries, k);
                    let Some((g0, g1)) = time_gate(wa, wb, lo, hi) else { continue };
                    let Some((c0, c1)) = clip_segment_to_rect(&a, &b, &fp) else { continue };
                    let (u0, u1) = (g0.max(c0), g1.min(c1));
                    if u0 > u1 {
                        continue;
                    }
                    let (p0, p1) = (a.lerp(&b, u0), a.lerp(&b, u1));
                    let grid = &e.dist;
                    if grid.n_total == 0 {
                        continue;
                    }
                    let mut best: Option<(f64, f64)> = None;
                    for r in 0..grid.rows {
                        for col in 0..grid.cols {
                            let p = grid.count(r, col) as f64 / grid.n_total as f64;
                            if p <= threshold || best.is_some_and(|b| b.0 >= p) {
                                continue;
                            }
                            let Some(cell) = intersect(&grid.cell_rect(r, col), &fp) else { continue };
                            if let Some((v0, v1)) = clip_segment_to_rect(&p0, &p1, &cell) {
                                best = Some((p, u0 + (u1 - u0) * 0.5 * (v0 + v1)));
                            }
                        }
                    }
                    if let Some((probability, u)) = best {
                        let earliest = wa.earliest + u * (wb.earliest - wa.earliest);
                        out.push(Conflict {
                            contract: c,
                            ov: o,
                            entry: k,
                            segment: s,
                            point: a.lerp(&b, u),
                            t: earliest.max(lo).min(hi),
                            probability,
                            footprint: fp,
                        });
                    }
                }
            }
        }
    }
    out
}

/// Foreign OV entry footprints as time-gated obstacles.
pub fn dynamic_obstacles(foreign: &[Contract]) -> Vec<DynamicObstacle> {
    foreign
        .iter()
        .flat_map(|c| c.ovs.iter())
        .flat_map(|ov| {
            (0..ov.entries.len()).map(move |k| DynamicObstacle {
                footprint: ov.entries[k].region.footprint(),
                active: entry_interval(&ov.entries, k),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ovmodel::{OccupancyGrid, OperationalVolume};
    use crate::planner::route::{estimate_timed_route, Route, SpeedSpec};
    use crate::{Aabb, LocalPoint};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    /// Stationary OV: every entry has the same box with `n_in` of 100
    /// aircraft clustered at `hot`.
    fn parked_ov(t0: f64, fp: Rect, hot: [f64; 2], n_in: usize) -> OperationalVolume {
        let mut pts = vec![[hot[0], hot[1], 50.0]; n_in];
        pts.extend((0..100 - n_in).map(|i| [fp.min_x + (i % 10) as f64, fp.min_y, 50.0]));
        let region = Aabb::new([fp.min_x, fp.min_y, 0.0], [fp.max_x, fp.max_y, 100.0]);
        let grid = OccupancyGrid::build(&pts, &fp, 10.0).unwrap();
        OperationalVolume {
            entries: (0..=60).map(|k| OvEntry { region, t: t0 + k as f64, dist: grid.clone() }).collect(),
            t0,
            t_d: 60.0,
            delta: 15.0,
        }
    }

    fn contract_with(ovs: Vec<OperationalVolume>) -> Contract {
        let mut c = Contract::new("f", "f", 60.0, 15.0);
        c.ovs = ovs;
        c
    }

    fn east_route(speed: SpeedSpec, dep: f64) -> Vec<TimedWaypoint> {
        let r = Route::new(vec![LocalPoint::new(0.0, 5.0, 50.0), LocalPoint::new(2000.0, 5.0, 50.0)], dep, speed).unwrap();
        estimate_timed_route(&r).unwrap()
    }

    #[test]
    fn time_gating_excludes_expired_ov() {
        // The aircraft reaches x = 1000 at t = 50; the OV expires at 40.
        let ov = parked_ov(-20.0, Rect::new(950.0, -50.0, 1050.0, 50.0), [1000.0, 5.0], 100);
        let timed = east_route(SpeedSpec::Cruise(20.0), 0.0);
        assert!(find_conflicts(&timed, &[contract_with(vec![ov.clone()])], 0.05).is_empty());
        // Same OV, later window: conflict.
        let ov = parked_ov(20.0, Rect::new(950.0, -50.0, 1050.0, 50.0), [1000.0, 5.0], 100);
        let found = find_conflicts(&timed, &[contract_with(vec![ov])], 0.05);
        assert!(!found.is_empty());
        assert!(found.iter().all(|c| c.probability == 1.0));
    }

    #[test]
    fn empty_cells_do_not_conflict() {
        // All aircraft sit in a corner cell the route never crosses.
        let ov = parked_ov(20.0, Rect::new(950.0, -50.0, 1050.0, 50.0), [955.0, -45.0], 100);
        let timed = east_route(SpeedSpec::Cruise(20.0), 0.0);
        assert!(find_conflicts(&timed, &[contract_with(vec![ov])], 0.05).is_empty());
    }

    #[test]
    fn speed_bounds_widen_the_window() {
        // At 20 m/s x = 1000 at t = 50; at 10 m/s at t = 100. OV valid [80, 140].
        let ov = parked_ov(80.0, Rect::new(950.0, -50.0, 1050.0, 50.0), [1000.0, 5.0], 100);
        let fixed = east_route(SpeedSpec::Cruise(20.0), 0.0);
        let c = [contract_with(vec![ov])];
        assert!(find_conflicts(&fixed, &c, 0.05).is_empty());
        let ranged = east_route(SpeedSpec::Bounds { min: 10.0, max: 20.0 }, 0.0);
        assert!(!find_conflicts(&ranged, &c, 0.05).is_empty());
    }

    fn random_scene(rng: &mut ChaCha8Rng) -> (Vec<TimedWaypoint>, Vec<Contract>) {
        let pts: Vec<LocalPoint> =
            (0..4).map(|_| LocalPoint::new(rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0), 50.0)).collect();
        let speed = SpeedSpec::Bounds { min: rng.random_range(8.0..14.0), max: rng.random_range(15.0..25.0) };
        let timed = estimate_timed_route(&Route::new(pts, 0.0, speed).unwrap()).unwrap();
        let contracts = (0..2)
            .map(|_| {
                let ovs = (0..3)
                    .map(|j| {
                        let x = rng.random_range(0.0..900.0);
                        let y = rng.random_range(0.0..900.0);
                        let fp = Rect::new(x, y, x + rng.random_range(40.0..200.0), y + rng.random_range(40.0..200.0));
                        let pts: Vec<[f64; 3]> = (0..100)
                            .map(|_| [rng.random_range(fp.min_x..fp.max_x), rng.random_range(fp.min_y..fp.max_y), 50.0])
                            .collect();
                        let grid = OccupancyGrid::build(&pts, &fp, 10.0).unwrap();
                        let region = Aabb::new([fp.min_x, fp.min_y, 0.0], [fp.max_x, fp.max_y, 100.0]);
                        let t0 = rng.random_range(0.0..150.0) + j as f64;
                        OperationalVolume {
                            entries: (0..=60).map(|k| OvEntry { region, t: t0 + k as f64, dist: grid.clone() }).collect(),
                            t0,
                            t_d: 60.0,
                            delta: 15.0,
                        }
                    })
                    .collect();
                contract_with(ovs)
            })
            .collect();
        (timed, contracts)
    }

    /// Cross product of segments x entries, sampling each segment densely.
    fn brute_force(timed: &[TimedWaypoint], foreign: &[Contract], thr: f64) -> BTreeSet<(usize, usize, usize, usize)> {
        let mut hits = BTreeSet::new();
        for (s, w) in timed.windows(2).enumerate() {
            let (a, b) = (Point2::new(w[0].point.x, w[0].point.y), Point2::new(w[1].point.x, w[1].point.y));
            let n = (a.dist(&b) / 0.25).ceil() as usize;
            for i in 0..=n {
                let u = i as f64 / n as f64;
                let p = a.lerp(&b, u);
                let early = w[0].earliest + u * (w[1].earliest - w[0].earliest);
                let late = w[0].latest + u * (w[1].latest - w[0].latest);
                for (c, con) in foreign.iter().enumerate() {
                    for (o, ov) in con.ovs.iter().enumerate() {
                        for (k, e) in ov.entries.iter().enumerate() {
                            let [lo, hi] = entry_interval(&ov.entries, k);
                            if early <= hi
                                && late >= lo
                                && e.region.footprint().contains(&p)
                                && e.dist.probability_at(p.x, p.y) > thr
                            {
                                hits.insert((c, o, k, s));
                            }
                        }
                    }
                }
            }
        }
        hits
    }

    #[test]
    fn agrees_with_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut exact_matches = 0;
        let scenes = 40;
        for _ in 0..scenes {
            let (timed, foreign) = random_scene(&mut rng);
            let found = find_conflicts(&timed, &foreign, 0.02);
            let fast: BTreeSet<_> = found.iter().map(|c| (c.contract, c.ov, c.entry, c.segment)).collect();
            let slow = brute_force(&timed, &foreign, 0.02);
            // Sampling can only miss slivers, never invent conflicts.
            assert!(slow.is_subset(&fast));
            for c in &found {
                let ov = &foreign[c.contract].ovs[c.ov];
                let e = &ov.entries[c.entry];
                let [lo, hi] = entry_interval(&ov.entries, c.entry);
                assert!(c.t >= lo - 1e-9 && c.t <= hi + 1e-9);
                assert!(e.region.footprint().expanded(1e-6).contains(&c.point));
                assert!(c.probability > 0.02);
            }
            if slow == fast {
                exact_matches += 1;
            }
        }
        assert!(exact_matches >= scenes * 9 / 10, "{exact_matches}/{scenes}");
    }
}

//! Point-mass aircraft batches: uncertain initialization, a waypoint
//! autopilot integrated at 0.1 s and noisy state logging at 1 Hz.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::meters_per_degree;
use crate::planner::Route;
use crate::rng::{self, PURPOSE_INIT, PURPOSE_NOISE, PURPOSE_RESAMPLE};
use crate::{Aabb, GeoPoint, LocalPoint, Projection};

pub const INTEGRATION_DT: f64 = 0.1;
pub const STEPS_PER_LOG: usize = 10;
/// Consecutive rejected position draws tolerated while resampling.
pub const MAX_REJECTIONS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub t: f64,
    pub pos: GeoPoint,
    /// Degrees clockwise from north in `[0, 360)`.
    pub heading: f64,
    /// Vertical speed, m/s.
    pub vs: f64,
    /// True airspeed, m/s.
    pub tas: f64,
}

pub fn normalize_heading(h: f64) -> f64 {
    let r = h.rem_euclid(360.0);
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

/// Signed smallest rotation from `from` to `to`, in `(-180, 180]`.
pub fn heading_diff(to: f64, from: f64) -> f64 {
    let d = (to - from).rem_euclid(360.0);
    if d > 180.0 {
        d - 360.0
    } else {
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AircraftModel {
    pub cruise_tas: f64,
    pub tas_min: f64,
    pub tas_max: f64,
    pub max_accel: f64,
    /// deg/s
    pub max_turn_rate: f64,
    pub max_climb: f64,
    pub max_descent: f64,
    pub waypoint_capture_radius: f64,
}

impl Default for AircraftModel {
    /// Small multirotor cargo drone.
    fn default() -> Self {
        Self {
            cruise_tas: 18.0,
            tas_min: 4.0,
            tas_max: 28.0,
            max_accel: 0.6,
            max_turn_rate: 8.0,
            max_climb: 3.0,
            max_descent: 2.0,
            waypoint_capture_radius: 25.0,
        }
    }
}

impl AircraftModel {
    pub fn validate(&self) -> Result<()> {
        let rates = [
            self.max_accel,
            self.max_turn_rate,
            self.max_climb,
            self.max_descent,
            self.waypoint_capture_radius,
        ];
        if rates.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::Config("aircraft rates and capture radius must be positive".into()));
        }
        if !(self.tas_min <= self.cruise_tas && self.cruise_tas <= self.tas_max && self.tas_min >= 0.0) {
            return Err(Error::Config(format!(
                "need 0 <= tas_min <= cruise_tas <= tas_max, got {} / {} / {}",
                self.tas_min, self.cruise_tas, self.tas_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UncertaintyConfig {
    /// Radius of the horizontal disc the first batch is spread over, m.
    pub pos_jitter: f64,
    pub alt_range: [f64; 2],
    pub speed_range: [f64; 2],
    /// Half-width of the uniform heading perturbation, degrees.
    pub heading_jitter: f64,
    /// Horizontal log noise standard deviation, m.
    pub log_noise_pos: f64,
    pub log_noise_alt: f64,
    /// Half-width `c` of the resampling window, s.
    pub resample_window_c: f64,
    pub seed: u64,
}

impl Default for UncertaintyConfig {
    fn default() -> Self {
        Self {
            pos_jitter: 10.0,
            alt_range: [5.0, 10.0],
            speed_range: [18.0, 18.0],
            heading_jitter: 5.0,
            log_noise_pos: 3.0,
            log_noise_alt: 1.0,
            resample_window_c: 2.0,
            seed: 0,
        }
    }
}

impl UncertaintyConfig {
    pub fn validate(&self) -> Result<()> {
        let ranges_ok = self.alt_range[0] <= self.alt_range[1]
            && self.speed_range[0] <= self.speed_range[1]
            && self.alt_range[0] >= 0.0
            && self.speed_range[0] >= 0.0;
        let nonneg = [
            self.pos_jitter,
            self.heading_jitter,
            self.log_noise_pos,
            self.log_noise_alt,
            self.resample_window_c,
        ];
        if !ranges_ok || nonneg.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config(format!("invalid uncertainty configuration {self:?}")));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..*self }
    }

    /// Configuration with every source of randomness switched off.
    pub fn deterministic(alt: f64, speed: f64) -> Self {
        Self {
            pos_jitter: 0.0,
            alt_range: [alt, alt],
            speed_range: [speed, speed],
            heading_jitter: 0.0,
            log_noise_pos: 0.0,
            log_noise_alt: 0.0,
            resample_window_c: 0.0,
            seed: 0,
        }
    }
}

/// Logged batch over one horizon. Trajectory `center_index` was started from
/// the unperturbed nominal state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySet {
    pub trajectories: Vec<Vec<State>>,
    /// Route waypoint each aircraft was steering toward at each sample.
    pub targets: Vec<Vec<usize>>,
    /// Whether each aircraft captured the final waypoint during the horizon.
    pub arrived: Vec<bool>,
    pub t0: f64,
    /// Horizon length in whole seconds; each trajectory has `duration + 1` samples.
    pub duration: usize,
    pub center_index: usize,
}

impl TrajectorySet {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn center(&self) -> &[State] {
        &self.trajectories[self.center_index]
    }

    pub fn arrived_fraction(&self) -> f64 {
        self.arrived.iter().filter(|a| **a).count() as f64 / self.len().max(1) as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.len() < 2 {
            return Err(Error::InsufficientData("a trajectory set needs at least two trajectories".into()));
        }
        for (i, tr) in self.trajectories.iter().enumerate() {
            if tr.len() != self.duration + 1 {
                return Err(Error::Alignment(format!(
                    "trajectory {i} has {} samples, expected {}",
                    tr.len(),
                    self.duration + 1
                )));
            }
            for (k, s) in tr.iter().enumerate() {
                if (s.t - (self.t0 + k as f64)).abs() > 1e-9 {
                    return Err(Error::Alignment(format!("trajectory {i} sample {k} at t = {}", s.t)));
                }
            }
        }
        Ok(())
    }

    /// Local positions of every trajectory, `[traj][sample]`.
    pub fn local_positions(&self, proj: &Projection) -> Result<Vec<Vec<[f64; 3]>>> {
        self.trajectories
            .iter()
            .map(|tr| tr.iter().map(|s| proj.to_local(&s.pos).map(|p| p.as_array())).collect())
            .collect()
    }
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Draws `n` independent initial states around `origin`.
pub fn init_states_uniform(
    origin: &GeoPoint,
    initial_leg_heading: f64,
    t0: f64,
    cfg: &UncertaintyConfig,
    n: usize,
) -> Result<Vec<State>> {
    if n < 2 {
        return Err(Error::Config(format!("need at least two aircraft, got {n}")));
    }
    cfg.validate()?;
    let (m_lat, m_lon) = meters_per_degree(origin.lat)?;
    Ok((0..n)
        .map(|i| {
            let mut rng = rng::stream(cfg.seed, &[PURPOSE_INIT, i as u64]);
            let r = cfg.pos_jitter * rng.random::<f64>().sqrt();
            let theta = uniform(&mut rng, 0.0, std::f64::consts::TAU);
            let alt = uniform(&mut rng, cfg.alt_range[0], cfg.alt_range[1]);
            let tas = uniform(&mut rng, cfg.speed_range[0], cfg.speed_range[1]);
            let dh = uniform(&mut rng, -cfg.heading_jitter, cfg.heading_jitter);
            State {
                t: t0,
                pos: GeoPoint {
                    lat: origin.lat + r * theta.cos() / m_lat,
                    lon: origin.lon + r * theta.sin() / m_lon,
                    alt,
                },
                heading: normalize_heading(initial_leg_heading + dh),
                vs: 0.0,
                tas,
            }
        })
        .collect())
}

/// Unperturbed start state: the mean of the uniform draws.
pub fn nominal_state(origin: &GeoPoint, initial_leg_heading: f64, t0: f64, cfg: &UncertaintyConfig) -> State {
    State {
        t: t0,
        pos: GeoPoint { alt: 0.5 * (cfg.alt_range[0] + cfg.alt_range[1]), ..*origin },
        heading: normalize_heading(initial_leg_heading),
        vs: 0.0,
        tas: 0.5 * (cfg.speed_range[0] + cfg.speed_range[1]),
    }
}

/// Per-field normal distributions fitted over a window of a logged batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDistribution {
    pub t: f64,
    /// `(mean, std)` of east, north and altitude in the local frame.
    pub x: (f64, f64),
    pub y: (f64, f64),
    pub alt: (f64, f64),
    /// Circular mean and spread of heading, degrees.
    pub heading: (f64, f64),
    pub vs: (f64, f64),
    pub tas: (f64, f64),
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.max(0.0).sqrt())
}

impl StateDistribution {
    pub fn mean_state(&self, proj: &Projection) -> Result<State> {
        let pos = proj.to_geo(&LocalPoint::new(self.x.0, self.y.0, self.alt.0.max(0.0)))?;
        Ok(State {
            t: self.t,
            pos,
            heading: normalize_heading(self.heading.0),
            vs: self.vs.0,
            tas: self.tas.0.max(0.0),
        })
    }
}

fn draw(rng: &mut impl Rng, (mean, sd): (f64, f64)) -> f64 {
    if sd > 0.0 {
        Normal::new(mean, sd).map(|d| d.sample(rng)).unwrap_or(mean)
    } else {
        mean
    }
}

/// Fits the per-field normals to every sample of every trajectory whose time
/// lies within `offset ± c` seconds of `prev.t0`.
pub fn fit_window(prev: &TrajectorySet, offset: f64, c: f64, proj: &Projection) -> Result<StateDistribution> {
    prev.validate()?;
    if offset < 0.0 || offset + c > prev.duration as f64 + 1e-9 {
        return Err(Error::Config(format!(
            "resample window {offset} ± {c} s exceeds batch duration {}",
            prev.duration
        )));
    }
    let lo = (offset - c).max(0.0).ceil() as usize;
    let hi = ((offset + c).floor() as usize).min(prev.duration);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut alts = Vec::new();
    let mut vss = Vec::new();
    let mut tass = Vec::new();
    let (mut sin_sum, mut cos_sum) = (0.0, 0.0);
    let mut headings = Vec::new();
    for tr in &prev.trajectories {
        for s in &tr[lo..=hi] {
            let p = proj.to_local(&s.pos)?;
            xs.push(p.x);
            ys.push(p.y);
            alts.push(p.z);
            vss.push(s.vs);
            tass.push(s.tas);
            headings.push(s.heading);
            let r = s.heading.to_radians();
            sin_sum += r.sin();
            cos_sum += r.cos();
        }
    }
    let h_mean = normalize_heading(sin_sum.atan2(cos_sum).to_degrees());
    let h_dev: Vec<f64> = headings.iter().map(|h| heading_diff(*h, h_mean)).collect();
    let (dev_mean, h_sd) = mean_std(&h_dev);
    Ok(StateDistribution {
        t: prev.t0 + offset,
        x: mean_std(&xs),
        y: mean_std(&ys),
        alt: mean_std(&alts),
        heading: (normalize_heading(h_mean + dev_mean), h_sd),
        vs: mean_std(&vss),
        tas: mean_std(&tass),
    })
}

/// Draws `n` states from the normals fitted over `offset ± c` of `prev`.
/// Positions are redrawn until they fall inside `region` grown by `margin`
/// meters.
pub fn init_states_from_batch(
    prev: &TrajectorySet,
    offset: f64,
    cfg: &UncertaintyConfig,
    region: &Aabb,
    margin: f64,
    n: usize,
    proj: &Projection,
) -> Result<Vec<State>> {
    cfg.validate()?;
    let dist = fit_window(prev, offset, cfg.resample_window_c, proj)?;
    sample_states(&dist, cfg.seed, region, margin, n, proj)
}

pub fn sample_states(
    dist: &StateDistribution,
    seed: u64,
    region: &Aabb,
    margin: f64,
    n: usize,
    proj: &Projection,
) -> Result<Vec<State>> {
    let allowed = region.inflated(&[margin; 3]);
    (0..n)
        .map(|i| {
            let mut rng = rng::stream(seed, &[PURPOSE_RESAMPLE, i as u64]);
            let mut rejections = 0;
            let p = loop {
                let p = [draw(&mut rng, dist.x), draw(&mut rng, dist.y), draw(&mut rng, dist.alt).max(0.0)];
                if allowed.contains(&p) {
                    break p;
                }
                rejections += 1;
                if rejections >= MAX_REJECTIONS {
                    return Err(Error::InfeasibleResample(format!(
                        "{MAX_REJECTIONS} consecutive draws fell outside the previous volume"
                    )));
                }
            };
            Ok(State {
                t: dist.t,
                pos: proj.to_geo(&LocalPoint::from_array(p))?,
                heading: normalize_heading(draw(&mut rng, dist.heading)),
                vs: draw(&mut rng, dist.vs),
                tas: draw(&mut rng, dist.tas).max(0.0),
            })
        })
        .collect()
}

/// East/north offset in meters from `a` to `b`, given degree scales.
fn offset_m(a: &GeoPoint, b: &GeoPoint, scales: (f64, f64)) -> (f64, f64) {
    ((b.lon - a.lon) * scales.1, (b.lat - a.lat) * scales.0)
}

fn approach(current: f64, target: f64, max_delta: f64) -> f64 {
    current + (target - current).clamp(-max_delta, max_delta)
}

/// One autopilot step with explicit degree scales and speed command.
pub fn step_with(
    state: &State,
    target: &GeoPoint,
    target_speed: f64,
    model: &AircraftModel,
    dt: f64,
    scales: (f64, f64),
) -> State {
    let (dx, dy) = offset_m(&state.pos, target, scales);
    let mut target_speed = target_speed;
    let heading = if dx == 0.0 && dy == 0.0 {
        state.heading
    } else {
        let bearing = dx.atan2(dy).to_degrees();
        let err = heading_diff(bearing, state.heading);
        // Slow down when the target sits inside the turning circle, otherwise
        // the aircraft orbits it forever.
        let chord = if err.abs() >= 90.0 { 1.0 } else { err.to_radians().sin().abs() };
        if chord > 1e-9 {
            let reachable = model.max_turn_rate.to_radians() * dx.hypot(dy) / (2.0 * chord);
            target_speed = target_speed.min(reachable.max(model.tas_min));
        }
        let turn = err.clamp(-model.max_turn_rate * dt, model.max_turn_rate * dt);
        normalize_heading(state.heading + turn)
    };
    let tas = approach(state.tas, target_speed, model.max_accel * dt).max(0.0);
    let dz = (target.alt - state.pos.alt).clamp(-model.max_descent * dt, model.max_climb * dt);
    let alt = (state.pos.alt + dz).max(0.0);
    advance(state, heading, tas, alt, dt, scales)
}

fn advance(state: &State, heading: f64, tas: f64, alt: f64, dt: f64, scales: (f64, f64)) -> State {
    let h = heading.to_radians();
    let dist = tas * dt;
    State {
        t: state.t + dt,
        pos: GeoPoint {
            lat: state.pos.lat + dist * h.cos() / scales.0,
            lon: state.pos.lon + dist * h.sin() / scales.1,
            alt,
        },
        heading,
        vs: (alt - state.pos.alt) / dt,
        tas,
    }
}

/// Steers toward `target` at cruise speed with saturating turn, speed and
/// climb controllers.
pub fn step(state: &State, target: &GeoPoint, model: &AircraftModel, dt: f64) -> State {
    let scales = meters_per_degree(state.pos.lat).unwrap_or((111_132.92, 111_412.84));
    step_with(state, target, model.cruise_tas, model, dt, scales)
}

/// Holding after arrival: no turning, decelerate to a hover at the final
/// waypoint altitude.
fn hold(state: &State, final_alt: f64, model: &AircraftModel, dt: f64, scales: (f64, f64)) -> State {
    let tas = approach(state.tas, 0.0, model.max_accel * dt);
    let dz = (final_alt - state.pos.alt).clamp(-model.max_descent * dt, model.max_climb * dt);
    advance(state, state.heading, tas, (state.pos.alt + dz).max(0.0), dt, scales)
}

/// Index of the waypoint an aircraft at `pos` should steer toward, looking
/// only at route legs adjacent to `hint`.
pub fn assign_target(pos: &LocalPoint, route: &[LocalPoint], hint: usize, capture: f64) -> usize {
    let last = route.len() - 1;
    if last == 0 {
        return 0;
    }
    let hint = hint.clamp(1, last);
    let lo = hint.saturating_sub(1).max(1);
    let hi = (hint + 1).min(last);
    let mut best = (f64::INFINITY, hint, 0.0);
    for j in lo..=hi {
        let a = route[j - 1];
        let b = route[j];
        let (vx, vy) = (b.x - a.x, b.y - a.y);
        let len2 = vx * vx + vy * vy;
        let u = if len2 > 0.0 { ((pos.x - a.x) * vx + (pos.y - a.y) * vy) / len2 } else { 1.0 };
        let uc = u.clamp(0.0, 1.0);
        let d = (pos.x - (a.x + vx * uc)).hypot(pos.y - (a.y + vy * uc));
        if d < best.0 - 1e-9 {
            best = (d, j, u);
        }
    }
    let (_, j, u) = best;
    if j < last && (u >= 1.0 || pos.horizontal_distance(&route[j]) < capture) {
        j + 1
    } else {
        j
    }
}

/// True once `pos` has crossed the line through intermediate waypoint `j`
/// perpendicular to the leg arriving at it.
fn passed(pos: &GeoPoint, route: &[GeoPoint], j: usize, scales: (f64, f64)) -> bool {
    if j == 0 || j + 1 >= route.len() {
        return false;
    }
    let (lx, ly) = offset_m(&route[j - 1], &route[j], scales);
    let (px, py) = offset_m(&route[j], pos, scales);
    px * lx + py * ly >= 0.0
}

struct Leg<'a> {
    route: &'a [GeoPoint],
    /// Commanded speed per leg; without one each aircraft holds its own
    /// initial airspeed.
    speeds: Option<&'a [f64]>,
    /// Meters per degree of latitude and longitude.
    scales: (f64, f64),
}

fn simulate_one(
    idx: usize,
    start: &State,
    target0: usize,
    legs: &Leg<'_>,
    model: &AircraftModel,
    cfg: &UncertaintyConfig,
    duration: usize,
) -> (Vec<State>, Vec<usize>, bool) {
    let scales = legs.scales;
    let mut noise_rng = rng::stream(cfg.seed, &[PURPOSE_NOISE, idx as u64]);
    let pos_noise = Normal::new(0.0, cfg.log_noise_pos).ok();
    let alt_noise = Normal::new(0.0, cfg.log_noise_alt).ok();
    let last = legs.route.len() - 1;
    let capture = model.waypoint_capture_radius;
    let t0 = start.t;

    let own_speed = start.tas.clamp(model.tas_min, model.tas_max);
    let mut s = *start;
    let mut target = target0.min(last);
    let mut arrived = false;
    let update_capture = |s: &State, target: &mut usize, arrived: &mut bool| {
        while !*arrived {
            let (dx, dy) = offset_m(&s.pos, &legs.route[*target], scales);
            if dx.hypot(dy) >= capture && !passed(&s.pos, legs.route, *target, scales) {
                break;
            }
            if *target < last {
                *target += 1;
            } else {
                *arrived = true;
            }
        }
    };
    update_capture(&s, &mut target, &mut arrived);

    let mut log = Vec::with_capacity(duration + 1);
    let mut targets = Vec::with_capacity(duration + 1);
    let mut record = |s: &State, target: usize, rng: &mut rand_chacha::ChaCha8Rng| {
        let mut out = *s;
        if let Some(d) = pos_noise {
            out.pos.lon += d.sample(rng) / scales.1;
            out.pos.lat += d.sample(rng) / scales.0;
        }
        if let Some(d) = alt_noise {
            out.pos.alt = (out.pos.alt + d.sample(rng)).max(0.0);
        }
        log.push(out);
        targets.push(target);
    };
    record(&s, target, &mut noise_rng);

    for k in 1..=duration {
        for _ in 0..STEPS_PER_LOG {
            s = if arrived {
                hold(&s, legs.route[last].alt, model, INTEGRATION_DT, scales)
            } else {
                let wp = &legs.route[target];
                let mut speed = legs.speeds.map_or(own_speed, |v| v[target]);
                if target == last {
                    let (dx, dy) = offset_m(&s.pos, wp, scales);
                    let remaining = (dx.hypot(dy) - 0.5 * capture).max(0.0);
                    speed = speed.min((2.0 * model.max_accel * remaining).sqrt());
                }
                step_with(&s, wp, speed, model, INTEGRATION_DT, scales)
            };
            update_capture(&s, &mut target, &mut arrived);
        }
        s.t = t0 + k as f64;
        record(&s, target, &mut noise_rng);
    }
    (log, targets, arrived)
}

/// Integrates every aircraft independently along `route` for `duration`
/// seconds. `states[0]` must be the nominal (center) state. `progress_hint`
/// is the waypoint index the nominal is heading for.
pub fn run_batch(
    states: &[State],
    route: &Route,
    proj: &Projection,
    model: &AircraftModel,
    cfg: &UncertaintyConfig,
    duration: usize,
    progress_hint: usize,
) -> Result<TrajectorySet> {
    if route.waypoints.is_empty() {
        return Err(Error::Config("route has no waypoints".into()));
    }
    if duration == 0 {
        return Err(Error::Config("batch duration must be positive".into()));
    }
    if states.len() < 2 {
        return Err(Error::Config("a batch needs at least two aircraft".into()));
    }
    model.validate()?;
    cfg.validate()?;
    let geo_route: Vec<GeoPoint> = route.waypoints.iter().map(|p| proj.to_geo(p)).collect::<Result<_>>()?;
    let scales = (proj.m_per_deg_lat, proj.m_per_deg_lon);
    let legs = Leg { route: &geo_route, speeds: route.leg_speeds.as_deref(), scales };
    let t0 = states[0].t;

    let starts: Vec<usize> = states
        .iter()
        .map(|s| {
            proj.to_local(&s.pos)
                .map(|p| assign_target(&p, &route.waypoints, progress_hint, model.waypoint_capture_radius))
        })
        .collect::<Result<_>>()?;

    let runs: Vec<_> = states
        .par_iter()
        .zip(starts.par_iter())
        .enumerate()
        .map(|(i, (s, &tgt))| {
            let s = State { t: t0, ..*s };
            simulate_one(i, &s, tgt, &legs, model, cfg, duration)
        })
        .collect();

    let mut set = TrajectorySet {
        trajectories: Vec::with_capacity(runs.len()),
        targets: Vec::with_capacity(runs.len()),
        arrived: Vec::with_capacity(runs.len()),
        t0,
        duration,
        center_index: 0,
    };
    for (log, targets, arrived) in runs {
        set.trajectories.push(log);
        set.targets.push(targets);
        set.arrived.push(arrived);
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::{Route, SpeedSpec};

    fn origin() -> GeoPoint {
        GeoPoint::new(52.0, -1.0, 0.0).unwrap()
    }

    fn proj() -> Projection {
        Projection::new(origin()).unwrap()
    }

    fn straight_route(len: f64, alt: f64) -> Route {
        Route::new(
            vec![LocalPoint::new(0.0, 0.0, alt), LocalPoint::new(0.0, len, alt)],
            0.0,
            SpeedSpec::Cruise(18.0),
        )
        .unwrap()
    }

    #[test]
    fn zero_uncertainty_collapses() {
        let cfg = UncertaintyConfig::deterministic(5.0, 18.0);
        let st = init_states_uniform(&origin(), 30.0, 0.0, &cfg, 8).unwrap();
        assert!(st.windows(2).all(|w| w[0] == w[1]));
        assert!(matches!(init_states_uniform(&origin(), 0.0, 0.0, &cfg, 1), Err(Error::Config(_))));
    }

    #[test]
    fn uniform_speed_bounds_and_determinism() {
        let cfg = UncertaintyConfig { speed_range: [20.0, 24.0], seed: 11, ..Default::default() };
        let a = init_states_uniform(&origin(), 0.0, 0.0, &cfg, 2000).unwrap();
        let b = init_states_uniform(&origin(), 0.0, 0.0, &cfg, 2000).unwrap();
        assert_eq!(a, b);
        let lo = a.iter().map(|s| s.tas).fold(f64::INFINITY, f64::min);
        let hi = a.iter().map(|s| s.tas).fold(f64::NEG_INFINITY, f64::max);
        assert!((20.0..20.5).contains(&lo), "{lo}");
        assert!(hi <= 24.0 && hi > 23.5, "{hi}");
        let p = proj();
        for s in &a {
            let l = p.to_local(&s.pos).unwrap();
            assert!(l.x.hypot(l.y) <= cfg.pos_jitter + 1e-9);
        }
    }

    #[test]
    fn straight_ahead_step() {
        let m = AircraftModel::default();
        let s = State { t: 0.0, pos: origin(), heading: 0.0, vs: 0.0, tas: m.cruise_tas };
        let target = GeoPoint { lat: 52.05, ..origin() };
        let n = step(&s, &target, &m, 0.1);
        assert_eq!(n.heading, 0.0);
        let (m_lat, _) = meters_per_degree(52.0).unwrap();
        assert!(((n.pos.lat - s.pos.lat) * m_lat - 1.8).abs() < 1e-9);
        assert_eq!(n.pos.lon, s.pos.lon);
    }

    #[test]
    fn turn_rate_saturates() {
        let m = AircraftModel { max_turn_rate: 3.0, ..Default::default() };
        let s = State { t: 0.0, pos: origin(), heading: 0.0, vs: 0.0, tas: 18.0 };
        let behind = GeoPoint { lat: 51.99, ..origin() };
        let n = step(&s, &behind, &m, 0.1);
        assert!((n.heading.abs() - 0.3).abs() < 1e-12 || (n.heading - 359.7).abs() < 1e-12);
    }

    #[test]
    fn stepping_converges_to_target() {
        let m = AircraftModel::default();
        let p = proj();
        for (x, y) in [(800.0, -300.0), (-50.0, 40.0), (0.0, -2000.0), (1500.0, 1500.0)] {
            let target = p.to_geo(&LocalPoint::new(x, y, 40.0)).unwrap();
            let mut s = State { t: 0.0, pos: origin(), heading: 90.0, vs: 0.0, tas: 10.0 };
            let mut reached = false;
            for _ in 0..20_000 {
                s = step(&s, &target, &m, 0.1);
                let l = p.to_local(&s.pos).unwrap();
                if (l.x - x).hypot(l.y - y) < m.waypoint_capture_radius {
                    reached = true;
                    break;
                }
            }
            assert!(reached, "did not reach ({x}, {y})");
        }
    }

    #[test]
    fn batch_shape_and_cadence() {
        let cfg = UncertaintyConfig { seed: 3, ..Default::default() };
        let m = AircraftModel::default();
        let route = straight_route(3000.0, 30.0);
        let states = init_states_uniform(&origin(), 0.0, 100.0, &cfg, 10).unwrap();
        let set = run_batch(&states, &route, &proj(), &m, &cfg, 60, 1).unwrap();
        set.validate().unwrap();
        assert_eq!(set.len(), 10);
        for tr in &set.trajectories {
            assert_eq!(tr.len(), 61);
            assert_eq!(tr[0].t, 100.0);
            assert_eq!(tr[60].t, 160.0);
        }
        let again = run_batch(&states, &route, &proj(), &m, &cfg, 60, 1).unwrap();
        assert_eq!(
            serde_json::to_string(&set).unwrap(),
            serde_json::to_string(&again).unwrap()
        );
    }

    #[test]
    fn noiseless_deterministic_batch_is_identical() {
        let cfg = UncertaintyConfig::deterministic(30.0, 18.0);
        let route = straight_route(3000.0, 30.0);
        let states = init_states_uniform(&origin(), 0.0, 0.0, &cfg, 5).unwrap();
        let set = run_batch(&states, &route, &proj(), &AircraftModel::default(), &cfg, 30, 1).unwrap();
        for tr in &set.trajectories {
            assert_eq!(tr, &set.trajectories[set.center_index]);
        }
    }

    #[test]
    fn empty_route_rejected() {
        let route = Route { waypoints: vec![], departure_time: 0.0, speed: SpeedSpec::Cruise(18.0), leg_speeds: None };
        let cfg = UncertaintyConfig::default();
        let states = init_states_uniform(&origin(), 0.0, 0.0, &cfg, 3).unwrap();
        let r = run_batch(&states, &route, &proj(), &AircraftModel::default(), &cfg, 10, 1);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn arrival_is_flagged_and_holds() {
        let cfg = UncertaintyConfig::deterministic(30.0, 18.0);
        let route = straight_route(500.0, 30.0);
        let states = init_states_uniform(&origin(), 0.0, 0.0, &cfg, 2).unwrap();
        let set = run_batch(&states, &route, &proj(), &AircraftModel::default(), &cfg, 90, 1).unwrap();
        assert!(set.arrived.iter().all(|a| *a));
        let end = proj().to_local(&set.center().last().unwrap().pos).unwrap();
        assert!((end.y - 500.0).abs() < 40.0, "{end:?}");
    }

    #[test]
    fn resample_degenerate_window() {
        let cfg = UncertaintyConfig::deterministic(30.0, 18.0);
        let route = straight_route(3000.0, 30.0);
        let p = proj();
        let states = init_states_uniform(&origin(), 0.0, 0.0, &cfg, 4).unwrap();
        let set = run_batch(&states, &route, &p, &AircraftModel::default(), &cfg, 60, 1).unwrap();
        let region = Aabb::new([-1e4, -1e4, 0.0], [1e4, 1e4, 1e3]);
        let drawn = init_states_from_batch(&set, 45.0, &cfg, &region, 0.0, 6, &p).unwrap();
        let at = set.center()[45];
        for s in drawn {
            assert_eq!(s.t, 45.0);
            assert!((s.pos.lat - at.pos.lat).abs() < 1e-12);
            assert!((s.pos.lon - at.pos.lon).abs() < 1e-12);
            assert!((s.tas - at.tas).abs() < 1e-9);
            assert!(heading_diff(s.heading, at.heading).abs() < 1e-9);
        }
        assert!(matches!(
            init_states_from_batch(&set, 59.5, &UncertaintyConfig { resample_window_c: 2.0, ..cfg }, &region, 0.0, 6, &p),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn resample_rejection_exhaustion() {
        let cfg = UncertaintyConfig { seed: 5, ..Default::default() };
        let route = straight_route(3000.0, 30.0);
        let p = proj();
        let states = init_states_uniform(&origin(), 0.0, 0.0, &cfg, 20).unwrap();
        let set = run_batch(&states, &route, &p, &AircraftModel::default(), &cfg, 60, 1).unwrap();
        let far = Aabb::new([5e3, 5e3, 0.0], [5.1e3, 5.1e3, 10.0]);
        assert!(matches!(
            init_states_from_batch(&set, 45.0, &cfg, &far, 1.0, 5, &p),
            Err(Error::InfeasibleResample(_))
        ));
    }

    #[test]
    fn target_assignment_advances_past_captured_waypoint() {
        let r = vec![
            LocalPoint::new(0.0, 0.0, 0.0),
            LocalPoint::new(0.0, 1000.0, 0.0),
            LocalPoint::new(1000.0, 1000.0, 0.0),
        ];
        assert_eq!(assign_target(&LocalPoint::new(5.0, 400.0, 0.0), &r, 1, 25.0), 1);
        assert_eq!(assign_target(&LocalPoint::new(2.0, 990.0, 0.0), &r, 1, 25.0), 2);
        assert_eq!(assign_target(&LocalPoint::new(500.0, 1010.0, 0.0), &r, 1, 25.0), 2);
    }
}

//! Candidate route, batched simulation, reach tubes and OVs, then repair
//! until the route and its contract are clean.

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ovmodel::{build_ov_from_positions, violating_entries, Contract, DEFAULT_CELL_SIZE};
use crate::planner::{
    default_max_nodes, estimate_timed_route, find_conflicts, max_opt_factor, path_length, plan_candidate,
    rope_optimize, Environment, PlanTree, Route, SpeedSpec, DEFAULT_ITERATION_BUDGET,
};
use crate::reach::{compute_reach_tube, learn_discrepancy, select_spread, verify_tube, VerificationReport};
use crate::rng::{derive_seed, PURPOSE_HORIZON, PURPOSE_RESAMPLE};
use crate::sim::{
    fit_window, init_states_uniform, nominal_state, run_batch, sample_states, AircraftModel, TrajectorySet,
    UncertaintyConfig,
};
use crate::{LocalPoint, NormalizationBox, Point2, Projection};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// OV duration, whole seconds.
    pub t_d: usize,
    /// Overlap between consecutive OVs, whole seconds.
    pub delta: usize,
    pub n_aircraft: usize,
    /// Trajectories the discrepancy is learned from.
    pub training: usize,
    pub verification_threshold: f64,
    pub conflict_threshold: f64,
    pub cell_size: f64,
    pub step: f64,
    /// Tree node budget; defaults by step size.
    pub max_nodes: Option<usize>,
    /// Rope lookahead; defaults to the whole path.
    pub opt_factor: Option<usize>,
    pub max_repair_rounds: usize,
    pub iteration_budget: usize,
    /// Fraction of a batch that must have captured the final waypoint.
    pub terminal_quorum: f64,
    /// Slack around the previous OV box when resampling, m.
    pub resample_margin: f64,
    /// Padding of the normalization box, m.
    pub norm_padding: f64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            t_d: 60,
            delta: 15,
            n_aircraft: 200,
            training: 16,
            verification_threshold: 0.95,
            conflict_threshold: 0.05,
            cell_size: DEFAULT_CELL_SIZE,
            step: 100.0,
            max_nodes: None,
            opt_factor: None,
            max_repair_rounds: 10,
            iteration_budget: DEFAULT_ITERATION_BUDGET,
            terminal_quorum: 0.5,
            resample_margin: 10.0,
            norm_padding: 50.0,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_d == 0 || self.delta >= self.t_d {
            return Err(Error::Config(format!("need 0 <= delta < t_d, got delta {} t_d {}", self.delta, self.t_d)));
        }
        if self.n_aircraft < 20 {
            return Err(Error::Config(format!("n_aircraft must be at least 20, got {}", self.n_aircraft)));
        }
        if self.training < crate::reach::MIN_TRAINING || self.training + 2 > self.n_aircraft {
            return Err(Error::Config(format!(
                "training subset {} must leave a holdout among {} aircraft",
                self.training, self.n_aircraft
            )));
        }
        for (name, v) in [
            ("verification_threshold", self.verification_threshold),
            ("conflict_threshold", self.conflict_threshold),
            ("terminal_quorum", self.terminal_quorum),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if !(self.cell_size > 0.0 && self.step > 0.0) {
            return Err(Error::Config("cell size and step must be positive".into()));
        }
        if self.max_nodes.is_some_and(|m| m < 2) || self.opt_factor == Some(0) {
            return Err(Error::Config("node budget and optimization factor must be positive".into()));
        }
        if !(self.resample_margin >= 0.0 && self.norm_padding > 0.0) {
            return Err(Error::Config("resample margin must be non-negative, padding positive".into()));
        }
        Ok(())
    }

    pub fn nodes(&self) -> usize {
        self.max_nodes.unwrap_or_else(|| default_max_nodes(self.step))
    }

    fn stride(&self) -> usize {
        self.t_d - self.delta
    }
}

/// A contract together with what is needed to extend or audit it.
#[derive(Debug, Clone)]
pub struct ContractRun {
    pub contract: Contract,
    pub verification: Vec<VerificationReport>,
    /// One batch per OV.
    pub batches: Vec<TrajectorySet>,
}

impl ContractRun {
    fn empty(route_id: &str, aircraft_id: &str, cfg: &PipelineConfig) -> Self {
        Self {
            contract: Contract::new(route_id, aircraft_id, cfg.t_d as f64, cfg.delta as f64),
            verification: Vec::new(),
            batches: Vec::new(),
        }
    }

    fn truncate(&mut self, h: usize) {
        self.contract.ovs.truncate(h);
        self.verification.truncate(h);
        self.batches.truncate(h);
    }
}

/// Everything the contract generator needs besides the route.
#[derive(Debug, Clone)]
pub struct SimSetup<'a> {
    pub proj: &'a Projection,
    pub model: &'a AircraftModel,
    pub uncertainty: &'a UncertaintyConfig,
    pub cfg: &'a PipelineConfig,
}

fn modal(values: impl Iterator<Item = usize>) -> usize {
    let mut counts = std::collections::BTreeMap::new();
    for v in values {
        *counts.entry(v).or_insert(0usize) += 1;
    }
    counts.into_iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0))).map_or(0, |(v, _)| v)
}

/// Horizon start states: the nominal first, then sampled aircraft.
fn horizon_states(
    route: &Route,
    setup: &SimSetup<'_>,
    run: &ContractRun,
    h: usize,
) -> Result<(Vec<crate::sim::State>, usize)> {
    let cfg = setup.cfg;
    let seed = derive_seed(cfg.seed, &[PURPOSE_HORIZON, h as u64]);
    if h == 0 {
        let origin = setup.proj.to_geo(&route.waypoints[0])?;
        let heading = route.initial_heading();
        let unc = setup.uncertainty.with_seed(seed);
        let mut states = init_states_uniform(&origin, heading, route.departure_time, &unc, cfg.n_aircraft)?;
        states[0] = nominal_state(&origin, heading, route.departure_time, &unc);
        return Ok((states, 1));
    }
    let prev = &run.batches[h - 1];
    let offset = cfg.stride();
    let dist = fit_window(prev, offset as f64, setup.uncertainty.resample_window_c, setup.proj)?;
    let region = run.contract.ovs[h - 1].entries[offset].region;
    let mut states = vec![dist.mean_state(setup.proj)?];
    states.extend(sample_states(
        &dist,
        derive_seed(seed, &[PURPOSE_RESAMPLE]),
        &region,
        cfg.resample_margin,
        cfg.n_aircraft - 1,
        setup.proj,
    )?);
    let hint = modal(prev.targets.iter().map(|t| t[offset]));
    Ok((states, hint))
}

/// Reach tube, verification and OV for one simulated horizon.
fn horizon_ov(
    batch: &TrajectorySet,
    setup: &SimSetup<'_>,
    h: usize,
) -> Result<(crate::ovmodel::OperationalVolume, VerificationReport)> {
    let cfg = setup.cfg;
    let positions = batch.local_positions(setup.proj)?;
    let c = batch.center_index;
    let norm_box = NormalizationBox::enclosing(positions.iter().flatten().copied())?.padded([cfg.norm_padding; 3]);
    let norm: Vec<Vec<[f64; 3]>> =
        positions.iter().map(|tr| tr.iter().map(|p| norm_box.normalize_unchecked(p)).collect()).collect();

    let mid = batch.duration / 2;
    let features: Vec<[f64; 6]> = positions
        .iter()
        .map(|tr| {
            let (m, e) = (tr[mid], tr[batch.duration]);
            let (cm, ce) = (positions[c][mid], positions[c][batch.duration]);
            [m[0] - cm[0], m[1] - cm[1], m[2] - cm[2], e[0] - ce[0], e[1] - ce[1], e[2] - ce[2]]
        })
        .collect();
    let training_idx = select_spread(&features, cfg.training, c);
    let mut is_training = vec![false; positions.len()];
    for &i in &training_idx {
        is_training[i] = true;
    }
    let training: Vec<Vec<[f64; 3]>> = training_idx.iter().map(|&i| norm[i].clone()).collect();

    let r0: [f64; 3] = std::array::from_fn(|a| {
        norm.iter().map(|tr| (tr[0][a] - norm[c][0][a]).abs()).fold(0.0, f64::max)
    });
    let unc = setup.uncertainty;
    let floor_m = [unc.log_noise_pos.max(1.0), unc.log_noise_pos.max(1.0), unc.log_noise_alt.max(1.0)];
    let floor: [f64; 3] = std::array::from_fn(|a| norm_box.normalize_length(a, floor_m[a]));
    let model = learn_discrepancy(&norm[c], &training, r0, floor)?;
    let tube = compute_reach_tube(&norm[c], &model, &norm_box, batch.t0)?;

    let holdout: Vec<Vec<[f64; 3]>> = positions
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != c && !is_training[i])
        .map(|(_, tr)| tr.clone())
        .collect();
    let report = verify_tube(&tube, &holdout, cfg.verification_threshold)?;
    debug!("horizon {h}: t0 = {}, inclusion {:.4}", batch.t0, report.inclusion_ratio);
    if !report.pass {
        return Err(Error::Verification { ov: h, ratio: report.inclusion_ratio, threshold: cfg.verification_threshold });
    }
    let ov = build_ov_from_positions(&tube, &positions, cfg.delta as f64, cfg.cell_size)?;
    Ok((ov, report))
}

/// Continues `run` horizon by horizon until the terminal quorum is met.
pub fn extend_contract(route: &Route, setup: &SimSetup<'_>, mut run: ContractRun) -> Result<ContractRun> {
    let cfg = setup.cfg;
    cfg.validate()?;
    route.validate()?;
    if run.batches.last().is_some_and(|b| b.arrived_fraction() >= cfg.terminal_quorum) {
        return Ok(run);
    }
    let slowest = setup.uncertainty.speed_range[0].max(setup.model.tas_min);
    let max_horizons = (route.length() / slowest / cfg.stride() as f64).ceil() as usize + 20;
    loop {
        let h = run.batches.len();
        if h >= max_horizons {
            return Err(Error::Planning(format!("batch did not reach the destination within {h} horizons")));
        }
        let (states, hint) = horizon_states(route, setup, &run, h)?;
        let unc = setup.uncertainty.with_seed(derive_seed(cfg.seed, &[PURPOSE_HORIZON, h as u64]));
        let batch = run_batch(&states, route, setup.proj, setup.model, &unc, cfg.t_d, hint)?;
        let (ov, report) = horizon_ov(&batch, setup, h)?;
        let done = batch.arrived_fraction() >= cfg.terminal_quorum;
        run.contract.ovs.push(ov);
        run.verification.push(report);
        run.batches.push(batch);
        if done {
            return Ok(run);
        }
    }
}

pub fn generate_contract(route: &Route, setup: &SimSetup<'_>, route_id: &str, aircraft_id: &str) -> Result<ContractRun> {
    extend_contract(route, setup, ContractRun::empty(route_id, aircraft_id, setup.cfg))
}

/// Horizons of `run` that a switch from `old` to `new` leaves untouched:
/// every aircraft steered only toward waypoints before the first change.
fn reusable_horizons(run: &ContractRun, old: &Route, new: &Route) -> usize {
    if old.speed != new.speed || old.departure_time != new.departure_time || old.leg_speeds != new.leg_speeds {
        return 0;
    }
    let first_change = old
        .waypoints
        .iter()
        .zip(&new.waypoints)
        .position(|(a, b)| a != b)
        .unwrap_or(old.waypoints.len().min(new.waypoints.len()));
    run.batches
        .iter()
        .take_while(|b| b.targets.iter().flatten().all(|&t| t + 1 < first_change))
        .count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "reason")]
pub enum PlanStatus {
    Accepted,
    Failed(FailureReason),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    Timeout,
    Verification,
    InfeasibleResample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTelemetry {
    pub round: usize,
    pub route_length: f64,
    pub waypoints: usize,
    pub conflicts: usize,
    pub nfz_violations: usize,
    pub ovs: usize,
    pub reused_horizons: usize,
}

#[derive(Debug, Clone)]
pub struct PlanResult {
    pub route: Option<Route>,
    pub contract: Contract,
    pub verification: Vec<VerificationReport>,
    pub repairs: usize,
    pub status: PlanStatus,
    pub candidate_length: Option<f64>,
    pub telemetry: Vec<RoundTelemetry>,
    /// Batches behind the contract, for auditing.
    pub batches: Vec<TrajectorySet>,
}

impl PlanResult {
    pub fn accepted(&self) -> bool {
        self.status == PlanStatus::Accepted
    }
}

/// What to fly: endpoints in the local frame, with cruise altitude in `z`.
#[derive(Debug, Clone)]
pub struct PlanRequest {
    pub env: Environment,
    pub origin: LocalPoint,
    pub destination: LocalPoint,
    pub departure_time: f64,
    pub speed: SpeedSpec,
    pub foreign: Vec<Contract>,
    pub route_id: String,
    pub aircraft_id: String,
}

/// Waypoints along `path` with altitude interpolated by distance.
pub fn route_from_path(path: &[Point2], origin: &LocalPoint, dest: &LocalPoint, dep: f64, speed: SpeedSpec) -> Result<Route> {
    let total = path_length(path).max(f64::MIN_POSITIVE);
    let mut along = 0.0;
    let mut pts = Vec::with_capacity(path.len());
    for (i, p) in path.iter().enumerate() {
        if i > 0 {
            along += path[i - 1].dist(p);
        }
        let z = origin.z + (dest.z - origin.z) * (along / total);
        pts.push(LocalPoint::new(p.x, p.y, z));
    }
    Route::new(pts, dep, speed)
}

fn failed(reason: FailureReason, run: ContractRun, tel: Vec<RoundTelemetry>) -> PlanResult {
    PlanResult {
        route: None,
        contract: run.contract,
        verification: run.verification,
        repairs: 0,
        status: PlanStatus::Failed(reason),
        candidate_length: None,
        telemetry: tel,
        batches: run.batches,
    }
}

/// Full plan/verify/repair cycle.
pub fn plan_and_contract(
    req: &PlanRequest,
    proj: &Projection,
    model: &AircraftModel,
    uncertainty: &UncertaintyConfig,
    cfg: &PipelineConfig,
) -> Result<PlanResult> {
    cfg.validate()?;
    let mut env = req.env.clone();
    let (o, d) = (Point2::new(req.origin.x, req.origin.y), Point2::new(req.destination.x, req.destination.y));
    let setup = SimSetup { proj, model, uncertainty, cfg };
    let mut telemetry = Vec::new();

    let (mut tree, mut path): (PlanTree, Vec<Point2>) =
        match plan_candidate(&env, o, d, cfg.step, cfg.nodes(), cfg.iteration_budget, cfg.seed) {
            Ok(x) => x,
            Err(Error::Planning(msg)) => {
                info!("no candidate: {msg}");
                return Ok(failed(FailureReason::Timeout, ContractRun::empty(&req.route_id, &req.aircraft_id, cfg), telemetry));
            }
            Err(e) => return Err(e),
        };
    let candidate_length = Some(path_length(&path));
    let give_up = |reason, route, run: Option<ContractRun>, repairs, telemetry| PlanResult {
        route,
        repairs,
        candidate_length,
        ..failed(reason, run.unwrap_or_else(|| ContractRun::empty(&req.route_id, &req.aircraft_id, cfg)), telemetry)
    };
    let mut repairs = 0;
    let mut cache: Option<(Route, ContractRun)> = None;
    let mut last_route = None;

    for round in 0..=cfg.max_repair_rounds {
        let opt = rope_optimize(&path, &env, cfg.opt_factor.unwrap_or_else(|| max_opt_factor(&path)));
        let route = route_from_path(&opt, &req.origin, &req.destination, req.departure_time, req.speed)?;
        last_route = Some(route.clone());
        let timed = estimate_timed_route(&route)?;
        let conflicts = find_conflicts(&timed, &req.foreign, cfg.conflict_threshold);
        let mut tel = RoundTelemetry {
            round,
            route_length: route.length(),
            waypoints: route.waypoints.len(),
            conflicts: conflicts.len(),
            nfz_violations: 0,
            ovs: 0,
            reused_horizons: 0,
        };
        if !conflicts.is_empty() {
            info!("round {round}: {} conflicts with foreign contracts", conflicts.len());
            telemetry.push(tel);
            if round == cfg.max_repair_rounds {
                break;
            }
            for c in &conflicts {
                if !env.blocked.contains(&c.footprint) {
                    env.blocked.push(c.footprint);
                }
            }
            match tree.sever_and_repair(&env, cfg.iteration_budget) {
                Ok(p) => path = p,
                Err(Error::Planning(msg)) => {
                    info!("repair failed: {msg}");
                    let run = cache.map(|c| c.1);
                    return Ok(give_up(FailureReason::Timeout, last_route, run, repairs, telemetry));
                }
                Err(e) => return Err(e),
            }
            repairs += 1;
            continue;
        }

        let mut run = match cache.take() {
            Some((old, mut run)) => {
                let keep = reusable_horizons(&run, &old, &route);
                run.truncate(keep);
                tel.reused_horizons = keep;
                run
            }
            None => ContractRun::empty(&req.route_id, &req.aircraft_id, cfg),
        };
        run = match extend_contract(&route, &setup, run) {
            Ok(r) => r,
            Err(Error::Verification { ov, ratio, .. }) => {
                info!("OV {ov} failed verification at {ratio:.4}");
                telemetry.push(tel);
                return Ok(give_up(FailureReason::Verification, last_route, None, repairs, telemetry));
            }
            Err(Error::InfeasibleResample(msg)) => {
                info!("resampling failed: {msg}");
                telemetry.push(tel);
                return Ok(give_up(FailureReason::InfeasibleResample, last_route, None, repairs, telemetry));
            }
            Err(e) => return Err(e),
        };
        tel.ovs = run.contract.ovs.len();

        // Stand-off each violated zone needs: the widest violating box half-size.
        let mut grow = vec![0.0f64; env.nfzs.len()];
        for ov in &run.contract.ovs {
            for (z, nfz) in env.nfzs.iter().enumerate() {
                for k in violating_entries(ov, nfz) {
                    let fp = ov.entries[k].region.footprint();
                    grow[z] = grow[z].max(0.5 * fp.width().max(fp.height()));
                    tel.nfz_violations += 1;
                }
            }
        }
        telemetry.push(tel);
        if grow.iter().all(|&g| g == 0.0) {
            return Ok(PlanResult {
                route: Some(route),
                contract: run.contract,
                verification: run.verification,
                repairs,
                status: PlanStatus::Accepted,
                candidate_length,
                telemetry,
                batches: run.batches,
            });
        }
        info!("round {round}: OVs clip {} no-fly zones", grow.iter().filter(|g| **g > 0.0).count());
        if round == cfg.max_repair_rounds {
            cache = Some((route, run));
            break;
        }
        for (c, g) in env.clearance.iter_mut().zip(&grow) {
            *c += g;
        }
        match tree.sever_and_repair(&env, cfg.iteration_budget) {
            Ok(p) => path = p,
            Err(Error::Planning(msg)) => {
                info!("repair failed: {msg}");
                return Ok(give_up(FailureReason::Timeout, last_route, Some(run), repairs, telemetry));
            }
            Err(e) => return Err(e),
        }
        cache = Some((route, run));
        repairs += 1;
    }
    let run = cache.map(|c| c.1);
    Ok(give_up(FailureReason::Timeout, last_route, run, repairs, telemetry))
}

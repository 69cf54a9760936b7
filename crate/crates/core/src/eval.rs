//! Desk-scale experiment suites: point inclusion, sensitivity to initial
//! conditions, and route generation benchmarks.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use log::info;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ovmodel::contract_contains;
use crate::pipeline::{generate_contract, ContractRun, SimSetup};
use crate::planner::{default_max_nodes, max_opt_factor, path_length, plan_candidate, rope_optimize};
use crate::rng::{derive_seed, PURPOSE_EVAL};
use crate::scenario::{Scenario, ScenarioFile};
use crate::sim::{init_states_uniform, run_batch};
use crate::{geometry, Point2};

/// Scenarios shipped with the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Fixture {
    /// Three gentle legs, about a quarter hour.
    Simple,
    /// Closed 16-gon, about eight minutes.
    Circular,
    /// Zigzag with 140 degree turns, altitude and speed changes.
    Complex,
    /// Two offset blocks between endpoints 7761 m apart; no fixed route.
    Planning,
}

impl Fixture {
    pub const ROUTES: [Fixture; 3] = [Fixture::Simple, Fixture::Circular, Fixture::Complex];

    pub fn name(self) -> &'static str {
        match self {
            Fixture::Simple => "simple",
            Fixture::Circular => "circular",
            Fixture::Complex => "complex",
            Fixture::Planning => "planning",
        }
    }

    pub fn text(self) -> &'static str {
        match self {
            Fixture::Simple => include_str!("../fixtures/simple.json"),
            Fixture::Circular => include_str!("../fixtures/circular.json"),
            Fixture::Complex => include_str!("../fixtures/complex.json"),
            Fixture::Planning => include_str!("../fixtures/planning.json"),
        }
    }

    pub fn load(self) -> Result<Scenario> {
        ScenarioFile::parse(self.text())?.resolve()
    }
}

impl FromStr for Fixture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simple" => Ok(Fixture::Simple),
            "circular" => Ok(Fixture::Circular),
            "complex" => Ok(Fixture::Complex),
            "planning" => Ok(Fixture::Planning),
            _ => Err(Error::Config(format!("unknown fixture {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sweep {
    /// Scenario as given.
    None,
    /// Initial airspeed range, m/s.
    SpeedRange(Vec<[f64; 2]>),
    /// Start position jitter radius, m.
    StartJitter(Vec<f64>),
    /// Tree step size, m.
    StepSize(Vec<f64>),
}

impl Sweep {
    pub fn param(&self) -> &'static str {
        match self {
            Sweep::None => "none",
            Sweep::SpeedRange(_) => "speed_range",
            Sweep::StartJitter(_) => "start_jitter",
            Sweep::StepSize(_) => "step",
        }
    }

    fn labels(&self) -> Vec<String> {
        match self {
            Sweep::None => vec!["-".into()],
            Sweep::SpeedRange(v) => v.iter().map(|[a, b]| format!("[{a}, {b}]")).collect(),
            Sweep::StartJitter(v) => v.iter().map(|r| format!("{r}")).collect(),
            Sweep::StepSize(v) => v.iter().map(|s| format!("{s}")).collect(),
        }
    }

    /// The scenario with sweep point `i` applied.
    fn apply(&self, base: &Scenario, i: usize) -> Scenario {
        let mut s = base.clone();
        match self {
            Sweep::None => {}
            Sweep::SpeedRange(v) => s.uncertainty.speed_range = v[i],
            Sweep::StartJitter(v) => s.uncertainty.pos_jitter = v[i],
            Sweep::StepSize(v) => {
                s.pipeline.step = v[i];
                s.pipeline.max_nodes = Some(default_max_nodes(v[i]));
            }
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    pub sweep: Sweep,
    pub n_aircraft: usize,
    pub seeds: Vec<u64>,
}

impl ExperimentSpec {
    pub fn new(scenario: Scenario, sweep: Sweep, n_aircraft: usize, seeds: Vec<u64>) -> Self {
        Self { scenario, sweep, n_aircraft, seeds }
    }

    pub fn fixture(f: Fixture, sweep: Sweep, n_aircraft: usize, seeds: Vec<u64>) -> Result<Self> {
        Ok(Self::new(f.load()?, sweep, n_aircraft, seeds))
    }

    fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("an experiment needs at least one seed".into()));
        }
        let empty = match &self.sweep {
            Sweep::None => false,
            Sweep::SpeedRange(v) => v.is_empty(),
            Sweep::StartJitter(v) => v.is_empty(),
            Sweep::StepSize(v) => v.is_empty(),
        };
        if empty {
            return Err(Error::Config("sweep has no values".into()));
        }
        Ok(())
    }

    /// Every (sweep point, seed) pair with the scenario it runs.
    fn points(&self) -> Vec<(String, u64, Scenario)> {
        let mut out = Vec::new();
        for (i, label) in self.sweep.labels().into_iter().enumerate() {
            let s = self.sweep.apply(&self.scenario, i);
            for &seed in &self.seeds {
                let mut s = s.clone();
                s.pipeline.seed = seed;
                s.pipeline.n_aircraft = self.n_aircraft;
                s.uncertainty.seed = seed;
                out.push((label.clone(), seed, s));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub scenario: String,
    pub param: String,
    pub value: String,
    pub seed: u64,
    pub metrics: Vec<(String, f64)>,
}

impl ReportRow {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(k, _)| k == name).map(|&(_, v)| v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub value: String,
    pub metric: String,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

impl Aggregate {
    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub suite: String,
    pub rows: Vec<ReportRow>,
    pub aggregates: Vec<Aggregate>,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

impl ExperimentReport {
    pub fn new(suite: &str, rows: Vec<ReportRow>) -> Self {
        let aggregates = aggregate(&rows);
        Self { suite: suite.into(), rows, aggregates }
    }

    pub fn aggregate(&self, value: &str, metric: &str) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.value == value && a.metric == metric)
    }

    fn metric_names(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for r in &self.rows {
            for (k, _) in &r.metrics {
                if !names.contains(k) {
                    names.push(k.clone());
                }
            }
        }
        names
    }

    pub fn to_csv(&self) -> String {
        let names = self.metric_names();
        let mut out = String::from("scenario,param,value,seed");
        for n in &names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{},{},\"{}\",{}", r.scenario, r.param, r.value, r.seed);
            for n in &names {
                out.push(',');
                if let Some(v) = r.metric(n) {
                    out.push_str(&crate::export::fmt_num(v));
                }
            }
            out.push('\n');
        }
        out
    }

    /// One line per sweep point, each metric as median (IQR).
    pub fn to_markdown(&self) -> String {
        let names = self.metric_names();
        let scenario = self.rows.first().map_or("", |r| r.scenario.as_str());
        let param = self.rows.first().map_or("", |r| r.param.as_str());
        let mut out = format!("## {} ({scenario})\n\n| {param} |", self.suite);
        for n in &names {
            let _ = write!(out, " {n} |");
        }
        out.push_str("\n|---|");
        out.push_str(&"---:|".repeat(names.len()));
        out.push('\n');
        let mut seen: Vec<&str> = Vec::new();
        for r in &self.rows {
            if seen.contains(&r.value.as_str()) {
                continue;
            }
            seen.push(&r.value);
            let _ = write!(out, "| {} |", r.value);
            for n in &names {
                match self.aggregate(&r.value, n) {
                    Some(a) => {
                        let _ = write!(out, " {:.4} ({:.4}) |", a.median, a.iqr());
                    }
                    None => out.push_str(" |"),
                }
            }
            out.push('\n');
        }
        out
    }
}

fn aggregate(rows: &[ReportRow]) -> Vec<Aggregate> {
    let mut groups: BTreeMap<(usize, String), Vec<f64>> = BTreeMap::new();
    let mut order: Vec<&str> = Vec::new();
    for r in rows {
        let vi = order.iter().position(|v| *v == r.value).unwrap_or_else(|| {
            order.push(&r.value);
            order.len() - 1
        });
        for (k, v) in &r.metrics {
            groups.entry((vi, k.clone())).or_default().push(*v);
        }
    }
    groups
        .into_iter()
        .map(|((vi, metric), mut vals)| {
            vals.sort_by(f64::total_cmp);
            Aggregate {
                value: order[vi].to_string(),
                metric,
                median: quantile(&vals, 0.5),
                q1: quantile(&vals, 0.25),
                q3: quantile(&vals, 0.75),
            }
        })
        .collect()
}

fn fixed_route(s: &Scenario) -> Result<&crate::planner::Route> {
    s.route.as_ref().ok_or_else(|| Error::Config(format!("scenario {} has no fixed route", s.name)))
}

fn contract_for(s: &Scenario) -> Result<ContractRun> {
    let route = fixed_route(s)?;
    let setup = SimSetup { proj: &s.proj, model: &s.aircraft, uncertainty: &s.uncertainty, cfg: &s.pipeline };
    generate_contract(route, &setup, &s.route_id, &s.aircraft_id)
}

/// Mean over OVs of the union of their entry footprints, km².
pub fn mean_ov_area_km2(run: &ContractRun) -> f64 {
    let ovs = &run.contract.ovs;
    if ovs.is_empty() {
        return 0.0;
    }
    ovs.iter().map(|ov| geometry::union_area(&ov.footprints())).sum::<f64>() / ovs.len() as f64 / 1.0e6
}

/// Points of a fresh, unconstrained batch flown over the contract span
/// that fall inside some active OV.
pub fn inclusion_counts(s: &Scenario, run: &ContractRun, seed: u64) -> Result<(usize, usize)> {
    let route = fixed_route(s)?;
    let Some((start, end)) = run.contract.span() else {
        return Ok((0, 0));
    };
    let duration = (end - start).floor() as usize;
    let unc = s.uncertainty.with_seed(derive_seed(seed, &[PURPOSE_EVAL]));
    let origin = s.proj.to_geo(&route.waypoints[0])?;
    let states = init_states_uniform(&origin, route.initial_heading(), route.departure_time, &unc, s.pipeline.n_aircraft)?;
    let batch = run_batch(&states, route, &s.proj, &s.aircraft, &unc, duration, 1)?;
    let positions = batch.local_positions(&s.proj)?;
    let mut total = 0;
    let mut inside = 0;
    for (tr, states) in positions.iter().zip(&batch.trajectories) {
        for (p, st) in tr.iter().zip(states) {
            total += 1;
            if contract_contains(&run.contract, &crate::LocalPoint::new(p[0], p[1], p[2]), st.t) {
                inside += 1;
            }
        }
    }
    Ok((total, inside))
}

pub fn run_point_inclusion(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let rows = spec
        .points()
        .into_par_iter()
        .map(|(value, seed, s)| {
            let run = contract_for(&s)?;
            let (total, inside) = inclusion_counts(&s, &run, seed)?;
            let pct = if total == 0 { 0.0 } else { 100.0 * inside as f64 / total as f64 };
            info!("inclusion {} seed {seed}: {inside}/{total} = {pct:.2}%", s.name);
            Ok(ReportRow {
                scenario: s.name.clone(),
                param: spec.sweep.param().into(),
                value,
                seed,
                metrics: vec![
                    ("ovs".into(), run.contract.ovs.len() as f64),
                    ("total_points".into(), total as f64),
                    ("included_points".into(), inside as f64),
                    ("inclusion_pct".into(), pct),
                ],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport::new("inclusion", rows))
}

pub fn run_sensitivity(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let rows = spec
        .points()
        .into_par_iter()
        .map(|(value, seed, s)| {
            let run = contract_for(&s)?;
            let area = mean_ov_area_km2(&run);
            info!("sensitivity {} {value} seed {seed}: {} OVs, {area:.4} km2", s.name, run.contract.ovs.len());
            Ok(ReportRow {
                scenario: s.name.clone(),
                param: spec.sweep.param().into(),
                value,
                seed,
                metrics: vec![("ovs".into(), run.contract.ovs.len() as f64), ("mean_area_km2".into(), area)],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport::new("sensitivity", rows))
}

/// Timed repetitions per row; the row reports their median.
pub const TIMING_REPEATS: usize = 5;

fn plan_once(s: &Scenario, seed: u64) -> Result<(Vec<Point2>, Vec<Point2>)> {
    let cfg = &s.pipeline;
    let origin = Point2::new(s.origin.x, s.origin.y);
    let goal = Point2::new(s.destination.x, s.destination.y);
    let (_, candidate) = plan_candidate(&s.env, origin, goal, cfg.step, cfg.nodes(), cfg.iteration_budget, seed)?;
    let optimized = rope_optimize(&candidate, &s.env, cfg.opt_factor.unwrap_or_else(|| max_opt_factor(&candidate)));
    Ok((candidate, optimized))
}

/// Candidate search then rope pulling at the full lookahead. Runs
/// sequentially so that wall times do not compete for cores; `wall_s` is
/// the only column that does not reproduce exactly.
pub fn run_planning_benchmarks(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let mut rows = Vec::new();
    let points = spec.points();
    if let Some((_, seed, s)) = points.first() {
        // Warm caches and the allocator before anything is timed.
        plan_once(s, *seed)?;
    }
    for (value, seed, s) in points {
        let cfg = &s.pipeline;
        let origin = Point2::new(s.origin.x, s.origin.y);
        let goal = Point2::new(s.destination.x, s.destination.y);
        let mut times = Vec::with_capacity(TIMING_REPEATS);
        let mut out = None;
        for _ in 0..TIMING_REPEATS {
            let started = Instant::now();
            let r = plan_once(&s, seed)?;
            times.push(started.elapsed().as_secs_f64());
            out = Some(r);
        }
        let (candidate, optimized) = out.expect("at least one repeat");
        let wall = median(&times);
        let (lc, lo) = (path_length(&candidate), path_length(&optimized));
        info!("planning step {value} seed {seed}: {lc:.1} -> {lo:.1} m in {wall:.3} s");
        rows.push(ReportRow {
            scenario: s.name.clone(),
            param: spec.sweep.param().into(),
            value,
            seed,
            metrics: vec![
                ("max_nodes".into(), cfg.nodes() as f64),
                ("direct_m".into(), origin.dist(&goal)),
                ("candidate_m".into(), lc),
                ("optimized_m".into(), lo),
                ("delta_m".into(), lc - lo),
                ("wall_s".into(), wall),
            ],
        });
    }
    Ok(ExperimentReport::new("planning", rows))
}

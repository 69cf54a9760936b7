//! `airlane`: plan routes, export contracts, run the experiment suites and
//! draw contracts as SVG.
//!
//! Exit codes: 0 success, 1 input error, 2 planning failure.

mod render;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use airlane_core::eval::{
    run_planning_benchmarks, run_point_inclusion, run_sensitivity, ExperimentReport, ExperimentSpec, Fixture, Sweep,
};
use airlane_core::export::{contract_from_json, contract_to_json, route_geojson};
use airlane_core::pipeline::plan_and_contract;
use airlane_core::scenario::{Scenario, ScenarioFile};
use airlane_core::{Error, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::json;

#[derive(Parser)]
#[command(name = "airlane", version, about = "Route planning and 4D operational-volume contracts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand)]
enum Command {
    /// Plan a route and write route GeoJSON, contract JSON and a manifest.
    Plan { scenario: PathBuf, out_dir: PathBuf },
    /// Run an experiment suite and write a CSV and a Markdown report.
    Eval {
        suite: Suite,
        /// Scenario file, or one of the built-in fixtures
        /// (simple, circular, complex, planning).
        scenario: String,
        out_dir: PathBuf,
        /// Number of seeds, counted up from --seed.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
    },
    /// Draw OV footprints top-down, one colour per OV cycling red, green, blue.
    Render {
        contract: PathBuf,
        out_svg: PathBuf,
        /// Scenario whose no-fly zones are drawn.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Route GeoJSON to overlay.
        #[arg(long)]
        route: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Inclusion,
    Sensitivity,
    Planning,
}

/// Pipeline settings that take precedence over the scenario file.
#[derive(Args)]
struct Overrides {
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    n_aircraft: Option<usize>,
    /// OV duration, s.
    #[arg(long, global = true)]
    td: Option<usize>,
    /// Offset between consecutive OVs, s.
    #[arg(long, global = true)]
    delta: Option<usize>,
    /// Tree step size, m.
    #[arg(long, global = true)]
    step: Option<f64>,
    #[arg(long, global = true)]
    max_nodes: Option<usize>,
    #[arg(long, global = true)]
    opt_factor: Option<usize>,
    /// Verification inclusion threshold.
    #[arg(long, global = true)]
    threshold: Option<f64>,
}

impl Overrides {
    fn apply(&self, f: &mut ScenarioFile) {
        if let Some(seed) = self.seed {
            f.seed = Some(seed);
            f.pipeline.seed = seed;
            f.uncertainty.seed = seed;
        }
        let p = &mut f.pipeline;
        if let Some(n) = self.n_aircraft {
            p.n_aircraft = n;
        }
        if let Some(t) = self.td {
            p.t_d = t;
        }
        if let Some(d) = self.delta {
            p.delta = d;
        }
        if let Some(s) = self.step {
            p.step = s;
        }
        if self.max_nodes.is_some() {
            p.max_nodes = self.max_nodes;
        }
        if self.opt_factor.is_some() {
            p.opt_factor = self.opt_factor;
        }
        if let Some(t) = self.threshold {
            p.verification_threshold = t;
        }
    }
}

/// Writes through a temporary file in the target directory so readers
/// never see a partial file.
fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    use std::io::Write;
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn load_scenario(arg: &str, overrides: &Overrides) -> Result<Scenario> {
    let path = Path::new(arg);
    let mut file = if path.exists() {
        ScenarioFile::load(path)?
    } else if let Ok(f) = Fixture::from_str(arg) {
        ScenarioFile::parse(f.text())?
    } else {
        return Err(Error::Config(format!("{arg}: no such scenario file or built-in fixture")));
    };
    overrides.apply(&mut file);
    file.resolve()
}

fn cmd_plan(scenario: &Path, out_dir: &Path, overrides: &Overrides) -> Result<ExitCode> {
    let s = load_scenario(&scenario.to_string_lossy(), overrides)?;
    let foreign = s.load_foreign()?;
    info!("planning {} against {} foreign contracts", s.name, foreign.len());
    let r = plan_and_contract(&s.request(foreign), &s.proj, &s.aircraft, &s.uncertainty, &s.pipeline)?;

    std::fs::create_dir_all(out_dir)?;
    if let Some(route) = &r.route {
        let g = serde_json::to_string_pretty(&route_geojson(route, &s.proj)?)?;
        write_atomic(&out_dir.join("route.geojson"), g.as_bytes())?;
    }
    write_atomic(&out_dir.join("contract.json"), contract_to_json(&r.contract, Some(&s.proj.origin))?.as_bytes())?;
    let manifest = json!({
        "scenario": s.name,
        "route_id": s.route_id,
        "aircraft_id": s.aircraft_id,
        "status": r.status,
        "seed": s.pipeline.seed,
        "origin": s.proj.origin,
        "pipeline": s.pipeline,
        "uncertainty": s.uncertainty,
        "aircraft": s.aircraft,
        "candidate_length_m": r.candidate_length,
        "route_length_m": r.route.as_ref().map(|x| x.length()),
        "waypoints": r.route.as_ref().map(|x| x.waypoints.len()),
        "repairs": r.repairs,
        "ovs": r.contract.ovs.len(),
        "verification": r.verification,
        "telemetry": r.telemetry,
    });
    write_atomic(&out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?.as_bytes())?;

    if r.accepted() {
        println!("accepted: {} OVs after {} repairs", r.contract.ovs.len(), r.repairs);
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("planning failed: {:?}", r.status);
        Ok(ExitCode::from(2))
    }
}

fn cmd_eval(suite: Suite, scenario: &str, out_dir: &Path, n_seeds: u64, overrides: &Overrides) -> Result<ExitCode> {
    let s = load_scenario(scenario, overrides)?;
    let first = overrides.seed.unwrap_or(1);
    let seeds: Vec<u64> = (first..first + n_seeds.max(1)).collect();
    let n = s.pipeline.n_aircraft;
    let spec = |sweep| ExperimentSpec::new(s.clone(), sweep, n, seeds.clone());
    let (name, reports) = match suite {
        Suite::Inclusion => ("inclusion", vec![run_point_inclusion(&spec(Sweep::None))?]),
        Suite::Sensitivity => (
            "sensitivity",
            vec![
                run_sensitivity(&spec(Sweep::SpeedRange(vec![[20.0, 24.0], [16.0, 26.0]])))?,
                run_sensitivity(&spec(Sweep::StartJitter(vec![10.0, 100.0])))?,
            ],
        ),
        Suite::Planning => {
            let steps = overrides.step.map_or_else(|| vec![50.0, 100.0, 150.0, 200.0], |x| vec![x]);
            ("planning", vec![run_planning_benchmarks(&spec(Sweep::StepSize(steps)))?])
        }
    };
    let rows = reports.iter().flat_map(|r| r.rows.clone()).collect();
    let csv = ExperimentReport::new(name, rows).to_csv();
    let md = reports.iter().map(|r| r.to_markdown()).collect::<Vec<_>>().join("\n");
    write_atomic(&out_dir.join(format!("{name}.csv")), csv.as_bytes())?;
    write_atomic(&out_dir.join(format!("{name}.md")), md.as_bytes())?;
    print!("{md}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_render(contract: &Path, out: &Path, scenario: Option<&Path>, route: Option<&Path>) -> Result<ExitCode> {
    let (c, origin) = contract_from_json(&std::fs::read_to_string(contract)?)?;
    let scenario = scenario.map(|p| ScenarioFile::load(p)?.resolve()).transpose()?;
    let proj = match (&scenario, origin) {
        (Some(s), _) => Some(s.proj),
        (None, Some(o)) => Some(airlane_core::Projection::new(o)?),
        (None, None) => None,
    };
    let route = match route {
        Some(p) => {
            let proj = proj.as_ref().ok_or_else(|| Error::Config("a route overlay needs a contract origin or --scenario".into()))?;
            Some(render::route_from_geojson(&std::fs::read_to_string(p)?, proj)?)
        }
        None => None,
    };
    let nfzs = scenario.map(|s| s.env.nfzs).unwrap_or_default();
    let svg = render::svg(&c, &nfzs, route.as_deref());
    write_atomic(out, svg.as_bytes())?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("AIRLANE_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let o = &cli.overrides;
    let result = match &cli.command {
        Command::Plan { scenario, out_dir } => cmd_plan(scenario, out_dir, o),
        Command::Eval { suite, scenario, out_dir, seeds } => cmd_eval(*suite, scenario, out_dir, *seeds, o),
        Command::Render { contract, out_svg, scenario, route } => {
            cmd_render(contract, out_svg, scenario.as_deref(), route.as_deref())
        }
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(1)
    })
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use airlane_core::export::{contract_from_json, contract_to_json, footprints_geojson};
use airlane_core::ovmodel::{Contract, OccupancyGrid, OperationalVolume, OvEntry};
use airlane_core::{Aabb, GeoPoint, Projection, Rect};
use quick_xml::events::Event;
use serde_json::Value;

fn airlane(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_airlane")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SHORT: &str = r#"{
    "name": "short",
    "origin": {"lat": 52.0, "lon": -1.0, "alt": 60.0},
    "destination": {"lat": 52.0, "lon": -0.97, "alt": 60.0},
    "nfzs": [{"id": "block", "polygon": [[51.996, -0.988], [51.996, -0.982], [52.004, -0.982], [52.004, -0.988]]}],
    "seed": 3
}"#;

fn scenario(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

/// Element names with their attributes. The reader rejects mismatched
/// end tags, so this also checks the document is well-formed.
fn parse_svg(text: &str) -> Vec<(String, Vec<(String, String)>)> {
    let mut reader = quick_xml::Reader::from_str(text);
    let mut out = Vec::new();
    loop {
        match reader.read_event().expect("well-formed SVG") {
            Event::Eof => break,
            Event::Start(e) | Event::Empty(e) => {
                let name = e.name().as_ref().to_string();
                let attrs = e
                    .attributes()
                    .map(|a| {
                        let a = a.unwrap();
                        (a.key.as_ref().to_string(), a.value.to_string())
                    })
                    .collect();
                out.push((name, attrs));
            }
            _ => {}
        }
    }
    assert_eq!(out.first().map(|e| e.0.as_str()), Some("svg"));
    out
}

fn attr<'a>(e: &'a (String, Vec<(String, String)>), key: &str) -> Option<&'a str> {
    e.1.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

#[test]
fn plan_writes_three_files_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario(dir.path(), "short.json", SHORT);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = airlane(&["plan", s(&sc), s(out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["route.geojson", "contract.json", "manifest.json"] {
        let (x, y) = (std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
        assert!(!x.is_empty());
        assert_eq!(x, y, "{f} differs between runs");
    }
    let m: Value = serde_json::from_str(&std::fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["status"]["status"], "accepted");
    assert_eq!(m["seed"], 3);
    assert!(!m["telemetry"].as_array().unwrap().is_empty());
    // Nothing but the outputs is left behind.
    assert_eq!(std::fs::read_dir(&a).unwrap().count(), 3);
}

#[test]
fn flags_override_the_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario(dir.path(), "short.json", SHORT);
    let out = dir.path().join("out");
    let o = airlane(&["plan", s(&sc), s(&out), "--seed", "9", "--td", "40", "--delta", "10", "--n-aircraft", "120"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m: Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 9);
    assert_eq!(m["pipeline"]["t_d"], 40);
    assert_eq!(m["pipeline"]["delta"], 10);
    let (c, _) = contract_from_json(&std::fs::read_to_string(out.join("contract.json")).unwrap()).unwrap();
    assert!(c.ovs.iter().all(|ov| ov.entries.len() == 41 && ov.entries[0].dist.n_total == 120));
}

#[test]
fn input_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let inside = SHORT.replace(r#""lon": -0.97"#, r#""lon": -0.985"#);
    let goal_in_zone = scenario(dir.path(), "goal.json", &inside);
    let o = airlane(&["plan", s(&goal_in_zone), s(&dir.path().join("x"))]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no-fly zone"));

    let typo = scenario(dir.path(), "typo.json", &SHORT.replace("\"nfzs\"", "\"nfz\""));
    let o = airlane(&["plan", s(&typo), s(&dir.path().join("x"))]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line"));

    assert_eq!(code(&airlane(&["plan", "/nonexistent/scenario.json", s(dir.path())])), 1);
    assert_eq!(code(&airlane(&["eval", "tables", "simple", s(dir.path())])), 1);
    assert_eq!(code(&airlane(&["render", "/nonexistent/contract.json", s(&dir.path().join("x.svg"))])), 1);
    assert_eq!(code(&airlane(&["plan"])), 1);
    assert_eq!(code(&airlane(&["--help"])), 0);
}

#[test]
fn planning_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = SHORT.replace(r#""seed": 3"#, r#""seed": 3, "pipeline": {"iteration_budget": 3}"#);
    let sc = scenario(dir.path(), "tight.json", &text);
    let out = dir.path().join("out");
    let o = airlane(&["plan", s(&sc), s(&out)]);
    assert_eq!(code(&o), 2);
    let m: Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["status"]["reason"], "timeout");
    assert!(!out.join("route.geojson").exists());
}

#[test]
fn eval_planning_has_one_row_per_step_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    for _ in 0..2 {
        let o = airlane(&["eval", "planning", "planning", s(dir.path()), "--seeds", "2"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    // A re-run replaces the files instead of appending to them.
    let csv = std::fs::read_to_string(dir.path().join("planning.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 1 + 4 * 2);
    assert!(lines[0].starts_with("scenario,param,value,seed"));
    for step in ["50", "100", "150", "200"] {
        assert_eq!(lines.iter().filter(|l| l.contains(&format!(",\"{step}\","))).count(), 2);
    }
    let md = std::fs::read_to_string(dir.path().join("planning.md")).unwrap();
    assert!(md.contains("| 150 |"));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 2);
}

#[test]
fn eval_inclusion_reports_a_percentage() {
    let dir = tempfile::tempdir().unwrap();
    let o = airlane(&["eval", "inclusion", "circular", s(dir.path()), "--seeds", "1", "--n-aircraft", "60"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("inclusion.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == "inclusion_pct").unwrap();
    let pct: f64 = row[k].parse().unwrap();
    assert!(pct > 0.0 && pct <= 100.0);
}

fn synthetic_contract(n_ovs: usize) -> Contract {
    let fp = Rect::new(0.0, 0.0, 40.0, 30.0);
    let grid = OccupancyGrid::build(&[[5.0, 5.0, 60.0], [25.0, 15.0, 60.0]], &fp, 10.0).unwrap();
    let mut c = Contract::new("r", "a", 60.0, 15.0);
    for j in 0..n_ovs {
        let t0 = 45.0 * j as f64;
        let dx = 300.0 * j as f64;
        c.ovs.push(OperationalVolume {
            entries: (0..=60)
                .map(|k| OvEntry {
                    region: Aabb::new([dx + k as f64, 0.0, 50.0], [dx + 40.0 + k as f64, 30.0, 70.0]),
                    t: t0 + k as f64,
                    dist: grid.clone(),
                })
                .collect(),
            t0,
            t_d: 60.0,
            delta: 15.0,
        });
    }
    c
}

#[test]
fn render_draws_one_group_per_ov() {
    let dir = tempfile::tempdir().unwrap();
    let origin = GeoPoint { lat: 52.0, lon: -1.0, alt: 0.0 };
    let c = synthetic_contract(18);
    let path = scenario(dir.path(), "c.json", &contract_to_json(&c, Some(&origin)).unwrap());
    let svg_path = dir.path().join("c.svg");
    assert_eq!(code(&airlane(&["render", s(&path), s(&svg_path)])), 0);
    let elems = parse_svg(&std::fs::read_to_string(&svg_path).unwrap());
    let groups: Vec<_> = elems.iter().filter(|e| e.0 == "g" && attr(e, "class") == Some("ov")).collect();
    assert_eq!(groups.len(), 18);
    let fills: Vec<&str> = groups.iter().map(|g| attr(g, "fill").unwrap()).collect();
    assert_eq!(&fills[..4], &["red", "green", "blue", "red"]);

    // Same vertex count as the GeoJSON export, whose rings repeat the first vertex.
    let geo = footprints_geojson(&c, &Projection::new(origin).unwrap()).unwrap();
    let geo_vertices: usize = geo["features"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["geometry"]["coordinates"][0].as_array().unwrap().len() - 1)
        .sum();
    let svg_vertices: usize = elems
        .iter()
        .filter(|e| e.0 == "polygon" && attr(e, "class").is_none())
        .map(|e| attr(e, "points").unwrap().split_whitespace().count())
        .sum();
    assert_eq!(svg_vertices, geo_vertices);
}

#[test]
fn empty_contract_renders_axes_only() {
    let dir = tempfile::tempdir().unwrap();
    let c = Contract::new("r", "a", 60.0, 15.0);
    let path = scenario(dir.path(), "c.json", &contract_to_json(&c, None).unwrap());
    let svg_path = dir.path().join("c.svg");
    assert_eq!(code(&airlane(&["render", s(&path), s(&svg_path)])), 0);
    let elems = parse_svg(&std::fs::read_to_string(&svg_path).unwrap());
    assert!(elems.iter().any(|e| e.0 == "g" && attr(e, "id") == Some("axes")));
    assert!(!elems.iter().any(|e| e.0 == "polygon" || e.0 == "polyline"));
}

#[test]
fn plan_then_render_with_overlays() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario(dir.path(), "short.json", SHORT);
    let out = dir.path().join("out");
    assert_eq!(code(&airlane(&["plan", s(&sc), s(&out)])), 0);
    let svg_path = out.join("plan.svg");
    let o = airlane(&[
        "render",
        s(&out.join("contract.json")),
        s(&svg_path),
        "--scenario",
        s(&sc),
        "--route",
        s(&out.join("route.geojson")),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let elems = parse_svg(&std::fs::read_to_string(&svg_path).unwrap());
    let (c, _) = contract_from_json(&std::fs::read_to_string(out.join("contract.json")).unwrap()).unwrap();
    assert_eq!(elems.iter().filter(|e| e.0 == "g" && attr(e, "class") == Some("ov")).count(), c.ovs.len());
    assert_eq!(elems.iter().filter(|e| attr(e, "class") == Some("nfz")).count(), 1);
    let route: Value = serde_json::from_str(&std::fs::read_to_string(out.join("route.geojson")).unwrap()).unwrap();
    let n = route["features"][0]["geometry"]["coordinates"].as_array().unwrap().len();
    let line = elems.iter().find(|e| e.0 == "polyline").unwrap();
    assert_eq!(attr(line, "points").unwrap().split_whitespace().count(), n);
}

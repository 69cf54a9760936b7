//! Top-down SVG of a contract in its local frame.

use std::fmt::Write as _;

use airlane_core::ovmodel::{Contract, NoFlyZone};
use airlane_core::{Error, GeoPoint, Point2, Projection, Rect, Result};
use serde_json::Value;

const COLORS: [&str; 3] = ["red", "green", "blue"];
const WIDTH: f64 = 800.0;
const MARGIN: f64 = 60.0;
const TICKS: usize = 5;

/// Local polyline of the first LineString in a route GeoJSON.
pub fn route_from_geojson(text: &str, proj: &Projection) -> Result<Vec<Point2>> {
    let doc: Value = serde_json::from_str(text)?;
    let coords = doc["features"]
        .as_array()
        .into_iter()
        .flatten()
        .map(|f| &f["geometry"])
        .find(|g| g["type"] == "LineString")
        .and_then(|g| g["coordinates"].as_array())
        .ok_or_else(|| Error::Format("route GeoJSON has no LineString".into()))?;
    coords
        .iter()
        .map(|c| {
            let (lon, lat) = match (c[0].as_f64(), c[1].as_f64()) {
                (Some(lon), Some(lat)) => (lon, lat),
                _ => return Err(Error::Format("route coordinate is not [lon, lat, ...]".into())),
            };
            let p = proj.to_local(&GeoPoint { lat, lon, alt: 0.0 })?;
            Ok(Point2::new(p.x, p.y))
        })
        .collect()
}

struct Frame {
    bounds: Rect,
    scale: f64,
    height: f64,
}

impl Frame {
    fn new(points: &[Point2]) -> Self {
        let bounds = match Rect::bounding(points) {
            Some(b) if b.width() > 0.0 && b.height() > 0.0 => b.expanded(0.02 * b.width().max(b.height())),
            Some(b) => b.expanded(500.0),
            None => Rect::new(0.0, 0.0, 1000.0, 1000.0),
        };
        let scale = (WIDTH - 2.0 * MARGIN) / bounds.width();
        let height = (bounds.height() * scale + 2.0 * MARGIN).ceil();
        Self { bounds, scale, height }
    }

    fn px(&self, p: &Point2) -> (f64, f64) {
        (MARGIN + (p.x - self.bounds.min_x) * self.scale, self.height - MARGIN - (p.y - self.bounds.min_y) * self.scale)
    }

    fn points(&self, pts: &[Point2]) -> String {
        pts.iter()
            .map(|p| {
                let (x, y) = self.px(p);
                format!("{x:.2},{y:.2}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn axes(out: &mut String, f: &Frame) {
    let b = &f.bounds;
    let (x0, y0) = f.px(&Point2::new(b.min_x, b.min_y));
    let (x1, y1) = f.px(&Point2::new(b.max_x, b.max_y));
    out.push_str("<g id=\"axes\" stroke=\"black\" stroke-width=\"1\" font-size=\"10\" font-family=\"sans-serif\">\n");
    let _ = writeln!(out, "<line x1=\"{x0:.2}\" y1=\"{y0:.2}\" x2=\"{x1:.2}\" y2=\"{y0:.2}\"/>");
    let _ = writeln!(out, "<line x1=\"{x0:.2}\" y1=\"{y0:.2}\" x2=\"{x0:.2}\" y2=\"{y1:.2}\"/>");
    for i in 0..=TICKS {
        let u = i as f64 / TICKS as f64;
        let (vx, vy) = (b.min_x + u * b.width(), b.min_y + u * b.height());
        let (tx, _) = f.px(&Point2::new(vx, b.min_y));
        let (_, ty) = f.px(&Point2::new(b.min_x, vy));
        let _ = writeln!(out, "<line x1=\"{tx:.2}\" y1=\"{y0:.2}\" x2=\"{tx:.2}\" y2=\"{:.2}\"/>", y0 + 5.0);
        let _ = writeln!(out, "<text x=\"{tx:.2}\" y=\"{:.2}\" text-anchor=\"middle\" stroke=\"none\">{vx:.0}</text>", y0 + 18.0);
        let _ = writeln!(out, "<line x1=\"{:.2}\" y1=\"{ty:.2}\" x2=\"{x0:.2}\" y2=\"{ty:.2}\"/>", x0 - 5.0);
        let _ = writeln!(out, "<text x=\"{:.2}\" y=\"{ty:.2}\" text-anchor=\"end\" stroke=\"none\">{vy:.0}</text>", x0 - 8.0);
    }
    let _ = writeln!(out, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" stroke=\"none\">east (m)</text>", 0.5 * (x0 + x1), y0 + 36.0);
    let _ = writeln!(out, "<text x=\"12\" y=\"{:.2}\" stroke=\"none\">north (m)</text>", y1 - 12.0);
    out.push_str("</g>\n");
}

/// One `<g class="ov">` per OV holding one polygon per entry footprint.
pub fn svg(contract: &Contract, nfzs: &[NoFlyZone], route: Option<&[Point2]>) -> String {
    let mut pts: Vec<Point2> = contract.ovs.iter().flat_map(|ov| ov.entries.iter().flat_map(|e| e.region.footprint().corners())).collect();
    pts.extend(nfzs.iter().flat_map(|z| z.polygon.iter().copied()));
    pts.extend(route.into_iter().flatten().copied());
    let f = Frame::new(&pts);

    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{h}\" viewBox=\"0 0 {WIDTH} {h}\">\n",
        h = f.height
    );
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    axes(&mut out, &f);
    if !nfzs.is_empty() {
        out.push_str("<g id=\"nfzs\" fill=\"gray\" fill-opacity=\"0.4\" stroke=\"black\">\n");
        for z in nfzs {
            let _ = writeln!(out, "<polygon class=\"nfz\" data-id=\"{}\" points=\"{}\"/>", z.id, f.points(&z.polygon));
        }
        out.push_str("</g>\n");
    }
    for (j, ov) in contract.ovs.iter().enumerate() {
        let c = COLORS[j % COLORS.len()];
        let _ = writeln!(
            out,
            "<g class=\"ov\" data-index=\"{j}\" data-t0=\"{}\" fill=\"{c}\" fill-opacity=\"0.08\" stroke=\"{c}\" stroke-width=\"0.5\">",
            ov.t0
        );
        for e in &ov.entries {
            let _ = writeln!(out, "<polygon points=\"{}\"/>", f.points(&e.region.footprint().corners()));
        }
        out.push_str("</g>\n");
    }
    if let Some(r) = route {
        let _ = writeln!(out, "<polyline id=\"route\" fill=\"none\" stroke=\"black\" stroke-width=\"1.5\" points=\"{}\"/>", f.points(r));
    }
    out.push_str("</svg>\n");
    out
}

//! Overhead SVG of lanes, actor paths and trajectories.

use std::fmt::Write;

use orchestra::lane_map::{LaneGraph, RoutePath};
use orchestra::orchestrator::Trace;

const WIDTH: f64 = 900.0;
const MARGIN_M: f64 = 15.0;
/// Seconds between history snapshots.
const SNAPSHOT_S: f64 = 2.0;
/// Length of the tail drawn behind each snapshot.
const TAIL_S: f64 = 1.5;
const COLORS: [&str; 6] = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

struct View {
    x0: f64,
    y1: f64,
    scale: f64,
}

impl View {
    fn pt(&self, x: f64, y: f64) -> (f64, f64) {
        ((x - self.x0) * self.scale, (self.y1 - y) * self.scale)
    }

    fn polyline(&self, points: impl IntoIterator<Item = [f64; 2]>) -> String {
        let mut s = String::new();
        for [x, y] in points {
            let (u, v) = self.pt(x, y);
            let _ = write!(s, "{u:.2},{v:.2} ");
        }
        s.trim_end().to_string()
    }
}

/// Renders `trace` over the lanes of `graph`. Actor 0 is drawn in red.
pub fn render_svg(graph: &LaneGraph, paths: &[RoutePath], trace: &Trace, title: &str) -> String {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for f in &trace.frames {
        for a in &f.actors {
            lo = [lo[0].min(a.x), lo[1].min(a.y)];
            hi = [hi[0].max(a.x), hi[1].max(a.y)];
        }
    }
    if !lo[0].is_finite() {
        lo = [-50.0, -50.0];
        hi = [50.0, 50.0];
    }
    let (x0, x1) = (lo[0] - MARGIN_M, hi[0] + MARGIN_M);
    let (y0, y1) = (lo[1] - MARGIN_M, hi[1] + MARGIN_M);
    let scale = WIDTH / (x1 - x0);
    let height = ((y1 - y0) * scale).max(200.0);
    let view = View { x0, y1: y0 + height / scale, scale };

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH:.0}" height="{height:.0}" viewBox="0 0 {WIDTH:.0} {height:.0}">"#);
    let _ = writeln!(svg, r##"<rect width="100%" height="100%" fill="#fafafa"/>"##);
    let _ = writeln!(svg, r#"<title>{}</title>"#, escape(title));
    let _ = writeln!(svg, r##"<g fill="none" stroke="#c8c8c8" stroke-width="{:.2}">"##, 3.5 * scale);
    for seg in graph.segments() {
        let _ = writeln!(svg, r#"<polyline points="{}"/>"#, view.polyline(seg.centerline.iter().copied()));
    }
    let _ = writeln!(svg, "</g>");

    for (id, path) in paths.iter().enumerate() {
        let color = COLORS[id % COLORS.len()];
        let n = (path.total_length() / 1.0).ceil().max(1.0) as usize;
        let pts = (0..=n).map(|i| path.position(path.total_length() * i as f64 / n as f64));
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1" stroke-dasharray="4 3" opacity="0.6"/>"#,
            view.polyline(pts)
        );
    }

    let steps_per_snapshot = ((SNAPSHOT_S / trace.dt).round() as usize).max(1);
    let tail = ((TAIL_S / trace.dt).round() as usize).max(1);
    let last = trace.frames.len().saturating_sub(1);
    let n_actors = trace.frames.first().map_or(0, |f| f.actors.len());
    for id in 0..n_actors {
        let color = COLORS[id % COLORS.len()];
        let track = trace.frames.iter().filter_map(|f| f.actors.get(id)).map(|a| [a.x, a.y]);
        let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.2"/>"#, view.polyline(track));
        let mut snaps: Vec<usize> = (0..=last).step_by(steps_per_snapshot).collect();
        if snaps.last() != Some(&last) {
            snaps.push(last);
        }
        for &k in &snaps {
            let opacity = 0.25 + 0.75 * k as f64 / last.max(1) as f64;
            let from = k.saturating_sub(tail);
            let tail_pts = trace.frames[from..=k].iter().filter_map(|f| f.actors.get(id)).map(|a| [a.x, a.y]);
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="4" stroke-linecap="round" opacity="{opacity:.2}"/>"#,
                view.polyline(tail_pts)
            );
            if let Some(a) = trace.frames[k].actors.get(id) {
                let (u, v) = view.pt(a.x, a.y);
                let _ = writeln!(svg, r#"<circle cx="{u:.2}" cy="{v:.2}" r="4" fill="{color}" opacity="{opacity:.2}"/>"#);
            }
        }
        if let Some(a) = trace.frames[last].actors.get(id) {
            let (u, v) = view.pt(a.x, a.y);
            let label = if id == 0 { "ego".to_string() } else { format!("A{id}") };
            let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" fill="{color}">{label}</text>"#, u + 6.0, v - 6.0);
        }
    }
    let _ = writeln!(
        svg,
        r##"<text x="8" y="18" font-family="sans-serif" font-size="14" fill="#333">{} ({:.1} s)</text>"##,
        escape(title),
        trace.frames.last().map_or(0.0, |f| f.time)
    );
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

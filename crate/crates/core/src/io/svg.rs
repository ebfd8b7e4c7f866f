//! Static SVG renders of trajectories and training curves.

use std::fmt::Write as _;

use super::trajectory::Trajectory;
use crate::ppo::IterationLog;
use crate::world::{AgentKind, StaticObstacle};

const ROBOT_COLORS: [&str; 5] = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e"];
const PED_COLOR: &str = "#7f7f7f";

/// World-space extent covering bounds, obstacles, goals and all records.
fn extent(t: &Trajectory) -> (f64, f64, f64, f64) {
    let mut xs = vec![];
    let mut ys = vec![];
    if let Some(b) = &t.bounds {
        xs.extend([b.min.x, b.max.x]);
        ys.extend([b.min.y, b.max.y]);
    }
    for o in &t.obstacles {
        let (c, h) = match o {
            StaticObstacle::Circle { center, radius } => (*center, glam::DVec2::splat(*radius)),
            StaticObstacle::Rect { center, half_extents } => (*center, *half_extents),
        };
        xs.extend([c.x - h.x, c.x + h.x]);
        ys.extend([c.y - h.y, c.y + h.y]);
    }
    for (_, g) in &t.goals {
        xs.push(g.x);
        ys.push(g.y);
    }
    for r in &t.records {
        xs.extend([r.x - r.radius, r.x + r.radius]);
        ys.extend([r.y - r.radius, r.y + r.radius]);
    }
    if xs.is_empty() {
        return (-1.0, -1.0, 1.0, 1.0);
    }
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min(&xs), min(&ys), max(&xs), max(&ys))
}

/// Scene with the static world, every agent's path and the final poses.
/// The y axis points up. Each path is one `<polyline>` with one point per
/// record of that agent.
pub fn render_scene(t: &Trajectory) -> String {
    let (x0, y0, x1, y1) = extent(t);
    let pad = 0.5;
    let (w, h) = (x1 - x0 + 2.0 * pad, y1 - y0 + 2.0 * pad);
    let scale = 60.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" viewBox="{} {} {} {}">"#,
        w * scale,
        h * scale,
        x0 - pad,
        -(y1 + pad),
        w,
        h
    );
    let _ = writeln!(s, r#"<rect x="{}" y="{}" width="{w}" height="{h}" fill="white"/>"#, x0 - pad, -(y1 + pad));
    let _ = writeln!(s, r#"<g transform="scale(1,-1)">"#);
    if let Some(b) = &t.bounds {
        let _ = writeln!(
            s,
            r#"<rect class="bounds" x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black" stroke-width="0.04"/>"#,
            b.min.x,
            b.min.y,
            b.max.x - b.min.x,
            b.max.y - b.min.y
        );
    }
    for o in &t.obstacles {
        match o {
            StaticObstacle::Circle { center, radius } => {
                let _ = writeln!(
                    s,
                    r##"<circle class="obstacle" cx="{}" cy="{}" r="{radius}" fill="#444"/>"##,
                    center.x, center.y
                );
            }
            StaticObstacle::Rect { center, half_extents } => {
                let _ = writeln!(
                    s,
                    r##"<rect class="obstacle" x="{}" y="{}" width="{}" height="{}" fill="#444"/>"##,
                    center.x - half_extents.x,
                    center.y - half_extents.y,
                    2.0 * half_extents.x,
                    2.0 * half_extents.y
                );
            }
        }
    }
    for (i, g) in &t.goals {
        let c = ROBOT_COLORS[i % ROBOT_COLORS.len()];
        let d = 0.15;
        let _ = writeln!(
            s,
            r#"<path class="goal" d="M {} {} L {} {} M {} {} L {} {}" stroke="{c}" stroke-width="0.05"/>"#,
            g.x - d,
            g.y - d,
            g.x + d,
            g.y + d,
            g.x - d,
            g.y + d,
            g.x + d,
            g.y - d
        );
    }
    for (kind, id) in t.agents() {
        let path = t.path(kind, id);
        let (color, width) = match kind {
            AgentKind::Robot => (ROBOT_COLORS[id % ROBOT_COLORS.len()], 0.05),
            AgentKind::Pedestrian => (PED_COLOR, 0.03),
        };
        let points: Vec<String> = path.iter().map(|r| format!("{},{}", r.x, r.y)).collect();
        let _ = writeln!(
            s,
            r#"<polyline class="path {kind:?}" data-agent="{id}" points="{}" fill="none" stroke="{color}" stroke-width="{width}"/>"#,
            points.join(" ")
        );
        if let Some(last) = path.last() {
            let _ = writeln!(
                s,
                r#"<circle cx="{}" cy="{}" r="{}" fill="{color}" fill-opacity="0.35" stroke="{color}" stroke-width="0.02"/>"#,
                last.x, last.y, last.radius
            );
        }
    }
    s.push_str("</g>\n</svg>\n");
    s
}

fn panel(s: &mut String, ox: f64, title: &str, pts: &[(f64, f64)], fixed: Option<(f64, f64)>) {
    let (pw, ph) = (360.0, 220.0);
    let (left, top) = (ox + 50.0, 30.0);
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" font-size="13" text-anchor="middle">{title}</text>"#,
        left + pw / 2.0
    );
    let finite: Vec<(f64, f64)> = pts.iter().copied().filter(|p| p.1.is_finite()).collect();
    if finite.is_empty() {
        return;
    }
    let xmax = finite.iter().map(|p| p.0).fold(1.0, f64::max);
    let (ymin, ymax) = fixed.unwrap_or_else(|| {
        let lo = finite.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let hi = finite.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 1.0, hi + 1.0)
        }
    });
    let px = |x: f64| left + x / xmax * pw;
    let py = |y: f64| top + ph - (y - ymin) / (ymax - ymin) * ph;
    let coords: Vec<String> = finite.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
    let _ = writeln!(
        s,
        r##"<polyline points="{}" fill="none" stroke="#1f77b4" stroke-width="1.5"/>"##,
        coords.join(" ")
    );
    for (y, anchor) in [(ymin, top + ph), (ymax, top + 10.0)] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{anchor}" font-size="10" text-anchor="end">{y:.2}</text>"#,
            left - 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{xmax:.0}</text>"#,
        left + pw,
        top + ph + 14.0
    );
}

/// Mean reward and success rate against iteration, side by side.
pub fn render_curves(rows: &[IterationLog]) -> String {
    let mut s = String::new();
    s.push_str(r#"<svg xmlns="http://www.w3.org/2000/svg" width="840" height="280">"#);
    s.push('\n');
    s.push_str(r#"<rect width="840" height="280" fill="white"/>"#);
    s.push('\n');
    let reward: Vec<(f64, f64)> = rows.iter().map(|r| (r.iteration as f64, r.mean_reward)).collect();
    let success: Vec<(f64, f64)> = rows.iter().map(|r| (r.iteration as f64, r.success_rate)).collect();
    panel(&mut s, 0.0, "mean episode reward", &reward, None);
    panel(&mut s, 420.0, "success rate", &success, Some((0.0, 1.0)));
    s.push_str("</svg>\n");
    s
}

//! Static SVG charts built from a run directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};

use convoy_core::sim::target_velocity;
use convoy_core::{ScenarioConfig, VecN};

use crate::output::{read_metrics, read_trajectories, MetricsRow, TrajectoryRow, CONFIG, METRICS, PLOT_DIR, TRAJECTORIES};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Trajectories,
    Error,
    Distances,
    Ordering,
    Inputs,
    Obstacles,
}

impl PlotKind {
    pub const ALL: [PlotKind; 6] = [
        PlotKind::Trajectories,
        PlotKind::Error,
        PlotKind::Distances,
        PlotKind::Ordering,
        PlotKind::Inputs,
        PlotKind::Obstacles,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PlotKind::Trajectories => "trajectories",
            PlotKind::Error => "error",
            PlotKind::Distances => "distances",
            PlotKind::Ordering => "ordering",
            PlotKind::Inputs => "inputs",
            PlotKind::Obstacles => "obstacles",
        }
    }
}

impl FromStr for PlotKind {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        PlotKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .with_context(|| {
                let names: Vec<_> = PlotKind::ALL.iter().map(|k| k.name()).collect();
                format!("unknown plot kind `{s}` (expected one of {}, or all)", names.join(", "))
            })
    }
}

/// Parses `--kind`; `all` expands to every kind.
pub fn parse_kinds(s: &str) -> Result<Vec<PlotKind>> {
    if s == "all" {
        return Ok(PlotKind::ALL.to_vec());
    }
    Ok(vec![s.parse()?])
}

pub struct RunData {
    pub config: ScenarioConfig,
    pub trajectories: Vec<TrajectoryRow>,
    pub metrics: Vec<MetricsRow>,
}

impl RunData {
    pub fn load(dir: &Path) -> Result<Self> {
        let config = ScenarioConfig::from_json(
            &fs::read_to_string(dir.join(CONFIG)).with_context(|| format!("reading {}", dir.join(CONFIG).display()))?,
        )?;
        let trajectories = read_trajectories(&dir.join(TRAJECTORIES))?;
        let metrics = read_metrics(&dir.join(METRICS))?;
        if trajectories.is_empty() || metrics.is_empty() {
            bail!("empty log in {}", dir.display());
        }
        Ok(RunData {
            config,
            trajectories,
            metrics,
        })
    }

    fn robot_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.trajectories.iter().map(|r| r.robot_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    fn by_robot(&self) -> BTreeMap<u32, Vec<&TrajectoryRow>> {
        let mut map: BTreeMap<u32, Vec<&TrajectoryRow>> = BTreeMap::new();
        for row in &self.trajectories {
            map.entry(row.robot_id).or_default().push(row);
        }
        map
    }

    /// Rows grouped by time step, in log order.
    fn by_step(&self) -> Vec<&[TrajectoryRow]> {
        let k = self.robot_ids().len().max(1);
        self.trajectories.chunks(k).collect()
    }

    /// Target path, re-integrated from the scenario exactly as the simulator does.
    fn target_path(&self) -> Result<Vec<VecN>> {
        let cfg = &self.config;
        let mut x = cfg.target_motion.start().clone();
        let mut out = Vec::with_capacity(self.metrics.len());
        for (k, _) in self.metrics.iter().enumerate() {
            out.push(x.clone());
            let v = target_velocity(&cfg.target_motion, k as f64 * cfg.dt, &x)?;
            x = x.axpy(cfg.dt, &v);
        }
        Ok(out)
    }
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

fn color(k: usize) -> &'static str {
    PALETTE[k % PALETTE.len()]
}

#[derive(Debug, Clone)]
struct Series {
    label: String,
    points: Vec<(f64, f64)>,
    color: &'static str,
    dashed: bool,
}

#[derive(Debug, Clone, Default)]
struct Panel {
    y_label: String,
    x_label: String,
    series: Vec<Series>,
    /// Horizontal reference lines (value, label), drawn dashed.
    hlines: Vec<(f64, String)>,
    circles: Vec<(f64, f64, f64)>,
    equal_aspect: bool,
}

struct Figure {
    title: String,
    panels: Vec<Panel>,
}

const WIDTH: f64 = 760.0;
const PANEL_HEIGHT: f64 = 300.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const GAP: f64 = 50.0;
const MAX_POINTS: usize = 1500;

fn nice_step(span: f64) -> f64 {
    let raw = span / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let m = if norm < 1.5 {
        1.0
    } else if norm < 3.5 {
        2.0
    } else if norm < 7.5 {
        5.0
    } else {
        10.0
    };
    m * mag
}

fn tick_label(v: f64, step: f64) -> String {
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    let s = format!("{v:.decimals$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

fn thin(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    if points.len() <= MAX_POINTS {
        return points.to_vec();
    }
    let stride = points.len().div_ceil(MAX_POINTS);
    let mut out: Vec<(f64, f64)> = points.iter().step_by(stride).copied().collect();
    if let Some(last) = points.last() {
        if out.last() != Some(last) {
            out.push(*last);
        }
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Panel {
    fn bounds(&self) -> (f64, f64, f64, f64) {
        let mut xs = (f64::INFINITY, f64::NEG_INFINITY);
        let mut ys = (f64::INFINITY, f64::NEG_INFINITY);
        let mut take = |x: f64, y: f64| {
            if x.is_finite() && y.is_finite() {
                xs = (xs.0.min(x), xs.1.max(x));
                ys = (ys.0.min(y), ys.1.max(y));
            }
        };
        for s in &self.series {
            for &(x, y) in &s.points {
                take(x, y);
            }
        }
        for &(cx, cy, r) in &self.circles {
            take(cx - r, cy - r);
            take(cx + r, cy + r);
        }
        if !xs.0.is_finite() {
            xs = (0.0, 1.0);
            ys = (0.0, 1.0);
        }
        for (v, _) in &self.hlines {
            ys = (ys.0.min(*v), ys.1.max(*v));
        }
        let pad = |(lo, hi): (f64, f64)| {
            let span = hi - lo;
            let m = if span > 0.0 { 0.05 * span } else { 0.5f64.max(lo.abs() * 0.1) };
            (lo - m, hi + m)
        };
        let (x0, x1) = pad(xs);
        let (y0, y1) = pad(ys);
        (x0, x1, y0, y1)
    }

    fn render(&self, out: &mut String, top: f64) {
        let plot_w = WIDTH - LEFT - RIGHT;
        let plot_h = PANEL_HEIGHT - 50.0;
        let (mut x0, mut x1, mut y0, mut y1) = self.bounds();
        if self.equal_aspect {
            let sx = (x1 - x0) / plot_w;
            let sy = (y1 - y0) / plot_h;
            if sx > sy {
                let extra = (sx * plot_h - (y1 - y0)) / 2.0;
                y0 -= extra;
                y1 += extra;
            } else {
                let extra = (sy * plot_w - (x1 - x0)) / 2.0;
                x0 -= extra;
                x1 += extra;
            }
        }
        let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * plot_w;
        let py = |y: f64| top + plot_h - (y - y0) / (y1 - y0) * plot_h;

        let _ = writeln!(
            out,
            r##"<rect x="{LEFT}" y="{top}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#333"/>"##
        );
        let xs = nice_step(x1 - x0);
        let mut v = (x0 / xs).ceil() * xs;
        while v <= x1 {
            let x = px(v);
            let _ = writeln!(
                out,
                r##"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="#ddd"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"##,
                top,
                top + plot_h,
                top + plot_h + 16.0,
                tick_label(v, xs)
            );
            v += xs;
        }
        let ys = nice_step(y1 - y0);
        let mut v = (y0 / ys).ceil() * ys;
        while v <= y1 {
            let y = py(v);
            let _ = writeln!(
                out,
                r##"<line x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
                LEFT + plot_w,
                LEFT - 6.0,
                y + 4.0,
                tick_label(v, ys)
            );
            v += ys;
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            LEFT + plot_w / 2.0,
            top + plot_h + 34.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            top + plot_h / 2.0,
            top + plot_h / 2.0,
            escape(&self.y_label)
        );

        for &(cx, cy, r) in &self.circles {
            let _ = writeln!(
                out,
                r##"<ellipse cx="{:.2}" cy="{:.2}" rx="{:.2}" ry="{:.2}" fill="#4a6fa5" fill-opacity="0.25" stroke="#4a6fa5"/>"##,
                px(cx),
                py(cy),
                (px(cx + r) - px(cx)).abs(),
                (py(cy + r) - py(cy)).abs()
            );
        }
        for (v, label) in &self.hlines {
            let y = py(*v);
            let _ = writeln!(
                out,
                r##"<line x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#c00" stroke-dasharray="6 4"/><text x="{:.1}" y="{:.1}" fill="#c00">{}</text>"##,
                LEFT + plot_w,
                LEFT + plot_w + 4.0,
                y + 4.0,
                escape(label)
            );
        }
        for s in &self.series {
            let pts: Vec<String> = thin(&s.points)
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect();
            if pts.is_empty() {
                continue;
            }
            let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
            let _ = writeln!(
                out,
                r#"<polyline fill="none" stroke="{}" stroke-width="1.5"{dash} points="{}"/>"#,
                s.color,
                pts.join(" ")
            );
        }
        let legend_x = LEFT + plot_w + 12.0;
        let mut legend_y = top + 10.0 + 16.0 * self.hlines.len() as f64;
        for s in self.series.iter().filter(|s| !s.label.is_empty()).take(16) {
            let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
            let _ = writeln!(
                out,
                r#"<line x1="{legend_x:.1}" y1="{legend_y:.1}" x2="{:.1}" y2="{legend_y:.1}" stroke="{}" stroke-width="2"{dash}/><text x="{:.1}" y="{:.1}">{}</text>"#,
                legend_x + 18.0,
                s.color,
                legend_x + 24.0,
                legend_y + 4.0,
                escape(&s.label)
            );
            legend_y += 16.0;
        }
    }
}

impl Figure {
    fn render(&self) -> String {
        let height = TOP + self.panels.len() as f64 * (PANEL_HEIGHT + GAP);
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        for (k, panel) in self.panels.iter().enumerate() {
            panel.render(&mut out, TOP + k as f64 * (PANEL_HEIGHT + GAP));
        }
        out.push_str("</svg>\n");
        out
    }
}

const AXES: [&str; 3] = ["x", "y", "z"];

fn axis(row: &TrajectoryRow, k: usize) -> f64 {
    [row.x, row.y, row.z][k]
}

fn input(row: &TrajectoryRow, k: usize) -> f64 {
    [row.ux, row.uy, row.uz][k]
}

fn trajectories(run: &RunData) -> Result<Figure> {
    let mut panel = Panel {
        x_label: "x (m)".into(),
        y_label: "y (m)".into(),
        equal_aspect: true,
        ..Default::default()
    };
    for (k, (id, rows)) in run.by_robot().into_iter().enumerate() {
        panel.series.push(Series {
            label: format!("robot {id}"),
            points: rows.iter().map(|r| (r.x, r.y)).collect(),
            color: color(k),
            dashed: false,
        });
    }
    panel.series.push(Series {
        label: "target".into(),
        points: run.target_path()?.iter().map(|p| (p[0], p[1])).collect(),
        color: "#000",
        dashed: true,
    });
    panel.circles = run
        .config
        .obstacles
        .iter()
        .map(|o| (o.center[0], o.center[1], o.radius))
        .collect();
    Ok(Figure {
        title: format!("{}: trajectories (xy)", run.config.name),
        panels: vec![panel],
    })
}

fn error(run: &RunData) -> Figure {
    let n = run.config.n.min(3);
    let series = (0..n)
        .map(|k| Series {
            label: format!("e{}", AXES[k]),
            points: run
                .metrics
                .iter()
                .map(|m| (m.t, [m.ex, m.ey, m.ez][k]))
                .collect(),
            color: color(k),
            dashed: false,
        })
        .collect();
    Figure {
        title: format!("{}: convoy error", run.config.name),
        panels: vec![Panel {
            x_label: "t (s)".into(),
            y_label: "e (m)".into(),
            series,
            hlines: vec![(0.0, "0".into())],
            ..Default::default()
        }],
    }
}

fn distances(run: &RunData) -> Result<Figure> {
    let ids = run.robot_ids();
    let steps = run.by_step();
    let mut pair = Panel {
        x_label: "t (s)".into(),
        y_label: "‖x_i − x_j‖ (m)".into(),
        hlines: vec![(run.config.collision_radius, "r".into())],
        ..Default::default()
    };
    let mut k = 0;
    for (a, &i) in ids.iter().enumerate() {
        for &j in &ids[a + 1..] {
            let points = steps
                .iter()
                .filter_map(|rows| {
                    let p = rows.iter().find(|r| r.robot_id == i)?;
                    let q = rows.iter().find(|r| r.robot_id == j)?;
                    let d = (0..3).map(|c| (axis(p, c) - axis(q, c)).powi(2)).sum::<f64>().sqrt();
                    Some((p.t, d))
                })
                .collect();
            pair.series.push(Series {
                label: format!("{i}-{j}"),
                points,
                color: color(k),
                dashed: false,
            });
            k += 1;
        }
    }
    let target = run.target_path()?;
    let mut to_target = Panel {
        x_label: "t (s)".into(),
        y_label: "‖x_i − x_d‖ (m)".into(),
        ..Default::default()
    };
    for (k, &i) in ids.iter().enumerate() {
        let points = steps
            .iter()
            .zip(&target)
            .filter_map(|(rows, x_d)| {
                let p = rows.iter().find(|r| r.robot_id == i)?;
                let d = (0..3)
                    .map(|c| (axis(p, c) - x_d.xyz()[c]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                Some((p.t, d))
            })
            .collect();
        to_target.series.push(Series {
            label: format!("robot {i}"),
            points,
            color: color(k),
            dashed: false,
        });
    }
    Ok(Figure {
        title: format!("{}: distances", run.config.name),
        panels: vec![pair, to_target],
    })
}

fn ordering(run: &RunData) -> Figure {
    let steps = run.by_step();
    let slots = run
        .metrics
        .iter()
        .map(|m| m.ordering_ids().len())
        .max()
        .unwrap_or(0);
    let mut series: Vec<Series> = (0..slots)
        .map(|k| Series {
            label: format!("s[{}]–s[{}]", k + 1, (k + 1) % slots + 1),
            points: Vec::new(),
            color: color(k),
            dashed: false,
        })
        .collect();
    for (m, rows) in run.metrics.iter().zip(&steps) {
        let order = m.ordering_ids();
        for (k, s) in series.iter_mut().enumerate().take(order.len()) {
            let a = rows.iter().find(|r| r.robot_id == order[k]);
            let b = rows.iter().find(|r| r.robot_id == order[(k + 1) % order.len()]);
            if let (Some(a), Some(b)) = (a, b) {
                let d = (0..3).map(|c| (axis(a, c) - axis(b, c)).powi(2)).sum::<f64>().sqrt();
                s.points.push((m.t, d));
            }
        }
    }
    let last = run.metrics.last().map(|m| m.ordering.clone()).unwrap_or_default();
    Figure {
        title: format!("{}: adjacent ordering distances (final order {last})", run.config.name),
        panels: vec![Panel {
            x_label: "t (s)".into(),
            y_label: "‖x_s[k] − x_s[k+1]‖ (m)".into(),
            series,
            hlines: vec![
                (run.config.collision_radius, "r".into()),
                (run.config.sensing_radius, "R".into()),
            ],
            ..Default::default()
        }],
    }
}

fn inputs(run: &RunData) -> Figure {
    let zeta = run.config.zeta;
    let panels = (0..run.config.n.min(3))
        .map(|c| Panel {
            x_label: "t (s)".into(),
            y_label: format!("u_{} (m/s)", AXES[c]),
            series: run
                .by_robot()
                .into_iter()
                .enumerate()
                .map(|(k, (id, rows))| Series {
                    label: format!("robot {id}"),
                    points: rows.iter().map(|r| (r.t, input(r, c))).collect(),
                    color: color(k),
                    dashed: false,
                })
                .collect(),
            hlines: vec![(zeta, "+ζ".into()), (-zeta, "−ζ".into())],
            ..Default::default()
        })
        .collect();
    Figure {
        title: format!("{}: inputs", run.config.name),
        panels,
    }
}

fn obstacles(run: &RunData) -> Figure {
    let panels = run
        .config
        .obstacles
        .iter()
        .enumerate()
        .map(|(k, o)| {
            let c = o.center.xyz();
            Panel {
                x_label: "t (s)".into(),
                y_label: format!("‖x_i − x_{}ᵒ‖ (m)", k + 1),
                series: run
                    .by_robot()
                    .into_iter()
                    .enumerate()
                    .map(|(j, (id, rows))| Series {
                        label: format!("robot {id}"),
                        points: rows
                            .iter()
                            .map(|r| {
                                let d = (0..3).map(|a| (axis(r, a) - c[a]).powi(2)).sum::<f64>().sqrt();
                                (r.t, d)
                            })
                            .collect(),
                        color: color(j),
                        dashed: false,
                    })
                    .collect(),
                hlines: vec![(o.radius, format!("r{}ᵒ", k + 1))],
                ..Default::default()
            }
        })
        .collect::<Vec<_>>();
    let title = if panels.is_empty() {
        format!("{}: no obstacles in this scenario", run.config.name)
    } else {
        format!("{}: obstacle distances", run.config.name)
    };
    Figure { title, panels }
}

pub fn render(run: &RunData, kind: PlotKind) -> Result<String> {
    let fig = match kind {
        PlotKind::Trajectories => trajectories(run)?,
        PlotKind::Error => error(run),
        PlotKind::Distances => distances(run)?,
        PlotKind::Ordering => ordering(run),
        PlotKind::Inputs => inputs(run),
        PlotKind::Obstacles => obstacles(run),
    };
    Ok(fig.render())
}

/// Writes `plots/<kind>.svg` under `dir` for each kind and returns the paths.
pub fn write_plots(dir: &Path, kinds: &[PlotKind]) -> Result<Vec<PathBuf>> {
    let run = RunData::load(dir)?;
    let plot_dir = dir.join(PLOT_DIR);
    fs::create_dir_all(&plot_dir)?;
    kinds
        .iter()
        .map(|&kind| {
            let path = plot_dir.join(format!("{}.svg", kind.name()));
            fs::write(&path, render(&run, kind)?).with_context(|| format!("writing {}", path.display()))?;
            Ok(path)
        })
        .collect()
}

//! Static SVG rendering of phase portraits, parameter diagrams and map
//! orbits. Output depends only on the input: identical figures give
//! byte-identical files.

use std::fmt::Write;

use reszone_core::equilibria::Kind;
use reszone_core::portrait::{LevelKind, PhasePortrait};
use reszone_core::reconnection::ParameterPlaneDiagram;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 540.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 55.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    /// Styling tag, e.g. `m3`, `separatrix`, `orbit`.
    pub tag: String,
    pub points: Vec<(f64, f64)>,
    pub closed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlyphKind {
    /// Drawn as a cross.
    Saddle,
    /// Drawn as a filled dot.
    Center,
    /// Drawn as an open circle.
    Marker,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Glyph {
    pub kind: GlyphKind,
    pub at: (f64, f64),
    pub label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Figure {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub paths: Vec<Path>,
    /// Point clouds drawn as tiny squares, one layer per tag.
    pub scatter: Vec<(String, Vec<(f64, f64)>)>,
    pub glyphs: Vec<Glyph>,
    /// Lines embedded in the `<metadata>` element.
    pub metadata: Vec<String>,
}

impl Figure {
    pub fn new(title: &str, x_label: &str, y_label: &str, x_range: (f64, f64), y_range: (f64, f64)) -> Self {
        Self {
            title: title.to_string(),
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
            x_range,
            y_range,
            paths: Vec::new(),
            scatter: Vec::new(),
            glyphs: Vec::new(),
            metadata: Vec::new(),
        }
    }
}

fn stroke(tag: &str) -> (&'static str, f64) {
    match tag {
        "m3" => ("#1f77b4", 1.6),
        "m4" => ("#2ca02c", 1.6),
        "m5+" => ("#d62728", 1.6),
        "m5-" => ("#ff7f0e", 1.6),
        "m6" => ("#9467bd", 1.8),
        "separatrix" => ("#c0392b", 1.2),
        "island" => ("#16a085", 0.7),
        "level" => ("#7f8c8d", 0.6),
        "orbit" => ("#2c3e50", 0.9),
        "unstable" => ("#e74c3c", 0.8),
        "stable" => ("#2980b9", 0.8),
        _ => ("#555555", 0.8),
    }
}

/// Tag turned into a CSS-safe class name.
fn class_of(tag: &str) -> String {
    tag.chars()
        .map(|c| match c {
            '+' => 'p',
            '-' => 'm',
            c if c.is_ascii_alphanumeric() => c,
            _ => '_',
        })
        .collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// About `target` round tick values covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = hi - lo;
    if !(span > 0.0) || !span.is_finite() {
        return vec![lo];
    }
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|&s| s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn tick_label(x: f64) -> String {
    let s = format!("{:.3}", if x == 0.0 { 0.0 } else { x });
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN_LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

pub fn render(fig: &Figure) -> String {
    let f = Frame {
        x: fig.x_range,
        y: fig.y_range,
    };
    let (pw, ph) = (WIDTH - MARGIN_LEFT - MARGIN_RIGHT, HEIGHT - MARGIN_TOP - MARGIN_BOTTOM);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    s.push_str("<metadata>\n");
    for line in &fig.metadata {
        let _ = writeln!(s, "{}", escape(line));
    }
    s.push_str("</metadata>\n<style>\n");
    s.push_str("text { font-family: sans-serif; font-size: 12px; }\n");
    s.push_str(".axis { stroke: #000; stroke-width: 1; fill: none; }\n");
    s.push_str(".tick { stroke: #000; stroke-width: 1; }\n");
    s.push_str("path { fill: none; stroke-linejoin: round; }\n");
    let mut tags: Vec<&str> = fig
        .paths
        .iter()
        .map(|p| p.tag.as_str())
        .chain(fig.scatter.iter().map(|(t, _)| t.as_str()))
        .collect();
    tags.sort_unstable();
    tags.dedup();
    for tag in tags {
        let (color, width) = stroke(tag);
        let _ = writeln!(
            s,
            ".{c} {{ stroke: {color}; stroke-width: {width}; }}\n.{c}-pt {{ fill: {color}; }}",
            c = class_of(tag)
        );
    }
    s.push_str("</style>\n");
    let _ = writeln!(
        s,
        r##"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#fff"/>"##
    );
    let _ = writeln!(
        s,
        r#"<clipPath id="plot"><rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{pw}" height="{ph}"/></clipPath>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        MARGIN_LEFT + pw / 2.0,
        escape(&fig.title)
    );

    s.push_str(r#"<g clip-path="url(#plot)">"#);
    s.push('\n');
    for p in &fig.paths {
        if p.points.is_empty() {
            continue;
        }
        let mut d = String::new();
        for (i, &(x, y)) in p.points.iter().enumerate() {
            let _ = write!(d, "{}{:.2},{:.2}", if i == 0 { "M" } else { " L" }, f.px(x), f.py(y));
        }
        if p.closed {
            d.push_str(" Z");
        }
        let _ = writeln!(
            s,
            r#"<path class="{}" data-tag="{}" d="{d}"/>"#,
            class_of(&p.tag),
            escape(&p.tag)
        );
    }
    for (tag, pts) in &fig.scatter {
        let _ = writeln!(s, r#"<g class="{}-pt" data-layer="{}">"#, class_of(tag), escape(tag));
        for &(x, y) in pts {
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="1" height="1"/>"#,
                f.px(x) - 0.5,
                f.py(y) - 0.5
            );
        }
        s.push_str("</g>\n");
    }
    for g in &fig.glyphs {
        let (x, y) = (f.px(g.at.0), f.py(g.at.1));
        let title = format!("<title>{}</title>", escape(&g.label));
        match g.kind {
            GlyphKind::Saddle => {
                let _ = writeln!(
                    s,
                    r##"<g class="saddle" stroke="#000" stroke-width="1.5">{title}<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/><line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/></g>"##,
                    x - 4.0,
                    y - 4.0,
                    x + 4.0,
                    y + 4.0,
                    x - 4.0,
                    y + 4.0,
                    x + 4.0,
                    y - 4.0
                );
            }
            GlyphKind::Center => {
                let _ = writeln!(
                    s,
                    r##"<circle class="center" cx="{x:.2}" cy="{y:.2}" r="3.5" fill="#000">{title}</circle>"##
                );
            }
            GlyphKind::Marker => {
                let _ = writeln!(
                    s,
                    r##"<circle class="marker" cx="{x:.2}" cy="{y:.2}" r="3" fill="none" stroke="#333">{title}</circle>"##
                );
            }
        }
    }
    s.push_str("</g>\n");

    let (x0, y0) = (MARGIN_LEFT, HEIGHT - MARGIN_BOTTOM);
    let _ = writeln!(
        s,
        r#"<rect class="axis" x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{pw}" height="{ph}"/>"#
    );
    for t in ticks(f.x.0, f.x.1, 8) {
        let x = f.px(t);
        let _ = writeln!(
            s,
            r#"<line class="tick" x1="{x:.2}" y1="{y0}" x2="{x:.2}" y2="{:.2}"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            y0 + 5.0,
            y0 + 19.0,
            tick_label(t)
        );
    }
    for t in ticks(f.y.0, f.y.1, 6) {
        let y = f.py(t);
        let _ = writeln!(
            s,
            r#"<line class="tick" x1="{:.2}" y1="{y:.2}" x2="{x0}" y2="{y:.2}"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            x0 - 5.0,
            x0 - 8.0,
            y + 4.0,
            tick_label(t)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        MARGIN_LEFT + pw / 2.0,
        HEIGHT - 12.0,
        escape(&fig.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        MARGIN_TOP + ph / 2.0,
        MARGIN_TOP + ph / 2.0,
        escape(&fig.y_label)
    );
    s.push_str("</svg>\n");
    s
}

/// Contours in the `(v, u)` plane: separatrix levels, island levels, regular
/// levels; equilibria as glyphs.
pub fn portrait_figure(portrait: &PhasePortrait) -> Figure {
    let z = &portrait.params;
    let mut fig = Figure::new(
        &format!(
            "phase portrait a={} b={} p={} mu1={} mu2={}",
            z.a, z.b, z.p, z.mu1, z.mu2
        ),
        "v",
        "u",
        portrait.window.v,
        portrait.window.u,
    );
    for c in &portrait.contours {
        let tag = match c.kind {
            LevelKind::Regular => "level",
            LevelKind::Separatrix(_) => "separatrix",
            LevelKind::Island(_) => "island",
        };
        for line in &c.polylines {
            fig.paths.push(Path {
                tag: tag.to_string(),
                points: line.points.iter().map(|s| (s.v, s.u)).collect(),
                closed: line.closed,
            });
        }
    }
    for e in &portrait.equilibria {
        let kind = match e.kind {
            Kind::Saddle => GlyphKind::Saddle,
            Kind::Center => GlyphKind::Center,
            _ => GlyphKind::Marker,
        };
        fig.glyphs.push(Glyph {
            kind,
            at: (e.state.v, e.state.u),
            label: format!("{} {} u={} v={}", e.label, e.kind.as_str(), e.state.u, e.state.v),
        });
    }
    fig
}

/// Analytic curves tagged `m3`, `m4`, `m5+`, `m5-`, reconnection curves
/// tagged `m6`, and one marker per region.
pub fn diagram_figure(diagram: &ParameterPlaneDiagram) -> Figure {
    let b = &diagram.base;
    let mut fig = Figure::new(
        &format!("parameter plane a={} b={} p={}", b.a, b.b, b.p),
        "mu1",
        "mu2",
        diagram.grid.mu1,
        diagram.grid.mu2,
    );
    for c in &diagram.analytic_curves {
        fig.paths.push(Path {
            tag: c.tag.as_str().to_string(),
            points: c.points.clone(),
            closed: false,
        });
    }
    for c in &diagram.reconnection_curves {
        for branch in &c.branches {
            fig.paths.push(Path {
                tag: "m6".to_string(),
                points: branch.clone(),
                closed: false,
            });
        }
    }
    for (i, r) in diagram.regions.iter().enumerate() {
        fig.glyphs.push(Glyph {
            kind: GlyphKind::Marker,
            at: (r.mu1, r.mu2),
            label: format!("region {i}: {}", r.signature),
        });
    }
    fig
}

//! Phase portraits as level sets of the zone Hamiltonian.

use alloc::{collections::BTreeMap, string::ToString, vec, vec::Vec};

use crate::equilibria::{closed_form_equilibria, Equilibrium, Label};
use crate::error::{Error, Result};
use crate::math::{hypot, TAU};
use crate::zone::{eval_hamiltonian, eval_vector_field, PhaseState, ZoneParameters};

pub const PORTRAIT_GRID: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub u: (f64, f64),
    pub v: (f64, f64),
}

impl Window {
    pub fn new(u: (f64, f64), v: (f64, f64)) -> Result<Self> {
        for (name, (lo, hi)) in [("u window", u), ("v window", v)] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: "need finite lo < hi".to_string(),
                });
            }
        }
        Ok(Self { u, v })
    }

    pub fn contains(&self, s: PhaseState) -> bool {
        s.u >= self.u.0 && s.u <= self.u.1 && s.v >= self.v.0 && s.v <= self.v.1
    }

    /// Shifts `v` by a multiple of 2π into the window, if possible.
    pub fn place(&self, s: PhaseState) -> Option<PhaseState> {
        let mut v = s.v;
        while v > self.v.1 {
            v -= TAU;
        }
        while v < self.v.0 {
            v += TAU;
        }
        let placed = PhaseState::new(s.u, v);
        self.contains(placed).then_some(placed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub points: Vec<PhaseState>,
    pub closed: bool,
}

impl Polyline {
    /// Even-odd point-in-polygon test; open polylines contain nothing.
    pub fn encloses(&self, p: PhaseState) -> bool {
        if !self.closed || self.points.len() < 3 {
            return false;
        }
        let pts = &self.points;
        let mut inside = false;
        let mut j = pts.len() - 1;
        for i in 0..pts.len() {
            let (a, b) = (pts[i], pts[j]);
            if (a.v > p.v) != (b.v > p.v) {
                let u_cross = a.u + (p.v - a.v) * (b.u - a.u) / (b.v - a.v);
                if p.u < u_cross {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LevelKind {
    Regular,
    /// Energy of the listed saddles.
    Separatrix(Vec<Label>),
    /// A level inside the island around a center.
    Island(Label),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    pub level: f64,
    pub kind: LevelKind,
    pub polylines: Vec<Polyline>,
}

impl Contour {
    pub fn is_separatrix(&self) -> bool {
        matches!(self.kind, LevelKind::Separatrix(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhasePortrait {
    pub params: ZoneParameters,
    pub window: Window,
    pub resolution: usize,
    /// Equilibria placed inside the window.
    pub equilibria: Vec<Equilibrium>,
    pub contours: Vec<Contour>,
    /// Bound on `|H - level|` at contour points (gradient bound times cell
    /// size).
    pub level_error_bound: f64,
}

impl PhasePortrait {
    pub fn encloses(&self, p: PhaseState) -> bool {
        self.contours.iter().flat_map(|c| &c.polylines).any(|l| l.encloses(p))
    }

    pub fn separatrix_levels(&self) -> usize {
        self.contours.iter().filter(|c| c.is_separatrix()).count()
    }
}

/// Grid of samples on `nx * ny` nodes spanning the window, row-major in `v`.
pub struct Grid<'a> {
    pub values: &'a [f64],
    pub nx: usize,
    pub ny: usize,
    pub window: Window,
}

impl Grid<'_> {
    fn node(&self, i: usize, j: usize) -> PhaseState {
        let (u0, u1) = self.window.u;
        let (v0, v1) = self.window.v;
        PhaseState::new(
            u0 + (u1 - u0) * i as f64 / (self.nx - 1) as f64,
            v0 + (v1 - v0) * j as f64 / (self.ny - 1) as f64,
        )
    }

    fn value(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }
}

#[derive(Clone, Copy)]
enum Edge {
    Bottom,
    Right,
    Top,
    Left,
}

/// Segments of one marching-squares cell as edge pairs; the ambiguous cases
/// are resolved with the cell-center average.
fn cell_segments(case: u8, center_above: bool) -> &'static [(Edge, Edge)] {
    use Edge::*;
    match case {
        1 | 14 => &[(Left, Bottom)],
        2 | 13 => &[(Bottom, Right)],
        3 | 12 => &[(Left, Right)],
        4 | 11 => &[(Right, Top)],
        6 | 9 => &[(Bottom, Top)],
        7 | 8 => &[(Left, Top)],
        5 if center_above => &[(Bottom, Right), (Top, Left)],
        5 => &[(Left, Bottom), (Right, Top)],
        10 if center_above => &[(Left, Bottom), (Right, Top)],
        10 => &[(Bottom, Right), (Top, Left)],
        _ => &[],
    }
}

/// Level set of gridded data as chained polylines.
pub fn marching_squares(grid: &Grid<'_>, level: f64) -> Vec<Polyline> {
    let (nx, ny) = (grid.nx, grid.ny);
    // edge ids: horizontal edge from node (i, j) is 2 (j nx + i), vertical 2 (j nx + i) + 1
    let edge_id = |i: usize, j: usize, e: Edge| -> u64 {
        let (i, j, vertical) = match e {
            Edge::Bottom => (i, j, 0),
            Edge::Top => (i, j + 1, 0),
            Edge::Left => (i, j, 1),
            Edge::Right => (i + 1, j, 1),
        };
        2 * (j * nx + i) as u64 + vertical
    };
    let edge_point = |id: u64| -> PhaseState {
        let node = (id / 2) as usize;
        let (i, j) = (node % nx, node / nx);
        let (i2, j2) = if id.is_multiple_of(2) { (i + 1, j) } else { (i, j + 1) };
        let (fa, fb) = (grid.value(i, j), grid.value(i2, j2));
        let t = if fb == fa {
            0.5
        } else {
            ((level - fa) / (fb - fa)).clamp(0.0, 1.0)
        };
        let (a, b) = (grid.node(i, j), grid.node(i2, j2));
        PhaseState::new(a.u + t * (b.u - a.u), a.v + t * (b.v - a.v))
    };

    let mut segments: Vec<(u64, u64)> = Vec::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let f = [
                grid.value(i, j),
                grid.value(i + 1, j),
                grid.value(i + 1, j + 1),
                grid.value(i, j + 1),
            ];
            let case = f
                .iter()
                .enumerate()
                .fold(0u8, |c, (k, &x)| c | (u8::from(x >= level) << k));
            if case == 0 || case == 15 {
                continue;
            }
            let center_above = (f[0] + f[1] + f[2] + f[3]) / 4.0 >= level;
            for &(a, b) in cell_segments(case, center_above) {
                segments.push((edge_id(i, j, a), edge_id(i, j, b)));
            }
        }
    }

    let mut by_edge: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (k, &(a, b)) in segments.iter().enumerate() {
        by_edge.entry(a).or_default().push(k);
        by_edge.entry(b).or_default().push(k);
    }
    let mut used = vec![false; segments.len()];
    let mut lines = Vec::new();
    // walk from `edge` along unused segments, returning the visited edges
    let walk = |start_seg: usize, from: u64, used: &mut Vec<bool>| -> Vec<u64> {
        let mut out = Vec::new();
        let mut seg = start_seg;
        let mut at = from;
        loop {
            let (a, b) = segments[seg];
            let next = if a == at { b } else { a };
            out.push(next);
            let cont = by_edge[&next].iter().copied().find(|&s| !used[s]);
            match cont {
                Some(s) => {
                    used[s] = true;
                    seg = s;
                    at = next;
                }
                None => return out,
            }
        }
    };
    for k in 0..segments.len() {
        if used[k] {
            continue;
        }
        used[k] = true;
        let (a, _) = segments[k];
        let forward = walk(k, a, &mut used);
        let closed = forward.last() == Some(&a);
        let mut edges = Vec::with_capacity(forward.len() + 1);
        if closed {
            edges.push(a);
            edges.extend_from_slice(&forward[..forward.len() - 1]);
        } else {
            // extend backwards from `a`
            let back = match by_edge[&a].iter().copied().find(|&s| !used[s]) {
                Some(s) => {
                    used[s] = true;
                    walk(s, a, &mut used)
                }
                None => Vec::new(),
            };
            edges.extend(back.iter().rev());
            edges.push(a);
            edges.extend_from_slice(&forward);
        }
        lines.push(Polyline {
            points: edges.into_iter().map(edge_point).collect(),
            closed,
        });
    }
    lines
}

/// Level sets of `H` on a [`PORTRAIT_GRID`]² grid: every saddle energy plus
/// `n_levels` evenly spaced values strictly between the extremes of `H` in
/// the window.
pub fn sample_phase_portrait(params: &ZoneParameters, window: Window, n_levels: usize) -> Result<PhasePortrait> {
    sample_phase_portrait_with(params, window, n_levels, PORTRAIT_GRID)
}

pub fn sample_phase_portrait_with(
    params: &ZoneParameters,
    window: Window,
    n_levels: usize,
    resolution: usize,
) -> Result<PhasePortrait> {
    let window = Window::new(window.u, window.v)?;
    if n_levels < 3 {
        return Err(Error::InvalidParameter {
            name: "n_levels",
            reason: "n_levels >= 3".to_string(),
        });
    }
    if resolution < 4 {
        return Err(Error::InvalidParameter {
            name: "resolution",
            reason: "resolution >= 4".to_string(),
        });
    }
    let n = resolution;
    let mut values = Vec::with_capacity(n * n);
    let mut grad_max: f64 = 0.0;
    let probe = Grid {
        values: &[],
        nx: n,
        ny: n,
        window,
    };
    for j in 0..n {
        for i in 0..n {
            let s = probe.node(i, j);
            values.push(eval_hamiltonian(params, s));
            let (du, dv) = eval_vector_field(params, s);
            grad_max = grad_max.max(hypot(du, dv));
        }
    }
    let grid = Grid {
        values: &values,
        nx: n,
        ny: n,
        window,
    };
    let cell = ((window.u.1 - window.u.0) / (n - 1) as f64).max((window.v.1 - window.v.0) / (n - 1) as f64);

    let equilibria: Vec<Equilibrium> = closed_form_equilibria(params)
        .into_iter()
        .filter_map(|e| window.place(e.state).map(|state| Equilibrium { state, ..e }))
        .collect();

    let all = closed_form_equilibria(params);
    let mut saddle_levels: Vec<(f64, Vec<Label>)> = Vec::new();
    for e in all.iter().filter(|e| e.is_saddle()) {
        match saddle_levels.iter_mut().find(|(l, _)| (l - e.energy).abs() <= 1e-12) {
            Some((_, labels)) => labels.push(e.label),
            None => saddle_levels.push((e.energy, vec![e.label])),
        }
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let mut levels: Vec<(f64, LevelKind)> = saddle_levels
        .iter()
        .map(|(l, labels)| (*l, LevelKind::Separatrix(labels.clone())))
        .collect();
    for k in 1..=n_levels {
        levels.push((lo + (hi - lo) * k as f64 / (n_levels + 1) as f64, LevelKind::Regular));
    }
    // one level inside each island, between the center's energy and the
    // nearest separatrix level on the side its closed orbits live; the level
    // moves toward the center until its contour closes inside the window
    for e in equilibria.iter().filter(|e| e.is_center()) {
        let h_vv = -(params.a + params.mu1 * e.state.u) * crate::math::cos(e.state.v);
        let up = h_vv > 0.0;
        let bound = saddle_levels
            .iter()
            .map(|(l, _)| *l)
            .filter(|&l| if up { l > e.energy } else { l < e.energy })
            .fold(if up { hi } else { lo }, |b, l| if up { b.min(l) } else { b.max(l) });
        let fractions = [0.5, 0.25, 0.1, 0.03, 0.01];
        let level = fractions
            .iter()
            .map(|f| e.energy + f * (bound - e.energy))
            .find(|&level| marching_squares(&grid, level).iter().any(|l| l.encloses(e.state)))
            .unwrap_or(0.5 * (e.energy + bound));
        levels.push((level, LevelKind::Island(e.label)));
    }
    levels.sort_by(|a, b| a.0.total_cmp(&b.0));

    let contours = levels
        .into_iter()
        .map(|(level, kind)| Contour {
            level,
            kind,
            polylines: marching_squares(&grid, level),
        })
        .collect();
    Ok(PhasePortrait {
        params: *params,
        window,
        resolution: n,
        equilibria,
        contours,
        level_error_bound: grad_max * cell,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::PI;

    fn window() -> Window {
        Window::new((-3.0, 3.0), (-PI / 2.0, 3.0 * PI / 2.0)).unwrap()
    }

    #[test]
    fn circle_is_one_closed_curve() {
        let n = 64;
        let w = Window::new((-1.0, 1.0), (-1.0, 1.0)).unwrap();
        let probe = Grid {
            values: &[],
            nx: n,
            ny: n,
            window: w,
        };
        let values: Vec<f64> = (0..n * n)
            .map(|k| {
                let s = probe.node(k % n, k / n);
                s.u * s.u + s.v * s.v
            })
            .collect();
        let grid = Grid {
            values: &values,
            nx: n,
            ny: n,
            window: w,
        };
        let lines = marching_squares(&grid, 0.25);
        assert_eq!(lines.len(), 1);
        assert!(lines[0].closed);
        assert!(lines[0].encloses(PhaseState::new(0.0, 0.0)));
        assert!(!lines[0].encloses(PhaseState::new(0.9, 0.0)));
        for p in &lines[0].points {
            assert!((hypot(p.u, p.v) - 0.5).abs() < 1e-2);
        }
        // an open curve crossing the window
        let lines = marching_squares(&grid, 1.5);
        assert!(lines.iter().all(|l| !l.closed));
    }

    #[test]
    fn portrait_at_single_saddle() {
        let p = ZoneParameters::reference(1.0, 0.0);
        let portrait = sample_phase_portrait_with(&p, window(), 8, 256).unwrap();
        assert_eq!(portrait.separatrix_levels(), 1);
        assert!(portrait.encloses(PhaseState::new(1.0, PI)));
        for c in &portrait.contours {
            for l in &c.polylines {
                for q in &l.points {
                    assert!((eval_hamiltonian(&p, *q) - c.level).abs() <= portrait.level_error_bound);
                }
            }
        }
    }

    #[test]
    fn centers_are_enclosed() {
        let p = ZoneParameters::reference(0.0, 1.0);
        let portrait = sample_phase_portrait_with(&p, window(), 12, 256).unwrap();
        for e in portrait.equilibria.iter().filter(|e| e.is_center()) {
            assert!(portrait.encloses(e.state), "{:?}", e);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let p = ZoneParameters::reference(1.0, 0.0);
        assert!(sample_phase_portrait(&p, window(), 2).is_err());
        assert!(Window::new((1.0, 0.0), (0.0, 1.0)).is_err());
    }
}

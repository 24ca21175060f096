//! Equilibria of the zone model and its local bifurcation curves.
//!
//! Equilibria sit either on the axes `v = 0` (`O1±`) and `v = π` (`O2±`), or
//! off-axis on the line `u = -a / mu1` (`O3`, `O4`). With `b3 = 0` all of them
//! are available in closed form. The local bifurcation curves in the
//! `(mu1, mu2)` plane are
//!
//! ```text
//! m3:  p mu2^2 - 4 b mu1 = 0          (O1± merge)
//! m4:  p mu2^2 + 4 b mu1 = 0          (O2± merge)
//! m5±: mu2 = a b / mu1 ± mu1^2 / (p a) (O3, O4 hit v = 0 or v = π)
//! ```

use alloc::{string::ToString, vec::Vec};
use core::fmt;

use crate::error::{Error, Result};
use crate::math::{acos, angle_diff, cbrt, cos, hypot, sqrt, PI, TAU};
use crate::zone::{eval_hamiltonian, eval_vector_field, jacobian, jacobian_det, PhaseState, ZoneParameters};

/// `|delta|` at or below this is a degenerate equilibrium.
pub const DELTA_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    O1Plus,
    O1Minus,
    O2Plus,
    O2Minus,
    O3,
    O4,
    Refined,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::O1Plus => "O1+",
            Label::O1Minus => "O1-",
            Label::O2Plus => "O2+",
            Label::O2Minus => "O2-",
            Label::O3 => "O3",
            Label::O4 => "O4",
            Label::Refined => "refined",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "O1+" => Label::O1Plus,
            "O1-" => Label::O1Minus,
            "O2+" => Label::O2Plus,
            "O2-" => Label::O2Minus,
            "O3" => Label::O3,
            "O4" => Label::O4,
            "refined" => Label::Refined,
            _ => return None,
        })
    }

    pub fn is_off_axis(self) -> bool {
        matches!(self, Label::O3 | Label::O4)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kind {
    Saddle,
    Center,
    Degenerate,
}

impl Kind {
    pub fn from_delta(delta: f64) -> Self {
        if delta < -DELTA_TOL {
            Kind::Saddle
        } else if delta > DELTA_TOL {
            Kind::Center
        } else {
            Kind::Degenerate
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Saddle => "saddle",
            Kind::Center => "center",
            Kind::Degenerate => "degenerate",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equilibrium {
    pub state: PhaseState,
    pub delta: f64,
    pub kind: Kind,
    pub energy: f64,
    pub label: Label,
}

impl Equilibrium {
    /// Classifies the point `state` (assumed to be an equilibrium).
    pub fn at(params: &ZoneParameters, state: PhaseState, label: Label) -> Self {
        let state = state.normalized();
        let delta = jacobian_det(params, state);
        Self {
            state,
            delta,
            kind: Kind::from_delta(delta),
            energy: eval_hamiltonian(params, state),
            label,
        }
    }

    pub fn is_saddle(&self) -> bool {
        self.kind == Kind::Saddle
    }

    pub fn is_center(&self) -> bool {
        self.kind == Kind::Center
    }
}

/// Real roots of `c2 u^2 + c1 u + c0 = 0`, larger root first. A double root
/// is returned once.
fn quadratic_roots(c2: f64, c1: f64, c0: f64) -> Vec<f64> {
    let disc = c1 * c1 - 4.0 * c2 * c0;
    if disc < 0.0 {
        return Vec::new();
    }
    if disc == 0.0 {
        return alloc::vec![-c1 / (2.0 * c2)];
    }
    let r = sqrt(disc);
    let (hi, lo) = ((-c1 + r) / (2.0 * c2), (-c1 - r) / (2.0 * c2));
    alloc::vec![hi, lo]
}

/// Real roots of a cubic with `c3 != 0`, polished by Newton.
fn cubic_roots(c3: f64, c2: f64, c1: f64, c0: f64) -> Vec<f64> {
    let (a, b, c) = (c2 / c3, c1 / c3, c0 / c3);
    // depressed cubic t^3 + pt + q with u = t - a/3
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let shift = -a / 3.0;
    let disc = q * q / 4.0 + p * p * p / 27.0;
    let mut roots = if disc > 0.0 {
        let s = sqrt(disc);
        alloc::vec![cbrt(-q / 2.0 + s) + cbrt(-q / 2.0 - s) + shift]
    } else if p == 0.0 {
        alloc::vec![shift]
    } else {
        let m = 2.0 * sqrt(-p / 3.0);
        let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
        let theta = acos(arg) / 3.0;
        (0..3)
            .map(|k| m * cos(theta - TAU * f64::from(k) / 3.0) + shift)
            .collect()
    };
    for r in roots.iter_mut() {
        for _ in 0..4 {
            let f = ((c3 * *r + c2) * *r + c1) * *r + c0;
            let df = (3.0 * c3 * *r + 2.0 * c2) * *r + c1;
            if df == 0.0 {
                break;
            }
            let next = *r - f / df;
            if !next.is_finite() {
                break;
            }
            *r = next;
        }
    }
    roots.sort_by(|x, y| y.total_cmp(x));
    roots.dedup_by(|x, y| (*x - *y).abs() <= 1e-14 * x.abs().max(1.0));
    roots
}

/// Roots of `p (b3 u^3 + b u^2 + mu2 u) + sign * mu1 = 0` with their labels;
/// `sign = +1` is the axis `v = 0`, `-1` the axis `v = π`.
fn axis_roots(params: &ZoneParameters, sign: f64) -> Vec<(f64, Label)> {
    let (plus, minus) = if sign > 0.0 {
        (Label::O1Plus, Label::O1Minus)
    } else {
        (Label::O2Plus, Label::O2Minus)
    };
    let pf = f64::from(params.p);
    let quad = quadratic_roots(pf * params.b, pf * params.mu2, sign * params.mu1);
    let label_quad = |roots: &[f64]| -> Vec<(f64, Label)> {
        match roots {
            [r] => alloc::vec![(*r, plus)],
            [hi, lo] => {
                // `+` is the root with the `+ sqrt` branch of the formula
                if params.b > 0.0 {
                    alloc::vec![(*hi, plus), (*lo, minus)]
                } else {
                    alloc::vec![(*lo, plus), (*hi, minus)]
                }
            }
            _ => Vec::new(),
        }
    };
    if params.b3 == 0.0 {
        return label_quad(&quad);
    }
    // quartic term present: solve the cubic and hand the quadratic labels to
    // the nearest cubic roots; any remaining root is reported as refined
    let cubic = cubic_roots(pf * params.b3, pf * params.b, pf * params.mu2, sign * params.mu1);
    let mut labelled: Vec<(f64, Label)> = cubic.iter().map(|&r| (r, Label::Refined)).collect();
    for (target, label) in label_quad(&quad) {
        let best = labelled
            .iter_mut()
            .filter(|(_, l)| *l == Label::Refined)
            .min_by(|x, y| (x.0 - target).abs().total_cmp(&(y.0 - target).abs()));
        if let Some(slot) = best {
            slot.1 = label;
        }
    }
    labelled
}

/// All equilibria from the closed-form solution, in the order
/// `O1+, O1-, O2+, O2-, O3, O4` (missing ones omitted). On a merging curve the
/// double point is reported once.
pub fn closed_form_equilibria(params: &ZoneParameters) -> Vec<Equilibrium> {
    let mut out = Vec::with_capacity(6);
    for (sign, v) in [(1.0, 0.0), (-1.0, PI)] {
        let mut roots = axis_roots(params, sign);
        roots.sort_by_key(|&(_, l)| l);
        for (u, label) in roots {
            out.push(Equilibrium::at(params, PhaseState::new(u, v), label));
        }
    }
    if let Some((u, v3)) = off_axis_point(params) {
        out.push(Equilibrium::at(params, PhaseState::new(u, v3), Label::O3));
        if v3 != 0.0 && v3 != PI {
            out.push(Equilibrium::at(params, PhaseState::new(u, TAU - v3), Label::O4));
        }
    }
    out
}

/// `(u, v)` of `O3` with `v` in `[0, π]`, when it exists.
fn off_axis_point(params: &ZoneParameters) -> Option<(f64, f64)> {
    if params.mu1 == 0.0 {
        return None;
    }
    let u = -params.a / params.mu1;
    let pf = f64::from(params.p);
    let c = -pf * (params.b * u * u + params.mu2 * u + params.b3 * u * u * u) / params.mu1;
    if !(c.abs() <= 1.0) {
        return None;
    }
    Some((u, acos(c)))
}

/// Cosine of the off-axis equilibria, `None` when `mu1 = 0`. The off-axis
/// pair exists iff the value lies in `[-1, 1]`.
pub fn off_axis_cosine(params: &ZoneParameters) -> Option<f64> {
    if params.mu1 == 0.0 {
        return None;
    }
    let u = -params.a / params.mu1;
    let pf = f64::from(params.p);
    Some(-pf * (params.b * u * u + params.mu2 * u + params.b3 * u * u * u) / params.mu1)
}

pub const NEWTON_MAX_STEPS: usize = 50;
pub const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_STEP: f64 = 1e8;

fn residual(params: &ZoneParameters, s: PhaseState) -> f64 {
    let (du, dv) = eval_vector_field(params, s);
    hypot(du, dv)
}

/// Damped Newton iteration on the vector field. The result is labelled
/// [`Label::Refined`].
pub fn refine_equilibrium(params: &ZoneParameters, guess: PhaseState) -> Result<Equilibrium> {
    let mut s = guess;
    let mut r = residual(params, s);
    for _ in 0..=NEWTON_MAX_STEPS {
        if !r.is_finite() {
            return Err(Error::NonFinite {
                what: "vector field",
                at: s.u,
            });
        }
        if r < NEWTON_TOL {
            return Ok(Equilibrium::at(params, s, Label::Refined));
        }
        let (f0, f1) = eval_vector_field(params, s);
        let j = jacobian(params, s);
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let du = (j[1][1] * f0 - j[0][1] * f1) / det;
        let dv = (j[0][0] * f1 - j[1][0] * f0) / det;
        let step = hypot(du, dv);
        if !(step <= NEWTON_MAX_STEP) {
            return Err(Error::SingularJacobian { step });
        }
        let mut lambda = 1.0;
        let mut next = PhaseState::new(s.u - du, s.v - dv);
        let mut rn = residual(params, next);
        while !(rn < r) && lambda > 1e-6 {
            lambda *= 0.5;
            next = PhaseState::new(s.u - lambda * du, s.v - lambda * dv);
            rn = residual(params, next);
        }
        s = next;
        r = rn;
    }
    Err(Error::NoConvergence {
        steps: NEWTON_MAX_STEPS,
        residual: r,
    })
}

/// Distance between two phase points with `v` compared on the circle.
pub fn phase_distance(a: PhaseState, b: PhaseState) -> f64 {
    hypot(a.u - b.u, angle_diff(a.v, b.v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CurveTag {
    M3,
    M4,
    M5Plus,
    M5Minus,
    M6,
}

impl CurveTag {
    pub const LOCAL: [CurveTag; 4] = [CurveTag::M3, CurveTag::M4, CurveTag::M5Plus, CurveTag::M5Minus];

    pub fn as_str(self) -> &'static str {
        match self {
            CurveTag::M3 => "m3",
            CurveTag::M4 => "m4",
            CurveTag::M5Plus => "m5+",
            CurveTag::M5Minus => "m5-",
            CurveTag::M6 => "m6",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "m3" => CurveTag::M3,
            "m4" => CurveTag::M4,
            "m5+" => CurveTag::M5Plus,
            "m5-" => CurveTag::M5Minus,
            "m6" => CurveTag::M6,
            _ => return None,
        })
    }
}

impl fmt::Display for CurveTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Defining function of a local curve at `(mu1, mu2)`; its zero set is the
/// curve. The `m5` functions are polynomial (pole-free) forms. Panics on
/// [`CurveTag::M6`], which has no closed form.
pub fn curve_function(params: &ZoneParameters, tag: CurveTag, mu1: f64, mu2: f64) -> f64 {
    let pf = f64::from(params.p);
    let (a, b) = (params.a, params.b);
    match tag {
        CurveTag::M3 => pf * mu2 * mu2 - 4.0 * b * mu1,
        CurveTag::M4 => pf * mu2 * mu2 + 4.0 * b * mu1,
        CurveTag::M5Plus => pf * a * (mu1 * mu2 - a * b) - mu1 * mu1 * mu1,
        CurveTag::M5Minus => pf * a * (mu1 * mu2 - a * b) + mu1 * mu1 * mu1,
        CurveTag::M6 => panic!("m6 has no closed-form defining function"),
    }
}

/// A polyline of one branch of a bifurcation curve in the `(mu1, mu2)` plane.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveBranch {
    pub tag: CurveTag,
    pub points: Vec<(f64, f64)>,
}

/// Samples `m3`, `m4`, `m5+`, `m5-` over `mu1_grid`. Each curve is split into
/// branches that are graphs over `mu1`: the two halves of each parabola, and
/// the `mu1 < 0` / `mu1 > 0` pieces of each `m5` branch.
pub fn local_bifurcation_curves(params: &ZoneParameters, mu1_grid: &[f64]) -> Vec<CurveBranch> {
    let pf = f64::from(params.p);
    let (a, b) = (params.a, params.b);
    let mut out = Vec::new();

    for (tag, sign) in [(CurveTag::M3, 1.0), (CurveTag::M4, -1.0)] {
        let mut upper = Vec::new();
        let mut lower = Vec::new();
        for &m in mu1_grid {
            let r = sign * 4.0 * b * m / pf;
            if r >= 0.0 {
                let s = sqrt(r);
                upper.push((m, s));
                lower.push((m, -s));
            }
        }
        if !upper.is_empty() {
            out.push(CurveBranch { tag, points: upper });
            out.push(CurveBranch { tag, points: lower });
        }
    }

    if a != 0.0 {
        for (tag, sign) in [(CurveTag::M5Plus, 1.0), (CurveTag::M5Minus, -1.0)] {
            let mut neg = Vec::new();
            let mut pos = Vec::new();
            for &m in mu1_grid {
                if m == 0.0 {
                    continue;
                }
                let mu2 = a * b / m + sign * m * m / (pf * a);
                if m < 0.0 {
                    neg.push((m, mu2));
                } else {
                    pos.push((m, mu2));
                }
            }
            for pts in [neg, pos] {
                if !pts.is_empty() {
                    out.push(CurveBranch { tag, points: pts });
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// A saddle and a center merge at the same `v` (curves m3, m4).
    Vertical,
    /// A triple saddle splits off the off-axis pair (curves m5±).
    HorizontalTripleSaddle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BifurcationEvent {
    pub kind: EventKind,
    pub curve: CurveTag,
    /// Path parameter in `[0, 1]`.
    pub t: f64,
    pub mu1: f64,
    pub mu2: f64,
    /// Whether the expected local picture was confirmed at the crossing.
    pub verified: bool,
}

/// Straight segment in the `(mu1, mu2)` plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamPath {
    pub from: (f64, f64),
    pub to: (f64, f64),
}

impl ParamPath {
    pub fn new(from: (f64, f64), to: (f64, f64)) -> Self {
        Self { from, to }
    }

    pub fn at(&self, t: f64) -> (f64, f64) {
        (
            self.from.0 + t * (self.to.0 - self.from.0),
            self.from.1 + t * (self.to.1 - self.from.1),
        )
    }
}

const PATH_SAMPLES: usize = 2048;
const ENDPOINT_MARGIN: f64 = 1e-9;

fn curve_scale(params: &ZoneParameters, tag: CurveTag, mu1: f64, mu2: f64) -> f64 {
    let pf = f64::from(params.p);
    let (a, b) = (params.a.abs(), params.b.abs());
    match tag {
        CurveTag::M3 | CurveTag::M4 => (pf * mu2 * mu2 + 4.0 * b * mu1.abs()).max(1.0),
        _ => (pf * a * (mu1 * mu2).abs() + pf * a * a * b + crate::math::powi(mu1.abs(), 3)).max(1.0),
    }
}

/// Crossings of the local curves along a straight parameter path, sorted by
/// path parameter.
pub fn detect_local_bifurcation(params: &ZoneParameters, path: ParamPath) -> Result<Vec<BifurcationEvent>> {
    let n = PATH_SAMPLES;
    let mut events = Vec::new();
    for tag in CurveTag::LOCAL {
        if matches!(tag, CurveTag::M5Plus | CurveTag::M5Minus) && params.a == 0.0 {
            continue;
        }
        let g = |t: f64| {
            let (m1, m2) = path.at(t);
            curve_function(params, tag, m1, m2) / curve_scale(params, tag, m1, m2)
        };
        for t in [0.0, 1.0] {
            if g(t).abs() < ENDPOINT_MARGIN {
                return Err(Error::EndpointOnCurve { curve: tag.as_str() });
            }
        }
        let ts: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
        let gs: Vec<f64> = ts.iter().map(|&t| g(t)).collect();
        for k in 0..n {
            if (gs[k] > 0.0) != (gs[k + 1] > 0.0) {
                let t = bisect(&g, ts[k], ts[k + 1]);
                let (mu1, mu2) = path.at(t);
                let kind = match tag {
                    CurveTag::M3 | CurveTag::M4 => EventKind::Vertical,
                    _ => EventKind::HorizontalTripleSaddle,
                };
                let verified = verify_event(params, &path, tag, t);
                events.push(BifurcationEvent {
                    kind,
                    curve: tag,
                    t,
                    mu1,
                    mu2,
                    verified,
                });
            }
        }
        for k in 1..n {
            let (a, b, c) = (gs[k - 1], gs[k], gs[k + 1]);
            let same = (a > 0.0) == (b > 0.0) && (b > 0.0) == (c > 0.0);
            if same && b.abs() <= a.abs() && b.abs() <= c.abs() {
                let t = golden_min(&|t| g(t).abs(), ts[k - 1], ts[k + 1]);
                if g(t).abs() < 1e-10 {
                    return Err(Error::TangentialCrossing { curve: tag.as_str(), t });
                }
            }
        }
    }
    events.sort_by(|x, y| x.t.total_cmp(&y.t));
    Ok(events)
}

fn verify_event(params: &ZoneParameters, path: &ParamPath, tag: CurveTag, t: f64) -> bool {
    let at = |t: f64| {
        let (m1, m2) = path.at(t);
        params.with_mu(m1, m2)
    };
    match tag {
        CurveTag::M3 | CurveTag::M4 => {
            let on = at(t);
            let v = if tag == CurveTag::M3 { 0.0 } else { PI };
            let roots: Vec<Equilibrium> = closed_form_equilibria(&on)
                .into_iter()
                .filter(|e| !e.label.is_off_axis() && angle_diff(e.state.v, v).abs() < 1e-12)
                .collect();
            // roots may split by rounding; they must at least nearly coincide
            let merged = match roots.as_slice() {
                [e] => e.delta.abs() < 1e-6,
                [e1, e2] => (e1.state.u - e2.state.u).abs() < 1e-5 && e1.delta.abs() < 1e-4,
                _ => false,
            };
            let h = 1e-6;
            let side = |t: f64| {
                closed_form_equilibria(&at(t))
                    .iter()
                    .filter(|e| !e.label.is_off_axis() && angle_diff(e.state.v, v).abs() < 1e-12)
                    .count()
            };
            merged && side((t - h).max(0.0)) != side((t + h).min(1.0))
        }
        _ => {
            let h = 1e-6;
            let exists = |t: f64| off_axis_point(&at(t)).is_some();
            exists((t - h).max(0.0)) != exists((t + h).min(1.0))
        }
    }
}

fn bisect<G: Fn(f64) -> f64>(g: &G, mut lo: f64, mut hi: f64) -> f64 {
    let glo = g(lo) > 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let gm = g(mid);
        if gm == 0.0 {
            return mid;
        }
        if (gm > 0.0) == glo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn golden_min<G: Fn(f64) -> f64>(g: &G, mut lo: f64, mut hi: f64) -> f64 {
    let r = 0.5 * (sqrt(5.0) - 1.0);
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (g(x1), g(x2));
    for _ in 0..100 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = g(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = g(x2);
        }
    }
    if f1 <= f2 {
        x1
    } else {
        x2
    }
}

/// Validates that a user-supplied window for curve sampling is usable.
pub fn check_window(lo: f64, hi: f64, name: &'static str) -> Result<()> {
    if lo.is_finite() && hi.is_finite() && lo < hi {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: "need finite lo < hi".to_string(),
        })
    }
}

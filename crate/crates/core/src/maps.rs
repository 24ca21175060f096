//! Area-preserving maps of the cylinder: the standard map with a
//! non-monotone rotation and the conservative Euler discretization of the
//! zone flow.
//!
//! Orbits are computed in the lift (`v` unwrapped); [`map_step`] and
//! [`inverse_step`] report `v` reduced to `[0, 2pi)`.

use alloc::{string::ToString, vec, vec::Vec};

use crate::equilibria::closed_form_equilibria;
use crate::error::{Error, Result};
use crate::flow::{integrate_orbit, Manifold, Sampling};
use crate::math::{acos, angle_diff, cos, floor, hypot, powf, sin, sin_cos, sqrt, FRAC_PI_2, PI, TAU};
use crate::zone::{eval_hamiltonian, PhaseState, ZoneParameters};

/// Smallest admissible `|1 - alpha mu1 sin v|`.
pub const DENOMINATOR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MapSpec {
    /// `u' = u + a sin v`, `v' = v + u' - beta u'^2`.
    StandardNonmonotone { a: f64, beta: f64 },
    /// `u' = (u + alpha a sin v) / (1 - alpha mu1 sin v)`,
    /// `v' = v + alpha (dH/du)(u') + alpha mu1 cos v`, where `dH/du` is the
    /// polynomial part of the zone field.
    EulerConservative { alpha: f64, zone: ZoneParameters },
}

impl MapSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            MapSpec::StandardNonmonotone { a, beta } => {
                for (name, x) in [("a", a), ("beta", beta)] {
                    if !x.is_finite() {
                        return Err(Error::InvalidParameter {
                            name,
                            reason: "must be finite".to_string(),
                        });
                    }
                }
                Ok(())
            }
            MapSpec::EulerConservative { alpha, zone } => {
                if !(alpha.is_finite() && alpha > 0.0) {
                    return Err(Error::InvalidParameter {
                        name: "alpha",
                        reason: "alpha > 0".to_string(),
                    });
                }
                zone.validate()
            }
        }
    }

    /// Energy used to annotate orbits: the approximating Hamiltonian of `T`
    /// for the standard map, the zone Hamiltonian for the Euler map.
    pub fn energy(&self, s: PhaseState) -> f64 {
        match *self {
            MapSpec::StandardNonmonotone { a, beta } => approximating_hamiltonian(Approximation::T, a, beta, s),
            MapSpec::EulerConservative { zone, .. } => eval_hamiltonian(&zone, s),
        }
    }
}

#[inline]
fn rotation(beta: f64, u: f64) -> f64 {
    u - beta * u * u
}

/// `dH/du` of the zone model without the `mu1 cos v` term.
#[inline]
fn zone_drift(zone: &ZoneParameters, u: f64) -> f64 {
    zone.pf() * (zone.b * u * u + zone.mu2 * u + zone.b3 * u * u * u)
}

#[inline]
fn zone_drift_du(zone: &ZoneParameters, u: f64) -> f64 {
    zone.pf() * (2.0 * zone.b * u + zone.mu2 + 3.0 * zone.b3 * u * u)
}

fn euler_denominator(alpha: f64, zone: &ZoneParameters, sin_v: f64, index: usize) -> Result<f64> {
    let d = 1.0 - alpha * zone.mu1 * sin_v;
    if d.abs() <= DENOMINATOR_FLOOR {
        return Err(Error::SingularDenominator { index });
    }
    Ok(d)
}

fn check_finite(s: PhaseState, index: usize) -> Result<PhaseState> {
    if s.u.is_finite() && s.v.is_finite() {
        Ok(s)
    } else {
        Err(Error::NonFinite {
            what: "map iterate",
            at: index as f64,
        })
    }
}

/// One forward iterate in the lift; `index` is reported in errors.
pub fn step_lifted(spec: &MapSpec, s: PhaseState, index: usize) -> Result<PhaseState> {
    let next = match *spec {
        MapSpec::StandardNonmonotone { a, beta } => {
            let u = s.u + a * sin(s.v);
            PhaseState::new(u, s.v + rotation(beta, u))
        }
        MapSpec::EulerConservative { alpha, zone } => {
            let (sv, cv) = sin_cos(s.v);
            let d = euler_denominator(alpha, &zone, sv, index)?;
            let u = (s.u + alpha * zone.a * sv) / d;
            PhaseState::new(u, s.v + alpha * (zone_drift(&zone, u) + zone.mu1 * cv))
        }
    };
    check_finite(next, index)
}

/// One backward iterate in the lift. The Euler map is inverted by solving
/// `v + alpha mu1 cos v = v' - alpha dH/du(u')` with Newton's method and then
/// `u` explicitly.
pub fn inverse_lifted(spec: &MapSpec, s: PhaseState, index: usize) -> Result<PhaseState> {
    let prev = match *spec {
        MapSpec::StandardNonmonotone { a, beta } => {
            let v = s.v - rotation(beta, s.u);
            PhaseState::new(s.u - a * sin(v), v)
        }
        MapSpec::EulerConservative { alpha, zone } => {
            let k = alpha * zone.mu1;
            let rhs = s.v - alpha * zone_drift(&zone, s.u);
            let mut v = rhs;
            let mut converged = false;
            for _ in 0..60 {
                let (sv, cv) = sin_cos(v);
                let d = euler_denominator(alpha, &zone, sv, index)?;
                let dv = (v + k * cv - rhs) / d;
                v -= dv;
                if dv.abs() <= 1e-15 * (1.0 + v.abs()) {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::NoConvergence {
                    steps: 60,
                    residual: (v + k * cos(v) - rhs).abs(),
                });
            }
            let sv = sin(v);
            let d = euler_denominator(alpha, &zone, sv, index)?;
            PhaseState::new(s.u * d - alpha * zone.a * sv, v)
        }
    };
    check_finite(prev, index)
}

pub fn map_step(spec: &MapSpec, state: PhaseState) -> Result<PhaseState> {
    Ok(step_lifted(spec, state, 0)?.normalized())
}

pub fn inverse_step(spec: &MapSpec, state: PhaseState) -> Result<PhaseState> {
    Ok(inverse_lifted(spec, state, 0)?.normalized())
}

/// Two iterates of the standard map written out as one map.
pub fn standard_second_iterate(a: f64, beta: f64, s: PhaseState) -> PhaseState {
    let u1 = s.u + a * sin(s.v);
    let v1 = s.v + u1 - beta * u1 * u1;
    let u2 = u1 + a * sin(v1);
    PhaseState::new(u2, v1 + u2 - beta * u2 * u2)
}

/// Jacobian `[[du'/du, du'/dv], [dv'/du, dv'/dv]]` of one step.
pub fn map_jacobian(spec: &MapSpec, s: PhaseState) -> Result<[[f64; 2]; 2]> {
    match *spec {
        MapSpec::StandardNonmonotone { a, beta } => {
            let u1 = s.u + a * sin(s.v);
            let du_dv = a * cos(s.v);
            let g = 1.0 - 2.0 * beta * u1;
            Ok([[1.0, du_dv], [g, 1.0 + g * du_dv]])
        }
        MapSpec::EulerConservative { alpha, zone } => {
            let (sv, cv) = sin_cos(s.v);
            let d = euler_denominator(alpha, &zone, sv, 0)?;
            let u1 = (s.u + alpha * zone.a * sv) / d;
            let du_du = 1.0 / d;
            let du_dv = alpha * cv * (zone.a + zone.mu1 * u1) / d;
            let g = alpha * zone_drift_du(&zone, u1);
            Ok([[du_du, du_dv], [g * du_du, 1.0 + g * du_dv - alpha * zone.mu1 * sv]])
        }
    }
}

pub fn map_jacobian_det(spec: &MapSpec, state: PhaseState) -> Result<f64> {
    let j = map_jacobian(spec, state)?;
    Ok(j[0][0] * j[1][1] - j[0][1] * j[1][0])
}

/// Determinant of the Jacobian of [`map_step`] by central differences.
pub fn finite_difference_det(spec: &MapSpec, s: PhaseState, h: f64) -> Result<f64> {
    let diff = |du: f64, dv: f64| -> Result<(f64, f64)> {
        let p = step_lifted(spec, PhaseState::new(s.u + du, s.v + dv), 0)?;
        let m = step_lifted(spec, PhaseState::new(s.u - du, s.v - dv), 0)?;
        Ok(((p.u - m.u) / (2.0 * h), (p.v - m.v) / (2.0 * h)))
    };
    let (uu, vu) = diff(h, 0.0)?;
    let (uv, vv) = diff(0.0, h)?;
    Ok(uu * vv - uv * vu)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapPoint {
    pub u: f64,
    /// `v` reduced to `[0, 2pi)`.
    pub v: f64,
    pub v_unwrapped: f64,
}

impl MapPoint {
    fn from_lifted(s: PhaseState) -> Self {
        Self {
            u: s.u,
            v: s.normalized().v,
            v_unwrapped: s.v,
        }
    }

    pub fn lifted(&self) -> PhaseState {
        PhaseState::new(self.u, self.v_unwrapped)
    }
}

/// The start point followed by `n` iterates.
#[derive(Debug, Clone, PartialEq)]
pub struct MapOrbit {
    pub points: Vec<MapPoint>,
}

pub fn iterate_orbit(spec: &MapSpec, start: PhaseState, n: usize) -> Result<MapOrbit> {
    if n == 0 {
        return Err(Error::InvalidParameter {
            name: "n",
            reason: "n >= 1".to_string(),
        });
    }
    spec.validate()?;
    let mut points = Vec::with_capacity(n + 1);
    let mut s = check_finite(start, 0)?;
    points.push(MapPoint::from_lifted(s));
    for index in 0..n {
        s = step_lifted(spec, s, index)?;
        points.push(MapPoint::from_lifted(s));
    }
    Ok(MapOrbit { points })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Approximation {
    T,
    T2,
}

/// `T`: `u^2/2 - beta u^3/3 + a cos v`;
/// `T^2`: `u^2/2 - beta u^3/3 + (a^2/16)(1 - 2 beta u) cos 2v`.
pub fn approximating_hamiltonian(which: Approximation, a: f64, beta: f64, s: PhaseState) -> f64 {
    let u = s.u;
    let poly = u * u / 2.0 - beta * u * u * u / 3.0;
    match which {
        Approximation::T => poly + a * cos(s.v),
        Approximation::T2 => poly + a * a / 16.0 * (1.0 - 2.0 * beta * u) * cos(2.0 * s.v),
    }
}

/// The approximating Hamiltonian as a zone model. For `T^2` the zone angle
/// is `w = 2v` and the Hamiltonian is doubled so that `(u, w)` stay
/// canonical; equilibria of the zone map back with `v = w / 2`.
pub fn approximating_zone(which: Approximation, a: f64, beta: f64) -> ZoneParameters {
    match which {
        Approximation::T => ZoneParameters {
            a,
            b: -beta,
            p: 1,
            mu1: 0.0,
            mu2: 1.0,
            b3: 0.0,
        },
        Approximation::T2 => ZoneParameters {
            a: a * a / 8.0,
            b: -beta,
            p: 2,
            mu1: -a * a * beta / 4.0,
            mu2: 1.0,
            b3: 0.0,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationNumber {
    /// `(v_n - v_0) / (2 pi n)` in the lift, not reduced mod 1.
    pub lift: f64,
    /// `|rho_n - rho_{n/2}|`.
    pub tail_estimate: f64,
    pub iterations: usize,
}

impl RotationNumber {
    /// The rotation number reduced to `[0, 1)`.
    pub fn mod_one(&self) -> f64 {
        let r = self.lift - floor(self.lift);
        if r >= 1.0 {
            0.0
        } else {
            r
        }
    }
}

pub fn rotation_number(spec: &MapSpec, start: PhaseState, n: usize) -> Result<RotationNumber> {
    if n < 1000 {
        return Err(Error::InvalidParameter {
            name: "n",
            reason: "rotation numbers need n >= 1000".to_string(),
        });
    }
    let orbit = iterate_orbit(spec, start, n)?;
    let v0 = orbit.points[0].v_unwrapped;
    let rho = |k: usize| (orbit.points[k].v_unwrapped - v0) / (TAU * k as f64);
    let lift = rho(n);
    Ok(RotationNumber {
        lift,
        tail_estimate: (lift - rho(n / 2)).abs(),
        iterations: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapKind {
    Saddle,
    Elliptic,
    Parabolic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPoint {
    pub state: PhaseState,
    /// Winding: the lift moves by `2 pi m` in `v` per iterate.
    pub winding: i32,
    pub trace: f64,
    pub kind: MapKind,
}

fn classify(spec: &MapSpec, state: PhaseState, winding: i32) -> Result<FixedPoint> {
    let j = map_jacobian(spec, state)?;
    let trace = j[0][0] + j[1][1];
    let kind = if trace.abs() > 2.0 + 1e-12 {
        MapKind::Saddle
    } else if trace.abs() < 2.0 - 1e-12 {
        MapKind::Elliptic
    } else {
        MapKind::Parabolic
    };
    Ok(FixedPoint {
        state: state.normalized(),
        winding,
        trace,
        kind,
    })
}

fn real_quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    if a == 0.0 {
        return if b == 0.0 { vec![] } else { vec![-c / b] };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return vec![];
    }
    let q = -0.5 * (b + b.signum() * sqrt(disc));
    if q == 0.0 {
        return vec![0.0];
    }
    let mut r = vec![q / a, c / q];
    r.sort_by(f64::total_cmp);
    r.dedup();
    r
}

/// Fixed points whose lift advances by `2 pi winding` in `v`.
pub fn fixed_points(spec: &MapSpec, winding: i32) -> Result<Vec<FixedPoint>> {
    spec.validate()?;
    let shift = TAU * f64::from(winding);
    let mut states = Vec::new();
    match *spec {
        MapSpec::StandardNonmonotone { beta, .. } => {
            // sin v = 0 and u - beta u^2 = 2 pi m
            for u in real_quadratic_roots(-beta, 1.0, -shift) {
                states.push(PhaseState::new(u, 0.0));
                states.push(PhaseState::new(u, PI));
            }
        }
        MapSpec::EulerConservative { alpha, zone } => {
            if winding == 0 {
                states.extend(closed_form_equilibria(&zone).into_iter().map(|e| e.state));
            } else {
                if zone.b3 != 0.0 {
                    return Err(Error::InvalidParameter {
                        name: "b3",
                        reason: "winding fixed points need b3 = 0".to_string(),
                    });
                }
                let target = shift / alpha;
                for (v, c) in [(0.0, 1.0), (PI, -1.0)] {
                    for u in real_quadratic_roots(zone.pf() * zone.b, zone.pf() * zone.mu2, zone.mu1 * c - target) {
                        states.push(PhaseState::new(u, v));
                    }
                }
                if zone.mu1 != 0.0 {
                    let u = -zone.a / zone.mu1;
                    let c = (target - zone_drift(&zone, u)) / zone.mu1;
                    if c.abs() <= 1.0 {
                        let v = acos(c);
                        states.push(PhaseState::new(u, v));
                        if v != 0.0 && v != PI {
                            states.push(PhaseState::new(u, TAU - v));
                        }
                    }
                }
            }
        }
    }
    states.iter().map(|&s| classify(spec, s, winding)).collect()
}

/// Options for [`trace_manifolds`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManifoldOptions {
    pub segment_points: usize,
    pub offset: f64,
    /// Number of times the fundamental segment is mapped.
    pub iterations: usize,
    /// Adjacent images farther apart than this are refined.
    pub max_gap: f64,
    /// Growth of a branch stops once it holds this many points.
    pub max_points: usize,
}

impl Default for ManifoldOptions {
    fn default() -> Self {
        Self {
            segment_points: 1000,
            offset: 1e-7,
            iterations: 40,
            max_gap: 1e-2,
            max_points: 200_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldBranch {
    pub manifold: Manifold,
    /// Unit eigenvector the branch leaves along, oriented with `u >= 0` for
    /// the upper branch.
    pub direction: (f64, f64),
    /// Points in the lift, ordered along the branch.
    pub points: Vec<PhaseState>,
    /// Branch parameter of each point: `k + s` is the `k`-th image of the
    /// seed at `s` in the fundamental segment.
    pub params: Vec<f64>,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifolds {
    pub saddle: PhaseState,
    /// Multipliers `(lambda, 1/lambda)` with `|lambda| > 1`, from the
    /// characteristic polynomial.
    pub multipliers: (f64, f64),
    /// Upper and lower unstable branches.
    pub unstable: [ManifoldBranch; 2],
    /// Upper and lower stable branches.
    pub stable: [ManifoldBranch; 2],
    /// Largest `u`-distance between the upper unstable branch and the
    /// upper stable branch shifted by one turn, over a half-turn section
    /// centered opposite the saddle; `None` when the branches do not reach
    /// across it.
    pub splitting: Option<f64>,
}

struct BranchSeed<'a> {
    spec: &'a MapSpec,
    origin: PhaseState,
    dir: (f64, f64),
    offset: f64,
    /// Multiplier of one growth step (`lambda` or `lambda^2` for flip saddles).
    growth: f64,
    steps_per_iter: usize,
    forward: bool,
}

impl BranchSeed<'_> {
    fn seed(&self, s: f64) -> PhaseState {
        let r = self.offset * powf(self.growth, s);
        PhaseState::new(self.origin.u + r * self.dir.0, self.origin.v + r * self.dir.1)
    }

    fn advance(&self, mut p: PhaseState, iters: usize) -> Result<PhaseState> {
        for i in 0..iters * self.steps_per_iter {
            p = if self.forward {
                step_lifted(self.spec, p, i)?
            } else {
                inverse_lifted(self.spec, p, i)?
            };
        }
        Ok(p)
    }

    fn point_at(&self, t: f64) -> Result<PhaseState> {
        let k = floor(t);
        self.advance(self.seed(t - k), k as usize)
    }

    fn grow(&self, opts: &ManifoldOptions) -> Result<(Vec<PhaseState>, Vec<f64>, bool)> {
        let n = opts.segment_points.max(2);
        let mut seeds: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let mut pts: Vec<PhaseState> = seeds.iter().map(|&s| self.seed(s)).collect();
        let mut all_pts = pts.clone();
        let mut all_params = seeds.clone();
        let mut truncated = false;
        for k in 1..=opts.iterations {
            pts = pts.iter().map(|&p| self.advance(p, 1)).collect::<Result<_>>()?;
            let mut i = 0;
            while i + 1 < pts.len() {
                let gap = hypot(pts[i + 1].u - pts[i].u, pts[i + 1].v - pts[i].v);
                let ds = seeds[i + 1] - seeds[i];
                if gap > opts.max_gap && ds > 1e-14 && all_pts.len() + pts.len() < opts.max_points {
                    let s = seeds[i] + 0.5 * ds;
                    let p = self.advance(self.seed(s), k)?;
                    seeds.insert(i + 1, s);
                    pts.insert(i + 1, p);
                } else {
                    if gap > opts.max_gap && all_pts.len() + pts.len() >= opts.max_points {
                        truncated = true;
                    }
                    i += 1;
                }
            }
            all_pts.extend(pts.iter().skip(1));
            all_params.extend(seeds.iter().skip(1).map(|s| s + k as f64));
            if all_pts.len() >= opts.max_points {
                truncated = true;
                break;
            }
        }
        Ok((all_pts, all_params, truncated))
    }
}

fn unit(x: f64, y: f64) -> (f64, f64) {
    let n = hypot(x, y);
    (x / n, y / n)
}

/// Eigenvector of `j` for the real eigenvalue `lambda`.
fn eigenvector(j: &[[f64; 2]; 2], lambda: f64) -> (f64, f64) {
    let a = (j[0][1], lambda - j[0][0]);
    let b = (lambda - j[1][1], j[1][0]);
    let e = if hypot(a.0, a.1) >= hypot(b.0, b.1) { a } else { b };
    let e = unit(e.0, e.1);
    if e.0 < 0.0 || (e.0 == 0.0 && e.1 < 0.0) {
        (-e.0, -e.1)
    } else {
        e
    }
}

/// Unstable and stable manifolds of a saddle fixed point, grown from a
/// fundamental segment of `segment_points` seeds at distance `offset` along
/// the eigenvectors.
pub fn trace_manifolds(spec: &MapSpec, saddle: PhaseState, opts: &ManifoldOptions) -> Result<Manifolds> {
    spec.validate()?;
    let image = step_lifted(spec, saddle, 0)?;
    let defect = hypot(image.u - saddle.u, angle_diff(image.v, saddle.v));
    if defect > 1e-8 {
        return Err(Error::InvalidParameter {
            name: "saddle",
            reason: alloc::format!("not a fixed point (|f(x) - x| = {defect:e})"),
        });
    }
    let winding = libm::round((image.v - saddle.v) / TAU);
    let j = map_jacobian(spec, saddle)?;
    let tr = j[0][0] + j[1][1];
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let disc = tr * tr - 4.0 * det;
    if disc <= 0.0 || tr.abs() <= 2.0 {
        return Err(Error::NonrealMultipliers);
    }
    let root = sqrt(disc);
    let q = 0.5 * (tr + tr.signum() * root);
    let (lu, ls) = (q, det / q);
    let (eu, es) = (eigenvector(&j, lu), eigenvector(&j, ls));
    let steps_per_iter = if lu < 0.0 { 2 } else { 1 };
    let growth = if lu < 0.0 { lu * lu } else { lu.abs() };

    let branch = |manifold: Manifold, dir: (f64, f64)| -> Result<(ManifoldBranch, BranchSeed<'_>)> {
        let seed = BranchSeed {
            spec,
            origin: saddle,
            dir,
            offset: opts.offset,
            growth,
            steps_per_iter,
            forward: manifold == Manifold::Unstable,
        };
        let (points, params, truncated) = seed.grow(opts)?;
        Ok((
            ManifoldBranch {
                manifold,
                direction: dir,
                points,
                params,
                truncated,
            },
            seed,
        ))
    };
    let (u_up, u_up_seed) = branch(Manifold::Unstable, eu)?;
    let (u_down, _) = branch(Manifold::Unstable, (-eu.0, -eu.1))?;
    let (s_up, s_up_seed) = branch(Manifold::Stable, es)?;
    let (s_down, _) = branch(Manifold::Stable, (-es.0, -es.1))?;

    let splitting = if winding == 0.0 {
        splitting_gap(&u_up, &u_up_seed, &s_up, &s_up_seed, saddle.v)?
    } else {
        None
    };

    Ok(Manifolds {
        saddle,
        multipliers: (lu, ls),
        unstable: [u_up, u_down],
        stable: [s_up, s_down],
        splitting,
    })
}

/// Parameter of the first crossing of `v = level` along the branch,
/// bisected on the branch parameter.
fn first_crossing(branch: &ManifoldBranch, seed: &BranchSeed<'_>, level: f64, shift: f64) -> Result<Option<f64>> {
    let pts = &branch.points;
    let Some(i) =
        (0..pts.len().saturating_sub(1)).find(|&i| (pts[i].v + shift - level) * (pts[i + 1].v + shift - level) <= 0.0)
    else {
        return Ok(None);
    };
    let (mut lo, mut hi) = (branch.params[i], branch.params[i + 1]);
    let f_lo = pts[i].v + shift - level;
    // crossings that straddle an integer parameter are bisected on the side
    // that holds the sign change
    for _ in 0..200 {
        if hi - lo <= 1e-15 * hi.abs().max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let f_mid = seed.point_at(mid)?.v + shift - level;
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

fn splitting_gap(
    unstable: &ManifoldBranch,
    u_seed: &BranchSeed<'_>,
    stable: &ManifoldBranch,
    s_seed: &BranchSeed<'_>,
    v0: f64,
) -> Result<Option<f64>> {
    let sigma = if unstable.direction.1 >= 0.0 { 1.0 } else { -1.0 };
    let shift = sigma * TAU;
    let mut gap: f64 = 0.0;
    for k in 0..=32 {
        let level = v0 + sigma * (FRAC_PI_2 + PI * k as f64 / 32.0);
        let (Some(tu), Some(ts)) = (
            first_crossing(unstable, u_seed, level, 0.0)?,
            first_crossing(stable, s_seed, level, shift)?,
        ) else {
            return Ok(None);
        };
        let pu = u_seed.point_at(tu)?;
        let ps = s_seed.point_at(ts)?;
        gap = gap.max((pu.u - ps.u).abs());
    }
    Ok(Some(gap))
}

/// Distance between one Euler step and the zone flow over `tau = alpha`.
pub fn euler_flow_defect(zone: &ZoneParameters, start: PhaseState, alpha: f64, tol: f64) -> Result<f64> {
    let spec = MapSpec::EulerConservative { alpha, zone: *zone };
    let mapped = step_lifted(&spec, start, 0)?;
    let flowed = integrate_orbit(zone, start, (0.0, alpha), tol, &Sampling::Uniform(2))?
        .last()
        .ok_or(Error::InvalidParameter {
            name: "alpha",
            reason: "empty orbit".to_string(),
        })?;
    Ok(hypot(mapped.u - flowed.u, mapped.v - flowed.v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibria::{Equilibrium, Label};

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (*seed >> 11) as f64 / (1u64 << 53) as f64
    }

    fn euler(alpha: f64, mu1: f64, mu2: f64) -> MapSpec {
        MapSpec::EulerConservative {
            alpha,
            zone: ZoneParameters::reference(mu1, mu2),
        }
    }

    #[test]
    fn integrable_standard_map_rotates_rigidly() {
        let spec = MapSpec::StandardNonmonotone { a: 0.0, beta: 0.3 };
        let s = PhaseState::new(0.7, 1.0);
        let next = map_step(&spec, s).unwrap();
        assert_eq!(next.u, 0.7);
        assert!(angle_diff(next.v, 1.0 + 0.7 - 0.3 * 0.49).abs() < 1e-15);
    }

    #[test]
    fn standard_fixed_points_by_hand() {
        let beta = 0.25;
        let spec = MapSpec::StandardNonmonotone { a: 0.3, beta };
        let fps = fixed_points(&spec, 0).unwrap();
        let expected = [(0.0, 0.0), (0.0, PI), (1.0 / beta, 0.0), (1.0 / beta, PI)];
        assert_eq!(fps.len(), 4);
        for (u, v) in expected {
            assert!(fps
                .iter()
                .any(|f| (f.state.u - u).abs() < 1e-12 && angle_diff(f.state.v, v).abs() < 1e-12));
            let s = PhaseState::new(u, v);
            let img = map_step(&spec, s).unwrap();
            assert!((img.u - u).abs() < 1e-12 && angle_diff(img.v, v).abs() < 1e-12);
        }
        let origin = fps.iter().find(|f| f.state.u == 0.0 && f.state.v == 0.0).unwrap();
        assert_eq!(origin.kind, MapKind::Saddle);
    }

    #[test]
    fn euler_fixed_points_are_zone_equilibria() {
        let spec = euler(0.05, 0.5, 1.0);
        for f in fixed_points(&spec, 0).unwrap() {
            let img = map_step(&spec, f.state).unwrap();
            assert!((img.u - f.state.u).abs() < 1e-12);
            assert!(angle_diff(img.v, f.state.v).abs() < 1e-12);
        }
    }

    #[test]
    fn euler_winding_fixed_points_advance_one_turn() {
        let spec = euler(0.17, 0.5, 1.0);
        let fps = fixed_points(&spec, 1).unwrap();
        assert!(!fps.is_empty());
        for f in fps {
            let img = step_lifted(&spec, f.state, 0).unwrap();
            assert!((img.u - f.state.u).abs() < 1e-10);
            assert!((img.v - f.state.v - TAU).abs() < 1e-10);
        }
    }

    #[test]
    fn jacobian_determinants_are_one() {
        let mut seed = 7;
        for spec in [
            MapSpec::StandardNonmonotone { a: 0.8, beta: 0.2 },
            euler(0.17, 0.9, 2.5),
            euler(0.01, -2.0, -1.0),
        ] {
            for _ in 0..100 {
                let s = PhaseState::new(6.0 * lcg(&mut seed) - 3.0, TAU * lcg(&mut seed));
                let det = map_jacobian_det(&spec, s).unwrap();
                assert!((det - 1.0).abs() < 1e-12, "{det}");
                let fd = finite_difference_det(&spec, s, 1e-5).unwrap();
                assert!((fd - 1.0).abs() < 1e-6, "{fd}");
            }
        }
    }

    #[test]
    fn singular_denominator_is_reported() {
        let alpha = 0.5;
        let mu1 = 2.0 / (1.0 - 1e-13);
        let spec = MapSpec::EulerConservative {
            alpha,
            zone: ZoneParameters::reference(mu1, 1.0),
        };
        let s = PhaseState::new(0.1, FRAC_PI_2);
        assert!(matches!(
            map_step(&spec, s),
            Err(Error::SingularDenominator { index: 0 })
        ));
        assert!(matches!(
            map_jacobian_det(&spec, s),
            Err(Error::SingularDenominator { .. })
        ));
    }

    #[test]
    fn iterate_reports_failing_index() {
        let spec = MapSpec::EulerConservative {
            alpha: 1.0,
            zone: ZoneParameters::reference(1.0, 1.0),
        };
        let start = PhaseState::new(0.0, FRAC_PI_2);
        assert!(matches!(
            iterate_orbit(&spec, start, 3),
            Err(Error::SingularDenominator { index: 0 })
        ));
    }

    #[test]
    fn inverse_undoes_step() {
        let mut seed = 11;
        for spec in [
            MapSpec::StandardNonmonotone { a: 1.3, beta: 0.4 },
            euler(0.17, 0.6, 2.7),
        ] {
            for _ in 0..100 {
                let s = PhaseState::new(4.0 * lcg(&mut seed) - 2.0, TAU * lcg(&mut seed));
                let back = inverse_step(&spec, map_step(&spec, s).unwrap()).unwrap();
                assert!((back.u - s.u).abs() < 1e-10);
                assert!(angle_diff(back.v, s.v).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn explicit_form_solves_implicit_equations() {
        let (alpha, zone) = (0.17, ZoneParameters::reference(0.8, 2.2));
        let spec = MapSpec::EulerConservative { alpha, zone };
        let mut seed = 3;
        for _ in 0..50 {
            let s = PhaseState::new(2.0 * lcg(&mut seed) - 1.0, TAU * lcg(&mut seed));
            let (sv, cv) = sin_cos(s.v);
            let mut u = s.u;
            for _ in 0..200 {
                u = s.u + alpha * (zone.a + zone.mu1 * u) * sv;
            }
            let v = s.v + alpha * (zone.b * u * u + zone.mu2 * u + zone.mu1 * cv);
            let explicit = step_lifted(&spec, s, 0).unwrap();
            assert!((explicit.u - u).abs() < 1e-12);
            assert!((explicit.v - v).abs() < 1e-12);
        }
    }

    #[test]
    fn second_iterate_matches_two_steps() {
        let (a, beta) = (0.9, 0.3);
        let spec = MapSpec::StandardNonmonotone { a, beta };
        let mut seed = 5;
        for _ in 0..100 {
            let s = PhaseState::new(4.0 * lcg(&mut seed) - 2.0, TAU * lcg(&mut seed));
            let two = step_lifted(&spec, step_lifted(&spec, s, 0).unwrap(), 1).unwrap();
            let composed = standard_second_iterate(a, beta, s);
            assert!((two.u - composed.u).abs() < 1e-12);
            assert!((two.v - composed.v).abs() < 1e-12);
        }
    }

    #[test]
    fn orbit_composition_and_fixed_points() {
        let spec = euler(0.17, 0.5, 1.0);
        let start = PhaseState::new(0.1, 0.1);
        let long = iterate_orbit(&spec, start, 20).unwrap();
        let mut s = start;
        for k in 1..=10 {
            s = step_lifted(&spec, step_lifted(&spec, s, 0).unwrap(), 0).unwrap();
            let p = long.points[2 * k];
            assert!((p.u - s.u).abs() < 1e-12 && (p.v_unwrapped - s.v).abs() < 1e-12);
        }

        let fp = fixed_points(&spec, 0).unwrap()[0].state;
        let orbit = iterate_orbit(&spec, fp, 50).unwrap();
        for p in &orbit.points {
            assert!((p.u - fp.u).abs() < 1e-12 && angle_diff(p.v, fp.v).abs() < 1e-12);
        }

        let flat = MapSpec::StandardNonmonotone { a: 0.0, beta: 0.2 };
        for p in iterate_orbit(&flat, PhaseState::new(0.4, 2.0), 100).unwrap().points {
            assert_eq!(p.u, 0.4);
        }
    }

    #[test]
    fn rotation_number_of_rigid_rotation() {
        let beta = 0.25;
        let spec = MapSpec::StandardNonmonotone { a: 0.0, beta };
        let rho = |u0: f64| rotation_number(&spec, PhaseState::new(u0, 0.3), 2000).unwrap();
        for u0 in [-1.0, 0.3, 1.7, 3.1] {
            let r = rho(u0);
            assert!((r.lift - (u0 - beta * u0 * u0) / TAU).abs() < 1e-12);
            assert!(r.tail_estimate < 1e-12);
        }
        let vertex = 1.0 / (2.0 * beta);
        let peak = rho(vertex).lift;
        for du in [0.5, 0.1, 0.01] {
            assert!(rho(vertex - du).lift < peak && rho(vertex + du).lift < peak);
        }
        assert!(rotation_number(&spec, PhaseState::new(0.0, 0.0), 999).is_err());
    }

    #[test]
    fn rotation_number_at_fixed_point_is_zero() {
        let spec = MapSpec::StandardNonmonotone { a: 0.5, beta: 0.25 };
        let r = rotation_number(&spec, PhaseState::new(0.0, PI), 1000).unwrap();
        assert!(r.lift.abs() < 1e-15);
        assert_eq!(r.mod_one(), 0.0);
    }

    #[test]
    fn approximating_hamiltonians() {
        let (a, beta) = (0.7, 0.3);
        assert_eq!(
            approximating_hamiltonian(Approximation::T, a, beta, PhaseState::new(0.0, 0.0)),
            a
        );
        let u = 1.0 / (2.0 * beta);
        for v in [0.0, 0.4, 2.0, 5.0] {
            let h = approximating_hamiltonian(Approximation::T2, a, beta, PhaseState::new(u, v));
            assert!((h - (u * u / 2.0 - beta * u * u * u / 3.0)).abs() < 1e-15);
        }
        let s = PhaseState::new(1.3, 0.8);
        assert_eq!(
            approximating_hamiltonian(Approximation::T2, 0.0, beta, s),
            approximating_hamiltonian(Approximation::T, 0.0, beta, s)
        );
    }

    #[test]
    fn approximating_zones_reproduce_hamiltonians() {
        let (a, beta) = (1.1, 0.4);
        for (u, v) in [(0.3, 0.2), (-1.0, 2.0), (2.0, 4.0)] {
            let t = approximating_zone(Approximation::T, a, beta);
            let s = PhaseState::new(u, v);
            let h = approximating_hamiltonian(Approximation::T, a, beta, s);
            assert!((eval_hamiltonian(&t, s) - h).abs() < 1e-14);
            let t2 = approximating_zone(Approximation::T2, a, beta);
            let h2 = approximating_hamiltonian(Approximation::T2, a, beta, s);
            assert!((eval_hamiltonian(&t2, PhaseState::new(u, 2.0 * v)) - 2.0 * h2).abs() < 1e-14);
        }
    }

    #[test]
    fn nonreal_multipliers_at_elliptic_point() {
        let spec = MapSpec::StandardNonmonotone { a: 0.3, beta: 0.1 };
        let opts = ManifoldOptions::default();
        assert!(matches!(
            trace_manifolds(&spec, PhaseState::new(0.0, PI), &opts),
            Err(Error::NonrealMultipliers)
        ));
        assert!(trace_manifolds(&spec, PhaseState::new(0.2, PI), &opts).is_err());
    }

    #[test]
    fn manifolds_of_standard_saddle() {
        let spec = MapSpec::StandardNonmonotone { a: 0.4, beta: 0.1 };
        let opts = ManifoldOptions {
            iterations: 30,
            ..ManifoldOptions::default()
        };
        let m = trace_manifolds(&spec, PhaseState::new(0.0, 0.0), &opts).unwrap();
        assert!((m.multipliers.0 * m.multipliers.1 - 1.0).abs() < 1e-10);
        assert!(m.multipliers.0 > 1.0);
        for b in m.unstable.iter().chain(&m.stable) {
            assert_eq!(b.points.len(), b.params.len());
            assert!(b.params.windows(2).all(|w| w[0] < w[1]));
        }
        let gap = m.splitting.expect("branches reach across the section");
        assert!(gap > 0.0 && gap < 0.1, "{gap}");
    }

    #[test]
    fn splitting_shrinks_with_kick_strength() {
        let gaps: Vec<f64> = [(0.4, 40), (0.2, 50), (0.1, 70)]
            .into_iter()
            .map(|(a, iterations)| {
                let spec = MapSpec::StandardNonmonotone { a, beta: 0.1 };
                let opts = ManifoldOptions {
                    iterations,
                    ..ManifoldOptions::default()
                };
                trace_manifolds(&spec, PhaseState::new(0.0, 0.0), &opts)
                    .unwrap()
                    .splitting
                    .unwrap()
            })
            .collect();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2] && gaps[2] > 0.0, "{gaps:?}");
    }

    #[test]
    fn first_segment_follows_saddle_level() {
        let alpha = 0.01;
        let zone = ZoneParameters::reference(0.5, 1.0);
        let spec = MapSpec::EulerConservative { alpha, zone };
        let saddle: Equilibrium = closed_form_equilibria(&zone)
            .into_iter()
            .find(|e| e.is_saddle() && e.label == Label::O2Minus)
            .unwrap();
        let opts = ManifoldOptions {
            iterations: 600,
            max_points: 20_000,
            ..ManifoldOptions::default()
        };
        let m = trace_manifolds(&spec, saddle.state, &opts).unwrap();
        let worst = m.unstable[0]
            .points
            .iter()
            .chain(&m.stable[0].points)
            .map(|p| (eval_hamiltonian(&zone, *p) - saddle.energy).abs())
            .fold(0.0, f64::max);
        assert!(worst < 5.0 * alpha, "{worst}");
    }

    #[test]
    fn euler_step_error_is_second_order() {
        let zone = ZoneParameters::reference(0.5, 1.0);
        let s = PhaseState::new(0.4, 1.1);
        let e1 = euler_flow_defect(&zone, s, 0.01, 1e-12).unwrap();
        let e2 = euler_flow_defect(&zone, s, 0.005, 1e-12).unwrap();
        let order = (e1 / e2).ln() / 2f64.ln();
        assert!(order > 1.8, "{order}");
    }
}

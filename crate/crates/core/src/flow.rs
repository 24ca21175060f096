//! Orbit integration for planar fields on the cylinder.
//!
//! The integrator is the Dormand–Prince 5(4) pair with a PI step-size
//! controller and the usual fourth-order dense output. The tolerance bounds
//! the local error per unit time, so global errors stay proportional to
//! `tol` times the integration span. `v` is never wrapped during
//! integration.

use alloc::{string::ToString, vec::Vec};

use crate::equilibria::{phase_distance, Equilibrium, Kind, Label};
use crate::error::{Error, Result};
use crate::math::{hypot, powf, sqrt};
use crate::zone::{
    eval_general_field, eval_hamiltonian, eval_vector_field, jacobian, GeneralAveragedModel, PhaseState, ZoneParameters,
};

/// A planar vector field in `(u, v)`.
pub trait VectorField {
    fn eval(&self, s: PhaseState) -> Result<(f64, f64)>;

    /// Conserved energy, for Hamiltonian fields.
    fn energy(&self, _s: PhaseState) -> Option<f64> {
        None
    }
}

impl VectorField for ZoneParameters {
    fn eval(&self, s: PhaseState) -> Result<(f64, f64)> {
        Ok(eval_vector_field(self, s))
    }

    fn energy(&self, s: PhaseState) -> Option<f64> {
        Some(eval_hamiltonian(self, s))
    }
}

impl VectorField for GeneralAveragedModel {
    fn eval(&self, s: PhaseState) -> Result<(f64, f64)> {
        eval_general_field(self, s)
    }
}

/// Adapter for closures `(u, v) -> (du, dv)`.
pub struct FnField<F>(pub F);

impl<F: Fn(PhaseState) -> (f64, f64)> VectorField for FnField<F> {
    fn eval(&self, s: PhaseState) -> Result<(f64, f64)> {
        Ok((self.0)(s))
    }
}

/// Orbit samples, `v` unwrapped.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitTrace {
    pub points: Vec<(f64, PhaseState)>,
    /// `max |H - H0|` over every accepted step; `None` for non-Hamiltonian
    /// fields.
    pub energy_drift: Option<f64>,
    pub initial_energy: Option<f64>,
    pub steps: usize,
}

impl OrbitTrace {
    pub fn last(&self) -> Option<PhaseState> {
        self.points.last().map(|p| p.1)
    }

    /// Drift relative to `max(|H0|, 1)`.
    pub fn relative_drift(&self) -> Option<f64> {
        Some(self.energy_drift? / self.initial_energy?.abs().max(1.0))
    }
}

/// Which times end up in the [`OrbitTrace`].
#[derive(Debug, Clone, PartialEq)]
pub enum Sampling {
    /// Every accepted step.
    Steps,
    /// Caller-requested times inside the span, in integration order.
    Times(Vec<f64>),
    /// `n + 1` equally spaced times including both ends.
    Uniform(usize),
}

pub const MIN_TOL: f64 = 1e-13;
pub const MAX_TOL: f64 = 1e-3;
pub const BLOWUP_U: f64 = 1e6;
/// Largest step; keeps the step well inside the stability region near
/// equilibria where the error estimate vanishes.
pub const MAX_STEP: f64 = 0.25;

// Dormand–Prince coefficients
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

type V2 = [f64; 2];

fn axpy(y: V2, terms: &[(f64, V2)], h: f64) -> V2 {
    let mut out = y;
    for &(c, k) in terms {
        out[0] += h * c * k[0];
        out[1] += h * c * k[1];
    }
    out
}

/// Continuous extension of one accepted step.
#[derive(Debug, Clone, Copy)]
struct Dense {
    t0: f64,
    h: f64,
    r: [V2; 5],
}

impl Dense {
    fn at(&self, t: f64) -> PhaseState {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let c = |i: usize| {
            let r = &self.r;
            r[0][i] + th * (r[1][i] + th1 * (r[2][i] + th * (r[3][i] + th1 * r[4][i])))
        };
        PhaseState::new(c(0), c(1))
    }
}

/// Adaptive Dormand–Prince stepper.
pub struct Stepper<'f, F: VectorField + ?Sized> {
    field: &'f F,
    t: f64,
    y: V2,
    k1: V2,
    h: f64,
    dir: f64,
    tol: f64,
    err_old: f64,
    last: Option<Dense>,
}

fn field_at<F: VectorField + ?Sized>(field: &F, y: V2, t: f64) -> Result<V2> {
    let (a, b) = field.eval(PhaseState::new(y[0], y[1]))?;
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::NonFinite {
            what: "vector field",
            at: t,
        });
    }
    Ok([a, b])
}

impl<'f, F: VectorField + ?Sized> Stepper<'f, F> {
    /// `dir` is `+1` for forward and `-1` for backward integration.
    pub fn new(field: &'f F, start: PhaseState, t0: f64, dir: f64, tol: f64) -> Result<Self> {
        if !(MIN_TOL..=MAX_TOL).contains(&tol) {
            return Err(Error::InvalidParameter {
                name: "tol",
                reason: "tol must lie in [1e-13, 1e-3]".to_string(),
            });
        }
        let y = [start.u, start.v];
        let k1 = field_at(field, y, t0)?;
        // initial step from the field size
        let scale = tol * (1.0 + hypot(y[0], y[1]));
        let speed = hypot(k1[0], k1[1]);
        let h = if speed > 0.0 {
            (0.01 * powf(scale / speed.max(1e-300), 0.2)).clamp(1e-6, 0.1)
        } else {
            0.1
        };
        Ok(Self {
            field,
            t: t0,
            y,
            k1,
            h,
            dir: if dir < 0.0 { -1.0 } else { 1.0 },
            tol,
            err_old: 1e-4,
            last: None,
        })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn state(&self) -> PhaseState {
        PhaseState::new(self.y[0], self.y[1])
    }

    /// Dense output inside the last accepted step.
    pub fn interpolate(&self, t: f64) -> PhaseState {
        match &self.last {
            Some(d) => d.at(t),
            None => self.state(),
        }
    }

    /// Advances by one accepted step, never beyond `t_end`.
    pub fn step(&mut self, t_end: f64) -> Result<()> {
        let remaining = (t_end - self.t) * self.dir;
        if remaining <= 0.0 {
            return Ok(());
        }
        let mut h = self.h.min(remaining);
        loop {
            let min_h = 1e-14 * self.t.abs().max(1.0);
            if h < min_h {
                return Err(Error::StepUnderflow { t: self.t });
            }
            let hs = h * self.dir;
            let (t, y, k1) = (self.t, self.y, self.k1);
            let f = self.field;
            let k2 = field_at(f, axpy(y, &[(A21, k1)], hs), t + C2 * hs)?;
            let k3 = field_at(f, axpy(y, &[(A31, k1), (A32, k2)], hs), t + C3 * hs)?;
            let k4 = field_at(f, axpy(y, &[(A41, k1), (A42, k2), (A43, k3)], hs), t + C4 * hs)?;
            let k5 = field_at(
                f,
                axpy(y, &[(A51, k1), (A52, k2), (A53, k3), (A54, k4)], hs),
                t + C5 * hs,
            )?;
            let k6 = field_at(
                f,
                axpy(y, &[(A61, k1), (A62, k2), (A63, k3), (A64, k4), (A65, k5)], hs),
                t + hs,
            )?;
            let y_new = axpy(y, &[(A71, k1), (A73, k3), (A74, k4), (A75, k5), (A76, k6)], hs);
            let k7 = field_at(f, y_new, t + hs)?;
            let mut err = 0.0;
            for i in 0..2 {
                let e = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                // v is an unwrapped angle, so it gets an absolute tolerance only
                let mag = if i == 0 { y[i].abs().max(y_new[i].abs()) } else { 0.0 };
                let sc = self.tol * (1.0 + mag) * h;
                err += (e / sc) * (e / sc);
            }
            let err = sqrt(err / 2.0);
            if !err.is_finite() {
                h *= 0.1;
                continue;
            }
            // PI controller (beta = 0.04) for an error that scales as h^4
            let fac11 = powf(err, 0.25 - 0.04 * 0.75);
            if err <= 1.0 {
                let fac = (fac11 / powf(self.err_old, 0.04) / 0.9).clamp(0.2, 10.0);
                self.err_old = err.max(1e-4);
                let mut r = [[0.0; 2]; 5];
                for i in 0..2 {
                    let dy = y_new[i] - y[i];
                    let bspl = hs * k1[i] - dy;
                    r[0][i] = y[i];
                    r[1][i] = dy;
                    r[2][i] = bspl;
                    r[3][i] = dy - hs * k7[i] - bspl;
                    r[4][i] = hs * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
                }
                self.last = Some(Dense { t0: t, h: hs, r });
                let end_hit = h >= remaining;
                self.t = if end_hit { t_end } else { t + hs };
                self.y = y_new;
                self.k1 = k7;
                self.h = (h / fac).min(MAX_STEP);
                if y_new[0].abs() > BLOWUP_U {
                    return Err(Error::Blowup { t: self.t });
                }
                return Ok(());
            }
            h /= (fac11 / 0.9).min(10.0);
        }
    }
}

/// Integrates `field` from `start` over `t_span = (t0, t1)`; `t1 < t0`
/// integrates backwards.
pub fn integrate_orbit<F: VectorField + ?Sized>(
    field: &F,
    start: PhaseState,
    t_span: (f64, f64),
    tol: f64,
    sampling: &Sampling,
) -> Result<OrbitTrace> {
    let (t0, t1) = t_span;
    if !(t0.is_finite() && t1.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "t_span",
            reason: "must be finite".to_string(),
        });
    }
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let mut stepper = Stepper::new(field, start, t0, dir, tol)?;
    let e0 = field.energy(start);
    let mut drift: f64 = 0.0;

    let requested: Option<Vec<f64>> = match sampling {
        Sampling::Steps => None,
        Sampling::Times(ts) => Some(ts.clone()),
        Sampling::Uniform(n) => {
            let n = (*n).max(1);
            Some((0..=n).map(|k| t0 + (t1 - t0) * k as f64 / n as f64).collect())
        }
    };
    if let Some(ts) = &requested {
        let inside = |t: &f64| (t - t0) * dir >= -1e-15 && (t1 - t) * dir >= -1e-15;
        let ordered = ts.windows(2).all(|w| (w[1] - w[0]) * dir >= 0.0);
        if !ts.iter().all(inside) || !ordered {
            return Err(Error::InvalidParameter {
                name: "sample times",
                reason: "must lie in the span and follow the integration direction".to_string(),
            });
        }
    }

    let mut points = Vec::new();
    let mut next = 0usize;
    let emit = |stepper: &Stepper<'_, F>, points: &mut Vec<(f64, PhaseState)>, next: &mut usize| {
        if let Some(ts) = &requested {
            while *next < ts.len() && (stepper.time() - ts[*next]) * dir >= 0.0 {
                let t = ts[*next];
                let s = if t == stepper.time() {
                    stepper.state()
                } else {
                    stepper.interpolate(t)
                };
                points.push((t, s));
                *next += 1;
            }
        } else {
            points.push((stepper.time(), stepper.state()));
        }
    };
    emit(&stepper, &mut points, &mut next);
    let mut steps = 0usize;
    while (t1 - stepper.time()) * dir > 0.0 {
        stepper.step(t1)?;
        steps += 1;
        if let (Some(h0), Some(h)) = (e0, field.energy(stepper.state())) {
            drift = drift.max((h - h0).abs());
        }
        emit(&stepper, &mut points, &mut next);
    }
    Ok(OrbitTrace {
        points,
        energy_drift: e0.map(|_| drift),
        initial_energy: e0,
        steps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Manifold {
    Stable,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BranchEnd {
    /// Came within the return radius of a saddle.
    Saddle { label: Label, at: PhaseState },
    /// Ran out of time or arc length.
    Budget,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparatrixBranch {
    pub manifold: Manifold,
    /// `+1` or `-1`: side of the eigenvector.
    pub side: f64,
    /// Points in flow order (reverse time for stable branches).
    pub points: Vec<PhaseState>,
    pub end: BranchEnd,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparatrixBudget {
    pub max_time: f64,
    pub max_arc: f64,
    pub tol: f64,
}

impl Default for SeparatrixBudget {
    fn default() -> Self {
        Self {
            max_time: 200.0,
            max_arc: 60.0,
            tol: 1e-11,
        }
    }
}

pub const SEPARATRIX_OFFSET: f64 = 1e-7;
pub const RETURN_RADIUS: f64 = 1e-5;

/// Unit eigenvectors `(unstable, stable)` of the saddle's Jacobian.
pub fn saddle_eigenvectors(params: &ZoneParameters, saddle: &Equilibrium) -> Result<(V2, V2, f64)> {
    if saddle.kind != Kind::Saddle {
        return Err(Error::InvalidParameter {
            name: "saddle",
            reason: "equilibrium is not a saddle".to_string(),
        });
    }
    let j = jacobian(params, saddle.state);
    let lambda = sqrt(-saddle.delta);
    let eig = |l: f64| -> V2 {
        let c1 = [j[0][1], l - j[0][0]];
        let c2 = [l - j[1][1], j[1][0]];
        let v = if hypot(c1[0], c1[1]) >= hypot(c2[0], c2[1]) {
            c1
        } else {
            c2
        };
        let n = hypot(v[0], v[1]);
        [v[0] / n, v[1] / n]
    };
    Ok((eig(lambda), eig(-lambda), lambda))
}

/// The four separatrix branches of `saddle`, each stopped when it returns to
/// within [`RETURN_RADIUS`] of any saddle in `targets` or exhausts the
/// budget.
pub fn trace_separatrices(
    params: &ZoneParameters,
    saddle: &Equilibrium,
    targets: &[Equilibrium],
    budget: SeparatrixBudget,
) -> Result<[SeparatrixBranch; 4]> {
    let (eu, es, _) = saddle_eigenvectors(params, saddle)?;
    let branch = |manifold: Manifold, side: f64| -> Result<SeparatrixBranch> {
        let e = if manifold == Manifold::Unstable { eu } else { es };
        let dir = if manifold == Manifold::Unstable { 1.0 } else { -1.0 };
        let start = PhaseState::new(
            saddle.state.u + side * SEPARATRIX_OFFSET * e[0],
            saddle.state.v + side * SEPARATRIX_OFFSET * e[1],
        );
        let mut st = Stepper::new(params, start, 0.0, dir, budget.tol)?;
        let mut points = alloc::vec![start];
        let mut arc = 0.0;
        let mut armed = false;
        loop {
            let prev = st.state();
            st.step(dir * budget.max_time)?;
            let s = st.state();
            arc += hypot(s.u - prev.u, s.v - prev.v);
            points.push(s);
            if !armed && phase_distance(s, saddle.state) > 100.0 * RETURN_RADIUS {
                armed = true;
            }
            if armed {
                if let Some(t) = targets
                    .iter()
                    .chain(core::iter::once(saddle))
                    .find(|t| t.kind == Kind::Saddle && phase_distance(s, t.state) < RETURN_RADIUS)
                {
                    return Ok(SeparatrixBranch {
                        manifold,
                        side,
                        points,
                        end: BranchEnd::Saddle {
                            label: t.label,
                            at: t.state,
                        },
                    });
                }
            }
            if arc >= budget.max_arc || st.time().abs() >= budget.max_time {
                return Ok(SeparatrixBranch {
                    manifold,
                    side,
                    points,
                    end: BranchEnd::Budget,
                });
            }
        }
    };
    Ok([
        branch(Manifold::Unstable, 1.0)?,
        branch(Manifold::Unstable, -1.0)?,
        branch(Manifold::Stable, 1.0)?,
        branch(Manifold::Stable, -1.0)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibria::closed_form_equilibria;
    use crate::math::{cos, sin, PI};

    #[test]
    fn harmonic_oscillator_is_exact() {
        let f = FnField(|s: PhaseState| (s.v, -s.u));
        let tr = integrate_orbit(
            &f,
            PhaseState::new(1.0, 0.0),
            (0.0, 10.0),
            1e-12,
            &Sampling::Uniform(10),
        )
        .unwrap();
        for &(t, s) in &tr.points {
            assert!((s.u - cos(t)).abs() < 1e-9, "{t}");
            assert!((s.v + sin(t)).abs() < 1e-9, "{t}");
        }
        assert!(tr.energy_drift.is_none());
    }

    #[test]
    fn dense_output_is_accurate() {
        let f = FnField(|s: PhaseState| (s.v, -s.u));
        let times: Vec<f64> = (0..37).map(|k| 0.27 * k as f64).collect();
        let tr = integrate_orbit(
            &f,
            PhaseState::new(1.0, 0.0),
            (0.0, 10.0),
            1e-10,
            &Sampling::Times(times),
        )
        .unwrap();
        assert_eq!(tr.points.len(), 37);
        for &(t, s) in &tr.points {
            assert!((s.u - cos(t)).abs() < 1e-7);
        }
    }

    #[test]
    fn equilibrium_start_is_constant() {
        let p = ZoneParameters::reference(1.0, 0.0);
        let tr = integrate_orbit(&p, PhaseState::new(1.0, PI), (0.0, 50.0), 1e-10, &Sampling::Steps).unwrap();
        assert!(tr
            .points
            .iter()
            .all(|(_, s)| (s.u - 1.0).abs() < 1e-12 && (s.v - PI).abs() < 1e-12));
    }

    #[test]
    fn energy_is_conserved() {
        let p = ZoneParameters::reference(1.0, 0.0);
        let tr = integrate_orbit(&p, PhaseState::new(0.5, PI), (0.0, 100.0), 1e-10, &Sampling::Steps).unwrap();
        assert!(tr.energy_drift.unwrap() < 1e-8, "{:?}", tr.energy_drift);
    }

    #[test]
    fn backward_returns_to_start() {
        let p = ZoneParameters::reference(0.7, 1.2);
        let start = PhaseState::new(0.3, 1.0);
        let fw = integrate_orbit(&p, start, (0.0, 20.0), 1e-11, &Sampling::Steps).unwrap();
        let end = fw.last().unwrap();
        let bw = integrate_orbit(&p, end, (20.0, 0.0), 1e-11, &Sampling::Steps).unwrap();
        let back = bw.last().unwrap();
        assert!(phase_distance(back, start) < 1e-8, "{back}");
    }

    #[test]
    fn rejects_bad_tolerance_and_blows_up() {
        let p = ZoneParameters::reference(1.0, 0.0);
        assert!(integrate_orbit(&p, PhaseState::new(0.5, PI), (0.0, 1.0), 1e-2, &Sampling::Steps).is_err());
        let f = FnField(|s: PhaseState| (s.u * s.u, 0.0));
        assert!(matches!(
            integrate_orbit(&f, PhaseState::new(1.0, 0.0), (0.0, 2.0), 1e-8, &Sampling::Steps),
            Err(Error::Blowup { .. } | Error::StepUnderflow { .. })
        ));
    }

    #[test]
    fn separatrices_stay_on_level() {
        let p = ZoneParameters::reference(0.0, 1.0);
        let eqs = closed_form_equilibria(&p);
        for s in eqs.iter().filter(|e| e.is_saddle()) {
            let branches = trace_separatrices(&p, s, &eqs, SeparatrixBudget::default()).unwrap();
            for b in &branches {
                for q in &b.points {
                    assert!((eval_hamiltonian(&p, *q) - s.energy).abs() < 1e-7);
                }
            }
        }
    }

    #[test]
    fn homoclinic_loop_returns() {
        // one saddle on v = π and a center at (1, π): the saddle has a loop
        let p = ZoneParameters::reference(1.0, 0.0);
        let eqs = closed_form_equilibria(&p);
        let s = eqs.iter().find(|e| e.is_saddle()).unwrap();
        let br = trace_separatrices(&p, s, &eqs, SeparatrixBudget::default()).unwrap();
        let returned = br
            .iter()
            .filter(|b| {
                matches!(
                    b.end,
                    BranchEnd::Saddle {
                        label: Label::O2Minus,
                        ..
                    }
                )
            })
            .count();
        assert!(returned >= 2, "{:?}", br.iter().map(|b| b.end).collect::<Vec<_>>());
    }
}

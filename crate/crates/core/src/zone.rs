//! The averaged system of a degenerate (j = 2) resonance zone.
//!
//! In slow time and after the phase rescaling `p v -> v`, the zone dynamics is
//! the Hamiltonian system
//!
//! ```text
//! u' = (a + mu1 u) sin v
//! v' = p (b u^2 + mu2 u) + mu1 cos v
//! H(u, v) = p (mu2 u^2 / 2 + b u^3 / 3) + (a + mu1 u) cos v
//! ```
//!
//! The general second-approximation system (any degeneracy order, not
//! necessarily Hamiltonian) is represented by [`GeneralAveragedModel`].

use alloc::{string::ToString, sync::Arc, vec::Vec};
use core::fmt;

use crate::error::{Error, Result};
use crate::fourier::TrigSeries;
use crate::math::{cos, powf, powi, sin_cos, wrap_angle, TAU};

/// Coefficients of the two-parameter zone model.
///
/// `b3` is the effective quartic coefficient (the `b_3` Taylor coefficient
/// already multiplied by `eps^{1/3}`); it contributes `p b3 u^4 / 4` to the
/// Hamiltonian and is zero in the reference configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZoneParameters {
    pub a: f64,
    pub b: f64,
    pub p: u32,
    pub mu1: f64,
    pub mu2: f64,
    pub b3: f64,
}

impl ZoneParameters {
    pub fn new(a: f64, b: f64, p: u32, mu1: f64, mu2: f64) -> Result<Self> {
        let params = Self {
            a,
            b,
            p,
            mu1,
            mu2,
            b3: 0.0,
        };
        params.validate()?;
        Ok(params)
    }

    /// `a = 2, b = 1, p = 1`, the configuration of the reference diagram.
    pub fn reference(mu1: f64, mu2: f64) -> Self {
        Self {
            a: 2.0,
            b: 1.0,
            p: 1,
            mu1,
            mu2,
            b3: 0.0,
        }
    }

    pub fn with_mu(self, mu1: f64, mu2: f64) -> Self {
        Self { mu1, mu2, ..self }
    }

    pub fn with_b3(self, b3: f64) -> Self {
        Self { b3, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::InvalidParameter {
                name: "p",
                reason: "p >= 1".to_string(),
            });
        }
        if self.b == 0.0 {
            return Err(Error::InvalidParameter {
                name: "b",
                reason: "b != 0 (degeneracy order 2 needs a nonzero second derivative)".to_string(),
            });
        }
        for (name, x) in [
            ("a", self.a),
            ("b", self.b),
            ("mu1", self.mu1),
            ("mu2", self.mu2),
            ("b3", self.b3),
        ] {
            if !x.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    reason: "must be finite".to_string(),
                });
            }
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn pf(&self) -> f64 {
        f64::from(self.p)
    }
}

/// A point of the zone phase cylinder. `v` is kept unwrapped during
/// integration; [`PhaseState::normalized`] reduces it for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhaseState {
    pub u: f64,
    pub v: f64,
}

impl PhaseState {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn normalized(self) -> Self {
        Self {
            u: self.u,
            v: wrap_angle(self.v),
        }
    }
}

impl fmt::Display for PhaseState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.u, self.v)
    }
}

pub fn eval_hamiltonian(params: &ZoneParameters, state: PhaseState) -> f64 {
    let ZoneParameters { a, b, mu1, mu2, b3, .. } = *params;
    let u = state.u;
    let poly = mu2 * u * u / 2.0 + b * u * u * u / 3.0 + b3 * u * u * u * u / 4.0;
    params.pf() * poly + (a + mu1 * u) * cos(state.v)
}

/// `(du, dv) = (-dH/dv, dH/du)`.
pub fn eval_vector_field(params: &ZoneParameters, state: PhaseState) -> (f64, f64) {
    let ZoneParameters { a, b, mu1, mu2, b3, .. } = *params;
    let u = state.u;
    let (s, c) = sin_cos(state.v);
    let du = (a + mu1 * u) * s;
    let dv = params.pf() * (b * u * u + mu2 * u + b3 * u * u * u) + mu1 * c;
    (du, dv)
}

/// Jacobian `[[du_u, du_v], [dv_u, dv_v]]` of the zone field.
pub fn jacobian(params: &ZoneParameters, state: PhaseState) -> [[f64; 2]; 2] {
    let ZoneParameters { a, b, mu1, mu2, b3, .. } = *params;
    let u = state.u;
    let (s, c) = sin_cos(state.v);
    [
        [mu1 * s, (a + mu1 * u) * c],
        [params.pf() * (2.0 * b * u + mu2 + 3.0 * b3 * u * u), -mu1 * s],
    ]
}

/// Determinant of the Jacobian; the characteristic equation is
/// `lambda^2 + det = 0`, so negative values are saddles and positive values
/// centers.
pub fn jacobian_det(params: &ZoneParameters, state: PhaseState) -> f64 {
    let j = jacobian(params, state);
    j[0][0] * j[1][1] - j[0][1] * j[1][0]
}

/// Amplitudes of a single-harmonic Hamiltonian perturbation:
/// `A0 = a sin pv`, `P0 = c sin pv`, `Q0 = d cos pv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Harmonic {
    pub a: f64,
    pub c: f64,
    pub d: f64,
}

/// A 2π/p-periodic coefficient function of the general averaged system.
#[derive(Clone)]
pub enum PeriodicFunction {
    Zero,
    Callable(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
    Sampled(TrigSeries),
}

impl PeriodicFunction {
    pub fn callable<F>(f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::Callable(Arc::new(f))
    }

    /// Trigonometric interpolant through uniform samples on `[0, period)`.
    pub fn sampled(samples: &[f64], period: f64) -> Self {
        Self::Sampled(TrigSeries::from_samples(samples, period))
    }

    pub fn eval(&self, v: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Callable(f) => f(v),
            Self::Sampled(series) => series.eval(v),
        }
    }
}

impl fmt::Debug for PeriodicFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => f.write_str("Zero"),
            Self::Callable(_) => f.write_str("Callable(..)"),
            Self::Sampled(s) => f.debug_tuple("Sampled").field(&s.len()).finish(),
        }
    }
}

/// The autonomous second-approximation system in fast time,
/// valid in a zone of width `eps^s` around a resonance level.
#[derive(Debug, Clone)]
pub struct GeneralAveragedModel {
    pub j: u32,
    pub p: u32,
    pub bj: f64,
    pub bj1: f64,
    pub a0: PeriodicFunction,
    pub p0: PeriodicFunction,
    pub q0: PeriodicFunction,
    pub epsilon: f64,
}

impl GeneralAveragedModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        j: u32,
        p: u32,
        bj: f64,
        bj1: f64,
        epsilon: f64,
        a0: PeriodicFunction,
        p0: PeriodicFunction,
        q0: PeriodicFunction,
    ) -> Result<Self> {
        if j < 2 {
            return Err(Error::InvalidParameter {
                name: "j",
                reason: "degenerate zones need j >= 2".to_string(),
            });
        }
        if p == 0 {
            return Err(Error::InvalidParameter {
                name: "p",
                reason: "p >= 1".to_string(),
            });
        }
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidParameter {
                name: "epsilon",
                reason: "epsilon >= 0".to_string(),
            });
        }
        Ok(Self {
            j,
            p,
            bj,
            bj1,
            a0,
            p0,
            q0,
            epsilon,
        })
    }

    /// Zone-width exponent `s = 1 / (1 + j)`.
    pub fn s(&self) -> f64 {
        1.0 / (1.0 + f64::from(self.j))
    }

    pub fn period(&self) -> f64 {
        TAU / f64::from(self.p)
    }

    /// Largest deviation between `f(v)` and `f(v + 2π/p)` for the three
    /// coefficient functions over `n` sample points.
    pub fn periodicity_defect(&self, n: usize) -> f64 {
        let t = self.period();
        let mut worst: f64 = 0.0;
        for k in 0..n {
            let v = t * k as f64 / n as f64;
            for f in [&self.a0, &self.p0, &self.q0] {
                worst = worst.max((f.eval(v) - f.eval(v + t)).abs());
            }
        }
        worst
    }
}

/// Hamiltonian of the reduced harmonic system with optional deformation
/// coefficients `b_1 .. b_{j-1}`:
///
/// `bj u^{j+1}/(j+1) + (a/p) cos pv + eps^s ((c/p) u cos pv + bj1 u^{j+2}/(j+2))
///  + sum_k b_k u^{k+1}/(k+1)`.
pub fn eval_reduced_hamiltonian(
    model: &GeneralAveragedModel,
    harmonic: Harmonic,
    deformation: &[f64],
    state: PhaseState,
) -> Result<f64> {
    let p = f64::from(model.p);
    let pd = p * harmonic.d;
    if (harmonic.c - pd).abs() > 1e-12 * harmonic.c.abs().max(1.0) {
        return Err(Error::HamiltonianIdentity { c: harmonic.c, pd });
    }
    if deformation.len() + 1 > model.j as usize {
        return Err(Error::InvalidParameter {
            name: "deformation",
            reason: "at most j - 1 deformation coefficients".to_string(),
        });
    }
    let j = model.j as i32;
    let u = state.u;
    let cpv = cos(p * state.v);
    let eps_s = powf(model.epsilon, model.s());
    let mut h = model.bj * powi(u, j + 1) / f64::from(j + 1)
        + harmonic.a / p * cpv
        + eps_s * (harmonic.c / p * u * cpv + model.bj1 * powi(u, j + 2) / f64::from(j + 2));
    for (k, bk) in deformation.iter().enumerate() {
        let k = k as i32 + 1;
        h += bk * powi(u, k + 1) / f64::from(k + 1);
    }
    Ok(h)
}

/// Right-hand side of the general averaged system in fast time:
/// `u. = eps^{1-s} A0 + eps P0 u`, `v. = eps^{1-s} bj u^j + eps (bj1 u^{j+1} + Q0)`.
pub fn eval_general_field(model: &GeneralAveragedModel, state: PhaseState) -> Result<(f64, f64)> {
    let v = state.v;
    let a0 = model.a0.eval(v);
    let p0 = model.p0.eval(v);
    let q0 = model.q0.eval(v);
    for (what, x) in [("A0", a0), ("P0", p0), ("Q0", q0)] {
        if !x.is_finite() {
            return Err(Error::NonFinite { what, at: v });
        }
    }
    let eps = model.epsilon;
    let slow = powf(eps, 1.0 - model.s());
    let j = model.j as i32;
    let u = state.u;
    let du = slow * a0 + eps * p0 * u;
    let dv = slow * model.bj * powi(u, j) + eps * (model.bj1 * powi(u, j + 1) + q0);
    Ok((du, dv))
}

/// Helper for tests and diagnostics: the `(u, v)` field components on a set
/// of states.
pub fn sample_field(params: &ZoneParameters, states: &[PhaseState]) -> Vec<(f64, f64)> {
    states.iter().map(|&s| eval_vector_field(params, s)).collect()
}

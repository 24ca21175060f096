//! Resonance levels, degeneracy order and the averaged coefficients of the
//! second approximation.
//!
//! The perturbed system is taken in action-angle form,
//! `I. = eps F(I, theta, phi)`, `theta. = omega(I) + eps G(I, theta, phi)`,
//! `phi. = nu`. At a resonance `omega(I_pq) = q nu / p` the slow phase is
//! `v = theta - q phi / p`, and the averaged coefficients are
//!
//! ```text
//! A0(v) = 1/(2πp) ∫_0^{2πp} F(I_pq, v + q phi/p, phi) dphi
//! P0(v) = same with dF/dI,   Q0(v) = same with G.
//! ```

use alloc::{string::ToString, vec::Vec};

use crate::error::{Error, Result};
use crate::fourier::{project, spectral_derivative, TrigSeries};
use crate::math::{factorial, gcd, powf, TAU};
use crate::zone::{Harmonic, ZoneParameters};

/// Unperturbed frequency `omega(I)` on a closed action interval, together
/// with the forcing frequency `nu`.
#[derive(Debug, Clone, Copy)]
pub struct FrequencyProfile<W> {
    pub omega: W,
    pub i_min: f64,
    pub i_max: f64,
    pub nu: f64,
}

impl<W: Fn(f64) -> f64> FrequencyProfile<W> {
    pub fn new(omega: W, i_min: f64, i_max: f64, nu: f64) -> Result<Self> {
        if !(i_min < i_max) || !i_min.is_finite() || !i_max.is_finite() {
            return Err(Error::InvalidParameter {
                name: "I_range",
                reason: "need finite I_min < I_max".to_string(),
            });
        }
        if !(nu > 0.0) {
            return Err(Error::InvalidParameter {
                name: "nu",
                reason: "nu > 0".to_string(),
            });
        }
        Ok(Self {
            omega,
            i_min,
            i_max,
            nu,
        })
    }
}

/// A resonance level `omega(I_pq) = q nu / p` with its local Taylor data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonanceSpec {
    pub p: u32,
    pub q: u32,
    pub i_pq: f64,
    /// Degeneracy order: first nonvanishing derivative of omega.
    pub j: u32,
    /// `omega^(j)(I_pq) / j!`
    pub bj: f64,
    /// `omega^(j+1)(I_pq) / (j+1)!`
    pub bj1: f64,
}

impl ResonanceSpec {
    pub fn s(&self) -> f64 {
        1.0 / (1.0 + f64::from(self.j))
    }

    /// Half-width `eps^s` of the resonance zone (the constant in front is 1).
    pub fn zone_half_width(&self, epsilon: f64) -> f64 {
        powf(epsilon, self.s())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Degeneracy {
    pub j: u32,
    pub bj: f64,
    pub bj1: f64,
    /// Derivative threshold below which a derivative counts as zero.
    pub tol: f64,
}

/// Highest derivative order tried before giving up.
pub const MAX_DEGENERACY_ORDER: u32 = 4;

const DERIV_TOL: f64 = 1e-6;

fn binomial(n: u32, k: u32) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// k-th central difference quotient with spacing `h`: second order in `h`.
fn central_difference<W: Fn(f64) -> f64>(f: &W, x: f64, k: u32, h: f64) -> f64 {
    let half = f64::from(k) / 2.0;
    let mut acc = 0.0;
    for m in 0..=k {
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * binomial(k, m) * f(x + (half - f64::from(m)) * h);
    }
    acc / crate::math::powi(h, k as i32)
}

/// k-th derivative by central differences with two Richardson levels
/// (sixth order in the step).
fn derivative<W: Fn(f64) -> f64>(f: &W, x: f64, k: u32, h: f64) -> f64 {
    let d0 = central_difference(f, x, k, h);
    let d1 = central_difference(f, x, k, h / 2.0);
    let d2 = central_difference(f, x, k, h / 4.0);
    let r1 = (4.0 * d1 - d0) / 3.0;
    let r2 = (4.0 * d2 - d1) / 3.0;
    (16.0 * r2 - r1) / 15.0
}

pub fn degeneracy_order<W: Fn(f64) -> f64>(profile: &FrequencyProfile<W>, i0: f64) -> Result<Degeneracy> {
    let room = (i0 - profile.i_min).min(profile.i_max - i0);
    if !(room > 0.0) {
        return Err(Error::InvalidParameter {
            name: "I0",
            reason: "must be interior to I_range".to_string(),
        });
    }
    let omega = &profile.omega;
    let w0 = omega(i0);
    if !w0.is_finite() {
        return Err(Error::NonFinite { what: "omega", at: i0 });
    }
    let scale = i0.abs().max(1.0);
    let tol = DERIV_TOL * w0.abs().max(1.0);
    let deriv = |k: u32| -> Result<f64> {
        // the widest stencil (k/2) h must stay inside the range
        let h = (0.1 * scale).min(2.0 * room / f64::from(k));
        let d = derivative(omega, i0, k, h);
        if d.is_finite() {
            Ok(d)
        } else {
            Err(Error::NonFinite {
                what: "omega derivative",
                at: i0,
            })
        }
    };
    for k in 1..=MAX_DEGENERACY_ORDER {
        let dk = deriv(k)?;
        if dk.abs() >= tol {
            let dk1 = deriv(k + 1)?;
            return Ok(Degeneracy {
                j: k,
                bj: dk / factorial(k),
                bj1: dk1 / factorial(k + 1),
                tol,
            });
        }
    }
    Err(Error::DegeneracyTooHigh {
        at: i0,
        max_order: MAX_DEGENERACY_ORDER,
        tol,
    })
}

/// A root that could not be turned into a [`ResonanceSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScanIssue {
    pub p: u32,
    pub q: u32,
    pub i: f64,
    pub error: Error,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResonanceScan {
    pub levels: Vec<ResonanceSpec>,
    pub issues: Vec<ScanIssue>,
}

pub const SCAN_POINTS: usize = 4096;
const ROOT_TOL: f64 = 1e-12;

fn bisect<R: Fn(f64) -> f64>(r: &R, mut lo: f64, mut hi: f64) -> f64 {
    let mut rlo = r(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let rm = r(mid);
        if rm.abs() < ROOT_TOL || mid == lo || mid == hi {
            return mid;
        }
        if (rm > 0.0) == (rlo > 0.0) {
            lo = mid;
            rlo = rm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Golden-section minimum of `|r|` on `[lo, hi]`; used for tangential roots
/// where `r` touches zero without changing sign.
fn touch_point<R: Fn(f64) -> f64>(r: &R, mut lo: f64, mut hi: f64) -> f64 {
    let g = 0.5 * (crate::math::sqrt(5.0) - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (r(x1).abs(), r(x2).abs());
    for _ in 0..200 {
        if hi - lo <= 1e-15 * hi.abs().max(1.0) {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = r(x1).abs();
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = r(x2).abs();
        }
    }
    if f1 <= f2 {
        x1
    } else {
        x2
    }
}

/// All resonance levels `omega(I) = q nu / p` for co-prime `p <= p_max`,
/// `q <= q_max`. Simple roots are found from sign changes on a
/// [`SCAN_POINTS`] grid and refined by bisection; touching roots (the
/// degenerate case) from local minima of `|omega - q nu / p|`.
pub fn find_resonance_levels<W: Fn(f64) -> f64>(
    profile: &FrequencyProfile<W>,
    p_max: u32,
    q_max: u32,
) -> Result<ResonanceScan> {
    if p_max == 0 || q_max == 0 {
        return Err(Error::InvalidParameter {
            name: "p_max/q_max",
            reason: "both must be >= 1".to_string(),
        });
    }
    let n = SCAN_POINTS;
    let width = profile.i_max - profile.i_min;
    let grid: Vec<f64> = (0..=n).map(|k| profile.i_min + width * k as f64 / n as f64).collect();
    let omegas: Vec<f64> = grid.iter().map(|&i| (profile.omega)(i)).collect();
    if let Some(k) = omegas.iter().position(|w| !w.is_finite()) {
        return Err(Error::NonFinite {
            what: "omega",
            at: grid[k],
        });
    }

    let mut scan = ResonanceScan::default();
    for p in 1..=p_max {
        for q in 1..=q_max {
            if gcd(p, q) != 1 {
                continue;
            }
            let target = f64::from(q) * profile.nu / f64::from(p);
            let r = |i: f64| (profile.omega)(i) - target;
            let res: Vec<f64> = omegas.iter().map(|w| w - target).collect();
            let mut roots: Vec<f64> = Vec::new();
            for k in 0..n {
                let (a, b) = (res[k], res[k + 1]);
                if a == 0.0 {
                    roots.push(grid[k]);
                } else if b != 0.0 && (a > 0.0) != (b > 0.0) {
                    roots.push(bisect(&r, grid[k], grid[k + 1]));
                }
            }
            if res[n] == 0.0 {
                roots.push(grid[n]);
            }
            for k in 1..n {
                let (a, b, c) = (res[k - 1], res[k], res[k + 1]);
                let same_side = (a > 0.0) == (b > 0.0) && (b > 0.0) == (c > 0.0);
                if b != 0.0 && same_side && b.abs() <= a.abs() && b.abs() <= c.abs() {
                    let x = touch_point(&r, grid[k - 1], grid[k + 1]);
                    if r(x).abs() < ROOT_TOL {
                        roots.push(x);
                    }
                }
            }
            roots.sort_by(f64::total_cmp);
            roots.dedup_by(|x, y| (*x - *y).abs() < 1e-9 * width.max(1.0));

            for i in roots {
                if i <= profile.i_min || i >= profile.i_max {
                    scan.issues.push(ScanIssue {
                        p,
                        q,
                        i,
                        error: Error::InvalidParameter {
                            name: "I_pq",
                            reason: "root on the boundary of I_range".to_string(),
                        },
                    });
                    continue;
                }
                match degeneracy_order(profile, i) {
                    Ok(d) => scan.levels.push(ResonanceSpec {
                        p,
                        q,
                        i_pq: i,
                        j: d.j,
                        bj: d.bj,
                        bj1: d.bj1,
                    }),
                    Err(error) => scan.issues.push(ScanIssue { p, q, i, error }),
                }
            }
        }
    }
    Ok(scan)
}

/// Averaged coefficients sampled on a uniform grid over one period `2π/p`.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedCoefficients {
    pub p: u32,
    pub v_grid: Vec<f64>,
    pub a0: Vec<f64>,
    pub p0: Vec<f64>,
    pub q0: Vec<f64>,
    pub b0: f64,
    pub b1: f64,
    pub a0_tilde: Vec<f64>,
    pub p0_tilde: Vec<f64>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

impl AveragedCoefficients {
    /// Assembles coefficients from samples on the uniform grid of
    /// `[0, 2π/p)`; the means and oscillating parts are derived here.
    pub fn from_samples(p: u32, a0: Vec<f64>, p0: Vec<f64>, q0: Vec<f64>) -> Result<Self> {
        let n = a0.len();
        if p == 0 {
            return Err(Error::InvalidParameter {
                name: "p",
                reason: "p >= 1".to_string(),
            });
        }
        if n == 0 || p0.len() != n || q0.len() != n {
            return Err(Error::InvalidParameter {
                name: "samples",
                reason: "A0, P0, Q0 must be nonempty and of equal length".to_string(),
            });
        }
        let period = TAU / f64::from(p);
        let v_grid = (0..n).map(|k| period * k as f64 / n as f64).collect();
        let b0 = mean(&a0);
        let b1 = mean(&p0);
        let a0_tilde = a0.iter().map(|x| x - b0).collect();
        let p0_tilde = p0.iter().map(|x| x - b1).collect();
        Ok(Self {
            p,
            v_grid,
            a0,
            p0,
            q0,
            b0,
            b1,
            a0_tilde,
            p0_tilde,
        })
    }

    /// Builds coefficients by sampling three functions of `v`.
    pub fn from_fns<A, P, Q>(p: u32, n: usize, a0: A, p0: P, q0: Q) -> Result<Self>
    where
        A: Fn(f64) -> f64,
        P: Fn(f64) -> f64,
        Q: Fn(f64) -> f64,
    {
        let period = TAU / f64::from(p.max(1));
        let v: Vec<f64> = (0..n).map(|k| period * k as f64 / n as f64).collect();
        Self::from_samples(
            p,
            v.iter().map(|&x| a0(x)).collect(),
            v.iter().map(|&x| p0(x)).collect(),
            v.iter().map(|&x| q0(x)).collect(),
        )
    }

    pub fn period(&self) -> f64 {
        TAU / f64::from(self.p)
    }

    pub fn len(&self) -> usize {
        self.v_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v_grid.is_empty()
    }
}

/// The two perturbation functions `F` and `G` of the action-angle system.
#[derive(Debug, Clone, Copy)]
pub struct PerturbationSpec<F, G> {
    pub f: F,
    pub g: G,
}

pub fn compute_averaged_coefficients<F, G>(
    pert: &PerturbationSpec<F, G>,
    spec: &ResonanceSpec,
    n_nodes: usize,
) -> Result<AveragedCoefficients>
where
    F: Fn(f64, f64, f64) -> f64,
    G: Fn(f64, f64, f64) -> f64,
{
    if n_nodes < 64 || !n_nodes.is_multiple_of(2) {
        return Err(Error::InvalidParameter {
            name: "n_nodes",
            reason: "need an even number of nodes >= 64".to_string(),
        });
    }
    if spec.p == 0 || spec.q == 0 {
        return Err(Error::InvalidParameter {
            name: "p/q",
            reason: "p, q >= 1".to_string(),
        });
    }
    let p = f64::from(spec.p);
    let ratio = f64::from(spec.q) / p;
    let i0 = spec.i_pq;
    let h = 1e-5 * i0.abs().max(1.0);
    let period = TAU / p;
    let span = TAU * p;
    let phis: Vec<f64> = (0..n_nodes).map(|k| span * k as f64 / n_nodes as f64).collect();

    let n = n_nodes;
    let mut a0 = Vec::with_capacity(n);
    let mut p0 = Vec::with_capacity(n);
    let mut q0 = Vec::with_capacity(n);
    for k in 0..n {
        let v = period * k as f64 / n as f64;
        let (mut sa, mut sp, mut sq) = (0.0, 0.0, 0.0);
        for &phi in &phis {
            let theta = v + ratio * phi;
            let f = (pert.f)(i0, theta, phi);
            let fp = (pert.f)(i0 + h, theta, phi);
            let fm = (pert.f)(i0 - h, theta, phi);
            let g = (pert.g)(i0, theta, phi);
            if !(f.is_finite() && fp.is_finite() && fm.is_finite()) {
                return Err(Error::NonFinite { what: "F", at: v });
            }
            if !g.is_finite() {
                return Err(Error::NonFinite { what: "G", at: v });
            }
            sa += f;
            sp += (fp - fm) / (2.0 * h);
            sq += g;
        }
        a0.push(sa / n as f64);
        p0.push(sp / n as f64);
        q0.push(sq / n as f64);
    }
    AveragedCoefficients::from_samples(spec.p, a0, p0, q0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResonanceClass {
    /// `A0` has no zeros: orbits pass through the zone.
    Passable,
    /// Simple zeros and nonzero mean.
    PartiallyPassable,
    /// Zero mean of `A0`.
    NonPassable,
    /// A zero of `A0` is not simple at grid resolution.
    Ambiguous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub class: ResonanceClass,
    /// Zeros of `A0` in `[0, 2π/p)`.
    pub roots: Vec<f64>,
}

/// `|B0|` below this counts as zero mean.
pub const B0_TOL: f64 = 1e-8;
const SCAN_PER_PERIOD: usize = 1024;

pub fn classify_resonance(coeffs: &AveragedCoefficients) -> Classification {
    let period = coeffs.period();
    let series = TrigSeries::from_samples(&coeffs.a0, period);
    let n = SCAN_PER_PERIOD;
    let xs: Vec<f64> = (0..=n).map(|k| period * k as f64 / n as f64).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| series.eval(x)).collect();
    let lo = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale = lo.abs().max(hi.abs()).max(1e-300);

    if lo > 0.0 || hi < 0.0 {
        return Classification {
            class: ResonanceClass::Passable,
            roots: Vec::new(),
        };
    }

    let f = |x: f64| series.eval(x);
    let mut roots = Vec::new();
    for k in 0..n {
        let (a, b) = (ys[k], ys[k + 1]);
        if a == 0.0 {
            roots.push(xs[k]);
        } else if b != 0.0 && (a > 0.0) != (b > 0.0) {
            roots.push(bisect(&f, xs[k], xs[k + 1]));
        }
    }

    if coeffs.b0.abs() < B0_TOL {
        return Classification {
            class: ResonanceClass::NonPassable,
            roots,
        };
    }

    // a simple zero has a derivative well above the discretisation noise;
    // a touching zero shows up as a near-zero extremum without a sign change
    let slope_floor = 1e-6 * scale / period;
    let tangent_root = roots.iter().any(|&x| series.eval_derivative(x).abs() < slope_floor);
    let touching = (1..n).any(|k| {
        let (a, b, c) = (ys[k - 1], ys[k], ys[k + 1]);
        let extremum = (b.abs() <= a.abs()) && (b.abs() <= c.abs());
        extremum && (a > 0.0) == (c > 0.0) && b.abs() < 1e-6 * scale && {
            let x = touch_point(&f, xs[k - 1], xs[k + 1]);
            f(x).abs() < 1e-6 * scale && (f(x) > 0.0) == (a > 0.0)
        }
    });
    let class = if tangent_root || touching || roots.is_empty() {
        ResonanceClass::Ambiguous
    } else {
        ResonanceClass::PartiallyPassable
    };
    Classification { class, roots }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityReport {
    /// `max |P0 + dQ0/dv|` over the grid.
    pub identity_residual: f64,
    pub b0: f64,
    pub b1: f64,
    pub tol: f64,
}

impl IdentityReport {
    pub fn identity_holds(&self) -> bool {
        self.identity_residual < self.tol
    }

    pub fn passed(&self) -> bool {
        self.identity_holds() && self.b0.abs() < self.tol && self.b1.abs() < self.tol
    }
}

pub const IDENTITY_TOL: f64 = 1e-8;

/// Residuals of the identities that hold for Hamiltonian perturbations:
/// `P0 + dQ0/dv = 0` and `B0 = B1 = 0`. The derivative is spectral.
pub fn verify_hamiltonian_identities(coeffs: &AveragedCoefficients) -> IdentityReport {
    let dq = spectral_derivative(&coeffs.q0, coeffs.period());
    let identity_residual = coeffs
        .p0
        .iter()
        .zip(&dq)
        .map(|(p, d)| (p + d).abs())
        .fold(0.0, f64::max);
    IdentityReport {
        identity_residual,
        b0: coeffs.b0,
        b1: coeffs.b1,
        tol: IDENTITY_TOL,
    }
}

const SINGLE_MODE_RATIO: f64 = 1e-8;
const SINGLE_MODE_FLOOR: f64 = 1e-12;

/// `(cos, sin)` amplitude of the fundamental of a `2π/p`-periodic series and
/// an error if any other content exceeds the single-mode threshold.
fn single_mode(series_name: &'static str, samples: &[f64], period: f64, p: u32, want_sin: bool) -> Result<f64> {
    let series = TrigSeries::from_samples(samples, period);
    let (c, s) = project(samples, period, 1);
    let (dominant, stray) = if want_sin { (s, c) } else { (c, s) };
    let off = crate::math::sqrt(series.off_mode_energy(1) + stray * stray + series.mean() * series.mean());
    if off > SINGLE_MODE_RATIO * dominant.abs() && off > SINGLE_MODE_FLOOR {
        return Err(Error::NotSingleMode {
            series: series_name,
            mode: p,
            ratio: off / dominant.abs().max(f64::MIN_POSITIVE),
        });
    }
    Ok(dominant)
}

/// Reduces a harmonic Hamiltonian case (`q = 1`, `j = 2`) to the zone model.
///
/// `A0~ = a sin pv`, `P0~ = c sin pv`, `Q0 = d cos pv` are extracted by
/// Fourier projection; `mu1 = eps^{1/3} c` and `mu2` is the caller-supplied
/// deformation coefficient `b_1`.
pub fn harmonic_reduction(
    coeffs: &AveragedCoefficients,
    spec: &ResonanceSpec,
    epsilon: f64,
    mu2: f64,
) -> Result<(ZoneParameters, Harmonic)> {
    if spec.q != 1 {
        return Err(Error::UnsupportedResonance { what: "q = 1" });
    }
    if spec.j != 2 {
        return Err(Error::UnsupportedResonance {
            what: "degeneracy order j = 2",
        });
    }
    if spec.p != coeffs.p {
        return Err(Error::InvalidParameter {
            name: "p",
            reason: "resonance and coefficients disagree on p".to_string(),
        });
    }
    let period = coeffs.period();
    let a = single_mode("A0", &coeffs.a0_tilde, period, spec.p, true)?;
    let c = single_mode("P0", &coeffs.p0_tilde, period, spec.p, true)?;
    let d = single_mode("Q0", &coeffs.q0, period, spec.p, false)?;
    let pd = f64::from(spec.p) * d;
    if (c - pd).abs() > 1e-8 * c.abs().max(1.0) {
        return Err(Error::HamiltonianIdentity { c, pd });
    }
    let params = ZoneParameters::new(a, spec.bj, spec.p, powf(epsilon, 1.0 / 3.0) * c, mu2)?;
    Ok((params, Harmonic { a, c, d }))
}

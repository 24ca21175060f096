use alloc::string::String;

use crate::equilibria::Label;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite value while evaluating {what} at {at}")]
    NonFinite { what: &'static str, at: f64 },

    #[error("no degeneracy order j <= {max_order} found at I = {at} (derivative tolerance {tol:e})")]
    DegeneracyTooHigh { at: f64, max_order: u32, tol: f64 },

    #[error("Hamiltonian identity c = p*d violated: c = {c}, p*d = {pd}")]
    HamiltonianIdentity { c: f64, pd: f64 },

    #[error("harmonic reduction needs {what}")]
    UnsupportedResonance { what: &'static str },

    #[error("{series} is not dominated by harmonic {mode}: off-mode ratio {ratio:e}")]
    NotSingleMode {
        series: &'static str,
        mode: u32,
        ratio: f64,
    },

    #[error("Newton iteration did not converge in {steps} steps (residual {residual:e})")]
    NoConvergence { steps: usize, residual: f64 },

    #[error("singular Jacobian: Newton step of size {step:e}")]
    SingularJacobian { step: f64 },

    #[error("path touches curve {curve} near t = {t} without crossing it")]
    TangentialCrossing { curve: &'static str, t: f64 },

    #[error("path endpoint lies on curve {curve}")]
    EndpointOnCurve { curve: &'static str },

    #[error("saddle {0} does not exist at these parameters")]
    MissingSaddle(Label),

    #[error("reconnection residual has no sign change in the bracket at mu1 = {mu1}")]
    NoSignChange { mu1: f64 },

    #[error("parameters lie within the margin of curve {curve}")]
    OnCurve { curve: &'static str },

    #[error("signatures differ in a way no single crossing explains")]
    InconsistentTransition,

    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("orbit blew up at t = {t} (|u| > 1e6)")]
    Blowup { t: f64 },

    #[error("singular denominator 1 - alpha*mu1*sin v at iterate {index}")]
    SingularDenominator { index: usize },

    #[error("fixed point is not a saddle of the map (multipliers are not real)")]
    NonrealMultipliers,
}

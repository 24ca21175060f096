//! Averaged dynamics of degenerate resonance zones.
//!
//! The crate covers the whole numerical pipeline for a resonance zone of a
//! nearly integrable system with one and a half degrees of freedom:
//!
//! - [`averaging`]: resonance levels, degeneracy order, averaged coefficients
//!   of the second approximation, resonance classification and reduction of
//!   harmonic perturbations to the two-parameter zone model;
//! - [`zone`]: the zone Hamiltonian and its vector field;
//! - [`equilibria`]: closed-form equilibria, Newton refinement and the local
//!   bifurcation curves;
//! - [`reconnection`]: saddle energies, reconnection curves, region
//!   signatures and the parameter-plane diagram;
//! - [`flow`] and [`portrait`]: orbit integration, separatrices and level-set
//!   phase portraits;
//! - [`maps`]: the non-monotone standard map and the conservative Euler map
//!   of the cylinder.
//!
//! Everything here is `no_std` with `alloc`; file formats and the command
//! line live in the companion `reszone` crate.
#![cfg_attr(not(any(test, feature = "std")), no_std)]
#![deny(unsafe_code)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod averaging;
pub mod equilibria;
pub mod error;
pub mod flow;
pub mod fourier;
pub mod maps;
pub mod math;
pub mod portrait;
pub mod reconnection;
pub mod zone;

pub use error::{Error, Result};
pub use zone::{PhaseState, ZoneParameters};

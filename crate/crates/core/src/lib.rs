//! Pseudo-spectral toolkit for kinetic equations built around the time-averaged
//! negative-order multiplier `M(t, T, η, ξ)`.
//!
//! The crate is organized bottom-up:
//!
//! * [`msymbol`]: closed-form symbols `M`, `M_n`, the transport commutator and
//!   symbol-level property checks.
//! * [`dyadic`]: the radial partition of unity `θ_k` on dyadic velocity rings.
//! * [`spectral`]: phase-space grids, transforms, exact free streaming,
//!   mollifiers, moments and snapshot I/O.
//! * [`landau`]: Landau–Coulomb coefficient fields and the two collision
//!   right-hand sides.
//! * [`solver`]: split-step time integration with conservation monitors.
//! * [`harness`]: twin-run stability experiments and M-weighted energies.

pub mod dyadic;
pub mod error;
mod fft;
pub mod harness;
pub mod landau;
pub mod msymbol;
pub mod quad;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};

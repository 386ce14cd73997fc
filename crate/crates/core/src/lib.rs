//! Numerical laboratory for the quantum delta-kicked accelerator.
//!
//! Under rational resonance conditions the one-period evolution operator of
//! the kicked, falling particle reduces to a finite unitary Bloch block.
//! This crate builds and diagonalizes that block ([`floquet`]), renders
//! quasi-eigenstates as Husimi functions ([`phasespace`]), iterates the
//! classical and pseudo-classical kicked maps ([`classical`]) and propagates
//! plane-wave ensembles kick by kick ([`evolve`]).
//!
//! Natural units are used throughout: ħ = m = G = 1, so the half-Talbot time
//! is 2π and momenta are measured in units of ħG.

pub mod classical;
pub mod cli;
mod error;
pub mod evolve;
pub mod floquet;
pub mod output;
pub mod params;
pub mod phasespace;
pub mod special;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

//! Equilibrium statistics of isolated quantum systems held in pure states.
//!
//! The crate is organized around the energy eigenbasis of a finite Hermitian
//! Hamiltonian. Populations `P_n = |c_n|^2` are constants of motion; phases
//! carry all time dependence. On top of that split sit:
//!
//! - [`spectra`]: spin-chain Hamiltonians, dense diagonalization,
//!   non-resonance certification of the spectrum.
//! - [`states`]: populations, pure states, density matrices, observables, and
//!   the dephasing (time-averaging) maps between them.
//! - [`ensembles`]: random-pure-state ensembles on the population simplex,
//!   with exact samplers, an MCMC sampler for the fixed-energy case, and
//!   factorized approximations.
//! - [`dynamics`]: phase propagation, observable time series, and empirical
//!   Fourier probes of phase-space uniformity.
//! - [`thermo`]: typicality statistics, entropy-vs-energy state functions,
//!   temperature extraction, and a requirement scorecard.
//! - [`export`]: plain CSV writers/readers for the core types.
//!
//! Units: `hbar = 1` and `k_B = 1` throughout. Entropy is dimensionless,
//! temperature carries energy units.

// `!(x > 0.0)` guards are written that way on purpose: they reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod ensembles;
mod error;
pub mod export;
pub mod interp;
pub mod linalg;
pub mod par;
pub mod rng;
pub mod spectra;
pub mod states;
pub mod thermo;
pub mod tol;

pub use error::{Error, Result};

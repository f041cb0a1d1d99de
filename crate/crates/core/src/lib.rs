//! Coherence-corrected heat and work fluxes for quantum systems under
//! time-dependent driving.
//!
//! The crate is organised bottom-up:
//!
//! * [`linalg`] dense complex operators, states and density matrices;
//! * [`angular`] angular-momentum operators and Wigner small-d algebra;
//! * [`spectra`] continuity-aligned instantaneous eigenframes, transition
//!   elements and nonadiabatic couplings;
//! * [`dynamics`] Liouville-von Neumann and GKSL propagation;
//! * [`models`] the closed-form rotating-field spin models;
//! * [`thermo`] the four-term energy-rate decomposition, heat/work ledgers
//!   and the adiabatic, isochoric and isothermal processes;
//! * [`scenario`] the declarative scenario runner behind the
//!   `coherent-flux` binary.
//!
//! All internal computations use natural units with `hbar = k_B = 1`.
//! [`units::Units`] rescales energies on output.

// `!(x > 0.0)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod angular;
pub mod dynamics;
mod error;
pub mod linalg;
pub mod models;
pub mod quadrature;
pub mod scenario;
pub mod spectra;
pub mod thermo;
pub mod units;

pub use error::{Error, Result};
pub use num_complex::Complex64;

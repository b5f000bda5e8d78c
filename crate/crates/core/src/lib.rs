//! Simulation library for comparing the energetic cost of finite-time
//! adiabatic control protocols.
//!
//! Three models are covered:
//!
//! * a Landau-Zener spin driven through an avoided crossing ([`landau_zener`]),
//!   controlled by counterdiabatic (CD), local counterdiabatic (LCD),
//!   bang-off-bang (BOB) and Fourier optimal-control (OC) protocols;
//! * a thermal parametric harmonic oscillator ([`oscillator`]), controlled by
//!   CD, LCD and invariant-based inverse engineering (IE);
//! * the Jaynes-Cummings model ([`jaynes_cummings`]), decomposed into
//!   Landau-Zener-like blocks of fixed excitation number.
//!
//! Two-level dynamics, spectra and the Frobenius-norm cost are shared through
//! [`two_level`], scalar control schedules live in [`ramp`], and [`runner`]
//! turns all of it into reproducible CSV/JSON experiment output.

// `!(x > 0.0)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod jaynes_cummings;
pub mod landau_zener;
pub mod numeric;
pub mod oc;
pub mod optimize;
pub mod oscillator;
pub mod ramp;
pub mod runner;
pub mod two_level;

pub use error::{Error, Result};
pub use ramp::{BobPulse, FourierTerm, Ramp, RampKind, RampPoint};
pub use two_level::{PauliCoeffs, PauliSchedule, QubitState, QubitTrajectory};

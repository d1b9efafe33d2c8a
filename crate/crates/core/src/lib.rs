//! Feedback laser cooling of polarizable particles.
//!
//! An atom moving through a standing-wave resonator mode detunes the cavity
//! and modulates the transmitted power. Feeding that signal back onto the
//! input power through a loop filter `H(s)` produces a velocity-dependent
//! force whose sign and shape are set entirely by the loop gain. This crate
//! provides:
//!
//! * [`lti`]: rational loop gains, frequency response and closed-loop stability.
//! * [`optics`]: cavity, atom and coupling parameters, cavity transmission.
//! * [`force`]: steady-state closed-loop response and the cooling force.
//! * [`noise`]: shot, detection and thermal noise spectra, heating rates and
//!   the differentiator temperature limit.
//! * [`ensemble`]: stochastic-cooling rates for thermal samples.
//! * [`sim`]: a time-domain Langevin simulator used to cross-check all of the
//!   above.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constants;
pub mod ensemble;
mod error;
pub mod force;
pub mod lti;
pub mod noise;
pub mod optics;
pub mod quadrature;
pub mod sim;

pub use error::{Error, Result};
pub use lti::{FrequencyResponse, LoopTag, RationalTransferFunction, StabilityReport};

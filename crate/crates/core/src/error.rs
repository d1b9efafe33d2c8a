use num_complex::Complex64;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("transfer function has a pole on the imaginary axis at omega = {omega}")]
    PoleOnAxis { omega: f64 },

    #[error("invalid transfer function: {0}")]
    InvalidTransferFunction(String),

    #[error("characteristic polynomial 1 + H(s) is identically zero")]
    DegeneratePolynomial,

    #[error("unknown loop tag `{0}` (expected a, b, c or d)")]
    UnknownLoopTag(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("closed loop is not stable; offending poles: {}", format_poles(.poles))]
    UnstableLoop { poles: Vec<Complex64> },

    #[error("improper transfer function (relative degree {excess}) needs a roll-off corner to be realized")]
    ImproperWithoutRolloff { excess: usize },

    #[error("force curve is not smooth at v = 0 (two-level difference estimates disagree by {rel_gap:.3e})")]
    NonSmooth { rel_gap: f64 },

    #[error(
        "quadrature did not converge: achieved relative change {achieved:.3e} with {nodes} nodes"
    )]
    Quadrature { achieved: f64, nodes: usize },

    #[error("simulation unstable in trajectory {trajectory} at step {step}: |eps| = {value:.3e} exceeds bound {bound}")]
    SimInstability {
        trajectory: usize,
        step: u64,
        value: f64,
        bound: f64,
    },

    #[error("velocity distribution not stationary after burn-in: first-half {first:.4e} K, second-half {second:.4e} K (difference {sigmas:.1} standard errors)")]
    NonStationary {
        first: f64,
        second: f64,
        sigmas: f64,
    },

    #[error("series too short for spectral estimate: {len} samples, need at least {min}")]
    SeriesTooShort { len: usize, min: usize },

    #[error("cannot combine spectra: {0}")]
    SpectrumMismatch(String),
}

fn format_poles(poles: &[Complex64]) -> String {
    poles
        .iter()
        .map(|p| format!("{:.6e}{:+.6e}i", p.re, p.im))
        .collect::<Vec<_>>()
        .join(", ")
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

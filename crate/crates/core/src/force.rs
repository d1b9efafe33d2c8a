//! Closed-loop steady state and the velocity-dependent cooling force.
//!
//! An atom at constant velocity `v` modulates the intracavity intensity at the
//! Doppler frequency `2kv`. With the loop closed, the steady-state modulation
//! has an in-phase and a quadrature part; only the quadrature part does work
//! against the unperturbed force `2kU0 sin 2kvt`, giving
//! `f(v) = ħkηΓsc · r·H2(2kv) / |1 + H(2ikv)|²`.
//!
//! Force values are lowest order in `U0/(mv²/2)`; staying in that regime is up
//! to the caller. Negative `f·v` means cooling.
//!
//! The maximum of the differentiator force is `ħkηΓsc/2` at `v = u`; that is
//! what the closed form gives, and it is what this module returns.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::HBAR;
use crate::lti::RationalTransferFunction;
use crate::{Error, Result};

/// Finite-difference step for the friction coefficient, in units of `u`.
const FRICTION_STEP: f64 = 1e-4;
/// Two-level difference estimates farther apart than this mean a kink at 0.
const FRICTION_SMOOTHNESS: f64 = 1e-2;

/// The two quadratures of the steady-state intensity modulation
/// `ε(t) = a_cos·cos 2kvt + a_sin·sin 2kvt`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quadratures {
    pub a_cos: f64,
    pub a_sin: f64,
}

/// Light and coupling parameters that scale the force.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForceParams {
    /// Resonator slope.
    pub r: f64,
    pub eta: f64,
    /// Free-space scattering rate, 1/s.
    pub gamma_sc: f64,
    /// Wavenumber, 1/m.
    pub k: f64,
}

impl ForceParams {
    /// `ħkηΓsc`, the force unit.
    pub fn force_unit(&self) -> f64 {
        HBAR * self.k * self.eta * self.gamma_sc
    }
}

/// Whether curve-level operations insist on a stable loop.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LoopGuard {
    #[default]
    RequireStable,
    /// Evaluate the formulas for an unstable loop anyway.
    AnalysisOnly,
}

impl LoopGuard {
    fn check(self, h: &RationalTransferFunction) -> Result<()> {
        match self {
            LoopGuard::RequireStable => h.require_stable().map(|_| ()),
            LoopGuard::AnalysisOnly => Ok(()),
        }
    }
}

/// Sampled force curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForceCurve {
    /// Strictly increasing; m/s, or `v/u` when normalized.
    pub velocities: Vec<f64>,
    /// Newtons, or `f/(ħkηΓsc)` when normalized.
    pub forces: Vec<f64>,
    pub loop_label: String,
    pub normalized: bool,
    pub normalization: Normalization,
}

/// Scales that convert a normalized curve back to physical units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    /// Velocity unit `u`, m/s.
    pub u: f64,
    /// `ηΓsc`, 1/s.
    pub eta_gamma_sc: f64,
    pub k: f64,
}

impl ForceCurve {
    /// CSV with header `v,f,loop,normalized`; floats in shortest
    /// round-trip form.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("v,f,loop,normalized\n");
        for (v, f) in self.velocities.iter().zip(&self.forces) {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                fmt_f64(*v),
                fmt_f64(*f),
                self.loop_label,
                self.normalized
            );
        }
        out
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 {
        "0".to_string()
    } else if (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// Steady-state quadratures at velocity `v`, evaluating `H` at `ω = 2kv`.
/// Assumes a stable loop.
pub fn steady_state_quadratures(
    h: &RationalTransferFunction,
    r: f64,
    zeta: f64,
    k: f64,
    v: f64,
) -> Result<Quadratures> {
    let resp = h.eval(2.0 * k * v)?;
    let scale = r * zeta / resp.closed_loop_mag_sq;
    Ok(Quadratures {
        a_cos: scale * (1.0 + resp.h1),
        a_sin: scale * resp.h2,
    })
}

/// Cooling force at velocity `v`, N. Assumes a stable loop.
pub fn force(h: &RationalTransferFunction, p: &ForceParams, v: f64) -> Result<f64> {
    let resp = h.eval(2.0 * p.k * v)?;
    Ok(p.force_unit() * p.r * resp.quadrature_fraction())
}

/// Closed form for the differentiator `H = iω/(2ku)` at `r = −1`:
/// `f = −ħkηΓsc·uv/(u² + v²)`.
pub fn force_differentiator(eta: f64, gamma_sc: f64, k: f64, u: f64, v: f64) -> Result<f64> {
    if !(u > 0.0) {
        return Err(Error::param("u", "unity-gain velocity must be positive"));
    }
    Ok(-HBAR * k * eta * gamma_sc * u * v / (u * u + v * v))
}

/// Samples [`force`] on `v_grid`. Stability is checked once for the whole
/// curve. With `normalized`, velocities are reported as `v/u` and forces as
/// `f/(ħkηΓsc)`.
pub fn force_curve(
    h: &RationalTransferFunction,
    p: &ForceParams,
    u: f64,
    v_grid: &[f64],
    normalized: bool,
    guard: LoopGuard,
) -> Result<ForceCurve> {
    if !(u > 0.0 && u.is_finite()) {
        return Err(Error::param("u", "must be positive and finite"));
    }
    if v_grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::param("v_grid", "velocities must be finite"));
    }
    if v_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("v_grid", "must be strictly increasing"));
    }
    guard.check(h)?;
    let forces = v_grid
        .par_iter()
        .map(|&v| force(h, p, v))
        .collect::<Result<Vec<_>>>()?;
    let unit = p.force_unit();
    let (velocities, forces) = if normalized {
        (
            v_grid.iter().map(|v| v / u).collect(),
            forces.iter().map(|f| f / unit).collect(),
        )
    } else {
        (v_grid.to_vec(), forces)
    };
    Ok(ForceCurve {
        velocities,
        forces,
        loop_label: h.label().to_string(),
        normalized,
        normalization: Normalization {
            u,
            eta_gamma_sc: p.eta * p.gamma_sc,
            k: p.k,
        },
    })
}

/// Normalized force `r·H2(ν)/|1 + H(iν)|²` for a loop written in the
/// normalized variable `s = iv/u`, sampled at `ν = v/u`.
pub fn force_curve_normalized(
    h_normalized: &RationalTransferFunction,
    r: f64,
    nu_grid: &[f64],
    guard: LoopGuard,
) -> Result<ForceCurve> {
    // With k = 1/2 and u = 1 the physical Doppler frequency 2kv equals ν.
    let p = ForceParams {
        r,
        eta: 1.0,
        gamma_sc: 1.0 / (HBAR * 0.5),
        k: 0.5,
    };
    let mut curve = force_curve(h_normalized, &p, 1.0, nu_grid, true, guard)?;
    curve.normalization = Normalization {
        u: 1.0,
        eta_gamma_sc: f64::NAN,
        k: f64::NAN,
    };
    Ok(curve)
}

/// Low-velocity friction coefficient `∂f/∂v` at `v = 0`, N·s/m.
///
/// Central differences with step `h = 1e-4·u` and one Richardson level:
/// `(4D(h/2) − D(h))/3`. `u` is the velocity scale of the loop.
pub fn friction_coefficient(
    h: &RationalTransferFunction,
    p: &ForceParams,
    u: f64,
    guard: LoopGuard,
) -> Result<f64> {
    if !(u > 0.0 && u.is_finite()) {
        return Err(Error::param("u", "must be positive and finite"));
    }
    guard.check(h)?;
    force(h, p, 0.0)?;
    let diff = |step: f64| -> Result<f64> {
        Ok((force(h, p, step)? - force(h, p, -step)?) / (2.0 * step))
    };
    let step = FRICTION_STEP * u;
    let coarse = diff(step)?;
    let fine = diff(step / 2.0)?;
    let scale = coarse.abs().max(fine.abs());
    if scale > 0.0 {
        let gap = (coarse - fine).abs() / scale;
        if gap > FRICTION_SMOOTHNESS {
            return Err(Error::NonSmooth { rel_gap: gap });
        }
    }
    Ok((4.0 * fine - coarse) / 3.0)
}

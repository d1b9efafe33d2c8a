//! Atom, cavity and light parameters and the cavity transmission response.
//!
//! Everything here is SI. The linearized error signal is
//! `ε = r·δat/γc − εfb` with the resonator slope `r = 2δiγc/(γc² + δi²)`.
//! Saturation is not modeled: all formulas assume the atom is driven well
//! below saturation, far enough from resonance that `Γsc` does not depend on
//! velocity.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::constants::{EPS0, HBAR};
use crate::{Error, Result};

/// Resonator and input-light parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CavityParams {
    pub finesse: f64,
    /// Mode waist `w`, m.
    pub waist: f64,
    /// Wavenumber `k`, 1/m.
    pub k: f64,
    /// Field decay rate `γc`, rad/s.
    pub gamma_c: f64,
    /// Input detuning from cavity resonance `δi`, rad/s.
    pub delta_i: f64,
}

impl CavityParams {
    pub fn validate(&self) -> Result<()> {
        positive("finesse", self.finesse)?;
        positive("waist", self.waist)?;
        positive("k", self.k)?;
        positive("gamma_c", self.gamma_c)?;
        finite("delta_i", self.delta_i)
    }
}

/// Particle parameters at the operating intensity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomParams {
    /// kg.
    pub mass: f64,
    /// Free-space coherent scattering rate `Γsc`, 1/s.
    pub gamma_sc: f64,
    /// Unperturbed optical-potential depth `U0`, J. Sign follows `−Re(α)`.
    pub u0: f64,
}

impl AtomParams {
    pub fn validate(&self) -> Result<()> {
        positive("mass", self.mass)?;
        finite("gamma_sc", self.gamma_sc)?;
        if self.gamma_sc < 0.0 {
            return Err(Error::param("gamma_sc", "must be non-negative"));
        }
        finite("u0", self.u0)
    }
}

/// Dimensionless couplings derived from cavity and atom.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingDerived {
    /// Fraction of scattered photons going into one direction of the mode.
    pub eta: f64,
    /// `ħηΓsc/U0`, signed like `U0`; absent when `U0 = 0`.
    pub zeta: Option<f64>,
    /// Resonator slope in `[-1, 1]`.
    pub r: f64,
    /// `ħ²k²/(2m)`, J.
    pub recoil_energy: f64,
    /// Free-space detection solid angle fraction `3/(k²w²)`.
    pub delta_omega_fs: f64,
}

impl CouplingDerived {
    pub fn zeta(&self) -> Result<f64> {
        self.zeta
            .ok_or_else(|| Error::param("u0", "zeta is undefined for U0 = 0"))
    }
}

pub fn derive_coupling(cav: &CavityParams, atom: &AtomParams) -> Result<CouplingDerived> {
    cav.validate()?;
    atom.validate()?;
    let eta = cavity_fraction(cav.finesse, cav.k, cav.waist);
    let zeta = (atom.u0 != 0.0).then(|| coupling_parameter(eta * atom.gamma_sc, atom.u0));
    Ok(CouplingDerived {
        eta,
        zeta,
        r: resonator_slope(cav.delta_i, cav.gamma_c),
        recoil_energy: recoil_energy(cav.k, atom.mass),
        delta_omega_fs: free_space_solid_angle(cav.k, cav.waist),
    })
}

/// `η = 6F/(πk²w²)`.
pub fn cavity_fraction(finesse: f64, k: f64, waist: f64) -> f64 {
    6.0 * finesse / (PI * k * k * waist * waist)
}

/// `ΔΩ = 3/(k²w²)`, the replacement for `η` without a resonator.
pub fn free_space_solid_angle(k: f64, waist: f64) -> f64 {
    3.0 / (k * k * waist * waist)
}

/// `r = 2δiγc/(γc² + δi²)`.
pub fn resonator_slope(delta_i: f64, gamma_c: f64) -> f64 {
    2.0 * delta_i * gamma_c / (gamma_c * gamma_c + delta_i * delta_i)
}

/// `Er = ħ²k²/(2m)`.
pub fn recoil_energy(k: f64, mass: f64) -> f64 {
    HBAR * HBAR * k * k / (2.0 * mass)
}

/// `ζ = ħηΓsc/U0` from the cavity scattering rate `ηΓsc`.
pub fn coupling_parameter(eta_gamma_sc: f64, u0: f64) -> f64 {
    HBAR * eta_gamma_sc / u0
}

pub fn wavenumber(lambda: f64) -> f64 {
    2.0 * PI / lambda
}

/// Free-space scattering rate and potential depth from the real part of the
/// polarizability (C·m²/V) and the antinode field amplitude `Ec` (V/m):
/// `Γsc = k³(Re α·Ec)²/(6πε0ħ)`, `U0 = −Ec²·Re α/2`.
///
/// Only `Re α` enters; the imaginary part plays no role in this model.
pub fn from_polarizability(alpha_re: f64, e_c: f64, k: f64) -> Result<(f64, f64)> {
    finite("alpha_re", alpha_re)?;
    finite("e_c", e_c)?;
    finite("k", k)?;
    let field = alpha_re * e_c;
    let gamma_sc = k.powi(3) * field * field / (6.0 * PI * EPS0 * HBAR);
    let u0 = -e_c * e_c * alpha_re / 2.0;
    Ok((gamma_sc, u0))
}

/// Fractional intracavity power change,
/// `ε = (γc² + δi²)/(γc² + δt²)·(1 − εfb) − 1` with `δt = δi − δat`.
pub fn transmission_exact(cav: &CavityParams, delta_at: f64, eps_fb: f64) -> f64 {
    let g2 = cav.gamma_c * cav.gamma_c;
    let delta_t = cav.delta_i - delta_at;
    (g2 + cav.delta_i * cav.delta_i) / (g2 + delta_t * delta_t) * (1.0 - eps_fb) - 1.0
}

/// First-order version of [`transmission_exact`]: `ε = r·δat/γc − εfb`.
pub fn transmission_linear(r: f64, gamma_c: f64, delta_at: f64, eps_fb: f64) -> f64 {
    r * delta_at / gamma_c - eps_fb
}

/// Intracavity power of the detuned (`|δi| = γc`) resonator, `Pc = Pi·F/(2π)`.
pub fn intracavity_power(p_in: f64, finesse: f64) -> f64 {
    p_in * finesse / (2.0 * PI)
}

fn positive(name: &'static str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::param(
            name,
            format!("must be positive and finite, got {x}"),
        ))
    }
}

fn finite(name: &'static str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be finite, got {x}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cavity(delta_i: f64) -> CavityParams {
        CavityParams {
            finesse: 1.0e4,
            waist: 50e-6,
            k: wavenumber(780e-9),
            gamma_c: 2.0 * PI * 1.0e6,
            delta_i,
        }
    }

    fn atom() -> AtomParams {
        AtomParams {
            mass: 87.0 * crate::constants::AMU,
            gamma_sc: 300.0,
            u0: -1.0e-28,
        }
    }

    #[test]
    fn slope_at_operating_points() {
        let g = 2.0 * PI * 1.0e6;
        let c = derive_coupling(&cavity(-g), &atom()).unwrap();
        assert_relative_eq!(c.r, -1.0, epsilon = 1e-15);
        let c = derive_coupling(&cavity(0.0), &atom()).unwrap();
        assert_eq!(c.r, 0.0);
    }

    #[test]
    fn eta_inversion_and_solid_angle() {
        let k = wavenumber(760e-9);
        let w = 30e-6;
        let f = PI * k * k * w * w / 6.0;
        assert_relative_eq!(cavity_fraction(f, k, w), 1.0, epsilon = 1e-14);
        for finesse in [10.0, 1e3, 2.5e5] {
            let eta = cavity_fraction(finesse, k, w);
            let ratio = free_space_solid_angle(k, w) / eta;
            assert_relative_eq!(ratio, PI / (2.0 * finesse), max_relative = 1e-14);
        }
    }

    #[test]
    fn zeta_requires_nonzero_depth() {
        let mut a = atom();
        a.u0 = 0.0;
        let c = derive_coupling(&cavity(-1.0), &a).unwrap();
        assert!(c.zeta.is_none());
        assert!(c.zeta().is_err());
        let c = derive_coupling(&cavity(-1.0), &atom()).unwrap();
        let expect = HBAR * c.eta * atom().gamma_sc / atom().u0;
        assert_relative_eq!(c.zeta().unwrap(), expect, max_relative = 1e-15);
        assert!(c.zeta().unwrap() < 0.0);
    }

    #[test]
    fn invalid_parameters_rejected() {
        let mut c = cavity(0.0);
        c.waist = 0.0;
        assert!(derive_coupling(&c, &atom()).is_err());
        let mut a = atom();
        a.gamma_sc = -1.0;
        assert!(derive_coupling(&cavity(0.0), &a).is_err());
    }

    #[test]
    fn polarizability_scalings() {
        let k = wavenumber(760e-9);
        assert_eq!(from_polarizability(0.0, 1e5, k).unwrap(), (0.0, 0.0));
        let alpha = 5e-39;
        let (g1, u1) = from_polarizability(alpha, 1e5, k).unwrap();
        let (g2, u2) = from_polarizability(alpha, 2e5, k).unwrap();
        assert_relative_eq!(g2 / g1, 4.0, max_relative = 1e-14);
        assert_relative_eq!(u2 / u1, 4.0, max_relative = 1e-14);
        assert!(u1 < 0.0 && g1 > 0.0);
        assert!(from_polarizability(f64::NAN, 1.0, k).is_err());
    }

    #[test]
    fn exact_transmission_examples() {
        let g = 3.0;
        let cav = CavityParams {
            gamma_c: g,
            delta_i: -g,
            ..cavity(0.0)
        };
        assert_eq!(transmission_exact(&cav, 0.0, 0.0), 0.0);
        assert_relative_eq!(transmission_exact(&cav, 0.0, 0.2), -0.2, epsilon = 1e-15);
        assert_relative_eq!(transmission_exact(&cav, g, 0.0), -0.6, epsilon = 1e-15);
    }

    #[test]
    fn linear_transmission_examples() {
        assert_eq!(transmission_linear(-1.0, 2.0, 0.0, 0.0), 0.0);
        assert_relative_eq!(
            transmission_linear(-1.0, 2.0, 0.02, 0.0),
            -0.01,
            epsilon = 1e-16
        );
        assert_relative_eq!(transmission_linear(1.0, 2.0, 0.0, 0.3), -0.3);
    }

    #[test]
    fn linearization_remainder_is_second_order() {
        let g = 1.7;
        let cav = CavityParams {
            gamma_c: g,
            delta_i: -g,
            ..cavity(0.0)
        };
        let mut prev_ratio = f64::INFINITY;
        for i in 1..=200 {
            let x = 0.01 * i as f64 / 200.0;
            for sign in [-1.0, 1.0] {
                let d = sign * x * g;
                let exact = transmission_exact(&cav, d, 0.0);
                let lin = transmission_linear(-1.0, g, d, 0.0);
                assert!((exact - lin).abs() <= 2.0 * x * x, "x = {x}");
            }
        }
        // residual / (δat/γc) → 0 as δat → 0
        for x in [1e-2, 1e-3, 1e-4] {
            let d = x * g;
            let ratio =
                (transmission_exact(&cav, d, 0.0) - transmission_linear(-1.0, g, d, 0.0)) / x;
            assert!(ratio.abs() < prev_ratio);
            prev_ratio = ratio.abs();
            let curvature =
                (transmission_exact(&cav, d, 0.0) - transmission_linear(-1.0, g, d, 0.0)) / (x * x);
            assert!(curvature.abs() < 1.0);
        }
    }

    #[test]
    fn slope_is_odd_and_peaks_at_linewidth() {
        let g = 2.0;
        let mut best = (0.0, 0.0);
        for i in -5000..=5000 {
            let d = g * i as f64 / 1000.0;
            let r = resonator_slope(d, g);
            assert_relative_eq!(r, -resonator_slope(-d, g), epsilon = 1e-15);
            assert!(r.abs() <= 1.0 + 1e-15);
            if r.abs() > best.1 {
                best = (d, r.abs());
            }
        }
        assert_relative_eq!(best.0.abs(), g, epsilon = 1e-12);
        assert_relative_eq!(best.1, 1.0, epsilon = 1e-15);
    }
}

//! Stochastic cooling of a thermal sample.
//!
//! With `N` atoms in the mode, each atom's signal competes with the intensity
//! noise of the others. The per-atom rate along the cavity axis is
//! `γd ≈ (k·vth/6N)(2Γ̄ − Γ̄²)`, where `Γ̄ = 2NηΓscħ/(kB·T)` is the total
//! scattering rate into the cavity in units of `kB·T/ħ`. All averages here
//! are over the one-dimensional velocity distribution along the axis.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{AMU, HBAR, KB};
use crate::force::{self, fmt_f64, ForceParams};
use crate::lti::RationalTransferFunction;
use crate::noise::heating_collective;
use crate::optics::{recoil_energy, wavenumber};
use crate::quadrature::{self, DEFAULT_TOL};
use crate::{Error, Result};

/// Mass used for CaH in the presets.
pub const CAH_MASS_AMU: f64 = 41.0;
pub const CAH_LAMBDA: f64 = 760e-9;

/// One sample and its operating point at `Γ̄ = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleScenario {
    pub label: String,
    pub n: f64,
    /// K.
    pub t: f64,
    /// kg.
    pub m: f64,
    /// m.
    pub lambda: f64,
    /// 1/s.
    pub eta_gamma_sc: f64,
    /// m/s.
    pub v_th: f64,
    pub gamma_bar: f64,
    /// 1/s, along the cavity axis.
    pub gamma_d: f64,
    /// Minimum beam length, m.
    pub l: f64,
    /// Inputs that were assumed rather than given.
    #[serde(default)]
    pub assumptions: Vec<String>,
}

/// `vth = √(kB·T/m)`.
pub fn thermal_velocity(t: f64, m: f64) -> f64 {
    (KB * t / m).sqrt()
}

/// `Γ̄ = 2NηΓscħ/(kB·T)`.
pub fn normalized_scatter_rate(n: f64, eta_gamma_sc: f64, t: f64) -> f64 {
    2.0 * n * eta_gamma_sc * HBAR / (KB * t)
}

/// `ηΓsc` giving `Γ̄ = 1`: `kB·T/(2Nħ)`.
pub fn optimal_scatter_rate(n: f64, t: f64) -> Result<f64> {
    if !(n >= 1.0) {
        return Err(Error::param("n", "need at least one atom"));
    }
    if !(t > 0.0) {
        return Err(Error::param("t", "temperature must be positive"));
    }
    Ok(KB * t / (2.0 * n * HBAR))
}

/// `L = 6Nλ/π`.
pub fn beam_length(n: f64, lambda: f64) -> f64 {
    6.0 * n * lambda / PI
}

/// `γd = (k·vth/6N)(2Γ̄ − Γ̄²)`.
pub fn cooling_rate_constant(n: f64, k: f64, v_th: f64, gamma_bar: f64) -> Result<f64> {
    if !(n >= 1.0) {
        return Err(Error::param("n", "need at least one atom"));
    }
    Ok(k * v_th / (6.0 * n) * (2.0 * gamma_bar - gamma_bar * gamma_bar))
}

/// Fills every derived field at the `Γ̄ = 1` operating point. `N = 0` gives
/// a scenario with no light and no cooling.
pub fn scenario(
    label: impl Into<String>,
    n: f64,
    t: f64,
    m: f64,
    lambda: f64,
) -> Result<EnsembleScenario> {
    if !(n >= 0.0 && n.is_finite()) {
        return Err(Error::param(
            "n",
            "atom number must be non-negative and finite",
        ));
    }
    for (name, x) in [("t", t), ("m", m), ("lambda", lambda)] {
        if !(x > 0.0 && x.is_finite()) {
            return Err(Error::param(name, "must be positive and finite"));
        }
    }
    let v_th = thermal_velocity(t, m);
    let (eta_gamma_sc, gamma_bar, gamma_d) = if n == 0.0 {
        (0.0, 0.0, 0.0)
    } else {
        let egs = optimal_scatter_rate(n, t)?;
        let gb = normalized_scatter_rate(n, egs, t);
        (
            egs,
            gb,
            cooling_rate_constant(n, wavenumber(lambda), v_th, gb)?,
        )
    };
    Ok(EnsembleScenario {
        label: label.into(),
        n,
        t,
        m,
        lambda,
        eta_gamma_sc,
        v_th,
        gamma_bar,
        gamma_d,
        l: beam_length(n, lambda),
        assumptions: Vec::new(),
    })
}

/// 10⁸ trapped CaH molecules at 0.4 K, 760 nm light.
pub fn cah_trap() -> EnsembleScenario {
    cah("cah-trap", 1e8, 0.4)
}

/// 10⁶ CaH molecules at room temperature, 760 nm light.
pub fn cah_room() -> EnsembleScenario {
    cah("cah-room", 1e6, 300.0)
}

fn cah(label: &str, n: f64, t: f64) -> EnsembleScenario {
    let mut s =
        scenario(label, n, t, CAH_MASS_AMU * AMU, CAH_LAMBDA).expect("preset parameters are valid");
    s.assumptions.push(format!(
        "CaH mass taken as {CAH_MASS_AMU} amu (Ca 40 + H 1)"
    ));
    s.assumptions
        .push("gamma_d is the one-dimensional rate along the cavity axis".into());
    s
}

/// Looks up a built-in preset by name.
pub fn preset(name: &str) -> Option<EnsembleScenario> {
    match name {
        "cah-trap" => Some(cah_trap()),
        "cah-room" => Some(cah_room()),
        _ => None,
    }
}

pub const PRESETS: [&str; 2] = ["cah-trap", "cah-room"];

/// CSV with header `label,N,T,m,lambda,vth,eta_gamma_sc,gamma_bar,gamma_d,L`.
pub fn scenario_table_csv(rows: &[EnsembleScenario]) -> String {
    let mut out = String::from("label,N,T,m,lambda,vth,eta_gamma_sc,gamma_bar,gamma_d,L\n");
    for s in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            s.label,
            fmt_f64(s.n),
            fmt_f64(s.t),
            fmt_f64(s.m),
            fmt_f64(s.lambda),
            fmt_f64(s.v_th),
            fmt_f64(s.eta_gamma_sc),
            fmt_f64(s.gamma_bar),
            fmt_f64(s.gamma_d),
            fmt_f64(s.l)
        );
    }
    out
}

/// A thermal sample seen by one loop.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleParams {
    pub n: f64,
    pub eta: f64,
    pub gamma_sc: f64,
    pub k: f64,
    pub m: f64,
    pub t: f64,
    /// Resonator slope.
    pub r: f64,
}

impl SampleParams {
    pub fn v_th(&self) -> f64 {
        thermal_velocity(self.t, self.m)
    }

    pub fn gamma_bar(&self) -> f64 {
        normalized_scatter_rate(self.n, self.eta * self.gamma_sc, self.t)
    }
}

/// `⟨f·v + ẆN⟩` over the sample's velocity distribution, W.
///
/// `h_normalized` is written in `s = iv/u`; it is scaled to physical
/// frequency with `2ku`.
pub fn net_cooling_power(
    p: &SampleParams,
    h_normalized: &RationalTransferFunction,
    u: f64,
) -> Result<f64> {
    if !(u > 0.0 && u.is_finite()) {
        return Err(Error::param("u", "unity-gain velocity must be positive"));
    }
    if !(p.t > 0.0 && p.m > 0.0 && p.k > 0.0) {
        return Err(Error::param(
            "t",
            "temperature, mass and k must be positive",
        ));
    }
    let h = h_normalized.with_frequency_unit(2.0 * p.k * u)?;
    h.require_stable()?;
    let fp = ForceParams {
        r: p.r,
        eta: p.eta,
        gamma_sc: p.gamma_sc,
        k: p.k,
    };
    let e_r = recoil_energy(p.k, p.m);
    let v_th = p.v_th();
    let integrand = |v: f64| -> f64 {
        let f = force::force(&h, &fp, v).unwrap_or(f64::NAN);
        let w =
            heating_collective(e_r, p.eta, p.gamma_sc, p.n, p.k, v_th, &h, v).unwrap_or(f64::NAN);
        f * v + w
    };
    let avg = quadrature::thermal_average(integrand, v_th, DEFAULT_TOL, &[u, 3.0 * u])?;
    if !avg.value.is_finite() {
        return Err(Error::Quadrature {
            achieved: f64::NAN,
            nodes: avg.nodes,
        });
    }
    Ok(avg.value)
}

/// Cooling rate implied by a net power: `−2⟨Ẇd⟩/(kB·T)`.
pub fn rate_from_power(power: f64, t: f64) -> f64 {
    -2.0 * power / (KB * t)
}

/// Result of scanning the unity-gain velocity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VelocityScan {
    pub u: Vec<f64>,
    pub power: Vec<f64>,
    /// Golden-section refinement of the most negative power.
    pub u_best: f64,
    pub power_best: f64,
}

/// Net cooling power on `u_grid`, then refined around the grid minimum.
pub fn scan_unity_gain_velocity(
    p: &SampleParams,
    h_normalized: &RationalTransferFunction,
    u_grid: &[f64],
) -> Result<VelocityScan> {
    if u_grid.len() < 3 {
        return Err(Error::param("u_grid", "need at least three velocities"));
    }
    let power = u_grid
        .par_iter()
        .map(|&u| net_cooling_power(p, h_normalized, u))
        .collect::<Result<Vec<_>>>()?;
    let i = power
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let lo = u_grid[i.saturating_sub(1)];
    let hi = u_grid[(i + 1).min(u_grid.len() - 1)];
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let f = |lu: f64| net_cooling_power(p, h_normalized, lu.exp());
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while b - a > 1e-7 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d)?;
        }
    }
    let u_best = (0.5 * (a + b)).exp();
    Ok(VelocityScan {
        u: u_grid.to_vec(),
        power,
        u_best,
        power_best: f(u_best.ln())?,
    })
}

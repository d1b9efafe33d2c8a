//! Intensity-noise spectra, heating rates and the differentiator temperature.
//!
//! Spectral densities are single-sided in angular frequency, normalized so
//! that `∫₀^∞ S(ω) dω = ⟨ε²⟩`. A fluctuating depth `U0(1 + ε)` heats an atom
//! at `Ẇ = πk²U0²S(2kv)/m`, doubled for quantum (shot) noise.

use std::f64::consts::PI;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::constants::{C, HBAR, KB};
use crate::force::fmt_f64;
use crate::lti::RationalTransferFunction;
use crate::quadrature::{self, DEFAULT_TOL};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// `∫₀^∞ S dω = ⟨ε²⟩`, ω in rad/s.
    SingleSidedAngular,
    /// `∫₀^∞ S df = ⟨ε²⟩`, f in Hz.
    SingleSidedHz,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseSource {
    Shot,
    Detection,
    Thermal,
    Total,
}

impl NoiseSource {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseSource::Shot => "shot",
            NoiseSource::Detection => "detection",
            NoiseSource::Thermal => "thermal",
            NoiseSource::Total => "total",
        }
    }
}

impl fmt::Display for NoiseSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Sampled fractional-intensity noise density.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpectrum {
    omegas: Vec<f64>,
    density: Vec<f64>,
    normalization: Normalization,
    source: NoiseSource,
}

impl NoiseSpectrum {
    pub fn new(
        omegas: Vec<f64>,
        density: Vec<f64>,
        normalization: Normalization,
        source: NoiseSource,
    ) -> Result<Self> {
        if omegas.len() != density.len() {
            return Err(Error::param(
                "density",
                "length differs from the frequency grid",
            ));
        }
        if omegas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("omegas", "grid must be strictly increasing"));
        }
        if density.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::param("density", "must be finite and non-negative"));
        }
        Ok(NoiseSpectrum {
            omegas,
            density,
            normalization,
            source,
        })
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn source(&self) -> NoiseSource {
        self.source
    }

    /// Re-expresses the density per Hz or per rad/s.
    pub fn to_normalization(&self, target: Normalization) -> NoiseSpectrum {
        let factor = match (self.normalization, target) {
            (a, b) if a == b => 1.0,
            (Normalization::SingleSidedAngular, Normalization::SingleSidedHz) => 2.0 * PI,
            _ => 1.0 / (2.0 * PI),
        };
        NoiseSpectrum {
            omegas: self.omegas.clone(),
            density: self.density.iter().map(|d| d * factor).collect(),
            normalization: target,
            source: self.source,
        }
    }

    /// Pointwise sum on a shared grid; the result is tagged `total`.
    pub fn add(&self, other: &NoiseSpectrum) -> Result<NoiseSpectrum> {
        if self.normalization != other.normalization {
            return Err(Error::SpectrumMismatch(format!(
                "normalizations differ ({:?} vs {:?})",
                self.normalization, other.normalization
            )));
        }
        if self.omegas != other.omegas {
            return Err(Error::SpectrumMismatch("frequency grids differ".into()));
        }
        Ok(NoiseSpectrum {
            omegas: self.omegas.clone(),
            density: self
                .density
                .iter()
                .zip(&other.density)
                .map(|(a, b)| a + b)
                .collect(),
            normalization: self.normalization,
            source: NoiseSource::Total,
        })
    }

    /// Trapezoidal `∫ S dω` over the grid (or `∫ S df` per Hz).
    pub fn integrate(&self) -> f64 {
        self.omegas
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(w, d)| 0.5 * (w[1] - w[0]) * (d[0] + d[1]))
            .sum()
    }

    /// CSV with header `omega,density,source`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("omega,density,source\n");
        for (w, d) in self.omegas.iter().zip(&self.density) {
            let _ = writeln!(out, "{},{},{}", fmt_f64(*w), fmt_f64(*d), self.source);
        }
        out
    }
}

/// Power flows into the atom's kinetic energy, W.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatingBudget {
    pub w_shot: f64,
    pub w_freespace: f64,
    pub w_collective: f64,
    /// Signed; negative when the loop cools.
    pub w_cool: f64,
    pub net: f64,
}

impl HeatingBudget {
    pub fn new(w_shot: f64, w_freespace: f64, w_collective: f64, w_cool: f64) -> Self {
        HeatingBudget {
            w_shot,
            w_freespace,
            w_collective,
            w_cool,
            net: w_shot + w_freespace + w_collective + w_cool,
        }
    }
}

/// `Ẇ = πk²U0²S/m`, times two for quantum noise.
pub fn heating_from_psd(u0: f64, k: f64, m: f64, s_at_2kv: f64, quantum: bool) -> f64 {
    let w = PI * k * k * u0 * u0 * s_at_2kv / m;
    if quantum {
        2.0 * w
    } else {
        w
    }
}

fn check_q(q: f64) -> Result<()> {
    if q > 0.0 && q <= 1.0 {
        Ok(())
    } else {
        Err(Error::param(
            "q",
            format!("detection efficiency must lie in (0, 1], got {q}"),
        ))
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if eta > 0.0 && eta.is_finite() {
        Ok(())
    } else {
        Err(Error::param(
            "eta",
            format!("must be positive and finite, got {eta}"),
        ))
    }
}

/// Open-loop photon shot-noise density `Fħck/(2π²Pc)`.
pub fn shot_noise_prefactor(finesse: f64, p_c: f64, k: f64) -> Result<f64> {
    if !(p_c > 0.0 && p_c.is_finite()) {
        return Err(Error::param("p_c", "intracavity power must be positive"));
    }
    Ok(finesse * HBAR * C * k / (2.0 * PI * PI * p_c))
}

/// Photon and detection parts of the closed-loop shot-noise density,
/// `Spsn/|1+H|²` and `Spsn·|H|²(1/q − 1)/|1+H|²`.
///
/// Valid well below the cavity linewidth.
pub fn shot_noise_parts(
    finesse: f64,
    p_c: f64,
    k: f64,
    q: f64,
    h: &RationalTransferFunction,
    omega: f64,
) -> Result<(f64, f64)> {
    check_q(q)?;
    let s0 = shot_noise_prefactor(finesse, p_c, k)?;
    let resp = h.eval(omega)?;
    let photon = s0 / resp.closed_loop_mag_sq;
    let detection = s0 * resp.open_loop_mag_sq() * (1.0 / q - 1.0) / resp.closed_loop_mag_sq;
    Ok((photon, detection))
}

/// `S = (Fħck/(2π²Pc))·(1 + |H|²(1/q − 1))/|1+H|²`.
pub fn shot_noise_psd(
    finesse: f64,
    p_c: f64,
    k: f64,
    q: f64,
    h: &RationalTransferFunction,
    omega: f64,
) -> Result<f64> {
    let (p, d) = shot_noise_parts(finesse, p_c, k, q, h, omega)?;
    Ok(p + d)
}

/// Closed-loop shot-noise spectrum on a grid.
pub fn shot_noise_spectrum(
    finesse: f64,
    p_c: f64,
    k: f64,
    q: f64,
    h: &RationalTransferFunction,
    omegas: &[f64],
) -> Result<NoiseSpectrum> {
    let density = omegas
        .iter()
        .map(|w| shot_noise_psd(finesse, p_c, k, q, h, *w))
        .collect::<Result<Vec<_>>>()?;
    NoiseSpectrum::new(
        omegas.to_vec(),
        density,
        Normalization::SingleSidedAngular,
        NoiseSource::Shot,
    )
}

/// Open-loop photon shot-noise density written through the atom's own
/// scattering: `ħ²ηΓsc/(2πU0²)`. With the quantum factor this heats at
/// `2ErηΓsc`, the recoil heating of photons scattered into the cavity.
pub fn shot_noise_density_from_scattering(eta_gamma_sc: f64, u0: f64) -> Result<f64> {
    if u0 == 0.0 || !u0.is_finite() {
        return Err(Error::param(
            "u0",
            "potential depth must be nonzero and finite",
        ));
    }
    Ok(HBAR * HBAR * eta_gamma_sc / (2.0 * PI * u0 * u0))
}

/// `Ẇsn = ErηΓsc·(2 + |H|²(1/q − 1))/|1+H|²` at `ω = 2kv`.
pub fn heating_shot(
    e_r: f64,
    eta: f64,
    gamma_sc: f64,
    h: &RationalTransferFunction,
    k: f64,
    v: f64,
    q: f64,
) -> Result<f64> {
    check_q(q)?;
    let resp = h.eval(2.0 * k * v)?;
    Ok(
        e_r * eta * gamma_sc * (2.0 + resp.open_loop_mag_sq() * (1.0 / q - 1.0))
            / resp.closed_loop_mag_sq,
    )
}

/// `Ẇfs = 2ErΓsc`.
pub fn heating_freespace(e_r: f64, gamma_sc: f64) -> f64 {
    2.0 * e_r * gamma_sc
}

/// `u = (1/q − 1 + 2/η)·ħk/m`.
pub fn optimal_unity_gain_velocity(q: f64, eta: f64, k: f64, m: f64) -> Result<f64> {
    check_q(q)?;
    check_eta(eta)?;
    Ok((1.0 / q - 1.0 + 2.0 / eta) * HBAR * k / m)
}

/// Differentiator temperature at the optimal `u`,
/// `kB·Td = 4Er(1 + η)(1/q − 1 + 2/η)/η`. Returns kelvin.
///
/// Decreases monotonically in `η`; for `q = 1` it falls as `8Er/η`.
pub fn temperature_differentiator(e_r: f64, eta: f64, q: f64) -> Result<f64> {
    check_q(q)?;
    check_eta(eta)?;
    Ok(4.0 * e_r * (1.0 + eta) * (1.0 / q - 1.0 + 2.0 / eta) / eta / KB)
}

/// `S_N = Nζ²/(√(8π)·k·vth)·exp(−ω²/(8k²vth²))/|1+H|²`.
pub fn thermal_psd(
    n: f64,
    zeta: f64,
    k: f64,
    v_th: f64,
    h: &RationalTransferFunction,
    omega: f64,
) -> Result<f64> {
    if !(n >= 0.0) {
        return Err(Error::param("n", "atom number must be non-negative"));
    }
    if !(v_th > 0.0) {
        return Err(Error::param("v_th", "thermal velocity must be positive"));
    }
    let resp = h.eval(omega)?;
    let open = n * zeta * zeta / ((8.0 * PI).sqrt() * k * v_th)
        * (-(omega * omega) / (8.0 * k * k * v_th * v_th)).exp();
    Ok(open / resp.closed_loop_mag_sq)
}

/// Thermal spectrum of the other atoms on a grid.
pub fn thermal_spectrum(
    n: f64,
    zeta: f64,
    k: f64,
    v_th: f64,
    h: &RationalTransferFunction,
    omegas: &[f64],
) -> Result<NoiseSpectrum> {
    let density = omegas
        .iter()
        .map(|w| thermal_psd(n, zeta, k, v_th, h, *w))
        .collect::<Result<Vec<_>>>()?;
    NoiseSpectrum::new(
        omegas.to_vec(),
        density,
        Normalization::SingleSidedAngular,
        NoiseSource::Thermal,
    )
}

/// `ẆN = [ErηΓsc/|1+H|²]·[√(2π)NηΓsc/(2k·vth)]·exp(−v²/(2vth²))`.
#[allow(clippy::too_many_arguments)]
pub fn heating_collective(
    e_r: f64,
    eta: f64,
    gamma_sc: f64,
    n: f64,
    k: f64,
    v_th: f64,
    h: &RationalTransferFunction,
    v: f64,
) -> Result<f64> {
    if !(n >= 0.0) {
        return Err(Error::param("n", "atom number must be non-negative"));
    }
    if !(v_th > 0.0) {
        return Err(Error::param("v_th", "thermal velocity must be positive"));
    }
    let resp = h.eval(2.0 * k * v)?;
    let egs = eta * gamma_sc;
    Ok(
        e_r * egs / resp.closed_loop_mag_sq * (2.0 * PI).sqrt() * n * egs / (2.0 * k * v_th)
            * (-(v * v) / (2.0 * v_th * v_th)).exp(),
    )
}

/// How the velocity distribution enters the energy balance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ansatz {
    /// Every atom at `v² = kB·T/m`.
    Representative,
    /// Thermal average over `v ~ N(0, kB·T/m)`.
    Gaussian,
}

/// Parameters of a single atom cooled by the differentiator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DifferentiatorBalance {
    pub eta: f64,
    pub gamma_sc: f64,
    pub q: f64,
    pub k: f64,
    pub m: f64,
}

impl DifferentiatorBalance {
    fn e_r(&self) -> f64 {
        HBAR * HBAR * self.k * self.k / (2.0 * self.m)
    }

    /// `fd·v + Ẇsn + Ẇfs` at velocity `v`, W.
    pub fn net_power(&self, u: f64, v: f64) -> f64 {
        let egs = self.eta * self.gamma_sc;
        let a = 1.0 / self.q - 1.0;
        let d = u * u + v * v;
        -HBAR * self.k * egs * u * v * v / d
            + self.e_r() * egs * (2.0 * u * u + a * v * v) / d
            + heating_freespace(self.e_r(), self.gamma_sc)
    }

    /// Temperature at which cooling balances heating, K; infinite when the
    /// saturated cooling power `ħkηΓsc·u` cannot beat the heating.
    pub fn temperature(&self, ansatz: Ansatz, u: f64) -> Result<f64> {
        check_q(self.q)?;
        check_eta(self.eta)?;
        if !(u > 0.0 && u.is_finite()) {
            return Err(Error::param("u", "unity-gain velocity must be positive"));
        }
        if !(self.gamma_sc > 0.0 && self.k > 0.0 && self.m > 0.0) {
            return Err(Error::param(
                "gamma_sc",
                "gamma_sc, k and m must be positive",
            ));
        }
        match ansatz {
            Ansatz::Representative => Ok(self.representative_temperature(u)),
            Ansatz::Gaussian => self.gaussian_temperature(u),
        }
    }

    fn representative_temperature(&self, u: f64) -> f64 {
        // Multiplying the balance by (u² + v²)/(ErΓsc) leaves a linear
        // equation in v².
        let a = 1.0 / self.q - 1.0;
        let gain = 2.0 * self.m * self.eta * u / (HBAR * self.k);
        let denom = gain - self.eta * a - 2.0;
        if denom <= 0.0 {
            return f64::INFINITY;
        }
        let v2 = 2.0 * u * u * (1.0 + self.eta) / denom;
        self.m * v2 / KB
    }

    fn gaussian_temperature(&self, u: f64) -> Result<f64> {
        let a = 1.0 / self.q - 1.0;
        // Large-T limit of the thermal balance.
        let asymptote = -HBAR * self.k * self.eta * self.gamma_sc * u
            + self.e_r() * self.eta * self.gamma_sc * a
            + heating_freespace(self.e_r(), self.gamma_sc);
        if asymptote >= 0.0 {
            return Ok(f64::INFINITY);
        }
        let net = |t: f64| -> Result<f64> {
            let sigma = (KB * t / self.m).sqrt();
            let avg = quadrature::thermal_average(
                |v| self.net_power(u, v),
                sigma,
                DEFAULT_TOL * 1e-2,
                &[u, 3.0 * u],
            )?;
            Ok(avg.value)
        };
        // Bracket in log T around the representative answer.
        let guess = self.representative_temperature(u);
        let start = if guess.is_finite() {
            guess
        } else {
            self.m * u * u / KB
        };
        let mut lo = start.ln();
        let mut hi = lo;
        while net(lo.exp())? <= 0.0 {
            lo -= 1.0;
            if lo < start.ln() - 60.0 {
                return Err(Error::param(
                    "u",
                    "no heating-dominated low-temperature regime",
                ));
            }
        }
        while net(hi.exp())? >= 0.0 {
            hi += 1.0;
            if hi > start.ln() + 60.0 {
                return Ok(f64::INFINITY);
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if net(mid.exp())? > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-13 {
                break;
            }
        }
        Ok((0.5 * (lo + hi)).exp())
    }

    /// Golden-section minimum of [`Self::temperature`] over `u` in
    /// `[u_lo, u_hi]`, returned as `(u, T)`.
    pub fn minimize_over_u(&self, ansatz: Ansatz, u_lo: f64, u_hi: f64) -> Result<(f64, f64)> {
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let (mut a, mut b) = (u_lo.ln(), u_hi.ln());
        let t = |lu: f64| self.temperature(ansatz, lu.exp());
        let mut c = b - g * (b - a);
        let mut d = a + g * (b - a);
        let (mut fc, mut fd) = (t(c)?, t(d)?);
        while b - a > 1e-9 {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - g * (b - a);
                fc = t(c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + g * (b - a);
                fd = t(d)?;
            }
        }
        let u = (0.5 * (a + b)).exp();
        Ok((u, self.temperature(ansatz, u)?))
    }
}

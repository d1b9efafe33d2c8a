//! Real-coefficient rational transfer functions in the Laplace variable `s`.
//!
//! Coefficients are stored in ascending order of degree: `num[k]` multiplies
//! `s^k`. The same loop may be written in a normalized variable (the loop
//! family used for force curves is defined in units of the differentiator's
//! unity-gain frequency) and converted to physical rad/s with
//! [`RationalTransferFunction::with_frequency_unit`].

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Stability margin on root real parts, relative to the largest root magnitude.
const STABILITY_REL_TOL: f64 = 1e-9;

/// A loop gain `H(s) = num(s) / den(s)`.
///
/// Improper gains (numerator degree above the denominator's) are legal here;
/// they can be evaluated and checked for stability, but need a roll-off before
/// a state-space realization exists. Common factors are never cancelled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LoopDef", into = "LoopDef")]
pub struct RationalTransferFunction {
    num: Vec<f64>,
    den: Vec<f64>,
    label: String,
}

/// JSON shape: `{"label": string, "num": [..], "den": [..]}`.
#[derive(Serialize, Deserialize)]
struct LoopDef {
    #[serde(default)]
    label: String,
    num: Vec<f64>,
    den: Vec<f64>,
}

impl TryFrom<LoopDef> for RationalTransferFunction {
    type Error = Error;

    fn try_from(def: LoopDef) -> Result<Self> {
        RationalTransferFunction::new(def.num, def.den, def.label)
    }
}

impl From<RationalTransferFunction> for LoopDef {
    fn from(h: RationalTransferFunction) -> Self {
        LoopDef {
            label: h.label,
            num: h.num,
            den: h.den,
        }
    }
}

/// `H(iω)` split into real and imaginary parts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyResponse {
    pub omega: f64,
    /// In-phase gain `Re H(iω)`.
    pub h1: f64,
    /// Quadrature gain `Im H(iω)`.
    pub h2: f64,
    /// `|1 + H(iω)|²`.
    pub closed_loop_mag_sq: f64,
}

impl FrequencyResponse {
    fn from_complex(omega: f64, h: Complex64) -> Self {
        FrequencyResponse {
            omega,
            h1: h.re,
            h2: h.im,
            closed_loop_mag_sq: (1.0 + h.re).powi(2) + h.im * h.im,
        }
    }

    pub fn h(&self) -> Complex64 {
        Complex64::new(self.h1, self.h2)
    }

    /// `|H(iω)|²`.
    pub fn open_loop_mag_sq(&self) -> f64 {
        self.h1 * self.h1 + self.h2 * self.h2
    }

    /// `H2 / |1 + H|²`, the closed-loop quadrature response that sets the force.
    pub fn quadrature_fraction(&self) -> f64 {
        self.h2 / self.closed_loop_mag_sq
    }
}

/// Roots of `1 + H(s)` and the verdict drawn from them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// Closed-loop poles, i.e. roots of `den(s) + num(s)`.
    pub roots: Vec<Complex64>,
    /// Real-part band `(-tol, ∞)` treated as not stable.
    pub tolerance: f64,
    /// Roots with `|Re| <= tol`.
    pub marginal: Vec<Complex64>,
    /// Roots with `Re > tol`.
    pub unstable: Vec<Complex64>,
    /// `1 + H(0) < 0`: positive feedback at DC even when no root says so.
    pub positive_feedback: bool,
}

impl StabilityReport {
    pub fn is_stable(&self) -> bool {
        self.marginal.is_empty() && self.unstable.is_empty()
    }

    /// Poles that disqualify the loop (unstable first, then marginal).
    pub fn offending_poles(&self) -> Vec<Complex64> {
        self.unstable
            .iter()
            .chain(self.marginal.iter())
            .copied()
            .collect()
    }
}

impl RationalTransferFunction {
    pub fn new(num: Vec<f64>, den: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if num.iter().chain(den.iter()).any(|c| !c.is_finite()) {
            return Err(Error::InvalidTransferFunction(
                "coefficients must be finite".into(),
            ));
        }
        let den = poly::trim(den);
        if den.is_empty() {
            return Err(Error::InvalidTransferFunction(
                "denominator is identically zero".into(),
            ));
        }
        let mut num = poly::trim(num);
        if num.is_empty() {
            num.push(0.0);
        }
        Ok(RationalTransferFunction {
            num,
            den,
            label: label.into(),
        })
    }

    /// `H(s) = 0`, the open loop.
    pub fn zero() -> Self {
        RationalTransferFunction {
            num: vec![0.0],
            den: vec![1.0],
            label: "zero".into(),
        }
    }

    pub fn constant(gain: f64) -> Result<Self> {
        Self::new(vec![gain], vec![1.0], format!("constant {gain}"))
    }

    /// `H(s) = s / omega_u`, unity gain at `omega_u`.
    pub fn differentiator(omega_u: f64) -> Result<Self> {
        if !(omega_u > 0.0) {
            return Err(Error::param("omega_u", "must be positive"));
        }
        Self::new(vec![0.0, 1.0 / omega_u], vec![1.0], "differentiator")
    }

    /// `H(s) = (s/Γ')(1 + s/(2Γ'))`, which mimics the Doppler force of a
    /// transition of linewidth `2Γ'`.
    pub fn doppler_mimic(gamma_prime: f64) -> Result<Self> {
        if !(gamma_prime > 0.0) {
            return Err(Error::param("gamma_prime", "must be positive"));
        }
        let g = gamma_prime;
        Self::new(
            vec![0.0, 1.0 / g, 1.0 / (2.0 * g * g)],
            vec![1.0],
            "doppler-mimic",
        )
    }

    pub fn num(&self) -> &[f64] {
        &self.num
    }

    pub fn den(&self) -> &[f64] {
        &self.den
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn is_zero(&self) -> bool {
        self.num.iter().all(|&c| c == 0.0)
    }

    pub fn num_degree(&self) -> usize {
        poly::degree(&self.num)
    }

    pub fn den_degree(&self) -> usize {
        poly::degree(&self.den)
    }

    /// `deg num − deg den` when positive, else 0.
    pub fn excess_degree(&self) -> usize {
        if self.is_zero() {
            return 0;
        }
        self.num_degree().saturating_sub(self.den_degree())
    }

    pub fn is_proper(&self) -> bool {
        self.excess_degree() == 0
    }

    /// `H(s)` at an arbitrary complex `s`, or `None` at a pole.
    pub fn eval_at(&self, s: Complex64) -> Option<Complex64> {
        let d = poly::eval(&self.den, s);
        let scale = poly::eval_abs(&self.den, s.norm());
        if d.norm() <= 4.0 * f64::EPSILON * scale {
            return None;
        }
        Some(poly::eval(&self.num, s) / d)
    }

    /// Frequency response `H(iω)`.
    pub fn eval(&self, omega: f64) -> Result<FrequencyResponse> {
        let h = self
            .eval_at(Complex64::new(0.0, omega))
            .ok_or(Error::PoleOnAxis { omega })?;
        Ok(FrequencyResponse::from_complex(omega, h))
    }

    /// Rescale the frequency variable: returns `G(s) = H(s / unit)`.
    ///
    /// A loop written in normalized units (`s = iω/unit`) becomes a physical
    /// loop in rad/s.
    pub fn with_frequency_unit(&self, unit: f64) -> Result<Self> {
        if !(unit > 0.0 && unit.is_finite()) {
            return Err(Error::param("unit", "must be positive and finite"));
        }
        Self::new(
            poly::scale_variable(&self.num, 1.0 / unit),
            poly::scale_variable(&self.den, 1.0 / unit),
            self.label.clone(),
        )
    }

    /// Series connection `H · G`.
    pub fn series(&self, other: &RationalTransferFunction) -> Result<Self> {
        Self::new(
            poly::mul(&self.num, &other.num),
            poly::mul(&self.den, &other.den),
            format!("{}*{}", self.label, other.label),
        )
    }

    /// `H(s) / (1 + s/omega_r)^order`.
    pub fn rolled_off(&self, omega_r: f64, order: usize) -> Result<Self> {
        if !(omega_r > 0.0 && omega_r.is_finite()) {
            return Err(Error::param("rolloff_omega", "must be positive and finite"));
        }
        let mut den = self.den.clone();
        for _ in 0..order {
            den = poly::mul(&den, &[1.0, 1.0 / omega_r]);
        }
        Self::new(self.num.clone(), den, self.label.clone())
    }

    /// `den(s) + num(s)`, whose roots are the closed-loop poles.
    pub fn characteristic_polynomial(&self) -> Vec<f64> {
        poly::trim(poly::add(&self.den, &self.num))
    }

    /// Closed-loop stability of `1 + H(s)`.
    pub fn stability(&self) -> Result<StabilityReport> {
        let chi = self.characteristic_polynomial();
        if chi.is_empty() {
            return Err(Error::DegeneratePolynomial);
        }
        let roots = poly::roots(&chi);
        let max_mag = roots.iter().map(|r| r.norm()).fold(0.0, f64::max);
        let tolerance = STABILITY_REL_TOL * (1.0 + max_mag);
        let marginal = roots
            .iter()
            .copied()
            .filter(|r| r.re.abs() <= tolerance)
            .collect();
        let unstable = roots.iter().copied().filter(|r| r.re > tolerance).collect();
        let positive_feedback = match (self.den.first(), chi.first()) {
            (Some(&d0), Some(&c0)) if d0 != 0.0 => c0 / d0 < 0.0,
            _ => false,
        };
        Ok(StabilityReport {
            roots,
            tolerance,
            marginal,
            unstable,
            positive_feedback,
        })
    }

    /// Fails with [`Error::UnstableLoop`] naming the offending poles.
    pub fn require_stable(&self) -> Result<StabilityReport> {
        let report = self.stability()?;
        if report.is_stable() {
            Ok(report)
        } else {
            Err(Error::UnstableLoop {
                poles: report.offending_poles(),
            })
        }
    }

    /// Largest magnitude among open-loop zeros, open-loop poles and
    /// closed-loop poles; zero for a static gain.
    pub fn fastest_frequency(&self) -> f64 {
        let mut fastest: f64 = 0.0;
        for p in [
            self.num.clone(),
            self.den.clone(),
            self.characteristic_polynomial(),
        ] {
            if poly::degree(&p) > 0 {
                for r in poly::roots(&p) {
                    fastest = fastest.max(r.norm());
                }
            }
        }
        fastest
    }
}

/// Closed-loop stability verdict and the closed-loop poles.
pub fn is_closed_loop_stable(h: &RationalTransferFunction) -> Result<(bool, Vec<Complex64>)> {
    let report = h.stability()?;
    Ok((report.is_stable(), report.roots))
}

/// The four reference loops of the force-curve family, normalized so that
/// `s = iv/u` with `u` the differentiator's unity-gain velocity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoopTag {
    /// `s`, the differentiator.
    A,
    /// `s(1+s/10)/(1+8s/10)`.
    B,
    /// `s(1+s/10)(1+s/100)/((1+8s/10)(1+s/20))`.
    C,
    /// `s(1+s/2)`, the Doppler-like loop.
    D,
}

impl LoopTag {
    pub const ALL: [LoopTag; 4] = [LoopTag::A, LoopTag::B, LoopTag::C, LoopTag::D];

    pub fn as_str(self) -> &'static str {
        match self {
            LoopTag::A => "a",
            LoopTag::B => "b",
            LoopTag::C => "c",
            LoopTag::D => "d",
        }
    }
}

impl fmt::Display for LoopTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LoopTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" => Ok(LoopTag::A),
            "b" => Ok(LoopTag::B),
            "c" => Ok(LoopTag::C),
            "d" => Ok(LoopTag::D),
            _ => Err(Error::UnknownLoopTag(s.to_string())),
        }
    }
}

/// Normalized reference loop for `tag`.
pub fn fig2_loop(tag: LoopTag) -> RationalTransferFunction {
    let s = [0.0, 1.0];
    let lead = |c: f64| [1.0, c];
    let (num, den) = match tag {
        LoopTag::A => (s.to_vec(), vec![1.0]),
        LoopTag::B => (poly::mul(&s, &lead(0.1)), lead(0.8).to_vec()),
        LoopTag::C => (
            poly::mul(&poly::mul(&s, &lead(0.1)), &lead(0.01)),
            poly::mul(&lead(0.8), &lead(0.05)),
        ),
        LoopTag::D => (poly::mul(&s, &lead(0.5)), vec![1.0]),
    };
    RationalTransferFunction::new(num, den, tag.as_str()).expect("reference loops are well formed")
}

/// Reference loop `tag` in physical units for wavenumber `k` and unity-gain
/// velocity `u`: the normalized variable `iv/u` maps to `iω/(2ku)`.
pub fn fig2_loop_physical(tag: LoopTag, k: f64, u: f64) -> Result<RationalTransferFunction> {
    fig2_loop(tag).with_frequency_unit(2.0 * k * u)
}

pub(crate) mod poly {
    //! Dense real polynomials, ascending coefficients.

    use super::*;

    pub fn trim(mut p: Vec<f64>) -> Vec<f64> {
        while p.last() == Some(&0.0) {
            p.pop();
        }
        p
    }

    pub fn degree(p: &[f64]) -> usize {
        p.iter().rposition(|&c| c != 0.0).unwrap_or(0)
    }

    pub fn eval(p: &[f64], s: Complex64) -> Complex64 {
        p.iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c)
    }

    /// `Σ |c_k| r^k`, the scale against which cancellation is judged.
    pub fn eval_abs(p: &[f64], r: f64) -> f64 {
        p.iter().rev().fold(0.0, |acc, &c| acc * r + c.abs())
    }

    pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
        let n = a.len().max(b.len());
        (0..n)
            .map(|i| a.get(i).copied().unwrap_or(0.0) + b.get(i).copied().unwrap_or(0.0))
            .collect()
    }

    pub fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
        if a.is_empty() || b.is_empty() {
            return Vec::new();
        }
        let mut out = vec![0.0; a.len() + b.len() - 1];
        for (i, &x) in a.iter().enumerate() {
            for (j, &y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        out
    }

    /// Coefficients of `p(a·s)`.
    pub fn scale_variable(p: &[f64], a: f64) -> Vec<f64> {
        let mut f = 1.0;
        p.iter()
            .map(|&c| {
                let v = c * f;
                f *= a;
                v
            })
            .collect()
    }

    /// All complex roots, via companion-matrix eigenvalues of the
    /// variable-scaled monic polynomial, polished by Newton steps.
    pub fn roots(p: &[f64]) -> Vec<Complex64> {
        let p = trim(p.to_vec());
        let mut roots = Vec::new();
        // Exact zero roots.
        let lowest = p.iter().position(|&c| c != 0.0).unwrap_or(0);
        roots.extend(std::iter::repeat_n(Complex64::new(0.0, 0.0), lowest));
        let q = &p[lowest..];
        let n = q.len().saturating_sub(1);
        if n == 0 {
            return roots;
        }
        // Balance the coefficients by rescaling s = w·σ with w the geometric
        // mean root magnitude.
        let w = (q[0] / q[n]).abs().powf(1.0 / n as f64);
        let scaled = scale_variable(q, w);
        let lead = scaled[n];
        let monic: Vec<f64> = scaled.iter().map(|c| c / lead).collect();
        let mut companion = DMatrix::<f64>::zeros(n, n);
        for i in 1..n {
            companion[(i, i - 1)] = 1.0;
        }
        for i in 0..n {
            companion[(i, n - 1)] = -monic[i];
        }
        let deriv: Vec<f64> = monic
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, &c)| k as f64 * c)
            .collect();
        for mut z in companion.complex_eigenvalues().iter().copied() {
            for _ in 0..3 {
                let d = eval(&deriv, z);
                if d.norm() == 0.0 {
                    break;
                }
                let step = eval(&monic, z) / d;
                if !step.re.is_finite() || !step.im.is_finite() {
                    break;
                }
                z -= step;
            }
            roots.push(z * w);
        }
        roots
    }
}

//! State-space realization of the loop filter and its closed-loop
//! discretization.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::lti::RationalTransferFunction;
use crate::{Error, Result};

/// Relative tolerance of the realization self-check.
const RESPONSE_TOL: f64 = 1e-8;
const CHECK_POINTS: usize = 20;

/// `ẋ = Ax + Bu`, `y = Cx + Du`, single input and output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSpaceFilter {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    pub d: f64,
    pub state: DVector<f64>,
}

impl StateSpaceFilter {
    pub fn order(&self) -> usize {
        self.b.len()
    }

    /// `C(iωI − A)⁻¹B + D`.
    pub fn response(&self, omega: f64) -> Option<Complex64> {
        let n = self.order();
        if n == 0 {
            return Some(Complex64::new(self.d, 0.0));
        }
        let s = Complex64::new(0.0, omega);
        let m = DMatrix::from_fn(n, n, |i, j| {
            let diag = if i == j { s } else { Complex64::new(0.0, 0.0) };
            diag - Complex64::new(self.a[(i, j)], 0.0)
        });
        let b = DVector::from_fn(n, |i, _| Complex64::new(self.b[i], 0.0));
        let x = m.lu().solve(&b)?;
        let y: Complex64 = (0..n).map(|i| x[i] * self.c[i]).sum();
        Some(y + self.d)
    }
}

/// Loop actually realized: `H`, rolled off when improper.
pub fn realizable_loop(
    h: &RationalTransferFunction,
    rolloff_omega: Option<f64>,
) -> Result<RationalTransferFunction> {
    let excess = h.excess_degree();
    if excess == 0 {
        return Ok(h.clone());
    }
    match rolloff_omega {
        Some(w) => h.rolled_off(w, excess),
        None => Err(Error::ImproperWithoutRolloff { excess }),
    }
}

/// Controllable canonical realization of `H`, with `1/(1 + s/ω_r)` composed
/// once per excess degree when `H` is improper.
///
/// The realization is built in a frequency-scaled variable to keep the
/// companion matrix balanced, and its response is checked against the
/// transfer function before it is returned.
pub fn realize(
    h: &RationalTransferFunction,
    rolloff_omega: Option<f64>,
) -> Result<StateSpaceFilter> {
    let h = realizable_loop(h, rolloff_omega)?;
    let den = h.den();
    let n = den.len() - 1;
    let mut num = h.num().to_vec();
    num.resize(n + 1, 0.0);
    if n == 0 {
        return Ok(StateSpaceFilter {
            a: DMatrix::zeros(0, 0),
            b: DVector::zeros(0),
            c: DVector::zeros(0),
            d: num[0] / den[0],
            state: DVector::zeros(0),
        });
    }
    let w0 = balancing_frequency(den);
    // Coefficients of H(w0·σ), made monic in σ.
    let lead = den[n] * w0.powi(n as i32);
    let dh: Vec<f64> = (0..=n).map(|i| den[i] * w0.powi(i as i32) / lead).collect();
    let nh: Vec<f64> = (0..=n).map(|i| num[i] * w0.powi(i as i32) / lead).collect();
    let d = nh[n];
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n - 1 {
        a[(i, i + 1)] = w0;
    }
    for j in 0..n {
        a[(n - 1, j)] = -dh[j] * w0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = w0;
    let c = DVector::from_fn(n, |i, _| nh[i] - d * dh[i]);
    let filter = StateSpaceFilter {
        a,
        b,
        c,
        d,
        state: DVector::zeros(n),
    };
    check_response(&filter, &h)?;
    Ok(filter)
}

fn balancing_frequency(den: &[f64]) -> f64 {
    let n = den.len() - 1;
    if den[0] != 0.0 {
        return (den[0] / den[n]).abs().powf(1.0 / n as f64);
    }
    let lowest = den.iter().position(|&c| c != 0.0).unwrap_or(0);
    if lowest < n {
        (den[lowest] / den[n]).abs().powf(1.0 / (n - lowest) as f64)
    } else {
        1.0
    }
}

/// 20 log-spaced frequencies spanning two decades beyond the loop's
/// characteristic frequencies.
fn check_response(f: &StateSpaceFilter, h: &RationalTransferFunction) -> Result<()> {
    let top = h.fastest_frequency().max(f64::MIN_POSITIVE);
    let den_scale = balancing_frequency(h.den());
    let lo = den_scale.min(top) * 1e-2;
    let hi = top.max(den_scale) * 1e2;
    for i in 0..CHECK_POINTS {
        let w = lo * (hi / lo).powf(i as f64 / (CHECK_POINTS - 1) as f64);
        let Some(expect) = h.eval_at(Complex64::new(0.0, w)) else {
            continue;
        };
        let got = f
            .response(w)
            .ok_or_else(|| Error::InvalidTransferFunction("realization is singular".into()))?;
        let err = (got - expect).norm() / expect.norm().max(f64::MIN_POSITIVE);
        if err > RESPONSE_TOL {
            return Err(Error::InvalidTransferFunction(format!(
                "state-space response deviates by {err:.2e} at omega = {w:.4e}"
            )));
        }
    }
    Ok(())
}

/// Exact discretization of the filter with the loop closed around it.
///
/// The detector sees `e = w − εfb`, with `w` the open-loop signal plus all
/// injected noise and `εfb = Cx + De`. Solving the algebraic loop gives
/// `e = (w − Cx)/(1 + D)`. The input `w` is taken as piecewise linear
/// between samples (first-order hold), which keeps the loop phase free of
/// the half-step lag a sample-and-hold would add.
#[derive(Clone, Debug)]
pub struct ClosedLoopStepper {
    n: usize,
    phi: Vec<f64>,
    g0: Vec<f64>,
    g1: Vec<f64>,
    c: Vec<f64>,
    inv_1pd: f64,
    x: Vec<f64>,
    scratch: Vec<f64>,
}

impl ClosedLoopStepper {
    pub fn new(f: &StateSpaceFilter, dt: f64) -> Result<Self> {
        let n = f.order();
        let one_plus_d = 1.0 + f.d;
        if one_plus_d.abs() < 1e-12 {
            return Err(Error::InvalidTransferFunction(
                "1 + H(∞) = 0: the feedback loop is algebraically singular".into(),
            ));
        }
        let inv = 1.0 / one_plus_d;
        if n == 0 {
            return Ok(ClosedLoopStepper {
                n,
                phi: Vec::new(),
                g0: Vec::new(),
                g1: Vec::new(),
                c: Vec::new(),
                inv_1pd: inv,
                x: Vec::new(),
                scratch: Vec::new(),
            });
        }
        let a_cl = &f.a - &f.b * f.c.transpose() * inv;
        let b_cl = &f.b * inv;
        let mut m = DMatrix::zeros(n + 2, n + 2);
        m.view_mut((0, 0), (n, n)).copy_from(&(a_cl * dt));
        m.view_mut((0, n), (n, 1)).copy_from(&(b_cl * dt));
        m[(n, n + 1)] = 1.0;
        let e = m.exp();
        let phi = (0..n * n).map(|k| e[(k / n, k % n)]).collect();
        let g0 = (0..n).map(|i| e[(i, n)]).collect();
        let g1 = (0..n).map(|i| e[(i, n + 1)]).collect();
        if !e.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidTransferFunction(
                "closed-loop discretization overflowed".into(),
            ));
        }
        Ok(ClosedLoopStepper {
            n,
            phi,
            g0,
            g1,
            c: f.c.iter().copied().collect(),
            inv_1pd: inv,
            x: vec![0.0; n],
            scratch: vec![0.0; n],
        })
    }

    /// Detector signal `e` for the current input sample.
    #[inline]
    pub fn error_signal(&self, w: f64) -> f64 {
        let cx: f64 = self.c.iter().zip(&self.x).map(|(c, x)| c * x).sum();
        (w - cx) * self.inv_1pd
    }

    /// Advances the state over one step with input going from `w0` to `w1`.
    #[inline]
    pub fn advance(&mut self, w0: f64, w1: f64) {
        let n = self.n;
        let dw = w1 - w0;
        for i in 0..n {
            let row = &self.phi[i * n..(i + 1) * n];
            let mut acc = self.g0[i] * w0 + self.g1[i] * dw;
            for (p, x) in row.iter().zip(&self.x) {
                acc += p * x;
            }
            self.scratch[i] = acc;
        }
        std::mem::swap(&mut self.x, &mut self.scratch);
    }

    pub fn reset(&mut self) {
        self.x.iter_mut().for_each(|x| *x = 0.0);
    }
}

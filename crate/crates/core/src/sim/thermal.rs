//! Colored-noise stand-in for the intensity modulation of the other atoms.
//!
//! White noise of density `A = Nζ²/(√(8π)·k·vth)` is passed through a
//! Gaussian FIR whose power response is `exp(−ω²/(8k²vth²))`, giving the
//! open-loop thermal spectrum of the sample.

use std::collections::VecDeque;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Kernel half-width in standard deviations.
const KERNEL_SIGMAS: f64 = 6.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermalSurrogate {
    /// Number of other atoms.
    pub n: f64,
    /// Their thermal velocity, m/s.
    pub v_th: f64,
}

impl ThermalSurrogate {
    /// White input density `Nζ²/(√(8π)·k·vth)`, per rad/s.
    pub fn white_density(&self, zeta: f64, k: f64) -> f64 {
        self.n * zeta * zeta / ((8.0 * PI).sqrt() * k * self.v_th)
    }
}

/// Causal FIR with taps `dt·g(t)`, `g(t) = (2k·vth/√π)·exp(−4k²vth²t²)`,
/// centred at the middle tap and normalized to unit DC gain.
#[derive(Clone, Debug)]
pub struct GaussianFir {
    taps: Vec<f64>,
    history: VecDeque<f64>,
}

impl GaussianFir {
    pub fn new(k: f64, v_th: f64, dt: f64) -> Result<Self> {
        if !(k > 0.0 && v_th > 0.0 && dt > 0.0) {
            return Err(Error::param("v_th", "k, v_th and dt must be positive"));
        }
        let sigma_t = 1.0 / (2.0 * 2f64.sqrt() * k * v_th);
        let half = (KERNEL_SIGMAS * sigma_t / dt).ceil() as usize;
        if half > 1 << 20 {
            return Err(Error::param(
                "dt",
                "thermal kernel would need more than 2^21 taps",
            ));
        }
        let kv = k * v_th;
        let mut taps: Vec<f64> = (0..=2 * half)
            .map(|j| {
                let t = (j as f64 - half as f64) * dt;
                dt * 2.0 * kv / PI.sqrt() * (-4.0 * kv * kv * t * t).exp()
            })
            .collect();
        let total: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|h| *h /= total);
        Ok(GaussianFir {
            history: VecDeque::from(vec![0.0; taps.len()]),
            taps,
        })
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// Feeds one white sample and returns the filtered output.
    pub fn push(&mut self, x: f64) -> f64 {
        self.history.pop_back();
        self.history.push_front(x);
        self.taps
            .iter()
            .zip(&self.history)
            .map(|(h, x)| h * x)
            .sum()
    }

    /// `|G(ω)|²` of the discrete kernel.
    pub fn power_response(&self, omega: f64, dt: f64) -> f64 {
        let (mut re, mut im) = (0.0, 0.0);
        for (j, h) in self.taps.iter().enumerate() {
            let ph = omega * j as f64 * dt;
            re += h * ph.cos();
            im -= h * ph.sin();
        }
        re * re + im * im
    }
}

//! Welch spectral estimates, single-sided in angular frequency.
//!
//! Hann-windowed segments overlapping by half, each with its mean removed.
//! Per segment `S_k = 2|X_k|²·dt/(2π·Σw²)` (no factor two at DC and
//! Nyquist), so white noise of per-sample variance `σ²` comes out flat at
//! `σ²·dt/π` and `∫ S dω` equals the variance.
//!
//! Removing the segment mean also takes out part of the first bin above DC:
//! under a Hann window that bin reads about 1/6 low for a flat spectrum.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::noise::{NoiseSource, NoiseSpectrum, Normalization};
use crate::{Error, Result};

/// Shortest series accepted by [`estimate_psd`].
pub const MIN_SERIES: usize = 1024;
/// Default segment length.
pub const DEFAULT_SEGMENT: usize = 1024;

/// Streaming Welch accumulator.
pub struct Welch {
    seg: usize,
    hop: usize,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    ring: Vec<f64>,
    filled: usize,
    since_last: usize,
    head: usize,
    sum: Vec<f64>,
    segments: usize,
    buf: Vec<Complex<f64>>,
}

impl Welch {
    pub fn new(seg: usize) -> Result<Self> {
        if seg < 16 || !seg.is_multiple_of(2) {
            return Err(Error::param("segment", "must be even and at least 16"));
        }
        let window: Vec<f64> = (0..seg)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / seg as f64).cos())
            .collect();
        Ok(Welch {
            seg,
            hop: seg / 2,
            window,
            fft: FftPlanner::new().plan_fft_forward(seg),
            ring: vec![0.0; seg],
            filled: 0,
            since_last: 0,
            head: 0,
            sum: vec![0.0; seg / 2 + 1],
            segments: 0,
            buf: vec![Complex::new(0.0, 0.0); seg],
        })
    }

    pub fn push(&mut self, x: f64) {
        self.ring[self.head] = x;
        self.head = (self.head + 1) % self.seg;
        self.filled = (self.filled + 1).min(self.seg);
        self.since_last += 1;
        if self.filled == self.seg && (self.segments == 0 || self.since_last >= self.hop) {
            self.process();
            self.since_last = 0;
        }
    }

    fn process(&mut self) {
        let mean = self.ring.iter().sum::<f64>() / self.seg as f64;
        for i in 0..self.seg {
            let x = self.ring[(self.head + i) % self.seg];
            self.buf[i] = Complex::new((x - mean) * self.window[i], 0.0);
        }
        self.fft.process(&mut self.buf);
        for (s, x) in self.sum.iter_mut().zip(&self.buf) {
            *s += x.norm_sqr();
        }
        self.segments += 1;
    }

    pub fn segments(&self) -> usize {
        self.segments
    }

    /// Raw periodogram sums and segment count, for merging.
    pub fn into_parts(self) -> (Vec<f64>, usize) {
        (self.sum, self.segments)
    }
}

/// Turns merged periodogram sums into a spectrum.
pub fn spectrum_from_sums(
    sum: &[f64],
    segments: usize,
    seg: usize,
    dt: f64,
) -> Result<NoiseSpectrum> {
    if segments == 0 {
        return Err(Error::SeriesTooShort { len: 0, min: seg });
    }
    let window_power: f64 = (0..seg)
        .map(|i| (0.5 - 0.5 * (2.0 * PI * i as f64 / seg as f64).cos()).powi(2))
        .sum();
    let last = seg / 2;
    let omegas = (0..=last)
        .map(|k| 2.0 * PI * k as f64 / (seg as f64 * dt))
        .collect();
    let density = sum
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let one_sided = if k == 0 || k == last { 1.0 } else { 2.0 };
            one_sided * s / segments as f64 * dt / (2.0 * PI * window_power)
        })
        .collect();
    NoiseSpectrum::new(
        omegas,
        density,
        Normalization::SingleSidedAngular,
        NoiseSource::Total,
    )
}

/// Welch estimate with the default segment length (shortened to a quarter
/// of the series if needed).
pub fn estimate_psd(series: &[f64], dt: f64) -> Result<NoiseSpectrum> {
    let seg = DEFAULT_SEGMENT.min(series.len() / 4 / 2 * 2).max(256);
    estimate_psd_with(series, dt, seg)
}

pub fn estimate_psd_with(series: &[f64], dt: f64, seg: usize) -> Result<NoiseSpectrum> {
    if series.len() < MIN_SERIES {
        return Err(Error::SeriesTooShort {
            len: series.len(),
            min: MIN_SERIES,
        });
    }
    if !(dt > 0.0) {
        return Err(Error::param("dt", "must be positive"));
    }
    if seg > series.len() {
        return Err(Error::param("segment", "longer than the series"));
    }
    let mut w = Welch::new(seg)?;
    for &x in series {
        w.push(x);
    }
    let (sum, n) = w.into_parts();
    spectrum_from_sums(&sum, n, seg, dt)
}

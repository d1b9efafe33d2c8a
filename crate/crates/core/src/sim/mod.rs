//! Time-domain Langevin model of a single atom under feedback.
//!
//! Each step reads the atom's position into the cavity error signal, closes
//! the loop through the realized filter, modulates the potential depth
//! `U = U0(1 + ε)` and moves the atom with a kick-drift step under the force
//! `2kU·sin 2kx`. Noise enters as
//!
//! * photon shot noise on the intracavity intensity, density
//!   `photon_quantum_factor·ħ²ηΓsc/(2πU0²)`;
//! * detection noise at the detector, density `(1/q − 1)·ħ²ηΓsc/(2πU0²)`;
//! * Gaussian recoil kicks from free-space scattering, heating at `2ErΓsc`;
//! * optionally, the colored intensity noise of `N` other atoms.
//!
//! A white density `S` is injected as per-step variance `πS/dt`. Velocities
//! well above `v_max` are sampled with fewer than the configured samples per
//! Doppler cycle and are outside the model's accuracy.

pub mod drag;
pub mod filter;
pub mod psd;
pub mod thermal;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{HBAR, KB};
use crate::force::fmt_f64;
use crate::lti::RationalTransferFunction;
use crate::noise::NoiseSpectrum;
use crate::optics::recoil_energy;
use crate::{Error, Result};

pub use drag::{measure_drag, DragMeasurement, DragOptions};
pub use filter::{realize, ClosedLoopStepper, StateSpaceFilter};
pub use psd::{estimate_psd, estimate_psd_with};
pub use thermal::{GaussianFir, ThermalSurrogate};

/// Minimum samples per fastest cycle.
pub const MIN_SAMPLES_PER_CYCLE: f64 = 20.0;
/// Trend threshold for [`equilibrium_temperature`], in standard errors.
pub const TREND_SIGMAS: f64 = 4.0;

/// Atom, light and detector parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimPhysics {
    /// 1/m.
    pub k: f64,
    /// kg.
    pub mass: f64,
    /// Free-space scattering rate, 1/s.
    pub gamma_sc: f64,
    pub eta: f64,
    /// Potential depth, J.
    pub u0: f64,
    /// Resonator slope.
    pub r: f64,
    /// Detection efficiency in (0, 1].
    pub q: f64,
}

impl SimPhysics {
    pub fn zeta(&self) -> f64 {
        HBAR * self.eta * self.gamma_sc / self.u0
    }

    pub fn recoil_energy(&self) -> f64 {
        recoil_energy(self.k, self.mass)
    }

    /// Open-loop photon shot-noise density without the quantum factor,
    /// `ħ²ηΓsc/(2πU0²)`.
    pub fn shot_density(&self) -> f64 {
        HBAR * HBAR * self.eta * self.gamma_sc / (2.0 * PI * self.u0 * self.u0)
    }

    fn validate(&self) -> Result<()> {
        for (name, x) in [("k", self.k), ("mass", self.mass)] {
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::param(name, "must be positive and finite"));
            }
        }
        if !(self.gamma_sc >= 0.0 && self.eta >= 0.0) {
            return Err(Error::param(
                "gamma_sc",
                "gamma_sc and eta must be non-negative",
            ));
        }
        if !(self.u0 != 0.0 && self.u0.is_finite()) {
            return Err(Error::param(
                "u0",
                "potential depth must be nonzero and finite",
            ));
        }
        if !(self.r.abs() <= 1.0) {
            return Err(Error::param("r", "resonator slope must lie in [-1, 1]"));
        }
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(Error::param("q", "detection efficiency must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSwitches {
    pub photon_shot: bool,
    pub detection: bool,
    pub freespace: bool,
    /// Multiplies the photon shot-noise density; 2 for quantum noise.
    pub photon_quantum_factor: f64,
    pub thermal: Option<ThermalSurrogate>,
    /// The atom's own position signal `rζ·cos 2kx`.
    pub atom_signal: bool,
}

impl Default for NoiseSwitches {
    fn default() -> Self {
        NoiseSwitches {
            photon_shot: true,
            detection: true,
            freespace: true,
            photon_quantum_factor: 2.0,
            thermal: None,
            atom_signal: true,
        }
    }
}

impl NoiseSwitches {
    /// Everything off except the atom signal.
    pub fn quiet() -> Self {
        NoiseSwitches {
            photon_shot: false,
            detection: false,
            freespace: false,
            photon_quantum_factor: 2.0,
            thermal: None,
            atom_signal: true,
        }
    }

    fn any(&self) -> bool {
        self.photon_shot || self.detection || self.freespace || self.thermal.is_some()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum VelocityInit {
    Fixed {
        v: f64,
    },
    /// Maxwell–Boltzmann along the axis at temperature `t`, K.
    Thermal {
        t: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PositionInit {
    Fixed {
        x: f64,
    },
    /// Uniform over one standing-wave period.
    Uniform,
}

/// Full description of a simulation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub physics: SimPhysics,
    /// Loop gain in physical units (rad/s).
    pub loop_gain: RationalTransferFunction,
    /// Roll-off corner, rad/s; required when the loop is improper.
    #[serde(default)]
    pub rolloff: Option<f64>,
    /// Step, s. Chosen from the sampling rule when absent.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_samples")]
    pub samples_per_cycle: f64,
    /// Largest velocity the step must resolve, m/s.
    pub v_max: f64,
    pub n_steps: u64,
    #[serde(default = "one")]
    pub n_trajectories: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub noise: NoiseSwitches,
    pub velocity: VelocityInit,
    #[serde(default = "uniform")]
    pub position: PositionInit,
    /// Hold the velocity at its initial value (drag measurements).
    #[serde(default)]
    pub clamp_velocity: bool,
    /// Steps discarded before averaging.
    #[serde(default)]
    pub burn_in: u64,
    /// Trace and mean-square-velocity sampling interval, steps.
    #[serde(default = "default_decimation")]
    pub decimation: u64,
    #[serde(default)]
    pub record_traces: bool,
    /// Welch segment length for the ε spectrum; no spectrum when absent.
    #[serde(default)]
    pub psd_segment: Option<usize>,
    /// Instability bound on the block mean of `|ε|`, in units of
    /// `max(1, per-sample injected noise σ)`.
    #[serde(default = "default_eps_bound")]
    pub eps_bound: f64,
    #[serde(default = "default_guard_window")]
    pub guard_window: u64,
}

fn default_samples() -> f64 {
    MIN_SAMPLES_PER_CYCLE
}
fn one() -> usize {
    1
}
fn uniform() -> PositionInit {
    PositionInit::Uniform
}
fn default_decimation() -> u64 {
    1000
}
fn default_eps_bound() -> f64 {
    10.0
}
fn default_guard_window() -> u64 {
    1000
}

impl SimConfig {
    /// A config with defaults for everything but the physics, loop and run
    /// length.
    pub fn new(
        physics: SimPhysics,
        loop_gain: RationalTransferFunction,
        v_max: f64,
        n_steps: u64,
    ) -> Self {
        SimConfig {
            physics,
            loop_gain,
            rolloff: None,
            dt: None,
            samples_per_cycle: MIN_SAMPLES_PER_CYCLE,
            v_max,
            n_steps,
            n_trajectories: 1,
            seed: 0,
            noise: NoiseSwitches::default(),
            velocity: VelocityInit::Fixed { v: 0.0 },
            position: PositionInit::Uniform,
            clamp_velocity: false,
            burn_in: 0,
            decimation: default_decimation(),
            record_traces: false,
            psd_segment: None,
            eps_bound: default_eps_bound(),
            guard_window: default_guard_window(),
        }
    }

    /// Loop that is realized: rolled off when improper.
    pub fn realized_loop(&self) -> Result<RationalTransferFunction> {
        filter::realizable_loop(&self.loop_gain, self.rolloff)
    }

    /// Fastest frequency the step must resolve: `max(2k·v_max, loop
    /// frequencies, roll-off corner)`.
    pub fn fastest_frequency(&self) -> Result<f64> {
        let h = self.realized_loop()?;
        Ok((2.0 * self.physics.k * self.v_max)
            .max(h.fastest_frequency())
            .max(self.rolloff.unwrap_or(0.0)))
    }

    /// The step actually used.
    pub fn effective_dt(&self) -> Result<f64> {
        let fastest = self.fastest_frequency()?;
        match self.dt {
            Some(dt) => Ok(dt),
            None if fastest > 0.0 => Ok(2.0 * PI / (self.samples_per_cycle * fastest)),
            None => Err(Error::param(
                "dt",
                "nothing sets a time scale; give dt or v_max",
            )),
        }
    }

    /// Checks every invariant without running anything.
    pub fn validate(&self) -> Result<()> {
        self.physics.validate()?;
        if !(self.v_max >= 0.0 && self.v_max.is_finite()) {
            return Err(Error::param("v_max", "must be non-negative and finite"));
        }
        if !(self.samples_per_cycle >= MIN_SAMPLES_PER_CYCLE) {
            return Err(Error::param(
                "samples_per_cycle",
                format!("must be at least {MIN_SAMPLES_PER_CYCLE}"),
            ));
        }
        if let Some(w) = self.rolloff {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::param("rolloff", "must be positive and finite"));
            }
        }
        if self.n_trajectories == 0 || self.n_steps == 0 {
            return Err(Error::param(
                "n_steps",
                "need at least one step and one trajectory",
            ));
        }
        if self.burn_in >= self.n_steps {
            return Err(Error::param("burn_in", "must be shorter than the run"));
        }
        if self.decimation == 0 || self.guard_window == 0 {
            return Err(Error::param(
                "decimation",
                "decimation and guard_window must be positive",
            ));
        }
        if !(self.eps_bound > 0.0) {
            return Err(Error::param("eps_bound", "must be positive"));
        }
        if !(self.noise.photon_quantum_factor >= 0.0) {
            return Err(Error::param(
                "photon_quantum_factor",
                "must be non-negative",
            ));
        }
        match self.velocity {
            VelocityInit::Fixed { v } if !v.is_finite() => {
                return Err(Error::param("velocity", "must be finite"))
            }
            VelocityInit::Thermal { t } if !(t >= 0.0 && t.is_finite()) => {
                return Err(Error::param("velocity", "temperature must be non-negative"))
            }
            _ => {}
        }
        self.realized_loop()?.require_stable()?;
        let dt = self.effective_dt()?;
        let fastest = self.fastest_frequency()?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::param("dt", "must be positive and finite"));
        }
        if dt * fastest > 2.0 * PI / MIN_SAMPLES_PER_CYCLE * (1.0 + 1e-12) {
            return Err(Error::param(
                "dt",
                format!(
                    "dt = {dt:e} s gives {:.2} samples per cycle at {fastest:e} rad/s; need at least {MIN_SAMPLES_PER_CYCLE}",
                    2.0 * PI / (dt * fastest)
                ),
            ));
        }
        if let Some(seg) = self.psd_segment {
            if seg < 16 || seg % 2 != 0 {
                return Err(Error::param("psd_segment", "must be even and at least 16"));
            }
        }
        if let Some(th) = self.noise.thermal {
            if !(th.n >= 0.0 && th.v_th > 0.0) {
                return Err(Error::param("thermal", "need n >= 0 and v_th > 0"));
            }
        }
        Ok(())
    }
}

/// Energy bookkeeping for one trajectory, J.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub kinetic_initial: f64,
    pub kinetic_final: f64,
    /// Work done by the modulated optical force.
    pub work_potential: f64,
    /// Energy added by recoil kicks.
    pub recoil_heating: f64,
    /// `ΔK − work − recoil`; rounding only.
    pub residual: f64,
}

/// Staggered energy `½m·v₋·v₊ + V(x)` of an unmodulated run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyDrift {
    pub max_rel: f64,
    /// Same, over the first tenth of the run.
    pub max_rel_first_tenth: f64,
}

/// Decimated time series, columns `t,x,v,eps`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub eps: Vec<f64>,
}

impl Trace {
    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::from("t,x,v,eps\n");
        for i in 0..self.t.len() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                fmt_f64(self.t[i]),
                fmt_f64(self.x[i]),
                fmt_f64(self.v[i]),
                fmt_f64(self.eps[i])
            );
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryResult {
    pub index: usize,
    pub x_final: f64,
    pub v_final: f64,
    pub ledger: EnergyLedger,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_drift: Option<EnergyDrift>,
    /// Mean optical force after burn-in, N.
    pub mean_force: f64,
    /// Mean `v²` after burn-in, and over each half of that window.
    pub mean_v2: f64,
    pub mean_v2_halves: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Trace>,
}

/// Temperature from the post-burn-in velocity spread.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemperatureEstimate {
    /// K.
    pub kelvin: f64,
    /// Standard error from trajectory-to-trajectory scatter, K.
    pub stderr: f64,
    pub first_half: f64,
    pub second_half: f64,
    /// Second-half minus first-half, in standard errors of the difference.
    pub trend_sigmas: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub dt: f64,
    pub n_steps: u64,
    pub trajectories: Vec<TrajectoryResult>,
    /// `(t, ⟨v²⟩)` averaged over trajectories at decimated times.
    pub mean_square_velocity: Vec<[f64; 2]>,
    pub temperature: TemperatureEstimate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psd: Option<NoiseSpectrum>,
}

impl SimResult {
    /// Copy without the per-trajectory traces.
    pub fn summary(&self) -> SimResult {
        let mut s = self.clone();
        for t in &mut s.trajectories {
            t.trace = None;
        }
        s
    }

    /// Least-squares slope of `⟨½mv²⟩` against time, W.
    pub fn heating_rate(&self, mass: f64) -> f64 {
        let pts = &self.mean_square_velocity;
        let n = pts.len() as f64;
        let (st, se) = pts
            .iter()
            .fold((0.0, 0.0), |(a, b), p| (a + p[0], b + 0.5 * mass * p[1]));
        let (tm, em) = (st / n, se / n);
        let (num, den) = pts.iter().fold((0.0, 0.0), |(a, b), p| {
            let dtm = p[0] - tm;
            (a + dtm * (0.5 * mass * p[1] - em), b + dtm * dtm)
        });
        num / den
    }
}

struct TrajectoryOutput {
    result: TrajectoryResult,
    v2_series: Vec<f64>,
    welch: Option<(Vec<f64>, usize)>,
}

/// Runs every trajectory. Trajectory `i` draws from the ChaCha8 stream `i`
/// of `seed`, so results do not depend on scheduling.
pub fn run(config: &SimConfig) -> Result<SimResult> {
    config.validate()?;
    let dt = config.effective_dt()?;
    let filter = realize(&config.loop_gain, config.rolloff)?;
    let stepper = ClosedLoopStepper::new(&filter, dt)?;
    let outputs = (0..config.n_trajectories)
        .into_par_iter()
        .map(|i| run_trajectory(config, &stepper, dt, i))
        .collect::<Result<Vec<_>>>()?;

    let n_samples = outputs[0].v2_series.len();
    let mean_square_velocity = (0..n_samples)
        .map(|j| {
            let t = ((j as u64 + 1) * config.decimation) as f64 * dt;
            let m = outputs.iter().map(|o| o.v2_series[j]).sum::<f64>() / outputs.len() as f64;
            [t, m]
        })
        .collect();

    let psd = match config.psd_segment {
        Some(seg) => {
            let mut sum = vec![0.0; seg / 2 + 1];
            let mut count = 0;
            for o in &outputs {
                if let Some((s, c)) = &o.welch {
                    sum.iter_mut().zip(s).for_each(|(a, b)| *a += b);
                    count += c;
                }
            }
            Some(psd::spectrum_from_sums(&sum, count, seg, dt)?)
        }
        None => None,
    };

    let trajectories: Vec<TrajectoryResult> = outputs.into_iter().map(|o| o.result).collect();
    let temperature = temperature_from(&trajectories, config.physics.mass);
    Ok(SimResult {
        dt,
        n_steps: config.n_steps,
        trajectories,
        mean_square_velocity,
        temperature,
        psd,
    })
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn temperature_from(trajs: &[TrajectoryResult], mass: f64) -> TemperatureEstimate {
    let to_k = |v2: f64| mass * v2 / KB;
    let all: Vec<f64> = trajs.iter().map(|t| to_k(t.mean_v2)).collect();
    let first: Vec<f64> = trajs.iter().map(|t| to_k(t.mean_v2_halves[0])).collect();
    let second: Vec<f64> = trajs.iter().map(|t| to_k(t.mean_v2_halves[1])).collect();
    let diff: Vec<f64> = first.iter().zip(&second).map(|(a, b)| b - a).collect();
    let (kelvin, stderr) = mean_and_stderr(&all);
    let (d, d_err) = mean_and_stderr(&diff);
    TemperatureEstimate {
        kelvin,
        stderr,
        first_half: mean_and_stderr(&first).0,
        second_half: mean_and_stderr(&second).0,
        trend_sigmas: if d_err > 0.0 { d / d_err } else { 0.0 },
    }
}

/// Runs `config` and returns the equilibrium temperature, failing when the
/// two halves of the averaging window differ by more than
/// [`TREND_SIGMAS`] standard errors.
pub fn equilibrium_temperature(config: &SimConfig) -> Result<TemperatureEstimate> {
    let result = run(config)?;
    let t = result.temperature;
    if t.trend_sigmas.abs() > TREND_SIGMAS {
        return Err(Error::NonStationary {
            first: t.first_half,
            second: t.second_half,
            sigmas: t.trend_sigmas,
        });
    }
    Ok(t)
}

fn run_trajectory(
    cfg: &SimConfig,
    stepper: &ClosedLoopStepper,
    dt: f64,
    index: usize,
) -> Result<TrajectoryOutput> {
    let p = &cfg.physics;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);

    let k2 = 2.0 * p.k;
    let lambda_half = PI / p.k;
    let mut x = match cfg.position {
        PositionInit::Fixed { x } => x,
        PositionInit::Uniform => rng.random::<f64>() * lambda_half,
    };
    let mut v = match cfg.velocity {
        VelocityInit::Fixed { v } => v,
        VelocityInit::Thermal { t } => (KB * t / p.mass).sqrt() * gauss(&mut rng),
    };

    let noise = &cfg.noise;
    let s_psn = p.shot_density();
    let sigma_p = if noise.photon_shot {
        (PI * noise.photon_quantum_factor * s_psn / dt).sqrt()
    } else {
        0.0
    };
    let sigma_d = if noise.detection {
        (PI * (1.0 / p.q - 1.0) * s_psn / dt).sqrt()
    } else {
        0.0
    };
    let sigma_kick = if noise.freespace && !cfg.clamp_velocity {
        let w_fs = 2.0 * p.recoil_energy() * p.gamma_sc;
        (2.0 * w_fs / p.mass * dt).sqrt()
    } else {
        0.0
    };
    let zeta = p.zeta();
    let mut thermal = match noise.thermal {
        Some(th) if th.n > 0.0 => {
            let sigma = (PI * th.white_density(zeta, p.k) / dt).sqrt();
            Some((GaussianFir::new(p.k, th.v_th, dt)?, sigma))
        }
        _ => None,
    };
    let sigma_th = thermal.as_ref().map_or(0.0, |t| t.1);
    let noise_scale = (sigma_p * sigma_p + sigma_d * sigma_d + sigma_th * sigma_th)
        .sqrt()
        .max(1.0);
    let eps_limit = cfg.eps_bound * noise_scale;
    let signal = if noise.atom_signal { p.r * zeta } else { 0.0 };

    let mut draw = |thermal: &mut Option<(GaussianFir, f64)>| -> (f64, f64, f64) {
        let np = if sigma_p > 0.0 {
            sigma_p * gauss(&mut rng)
        } else {
            0.0
        };
        let nd = if sigma_d > 0.0 {
            sigma_d * gauss(&mut rng)
        } else {
            0.0
        };
        let nt = match thermal {
            Some((fir, s)) => fir.push(*s * gauss(&mut rng)),
            None => 0.0,
        };
        (np, nd, nt)
    };
    // Prime the thermal filter so it starts in its stationary state.
    if let Some((fir, _)) = thermal.as_mut() {
        for _ in 0..fir.len() {
            let _ = draw(&mut thermal);
        }
    }

    let mut stepper = stepper.clone();
    stepper.reset();
    let (np, mut nd, nt) = draw(&mut thermal);
    let mut w = signal * (k2 * x).cos() + np + nd + nt;

    let kinetic_initial = 0.5 * p.mass * v * v;
    let mut work = 0.0;
    let mut recoil_heat = 0.0;
    let mut force_sum = 0.0;
    let post = cfg.n_steps - cfg.burn_in;
    let half = cfg.burn_in + post / 2;
    let mut v2_sum = [0.0, 0.0];
    let mut v2_series = Vec::with_capacity((cfg.n_steps / cfg.decimation) as usize);
    let mut trace = cfg.record_traces.then(Trace::default);
    let mut welch = match cfg.psd_segment {
        Some(seg) => Some(psd::Welch::new(seg)?),
        None => None,
    };
    let track_energy = cfg.loop_gain.is_zero() && !noise.any() && !cfg.clamp_velocity;
    let mut e_ref = f64::NAN;
    let mut drift = EnergyDrift {
        max_rel: 0.0,
        max_rel_first_tenth: 0.0,
    };
    let tenth = cfg.n_steps / 10;
    let mut guard_sum = 0.0;
    let mut guard_count = 0u64;
    // Recoil kicks need their own draws; a second stream keeps the noise
    // sequence of the loop independent of whether kicks are on.
    let mut kick_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    kick_rng.set_stream(index as u64);

    for step in 0..cfg.n_steps {
        let eps = stepper.error_signal(w) - nd;
        if !eps.is_finite() || !v.is_finite() {
            return Err(Error::SimInstability {
                trajectory: index,
                step,
                value: eps.abs(),
                bound: eps_limit,
            });
        }
        guard_sum += eps.abs();
        guard_count += 1;
        if guard_count == cfg.guard_window {
            let mean = guard_sum / guard_count as f64;
            if mean > eps_limit {
                return Err(Error::SimInstability {
                    trajectory: index,
                    step,
                    value: mean,
                    bound: eps_limit,
                });
            }
            guard_sum = 0.0;
            guard_count = 0;
        }
        let depth = p.u0 * (1.0 + eps);
        let phase = k2 * x;
        let force = k2 * depth * phase.sin();
        let v_old = v;
        if !cfg.clamp_velocity {
            v += force / p.mass * dt;
            work += force * 0.5 * (v_old + v) * dt;
        }
        if track_energy {
            let c = phase.cos();
            let pot = p.u0 * c + 0.5 * p.u0 * signal * c * c;
            let e = 0.5 * p.mass * v_old * v + pot;
            if step == 0 {
                e_ref = e;
            } else {
                let rel = ((e - e_ref) / e_ref).abs();
                drift.max_rel = drift.max_rel.max(rel);
                if step <= tenth {
                    drift.max_rel_first_tenth = drift.max_rel_first_tenth.max(rel);
                }
            }
        }
        if sigma_kick > 0.0 {
            let dv = sigma_kick * gauss(&mut kick_rng);
            recoil_heat += 0.5 * p.mass * ((v + dv) * (v + dv) - v * v);
            v += dv;
        }
        x += v * dt;
        if x.abs() > 1e6 * lambda_half {
            x %= lambda_half;
        }

        if step >= cfg.burn_in {
            force_sum += force;
            let slot = usize::from(step >= half);
            v2_sum[slot] += v * v;
            if let Some(wl) = welch.as_mut() {
                wl.push(eps);
            }
        }
        if (step + 1) % cfg.decimation == 0 {
            v2_series.push(v * v);
            if let Some(tr) = trace.as_mut() {
                tr.t.push((step + 1) as f64 * dt);
                tr.x.push(x);
                tr.v.push(v);
                tr.eps.push(eps);
            }
        }

        let (np, nd_next, nt) = draw(&mut thermal);
        let w_next = signal * (k2 * x).cos() + np + nd_next + nt;
        stepper.advance(w, w_next);
        w = w_next;
        nd = nd_next;
    }

    let kinetic_final = 0.5 * p.mass * v * v;
    let n_first = (half - cfg.burn_in) as f64;
    let n_second = (cfg.n_steps - half) as f64;
    let halves = [
        if n_first > 0.0 {
            v2_sum[0] / n_first
        } else {
            f64::NAN
        },
        v2_sum[1] / n_second,
    ];
    let result = TrajectoryResult {
        index,
        x_final: x,
        v_final: v,
        ledger: EnergyLedger {
            kinetic_initial,
            kinetic_final,
            work_potential: work,
            recoil_heating: recoil_heat,
            residual: kinetic_final - kinetic_initial - work - recoil_heat,
        },
        energy_drift: track_energy.then_some(drift),
        mean_force: force_sum / post as f64,
        mean_v2: (v2_sum[0] + v2_sum[1]) / post as f64,
        mean_v2_halves: halves,
        trace,
    };
    Ok(TrajectoryOutput {
        result,
        v2_series,
        welch: welch.map(psd::Welch::into_parts),
    })
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

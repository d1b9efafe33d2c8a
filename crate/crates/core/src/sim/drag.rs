//! Steady-state drag from the time-domain model.
//!
//! The atom is dragged through the lattice at a fixed velocity with every
//! noise source off. Once the loop transient has died out the force is
//! averaged over whole Doppler periods and compared with the frequency-domain
//! prediction for the un-rolled loop.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{run, NoiseSwitches, PositionInit, SimConfig, SimPhysics, VelocityInit};
use crate::force::{force, ForceParams};
use crate::lti::RationalTransferFunction;
use crate::{Error, Result};

const MAX_ROLLOFF_FACTOR: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DragOptions {
    /// Starting roll-off corner over the fastest loop or Doppler frequency.
    pub rolloff_factor: f64,
    /// Largest relative change the roll-off may make to the predicted force;
    /// the corner is raised until the rolled loop meets it.
    pub rolloff_tolerance: f64,
    /// Samples per period of the fastest frequency in the realized loop.
    pub samples_per_cycle: f64,
    /// Doppler periods averaged.
    pub periods: u64,
    /// Settling time in units of the slowest closed-loop time constant.
    pub settle_time_constants: f64,
}

impl Default for DragOptions {
    fn default() -> Self {
        DragOptions {
            rolloff_factor: 100.0,
            rolloff_tolerance: 1e-3,
            samples_per_cycle: 20.0,
            periods: 20,
            settle_time_constants: 30.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DragMeasurement {
    pub v: f64,
    /// Time-averaged force, N.
    pub simulated: f64,
    /// Frequency-domain prediction, N.
    pub analytic: f64,
    /// Roll-off corner used, rad/s.
    pub rolloff: f64,
    pub dt: f64,
    pub steps: u64,
}

impl DragMeasurement {
    /// `|simulated − analytic| / |analytic|`.
    pub fn rel_error(&self) -> f64 {
        (self.simulated - self.analytic).abs() / self.analytic.abs()
    }
}

/// Measures the drag at velocity `v` (nonzero) for loop `h` in physical
/// units. Improper loops are rolled off `rolloff_factor` above the fastest
/// loop or Doppler frequency; the corner doubles until the rolled loop is
/// stable and its predicted force is within `rolloff_tolerance` of the
/// un-rolled one. Loops with a large in-phase gain need a high corner since
/// the roll-off phase leaks `|H1|` into the quadrature.
pub fn measure_drag(
    physics: &SimPhysics,
    h: &RationalTransferFunction,
    v: f64,
    opts: &DragOptions,
) -> Result<DragMeasurement> {
    if !(v != 0.0 && v.is_finite()) {
        return Err(Error::param("v", "drag needs a nonzero finite velocity"));
    }
    let params = ForceParams {
        r: physics.r,
        eta: physics.eta,
        gamma_sc: physics.gamma_sc,
        k: physics.k,
    };
    let analytic = force(h, &params, v)?;
    let omega_d = 2.0 * physics.k * v.abs();

    let base = omega_d.max(h.fastest_frequency());
    let mut rolloff = opts.rolloff_factor * base;
    let slowest = loop {
        let rolled = super::filter::realizable_loop(h, Some(rolloff))?;
        let verdict = rolled.require_stable();
        let close = force(&rolled, &params, v)
            .map(|f| (f - analytic).abs() <= opts.rolloff_tolerance * analytic.abs())
            .unwrap_or(false);
        match verdict {
            Ok(report) if close || h.excess_degree() == 0 => {
                break report
                    .roots
                    .iter()
                    .map(|r| -r.re)
                    .fold(f64::INFINITY, f64::min);
            }
            Err(e) if rolloff > MAX_ROLLOFF_FACTOR * base => return Err(e),
            _ if rolloff > MAX_ROLLOFF_FACTOR * base => {
                return Err(Error::param(
                    "rolloff",
                    "no roll-off corner keeps the force within tolerance",
                ))
            }
            _ => rolloff *= 2.0,
        }
    };

    let mut cfg = SimConfig::new(*physics, h.clone(), v.abs(), 1);
    cfg.rolloff = (h.excess_degree() > 0).then_some(rolloff);
    cfg.samples_per_cycle = opts.samples_per_cycle;
    let fastest = cfg.fastest_frequency()?;
    let per_period = (opts.samples_per_cycle * fastest / omega_d).ceil() as u64;
    let period = 2.0 * PI / omega_d;
    let dt = period / per_period as f64;
    let settle = if slowest.is_finite() {
        (opts.settle_time_constants / slowest / period).ceil() as u64 * per_period
    } else {
        per_period
    };
    let steps = settle + opts.periods * per_period;
    cfg.dt = Some(dt);
    cfg.n_steps = steps;
    cfg.burn_in = settle;
    cfg.noise = NoiseSwitches::quiet();
    cfg.velocity = VelocityInit::Fixed { v };
    cfg.position = PositionInit::Fixed { x: 0.0 };
    cfg.clamp_velocity = true;
    cfg.decimation = steps;
    let result = run(&cfg)?;
    Ok(DragMeasurement {
        v,
        simulated: result.trajectories[0].mean_force,
        analytic,
        rolloff,
        dt,
        steps,
    })
}

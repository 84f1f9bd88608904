//! Periodic event triggering: the triggering function is only evaluated at
//! multiples of a sampling period `h <= tau`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::trigger::{DesignConstants, EtcParams};

/// Sampling period aligned to the simulation clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PetcConfig {
    pub h: f64,
    /// `h / dt`, exact.
    pub steps_per_sample: usize,
}

impl PetcConfig {
    /// True when step `step` of the simulation lands on the h-grid.
    pub fn is_sampling_step(&self, step: usize) -> bool {
        step.is_multiple_of(self.steps_per_sample)
    }
}

/// `h = floor(h_frac * tau / dt) * dt`.
pub fn select_h(consts: &DesignConstants, h_frac: f64, dt: f64) -> Result<PetcConfig> {
    if !(h_frac > 0.0 && h_frac <= 1.0) {
        return Err(Error::InvalidParams(format!(
            "h_frac = {h_frac} must lie in (0, 1]"
        )));
    }
    let requested = h_frac * consts.tau;
    let steps = (requested / dt).floor() as usize;
    if steps == 0 {
        return Err(Error::DtTooCoarse { requested, dt });
    }
    Ok(PetcConfig {
        h: steps as f64 * dt,
        steps_per_sample: steps,
    })
}

/// Validates a user-chosen `h`, rounding it down to the `dt` grid.
pub fn explicit_h(consts: &DesignConstants, h: f64, dt: f64) -> Result<PetcConfig> {
    if !(h > 0.0 && h <= consts.tau) {
        return Err(Error::SamplingPeriodTooLong { h, tau: consts.tau });
    }
    // Tolerate representation error in values such as 0.13 / 1e-4.
    let steps = (h / dt * (1.0 + 1e-12)).floor() as usize;
    if steps == 0 {
        return Err(Error::DtTooCoarse { requested: h, dt });
    }
    Ok(PetcConfig {
        h: steps as f64 * dt,
        steps_per_sample: steps,
    })
}

/// `(e^{a h}(theta_m + a theta) - theta_m) d^2 + a m`.
pub fn gamma_p(d: f64, m: f64, consts: &DesignConstants, params: &EtcParams, h: f64) -> f64 {
    let a = consts.a;
    ((a * h).exp() * (consts.theta_m + a * params.theta) - consts.theta_m) * d * d + a * m
}

/// True iff `t` is an h-grid point and the periodic rule fires there.
pub fn petc_should_trigger(
    t: f64,
    h: f64,
    d: f64,
    m: f64,
    consts: &DesignConstants,
    params: &EtcParams,
) -> bool {
    let n = (t / h).round();
    let on_grid = (t - n * h).abs() <= 1e-9 * h.max(t);
    on_grid && gamma_p(d, m, consts, params, h) > 0.0
}

//! Continuous-time event triggering: design constants, the dynamic
//! variable `m`, the triggering function `theta d^2 + m` and the event log.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gains::GainProfiles;
use crate::grid::{derivative, trapezoid_product};
use crate::plant::PlantCoefficients;

/// How the Lyapunov weight `C` is chosen above its lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CRule {
    /// Use this value; it must exceed the lower bound.
    Fixed { value: f64 },
    /// `C = (1 + margin) * lower bound`.
    Margin { margin: f64 },
}

impl Default for CRule {
    fn default() -> Self {
        CRule::Fixed { value: 413.4211 }
    }
}

/// Tuning parameters of the dynamic triggering rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EtcParams {
    pub eta: f64,
    pub theta: f64,
    pub sigma: f64,
    pub m0: f64,
    pub mu: f64,
    pub delta: f64,
    #[serde(default)]
    pub c_rule: CRule,
}

impl Default for EtcParams {
    fn default() -> Self {
        Self {
            eta: 0.001,
            theta: 1.0,
            sigma: 0.99,
            m0: -1.0,
            mu: 0.016,
            delta: 0.014,
            c_rule: CRule::default(),
        }
    }
}

impl EtcParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad(format!("eta = {} must be positive", self.eta));
        }
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return bad(format!("theta = {} must be positive", self.theta));
        }
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return bad(format!("sigma = {} must lie in (0, 1)", self.sigma));
        }
        if !(self.m0 < 0.0 && self.m0.is_finite()) {
            return bad(format!("m0 = {} must be negative", self.m0));
        }
        if !(self.delta > 0.0 && self.delta < self.mu) {
            return bad(format!(
                "delta = {} must satisfy 0 < delta < mu = {}",
                self.delta, self.mu
            ));
        }
        match self.c_rule {
            CRule::Fixed { value } if !(value > 0.0 && value.is_finite()) => {
                bad(format!("C = {value} must be positive"))
            }
            CRule::Margin { margin } if !(margin > 0.0 && margin.is_finite()) => {
                bad(format!("c margin = {margin} must be positive"))
            }
            _ => Ok(()),
        }
    }
}

/// Every scalar the CETC/PETC rules need.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DesignConstants {
    pub eps0: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: f64,
    pub kappa0: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub a: f64,
    pub tau: f64,
    pub c: f64,
    pub c_lower_bound: f64,
    pub d: f64,
    pub r: f64,
    pub theta_m: f64,
    pub mu: f64,
    pub delta: f64,
    /// `|rho q|`, reported against the bound 1/2.
    pub rho_q: f64,
    pub mu_max: f64,
    /// `N^beta(ell)`, the value entering `eps3`.
    pub n_beta_ell: f64,
}

/// `(1/a) ln(1 + a theta sigma / ((a theta + theta_m)(1 - sigma)))`.
pub fn dwell_time(a: f64, theta: f64, sigma: f64, theta_m: f64) -> f64 {
    (a * theta * sigma / ((a * theta + theta_m) * (1.0 - sigma))).ln_1p() / a
}

/// Gain-dependent bounds on the derivative of the holding error.
pub fn epsilons(gains: &GainProfiles, coeffs: &PlantCoefficients) -> [f64; 4] {
    let dx = gains.grid.dx();
    let (l1, l2, rho, q) = (coeffs.lambda1, coeffs.lambda2, coeffs.rho, coeffs.q);
    let last = gains.n_x() - 1;
    let da = derivative(&gains.n_alpha, dx);
    let db = derivative(&gains.n_beta, dx);
    let eps0 = 5.0
        * (l1 * l1 * trapezoid_product(&da, &da, dx))
            .max(l2 * l2 * trapezoid_product(&db, &db, dx));
    let na_l = gains.n_alpha[last];
    let nb_l = gains.n_beta[last];
    let eps1 = 5.0 * (l1 * na_l - rho * l2 * nb_l).powi(2);
    let inj = trapezoid_product(&gains.n_alpha, &gains.pbar1, dx)
        + trapezoid_product(&gains.n_beta, &gains.pbar2, dx);
    let eps2 = 5.0 * (inj + q * l1 * gains.n_alpha[0]).powi(2);
    let eps3 = 5.0 * (l2 * nb_l).powi(2);
    [eps0, eps1, eps2, eps3]
}

pub fn design_constants(
    gains: &GainProfiles,
    coeffs: &PlantCoefficients,
    params: &EtcParams,
) -> Result<DesignConstants> {
    params.validate()?;
    coeffs.validate()?;
    let rho_q = coeffs.reflection_product();
    if rho_q >= 0.5 {
        return Err(Error::AssumptionViolated { rho_q });
    }
    let mu_max = coeffs.mu_upper_bound();
    let (mu, delta) = (params.mu, params.delta);
    let (l1, l2, ell, q, rho) = (
        coeffs.lambda1,
        coeffs.lambda2,
        coeffs.ell,
        coeffs.q,
        coeffs.rho,
    );
    let c_den = 1.0 - 4.0 * rho * rho * q * q * (mu * coeffs.round_trip_time()).exp();
    if !(mu > 0.0 && mu < mu_max) || c_den <= 0.0 {
        return Err(Error::MuOutOfRange { mu, mu_max });
    }

    let [eps0, eps1, eps2, eps3] = epsilons(gains, coeffs);
    let k = params.theta / (1.0 - params.sigma);
    let (kappa0, kappa1, kappa2) = (k * eps0, k * eps1, k * eps2);
    let r = ((-mu * ell / l1).exp() / l1).min(2.0 * q * q / l2);
    let c_lower_bound = (kappa0 / ((mu - delta) * r)).max(kappa1 / c_den);
    let c = match params.c_rule {
        CRule::Fixed { value } => {
            if value <= c_lower_bound {
                return Err(Error::InvalidParams(format!(
                    "C = {value} does not exceed its lower bound {c_lower_bound}"
                )));
            }
            value
        }
        CRule::Margin { margin } => (1.0 + margin) * c_lower_bound,
    };
    let d = 2.0 * c * q * q;
    let theta_m = 2.0 * d * (mu * ell / l2).exp();
    let a = 1.0 + eps3 + params.eta;
    let tau = dwell_time(a, params.theta, params.sigma, theta_m);
    let last = gains.n_x() - 1;
    Ok(DesignConstants {
        eps0,
        eps1,
        eps2,
        eps3,
        kappa0,
        kappa1,
        kappa2,
        a,
        tau,
        c,
        c_lower_bound,
        d,
        r,
        theta_m,
        mu,
        delta,
        rho_q,
        mu_max,
        n_beta_ell: gains.n_beta[last],
    })
}

/// One entry of the event log. `dwell` is 0 for the initial event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Event {
    pub k: usize,
    pub t: f64,
    pub dwell: f64,
    pub u_held: f64,
}

/// Held input, holding error, dynamic variable and event log of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggerState {
    pub u_held: f64,
    pub d: f64,
    pub m: f64,
    pub last_event_time: f64,
    pub events: Vec<Event>,
}

impl TriggerState {
    /// State before the first event, holding `u0`.
    pub fn new(m0: f64, u0: f64) -> Self {
        Self {
            u_held: u0,
            d: 0.0,
            m: m0,
            last_event_time: f64::NAN,
            events: Vec::new(),
        }
    }

    /// Refreshes `d` against the current continuous input.
    pub fn observe(&mut self, u_continuous: f64) {
        self.d = self.u_held - u_continuous;
    }

    /// Latches `u_continuous` at time `t`, zeroing `d`.
    pub fn fire(&mut self, t: f64, u_continuous: f64) {
        let dwell = if self.events.is_empty() {
            0.0
        } else {
            t - self.last_event_time
        };
        self.u_held = u_continuous;
        self.d = 0.0;
        self.last_event_time = t;
        self.events.push(Event {
            k: self.events.len(),
            t,
            dwell,
            u_held: u_continuous,
        });
    }

    /// Dwell times between consecutive events (excluding the initial one).
    pub fn dwells(&self) -> impl Iterator<Item = f64> + '_ {
        self.events.iter().skip(1).map(|e| e.dwell)
    }
}

/// Right-hand side of the dynamic-variable ODE.
pub fn m_rate(
    ts: &TriggerState,
    consts: &DesignConstants,
    params: &EtcParams,
    norm_target_sq: f64,
    alpha_hat_ell_sq: f64,
    beta_tilde_0_sq: f64,
) -> f64 {
    -params.eta * ts.m + consts.theta_m * ts.d * ts.d
        - consts.kappa0 * norm_target_sq
        - consts.kappa1 * alpha_hat_ell_sq
        - consts.kappa2 * beta_tilde_0_sq
}

/// Explicit Euler step of `m`. No jump is applied at events.
pub fn update_m(
    ts: &mut TriggerState,
    dt: f64,
    consts: &DesignConstants,
    params: &EtcParams,
    norm_target_sq: f64,
    alpha_hat_ell_sq: f64,
    beta_tilde_0_sq: f64,
) {
    ts.m += dt
        * m_rate(
            ts,
            consts,
            params,
            norm_target_sq,
            alpha_hat_ell_sq,
            beta_tilde_0_sq,
        );
}

pub fn gamma_c(ts: &TriggerState, params: &EtcParams) -> f64 {
    params.theta * ts.d * ts.d + ts.m
}

pub fn cetc_should_trigger(ts: &TriggerState, params: &EtcParams) -> bool {
    gamma_c(ts, params) > 0.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn dwell_time_limits() {
        assert_relative_eq!(
            dwell_time(1.0, 1.0, 0.5, 0.0),
            2f64.ln(),
            max_relative = 1e-15
        );
        assert!(dwell_time(3.0, 2.0, 1e-12, 50.0) < 1e-12);
        let taus: Vec<f64> = (1..99)
            .map(|k| dwell_time(1.1, 1.0, k as f64 / 100.0, 600.0))
            .collect();
        assert!(taus.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn triggering_function() {
        let p = EtcParams::default();
        let mut ts = TriggerState::new(-1.0, 0.0);
        assert_eq!(gamma_c(&ts, &p), -1.0);
        ts.d = 1.0;
        assert_eq!(gamma_c(&ts, &p), 0.0);
        assert!(!cetc_should_trigger(&ts, &p));
        ts.m = -1.0 + 1e-9;
        assert!(cetc_should_trigger(&ts, &p));
    }

    #[test]
    fn events_reset_holding_error() {
        let mut ts = TriggerState::new(-1.0, 0.0);
        ts.fire(0.0, 0.0);
        ts.observe(0.4);
        assert_eq!(ts.d, -0.4);
        ts.fire(0.25, 0.4);
        assert_eq!(ts.d, 0.0);
        assert_eq!(
            ts.events[1],
            Event {
                k: 1,
                t: 0.25,
                dwell: 0.25,
                u_held: 0.4
            }
        );
        assert_eq!(ts.dwells().collect::<Vec<_>>(), vec![0.25]);
    }

    #[test]
    fn params_validation() {
        assert!(EtcParams::default().validate().is_ok());
        let bad = [
            EtcParams {
                sigma: 1.0,
                ..Default::default()
            },
            EtcParams {
                m0: 0.0,
                ..Default::default()
            },
            EtcParams {
                delta: 0.02,
                ..Default::default()
            },
            EtcParams {
                eta: 0.0,
                ..Default::default()
            },
            EtcParams {
                c_rule: CRule::Margin { margin: 0.0 },
                ..Default::default()
            },
        ];
        for p in bad {
            assert!(
                matches!(p.validate(), Err(Error::InvalidParams(_))),
                "{p:?}"
            );
        }
    }
}

//! Linearized Saint-Venant open-channel model.
//!
//! Deviations `(H - H_eq, V - V_eq)` are diagonalized into the
//! characteristic pair `xi1 = sqrt(g/H_eq) H~ + V~`, `xi2 = -sqrt(g/H_eq) H~ + V~`
//! and rescaled by `u = exp(gamma1 x / lambda1) xi1`,
//! `v = exp(-gamma2 x / lambda2) xi2`, which removes the diagonal friction
//! terms and leaves the canonical coupled system. The downstream sluice gate
//! opening maps affinely onto the canonical boundary input.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::UniformGrid;
use crate::plant::{PlantCoefficients, Profile};
use crate::sim::HyperbolicState;

/// Physical canal parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CanalConfig {
    pub g: f64,
    pub ell: f64,
    pub cf: f64,
    pub h_eq: f64,
    pub v_eq: f64,
    pub h_ell: f64,
    pub k_g: f64,
    /// Bottom slope. Derived from the equilibrium when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_b: Option<f64>,
}

impl Default for CanalConfig {
    fn default() -> Self {
        Self {
            g: 9.81,
            ell: 10.0,
            cf: 0.2,
            h_eq: 2.0,
            v_eq: 1.0,
            h_ell: 0.1,
            k_g: 0.6,
            s_b: None,
        }
    }
}

impl CanalConfig {
    /// Inflow discharge per unit width.
    pub fn q0(&self) -> f64 {
        self.h_eq * self.v_eq
    }

    /// Bottom slope that makes `(H_eq, V_eq)` an equilibrium.
    pub fn equilibrium_slope(&self) -> f64 {
        self.cf * self.v_eq * self.v_eq / (self.g * self.h_eq)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("g", self.g),
            ("ell", self.ell),
            ("h_eq", self.h_eq),
            ("v_eq", self.v_eq),
            ("h_ell", self.h_ell),
            ("k_g", self.k_g),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidCanal(format!(
                    "{name} = {v} must be positive"
                )));
            }
        }
        if !(self.cf.is_finite() && self.cf >= 0.0) {
            return Err(Error::InvalidCanal(format!(
                "cf = {} must be nonnegative",
                self.cf
            )));
        }
        if self.h_ell >= self.h_eq {
            return Err(Error::InvalidCanal(format!(
                "downstream level h_ell = {} must lie below h_eq = {}",
                self.h_ell, self.h_eq
            )));
        }
        let (g_h, v_sq) = (self.g * self.h_eq, self.v_eq * self.v_eq);
        if g_h <= v_sq {
            return Err(Error::SupercriticalFlow { g_h, v_sq });
        }
        if let Some(given) = self.s_b {
            let expected = self.equilibrium_slope();
            if (given - expected).abs() > 1e-12 * expected.abs().max(f64::MIN_POSITIVE) {
                return Err(Error::SlopeMismatch { given, expected });
            }
        }
        Ok(())
    }
}

/// Canonical coefficients plus the intermediate quantities of the
/// linearization.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearizedModel {
    pub canal: CanalConfig,
    pub coeffs: PlantCoefficients,
    pub gamma1: f64,
    pub gamma2: f64,
    pub f_h: f64,
    pub f_v: f64,
    pub q_tilde: f64,
    pub rho_tilde: f64,
    pub rho_u: f64,
    pub u_eq: f64,
}

pub fn linearize(cfg: &CanalConfig) -> Result<LinearizedModel> {
    cfg.validate()?;
    let CanalConfig {
        g,
        ell,
        cf,
        h_eq,
        v_eq,
        h_ell,
        k_g,
        ..
    } = *cfg;
    let c = (g * h_eq).sqrt();
    let (l1, l2) = (v_eq + c, c - v_eq);
    let f_h = -cf * v_eq * v_eq / (h_eq * h_eq);
    let f_v = 2.0 * cf * v_eq / h_eq;
    let s = (h_eq / g).sqrt();
    let gamma1 = 0.5 * f_h * s + 0.5 * f_v;
    let gamma2 = -0.5 * f_h * s + 0.5 * f_v;
    let q0 = cfg.q0();
    let dh = h_eq - h_ell;
    let q_tilde = -l2 / l1;
    let rho_tilde = (q0 - 2.0 * l1 * dh) / (q0 + 2.0 * l2 * dh);
    let rate = gamma1 / l1 + gamma2 / l2;
    let rho_u = 4.0 * 2f64.sqrt() * g * k_g * dh.powf(1.5) / (h_eq.sqrt() * (q0 + 2.0 * l2 * dh));
    let u_eq = q0 / (k_g * (2.0 * g * dh).sqrt());
    let coeffs = PlantCoefficients {
        lambda1: l1,
        lambda2: l2,
        c1: Profile::Exponential {
            amplitude: -gamma2,
            rate,
        },
        c2: Profile::Exponential {
            amplitude: -gamma1,
            rate: -rate,
        },
        q: q_tilde,
        rho: rho_tilde * (-rate * ell).exp(),
        ell,
    };
    coeffs.validate()?;
    Ok(LinearizedModel {
        canal: cfg.clone(),
        coeffs,
        gamma1,
        gamma2,
        f_h,
        f_v,
        q_tilde,
        rho_tilde,
        rho_u,
        u_eq,
    })
}

impl LinearizedModel {
    fn scalings(&self, x: f64) -> (f64, f64) {
        let c = &self.coeffs;
        (
            (self.gamma1 * x / c.lambda1).exp(),
            (-self.gamma2 * x / c.lambda2).exp(),
        )
    }

    fn wave(&self) -> f64 {
        (self.canal.g / self.canal.h_eq).sqrt()
    }
}

/// Physical deviations to canonical coordinates.
pub fn to_characteristic(
    h_dev: &[f64],
    v_dev: &[f64],
    grid: UniformGrid,
    model: &LinearizedModel,
) -> Result<HyperbolicState> {
    if h_dev.len() != grid.n_x() || v_dev.len() != grid.n_x() {
        return Err(Error::GridMismatch(
            "profile length differs from the grid".into(),
        ));
    }
    let w = model.wave();
    let mut u = Vec::with_capacity(grid.n_x());
    let mut v = Vec::with_capacity(grid.n_x());
    for (i, (h, vel)) in h_dev.iter().zip(v_dev).enumerate() {
        let (su, sv) = model.scalings(grid.x(i));
        u.push(su * (w * h + vel));
        v.push(sv * (-w * h + vel));
    }
    HyperbolicState::new(grid, u, v)
}

/// Canonical coordinates back to absolute depth and velocity.
pub fn from_characteristic(
    state: &HyperbolicState,
    model: &LinearizedModel,
) -> (Vec<f64>, Vec<f64>) {
    let w = model.wave();
    let mut h = Vec::with_capacity(state.n_x());
    let mut vel = Vec::with_capacity(state.n_x());
    for i in 0..state.n_x() {
        let (su, sv) = model.scalings(state.grid.x(i));
        let (xi1, xi2) = (state.u[i] / su, state.v[i] / sv);
        h.push(model.canal.h_eq + 0.5 * (xi1 - xi2) / w);
        vel.push(model.canal.v_eq + 0.5 * (xi1 + xi2));
    }
    (h, vel)
}

/// Gate opening for a canonical input. Negative openings are clamped to 0;
/// the second value reports whether the clamp was active.
pub fn gate_opening(
    u_canonical: f64,
    h_at_ell: f64,
    model: &LinearizedModel,
) -> Result<(f64, bool)> {
    if !(h_at_ell > model.canal.h_ell) {
        return Err(Error::GateSubmerged {
            h_at_ell,
            h_ell: model.canal.h_ell,
        });
    }
    let c = &model.coeffs;
    let u_tilde = u_canonical * (model.gamma2 * c.ell / c.lambda2).exp();
    let opening = model.u_eq + u_tilde / model.rho_u;
    if opening < 0.0 {
        log::info!("gate opening {opening:.6e} clamped to 0");
        return Ok((0.0, true));
    }
    Ok((opening, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn frictionless_canal_decouples() {
        let m = linearize(&CanalConfig {
            cf: 0.0,
            ..Default::default()
        })
        .unwrap();
        assert_eq!((m.f_h, m.f_v, m.gamma1, m.gamma2), (0.0, 0.0, 0.0, 0.0));
        assert!(m.coeffs.c1.is_zero() && m.coeffs.c2.is_zero());
        assert_eq!(m.coeffs.rho, m.rho_tilde);
    }

    #[test]
    fn critical_flow_is_rejected() {
        let cfg = CanalConfig {
            g: 1.0,
            h_eq: 1.0,
            v_eq: 1.0,
            h_ell: 0.1,
            ..Default::default()
        };
        assert!(matches!(
            linearize(&cfg),
            Err(Error::SupercriticalFlow { .. })
        ));
    }

    #[test]
    fn slope_must_match_equilibrium() {
        let mut cfg = CanalConfig::default();
        cfg.s_b = Some(cfg.equilibrium_slope());
        assert!(linearize(&cfg).is_ok());
        cfg.s_b = Some(0.02);
        assert!(matches!(linearize(&cfg), Err(Error::SlopeMismatch { .. })));
    }

    #[test]
    fn equilibrium_gate_opening() {
        let m = linearize(&CanalConfig::default()).unwrap();
        let (u, clamped) = gate_opening(0.0, 2.0, &m).unwrap();
        assert_relative_eq!(
            u,
            2.0 / (0.6 * (2.0 * 9.81 * 1.9f64).sqrt()),
            max_relative = 1e-15
        );
        assert!(!clamped);
        let d1 = gate_opening(0.1, 2.0, &m).unwrap().0 - u;
        let d2 = gate_opening(0.2, 2.0, &m).unwrap().0 - u;
        assert_relative_eq!(d2, 2.0 * d1, max_relative = 1e-12);
        assert_eq!(gate_opening(-1e3, 2.0, &m).unwrap(), (0.0, true));
        assert!(matches!(
            gate_opening(0.0, 0.1, &m),
            Err(Error::GateSubmerged { .. })
        ));
    }

    #[test]
    fn zero_deviation_maps_to_equilibrium() {
        let m = linearize(&CanalConfig::default()).unwrap();
        let g = UniformGrid::new(11, 10.0).unwrap();
        let s = to_characteristic(&[0.0; 11], &[0.0; 11], g, &m).unwrap();
        assert!(s.u.iter().chain(&s.v).all(|x| *x == 0.0));
        let (h, v) = from_characteristic(&s, &m);
        assert!(h.iter().all(|x| *x == 2.0) && v.iter().all(|x| *x == 1.0));
    }
}

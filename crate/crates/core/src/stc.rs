//! Self-triggered scheduling: at each event the next event time is
//! predicted from a bound on the growth of the holding error.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gains::GainProfiles;
use crate::grid::{trapezoid, trapezoid_product};
use crate::kernels::{KernelFamily, KernelSet};
use crate::plant::PlantCoefficients;
use crate::sim::HyperbolicState;
use crate::trigger::{DesignConstants, EtcParams};

/// `F` at or below this value is treated as zero.
pub const F_FLOOR: f64 = 1e-12;
/// Gap returned for vanishing `F`, as a multiple of `tau`.
pub const G_MAX_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StcConstants {
    pub mu_bar: f64,
    pub delta_bar: f64,
    pub c_bar: f64,
    pub d_bar: f64,
    pub p_v2: f64,
    pub varrho: f64,
    pub r_d: f64,
    pub phi_alpha: f64,
    pub phi_beta: f64,
    pub phi_u: f64,
    pub phi_v: f64,
    /// `ell/lambda1 + ell/lambda2`, after which the error bound vanishes.
    pub cutoff: f64,
}

/// `3 max_x { phi_a + phi_u x int R_a1^2 + phi_v x int R_a2^2 }` for one row
/// pair of the inverse observer kernels.
fn error_bound(r: &KernelSet, s1: usize, s2: usize, own: f64, phi_u: f64, phi_v: f64) -> f64 {
    let line = r.grid.line();
    let dx = line.dx();
    (0..line.n_x())
        .map(|i| {
            let x = line.x(i);
            let (a, b) = (r.row(s1, i), r.row(s2, i));
            own + phi_u * x * trapezoid_product(a, a, dx) + phi_v * x * trapezoid_product(b, b, dx)
        })
        .fold(f64::NEG_INFINITY, f64::max)
        * 3.0
}

pub fn stc_constants(
    gains: &GainProfiles,
    r: &KernelSet,
    coeffs: &PlantCoefficients,
    delta_bar: f64,
    phi_u: f64,
    phi_v: f64,
) -> Result<StcConstants> {
    if r.family != KernelFamily::InverseObserver {
        return Err(Error::GridMismatch(format!(
            "expected R kernels, got {}",
            r.family
        )));
    }
    if r.grid.line() != &gains.grid {
        return Err(Error::GridMismatch(
            "R kernels and gains use different grids".into(),
        ));
    }
    if !(delta_bar > 0.0 && delta_bar.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "delta_bar = {delta_bar} must be positive"
        )));
    }
    if !(phi_u > 0.0 && phi_v > 0.0) {
        return Err(Error::InvalidParams(format!(
            "phi_u = {phi_u}, phi_v = {phi_v} must be positive"
        )));
    }
    let (l1, l2, ell, q) = (coeffs.lambda1, coeffs.lambda2, coeffs.ell, coeffs.q);
    let mu_bar = coeffs.mu_upper_bound();
    if !(mu_bar > 0.0) {
        return Err(Error::MuBarNonpositive(mu_bar));
    }
    let c_bar = 1.0;
    let d_bar = 2.0 * q * q;
    let dx = gains.grid.dx();
    let nodes = gains.grid.nodes();
    let weighted: Vec<f64> = nodes
        .iter()
        .zip(gains.pbar1.iter().zip(&gains.pbar2))
        .map(|(&x, (p1, p2))| {
            c_bar / l1 * (-mu_bar * x / l1).exp() * p1 * p1
                + d_bar / l2 * (mu_bar * x / l2).exp() * p2 * p2
        })
        .collect();
    let p_v2 = delta_bar * trapezoid(&weighted, dx);
    let growth = 2.0 * d_bar * (mu_bar * ell / l2).exp();
    let varrho = delta_bar - mu_bar + growth;
    if !(varrho > 0.0) {
        return Err(Error::VarrhoNotPositive(varrho));
    }
    let n_energy = trapezoid_product(&gains.n_alpha, &gains.n_alpha, dx).max(trapezoid_product(
        &gains.n_beta,
        &gains.n_beta,
        dx,
    ));
    let r_d = 4.0 * n_energy / (c_bar * (-mu_bar * ell / l1).exp() / l1).min(d_bar / l2);
    Ok(StcConstants {
        mu_bar,
        delta_bar,
        c_bar,
        d_bar,
        p_v2,
        varrho,
        r_d,
        phi_alpha: error_bound(r, 0, 1, phi_u, phi_u, phi_v),
        phi_beta: error_bound(r, 2, 3, phi_v, phi_u, phi_v),
        phi_u,
        phi_v,
        cutoff: coeffs.round_trip_time(),
    })
}

/// Weighted target energy `int (C/l1) e^{-mu x/l1} a^2 + (D/l2) e^{mu x/l2} b^2`.
pub fn vbar2(target: &HyperbolicState, sc: &StcConstants, coeffs: &PlantCoefficients) -> f64 {
    let (l1, l2) = (coeffs.lambda1, coeffs.lambda2);
    let g = target.grid;
    let w: Vec<f64> = (0..g.n_x())
        .map(|i| {
            let x = g.x(i);
            let (a, b) = (target.u[i], target.v[i]);
            sc.c_bar / l1 * (-sc.mu_bar * x / l1).exp() * a * a
                + sc.d_bar / l2 * (sc.mu_bar * x / l2).exp() * b * b
        })
        .collect();
    trapezoid(&w, g.dx())
}

/// Error-injection bound, constant up to the cutoff and zero after it.
pub fn phi0(t: f64, sc: &StcConstants, coeffs: &PlantCoefficients) -> f64 {
    if t <= sc.cutoff {
        (coeffs.rho * coeffs.rho * sc.phi_alpha).max(sc.phi_beta)
    } else {
        0.0
    }
}

/// Growth bound `F` evaluated at an event time.
pub fn cal_f(t: f64, vbar2_val: f64, sc: &StcConstants, coeffs: &PlantCoefficients) -> f64 {
    let q = coeffs.q;
    let phi = (2.0 * sc.c_bar * q * q + sc.p_v2) * phi0(t, sc, coeffs);
    let e = (sc.mu_bar * coeffs.ell / coeffs.lambda2).exp();
    sc.r_d * (2.0 * vbar2_val + (2.0 * sc.r_d * sc.d_bar * e * vbar2_val + phi) / sc.varrho)
}

/// The unclipped predicted gap, or `None` when `F` is negligible.
pub fn gbar(
    m_k: f64,
    f_k: f64,
    consts: &DesignConstants,
    params: &EtcParams,
    sc: &StcConstants,
) -> Option<f64> {
    if f_k <= F_FLOOR {
        return None;
    }
    let rate = sc.varrho + params.eta;
    let num = consts.theta_m * f_k - m_k * rate;
    let den = f_k * (params.theta * rate + consts.theta_m);
    Some((num / den).ln() / rate)
}

/// `G = max{tau, Gbar}`; requires `m_k < 0`.
pub fn next_event_gap(
    m_k: f64,
    f_k: f64,
    consts: &DesignConstants,
    params: &EtcParams,
    sc: &StcConstants,
) -> Result<f64> {
    if !(m_k < 0.0) {
        return Err(Error::NonNegativeM(m_k));
    }
    Ok(match gbar(m_k, f_k, consts, params, sc) {
        Some(g) => g.max(consts.tau),
        None => G_MAX_FACTOR * consts.tau,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{TriangularGrid, UniformGrid};
    use crate::plant::Profile;

    fn sc() -> StcConstants {
        StcConstants {
            mu_bar: 0.0,
            delta_bar: 1e-4,
            c_bar: 1.0,
            d_bar: 0.5,
            p_v2: 0.01,
            varrho: 1.0,
            r_d: 2.0,
            phi_alpha: 3.0,
            phi_beta: 6.0,
            phi_u: 1.0,
            phi_v: 2.0,
            cutoff: 4.0,
        }
    }

    fn coeffs() -> PlantCoefficients {
        PlantCoefficients {
            lambda1: 5.0,
            lambda2: 2.0,
            c1: Profile::zero(),
            c2: Profile::zero(),
            q: 0.5,
            rho: 0.5,
            ell: 10.0,
        }
    }

    fn dc() -> DesignConstants {
        DesignConstants {
            eps0: 0.0,
            eps1: 0.0,
            eps2: 0.0,
            eps3: 0.0,
            kappa0: 0.0,
            kappa1: 0.0,
            kappa2: 0.0,
            a: 1.0,
            tau: 0.1,
            c: 1.0,
            c_lower_bound: 0.5,
            d: 1.0,
            r: 1.0,
            theta_m: 10.0,
            mu: 0.01,
            delta: 0.005,
            rho_q: 0.25,
            mu_max: 0.1,
            n_beta_ell: 0.0,
        }
    }

    #[test]
    fn vbar2_of_constant_alpha() {
        let g = UniformGrid::new(101, 10.0).unwrap();
        let s = HyperbolicState::from_fn(g, |_| 1.0, |_| 0.0);
        assert!((vbar2(&s, &sc(), &coeffs()) - 2.0).abs() < 1e-14);
        assert_eq!(vbar2(&HyperbolicState::zeros(g), &sc(), &coeffs()), 0.0);
    }

    #[test]
    fn f_closed_forms() {
        let (s, c) = (sc(), coeffs());
        assert_eq!(cal_f(4.5, 0.0, &s, &c), 0.0);
        let phi = (2.0 * 0.25 + 0.01) * 6.0f64.max(0.25 * 3.0);
        assert!((cal_f(0.0, 0.0, &s, &c) - 2.0 * phi / 1.0).abs() < 1e-14);
        assert_eq!(phi0(4.0, &s, &c), 6.0);
        assert_eq!(phi0(4.0 + 1e-12, &s, &c), 0.0);
    }

    #[test]
    fn gap_is_at_least_tau() {
        let (c, p, s) = (dc(), EtcParams::default(), sc());
        assert_eq!(next_event_gap(-1e-300, 1.0, &c, &p, &s).unwrap(), c.tau);
        assert_eq!(next_event_gap(-1.0, 0.0, &c, &p, &s).unwrap(), 10.0 * c.tau);
        assert!(matches!(
            next_event_gap(0.0, 1.0, &c, &p, &s),
            Err(Error::NonNegativeM(_))
        ));
        let rate = s.varrho + p.eta;
        // ln 1 = 0 when the two sides balance.
        let f = 2.0;
        let m = (c.theta_m * f - f * (p.theta * rate + c.theta_m)) / rate;
        assert!(gbar(m, f, &c, &p, &s).unwrap().abs() < 1e-14);
    }

    #[test]
    fn zero_r_kernels_give_bare_bounds() {
        let c = coeffs();
        let tri = TriangularGrid::new(11, 10.0).unwrap();
        let r = KernelSet::zeros(KernelFamily::InverseObserver, tri);
        let gains = GainProfiles::zeros(*tri.line());
        let s = stc_constants(&gains, &r, &c, 1e-4, 8.0, 3.0).unwrap();
        assert_eq!((s.phi_alpha, s.phi_beta), (24.0, 9.0));
        assert_eq!(s.r_d, 0.0);
        assert!(s.varrho > 0.0);
    }
}

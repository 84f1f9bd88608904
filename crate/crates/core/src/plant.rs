//! Coefficients of the canonical 2x2 transport system
//!
//! ```text
//! u_t = -lambda1 u_x + c1(x) v,     u(0, t) = q v(0, t)
//! v_t =  lambda2 v_x + c2(x) u,     v(ell, t) = rho u(ell, t) + U(t)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::interp_uniform;

/// A scalar coupling coefficient as a function of position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    Constant {
        value: f64,
    },
    /// `amplitude * exp(rate * x)`
    Exponential {
        amplitude: f64,
        rate: f64,
    },
    /// Samples on a uniform grid over `[0, ell]`, linearly interpolated.
    Sampled {
        values: Vec<f64>,
    },
}

impl Profile {
    pub fn zero() -> Self {
        Profile::Constant { value: 0.0 }
    }

    pub fn constant(value: f64) -> Self {
        Profile::Constant { value }
    }

    pub fn eval(&self, x: f64, ell: f64) -> f64 {
        match self {
            Profile::Constant { value } => *value,
            Profile::Exponential { amplitude, rate } => amplitude * (rate * x).exp(),
            Profile::Sampled { values } => {
                let dx = ell / (values.len() - 1) as f64;
                interp_uniform(values, dx, x)
            }
        }
    }

    /// True when the profile vanishes identically.
    pub fn is_zero(&self) -> bool {
        match self {
            Profile::Constant { value } => *value == 0.0,
            Profile::Exponential { amplitude, .. } => *amplitude == 0.0,
            Profile::Sampled { values } => values.iter().all(|v| *v == 0.0),
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidCoefficients(format!("{name}: {what}")));
        match self {
            Profile::Constant { value } if !value.is_finite() => {
                bad(format!("non-finite value {value}"))
            }
            Profile::Exponential { amplitude, rate }
                if !(amplitude.is_finite() && rate.is_finite()) =>
            {
                bad(format!("non-finite exponential ({amplitude}, {rate})"))
            }
            Profile::Sampled { values } if values.len() < 2 => {
                bad("needs at least two samples".into())
            }
            Profile::Sampled { values } => match values.iter().position(|v| !v.is_finite()) {
                Some(k) => bad(format!("non-finite sample at index {k}")),
                None => Ok(()),
            },
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantCoefficients {
    pub lambda1: f64,
    pub lambda2: f64,
    pub c1: Profile,
    pub c2: Profile,
    /// Distal reflection at x = 0.
    pub q: f64,
    /// Proximal reflection at x = ell.
    pub rho: f64,
    pub ell: f64,
}

impl PlantCoefficients {
    pub fn validate(&self) -> Result<()> {
        self.validate_transport()?;
        let bad = |m: String| Err(Error::InvalidCoefficients(m));
        if self.q == 0.0 {
            return bad(format!("q = {} must be nonzero", self.q));
        }
        if self.rho == 0.0 {
            return bad(format!("rho = {} must be nonzero", self.rho));
        }
        Ok(())
    }

    /// The weaker conditions under which the plant can be simulated;
    /// reflection-free boundaries are allowed.
    pub fn validate_transport(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidCoefficients(m));
        if !(self.lambda1.is_finite() && self.lambda1 > 0.0) {
            return bad(format!("lambda1 = {} must be positive", self.lambda1));
        }
        if !(self.lambda2.is_finite() && self.lambda2 > 0.0) {
            return bad(format!("lambda2 = {} must be positive", self.lambda2));
        }
        if !self.q.is_finite() || !self.rho.is_finite() {
            return bad(format!("q = {}, rho = {} must be finite", self.q, self.rho));
        }
        if !(self.ell.is_finite() && self.ell > 0.0) {
            return bad(format!("ell = {} must be positive", self.ell));
        }
        self.c1.validate("c1")?;
        self.c2.validate("c2")
    }

    pub fn c1(&self, x: f64) -> f64 {
        self.c1.eval(x, self.ell)
    }

    pub fn c2(&self, x: f64) -> f64 {
        self.c2.eval(x, self.ell)
    }

    /// `|rho q|`, which must stay below 1/2.
    pub fn reflection_product(&self) -> f64 {
        (self.rho * self.q).abs()
    }

    /// One-way transit times summed, `ell/lambda1 + ell/lambda2`.
    pub fn round_trip_time(&self) -> f64 {
        self.ell / self.lambda1 + self.ell / self.lambda2
    }

    /// Upper end of the admissible Lyapunov rate interval,
    /// `2 l1 l2 / (ell (l1 + l2)) * ln(1 / (2 |q rho|))`.
    pub fn mu_upper_bound(&self) -> f64 {
        let (l1, l2) = (self.lambda1, self.lambda2);
        2.0 * l1 * l2 / (self.ell * (l1 + l2)) * (1.0 / (2.0 * self.reflection_product())).ln()
    }

    /// Samples `c1` and `c2` at the nodes of a uniform grid.
    pub fn sample(&self, nodes: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let c1: Vec<f64> = nodes.iter().map(|&x| self.c1(x)).collect();
        let c2: Vec<f64> = nodes.iter().map(|&x| self.c2(x)).collect();
        if let Some(k) = c1.iter().chain(&c2).position(|v| !v.is_finite()) {
            return Err(Error::InvalidCoefficients(format!(
                "non-finite coupling sample (flat index {k})"
            )));
        }
        Ok((c1, c2))
    }
}

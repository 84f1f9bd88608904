//! Explicit upwind time stepping of plant and observer, backstepping
//! transforms, the continuous control law and the spatial L2 norm.
//!
//! `u` travels right at `lambda1` and is differenced backward, `v` travels
//! left at `lambda2` and is differenced forward. Sources and the output
//! injection are added explicitly. Interior nodes are updated first, then
//! the inflow boundaries are assigned from the new values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gains::GainProfiles;
use crate::grid::{trapezoid_product, UniformGrid};
use crate::kernels::{KernelFamily, KernelSet};
use crate::plant::PlantCoefficients;

/// A pair of grid functions at one time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperbolicState {
    pub t: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub grid: UniformGrid,
}

impl HyperbolicState {
    pub fn zeros(grid: UniformGrid) -> Self {
        Self {
            t: 0.0,
            u: vec![0.0; grid.n_x()],
            v: vec![0.0; grid.n_x()],
            grid,
        }
    }

    pub fn from_fn(grid: UniformGrid, u: impl Fn(f64) -> f64, v: impl Fn(f64) -> f64) -> Self {
        let x = grid.nodes();
        Self {
            t: 0.0,
            u: x.iter().map(|&x| u(x)).collect(),
            v: x.iter().map(|&x| v(x)).collect(),
            grid,
        }
    }

    pub fn new(grid: UniformGrid, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if u.len() != grid.n_x() || v.len() != grid.n_x() {
            return Err(Error::GridMismatch(format!(
                "state has {} / {} samples, grid has {}",
                u.len(),
                v.len(),
                grid.n_x()
            )));
        }
        Ok(Self { t: 0.0, u, v, grid })
    }

    pub fn n_x(&self) -> usize {
        self.grid.n_x()
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|x| x.is_finite())
    }

    /// Nodewise `self - other`, keeping this state's time.
    pub fn difference(&self, other: &HyperbolicState) -> Result<HyperbolicState> {
        check_grid(self.grid, other.grid)?;
        Ok(HyperbolicState {
            t: self.t,
            u: self.u.iter().zip(&other.u).map(|(a, b)| a - b).collect(),
            v: self.v.iter().zip(&other.v).map(|(a, b)| a - b).collect(),
            grid: self.grid,
        })
    }
}

fn check_grid(a: UniformGrid, b: UniformGrid) -> Result<()> {
    if a != b {
        return Err(Error::GridMismatch(format!(
            "grids differ: n_x {} vs {}, ell {} vs {}",
            a.n_x(),
            b.n_x(),
            a.ell(),
            b.ell()
        )));
    }
    Ok(())
}

/// Time-marching settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub n_x: usize,
    pub t_end: f64,
}

impl SimConfig {
    pub fn grid(&self, ell: f64) -> Result<UniformGrid> {
        UniformGrid::new(self.n_x, ell)
    }

    /// Number of steps needed to reach `t_end`.
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn validate(&self, coeffs: &PlantCoefficients) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "dt = {} must be positive",
                self.dt
            )));
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "t_end = {} must be nonnegative",
                self.t_end
            )));
        }
        let grid = self.grid(coeffs.ell)?;
        check_cfl(coeffs, grid.dx(), self.dt)
    }
}

fn check_cfl(coeffs: &PlantCoefficients, dx: f64, dt: f64) -> Result<()> {
    let courant = dt * coeffs.lambda1.max(coeffs.lambda2);
    if !(dt > 0.0) || courant > dx {
        return Err(Error::CflViolation { courant, dx });
    }
    Ok(())
}

/// Precomputed per-node data for repeated stepping on one grid.
#[derive(Debug, Clone)]
pub struct Transport {
    grid: UniformGrid,
    dt: f64,
    /// Courant numbers `lambda dt / dx`.
    cu: f64,
    cv: f64,
    c1: Vec<f64>,
    c2: Vec<f64>,
    q: f64,
    rho: f64,
}

impl Transport {
    pub fn new(coeffs: &PlantCoefficients, grid: UniformGrid, dt: f64) -> Result<Self> {
        coeffs.validate_transport()?;
        check_cfl(coeffs, grid.dx(), dt)?;
        let (c1, c2) = coeffs.sample(&grid.nodes())?;
        Ok(Self {
            grid,
            dt,
            cu: coeffs.lambda1 * dt / grid.dx(),
            cv: coeffs.lambda2 * dt / grid.dx(),
            c1,
            c2,
            q: coeffs.q,
            rho: coeffs.rho,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> UniformGrid {
        self.grid
    }

    /// Interior update shared by plant and observer; `inj` adds
    /// `dt * (p1, p2) * gain` when present.
    fn interior(
        &self,
        s: &HyperbolicState,
        out: &mut HyperbolicState,
        inj: Option<(&[f64], &[f64], f64)>,
    ) {
        let n = s.n_x();
        let dt = self.dt;
        let (u, v) = (&s.u, &s.v);
        for i in 1..n {
            out.u[i] = u[i] - self.cu * (u[i] - u[i - 1]) + dt * self.c1[i] * v[i];
        }
        for i in 0..n - 1 {
            out.v[i] = v[i] + self.cv * (v[i + 1] - v[i]) + dt * self.c2[i] * u[i];
        }
        if let Some((p1, p2, e)) = inj {
            for (o, p) in out.u.iter_mut().zip(p1).skip(1) {
                *o += dt * p * e;
            }
            for (o, p) in out.v.iter_mut().zip(p2).take(n - 1) {
                *o += dt * p * e;
            }
        }
        out.t = s.t + dt;
    }

    /// One plant step into `out` with the held boundary input.
    pub fn plant_into(&self, s: &HyperbolicState, held_input: f64, out: &mut HyperbolicState) {
        self.interior(s, out, None);
        let n = s.n_x();
        out.u[0] = self.q * out.v[0];
        out.v[n - 1] = self.rho * out.u[n - 1] + held_input;
    }

    /// One observer step into `out`. `v0_now` is the measurement at the
    /// start of the step (drives the injection), `v0_next` the measurement
    /// at the end of the step (feeds the boundary copy `u(0) = q v(0)`).
    pub fn observer_into(
        &self,
        s: &HyperbolicState,
        v0_now: f64,
        v0_next: f64,
        held_input: f64,
        gains: &GainProfiles,
        out: &mut HyperbolicState,
    ) {
        let innovation = v0_now - s.v[0];
        self.interior(s, out, Some((&gains.p1, &gains.p2, innovation)));
        let n = s.n_x();
        out.u[0] = self.q * v0_next;
        out.v[n - 1] = self.rho * out.u[n - 1] + held_input;
    }
}

/// One plant step with the held input.
pub fn step_plant(
    state: &HyperbolicState,
    held_input: f64,
    coeffs: &PlantCoefficients,
    dt: f64,
) -> Result<HyperbolicState> {
    let tr = Transport::new(coeffs, state.grid, dt)?;
    let mut out = state.clone();
    tr.plant_into(state, held_input, &mut out);
    Ok(out)
}

/// One observer step; see [`Transport::observer_into`] for the two
/// measurement arguments.
pub fn step_observer(
    state: &HyperbolicState,
    v0_now: f64,
    v0_next: f64,
    held_input: f64,
    gains: &GainProfiles,
    coeffs: &PlantCoefficients,
    dt: f64,
) -> Result<HyperbolicState> {
    check_grid(state.grid, gains.grid)?;
    let tr = Transport::new(coeffs, state.grid, dt)?;
    let mut out = state.clone();
    tr.observer_into(state, v0_now, v0_next, held_input, gains, &mut out);
    Ok(out)
}

fn volterra(state: &HyperbolicState, k: &KernelSet, sign: f64) -> Result<HyperbolicState> {
    check_grid(state.grid, *k.grid.line())?;
    let dx = state.grid.dx();
    let mut out = state.clone();
    for i in 0..state.n_x() {
        let (u, v) = (&state.u[..=i], &state.v[..=i]);
        let a = trapezoid_product(k.row(0, i), u, dx) + trapezoid_product(k.row(1, i), v, dx);
        let b = trapezoid_product(k.row(2, i), u, dx) + trapezoid_product(k.row(3, i), v, dx);
        out.u[i] = state.u[i] + sign * a;
        out.v[i] = state.v[i] + sign * b;
    }
    Ok(out)
}

/// `(alpha, beta) = (u, v) - int_0^x K (u, v) dxi`.
pub fn transform_to_target(obs: &HyperbolicState, k: &KernelSet) -> Result<HyperbolicState> {
    if k.family != KernelFamily::Controller {
        return Err(Error::GridMismatch(format!(
            "expected K kernels, got {}",
            k.family
        )));
    }
    volterra(obs, k, -1.0)
}

/// `(u, v) = (alpha, beta) + int_0^x L (alpha, beta) dxi`.
pub fn transform_from_target(target: &HyperbolicState, l: &KernelSet) -> Result<HyperbolicState> {
    if l.family != KernelFamily::InverseController {
        return Err(Error::GridMismatch(format!(
            "expected L kernels, got {}",
            l.family
        )));
    }
    volterra(target, l, 1.0)
}

/// Target-state quantities the trigger needs every step, without building
/// the full transformed state.
pub fn target_energy(obs: &HyperbolicState, k: &KernelSet) -> (f64, f64) {
    let dx = obs.grid.dx();
    let n = obs.n_x();
    let mut alpha = vec![0.0; n];
    let mut beta = vec![0.0; n];
    for i in 0..n {
        let (u, v) = (&obs.u[..=i], &obs.v[..=i]);
        alpha[i] = obs.u[i]
            - trapezoid_product(k.row(0, i), u, dx)
            - trapezoid_product(k.row(1, i), v, dx);
        beta[i] = obs.v[i]
            - trapezoid_product(k.row(2, i), u, dx)
            - trapezoid_product(k.row(3, i), v, dx);
    }
    let norm_sq = trapezoid_product(&alpha, &alpha, dx) + trapezoid_product(&beta, &beta, dx);
    (norm_sq, alpha[n - 1])
}

/// `U = int N^u u + int N^v v`.
pub fn control_law(obs: &HyperbolicState, gains: &GainProfiles) -> Result<f64> {
    check_grid(obs.grid, gains.grid)?;
    let dx = obs.grid.dx();
    Ok(trapezoid_product(&gains.n_u, &obs.u, dx) + trapezoid_product(&gains.n_v, &obs.v, dx))
}

/// `sqrt(int u^2 + v^2)`.
pub fn l2_norm(state: &HyperbolicState) -> f64 {
    let dx = state.grid.dx();
    (trapezoid_product(&state.u, &state.u, dx) + trapezoid_product(&state.v, &state.v, dx)).sqrt()
}

//! Scenario configuration and the closed-loop driver shared by all modes.
//!
//! Each run solves the four kernel families once, then marches plant,
//! observer and trigger state on a single `dt` clock. Within a step the
//! input held over `[t_k, t_k+1)` drives both boundaries; `m` is advanced
//! with the drivers of level `k`; the event decision is taken on the new
//! level, after which `d` is reset if an event fired.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gains::{gain_profiles, GainProfiles};
use crate::grid::{TriangularGrid, UniformGrid};
use crate::kernels::{solve_kernels, KernelFamily, KernelSet, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::output::{ensure_dir, fmt_num, write_atomic, CsvTable};
use crate::petc::{explicit_h, gamma_p, select_h, PetcConfig};
use crate::plant::{PlantCoefficients, Profile};
use crate::saint_venant::{
    from_characteristic, gate_opening, linearize, to_characteristic, CanalConfig, LinearizedModel,
};
use crate::sim::{
    control_law, l2_norm, target_energy, transform_to_target, HyperbolicState, SimConfig, Transport,
};
use crate::stc::{cal_f, gbar, next_event_gap, stc_constants, vbar2, StcConstants};
use crate::trigger::{
    cetc_should_trigger, design_constants, gamma_c, update_m, DesignConstants, EtcParams, Event,
    TriggerState,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    OpenLoop,
    Ctc,
    Cetc,
    Petc,
    Stc,
}

impl Mode {
    pub const ALL: [Mode; 5] = [Mode::OpenLoop, Mode::Ctc, Mode::Cetc, Mode::Petc, Mode::Stc];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::OpenLoop => "open_loop",
            Mode::Ctc => "ctc",
            Mode::Cetc => "cetc",
            Mode::Petc => "petc",
            Mode::Stc => "stc",
        }
    }

    /// Modes that hold the input between events and integrate `m`.
    pub fn is_event_based(self) -> bool {
        matches!(self, Mode::Cetc | Mode::Petc | Mode::Stc)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown mode {s:?} (expected open_loop, ctc, cetc, petc or stc)"
                ))
            })
    }
}

/// `amplitude * sin(harmonic * pi * x / ell)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SineMode {
    pub amplitude: f64,
    pub harmonic: f64,
}

fn modes_at(modes: &[SineMode], x: f64, ell: f64) -> f64 {
    modes
        .iter()
        .map(|m| m.amplitude * (m.harmonic * std::f64::consts::PI * x / ell).sin())
        .sum()
}

/// Initial plant data. The observer always starts from zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    /// Depth and velocity deviations (canal plants only).
    Physical {
        h_modes: Vec<SineMode>,
        v_modes: Vec<SineMode>,
    },
    /// Canonical coordinates directly.
    Canonical {
        u_modes: Vec<SineMode>,
        v_modes: Vec<SineMode>,
    },
}

impl Default for InitialCondition {
    fn default() -> Self {
        InitialCondition::Physical {
            h_modes: vec![SineMode {
                amplitude: -1.0,
                harmonic: 1.0,
            }],
            v_modes: vec![SineMode {
                amplitude: 0.5,
                harmonic: 3.0,
            }],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PetcInputs {
    /// Explicit sampling period; must not exceed `tau`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    /// Used when `h` is absent: `h = floor(h_frac tau / dt) dt`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_frac: Option<f64>,
}

impl Default for PetcInputs {
    fn default() -> Self {
        Self {
            h: Some(0.13),
            h_frac: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StcInputs {
    pub delta_bar: f64,
    pub phi_u: f64,
    pub phi_v: f64,
}

impl Default for StcInputs {
    fn default() -> Self {
        Self {
            delta_bar: 1e-4,
            phi_u: 8.6872,
            phi_v: 3.1664,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelInputs {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for KernelInputs {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Results directory; nothing is written when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Write every `stride`-th step to the trajectory files.
    pub stride: usize,
    /// Positions (m) at which depth and velocity are recorded.
    pub probes: Vec<f64>,
    /// Also dump the four kernel families.
    pub kernels: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            stride: 100,
            probes: vec![0.0, 2.5, 5.0, 7.5, 10.0],
            kernels: false,
        }
    }
}

/// Everything a run needs. Missing sections take their default values,
/// except the plant: exactly one of `canal` or `coefficients` must be given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub canal: Option<CanalConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<PlantCoefficients>,
    pub initial: InitialCondition,
    pub etc: EtcParams,
    pub petc: PetcInputs,
    pub stc: StcInputs,
    pub sim: SimConfig,
    pub kernels: KernelInputs,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Cetc,
            canal: Some(CanalConfig::default()),
            coefficients: None,
            initial: InitialCondition::default(),
            etc: EtcParams::default(),
            petc: PetcInputs::default(),
            stc: StcInputs::default(),
            sim: SimConfig {
                dt: 1e-4,
                n_x: 201,
                t_end: 40.0,
            },
            kernels: KernelInputs::default(),
            output: OutputConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn with_mode(&self, mode: Mode) -> Self {
        Self {
            mode,
            ..self.clone()
        }
    }

    /// Checks everything that does not require solving kernels.
    pub fn validate(&self) -> Result<()> {
        match (&self.canal, &self.coefficients) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidConfig(
                    "give either `canal` or `coefficients`, not both".into(),
                ))
            }
            (None, None) => {
                return Err(Error::InvalidConfig(
                    "no plant: set `canal` or `coefficients`".into(),
                ))
            }
            (None, Some(_)) if matches!(self.initial, InitialCondition::Physical { .. }) => {
                return Err(Error::InvalidConfig(
                    "physical initial data requires a `canal` plant".into(),
                ))
            }
            _ => {}
        }
        if self.output.stride == 0 {
            return Err(Error::InvalidConfig(
                "output stride must be positive".into(),
            ));
        }
        if !(self.kernels.tol > 0.0) || self.kernels.max_iter == 0 {
            return Err(Error::InvalidConfig(
                "kernel tol and max_iter must be positive".into(),
            ));
        }
        if self.mode.is_event_based() {
            self.etc.validate()?;
        }
        Ok(())
    }
}

/// Plant, kernels, gains and all constants for one configuration.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub coeffs: PlantCoefficients,
    pub model: Option<LinearizedModel>,
    pub grid: UniformGrid,
    pub k: KernelSet,
    pub p: KernelSet,
    pub l: KernelSet,
    pub r: KernelSet,
    pub gains: GainProfiles,
    /// Present whenever the constants could be computed.
    pub design: Option<DesignConstants>,
    pub stc: Option<StcConstants>,
    /// Why `design` or `stc` is absent.
    pub constant_errors: Vec<String>,
    pub warnings: Vec<String>,
}

/// Validates the configuration, linearizes and solves the kernels.
pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    cfg.validate()?;
    let mut warnings = Vec::new();
    let (coeffs, model) = match (&cfg.canal, &cfg.coefficients) {
        (Some(canal), None) => {
            let m = linearize(canal)?;
            (m.coeffs.clone(), Some(m))
        }
        (None, Some(c)) => {
            c.validate()?;
            (c.clone(), None)
        }
        _ => unreachable!("checked by validate"),
    };
    cfg.sim.validate(&coeffs)?;
    let rho_q = coeffs.reflection_product();
    if rho_q >= 0.5 {
        let w = format!("|rho q| = {rho_q:.6} violates the small-reflection bound 1/2");
        log::warn!("{w}");
        warnings.push(w);
    }
    let tri = TriangularGrid::new(cfg.sim.n_x, coeffs.ell)?;
    let solve = |f| solve_kernels(f, &coeffs, tri, cfg.kernels.tol, cfg.kernels.max_iter);
    let (k, p, l, r) = (
        solve(KernelFamily::Controller)?,
        solve(KernelFamily::Observer)?,
        solve(KernelFamily::InverseController)?,
        solve(KernelFamily::InverseObserver)?,
    );
    let gains = gain_profiles(&k, &p, &l, &coeffs)?;
    let mut constant_errors = Vec::new();
    let design = match design_constants(&gains, &coeffs, &cfg.etc) {
        Ok(d) => Some(d),
        Err(e) if cfg.mode.is_event_based() => return Err(e),
        Err(e) => {
            constant_errors.push(format!("design constants: {e}"));
            None
        }
    };
    let stc = match stc_constants(
        &gains,
        &r,
        &coeffs,
        cfg.stc.delta_bar,
        cfg.stc.phi_u,
        cfg.stc.phi_v,
    ) {
        Ok(s) => Some(s),
        Err(e) if cfg.mode == Mode::Stc => return Err(e),
        Err(e) => {
            constant_errors.push(format!("self-triggered constants: {e}"));
            None
        }
    };
    Ok(Prepared {
        grid: *tri.line(),
        coeffs,
        model,
        k,
        p,
        l,
        r,
        gains,
        design,
        stc,
        constant_errors,
        warnings,
    })
}

impl Prepared {
    pub fn initial_state(&self, init: &InitialCondition) -> Result<HyperbolicState> {
        let ell = self.coeffs.ell;
        match init {
            InitialCondition::Canonical { u_modes, v_modes } => Ok(HyperbolicState::from_fn(
                self.grid,
                |x| modes_at(u_modes, x, ell),
                |x| modes_at(v_modes, x, ell),
            )),
            InitialCondition::Physical { h_modes, v_modes } => {
                let model = self.model.as_ref().ok_or_else(|| {
                    Error::InvalidConfig("physical initial data requires a canal plant".into())
                })?;
                let x = self.grid.nodes();
                let h: Vec<f64> = x.iter().map(|&x| modes_at(h_modes, x, ell)).collect();
                let v: Vec<f64> = x.iter().map(|&x| modes_at(v_modes, x, ell)).collect();
                to_characteristic(&h, &v, self.grid, model)
            }
        }
    }

    /// PETC sampling period on the `dt` grid.
    pub fn petc_config(&self, inputs: &PetcInputs, dt: f64) -> Result<PetcConfig> {
        let dc = self.design.as_ref().ok_or_else(|| {
            Error::InvalidParams("sampling period needs the design constants".into())
        })?;
        match (inputs.h, inputs.h_frac) {
            (Some(h), None) => explicit_h(dc, h, dt),
            (None, Some(f)) => select_h(dc, f, dt),
            (None, None) => select_h(dc, 1.0, dt),
            (Some(_), Some(_)) => Err(Error::InvalidConfig(
                "give either petc.h or petc.h_frac, not both".into(),
            )),
        }
    }
}

/// Audit data recorded at each self-triggered event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StcAudit {
    pub f: f64,
    pub g: f64,
    /// NaN when `F` was below the floor.
    pub gbar: f64,
    pub vbar2: f64,
}

/// One decimated row of the norm trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub norm_plant: f64,
    pub norm_observer: f64,
    pub norm_error: f64,
    pub u_held: f64,
    pub u_continuous: f64,
    pub d: f64,
    pub m: f64,
    pub gamma_c: f64,
    pub beta_tilde_0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub mode: Mode,
    pub steps: usize,
    pub t_end: f64,
    pub initial_norm: f64,
    pub final_norm: f64,
    /// First time the plant norm drops below 1% of its initial value.
    pub time_to_1pct: Option<f64>,
    pub initial_error_norm: f64,
    /// Largest `|(u~, v~)| / initial` at or after `round trip + 0.5 s`;
    /// `None` when the horizon ends earlier.
    pub max_error_ratio_after_extinction: Option<f64>,
    pub extinction_time: f64,
    pub event_count: usize,
    pub min_dwell: Option<f64>,
    pub mean_dwell: Option<f64>,
    /// Largest `theta d^2 + m` seen before any event decision, excluding
    /// steps where the continuous rule fired.
    pub max_gamma_c: Option<f64>,
    /// Largest `theta d^2 + m` after event decisions.
    pub max_gamma_c_after_events: Option<f64>,
    pub max_m: Option<f64>,
    pub tau: Option<f64>,
    pub h: Option<f64>,
    pub gate_clamps: usize,
    pub min_depth: Option<f64>,
    pub files: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub events: Vec<Event>,
    /// Parallel to `events` in self-triggered runs.
    pub stc_audit: Vec<StcAudit>,
    pub trajectory: Vec<TrajectoryRow>,
    /// `(t, |(u~, v~)|, v~(0))` at the decimated times.
    pub error_trajectory: Vec<(f64, f64, f64)>,
    /// `(t, H at probes, V at probes, gate opening)` for canal plants.
    pub physical: Vec<(f64, Vec<f64>, Vec<f64>, f64)>,
}

/// Per-step running statistics.
struct Stats {
    max_gamma_c: f64,
    max_gamma_post: f64,
    max_m: f64,
    max_error_after: Option<f64>,
    time_to_1pct: Option<f64>,
    min_depth: f64,
    gate_clamps: usize,
}

pub fn run_scenario(cfg: &RunConfig) -> Result<RunOutcome> {
    let prep = prepare(cfg)?;
    run_prepared(cfg, &prep)
}

/// Runs a configuration against already solved kernels and constants.
pub fn run_prepared(cfg: &RunConfig, prep: &Prepared) -> Result<RunOutcome> {
    let mode = cfg.mode;
    let out_dir = cfg.output.dir.as_deref();
    if let Some(dir) = out_dir {
        ensure_dir(dir)?;
    }
    let coeffs = &prep.coeffs;
    let dt = cfg.sim.dt;
    let steps = cfg.sim.steps();
    let tr = Transport::new(coeffs, prep.grid, dt)?;
    let petc = if mode == Mode::Petc {
        Some(prep.petc_config(&cfg.petc, dt)?)
    } else {
        None
    };
    let design = prep.design;
    let params = cfg.etc;

    let mut plant = prep.initial_state(&cfg.initial)?;
    let mut obs = HyperbolicState::zeros(prep.grid);
    let (mut plant_next, mut obs_next) = (plant.clone(), obs.clone());
    let initial_norm = l2_norm(&plant);
    let initial_error_norm = l2_norm(&plant.difference(&obs)?);
    let extinction_time = coeffs.round_trip_time() + 0.5;

    let mut u_cont = control_law(&obs, &prep.gains)?;
    let mut ts = TriggerState::new(params.m0, 0.0);
    let mut stc_audit = Vec::new();
    let mut next_stc_step = 0usize;
    match mode {
        Mode::OpenLoop => {}
        Mode::Ctc => ts.u_held = u_cont,
        _ => {
            ts.fire(0.0, u_cont);
            if mode == Mode::Stc {
                next_stc_step = schedule_stc(prep, &params, &obs, &ts, 0.0, 0, dt, &mut stc_audit)?;
            }
        }
    }

    let mut stats = Stats {
        max_gamma_c: f64::NEG_INFINITY,
        max_gamma_post: f64::NEG_INFINITY,
        max_m: f64::NEG_INFINITY,
        max_error_after: None,
        time_to_1pct: None,
        min_depth: f64::INFINITY,
        gate_clamps: 0,
    };
    if mode.is_event_based() {
        stats.max_gamma_c = gamma_c(&ts, &params);
        stats.max_gamma_post = stats.max_gamma_c;
        stats.max_m = ts.m;
    }
    let mut trajectory = Vec::new();
    let mut error_trajectory = Vec::new();
    let mut physical = Vec::new();
    let stride = cfg.output.stride;
    let mut gamma_pre = if mode.is_event_based() {
        gamma_c(&ts, &params)
    } else {
        f64::NAN
    };
    record(
        cfg,
        prep,
        0,
        &plant,
        &obs,
        &ts,
        u_cont,
        gamma_pre,
        &mut stats,
        &mut trajectory,
        &mut error_trajectory,
        &mut physical,
    )?;

    for step in 1..=steps {
        let t = step as f64 * dt;
        let held = match mode {
            Mode::OpenLoop => 0.0,
            _ => ts.u_held,
        };
        // Drivers of the dynamic variable at the current level.
        let drivers = if mode.is_event_based() {
            let (norm_sq, alpha_ell) = target_energy(&obs, &prep.k);
            let bt0 = plant.v[0] - obs.v[0];
            Some((norm_sq, alpha_ell * alpha_ell, bt0 * bt0))
        } else {
            None
        };
        tr.plant_into(&plant, held, &mut plant_next);
        tr.observer_into(
            &obs,
            plant.v[0],
            plant_next.v[0],
            held,
            &prep.gains,
            &mut obs_next,
        );
        std::mem::swap(&mut plant, &mut plant_next);
        std::mem::swap(&mut obs, &mut obs_next);
        plant.t = t;
        obs.t = t;
        u_cont = control_law(&obs, &prep.gains)?;

        if let (Some((e, a, b)), Some(dc)) = (drivers, design.as_ref()) {
            update_m(&mut ts, dt, dc, &params, e, a, b);
            ts.observe(u_cont);
            gamma_pre = gamma_c(&ts, &params);
            let fire = match mode {
                Mode::Cetc => cetc_should_trigger(&ts, &params),
                Mode::Petc => {
                    let pc = petc.as_ref().expect("petc config");
                    pc.is_sampling_step(step) && gamma_p(ts.d, ts.m, dc, &params, pc.h) > 0.0
                }
                Mode::Stc => step == next_stc_step,
                _ => false,
            };
            if fire {
                ts.fire(t, u_cont);
                if mode == Mode::Stc {
                    next_stc_step =
                        schedule_stc(prep, &params, &obs, &ts, t, step, dt, &mut stc_audit)?;
                }
            }
            if !(fire && mode == Mode::Cetc) {
                stats.max_gamma_c = stats.max_gamma_c.max(gamma_pre);
            }
            stats.max_gamma_post = stats.max_gamma_post.max(gamma_c(&ts, &params));
            stats.max_m = stats.max_m.max(ts.m);
        } else if mode == Mode::Ctc {
            ts.u_held = u_cont;
        }

        if !plant.is_finite() || !obs.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "simulation diverged at t = {t}"
            )));
        }
        let n_plant = l2_norm(&plant);
        if stats.time_to_1pct.is_none() && n_plant < 0.01 * initial_norm {
            stats.time_to_1pct = Some(t);
        }
        if t >= extinction_time - 0.5 * dt {
            let ratio = l2_norm(&plant.difference(&obs)?) / initial_error_norm;
            stats.max_error_after = Some(stats.max_error_after.map_or(ratio, |m| m.max(ratio)));
        }
        if step % stride == 0 || step == steps {
            record(
                cfg,
                prep,
                step,
                &plant,
                &obs,
                &ts,
                u_cont,
                gamma_pre,
                &mut stats,
                &mut trajectory,
                &mut error_trajectory,
                &mut physical,
            )?;
        }
    }

    let dwells: Vec<f64> = ts.dwells().collect();
    let event_based = mode.is_event_based();
    let summary = RunSummary {
        mode,
        steps,
        t_end: steps as f64 * dt,
        initial_norm,
        final_norm: l2_norm(&plant),
        time_to_1pct: stats.time_to_1pct,
        initial_error_norm,
        max_error_ratio_after_extinction: stats.max_error_after,
        extinction_time,
        event_count: ts.events.len(),
        min_dwell: dwells.iter().copied().reduce(f64::min),
        mean_dwell: (!dwells.is_empty()).then(|| dwells.iter().sum::<f64>() / dwells.len() as f64),
        max_gamma_c: event_based.then_some(stats.max_gamma_c),
        max_gamma_c_after_events: event_based.then_some(stats.max_gamma_post),
        max_m: event_based.then_some(stats.max_m),
        tau: design.map(|d| d.tau),
        h: petc.map(|p| p.h),
        gate_clamps: stats.gate_clamps,
        min_depth: prep.model.is_some().then_some(stats.min_depth),
        files: Vec::new(),
    };
    let mut outcome = RunOutcome {
        summary,
        events: ts.events,
        stc_audit,
        trajectory,
        error_trajectory,
        physical,
    };
    if let Some(dir) = out_dir {
        outcome.summary.files = write_outputs(dir, cfg, prep, &outcome)?;
    }
    Ok(outcome)
}

/// Computes the next self-triggered event step from the state at `step`.
#[allow(clippy::too_many_arguments)]
fn schedule_stc(
    prep: &Prepared,
    params: &EtcParams,
    obs: &HyperbolicState,
    ts: &TriggerState,
    t: f64,
    step: usize,
    dt: f64,
    audit: &mut Vec<StcAudit>,
) -> Result<usize> {
    let dc = prep.design.as_ref().expect("design constants for stc");
    let sc = prep.stc.as_ref().expect("stc constants");
    let target = transform_to_target(obs, &prep.k)?;
    let v2 = vbar2(&target, sc, &prep.coeffs);
    let f = cal_f(t, v2, sc, &prep.coeffs);
    let g = next_event_gap(ts.m, f, dc, params, sc)?;
    audit.push(StcAudit {
        f,
        g,
        gbar: gbar(ts.m, f, dc, params, sc).unwrap_or(f64::NAN),
        vbar2: v2,
    });
    // Snap up to the clock so that the realized gap is never below G.
    let gap_steps = ((g / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    Ok(step + gap_steps)
}

#[allow(clippy::too_many_arguments)]
fn record(
    cfg: &RunConfig,
    prep: &Prepared,
    step: usize,
    plant: &HyperbolicState,
    obs: &HyperbolicState,
    ts: &TriggerState,
    u_cont: f64,
    gamma_pre: f64,
    stats: &mut Stats,
    trajectory: &mut Vec<TrajectoryRow>,
    errors: &mut Vec<(f64, f64, f64)>,
    physical: &mut Vec<(f64, Vec<f64>, Vec<f64>, f64)>,
) -> Result<()> {
    let t = step as f64 * cfg.sim.dt;
    let err = plant.difference(obs)?;
    let held = if cfg.mode == Mode::OpenLoop {
        0.0
    } else {
        ts.u_held
    };
    let event_based = cfg.mode.is_event_based();
    trajectory.push(TrajectoryRow {
        t,
        norm_plant: l2_norm(plant),
        norm_observer: l2_norm(obs),
        norm_error: l2_norm(&err),
        u_held: held,
        u_continuous: u_cont,
        d: if event_based { ts.d } else { held - u_cont },
        m: if event_based { ts.m } else { f64::NAN },
        gamma_c: gamma_pre,
        beta_tilde_0: err.v[0],
    });
    errors.push((t, l2_norm(&err), err.v[0]));
    if let Some(model) = &prep.model {
        let (h, v) = from_characteristic(plant, model);
        stats.min_depth = h.iter().copied().fold(stats.min_depth, f64::min);
        let dx = prep.grid.dx();
        let probe = |f: &[f64], x: f64| crate::grid::interp_uniform(f, dx, x);
        let hs: Vec<f64> = cfg.output.probes.iter().map(|&x| probe(&h, x)).collect();
        let vs: Vec<f64> = cfg.output.probes.iter().map(|&x| probe(&v, x)).collect();
        let (opening, clamped) = gate_opening(held, h[h.len() - 1], model)?;
        stats.gate_clamps += usize::from(clamped);
        physical.push((t, hs, vs, opening));
    }
    Ok(())
}

fn write_outputs(
    dir: &Path,
    cfg: &RunConfig,
    prep: &Prepared,
    out: &RunOutcome,
) -> Result<Vec<String>> {
    let mut files = Vec::new();
    let put = |files: &mut Vec<String>, name: &str, body: String| -> Result<()> {
        write_atomic(&dir.join(name), body.as_bytes())?;
        files.push(name.to_string());
        Ok(())
    };

    let mut t = CsvTable::new(&[
        "t",
        "norm_plant",
        "norm_observer",
        "norm_error",
        "U_held",
        "U_continuous",
    ]);
    for r in &out.trajectory {
        t.row_nums(&[
            r.t,
            r.norm_plant,
            r.norm_observer,
            r.norm_error,
            r.u_held,
            r.u_continuous,
        ]);
    }
    put(&mut files, "trajectory.csv", t.into_string())?;

    let mode = cfg.mode.as_str();
    let mut header = vec!["mode", "k", "t_k", "dwell", "U_held"];
    if cfg.mode == Mode::Stc {
        header.extend(["F_k", "G_k", "Gbar_k"]);
    }
    let mut ev = CsvTable::new(&header);
    for (i, e) in out.events.iter().enumerate() {
        let k = e.k.to_string();
        let mut vals = vec![e.t, e.dwell, e.u_held];
        if let Some(a) = out.stc_audit.get(i) {
            vals.extend([a.f, a.g, a.gbar]);
        }
        ev.row_mixed(&[mode, &k], &vals);
    }
    put(&mut files, "events.csv", ev.into_string())?;

    let mut er = CsvTable::new(&["t", "norm_error", "v_tilde_0"]);
    for &(t, n, v0) in &out.error_trajectory {
        er.row_nums(&[t, n, v0]);
    }
    put(&mut files, "observer_error.csv", er.into_string())?;

    if cfg.mode.is_event_based() {
        let mut tr = CsvTable::new(&["t", "d", "m", "gamma_c"]);
        for r in &out.trajectory {
            tr.row_nums(&[r.t, r.d, r.m, r.gamma_c]);
        }
        put(&mut files, "trigger.csv", tr.into_string())?;
    }

    if prep.model.is_some() {
        let mut header = vec!["t".to_string()];
        header.extend(cfg.output.probes.iter().map(|x| format!("H_{x}")));
        header.extend(cfg.output.probes.iter().map(|x| format!("V_{x}")));
        header.push("U_ell".into());
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut ph = CsvTable::new(&header);
        for (t, hs, vs, u) in &out.physical {
            let mut row = vec![*t];
            row.extend(hs);
            row.extend(vs);
            row.push(*u);
            ph.row_nums(&row);
        }
        put(&mut files, "physical.csv", ph.into_string())?;
    }

    put(&mut files, "gains.csv", prep.gains.to_csv().into_string())?;
    if cfg.output.kernels {
        for set in [&prep.k, &prep.p, &prep.l, &prep.r] {
            let mut buf = Vec::new();
            set.write_csv(&mut buf)?;
            put(
                &mut files,
                &format!("kernels_{}.csv", set.family.symbol()),
                String::from_utf8_lossy(&buf).into_owned(),
            )?;
        }
    }
    put(&mut files, "constants.json", constants_json(prep, cfg)?)?;
    let mut summary = out.summary.clone();
    summary.files = files.clone();
    summary.files.push("summary.json".into());
    put(&mut files, "summary.json", to_json(&summary)?)?;
    Ok(files)
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Flat key/value report of every constant and the assumption checks.
#[derive(Debug, Clone, Serialize)]
pub struct ConstantsReport {
    pub lambda1: f64,
    pub lambda2: f64,
    pub q: f64,
    pub rho: f64,
    pub rho_q: f64,
    pub reflection_bound_ok: bool,
    pub mu_max: f64,
    pub round_trip_time: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignConstants>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stc: Option<StcConstants>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    pub kernel_iterations: BTreeMap<String, usize>,
    pub kernel_residuals: BTreeMap<String, f64>,
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

pub fn constants_report(prep: &Prepared, cfg: &RunConfig) -> Result<ConstantsReport> {
    let c = &prep.coeffs;
    let mut errors = prep.constant_errors.clone();
    let h = match prep.petc_config(&cfg.petc, cfg.sim.dt) {
        Ok(p) => Some(p.h),
        Err(e) => {
            errors.push(format!("sampling period: {e}"));
            None
        }
    };
    let mut iterations = BTreeMap::new();
    let mut residuals = BTreeMap::new();
    for set in [&prep.k, &prep.p, &prep.l, &prep.r] {
        iterations.insert(set.family.symbol().to_string(), set.iterations);
        residuals.insert(set.family.symbol().to_string(), set.residuals(c)?.max());
    }
    Ok(ConstantsReport {
        lambda1: c.lambda1,
        lambda2: c.lambda2,
        q: c.q,
        rho: c.rho,
        rho_q: c.reflection_product(),
        reflection_bound_ok: c.reflection_product() < 0.5,
        mu_max: c.mu_upper_bound(),
        round_trip_time: c.round_trip_time(),
        design: prep.design,
        stc: prep.stc,
        h,
        kernel_iterations: iterations,
        kernel_residuals: residuals,
        errors,
        warnings: prep.warnings.clone(),
    })
}

fn constants_json(prep: &Prepared, cfg: &RunConfig) -> Result<String> {
    to_json(&constants_report(prep, cfg)?)
}

/// One row of a cross-mode comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub mode: Mode,
    pub events: usize,
    pub mean_dwell: Option<f64>,
    pub min_dwell: Option<f64>,
    pub time_to_1pct: Option<f64>,
    pub final_norm: f64,
}

impl From<&RunSummary> for ComparisonRow {
    fn from(s: &RunSummary) -> Self {
        Self {
            mode: s.mode,
            events: s.event_count,
            mean_dwell: s.mean_dwell,
            min_dwell: s.min_dwell,
            time_to_1pct: s.time_to_1pct,
            final_norm: s.final_norm,
        }
    }
}

/// Runs several configurations that differ only in mode and output
/// settings, in parallel, and tabulates them in input order.
pub fn compare_modes(configs: &[RunConfig]) -> Result<(Vec<ComparisonRow>, Vec<RunOutcome>)> {
    let Some(first) = configs.first() else {
        return Ok((Vec::new(), Vec::new()));
    };
    let shared = |c: &RunConfig| {
        (
            c.canal.clone(),
            c.coefficients.clone(),
            c.initial.clone(),
            c.sim,
            c.kernels,
        )
    };
    let reference = shared(first);
    for c in &configs[1..] {
        if shared(c) != reference {
            return Err(Error::ConfigMismatch(format!(
                "{} run differs from {} in plant, initial data, grid or horizon",
                c.mode, first.mode
            )));
        }
    }
    // Kernels and gains depend only on the shared part; solve them once.
    let prep_cfg = RunConfig {
        mode: Mode::OpenLoop,
        ..first.clone()
    };
    let base = prepare(&prep_cfg)?;
    let results: Vec<Result<RunOutcome>> = std::thread::scope(|s| {
        let handles: Vec<_> = configs
            .iter()
            .map(|c| {
                let base = &base;
                s.spawn(move || {
                    let mut prep = base.clone();
                    if c.mode.is_event_based() {
                        c.etc.validate()?;
                        prep.design = Some(design_constants(&prep.gains, &prep.coeffs, &c.etc)?);
                    }
                    if c.mode == Mode::Stc {
                        prep.stc = Some(stc_constants(
                            &prep.gains,
                            &prep.r,
                            &prep.coeffs,
                            c.stc.delta_bar,
                            c.stc.phi_u,
                            c.stc.phi_v,
                        )?);
                    }
                    run_prepared(c, &prep)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("scenario thread panicked"))
            .collect()
    });
    let outcomes = results.into_iter().collect::<Result<Vec<_>>>()?;
    let rows = outcomes
        .iter()
        .map(|o| ComparisonRow::from(&o.summary))
        .collect();
    Ok((rows, outcomes))
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let opt = |v: Option<f64>| v.map(fmt_num).unwrap_or_default();
    let mut s = String::from("mode,events,mean_dwell,min_dwell,time_to_1pct,final_norm\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.mode,
            r.events,
            opt(r.mean_dwell),
            opt(r.min_dwell),
            opt(r.time_to_1pct),
            fmt_num(r.final_norm)
        ));
    }
    s
}

/// Canonical coefficients of a constant-coupling test plant.
pub fn constant_plant(
    lambda1: f64,
    lambda2: f64,
    c1: f64,
    c2: f64,
    q: f64,
    rho: f64,
    ell: f64,
) -> PlantCoefficients {
    PlantCoefficients {
        lambda1,
        lambda2,
        c1: Profile::constant(c1),
        c2: Profile::constant(c2),
        q,
        rho,
        ell,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(mode: Mode) -> RunConfig {
        RunConfig {
            mode,
            canal: None,
            coefficients: Some(constant_plant(2.0, 1.0, 0.3, -0.2, -0.5, 0.5, 1.0)),
            initial: InitialCondition::Canonical {
                u_modes: vec![SineMode {
                    amplitude: 1.0,
                    harmonic: 1.0,
                }],
                v_modes: vec![SineMode {
                    amplitude: 0.5,
                    harmonic: 2.0,
                }],
            },
            sim: SimConfig {
                dt: 0.002,
                n_x: 41,
                t_end: 2.0,
            },
            etc: EtcParams {
                mu: 0.4,
                delta: 0.2,
                c_rule: crate::trigger::CRule::Margin { margin: 0.5 },
                ..Default::default()
            },
            petc: PetcInputs {
                h: None,
                h_frac: Some(1.0),
            },
            ..Default::default()
        }
    }

    #[test]
    fn mode_names_round_trip() {
        for m in Mode::ALL {
            assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
        }
        assert!("fast".parse::<Mode>().is_err());
    }

    #[test]
    fn exactly_one_plant_source() {
        let mut c = small(Mode::Ctc);
        c.canal = Some(CanalConfig::default());
        assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))));
        c.canal = None;
        c.coefficients = None;
        assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn open_loop_holds_zero_and_logs_nothing() {
        let out = run_scenario(&small(Mode::OpenLoop)).unwrap();
        assert_eq!(out.summary.event_count, 0);
        assert!(out.trajectory.iter().all(|r| r.u_held == 0.0));
    }

    #[test]
    fn event_modes_start_with_an_event_at_zero() {
        for mode in [Mode::Cetc, Mode::Petc, Mode::Stc] {
            let out = run_scenario(&small(mode)).unwrap();
            assert_eq!(out.events[0].t, 0.0, "{mode}");
            assert_eq!(out.events[0].dwell, 0.0);
            assert!(out.summary.max_m.unwrap() < 0.0, "{mode}");
        }
    }

    #[test]
    fn mismatched_comparison_is_rejected() {
        let a = small(Mode::Cetc);
        let mut b = small(Mode::Petc);
        b.sim.t_end = 3.0;
        assert!(matches!(
            compare_modes(&[a, b]),
            Err(Error::ConfigMismatch(_))
        ));
    }
}

use std::fs;

use hyperbolic_etc::experiment::{
    compare_modes, constant_plant, run_scenario, InitialCondition, Mode, PetcInputs, RunConfig,
    SineMode,
};
use hyperbolic_etc::plant::{PlantCoefficients, Profile};
use hyperbolic_etc::saint_venant::CanalConfig;
use hyperbolic_etc::sim::{l2_norm, HyperbolicState, SimConfig, Transport};
use hyperbolic_etc::trigger::{CRule, EtcParams};
use hyperbolic_etc::Error;

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
            t_end: 4.0,
        },
        etc: EtcParams {
            mu: 0.4,
            delta: 0.2,
            c_rule: CRule::Margin { margin: 0.5 },
            ..Default::default()
        },
        petc: PetcInputs {
            h: None,
            h_frac: Some(0.5),
        },
        ..Default::default()
    }
}

fn with_dir(mut cfg: RunConfig, dir: &std::path::Path) -> RunConfig {
    cfg.output.dir = Some(dir.to_path_buf());
    cfg.output.stride = 5;
    cfg
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let sa = run_scenario(&with_dir(small(Mode::Stc), a.path()))
        .unwrap()
        .summary;
    let sb = run_scenario(&with_dir(small(Mode::Stc), b.path()))
        .unwrap()
        .summary;
    assert_eq!(sa, sb);
    for name in &sa.files {
        let (x, y) = (
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
        );
        assert!(!x.is_empty() && x == y, "{name} differs");
    }
}

#[test]
fn comparing_a_config_with_itself_gives_identical_rows() {
    let (rows, _) = compare_modes(&[small(Mode::Cetc), small(Mode::Cetc)]).unwrap();
    assert_eq!(rows[0], rows[1]);
}

#[test]
fn comparison_requires_shared_plant() {
    let mut other = small(Mode::Petc);
    other.initial = InitialCondition::Canonical {
        u_modes: vec![],
        v_modes: vec![],
    };
    assert!(matches!(
        compare_modes(&[small(Mode::Cetc), other]),
        Err(Error::ConfigMismatch(_))
    ));
}

#[test]
fn open_loop_and_continuous_modes_log_no_events() {
    let ol = run_scenario(&small(Mode::OpenLoop)).unwrap();
    assert!(ol.events.is_empty() && ol.trajectory.iter().all(|r| r.u_held == 0.0));
    let ctc = run_scenario(&small(Mode::Ctc)).unwrap();
    assert!(ctc.events.is_empty());
    assert!(ctc.trajectory.iter().all(|r| r.u_held == r.u_continuous));
}

#[test]
fn events_reset_the_holding_error() {
    let mut cfg = RunConfig {
        mode: Mode::Cetc,
        ..RunConfig::default()
    };
    cfg.sim.n_x = 101;
    cfg.sim.t_end = 5.0;
    cfg.output.stride = 1;
    let out = run_scenario(&cfg).unwrap();
    assert!(out.events.len() > 2);
    let dt = cfg.sim.dt;
    for e in &out.events {
        let row = &out.trajectory[(e.t / dt).round() as usize];
        assert_eq!(row.t, e.t);
        assert_eq!(row.u_held, row.u_continuous);
        assert_eq!(row.d, 0.0);
    }
    // Away from firing steps the rule never exceeds zero.
    let fired: Vec<usize> = out
        .events
        .iter()
        .map(|e| (e.t / dt).round() as usize)
        .collect();
    for (i, r) in out.trajectory.iter().enumerate() {
        assert!(r.m < 0.0);
        assert!(fired.contains(&i) || r.gamma_c <= 1e-9, "t = {}", r.t);
    }
}

#[test]
fn periodic_events_sit_on_the_sampling_grid() {
    let out = run_scenario(&small(Mode::Petc)).unwrap();
    let h = out.summary.h.unwrap();
    let tau = out.summary.tau.unwrap();
    assert!(h <= 0.5 * tau + 1e-15);
    for e in &out.events {
        let k = e.t / h;
        assert!((k - k.round()).abs() < 1e-9, "{} is not on the h-grid", e.t);
    }
    for e in out.events.iter().skip(1) {
        assert!(e.dwell >= h - 1e-12);
    }
}

#[test]
fn self_triggered_audit_is_consistent() {
    let out = run_scenario(&small(Mode::Stc)).unwrap();
    let tau = out.summary.tau.unwrap();
    assert_eq!(out.events.len(), out.stc_audit.len());
    for a in &out.stc_audit {
        assert!(a.f.is_finite() && a.f >= 0.0 && a.vbar2 >= 0.0);
        assert!(a.g >= tau);
    }
    for (e, a) in out.events.iter().skip(1).zip(&out.stc_audit) {
        assert!(e.dwell >= a.g - 1e-12 && e.dwell < a.g + 2.0 * 0.002 + 1e-12);
    }
}

#[test]
fn observer_error_does_not_depend_on_the_trigger() {
    let (_, outs) = compare_modes(&[
        small(Mode::Cetc),
        small(Mode::Petc),
        small(Mode::Stc),
        small(Mode::Ctc),
    ])
    .unwrap();
    let base = &outs[0].error_trajectory;
    for o in &outs[1..] {
        for (a, b) in base.iter().zip(&o.error_trajectory) {
            assert_eq!(a.0, b.0);
            assert!((a.1 - b.1).abs() <= 1e-12 && (a.2 - b.2).abs() <= 1e-12);
        }
    }
}

#[test]
fn output_headers() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = with_dir(
        RunConfig {
            mode: Mode::Stc,
            ..RunConfig::default()
        },
        dir.path(),
    );
    cfg.sim.t_end = 0.05;
    cfg.sim.n_x = 101;
    cfg.output.kernels = true;
    let s = run_scenario(&cfg).unwrap().summary;
    let header = |name: &str| {
        fs::read_to_string(dir.path().join(name))
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .to_string()
    };
    assert_eq!(
        header("trajectory.csv"),
        "t,norm_plant,norm_observer,norm_error,U_held,U_continuous"
    );
    assert_eq!(
        header("events.csv"),
        "mode,k,t_k,dwell,U_held,F_k,G_k,Gbar_k"
    );
    assert_eq!(header("observer_error.csv"), "t,norm_error,v_tilde_0");
    assert_eq!(header("trigger.csv"), "t,d,m,gamma_c");
    assert_eq!(
        header("physical.csv"),
        "t,H_0,H_2.5,H_5,H_7.5,H_10,V_0,V_2.5,V_5,V_7.5,V_10,U_ell"
    );
    assert!(header("gains.csv").starts_with("x,p1,p2"));
    for f in ["K", "P", "L", "R"] {
        assert!(s.files.contains(&format!("kernels_{f}.csv")));
    }
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("constants.json")).unwrap())
            .unwrap();
    assert!(json["design"]["tau"].as_f64().unwrap() > 0.0);
    assert!(json["rho_q"].as_f64().unwrap() < 0.5);

    let mut ctc = with_dir(cfg.with_mode(Mode::Ctc), dir.path());
    ctc.output.kernels = false;
    run_scenario(&ctc).unwrap();
    assert_eq!(header("events.csv"), "mode,k,t_k,dwell,U_held");
}

#[test]
fn canal_stays_physical_on_a_short_run() {
    let mut cfg = RunConfig {
        mode: Mode::Cetc,
        ..RunConfig::default()
    };
    cfg.sim.t_end = 2.0;
    cfg.output.stride = 50;
    let out = run_scenario(&cfg).unwrap();
    assert!(out.summary.min_depth.unwrap() > 0.0);
    assert!(out
        .physical
        .iter()
        .all(|(_, h, _, u)| h.iter().all(|h| *h > 0.0) && *u >= 0.0));
    let initial = out.trajectory[0].norm_plant;
    assert_eq!(initial, out.summary.initial_norm);
    assert!(initial.is_finite() && initial > 0.0);
}

#[test]
fn config_validation() {
    let mut cfg = small(Mode::Ctc);
    cfg.initial = InitialCondition::default();
    assert!(matches!(run_scenario(&cfg), Err(Error::InvalidConfig(_))));
    let mut cfg = small(Mode::Ctc);
    cfg.canal = Some(CanalConfig::default());
    assert!(matches!(run_scenario(&cfg), Err(Error::InvalidConfig(_))));
    let mut cfg = small(Mode::Petc);
    cfg.petc = PetcInputs {
        h: Some(10.0),
        h_frac: None,
    };
    assert!(matches!(
        run_scenario(&cfg),
        Err(Error::SamplingPeriodTooLong { .. })
    ));
    let mut cfg = small(Mode::Ctc);
    cfg.sim.dt = 0.1;
    assert!(matches!(
        run_scenario(&cfg),
        Err(Error::CflViolation { .. })
    ));
}

#[test]
fn pure_outflow_empties_the_domain() {
    // Reflection-free boundaries are outside the controlled class, so the
    // transport step is driven directly.
    let c = PlantCoefficients {
        lambda1: 2.0,
        lambda2: 1.0,
        c1: Profile::zero(),
        c2: Profile::zero(),
        q: 0.0,
        rho: 0.0,
        ell: 1.0,
    };
    let grid = hyperbolic_etc::grid::UniformGrid::new(51, 1.0).unwrap();
    let dt = 0.01;
    let tr = Transport::new(&c, grid, dt).unwrap();
    let mut s = HyperbolicState::from_fn(grid, |x| (3.0 * x).sin() + 1.0, |x| x * x);
    let mut next = s.clone();
    let mut prev = l2_norm(&s);
    for step in 1..=200 {
        tr.plant_into(&s, 0.0, &mut next);
        std::mem::swap(&mut s, &mut next);
        let n = l2_norm(&s);
        assert!(n <= prev + 1e-15, "norm grew at step {step}");
        prev = n;
    }
    assert!(prev < 1e-6, "{prev}");
}

use std::f64::consts::{PI, TAU};

use fosre::config::{hz, stage_plant, table_configs, ControllerKind, DESIGN_CROSSOVER_HZ};
use fosre::crone::CroneConfig;
use fosre::elements::{make_fore, make_fosre, make_sosre, Controller};
use fosre::hosidf::describing_functions;
use fosre::sim::{
    control_peak, harmonic_extract, simulate_closed_loop, simulate_linear, simulate_loop,
    simulate_reset, step_metrics, steady_state_metrics, SimConfig, SimulationTrace,
};
use fosre::stability::build_closed_loop;
use fosre::study::{resolve_study, run_step, StudyOptions, STUDY_FREQUENCIES_HZ};
use fosre::StateSpaceSystem;
use num_complex::Complex64;
use rayon::prelude::*;

fn resolved(kind: ControllerKind, set: u8) -> Controller {
    let plant = stage_plant();
    let cfg = table_configs()
        .into_iter()
        .find(|c| {
            c.kind == kind
                && (kind == ControllerKind::Pid || c.name.ends_with(&set.to_string()))
        })
        .unwrap();
    cfg.resolve(&plant, DESIGN_CROSSOVER_HZ).unwrap().controller
}

/// Open loop as the plain product of block responses.
fn loop_gain(ctrl: &Controller, w: f64) -> Complex64 {
    let lag = match &ctrl.lag {
        Some(rs) => rs.base_linear().response(w).unwrap(),
        None => Complex64::new(1.0, 0.0),
    };
    lag * ctrl.lead.response(w).unwrap()
        * ctrl.pi.response(w).unwrap()
        * ctrl.tamed_derivative.response(w).unwrap()
}

#[test]
fn pid_error_follows_sensitivity() {
    let ctrl = resolved(ControllerKind::Pid, 1);
    let plant = stage_plant();
    let f = 2.0;
    let w = hz(f);
    let cfg = StudyOptions::default().tracking_config(f).unwrap();
    let tr = simulate_closed_loop(&ctrl, &plant, &|t| (w * t).sin(), &cfg).unwrap();
    let m = steady_state_metrics(&tr, w, &cfg).unwrap();
    let c = loop_gain(&ctrl, w);
    let l = c * plant.response(w).unwrap();
    let s = 1.0 / (1.0 + l);
    let expect = s.norm() / 2f64.sqrt();
    assert!((m.rms.unwrap() / expect - 1.0).abs() < 0.01, "{:?} vs {expect}", m.rms);
    // mean |sin| is 2/π
    assert!((m.iae.unwrap() / (s.norm() * 2.0 / PI) - 1.0).abs() < 0.01);
    let t_warm = cfg.warmup_periods as f64 / f;
    let peak = control_peak(&tr, t_warm);
    let expect_u = (c * s).norm();
    assert!((peak / expect_u - 1.0).abs() < 0.01, "{peak} vs {expect_u}");
}

#[test]
fn zero_reference_gives_zero_error() {
    let ctrl = resolved(ControllerKind::Fosre, 1);
    let cfg = StudyOptions::default().tracking_config(4.0).unwrap();
    let tr = simulate_closed_loop(&ctrl, &stage_plant(), &|_| 0.0, &cfg).unwrap();
    let m = steady_state_metrics(&tr, hz(4.0), &cfg).unwrap();
    assert_eq!(m.rms, Some(0.0));
    assert_eq!(m.iae, Some(0.0));
    assert_eq!(control_peak(&tr, 0.0), 0.0);
}

#[test]
fn harmonic_extract_of_linear_system() {
    let sys = StateSpaceSystem::biquad(&[400.0], &[400.0, 28.0, 1.0]).unwrap();
    let w = hz(3.0);
    let cfg = SimConfig::periodic(w, 2000, 10, 4);
    let tr = simulate_linear(&sys, &|t| (w * t).sin(), &cfg).unwrap();
    let g = sys.response(w).unwrap();
    let h1 = harmonic_extract(&tr, w, 1, 4).unwrap();
    let h3 = harmonic_extract(&tr, w, 3, 4).unwrap();
    assert!((h1 - g).norm() < 1e-3 * g.norm(), "{h1} vs {g}");
    assert!(h3.norm() <= 1e-6, "{h3}");
}

fn converged_reset_run(rs: &fosre::elements::ResetSystem, w: f64) -> SimulationTrace {
    let cfg = SimConfig::periodic(w, 2000, 30, 4);
    simulate_reset(rs, &|t| (w * t).sin(), &cfg).unwrap()
}

#[test]
fn harmonic_extract_matches_describing_function() {
    let crone = CroneConfig::covering(-0.4, hz(1.0), hz(100.0)).unwrap();
    let cases = [
        ("fore", make_fore(hz(5.0), hz(5.0), hz(1e3), 0.2).unwrap().lag, hz(3.0)),
        ("sosre", make_sosre(hz(5.0), 1.0, 0.2).unwrap(), hz(2.0)),
        ("fosre", make_fosre(hz(3.0), 1.0, 0.2, &crone).unwrap(), hz(1.5)),
    ];
    for (name, rs, w) in cases {
        let tr = converged_reset_run(&rs, w);
        let df = describing_functions(&rs, w, &[1, 3, 5]).unwrap();
        for (k, n) in [1u32, 3, 5].iter().enumerate() {
            let h = harmonic_extract(&tr, w, *n, 4).unwrap();
            let rel = (h.norm() / df[k].norm() - 1.0).abs();
            let dphi = (h / df[k]).arg().to_degrees().abs();
            assert!(rel < 0.02 && dphi < 2.0, "{name} n={n}: sim {h} vs df {}", df[k]);
        }
    }
}

#[test]
fn sosre_has_no_harmonics_at_its_corner() {
    let wra = hz(4.0);
    let rs = make_sosre(wra, 1.0, 0.2).unwrap();
    let cfg = SimConfig {
        record_states: true,
        ..SimConfig::periodic(wra, 4000, 20, 4)
    };
    let tr = simulate_reset(&rs, &|t| (wra * t).sin(), &cfg).unwrap();
    let h1 = harmonic_extract(&tr, wra, 1, 4).unwrap();
    let h3 = harmonic_extract(&tr, wra, 3, 4).unwrap();
    assert!(h3.norm() <= 1e-6 * h1.norm(), "{h3} vs {h1}");
    // no phase shift with respect to the base linear element
    let base = rs.base_linear().response(wra).unwrap();
    assert!((h1 / base).arg().to_degrees().abs() < 0.1, "{h1} vs {base}");
    assert!((h1.norm() / base.norm() - 1.0).abs() < 1e-4);
    // late jumps are negligible: the run matches the non-resetting element
    let lin = simulate_reset(&rs.with_gamma(1.0).unwrap(), &|t| (wra * t).sin(), &cfg).unwrap();
    let late = tr.t.iter().position(|&t| t >= 20.0 / 4.0).unwrap();
    let scale = tr.y.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let dev = tr.y[late..]
        .iter()
        .zip(&lin.y[late..])
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(dev <= 1e-6 * scale, "deviation {dev} of {scale}");
    assert!(tr.reset_times.iter().filter(|&&t| t > 5.0).count() >= 8);
}

#[test]
fn fosre_jumps_smaller_than_sosre() {
    // flattened element pair of the comparison figure, input sin(2πt)
    let crone = CroneConfig::covering(-0.1, hz(0.8), hz(100.0)).unwrap();
    let fosre = make_fosre(hz(3.18), 1.0, 0.2, &crone).unwrap();
    let sosre = make_sosre(hz(6.5), 1.0, 0.2).unwrap();
    let jump = |rs: &fosre::elements::ResetSystem| -> f64 {
        let cfg = SimConfig {
            record_states: true,
            ..SimConfig::new(1e-4, 6.0)
        };
        let tr = simulate_reset(rs, &|t| (TAU * t).sin(), &cfg).unwrap();
        let states = tr.states.unwrap();
        // jump size (1 − γ)|x| from the state just before each late reset
        tr.reset_times
            .iter()
            .filter(|&&t| t > 3.0)
            .map(|&t| {
                let k = (t / cfg.dt).floor() as usize;
                0.8 * states[k][0].abs()
            })
            .fold(0.0, f64::max)
    };
    let (jf, js) = (jump(&fosre), jump(&sosre));
    assert!(jf < js, "fosre {jf} sosre {js}");
}

#[test]
fn unit_reset_loop_equals_base_linear_loop() {
    let ctrl = resolved(ControllerKind::Fosre, 1);
    let plant = stage_plant();
    let cl = build_closed_loop(&plant, &ctrl).unwrap().with_gamma(1.0);
    let linear = Controller {
        name: "base".into(),
        lag: None,
        lead: ctrl.lag.as_ref().unwrap().base_linear().series(&ctrl.lead).unwrap(),
        pi: ctrl.pi.clone(),
        tamed_derivative: ctrl.tamed_derivative.clone(),
    };
    let w = hz(2.0);
    let cfg = SimConfig::new(1e-4, 1.0);
    let a = simulate_loop(&cl, &|t| (w * t).sin(), &cfg).unwrap();
    let b = simulate_closed_loop(&linear, &plant, &|t| (w * t).sin(), &cfg).unwrap();
    assert!(a.reset_times.is_empty());
    let scale = b.e.iter().map(|v| v.abs()).fold(0.0, f64::max);
    for (x, y) in a.e.iter().zip(&b.e) {
        assert!((x - y).abs() <= 1e-8 * scale, "{x} vs {y}");
    }
}

fn window_rms(tr: &SimulationTrace, periods: usize, f: f64) -> f64 {
    let n = (periods as f64 / (f * tr.dt)).round() as usize;
    let seg = &tr.e[tr.e.len() - 1 - n..tr.e.len() - 1];
    (seg.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt()
}

#[test]
fn halving_dt_keeps_rms() {
    let plant = stage_plant();
    let ctrls = resolve_study(&plant, &StudyOptions::default()).unwrap();
    let jobs: Vec<(usize, f64)> = (0..ctrls.len())
        .flat_map(|i| STUDY_FREQUENCIES_HZ.iter().map(move |&f| (i, f)))
        .collect();
    let bad: Vec<String> = jobs
        .par_iter()
        .filter_map(|&(i, f)| {
            let cl = build_closed_loop(&plant, &ctrls[i].controller).unwrap();
            let w = hz(f);
            let rms = |dt: f64| {
                let cfg = StudyOptions { dt, ..Default::default() }.tracking_config(f).unwrap();
                let tr = simulate_loop(&cl, &|t| (w * t).sin(), &cfg).unwrap();
                window_rms(&tr, cfg.measure_periods, f)
            };
            let (a, b) = (rms(1e-4), rms(5e-5));
            let rel = (b / a - 1.0).abs();
            (rel >= 0.005).then(|| format!("{} at {f} Hz: {a:.4e} vs {b:.4e}", ctrls[i].design.name))
        })
        .collect();
    assert!(bad.is_empty(), "dt halving moved the RMS by 0.5% or more: {bad:#?}");
}

#[test]
fn resets_happen_at_error_zeros_and_contract() {
    let ctrl = resolved(ControllerKind::Sosre, 1);
    let plant = stage_plant();
    let cl = build_closed_loop(&plant, &ctrl).unwrap();
    let w = hz(2.0);
    let cfg = SimConfig {
        record_states: true,
        ..SimConfig::new(1e-4, 1.0)
    };
    let tr = simulate_loop(&cl, &|t| (w * t).sin(), &cfg).unwrap();
    assert!(!tr.reset_times.is_empty());
    for pair in tr.reset_times.windows(2) {
        assert!(pair[1] - pair[0] >= cfg.min_inter_reset);
    }
    // the error at a reset instant, reconstructed from the neighbouring
    // samples, is within what the grid can resolve
    let slope = tr.e.windows(2).map(|p| (p[1] - p[0]).abs()).fold(0.0, f64::max);
    for &t in &tr.reset_times {
        let k = (t / cfg.dt).floor() as usize;
        if k + 1 < tr.e.len() {
            let (e0, e1) = (tr.e[k], tr.e[k + 1]);
            assert!(e0.min(e1) <= slope && e0.abs().min(e1.abs()) <= slope, "e around {t}: {e0} {e1}");
        }
    }
    // jumps never increase the state norm when A_ρ is a contraction
    let reset = &cl.reset_diag;
    for x in tr.states.as_ref().unwrap().iter().step_by(97) {
        let jumped = x.component_mul(reset);
        assert!(jumped.norm() <= x.norm() + 1e-15);
    }
}

#[test]
fn step_overshoot_of_reset_controllers_below_pid() {
    let plant = stage_plant();
    let opts = StudyOptions::default();
    let o = |c: &Controller| run_step(c, &plant, &opts).unwrap().record.overshoot.unwrap();
    let pid = o(&resolved(ControllerKind::Pid, 1));
    let fosre = o(&resolved(ControllerKind::Fosre, 1));
    let sosre = o(&resolved(ControllerKind::Sosre, 1));
    assert!(fosre < pid && sosre < pid, "fosre {fosre} sosre {sosre} pid {pid}");
}

#[test]
fn critically_damped_settling() {
    // y'' + 2a y' + a² y = a² u, unit step: y = 1 − (1 + a t) e^{−a t}
    let a = 20.0;
    let sys = StateSpaceSystem::biquad(&[a * a], &[a * a, 2.0 * a, 1.0]).unwrap();
    let cfg = SimConfig::new(1e-4, 2.0);
    let tr = simulate_linear(&sys, &|_| 1.0, &cfg).unwrap();
    let m = step_metrics(&tr).unwrap();
    // 1 − (1 + x) e^{−x} = 0.98 → x ≈ 5.8335
    let mut x: f64 = 5.8;
    for _ in 0..50 {
        x -= ((1.0 + x) * (-x).exp() - 0.02) / (-x * (-x).exp());
    }
    let exact = x / a;
    // final value is 1 to within e^{-40}
    assert!((m.settling_time.unwrap() - exact).abs() <= cfg.dt, "{:?} vs {exact}", m.settling_time);
    assert!(m.overshoot.unwrap() < 1e-12);
}

#[test]
fn df_predicts_loop_error_at_linear_frequency() {
    // at the frequency where ψ = 0 the reset lag acts linearly, so the
    // first-order describing function of the loop predicts the error
    let ctrl = resolved(ControllerKind::Sosre, 1);
    let plant = stage_plant();
    let lag = ctrl.lag.clone().unwrap();
    let w = fosre::hosidf::omega_lb_realized(&lag, hz(0.1), hz(100.0)).unwrap();
    let g1 = fosre::hosidf::open_loop_hosidf(&ctrl, &plant, w, 1).unwrap();
    let predicted = (1.0 / (1.0 + g1)).norm() / 2f64.sqrt();
    let cl = build_closed_loop(&plant, &ctrl).unwrap();
    // start on the linear orbit: the γ = 1 loop after its transient
    let spp = 4000;
    let cfg_lin = SimConfig::periodic(w, spp, 30, 1);
    let lin = cl.with_gamma(1.0);
    let warm = simulate_loop_states(&lin, w, &cfg_lin);
    let cfg = SimConfig::periodic(w, spp, 5, 5);
    let tr = fosre::sim::simulate_loop_from(&cl, &|t| (w * t).sin(), &cfg, Some(&warm)).unwrap();
    let m = steady_state_metrics(&tr, w, &cfg).unwrap();
    let rel = (m.rms.unwrap() / predicted - 1.0).abs();
    assert!(rel < 0.05, "sim {:?} vs DF {predicted}", m.rms);
}

fn simulate_loop_states(
    cl: &fosre::stability::ClosedLoopResetSystem,
    w: f64,
    cfg: &SimConfig,
) -> nalgebra::DVector<f64> {
    let cfg = SimConfig {
        record_states: true,
        ..*cfg
    };
    let tr = simulate_loop(cl, &|t| (w * t).sin(), &cfg).unwrap();
    tr.states.unwrap().pop().unwrap()
}

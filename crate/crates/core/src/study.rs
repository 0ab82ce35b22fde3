//! Tracking study on the positioning stage: the five bundled controllers,
//! sinusoidal references at 0.5, 0.8, 2 and 4 Hz, a unit step, and a
//! comparison against the published error tables.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{hz, stage_plant, table_configs, ControllerConfig, ControllerKind, TABLE_CONFIGS};
use crate::crone::{log_space, CroneConfig};
use crate::elements::{make_fosre, make_fosre_cglp, make_sosre_cglp, Controller};
use crate::error::{Error, Result};
use crate::hosidf::{hosidf_sweep, psi, OpenLoop};
use crate::lti::StateSpaceSystem;
use crate::sim::{
    control_peak, simulate_loop, simulate_reset, step_metrics, steady_state_metrics, SimConfig,
    SimulationTrace, TrackingMetrics,
};
use crate::stability::build_closed_loop;
use crate::tuner::{crossover_df, phase_margin_df};

pub const STUDY_FREQUENCIES_HZ: [f64; 4] = [0.5, 0.8, 2.0, 4.0];

/// Published steady-state error of one controller, per study frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PublishedRow {
    pub kind: ControllerKind,
    pub set: u8,
    pub rms: [f64; 4],
    pub iae: [f64; 4],
}

pub const PUBLISHED: [PublishedRow; 6] = [
    PublishedRow {
        kind: ControllerKind::Fosre,
        set: 1,
        rms: [9.36e-6, 1.47e-5, 1.36e-5, 1.31e-4],
        iae: [1.68e-5, 2.68e-5, 1.84e-5, 5.99e-5],
    },
    PublishedRow {
        kind: ControllerKind::Sosre,
        set: 1,
        rms: [1.62e-5, 3.64e-5, 1.53e-5, 4.76e-4],
        iae: [2.22e-5, 4.30e-5, 2.07e-5, 1.44e-4],
    },
    PublishedRow {
        kind: ControllerKind::Pid,
        set: 1,
        rms: [2.51e-5, 3.96e-5, 3.66e-5, 3.21e-4],
        iae: [4.52e-5, 7.21e-5, 4.94e-5, 1.44e-4],
    },
    PublishedRow {
        kind: ControllerKind::Fosre,
        set: 2,
        rms: [9.37e-6, 1.47e-5, 1.60e-5, 3.95e-4],
        iae: [1.68e-5, 2.68e-5, 2.11e-5, 1.15e-4],
    },
    PublishedRow {
        kind: ControllerKind::Sosre,
        set: 2,
        rms: [1.47e-4, 1.64e-5, 9.34e-5, 8.72e-4],
        iae: [1.63e-4, 2.99e-5, 6.13e-5, 2.28e-4],
    },
    PublishedRow {
        kind: ControllerKind::Pid,
        set: 2,
        rms: [2.51e-5, 3.96e-5, 3.65e-5, 3.21e-4],
        iae: [4.52e-5, 7.21e-5, 4.94e-5, 1.44e-4],
    },
];

pub fn published(set: u8, kind: ControllerKind) -> Option<&'static PublishedRow> {
    PUBLISHED.iter().find(|r| r.set == set && r.kind == kind)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StudyOptions {
    /// Step of the tracking runs, s. Every study period must be a whole
    /// number of steps.
    pub dt: f64,
    pub warmup_periods: usize,
    pub measure_periods: usize,
    pub step_dt: f64,
    pub step_duration: f64,
    pub crossover_hz: f64,
    pub pm_target_deg: f64,
    pub pm_tol_deg: f64,
    /// Relative crossover tolerance.
    pub crossover_tol: f64,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            warmup_periods: 10,
            measure_periods: 10,
            step_dt: 1e-5,
            step_duration: 0.2,
            crossover_hz: crate::config::DESIGN_CROSSOVER_HZ,
            pm_target_deg: 45.0,
            pm_tol_deg: 1.0,
            crossover_tol: 0.02,
        }
    }
}

impl StudyOptions {
    pub fn tracking_config(&self, f_hz: f64) -> Result<SimConfig> {
        let spp = 1.0 / (f_hz * self.dt);
        let k = spp.round();
        if (spp - k).abs() > 1e-9 * spp || k < 4.0 {
            return Err(Error::NonIntegerPeriods(format!(
                "{f_hz} Hz is {spp} steps of {} s",
                self.dt
            )));
        }
        let cfg = SimConfig::periodic(hz(f_hz), k as usize, self.warmup_periods, self.measure_periods);
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Controller of the study with its resolved gains and describing-function
/// loop figures.
#[derive(Debug, Clone, Serialize)]
pub struct DesignRecord {
    pub name: String,
    pub kind: ControllerKind,
    pub set: u8,
    pub k_p: f64,
    pub alpha: f64,
    pub crossover_hz: f64,
    pub phase_margin_deg: f64,
    pub crossover_ok: bool,
    pub phase_margin_ok: bool,
}

#[derive(Debug, Clone)]
pub struct StudyController {
    pub config: ControllerConfig,
    pub controller: Controller,
    pub design: DesignRecord,
}

/// Resolves `k_p` and `α` of every bundled controller and evaluates the
/// loop at the design crossover.
pub fn resolve_study(plant: &StateSpaceSystem, opts: &StudyOptions) -> Result<Vec<StudyController>> {
    let sets: Vec<u8> = TABLE_CONFIGS.iter().map(|(s, _)| *s).collect();
    table_configs()
        .into_par_iter()
        .zip(sets)
        .map(|(cfg, set)| {
            let r = cfg.resolve(plant, opts.crossover_hz)?;
            let wc = hz(opts.crossover_hz);
            let crossover = crossover_df(&r.controller, plant, wc / 10.0, wc * 10.0)?;
            let pm = phase_margin_df(&r.controller, plant, crossover)?;
            let crossover_hz = crossover / TAU;
            let mut config = cfg.clone();
            config.k_p = Some(r.k_p);
            if cfg.kind != ControllerKind::Pid {
                config.alpha = Some(r.alpha);
            }
            Ok(StudyController {
                design: DesignRecord {
                    name: cfg.name.clone(),
                    kind: cfg.kind,
                    set,
                    k_p: r.k_p,
                    alpha: r.alpha,
                    crossover_hz,
                    phase_margin_deg: pm,
                    crossover_ok: (crossover_hz / opts.crossover_hz - 1.0).abs() <= opts.crossover_tol,
                    phase_margin_ok: (pm - opts.pm_target_deg).abs() <= opts.pm_tol_deg,
                },
                config,
                controller: r.controller,
            })
        })
        .collect()
}

/// Steady-state result of one tracking run. A run that did not settle keeps
/// its reason in `error` and has no metrics.
#[derive(Debug, Clone, Serialize)]
pub struct TrackingRecord {
    pub frequency_hz: f64,
    pub rms: Option<f64>,
    /// Mean absolute error over the measurement window.
    pub iae: Option<f64>,
    pub iae_raw: Option<f64>,
    pub control_peak: Option<f64>,
    pub resets_in_window: usize,
    pub coalesced_resets: usize,
    pub published_rms: Option<f64>,
    pub published_iae: Option<f64>,
    pub error: Option<String>,
}

/// Samples of a trace segment, thinned to at most `max_points`.
#[derive(Debug, Clone, Default)]
pub struct Excerpt {
    pub t: Vec<f64>,
    pub r: Vec<f64>,
    pub e: Vec<f64>,
    pub u: Vec<f64>,
    pub y: Vec<f64>,
}

fn excerpt(trace: &SimulationTrace, from_t: f64, max_points: usize) -> Excerpt {
    let start = trace.t.iter().position(|&t| t >= from_t).unwrap_or(trace.t.len());
    let n = trace.t.len() - start;
    let stride = n.div_ceil(max_points.max(1)).max(1);
    let pick = |v: &[f64]| v[start..].iter().step_by(stride).cloned().collect::<Vec<_>>();
    Excerpt {
        t: pick(&trace.t),
        r: pick(&trace.r),
        e: pick(&trace.e),
        u: pick(&trace.u),
        y: pick(&trace.y),
    }
}

pub struct TrackingRun {
    pub record: TrackingRecord,
    /// Last two reference periods.
    pub tail: Excerpt,
}

/// Tracks `sin(2π f t)` from rest and measures the steady-state error.
pub fn run_tracking(
    ctrl: &Controller,
    plant: &StateSpaceSystem,
    f_hz: f64,
    opts: &StudyOptions,
) -> Result<TrackingRun> {
    let cfg = opts.tracking_config(f_hz)?;
    let cl = build_closed_loop(plant, ctrl)?;
    let w = hz(f_hz);
    let trace = simulate_loop(&cl, &|t| (w * t).sin(), &cfg)?;
    let t_warm = cfg.warmup_periods as f64 / f_hz;
    let t_tail = (cfg.warmup_periods + cfg.measure_periods).saturating_sub(2) as f64 / f_hz;
    let (metrics, error) = match steady_state_metrics(&trace, w, &cfg) {
        Ok(m) => (m, None),
        Err(e @ Error::NotConverged(_)) => (TrackingMetrics::default(), Some(e.to_string())),
        Err(e) => return Err(e),
    };
    let settled = error.is_none();
    Ok(TrackingRun {
        record: TrackingRecord {
            frequency_hz: f_hz,
            rms: metrics.rms,
            iae: metrics.iae,
            iae_raw: metrics.iae_raw,
            control_peak: settled.then(|| control_peak(&trace, t_warm - 0.5 * cfg.dt)),
            resets_in_window: trace.reset_times.iter().filter(|&&t| t >= t_warm).count(),
            coalesced_resets: trace.coalesced_resets,
            published_rms: None,
            published_iae: None,
            error,
        },
        tail: excerpt(&trace, t_tail - 0.5 * cfg.dt, 2000),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    pub overshoot: Option<f64>,
    pub settling_time: Option<f64>,
    pub error: Option<String>,
}

pub struct StepRun {
    pub record: StepRecord,
    pub trace: Excerpt,
}

/// Unit-step response from rest.
pub fn run_step(ctrl: &Controller, plant: &StateSpaceSystem, opts: &StudyOptions) -> Result<StepRun> {
    let cfg = SimConfig::new(opts.step_dt, opts.step_duration);
    let cl = build_closed_loop(plant, ctrl)?;
    let trace = simulate_loop(&cl, &|_| 1.0, &cfg)?;
    let record = match step_metrics(&trace) {
        Ok(m) => StepRecord {
            overshoot: m.overshoot,
            settling_time: m.settling_time,
            error: None,
        },
        Err(e @ Error::NoSettling) => StepRecord {
            overshoot: None,
            settling_time: None,
            error: Some(e.to_string()),
        },
        Err(e) => return Err(e),
    };
    Ok(StepRun {
        record,
        trace: excerpt(&trace, 0.0, 4000),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionOutcome {
    pub id: String,
    pub description: String,
    pub hard: bool,
    pub passed: bool,
    pub detail: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub criteria: Vec<CriterionOutcome>,
    pub hard_passed: bool,
}

pub struct Study {
    pub controllers: Vec<StudyController>,
    /// `tracking[i][k]` belongs to controller `i` and frequency `k`.
    pub tracking: Vec<Vec<TrackingRun>>,
    pub steps: Vec<Option<StepRun>>,
    pub report: ComparisonReport,
}

fn find(ctrls: &[StudyController], set: u8, kind: ControllerKind) -> Option<usize> {
    ctrls
        .iter()
        .position(|c| c.design.kind == kind && (kind == ControllerKind::Pid || c.design.set == set))
}

/// Runs the whole study. Step responses are computed for set 1 and the PID.
pub fn run_study(opts: &StudyOptions) -> Result<Study> {
    let plant = stage_plant();
    let controllers = resolve_study(&plant, opts)?;
    let jobs: Vec<(usize, usize)> = (0..controllers.len())
        .flat_map(|i| (0..STUDY_FREQUENCIES_HZ.len()).map(move |k| (i, k)))
        .collect();
    let runs: Vec<TrackingRun> = jobs
        .par_iter()
        .map(|&(i, k)| {
            let c = &controllers[i];
            let mut run = run_tracking(&c.controller, &plant, STUDY_FREQUENCIES_HZ[k], opts)?;
            if let Some(row) = published(c.design.set.max(1), c.design.kind) {
                run.record.published_rms = Some(row.rms[k]);
                run.record.published_iae = Some(row.iae[k]);
            }
            Ok(run)
        })
        .collect::<Result<_>>()?;
    let mut it = runs.into_iter();
    let tracking: Vec<Vec<TrackingRun>> = controllers
        .iter()
        .map(|_| it.by_ref().take(STUDY_FREQUENCIES_HZ.len()).collect())
        .collect();
    let steps: Vec<Option<StepRun>> = controllers
        .par_iter()
        .map(|c| {
            if c.design.set <= 1 {
                run_step(&c.controller, &plant, opts).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect::<Result<_>>()?;
    let report = compare(&controllers, &tracking, &steps);
    Ok(Study {
        controllers,
        tracking,
        steps,
        report,
    })
}

/// Checks the design targets, the error orderings at 0.5 and 0.8 Hz, the
/// set 1 step overshoot and the factor-3 agreement with the tables.
pub fn compare(
    ctrls: &[StudyController],
    tracking: &[Vec<TrackingRun>],
    steps: &[Option<StepRun>],
) -> ComparisonReport {
    use ControllerKind::*;
    let mut criteria = Vec::new();

    let mut detail = Vec::new();
    for c in ctrls {
        let d = &c.design;
        if !(d.crossover_ok && d.phase_margin_ok) {
            detail.push(format!(
                "{}: crossover {:.3} Hz, phase margin {:.3} deg",
                d.name, d.crossover_hz, d.phase_margin_deg
            ));
        }
    }
    criteria.push(CriterionOutcome {
        id: "5.design".into(),
        description: "describing-function crossover at 150 Hz within 2% and phase margin 45 deg within 1 deg".into(),
        hard: true,
        passed: detail.is_empty(),
        detail,
    });

    let rms = |set: u8, kind: ControllerKind, k: usize| -> Option<f64> {
        find(ctrls, set, kind).and_then(|i| tracking[i][k].record.rms)
    };
    let mut detail = Vec::new();
    let mut ok = true;
    for set in [1u8, 2] {
        for k in 0..2 {
            let f = STUDY_FREQUENCIES_HZ[k];
            for other in [Sosre, Pid] {
                let (a, b) = (rms(set, Fosre, k), rms(set, other, k));
                let pass = matches!((a, b), (Some(a), Some(b)) if a < b);
                ok &= pass;
                detail.push(format!(
                    "set {set}, {f} Hz: FOSRE {} vs {:?} {} -> {}",
                    fmt_opt(a),
                    other,
                    fmt_opt(b),
                    if pass { "ok" } else { "FAIL" }
                ));
            }
        }
    }
    criteria.push(CriterionOutcome {
        id: "5.ordering".into(),
        description: "steady-state RMS at 0.5 and 0.8 Hz: FOSRE below SOSRE and below PID in both sets".into(),
        hard: true,
        passed: ok,
        detail,
    });

    let overshoot = |set: u8, kind: ControllerKind| -> Option<f64> {
        find(ctrls, set, kind)
            .and_then(|i| steps[i].as_ref())
            .and_then(|s| s.record.overshoot)
    };
    let pid = overshoot(1, Pid);
    let mut detail = Vec::new();
    let mut ok = true;
    for kind in [Fosre, Sosre] {
        let v = overshoot(1, kind);
        let pass = matches!((v, pid), (Some(v), Some(p)) if v < p);
        ok &= pass;
        detail.push(format!(
            "set 1 overshoot {:?} {} vs PID {} -> {}",
            kind,
            fmt_opt(v),
            fmt_opt(pid),
            if pass { "ok" } else { "FAIL" }
        ));
    }
    criteria.push(CriterionOutcome {
        id: "5.overshoot".into(),
        description: "set 1 step overshoot: FOSRE and SOSRE below PID".into(),
        hard: true,
        passed: ok,
        detail,
    });

    let mut detail = Vec::new();
    let mut ok = true;
    for (c, runs) in ctrls.iter().zip(tracking) {
        for run in runs {
            let r = &run.record;
            let pass = match (r.rms, r.published_rms) {
                (Some(v), Some(p)) => v <= 3.0 * p && v >= p / 3.0,
                _ => false,
            };
            if !pass {
                ok = false;
                detail.push(format!(
                    "{} at {} Hz: {} vs published {}",
                    c.design.name,
                    r.frequency_hz,
                    fmt_opt(r.rms),
                    fmt_opt(r.published_rms)
                ));
            }
        }
    }
    criteria.push(CriterionOutcome {
        id: "6.factor3".into(),
        description: "steady-state RMS within a factor of 3 of the published tables".into(),
        hard: false,
        passed: ok,
        detail,
    });

    ComparisonReport {
        hard_passed: criteria.iter().filter(|c| c.hard).all(|c| c.passed),
        criteria,
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".into(), |v| format!("{v:.3e}"))
}

pub fn slug(name: &str) -> String {
    let mut s = String::new();
    for ch in name.chars() {
        if ch.is_ascii_alphanumeric() {
            s.push(ch.to_ascii_lowercase());
        } else if !s.ends_with('_') {
            s.push('_');
        }
    }
    s.trim_matches('_').to_string()
}

fn freq_key(f: f64) -> String {
    format!("{f} Hz")
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Config(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn write_columns(path: &Path, header: &[String], cols: &[&[f64]]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| io_err(path, e))?;
    let n = cols.iter().map(|c| c.len()).min().unwrap_or(0);
    for i in 0..n {
        w.write_record(cols.iter().map(|c| format!("{:.9e}", c[i])))
            .map_err(|e| io_err(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| io_err(path, e))?;
    write_file(path, &bytes)
}

fn write_table<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut Vec<u8>) -> Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf)?;
    write_file(path, &buf)
}

/// Frequency-domain figures of single elements: HOSIDF of a FOSRE CgLp and
/// a SOSRE CgLp, the reset state under `sin(2πt)`, and ψ for families of
/// `λ` and `ω_l`.
pub fn write_element_figures(dir: &Path) -> Result<()> {
    let wf = hz(1500.0);
    let grid = log_space(hz(0.1), hz(1000.0), 200);
    let orders = [1, 3, 5, 7, 9];

    let fosre_crone = CroneConfig::covering(-0.1, hz(0.8), wf)?;
    let fosre = make_fosre_cglp(hz(3.18), 1.0, 0.94 * hz(3.18), wf, 0.2, &fosre_crone)?;
    let sosre = make_sosre_cglp(hz(6.5), 1.0, 1.12 * hz(6.5), wf, 0.2)?;
    for (file, pair) in [("hosidf_fosre_cglp.csv", &fosre), ("hosidf_sosre_cglp.csv", &sosre)] {
        let ol = OpenLoop::from_parts(Some(pair.lag.clone()), pair.lead.clone());
        let table = hosidf_sweep(&ol, &grid, &orders)?;
        write_table(&dir.join(file), |b| table.write_csv(b))?;
    }

    let cfg = SimConfig {
        record_states: true,
        ..SimConfig::new(1e-3, 4.0)
    };
    let input = |t: f64| (TAU * t).sin();
    let tf = simulate_reset(&fosre.lag, &input, &cfg)?;
    let ts = simulate_reset(&sosre.lag, &input, &cfg)?;
    let first = |tr: &SimulationTrace| -> Vec<f64> {
        tr.states.as_ref().map_or_else(Vec::new, |s| s.iter().map(|x| x[0]).collect())
    };
    let (xf, xs) = (first(&tf), first(&ts));
    write_columns(
        &dir.join("reset_state_response.csv"),
        &["t", "input", "reset_state_fosre", "reset_state_sosre"].map(String::from),
        &[&tf.t, &tf.r, &xf, &xs],
    )?;

    let freqs = log_space(hz(0.01), hz(100.0), 200);
    let psi_family = |file: &str, label: &str, members: &[(f64, f64)]| -> Result<()> {
        let cols: Vec<Vec<f64>> = members
            .par_iter()
            .map(|&(lambda, wl)| {
                let crone = CroneConfig::covering(lambda, wl, hz(100.0))?;
                let rs = make_fosre(hz(3.18), 1.0, 0.2, &crone)?;
                freqs.iter().map(|&w| Ok(psi(&rs, w)?.to_degrees())).collect()
            })
            .collect::<Result<_>>()?;
        let fhz: Vec<f64> = freqs.iter().map(|w| w / TAU).collect();
        let mut header = vec!["freq_hz".to_string()];
        let mut refs: Vec<&[f64]> = vec![&fhz];
        for (&(lambda, wl), col) in members.iter().zip(&cols) {
            header.push(match label {
                "lambda" => format!("psi_deg_lambda_{lambda}"),
                _ => format!("psi_deg_omega_l_{}hz", wl / TAU),
            });
            refs.push(col);
        }
        write_columns(&dir.join(file), &header, &refs)
    };
    let lambdas: Vec<(f64, f64)> = [-0.2, -0.4, -0.6, -0.8].iter().map(|&l| (l, hz(0.001))).collect();
    psi_family("psi_lambda_family.csv", "lambda", &lambdas)?;
    let wls: Vec<(f64, f64)> = [0.01, 0.1, 1.0, 10.0].iter().map(|&f| (-0.4, hz(f))).collect();
    psi_family("psi_omega_l_family.csv", "omega_l", &wls)?;
    Ok(())
}

/// Open-loop HOSIDF of every study controller with the plant.
pub fn write_open_loop_figures(dir: &Path, ctrls: &[StudyController]) -> Result<()> {
    let plant = stage_plant();
    let grid = log_space(hz(0.1), hz(1000.0), 200);
    let orders = [1, 3, 5, 7, 9];
    for c in ctrls {
        let ol = OpenLoop::new(&c.controller, &plant)?;
        let table = hosidf_sweep(&ol, &grid, &orders)?;
        let file = format!("open_loop_hosidf_{}.csv", slug(&c.design.name));
        write_table(&dir.join(file), |b| table.write_csv(b))?;
    }
    Ok(())
}

/// Writes every study artifact into `dir`.
pub fn write_study(dir: &Path, study: &Study) -> Result<()> {
    let cfg_dir = dir.join("configs");
    fs::create_dir_all(&cfg_dir).map_err(|e| io_err(&cfg_dir, e))?;
    for c in &study.controllers {
        let path = cfg_dir.join(format!("{}.json", slug(&c.design.name)));
        write_file(&path, (c.config.to_json() + "\n").as_bytes())?;
    }
    let design: Vec<&DesignRecord> = study.controllers.iter().map(|c| &c.design).collect();
    write_json(&dir.join("design.json"), &design)?;

    let mut metrics: BTreeMap<String, BTreeMap<String, &TrackingRecord>> = BTreeMap::new();
    for (c, runs) in study.controllers.iter().zip(&study.tracking) {
        let row = metrics.entry(c.design.name.clone()).or_default();
        for run in runs {
            row.insert(freq_key(run.record.frequency_hz), &run.record);
            let path = dir.join(format!(
                "tracking_error_{}_{}hz.csv",
                slug(&c.design.name),
                run.record.frequency_hz
            ));
            let x = &run.tail;
            write_columns(&path, &["t", "r", "e", "u"].map(String::from), &[&x.t, &x.r, &x.e, &x.u])?;
        }
    }
    write_json(&dir.join("tracking_metrics.json"), &metrics)?;

    // control input at 4 Hz and step responses of set 1 share a time grid
    let set1: Vec<usize> = (0..study.controllers.len())
        .filter(|&i| study.controllers[i].design.set <= 1)
        .collect();
    let k4 = STUDY_FREQUENCIES_HZ.iter().position(|&f| f == 4.0).unwrap_or(0);
    let mut header = vec!["t".to_string()];
    let mut cols: Vec<&[f64]> = Vec::new();
    if let Some(&i0) = set1.first() {
        cols.push(&study.tracking[i0][k4].tail.t);
    }
    for &i in &set1 {
        header.push(format!("u_{}", slug(&study.controllers[i].design.name)));
        cols.push(&study.tracking[i][k4].tail.u);
    }
    write_columns(&dir.join("control_input_4hz_set1.csv"), &header, &cols)?;

    let mut header = vec!["t".to_string()];
    let mut cols: Vec<&[f64]> = Vec::new();
    let mut step_metrics: BTreeMap<String, &StepRecord> = BTreeMap::new();
    for &i in &set1 {
        if let Some(s) = &study.steps[i] {
            if cols.is_empty() {
                cols.push(&s.trace.t);
            }
            header.push(format!("y_{}", slug(&study.controllers[i].design.name)));
            cols.push(&s.trace.y);
            step_metrics.insert(study.controllers[i].design.name.clone(), &s.record);
        }
    }
    write_columns(&dir.join("step_response_set1.csv"), &header, &cols)?;
    write_json(&dir.join("step_metrics.json"), &step_metrics)?;

    let published: Vec<_> = PUBLISHED
        .iter()
        .map(|r| {
            let mut m: BTreeMap<String, (f64, f64)> = BTreeMap::new();
            for (k, &f) in STUDY_FREQUENCIES_HZ.iter().enumerate() {
                m.insert(freq_key(f), (r.rms[k], r.iae[k]));
            }
            (r.kind, r.set, m)
        })
        .collect();
    write_json(&dir.join("published_tables.json"), &published)?;
    write_json(&dir.join("report.json"), &study.report)?;

    let mut summary = Vec::new();
    for c in &study.report.criteria {
        let tag = match (c.passed, c.hard) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "FAIL (soft)",
        };
        writeln!(summary, "{tag} {} {}", c.id, c.description).ok();
        for d in &c.detail {
            writeln!(summary, "    {d}").ok();
        }
    }
    write_file(&dir.join("report.txt"), &summary)
}

/// Full reproduction into `dir`: element figures, open-loop HOSIDF, the
/// tracking and step study and the comparison report.
pub fn reproduce(dir: &Path, opts: &StudyOptions) -> Result<Study> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    write_element_figures(dir)?;
    let study = run_study(opts)?;
    write_open_loop_figures(dir, &study.controllers)?;
    write_study(dir, &study)?;
    Ok(study)
}

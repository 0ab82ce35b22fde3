use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use fosre::config::{hz, stage_plant, ControllerConfig, ControllerKind, Resolved, DESIGN_CROSSOVER_HZ};
use fosre::crone::{crone_place, fractional_response, log_space, CroneConfig};
use fosre::hosidf::{hosidf_sweep, OpenLoop};
use fosre::linalg::eigenvalues;
use fosre::sim::{simulate_loop, step_metrics, steady_state_metrics, SimConfig, TrackingMetrics};
use fosre::stability::{build_closed_loop, lemma1_check, search_hbeta, verify_hbeta};
use fosre::study::{reproduce, StudyOptions};
use fosre::tuner::{tune_fosre, TuneSpec};
use fosre::Error;

const CRONE_GAIN_BOUND_DB: f64 = 1.5;
const CRONE_PHASE_BOUND_DEG: f64 = 6.0;

#[derive(Parser)]
#[command(name = "fosre", version, about = "Reset control elements: CRONE, HOSIDF, stability, simulation and tuning")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON document (frequencies in Hz).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Lowest frequency, Hz.
    #[arg(long)]
    fmin: Option<f64>,
    /// Highest frequency, Hz.
    #[arg(long)]
    fmax: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1,3,5,7,9")]
    orders: Vec<u32>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Simulation step, s.
    #[arg(long)]
    dt: Option<f64>,
    /// Simulation length, s.
    #[arg(long)]
    duration: Option<f64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// CRONE approximation against the exact fractional factor.
    Crone(Common),
    /// Harmonic describing functions of a controller and its open loop.
    Hosidf(Common),
    /// Closed-loop time simulation with the stage plant.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// `sine:<Hz>`, `step` or `zero`.
        #[arg(long, default_value = "sine:0.5")]
        reference: String,
        /// Include controller and plant states in the trace.
        #[arg(long)]
        states: bool,
    },
    /// Open-loop convergence test and H_β certificate search.
    Stability(Common),
    /// FOSRE placement for a frequency of linear behaviour.
    Tune {
        #[command(flatten)]
        common: Common,
        /// Frequency of linear behaviour, Hz.
        #[arg(long)]
        omega_lb: f64,
        /// Gain crossover, Hz.
        #[arg(long, default_value_t = DESIGN_CROSSOVER_HZ)]
        crossover: f64,
        /// Phase margin target, degrees.
        #[arg(long, default_value_t = 45.0)]
        pm: f64,
        #[arg(long, default_value_t = 0.2)]
        gamma: f64,
    },
    /// Tracking study, element figures and comparison with the published tables.
    Repro(Common),
}

enum Failure {
    Config(String),
    Numerical(String),
    Mismatch(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Failure::Config(m),
            e => Failure::Numerical(e.to_string()),
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Crone(c) => cmd_crone(&c),
        Cmd::Hosidf(c) => cmd_hosidf(&c),
        Cmd::Simulate { common, reference, states } => cmd_simulate(&common, &reference, states),
        Cmd::Stability(c) => cmd_stability(&c),
        Cmd::Tune {
            common,
            omega_lb,
            crossover,
            pm,
            gamma,
        } => cmd_tune(&common, omega_lb, crossover, pm, gamma),
        Cmd::Repro(c) => cmd_repro(&c),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Mismatch(m)) => {
            eprintln!("{m}");
            ExitCode::from(4)
        }
    }
}

fn read_text(path: &Path) -> std::result::Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn controller_config(c: &Common) -> std::result::Result<ControllerConfig, Failure> {
    let path = c
        .config
        .as_ref()
        .ok_or_else(|| Failure::Config("--config is required".into()))?;
    ControllerConfig::from_json(&read_text(path)?).map_err(Failure::from)
}

fn out_dir(c: &Common) -> std::result::Result<&Path, Failure> {
    fs::create_dir_all(&c.out).map_err(|e| Failure::Config(format!("{}: {e}", c.out.display())))?;
    Ok(&c.out)
}

fn write(path: &Path, bytes: &[u8]) -> Outcome {
    fs::write(path, bytes).map_err(|e| Failure::Numerical(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, v: &impl Serialize) -> Outcome {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Failure::Numerical(e.to_string()))?;
    s.push('\n');
    write(path, s.as_bytes())
}

fn positive(name: &str, v: Option<f64>) -> std::result::Result<Option<f64>, Failure> {
    match v {
        Some(x) if !(x.is_finite() && x > 0.0) => Err(Failure::Config(format!("--{name} must be positive, got {x}"))),
        _ => Ok(v),
    }
}

fn grid(c: &Common, lo_hz: f64, hi_hz: f64, points: usize) -> std::result::Result<Vec<f64>, Failure> {
    let lo = positive("fmin", c.fmin)?.unwrap_or(lo_hz);
    let hi = positive("fmax", c.fmax)?.unwrap_or(hi_hz);
    let n = c.points.unwrap_or(points);
    if lo >= hi || n < 2 {
        return Err(Failure::Config(format!("empty frequency range [{lo}, {hi}] Hz with {n} points")));
    }
    Ok(log_space(hz(lo), hz(hi), n))
}

/// Standalone CRONE document; `units` is `Hz` or `rad/s`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CroneDoc {
    units: String,
    lambda: f64,
    omega_l: f64,
    omega_h: f64,
    n: usize,
}

fn crone_from(c: &Common) -> std::result::Result<CroneConfig, Failure> {
    let Some(path) = &c.config else {
        return Ok(CroneConfig::new(-0.5, 1.0, 1e4, 5)?);
    };
    let text = read_text(path)?;
    let v: Value = serde_json::from_str(&text).map_err(|e| Failure::Config(e.to_string()))?;
    if v.get("type").is_some() {
        let cfg = ControllerConfig::from_json(&text)?;
        return cfg
            .crone()?
            .ok_or_else(|| Failure::Config(format!("{} has no fractional block", cfg.name)));
    }
    let doc: CroneDoc = serde_json::from_value(v).map_err(|e| Failure::Config(e.to_string()))?;
    let scale = match doc.units.as_str() {
        "Hz" => TAU,
        "rad/s" => 1.0,
        u => return Err(Failure::Config(format!("units must be \"Hz\" or \"rad/s\", got {u:?}"))),
    };
    CroneConfig::new(doc.lambda, scale * doc.omega_l, scale * doc.omega_h, doc.n)
        .map_err(|e| Failure::Config(e.to_string()))
}

fn cmd_crone(c: &Common) -> Outcome {
    let cfg = crone_from(c)?;
    let zpk = crone_place(&cfg)?;
    let omegas = match (c.fmin, c.fmax) {
        (None, None) => log_space(cfg.omega_l, cfg.omega_h / 10.0, c.points.unwrap_or(50)),
        _ => grid(c, cfg.omega_l / TAU, cfg.omega_h / (10.0 * TAU), 50)?,
    };
    let dir = out_dir(c)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Failure::Numerical(e.to_string());
    w.write_record(["freq_hz", "omega", "approx_db", "approx_deg", "exact_db", "exact_deg", "gain_err_db", "phase_err_deg"])
        .map_err(csv_err)?;
    let (mut gmax, mut pmax) = (0.0f64, 0.0f64);
    for &om in &omegas {
        let a = zpk.response(om);
        let x = fractional_response(cfg.lambda, cfg.omega_l, om);
        let ge = 20.0 * (a.norm() / x.norm()).log10();
        let pe = (a / x).arg().to_degrees();
        gmax = gmax.max(ge.abs());
        pmax = pmax.max(pe.abs());
        w.write_record(
            [
                om / TAU,
                om,
                20.0 * a.norm().log10(),
                a.arg().to_degrees(),
                20.0 * x.norm().log10(),
                x.arg().to_degrees(),
                ge,
                pe,
            ]
            .map(|v| format!("{v:.9e}")),
        )
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::Numerical(e.to_string()))?;
    write(&dir.join("crone.csv"), &bytes)?;
    println!("max gain error {gmax:.4} dB, max phase error {pmax:.4} deg");
    if gmax > CRONE_GAIN_BOUND_DB || pmax > CRONE_PHASE_BOUND_DEG {
        return Err(Failure::Numerical(format!(
            "approximation error exceeds {CRONE_GAIN_BOUND_DB} dB / {CRONE_PHASE_BOUND_DEG} deg"
        )));
    }
    Ok(())
}

fn resolve(cfg: &ControllerConfig) -> std::result::Result<Resolved, Failure> {
    Ok(cfg.resolve(&stage_plant(), DESIGN_CROSSOVER_HZ)?)
}

fn resolved_config(cfg: &ControllerConfig, r: &Resolved) -> ControllerConfig {
    let mut out = cfg.clone();
    out.k_p = Some(r.k_p);
    if cfg.kind != ControllerKind::Pid {
        out.alpha = Some(r.alpha);
    }
    out
}

fn cmd_hosidf(c: &Common) -> Outcome {
    let cfg = controller_config(c)?;
    if c.orders.is_empty() || c.orders.contains(&0) {
        return Err(Failure::Config("--orders must list positive integers".into()));
    }
    let freqs = grid(c, 0.1, 1000.0, 200)?;
    let r = resolve(&cfg)?;
    let dir = out_dir(c)?;
    let ol = OpenLoop::new(&r.controller, &stage_plant())?;
    let table = hosidf_sweep(&ol, &freqs, &c.orders)?;
    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;
    write(&dir.join("hosidf_open_loop.csv"), &buf)?;
    if let Some(pair) = cfg.cglp(r.alpha)? {
        let el = OpenLoop::from_parts(Some(pair.lag), pair.lead);
        let table = hosidf_sweep(&el, &freqs, &c.orders)?;
        let mut buf = Vec::new();
        table.write_csv(&mut buf)?;
        write(&dir.join("hosidf_cglp.csv"), &buf)?;
    }
    write(&dir.join("resolved.json"), (resolved_config(&cfg, &r).to_json() + "\n").as_bytes())
}

enum Reference {
    Sine(f64),
    Step,
    Zero,
}

fn parse_reference(s: &str) -> std::result::Result<Reference, Failure> {
    match s {
        "step" => Ok(Reference::Step),
        "zero" => Ok(Reference::Zero),
        _ => {
            let f = s
                .strip_prefix("sine:")
                .and_then(|v| v.parse::<f64>().ok())
                .filter(|f| f.is_finite() && *f > 0.0)
                .ok_or_else(|| Failure::Config(format!("reference must be sine:<Hz>, step or zero, got {s:?}")))?;
            Ok(Reference::Sine(f))
        }
    }
}

fn sim_config(c: &Common, reference: &Reference) -> std::result::Result<SimConfig, Failure> {
    let dt = positive("dt", c.dt)?;
    let duration = positive("duration", c.duration)?;
    let cfg = match *reference {
        Reference::Sine(f) => match duration {
            None => StudyOptions {
                dt: dt.unwrap_or(1e-4),
                ..Default::default()
            }
            .tracking_config(f)
            .map_err(|e| Failure::Config(e.to_string()))?,
            Some(d) => {
                let periods = (d * f + 1e-9).floor() as usize;
                let measure = (periods / 2).min(10);
                let mut cfg = SimConfig::new(dt.unwrap_or(1e-4), d);
                cfg.measure_periods = measure;
                cfg.warmup_periods = periods - measure;
                cfg
            }
        },
        Reference::Step => SimConfig::new(dt.unwrap_or(1e-5), duration.unwrap_or(0.2)),
        Reference::Zero => SimConfig::new(dt.unwrap_or(1e-4), duration.unwrap_or(1.0)),
    };
    cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
    Ok(cfg)
}

fn cmd_simulate(c: &Common, reference: &str, states: bool) -> Outcome {
    let cfg = controller_config(c)?;
    let reference = parse_reference(reference)?;
    let mut sim = sim_config(c, &reference)?;
    sim.record_states = states;
    let r = resolve(&cfg)?;
    let cl = build_closed_loop(&stage_plant(), &r.controller)?;
    let (key, trace) = match reference {
        Reference::Sine(f) => {
            let w = hz(f);
            (format!("{f} Hz"), simulate_loop(&cl, &|t| (w * t).sin(), &sim)?)
        }
        Reference::Step => ("step".to_string(), simulate_loop(&cl, &|_| 1.0, &sim)?),
        Reference::Zero => ("zero".to_string(), simulate_loop(&cl, &|_| 0.0, &sim)?),
    };
    let dir = out_dir(c)?;
    let mut buf = Vec::new();
    trace.write_csv(&mut buf)?;
    write(&dir.join("trace.csv"), &buf)?;
    let metrics: std::result::Result<TrackingMetrics, Error> = match reference {
        Reference::Sine(f) => steady_state_metrics(&trace, hz(f), &sim),
        Reference::Step => step_metrics(&trace),
        Reference::Zero => {
            let rms = (trace.e.iter().map(|v| v * v).sum::<f64>() / trace.e.len() as f64).sqrt();
            let mean = trace.e.iter().map(|v| v.abs()).sum::<f64>() / trace.e.len() as f64;
            Ok(TrackingMetrics {
                rms: Some(rms),
                iae: Some(mean),
                iae_raw: Some(mean * sim.duration),
                ..Default::default()
            })
        }
    };
    let body = match &metrics {
        Ok(m) => json!({
            "metrics": m,
            "resets": trace.reset_times.len(),
            "coalesced_resets": trace.coalesced_resets,
            "k_p": r.k_p,
            "alpha": r.alpha,
        }),
        Err(e) => json!({ "error": e.to_string(), "resets": trace.reset_times.len() }),
    };
    write_json(&dir.join("metrics.json"), &json!({ cfg.name.clone(): { key: body } }))?;
    metrics.map(|_| ()).map_err(Failure::from)
}

fn stability_json(cfg: &ControllerConfig, r: &Resolved, seed: u64) -> std::result::Result<Value, Failure> {
    let lemma1 = r.controller.lag.as_ref().map(|rs| lemma1_check(rs, 100.0, 1000));
    let cl = build_closed_loop(&stage_plant(), &r.controller)?;
    let abscissa = eigenvalues(&cl.a_cl)?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let hbeta = match search_hbeta(&cl, seed, 200) {
        Some(cert) => {
            let report = verify_hbeta(&cl, &cert, 1e-8)?;
            json!({
                "found": true,
                "beta": cert.beta.as_slice(),
                "p_rho": cert.p_rho.as_slice(),
                "verification": report,
            })
        }
        None => json!({ "found": false }),
    };
    Ok(json!({
        "name": cfg.name,
        "reset": r.controller.is_reset(),
        "k_p": r.k_p,
        "alpha": r.alpha,
        "lemma1": lemma1,
        "closed_loop_spectral_abscissa": abscissa,
        "hbeta": hbeta,
    }))
}

fn cmd_stability(c: &Common) -> Outcome {
    let cfg = controller_config(c)?;
    let r = resolve(&cfg)?;
    let v = stability_json(&cfg, &r, c.seed)?;
    let dir = out_dir(c)?;
    write_json(&dir.join("stability.json"), &v)?;
    println!("{}", serde_json::to_string_pretty(&v).unwrap_or_default());
    Ok(())
}

fn cmd_tune(c: &Common, omega_lb: f64, crossover: f64, pm: f64, gamma: f64) -> Outcome {
    for (name, v) in [("omega-lb", omega_lb), ("crossover", crossover)] {
        positive(name, Some(v))?;
    }
    let mut spec = TuneSpec::new(hz(omega_lb), hz(crossover), pm);
    spec.validate().map_err(|e| Failure::Config(e.to_string()))?;
    spec.crone_omega_h = None;
    let t = tune_fosre(&spec)?;
    let config = ControllerConfig {
        name: format!("FOSRE tuned for {omega_lb} Hz"),
        kind: ControllerKind::Fosre,
        units: "Hz".into(),
        omega_i: 15.0,
        omega_d: 100.0,
        omega_t: 225.0,
        omega_f: 1500.0,
        omega_ra: Some(t.omega_ra / TAU),
        beta: Some(t.beta),
        gamma: Some(gamma),
        lambda: Some(t.lambda),
        omega_l: Some(t.omega_l / TAU),
        k_p: None,
        alpha: None,
        crone_omega_h: None,
        crone_n: None,
    };
    config.validate().map_err(|e| Failure::Config(e.to_string()))?;
    let dir = out_dir(c)?;
    write_json(
        &dir.join("tune.json"),
        &json!({
            "spec": spec,
            "result": t,
            "omega_ra_hz": t.omega_ra / TAU,
            "omega_l_hz": t.omega_l / TAU,
        }),
    )?;
    write(&dir.join("tuned_config.json"), (config.to_json() + "\n").as_bytes())?;
    println!(
        "omega_ra {:.4} Hz, beta {:.2}, lambda {:.2}, omega_l {:.4} Hz, max |psi| {:.3} deg",
        t.omega_ra / TAU,
        t.beta,
        t.lambda,
        t.omega_l / TAU,
        t.objective
    );
    Ok(())
}

fn cmd_repro(c: &Common) -> Outcome {
    let dir = out_dir(c)?.to_path_buf();
    let study = reproduce(&dir, &StudyOptions::default())?;
    let mut stab = Vec::new();
    for sc in &study.controllers {
        if sc.controller.is_reset() {
            let r = Resolved {
                controller: sc.controller.clone(),
                k_p: sc.design.k_p,
                alpha: sc.design.alpha,
            };
            stab.push(stability_json(&sc.config, &r, c.seed)?);
        }
    }
    write_json(&dir.join("stability.json"), &stab)?;
    print!("{}", read_text(&dir.join("report.txt"))?);
    if study.report.hard_passed {
        Ok(())
    } else {
        Err(Failure::Mismatch("reproduction does not meet every hard criterion".into()))
    }
}

//! Time-domain simulation of reset elements and reset control loops.
//!
//! Between resets the state follows `ẋ = A x + b w(t)` exactly: each step
//! uses the matrix exponential with the external input `w` held as the cubic
//! through four equally spaced samples of the step. Zero crossings of the
//! reset trigger are bracketed on the grid and refined by bisection on the
//! propagated state.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::elements::{Controller, ResetSystem};
use crate::error::{Error, Result};
use crate::linalg::expm;
use crate::lti::StateSpaceSystem;
use crate::stability::{build_closed_loop, ClosedLoopResetSystem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    /// Output sampling step and integration step, s.
    pub dt: f64,
    pub duration: f64,
    /// Width of the bracket around a reset instant, s.
    pub reset_refine_tol: f64,
    /// Crossings closer than this to the previous reset are not applied.
    pub min_inter_reset: f64,
    pub warmup_periods: usize,
    pub measure_periods: usize,
    /// Keep the full state vector at every sample.
    pub record_states: bool,
}

impl SimConfig {
    pub fn new(dt: f64, duration: f64) -> Self {
        let tol = dt * 1e-7;
        Self {
            dt,
            duration,
            reset_refine_tol: tol,
            min_inter_reset: 10.0 * tol,
            warmup_periods: 10,
            measure_periods: 10,
            record_states: false,
        }
    }

    /// Grid with `samples_per_period` points per period of `omega` and
    /// enough periods for the warmup and measurement windows.
    pub fn periodic(omega: f64, samples_per_period: usize, warmup: usize, measure: usize) -> Self {
        let period = 2.0 * PI / omega;
        let mut cfg = Self::new(period / samples_per_period as f64, period * (warmup + measure) as f64);
        cfg.warmup_periods = warmup;
        cfg.measure_periods = measure;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.dt > 0.0
            && self.duration > 0.0
            && self.reset_refine_tol > 0.0
            && self.reset_refine_tol < self.dt
            && self.min_inter_reset >= self.reset_refine_tol;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("inconsistent simulation settings {self:?}")))
        }
    }

    fn steps(&self) -> usize {
        (self.duration / self.dt - 1e-9).ceil().max(1.0) as usize
    }
}

/// Sampled signals of one run. For an open-loop element run `r` and `e`
/// hold the input and `u`, `y` the element output.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimulationTrace {
    pub t: Vec<f64>,
    pub r: Vec<f64>,
    pub e: Vec<f64>,
    pub u: Vec<f64>,
    pub y: Vec<f64>,
    pub states: Option<Vec<DVector<f64>>>,
    pub reset_times: Vec<f64>,
    /// Jump `y⁺ − y⁻` of the output at each reset.
    pub reset_jumps: Vec<f64>,
    /// Crossings suppressed by the minimum inter-reset guard.
    pub coalesced_resets: usize,
    pub dt: f64,
}

impl SimulationTrace {
    /// CSV with columns `t, r, e, u, y, x1..xn, reset_flag`; the flag marks
    /// samples preceded by a reset since the previous sample.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Config(e.to_string());
        let nx = self
            .states
            .as_ref()
            .and_then(|s| s.first())
            .map_or(0, |x| x.len());
        let mut header: Vec<String> = ["t", "r", "e", "u", "y"].iter().map(|s| s.to_string()).collect();
        header.extend((1..=nx).map(|i| format!("x{i}")));
        header.push("reset_flag".into());
        w.write_record(&header).map_err(io)?;
        let mut next_reset = 0;
        for k in 0..self.t.len() {
            let mut flag = 0;
            while next_reset < self.reset_times.len() && self.reset_times[next_reset] <= self.t[k] {
                flag = 1;
                next_reset += 1;
            }
            let mut rec = vec![
                format!("{:.9e}", self.t[k]),
                format!("{:.9e}", self.r[k]),
                format!("{:.9e}", self.e[k]),
                format!("{:.9e}", self.u[k]),
                format!("{:.9e}", self.y[k]),
            ];
            if let Some(xs) = &self.states {
                rec.extend(xs[k].iter().map(|v| format!("{v:.9e}")));
            }
            rec.push(flag.to_string());
            w.write_record(&rec).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Config(e.to_string()))
    }
}

/// Flow `ẋ = A x + b w`, trigger `e = c_e·x + d_e·w`, outputs
/// `u = c_u·x + d_u·w`, `y = c_y·x + d_y·w`, jump `x⁺ = diag(ρ) x` when `e`
/// crosses zero.
struct HybridModel {
    a: DMatrix<f64>,
    b: DVector<f64>,
    c_e: DVector<f64>,
    d_e: f64,
    c_u: DVector<f64>,
    d_u: f64,
    c_y: DVector<f64>,
    d_y: f64,
    reset: DVector<f64>,
}

/// `e^{Aτ}` and the responses `Γ_k = ∫₀^τ e^{A(τ−σ)} b (σ/τ)^k dσ`, k = 0..3.
struct Propagator {
    phi: DMatrix<f64>,
    gamma: DMatrix<f64>,
}

impl Propagator {
    fn new(a: &DMatrix<f64>, b: &DVector<f64>, tau: f64) -> Self {
        let n = a.nrows();
        let mut m = DMatrix::zeros(n + 4, n + 4);
        m.view_mut((0, 0), (n, n)).copy_from(a);
        m.view_mut((0, n), (n, 1)).copy_from(b);
        // polynomial generator: w0 = (σ/τ)^k for initial condition e_k
        for k in 1..4 {
            m[(n + k - 1, n + k)] = k as f64 / tau;
        }
        let e = expm(&(m * tau));
        Self {
            phi: e.view((0, 0), (n, n)).into_owned(),
            gamma: e.view((0, n), (n, 4)).into_owned(),
        }
    }

    /// Advances `x` over the interval with the input given at the four
    /// nodes `0, τ/3, 2τ/3, τ`.
    fn apply(&self, x: &DVector<f64>, w: [f64; 4], out: &mut DVector<f64>) {
        // cubic through the nodes, in powers of σ/τ
        let m = [
            w[0],
            (-11.0 * w[0] + 18.0 * w[1] - 9.0 * w[2] + 2.0 * w[3]) / 2.0,
            (18.0 * w[0] - 45.0 * w[1] + 36.0 * w[2] - 9.0 * w[3]) / 2.0,
            (-9.0 * w[0] + 27.0 * w[1] - 27.0 * w[2] + 9.0 * w[3]) / 2.0,
        ];
        out.gemv(1.0, &self.phi, x, 0.0);
        for (k, mk) in m.iter().enumerate() {
            if *mk != 0.0 {
                out.axpy(*mk, &self.gamma.column(k), 1.0);
            }
        }
    }
}

fn nodes(input: &dyn Fn(f64) -> f64, t0: f64, tau: f64) -> [f64; 4] {
    [
        input(t0),
        input(t0 + tau / 3.0),
        input(t0 + 2.0 * tau / 3.0),
        input(t0 + tau),
    ]
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Propagators for the step `h` and its dyadic fractions `h/2^k`, k = 0..=K,
/// with `h/2^K` no wider than the reset refinement tolerance. Sub-step times
/// are integer multiples of the finest unit, so a crossing is located by
/// binary search over cached propagators.
struct DyadicFlow {
    levels: Vec<Propagator>,
    unit: f64,
}

impl DyadicFlow {
    fn new(model: &HybridModel, h: f64, tol: f64) -> Self {
        let k = (h / tol).log2().ceil().max(0.0) as u32;
        let levels = (0..=k)
            .map(|l| Propagator::new(&model.a, &model.b, h / 2f64.powi(l as i32)))
            .collect();
        Self { levels, unit: h / 2f64.powi(k as i32) }
    }

    fn depth(&self) -> usize {
        self.levels.len() - 1
    }
}

fn run(
    model: &HybridModel,
    input: &dyn Fn(f64) -> f64,
    cfg: &SimConfig,
    x0: Option<&DVector<f64>>,
) -> Result<SimulationTrace> {
    cfg.validate()?;
    let n = model.a.nrows();
    let h = cfg.dt;
    let steps = cfg.steps();
    let flow = DyadicFlow::new(model, h, cfg.reset_refine_tol);
    let depth = flow.depth();
    let total: u64 = 1 << depth;
    let trigger = |x: &DVector<f64>, w: f64| model.c_e.dot(x) + model.d_e * w;

    let mut tr = SimulationTrace {
        dt: h,
        states: cfg.record_states.then(Vec::new),
        ..Default::default()
    };
    let mut x = match x0 {
        Some(v) if v.len() == n => v.clone(),
        Some(v) => {
            return Err(Error::Dimension(format!("initial state has {} entries, expected {n}", v.len())))
        }
        None => DVector::zeros(n),
    };
    let mut next = DVector::zeros(n);
    let record = |tr: &mut SimulationTrace, t: f64, x: &DVector<f64>| {
        let w = input(t);
        tr.t.push(t);
        tr.r.push(w);
        tr.e.push(trigger(x, w));
        tr.u.push(model.c_u.dot(x) + model.d_u * w);
        tr.y.push(model.c_y.dot(x) + model.d_y * w);
        if let Some(s) = tr.states.as_mut() {
            s.push(x.clone());
        }
    };
    record(&mut tr, 0.0, &x);
    // last nonzero sign of e; 0 until known
    let mut prev_sign = sign(tr.e[0]);
    let mut last_reset = f64::NEG_INFINITY;
    // an identity jump is not an event
    let resets = model.reset.iter().any(|g| *g != 1.0);

    for k in 0..steps {
        let t0 = k as f64 * h;
        let mut pos: u64 = 0;
        // finest level allowed while a crossing is being narrowed down
        let mut min_level = 0;
        while pos < total {
            let mut level = min_level;
            loop {
                let chunk = 1u64 << (depth - level);
                if pos.is_multiple_of(chunk) && pos + chunk <= total {
                    break;
                }
                level += 1;
            }
            let chunk = 1u64 << (depth - level);
            let ts = t0 + pos as f64 * flow.unit;
            let tau = chunk as f64 * flow.unit;
            let te = if pos + chunk == total { t0 + h } else { ts + tau };
            flow.levels[level].apply(&x, nodes(input, ts, tau), &mut next);
            let e_end = trigger(&next, input(te));
            let s_end = sign(e_end);
            let crossed = resets && prev_sign != 0 && s_end != prev_sign;
            if crossed && s_end != 0 && level < depth {
                // narrow down: retry the first half
                min_level = level + 1;
                continue;
            }
            if crossed {
                if te - last_reset >= cfg.min_inter_reset {
                    let before = model.c_y.dot(&next);
                    next.component_mul_assign(&model.reset);
                    tr.reset_times.push(te);
                    tr.reset_jumps.push(model.c_y.dot(&next) - before);
                    last_reset = te;
                } else {
                    tr.coalesced_resets += 1;
                }
                min_level = 0;
            }
            prev_sign = s_end;
            pos += chunk;
            std::mem::swap(&mut x, &mut next);
        }
        let t1 = (k + 1) as f64 * h;
        if !x.iter().all(|v| v.is_finite()) || x.amax() > 1e12 {
            return Err(Error::Divergence { t: t1 });
        }
        record(&mut tr, t1, &x);
    }
    Ok(tr)
}

/// Open-loop response of a reset element to `input`, from rest. The reset
/// trigger is the element input itself.
pub fn simulate_reset(
    rs: &ResetSystem,
    input: &dyn Fn(f64) -> f64,
    cfg: &SimConfig,
) -> Result<SimulationTrace> {
    let sys = rs.base_linear();
    let n = sys.n_states();
    let c = sys.c().row(0).transpose();
    let d = sys.d()[(0, 0)];
    let model = HybridModel {
        a: sys.a().clone(),
        b: sys.b().column(0).into_owned(),
        c_e: DVector::zeros(n),
        d_e: 1.0,
        c_u: c.clone(),
        d_u: d,
        c_y: c,
        d_y: d,
        reset: rs.reset_diagonal().clone(),
    };
    run(&model, input, cfg, None)
}

/// Response of a linear system from rest, on the same integrator.
pub fn simulate_linear(
    sys: &StateSpaceSystem,
    input: &dyn Fn(f64) -> f64,
    cfg: &SimConfig,
) -> Result<SimulationTrace> {
    let n = sys.n_states();
    let rs = ResetSystem::new(sys.clone(), DVector::from_element(n, 1.0), None)?;
    simulate_reset(&rs, input, cfg)
}

/// Closed loop `e = r − y` with resets on the loop error.
pub fn simulate_closed_loop(
    ctrl: &Controller,
    plant: &StateSpaceSystem,
    reference: &dyn Fn(f64) -> f64,
    cfg: &SimConfig,
) -> Result<SimulationTrace> {
    let cl = build_closed_loop(plant, ctrl)?;
    simulate_loop(&cl, reference, cfg)
}

/// Same as [`simulate_closed_loop`] on an assembled loop.
pub fn simulate_loop(
    cl: &ClosedLoopResetSystem,
    reference: &dyn Fn(f64) -> f64,
    cfg: &SimConfig,
) -> Result<SimulationTrace> {
    simulate_loop_from(cl, reference, cfg, None)
}

/// [`simulate_loop`] from a given loop state instead of rest.
pub fn simulate_loop_from(
    cl: &ClosedLoopResetSystem,
    reference: &dyn Fn(f64) -> f64,
    cfg: &SimConfig,
    x0: Option<&DVector<f64>>,
) -> Result<SimulationTrace> {
    let model = HybridModel {
        a: cl.a_cl.clone(),
        b: cl.b_r.clone(),
        c_e: cl.e_row.clone(),
        d_e: cl.e_ff,
        c_u: cl.u_row.clone(),
        d_u: cl.u_ff,
        c_y: cl.y_row.clone(),
        d_y: cl.y_ff,
        reset: cl.reset_diag.clone(),
    };
    run(&model, reference, cfg, x0)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct TrackingMetrics {
    pub rms: Option<f64>,
    /// Mean absolute error over the window (IAE divided by its length).
    pub iae: Option<f64>,
    /// Integral of |e| over the window, signal·s.
    pub iae_raw: Option<f64>,
    pub overshoot: Option<f64>,
    pub settling_time: Option<f64>,
}

fn samples_per_period(trace: &SimulationTrace, omega: f64) -> Result<usize> {
    let period = 2.0 * PI / omega;
    let spp = period / trace.dt;
    let k = spp.round();
    if k < 4.0 || (spp - k).abs() > 1e-6 * spp {
        return Err(Error::NonIntegerPeriods(format!(
            "period {period} s is {spp} samples of {} s",
            trace.dt
        )));
    }
    Ok(k as usize)
}

/// The last `periods` whole periods of `signal`, after skipping `warmup`
/// periods.
fn window<'a>(
    trace: &SimulationTrace,
    signal: &'a [f64],
    omega: f64,
    warmup: usize,
    periods: usize,
) -> Result<(&'a [f64], usize)> {
    let spp = samples_per_period(trace, omega)?;
    let need = (warmup + periods) * spp + 1;
    if signal.len() < need {
        return Err(Error::NotConverged(format!(
            "trace has {} samples, {} needed",
            signal.len(),
            need
        )));
    }
    let end = signal.len() - 1;
    let start = end - periods * spp;
    Ok((&signal[start..end], spp))
}

/// RMS and mean absolute value of the loop error over the measurement
/// window, after checking that the per-period RMS has settled.
pub fn steady_state_metrics(
    trace: &SimulationTrace,
    ref_freq: f64,
    cfg: &SimConfig,
) -> Result<TrackingMetrics> {
    let (seg, spp) = window(trace, &trace.e, ref_freq, cfg.warmup_periods, cfg.measure_periods)?;
    let per: Vec<f64> = seg
        .chunks(spp)
        .map(|c| (c.iter().map(|v| v * v).sum::<f64>() / spp as f64).sqrt())
        .collect();
    let rms = (seg.iter().map(|v| v * v).sum::<f64>() / seg.len() as f64).sqrt();
    if rms > 0.0 {
        let drift = per.windows(2).map(|p| (p[1] - p[0]).abs()).fold(0.0, f64::max) / rms;
        if drift >= 0.01 {
            return Err(Error::NotConverged(format!(
                "period-to-period RMS drift {:.3}%",
                100.0 * drift
            )));
        }
    }
    let mean_abs = seg.iter().map(|v| v.abs()).sum::<f64>() / seg.len() as f64;
    Ok(TrackingMetrics {
        rms: Some(rms),
        iae: Some(mean_abs),
        iae_raw: Some(mean_abs * seg.len() as f64 * trace.dt),
        ..Default::default()
    })
}

/// Complex gain of harmonic `n` of the output `y` relative to a unit input
/// `sin(ωt)`, from the last `periods` whole periods of the trace.
pub fn harmonic_extract(
    trace: &SimulationTrace,
    base_freq: f64,
    n: u32,
    periods: usize,
) -> Result<Complex64> {
    let total = samples_per_period(trace, base_freq)
        .map(|spp| (trace.y.len() - 1) / spp)?;
    let periods = periods.min(total);
    if periods == 0 {
        return Err(Error::NonIntegerPeriods("trace shorter than one period".into()));
    }
    let (seg, _) = window(trace, &trace.y, base_freq, total - periods, periods)?;
    let start = trace.y.len() - 1 - seg.len();
    let w = n as f64 * base_freq;
    let mut acc = Complex64::new(0.0, 0.0);
    for (k, v) in seg.iter().enumerate() {
        let t = trace.t[start + k];
        acc += Complex64::from_polar(*v, -w * t);
    }
    // A jump at τ ∈ (t_k, t_k+1] is sampled as its post-reset value from
    // t_k+1 on; the correction restores second-order accuracy.
    let (t_lo, t_hi) = (trace.t[start], trace.t[start + seg.len()]);
    for (tau, jump) in trace.reset_times.iter().zip(&trace.reset_jumps) {
        if *tau > t_lo && *tau <= t_hi {
            let theta = ((tau - t_lo) / trace.dt).fract();
            let theta = if theta == 0.0 { 1.0 } else { theta };
            acc -= Complex64::from_polar((theta - 0.5) * jump, -w * tau);
        }
    }
    Ok(Complex64::new(0.0, 2.0 / seg.len() as f64) * acc)
}

/// Overshoot and 2 % settling time of a unit-step response in `y`.
pub fn step_metrics(trace: &SimulationTrace) -> Result<TrackingMetrics> {
    let y = &trace.y;
    let last = *y.last().ok_or(Error::NoSettling)?;
    if last == 0.0 {
        return Err(Error::NoSettling);
    }
    let peak = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let band = 0.02 * last.abs();
    let outside = y.iter().rposition(|v| (v - last).abs() > band);
    let settling = match outside {
        None => 0.0,
        Some(k) if k + 1 >= y.len() || trace.t[k] > 0.9 * trace.t[y.len() - 1] => {
            return Err(Error::NoSettling)
        }
        Some(k) => trace.t[k + 1],
    };
    Ok(TrackingMetrics {
        overshoot: Some(((peak - last) / last).max(0.0)),
        settling_time: Some(settling),
        ..Default::default()
    })
}

/// Largest `|u|` from `from_t` onward.
pub fn control_peak(trace: &SimulationTrace, from_t: f64) -> f64 {
    trace
        .t
        .iter()
        .zip(&trace.u)
        .filter(|(t, _)| **t >= from_t)
        .map(|(_, u)| u.abs())
        .fold(0.0, f64::max)
}

//! FOSRE parameter search, describing-function loop shaping, gain
//! flattening of CgLp pairs and selection of the reset coefficient.

use rayon::prelude::*;
use serde::Serialize;

use crate::crone::{log_space, min_sections, CroneConfig};
use crate::elements::{make_fosre, CgLp, Controller};
use crate::error::{Error, Result};
use crate::hosidf::{open_loop_hosidf, psi};
use crate::lti::StateSpaceSystem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TuneSpec {
    /// Frequency of linear behaviour, rad/s.
    pub omega_lb: f64,
    /// Gain crossover, rad/s.
    pub omega_c: f64,
    /// Degrees.
    pub pm_target: f64,
    /// ψ(ω_c) must end up below this, degrees.
    pub psi_c_max: f64,
    /// Objective evaluations per optimizer run.
    pub max_evals: usize,
    /// The low band is `[omega_lb / band_ratio, omega_lb]`.
    pub band_ratio: f64,
    pub band_points: usize,
    pub lambda_start: f64,
    /// Upper CRONE corner; `None` uses `1e4·ω_c`.
    pub crone_omega_h: Option<f64>,
}

impl TuneSpec {
    pub fn new(omega_lb: f64, omega_c: f64, pm_target: f64) -> Self {
        Self {
            omega_lb,
            omega_c,
            pm_target,
            psi_c_max: -85.0,
            max_evals: 200,
            band_ratio: 100.0,
            band_points: 50,
            lambda_start: -0.1,
            crone_omega_h: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_lb > 0.0 && self.omega_lb < self.omega_c) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < omega_lb < omega_c, got {} and {}",
                self.omega_lb, self.omega_c
            )));
        }
        if !(self.pm_target > 0.0 && self.pm_target < 90.0) {
            return Err(Error::InvalidParameter(format!(
                "phase margin target {} outside (0, 90) degrees",
                self.pm_target
            )));
        }
        if !(self.lambda_start < 0.0 && self.lambda_start >= -1.0) {
            return Err(Error::NoLinearBehavior(format!(
                "lambda = {} has no frequency of linear behaviour",
                self.lambda_start
            )));
        }
        if self.band_ratio <= 1.0 || self.band_points < 2 || self.max_evals == 0 {
            return Err(Error::InvalidParameter("degenerate search band or budget".into()));
        }
        Ok(())
    }

    fn omega_h(&self) -> f64 {
        self.crone_omega_h.unwrap_or(1e4 * self.omega_c)
    }

    fn crone(&self, lambda: f64, omega_l: f64) -> Result<CroneConfig> {
        let wh = self.omega_h();
        CroneConfig::new(lambda, omega_l, wh, min_sections(omega_l, wh))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FosreTuning {
    pub omega_ra: f64,
    pub beta: f64,
    pub omega_l: f64,
    pub lambda: f64,
    /// max |ψ| over the low band, degrees.
    pub objective: f64,
    /// Degrees.
    pub psi_lb: f64,
    /// Degrees.
    pub psi_c: f64,
    pub converged: bool,
    pub evaluations: usize,
    /// `(λ, β)` of every outer iterate, in order.
    pub history: Vec<(f64, f64)>,
}

/// `ω_rα` solving the ideal linear-behaviour condition at `ω_lb`:
/// `ω_rα² = −ω_lb / ((ω_lb/ω_l)² + 1)^(λ/2) / sin(λ atan(ω_lb/ω_l))`.
pub fn omega_ra_for_lb(omega_lb: f64, omega_l: f64, lambda: f64) -> Result<f64> {
    let r = omega_lb / omega_l;
    let s = (lambda * r.atan()).sin();
    if s >= 0.0 {
        return Err(Error::NoLinearBehavior(format!("lambda = {lambda}")));
    }
    Ok((-omega_lb / ((r * r + 1.0).powf(lambda / 2.0) * s)).sqrt())
}

struct Design {
    omega_ra: f64,
    objective: f64,
    psi_lb: f64,
    psi_c: f64,
}

fn realized_psi(spec: &TuneSpec, omega_ra: f64, beta: f64, omega_l: f64, lambda: f64, w: f64) -> Result<f64> {
    let rs = make_fosre(omega_ra, beta, 1.0, &spec.crone(lambda, omega_l)?)?;
    psi(&rs, w)
}

/// Realized design for one `ω_l`: `ω_rα` is placed so that ψ(ω_lb) = 0 on
/// the CRONE realization, starting from the ideal closed form.
fn design_at(spec: &TuneSpec, beta: f64, omega_l: f64, lambda: f64) -> Result<Design> {
    let ideal = omega_ra_for_lb(spec.omega_lb, omega_l, lambda)?;
    let g = |ln_wra: f64| realized_psi(spec, ln_wra.exp(), beta, omega_l, lambda, spec.omega_lb);
    // ψ(ω_lb) increases with ω_rα
    let (mut lo, mut hi) = (ideal.ln() - 0.2, ideal.ln() + 0.2);
    let mut expand = 0;
    while g(lo)? > 0.0 || g(hi)? < 0.0 {
        lo -= 0.5;
        hi += 0.5;
        expand += 1;
        if expand > 10 {
            return Err(Error::NotConverged("omega_ra bracket for psi(omega_lb) = 0".into()));
        }
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if g(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    let omega_ra = (0.5 * (lo + hi)).exp();
    let rs = make_fosre(omega_ra, beta, 1.0, &spec.crone(lambda, omega_l)?)?;
    let band = log_space(spec.omega_lb / spec.band_ratio, spec.omega_lb, spec.band_points);
    let mut objective: f64 = 0.0;
    for w in band {
        objective = objective.max(psi(&rs, w)?.abs());
    }
    Ok(Design {
        omega_ra,
        objective: objective.to_degrees(),
        psi_lb: psi(&rs, spec.omega_lb)?.to_degrees(),
        psi_c: psi(&rs, spec.omega_c)?.to_degrees(),
    })
}

/// Penalized objective: the low-band max |ψ| plus a steep charge for
/// ψ(ω_c) above its bound.
fn penalized(spec: &TuneSpec, d: &Design) -> f64 {
    let excess = (d.psi_c - spec.psi_c_max).max(0.0);
    d.objective + 1e3 * (excess + if excess > 0.0 { 1.0 } else { 0.0 })
}

/// Nelder–Mead simplex search. Returns the best point, its value, the
/// number of evaluations and whether the simplex collapsed below `tol`.
pub fn nelder_mead(
    f: impl Fn(&[f64]) -> f64,
    x0: &[f64],
    step: f64,
    max_evals: usize,
    tol: f64,
) -> (Vec<f64>, f64, usize, bool) {
    let n = x0.len();
    let mut pts: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += step;
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| f(p)).collect();
    let mut evals = n + 1;
    let mut converged = false;
    while evals < max_evals {
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]).then(a.cmp(&b)));
        pts = idx.iter().map(|&i| pts[i].clone()).collect();
        vals = idx.iter().map(|&i| vals[i]).collect();
        let spread = pts
            .iter()
            .skip(1)
            .flat_map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread < tol {
            converged = true;
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|j| pts[..n].iter().map(|p| p[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            (0..n).map(|j| centroid[j] + t * (pts[n][j] - centroid[j])).collect()
        };
        let xr = along(-1.0);
        let fr = f(&xr);
        evals += 1;
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            evals += 1;
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
        } else if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
        } else {
            let xc = if fr < vals[n] { along(-0.5) } else { along(0.5) };
            let fc = f(&xc);
            evals += 1;
            if fc < vals[n].min(fr) {
                pts[n] = xc;
                vals[n] = fc;
            } else {
                for i in 1..=n {
                    let p: Vec<f64> = (0..n).map(|j| 0.5 * (pts[0][j] + pts[i][j])).collect();
                    vals[i] = f(&p);
                    pts[i] = p;
                }
                evals += n;
            }
        }
    }
    let best = (0..=n)
        .min_by(|&a, &b| vals[a].total_cmp(&vals[b]).then(a.cmp(&b)))
        .unwrap_or(0);
    (pts[best].clone(), vals[best], evals, converged)
}

/// Restart grid for `ln ω_l`, relative to `ω_lb`.
const RESTARTS: [f64; 4] = [0.01, 0.1, 1.0, 10.0];

struct Inner {
    omega_l: f64,
    design: Design,
    evals: usize,
    converged: bool,
}

fn optimize_omega_l(spec: &TuneSpec, beta: f64, lambda: f64) -> Option<Inner> {
    let lo = (spec.omega_lb / 1e3).ln();
    let hi = spec.omega_c.ln();
    let cost = |x: &[f64]| -> f64 {
        let ln_wl = x[0];
        if !(lo..=hi).contains(&ln_wl) {
            return f64::INFINITY;
        }
        match design_at(spec, beta, ln_wl.exp(), lambda) {
            Ok(d) => penalized(spec, &d),
            Err(_) => f64::INFINITY,
        }
    };
    let runs: Vec<(usize, Vec<f64>, f64, usize, bool)> = RESTARTS
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let x0 = [(spec.omega_lb * r).ln().clamp(lo, hi)];
            let (x, fx, ev, conv) = nelder_mead(cost, &x0, 0.5, spec.max_evals, 1e-6);
            (i, x, fx, ev, conv)
        })
        .collect();
    let evals = runs.iter().map(|r| r.3).sum();
    let best = runs
        .into_iter()
        .filter(|r| r.2.is_finite())
        .min_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)))?;
    let omega_l = best.1[0].exp();
    let design = design_at(spec, beta, omega_l, lambda).ok()?;
    Some(Inner {
        omega_l,
        design,
        evals,
        converged: best.4,
    })
}

/// Seven-step recipe, steps 1–6: start at λ = −0.1 (or `lambda_start`),
/// β = 1; place `ω_l` (with `ω_rα` tied to ψ(ω_lb) = 0) to minimize the
/// low-band |ψ| under ψ(ω_c) < bound; if no such placement exists lower β
/// by 0.1, and when β reaches 0 lower λ by 0.1 and restart from β = 1.
pub fn tune_fosre(spec: &TuneSpec) -> Result<FosreTuning> {
    spec.validate()?;
    let mut lambda = spec.lambda_start;
    let mut beta_tenths = 10;
    let mut history = Vec::new();
    let mut evaluations = 0;
    let mut best: Option<FosreTuning> = None;
    loop {
        let beta = beta_tenths as f64 / 10.0;
        history.push((lambda, beta));
        if let Some(inner) = optimize_omega_l(spec, beta, lambda) {
            evaluations += inner.evals;
            let d = &inner.design;
            let feasible = d.psi_c < spec.psi_c_max && d.psi_lb.abs() < 0.5;
            let candidate = FosreTuning {
                omega_ra: d.omega_ra,
                beta,
                omega_l: inner.omega_l,
                lambda,
                objective: d.objective,
                psi_lb: d.psi_lb,
                psi_c: d.psi_c,
                converged: feasible && inner.converged,
                evaluations,
                history: history.clone(),
            };
            if feasible {
                return Ok(candidate);
            }
            let better = best
                .as_ref()
                .is_none_or(|b| candidate.psi_c < b.psi_c);
            if better {
                best = Some(candidate);
            }
        }
        beta_tenths -= 1;
        if beta_tenths == 0 {
            beta_tenths = 10;
            lambda = ((lambda - 0.1) * 10.0).round() / 10.0;
            if lambda < -1.0 {
                break;
            }
        }
    }
    match best {
        Some(mut b) => {
            b.converged = false;
            b.evaluations = evaluations;
            b.history = history;
            Ok(b)
        }
        None => Err(Error::NotConverged("no FOSRE placement evaluated".into())),
    }
}

/// Phase margin in degrees from the first-order describing function of the
/// open loop at `omega_c`.
pub fn phase_margin_df(ctrl: &Controller, plant: &StateSpaceSystem, omega_c: f64) -> Result<f64> {
    let g = open_loop_hosidf(ctrl, plant, omega_c, 1)?;
    let mut pm = 180.0 + g.arg().to_degrees();
    if pm > 180.0 {
        pm -= 360.0;
    }
    Ok(pm)
}

/// Highest frequency in `[lo, hi]` where `|G₁^OL|` falls through 1.
pub fn crossover_df(ctrl: &Controller, plant: &StateSpaceSystem, lo: f64, hi: f64) -> Result<f64> {
    let mag = |w: f64| -> Result<f64> { Ok(open_loop_hosidf(ctrl, plant, w, 1)?.norm().ln()) };
    let grid = log_space(lo, hi, 400);
    let vals: Vec<f64> = grid.iter().map(|&w| mag(w)).collect::<Result<_>>()?;
    let k = (1..grid.len())
        .rev()
        .find(|&k| vals[k - 1] >= 0.0 && vals[k] < 0.0)
        .ok_or(Error::NoCrossover { lo, hi })?;
    let (mut a, mut b) = (grid[k - 1].ln(), grid[k].ln());
    for _ in 0..100 {
        let m = 0.5 * (a + b);
        if mag(m.exp())? >= 0.0 {
            a = m;
        } else {
            b = m;
        }
        if b - a < 1e-14 {
            break;
        }
    }
    Ok((0.5 * (a + b)).exp())
}

/// `k_p` placing the describing-function crossover at `omega_c`.
pub fn pick_kp(ctrl: &Controller, plant: &StateSpaceSystem, omega_c: f64, omega_i: f64) -> Result<f64> {
    let unit = ctrl.with_kp(1.0, omega_i)?;
    let g = open_loop_hosidf(&unit, plant, omega_c, 1)?.norm();
    if !(g.is_finite() && g > 0.0) {
        return Err(Error::NoCrossover { lo: omega_c, hi: omega_c });
    }
    Ok(1.0 / g)
}

/// Golden-section search for α ∈ [0.5, 2] minimizing the worst relative
/// deviation of `|G₁(lag)·D|` from its DC value over `band` (rad/s).
/// `build(α)` returns the pair with the lead corner at `α·ω_rα`.
pub fn flatten_alpha(build: impl Fn(f64) -> Result<CgLp>, band: (f64, f64)) -> Result<f64> {
    let grid = log_space(band.0, band.1, 60);
    let cost = |alpha: f64| -> Result<f64> {
        let c = build(alpha)?;
        let dc = (c.lag.base_linear().response(0.0)? * c.lead.response(0.0)?).norm();
        let mut worst: f64 = 0.0;
        for &w in &grid {
            let g = crate::hosidf::describing_function(&c.lag, w, 1)? * c.lead.response(w)?;
            worst = worst.max((g.norm() / dc - 1.0).abs());
        }
        Ok(worst)
    };
    golden_section(cost, 0.5, 2.0, 1e-6)
}

fn golden_section(f: impl Fn(f64) -> Result<f64>, mut a: f64, mut b: f64, tol: f64) -> Result<f64> {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d)?;
        }
    }
    Ok(0.5 * (a + b))
}

/// Reset coefficient reaching `pm_target` at `omega_c` with `k_p` re-picked
/// for every candidate. `template(γ)` builds the controller.
pub fn pick_gamma(
    template: impl Fn(f64) -> Result<Controller>,
    plant: &StateSpaceSystem,
    omega_c: f64,
    omega_i: f64,
    pm_target: f64,
) -> Result<f64> {
    let pm = |gamma: f64| -> Result<f64> {
        let c = template(gamma)?;
        let kp = pick_kp(&c, plant, omega_c, omega_i)?;
        phase_margin_df(&c.with_kp(kp, omega_i)?, plant, omega_c)
    };
    let base = pm(1.0)?;
    if pm_target <= base + 1e-9 {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (-1.0, 1.0);
    if pm(lo)? < pm_target {
        return Err(Error::Unreachable(format!(
            "phase margin {pm_target} deg not reached for gamma in [-1, 1)"
        )));
    }
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if pm(mid)? >= pm_target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

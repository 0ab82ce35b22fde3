//! Higher-order sinusoidal input describing functions of reset elements,
//! the ψ diagnostic and the frequency at which a reset element behaves
//! linearly.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::elements::{Controller, ResetSystem};
use crate::error::{Error, Result};
use crate::linalg::{expm, inverse_checked};
use crate::lti::StateSpaceSystem;

/// `Θ_D(ω) = −(2ω²/π) Δ (Γ_r − Λ⁻¹)`.
pub fn theta_d(rs: &ResetSystem, omega: f64) -> Result<DMatrix<f64>> {
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "describing function needs ω > 0, got {omega}"
        )));
    }
    let a = rs.base_linear().a();
    let n = a.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    if rs.reset_diagonal().iter().all(|g| *g == 1.0) {
        // Γ_r reduces to Λ⁻¹
        return Ok(DMatrix::zeros(n, n));
    }
    let a_rho = rs.reset_matrix();

    let lambda = &id * (omega * omega) + a * a;
    let lambda_inv = inverse_checked(&lambda).ok_or(Error::ResonantFrequency {
        matrix: "Lambda",
        omega,
    })?;
    let e = expm(&(a * (PI / omega)));
    let delta = &id + &e;
    let delta_r = &id + &a_rho * &e;
    let delta_r_inv = inverse_checked(&delta_r).ok_or(Error::ResonantFrequency {
        matrix: "Delta_r",
        omega,
    })?;
    let gamma_r = delta_r_inv * &a_rho * &delta * &lambda_inv;
    Ok(&delta * (gamma_r - lambda_inv) * (-2.0 * omega * omega / PI))
}

fn resolvent_apply(
    sys: &StateSpaceSystem,
    s: Complex64,
    v: &DMatrix<Complex64>,
) -> Result<Complex64> {
    let n = sys.n_states();
    let mut m = sys.a().map(|x| Complex64::new(-x, 0.0));
    for i in 0..n {
        m[(i, i)] += s;
    }
    let x = crate::lti::solve_checked(m, v).ok_or(Error::PoleOnAxis { omega: s.im })?;
    Ok((sys.c().map(|x| Complex64::new(x, 0.0)) * x)[(0, 0)])
}

/// `G_n(ω)` for every requested order, sharing one evaluation of `Θ_D`.
/// Negative frequencies return the complex conjugate of `|ω|`.
pub fn describing_functions(rs: &ResetSystem, omega: f64, orders: &[u32]) -> Result<Vec<Complex64>> {
    if orders.contains(&0) {
        return Err(Error::InvalidParameter("harmonic order must be ≥ 1".into()));
    }
    if omega < 0.0 {
        return Ok(describing_functions(rs, -omega, orders)?
            .into_iter()
            .map(|z| z.conj())
            .collect());
    }
    let theta = theta_d(rs, omega)?;
    let sys = rs.base_linear();
    let b = sys.b().map(|x| Complex64::new(x, 0.0));
    let jtb = (&theta * sys.b()).map(|x| Complex64::new(0.0, x));
    let d = sys.d()[(0, 0)];
    orders
        .iter()
        .map(|&n| match n {
            1 => {
                let v = &b + &jtb;
                Ok(resolvent_apply(sys, Complex64::new(0.0, omega), &v)? + d)
            }
            n if n % 2 == 0 => Ok(Complex64::new(0.0, 0.0)),
            n => resolvent_apply(sys, Complex64::new(0.0, n as f64 * omega), &jtb),
        })
        .collect()
}

/// `G_n(ω)` of a reset element; zero for even `n`.
pub fn describing_function(rs: &ResetSystem, omega: f64, n: u32) -> Result<Complex64> {
    Ok(describing_functions(rs, omega, &[n])?[0])
}

/// `ψ(ω)`: phase of the base-linear transfer from the input to the
/// resetting state, in `(−π, π]`.
pub fn psi(rs: &ResetSystem, omega: f64) -> Result<f64> {
    let z = rs.aux_response(omega)?;
    let a = z.arg();
    Ok(if a == -PI { PI } else { a })
}

fn lb_rhs(omega: f64, omega_ra: f64, omega_l: f64, lambda: f64) -> f64 {
    let r = omega / omega_l;
    -omega_ra * omega_ra * (r * r + 1.0).powf(lambda / 2.0) * (lambda * r.atan()).sin()
}

/// Positive root of `ω = −ω_rα² ((ω/ω_l)² + 1)^(λ/2) sin(λ atan(ω/ω_l))`.
///
/// Tries a damped fixed-point iteration first and falls back to bisection
/// on a bracket found by a logarithmic scan. Returns 0 for `λ = 0`.
pub fn omega_lb_ideal(omega_ra: f64, omega_l: f64, lambda: f64) -> Result<f64> {
    if !(omega_ra > 0.0 && omega_l > 0.0) {
        return Err(Error::InvalidParameter("ω_rα and ω_l must be positive".into()));
    }
    if !(-1.0..=0.0).contains(&lambda) {
        return Err(Error::InvalidParameter(format!("λ must lie in [-1, 0], got {lambda}")));
    }
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let f = |w: f64| w - lb_rhs(w, omega_ra, omega_l, lambda);

    // the root is nonzero only if f is negative just above zero
    let slope0 = 1.0 + omega_ra * omega_ra * lambda / omega_l;
    if slope0 >= 0.0 {
        return Err(Error::NoLinearBehavior(format!(
            "ω_rα²|λ|/ω_l = {} ≤ 1",
            1.0 - slope0
        )));
    }

    let mut w = omega_ra;
    for _ in 0..500 {
        let next = 0.5 * w + 0.5 * lb_rhs(w, omega_ra, omega_l, lambda);
        if (next - w).abs() <= 1e-14 * next.abs() {
            if next > 0.0 && f(next).abs() <= 1e-12 * next {
                return Ok(next);
            }
            break;
        }
        w = next;
    }

    let lo_start = omega_l.min(omega_ra) * 1e-9;
    let hi_end = omega_l.max(omega_ra * omega_ra) * 1e9;
    let (lo, hi) = scan_bracket(lo_start, hi_end, 200, |w| Ok(f(w)))?.ok_or(
        Error::NoLinearBehavior("no sign change of the fixed-point residual".into()),
    )?;
    bisect(lo, hi, 1e-15, |w| Ok(f(w)))
}

/// First sub-interval of a log-spaced scan on which `g` changes sign.
fn scan_bracket(
    lo: f64,
    hi: f64,
    per_decade: usize,
    g: impl Fn(f64) -> Result<f64>,
) -> Result<Option<(f64, f64)>> {
    let decades = (hi / lo).log10();
    let n = (decades * per_decade as f64).ceil().max(1.0) as usize;
    let mut prev_w = lo;
    let mut prev = g(lo)?;
    for k in 1..=n {
        let w = lo * 10f64.powf(decades * k as f64 / n as f64);
        let v = g(w)?;
        if prev == 0.0 {
            return Ok(Some((prev_w, prev_w)));
        }
        if prev.signum() != v.signum() {
            return Ok(Some((prev_w, w)));
        }
        prev_w = w;
        prev = v;
    }
    Ok(None)
}

fn bisect(mut lo: f64, mut hi: f64, rel_tol: f64, g: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    if lo == hi {
        return Ok(lo);
    }
    let glo = g(lo)?;
    for _ in 0..200 {
        if (hi - lo) <= rel_tol * hi {
            break;
        }
        let mid = (lo * hi).sqrt();
        let gm = g(mid)?;
        if gm == 0.0 {
            return Ok(mid);
        }
        if gm.signum() == glo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo * hi).sqrt())
}

/// Zero crossing of the realized `ψ` on `[ω_min, ω_max]`: a scan at 200
/// points per decade followed by bisection. Crossings through ±π are
/// ignored.
pub fn omega_lb_realized(rs: &ResetSystem, omega_min: f64, omega_max: f64) -> Result<f64> {
    if !(omega_min > 0.0 && omega_max > omega_min) {
        return Err(Error::InvalidParameter("need 0 < ω_min < ω_max".into()));
    }
    let g = |w: f64| psi(rs, w);
    let decades = (omega_max / omega_min).log10();
    let n = (decades * 200.0).ceil().max(1.0) as usize;
    let mut prev_w = omega_min;
    let mut prev = g(omega_min)?;
    for k in 1..=n {
        let w = omega_min * 10f64.powf(decades * k as f64 / n as f64);
        let v = g(w)?;
        let through_zero = prev.abs() < PI / 2.0 && v.abs() < PI / 2.0;
        if through_zero && (prev == 0.0 || prev.signum() != v.signum()) {
            return bisect(prev_w, w, 1e-12, g);
        }
        prev_w = w;
        prev = v;
    }
    Err(Error::NoCrossing {
        lo: omega_min,
        hi: omega_max,
    })
}

/// Reset lag followed by the linear rest of the loop (remaining controller
/// blocks and plant).
#[derive(Debug, Clone)]
pub struct OpenLoop {
    pub lag: Option<ResetSystem>,
    pub tail: StateSpaceSystem,
}

impl OpenLoop {
    pub fn new(ctrl: &Controller, plant: &StateSpaceSystem) -> Result<Self> {
        Ok(Self {
            lag: ctrl.lag.clone(),
            tail: ctrl.linear_tail()?.series(plant)?,
        })
    }

    /// Open loop of a reset element with an arbitrary linear tail.
    pub fn from_parts(lag: Option<ResetSystem>, tail: StateSpaceSystem) -> Self {
        Self { lag, tail }
    }

    /// `G_n^OL(ω) = G_n^lag(ω) · L(jnω)`.
    pub fn harmonics(&self, omega: f64, orders: &[u32]) -> Result<Vec<Complex64>> {
        let lag: Vec<Complex64> = match &self.lag {
            Some(rs) => describing_functions(rs, omega, orders)?,
            None => orders
                .iter()
                .map(|&n| Complex64::new(if n == 1 { 1.0 } else { 0.0 }, 0.0))
                .collect(),
        };
        orders
            .iter()
            .zip(lag)
            .map(|(&n, g)| {
                if g == Complex64::new(0.0, 0.0) {
                    Ok(g)
                } else {
                    Ok(g * self.tail.response(n as f64 * omega)?)
                }
            })
            .collect()
    }

    pub fn psi(&self, omega: f64) -> Option<f64> {
        self.lag.as_ref().and_then(|rs| psi(rs, omega).ok())
    }
}

/// `G_n^OL(ω)` of a controller and plant.
pub fn open_loop_hosidf(
    ctrl: &Controller,
    plant: &StateSpaceSystem,
    omega: f64,
    n: u32,
) -> Result<Complex64> {
    Ok(OpenLoop::new(ctrl, plant)?.harmonics(omega, &[n])?[0])
}

/// Anything with harmonic describing functions and possibly a ψ.
pub trait HarmonicSource: Sync {
    fn harmonics(&self, omega: f64, orders: &[u32]) -> Result<Vec<Complex64>>;
    fn psi_at(&self, omega: f64) -> Option<f64>;
}

impl HarmonicSource for ResetSystem {
    fn harmonics(&self, omega: f64, orders: &[u32]) -> Result<Vec<Complex64>> {
        describing_functions(self, omega, orders)
    }
    fn psi_at(&self, omega: f64) -> Option<f64> {
        psi(self, omega).ok()
    }
}

impl HarmonicSource for OpenLoop {
    fn harmonics(&self, omega: f64, orders: &[u32]) -> Result<Vec<Complex64>> {
        OpenLoop::harmonics(self, omega, orders)
    }
    fn psi_at(&self, omega: f64) -> Option<f64> {
        self.psi(omega)
    }
}

/// HOSIDF values on a frequency grid; `values[i][k]` belongs to
/// `frequencies[i]` and `orders[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HosidfTable {
    pub frequencies: Vec<f64>,
    pub orders: Vec<u32>,
    pub values: Vec<Vec<Complex64>>,
    pub psi: Vec<Option<f64>>,
}

impl HosidfTable {
    /// `|G_n / G_1|` in dB, `None` where the first harmonic is not among
    /// the orders.
    pub fn normalized_db(&self, i: usize, k: usize) -> Option<f64> {
        let first = self.orders.iter().position(|&n| n == 1)?;
        Some(20.0 * (self.values[i][k].norm() / self.values[i][first].norm()).log10())
    }

    pub fn value(&self, omega_index: usize, order: u32) -> Option<Complex64> {
        let k = self.orders.iter().position(|&n| n == order)?;
        Some(self.values[omega_index][k])
    }

    /// CSV with columns `freq_hz, order, re, im, mag_db, phase_deg,
    /// psi_deg, norm_db`; one row per frequency and order.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Config(e.to_string());
        w.write_record(["freq_hz", "order", "re", "im", "mag_db", "phase_deg", "psi_deg", "norm_db"])
            .map_err(io)?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.9e}")).unwrap_or_default();
        for (i, &f) in self.frequencies.iter().enumerate() {
            for (k, &n) in self.orders.iter().enumerate() {
                let z = self.values[i][k];
                w.write_record([
                    format!("{:.9e}", f / (2.0 * PI)),
                    n.to_string(),
                    format!("{:.9e}", z.re),
                    format!("{:.9e}", z.im),
                    format!("{:.9e}", 20.0 * z.norm().log10()),
                    format!("{:.9e}", z.arg().to_degrees()),
                    opt(self.psi[i].map(f64::to_degrees)),
                    opt(self.normalized_db(i, k)),
                ])
                .map_err(io)?;
            }
        }
        w.flush().map_err(|e| Error::Config(e.to_string()))
    }
}

/// Evaluates `src` on every frequency (rad/s) in parallel; rows keep the
/// grid order.
pub fn hosidf_sweep<S: HarmonicSource + ?Sized>(
    src: &S,
    frequencies: &[f64],
    orders: &[u32],
) -> Result<HosidfTable> {
    let values = frequencies
        .par_iter()
        .map(|&w| src.harmonics(w, orders))
        .collect::<Result<Vec<_>>>()?;
    let psi = frequencies.iter().map(|&w| src.psi_at(w)).collect();
    Ok(HosidfTable {
        frequencies: frequencies.to_vec(),
        orders: orders.to_vec(),
        values,
        psi,
    })
}

//! CRONE (recursive pole/zero) approximation of the fractional factor
//! `(s/ω_l + 1)^λ` over `[ω_l, ω_h]`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::StateSpaceSystem;

/// Parameters of a CRONE approximation. Frequencies in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CroneConfig {
    pub lambda: f64,
    pub omega_l: f64,
    pub omega_h: f64,
    pub n: usize,
}

impl CroneConfig {
    pub fn new(lambda: f64, omega_l: f64, omega_h: f64, n: usize) -> Result<Self> {
        let cfg = Self {
            lambda,
            omega_l,
            omega_h,
            n,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Approximation band ending three decades above `omega_max`, with the
    /// minimum admissible number of sections.
    pub fn covering(lambda: f64, omega_l: f64, omega_max: f64) -> Result<Self> {
        let omega_h = 1e3 * omega_max.max(omega_l);
        Self::new(lambda, omega_l, omega_h, min_sections(omega_l, omega_h))
    }

    pub fn decades(&self) -> f64 {
        (self.omega_h / self.omega_l).log10()
    }

    pub fn validate(&self) -> Result<()> {
        if !(-1.0..=0.0).contains(&self.lambda) {
            return Err(Error::InvalidParameter(format!(
                "CRONE exponent must lie in [-1, 0], got {}",
                self.lambda
            )));
        }
        if !(self.omega_l > 0.0) || !(self.omega_h > self.omega_l) || !self.omega_h.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "CRONE band needs 0 < omega_l < omega_h, got [{}, {}]",
                self.omega_l, self.omega_h
            )));
        }
        let required = min_sections(self.omega_l, self.omega_h);
        if self.n < required {
            return Err(Error::InsufficientSections {
                got: self.n,
                required,
            });
        }
        Ok(())
    }
}

/// One section more than the number of decades in `[omega_l, omega_h]`.
pub fn min_sections(omega_l: f64, omega_h: f64) -> usize {
    let decades = (omega_h / omega_l).log10();
    (decades - 1e-9).ceil().max(0.0) as usize + 1
}

/// Real zeros and poles (as positive corner frequencies, rad/s) and a gain:
/// `gain · Π (1 + s/z_m) / (1 + s/p_m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroPoleGain {
    pub zeros: Vec<f64>,
    pub poles: Vec<f64>,
    pub gain: f64,
}

impl ZeroPoleGain {
    pub fn response(&self, omega: f64) -> Complex64 {
        self.eval(Complex64::new(0.0, omega))
    }

    fn eval(&self, s: Complex64) -> Complex64 {
        let one = Complex64::new(1.0, 0.0);
        let num: Complex64 = self.zeros.iter().map(|z| one + s / z).product();
        let den: Complex64 = self.poles.iter().map(|p| one + s / p).product();
        num / den * self.gain
    }

    /// Reciprocal chain: zeros and poles swapped, gain inverted.
    pub fn inverse(&self) -> Self {
        Self {
            zeros: self.poles.clone(),
            poles: self.zeros.clone(),
            gain: 1.0 / self.gain,
        }
    }
}

/// Places the CRONE zeros and poles log-equidistantly over the band and
/// normalizes the chain to unit DC gain.
pub fn crone_place(cfg: &CroneConfig) -> Result<ZeroPoleGain> {
    cfg.validate()?;
    let ratio = cfg.omega_h / cfg.omega_l;
    let n = cfg.n as f64;
    let place = |m: usize, sign: f64| {
        let e = (2.0 * m as f64 - 1.0 + sign * cfg.lambda) / (2.0 * n);
        cfg.omega_l * ratio.powf(e)
    };
    let zeros = (1..=cfg.n).map(|m| place(m, -1.0)).collect();
    let poles = (1..=cfg.n).map(|m| place(m, 1.0)).collect();
    Ok(normalize_dc(&ZeroPoleGain {
        zeros,
        poles,
        gain: 1.0,
    }))
}

/// Rescales the gain so that the chain has unit response at DC.
pub fn normalize_dc(zpk: &ZeroPoleGain) -> ZeroPoleGain {
    let dc = zpk.eval(Complex64::new(0.0, 0.0)).re;
    ZeroPoleGain {
        zeros: zpk.zeros.clone(),
        poles: zpk.poles.clone(),
        gain: zpk.gain / dc,
    }
}

/// Cascade of first-order sections `(1 + s/z)/(1 + s/p)` in ascending pole
/// order, with the gain folded into the first section. Identical zero/pole
/// pairs are dropped, so the degenerate `λ = 0` chain is a pure gain.
pub fn realize_crone(zpk: &ZeroPoleGain) -> Result<StateSpaceSystem> {
    if zpk.zeros.len() != zpk.poles.len() {
        return Err(Error::Dimension(format!(
            "{} zeros vs {} poles",
            zpk.zeros.len(),
            zpk.poles.len()
        )));
    }
    let mut pairs: Vec<(f64, f64)> = zpk
        .zeros
        .iter()
        .copied()
        .zip(zpk.poles.iter().copied())
        .filter(|(z, p)| (z - p).abs() > 1e-15 * z.abs().max(p.abs()))
        .collect();
    for &(z, p) in &pairs {
        if !(z > 0.0 && p > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "CRONE corners must be positive, got zero {z} / pole {p}"
            )));
        }
    }
    pairs.sort_by(|x, y| x.1.total_cmp(&y.1));
    let mut sys = StateSpaceSystem::gain(zpk.gain);
    for (z, p) in pairs {
        // (1 + s/z)/(1 + s/p) = g + g (z - p)/(s + p),  g = p/z
        let g = p / z;
        let sec = StateSpaceSystem::new(
            DMatrix::from_element(1, 1, -p),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, g * (z - p)),
            DMatrix::from_element(1, 1, g),
        )?;
        sys = sys.series(&sec)?;
    }
    Ok(sys.labelled("crone"))
}

/// Exact `(jω/ω_l + 1)^λ`.
pub fn fractional_response(lambda: f64, omega_l: f64, omega: f64) -> Complex64 {
    let z = Complex64::new(1.0, omega / omega_l);
    if lambda == 0.0 {
        return Complex64::new(1.0, 0.0);
    }
    (z.ln() * lambda).exp()
}

/// Worst gain (dB) and phase (deg) deviation of the chain from the exact
/// fractional factor on `points` log-spaced frequencies in `[lo, hi]`.
pub fn approximation_error(
    cfg: &CroneConfig,
    zpk: &ZeroPoleGain,
    lo: f64,
    hi: f64,
    points: usize,
) -> (f64, f64) {
    let mut gain_err: f64 = 0.0;
    let mut phase_err: f64 = 0.0;
    for w in log_space(lo, hi, points) {
        let approx = zpk.response(w);
        let exact = fractional_response(cfg.lambda, cfg.omega_l, w);
        let ratio = approx / exact;
        gain_err = gain_err.max((20.0 * ratio.norm().log10()).abs());
        phase_err = phase_err.max(ratio.arg().to_degrees().abs());
    }
    (gain_err, phase_err)
}

/// `n` logarithmically spaced points from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp())
        .collect()
}

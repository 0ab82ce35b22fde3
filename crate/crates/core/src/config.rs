//! Controller configuration documents. Frequencies are given in Hz, as in
//! the parameter table of the comparison study, and converted to rad/s only
//! when a controller is built.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::crone::{min_sections, CroneConfig};
use crate::elements::{
    low_pass2, make_fore, make_fosre_cglp, make_sore, make_sosre_cglp, pi_controller,
    tamed_derivative, CgLp, Controller,
};
use crate::error::{Error, Result};
use crate::lti::StateSpaceSystem;
use crate::tuner::{flatten_alpha, pick_kp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ControllerKind {
    #[serde(rename = "PID")]
    Pid,
    #[serde(rename = "FORE-CgLp")]
    Fore,
    #[serde(rename = "SORE-CgLp")]
    Sore,
    #[serde(rename = "SOSRE-CgLp")]
    Sosre,
    #[serde(rename = "FOSRE-CgLp")]
    Fosre,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: ControllerKind,
    pub units: String,
    pub omega_i: f64,
    pub omega_d: f64,
    pub omega_t: f64,
    pub omega_f: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_ra: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_l: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crone_omega_h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crone_n: Option<usize>,
}

pub fn hz(f: f64) -> f64 {
    TAU * f
}

fn config_err(name: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{name}: {msg}"))
}

impl ControllerConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let name = self.name.as_str();
        if self.units != "Hz" {
            return Err(config_err(name, format!("units must be \"Hz\", got {:?}", self.units)));
        }
        for (field, v) in [
            ("omega_i", Some(self.omega_i)),
            ("omega_d", Some(self.omega_d)),
            ("omega_t", Some(self.omega_t)),
            ("omega_f", Some(self.omega_f)),
            ("omega_ra", self.omega_ra),
            ("beta", self.beta),
            ("omega_l", self.omega_l),
            ("alpha", self.alpha),
            ("crone_omega_h", self.crone_omega_h),
        ] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(config_err(name, format!("{field} must be positive, got {v}")));
                }
            }
        }
        let present = |field: &str, v: bool, want: bool| -> Result<()> {
            match (v, want) {
                (true, false) => Err(config_err(name, format!("{field} is not applicable to {:?}", self.kind))),
                (false, true) => Err(config_err(name, format!("{field} is required for {:?}", self.kind))),
                _ => Ok(()),
            }
        };
        use ControllerKind::*;
        let reset = self.kind != Pid;
        let damped = matches!(self.kind, Sore | Sosre | Fosre);
        let fractional = self.kind == Fosre;
        present("omega_ra", self.omega_ra.is_some(), reset)?;
        present("gamma", self.gamma.is_some(), reset)?;
        present("alpha", self.alpha.is_some(), reset && self.alpha.is_some())?;
        present("beta", self.beta.is_some(), damped)?;
        present("lambda", self.lambda.is_some(), fractional)?;
        present("omega_l", self.omega_l.is_some(), fractional)?;
        present("crone_omega_h", self.crone_omega_h.is_some(), fractional && self.crone_omega_h.is_some())?;
        present("crone_n", self.crone_n.is_some(), fractional && self.crone_n.is_some())?;
        if let Some(g) = self.gamma {
            if !(-1.0..=1.0).contains(&g) {
                return Err(config_err(name, format!("gamma must lie in [-1, 1], got {g}")));
            }
        }
        if let Some(l) = self.lambda {
            if !(-1.0..=0.0).contains(&l) {
                return Err(config_err(name, format!("lambda must lie in [-1, 0], got {l}")));
            }
        }
        if let Some(k) = self.k_p {
            if !(k.is_finite() && k != 0.0) {
                return Err(config_err(name, format!("k_p must be finite and nonzero, got {k}")));
            }
        }
        Ok(())
    }

    /// CRONE band of a FOSRE: `ω_h` defaults to `1000·ω_f`, `N` to the
    /// smallest count the band needs.
    pub fn crone(&self) -> Result<Option<CroneConfig>> {
        match (self.lambda, self.omega_l) {
            (Some(lambda), Some(wl)) => {
                let wl = hz(wl);
                let wh = hz(self.crone_omega_h.unwrap_or(1000.0 * self.omega_f));
                let n = self.crone_n.unwrap_or_else(|| min_sections(wl, wh));
                Ok(Some(CroneConfig::new(lambda, wl, wh, n)?))
            }
            _ => Ok(None),
        }
    }

    /// Reset lag and lead with the lead corner at `α·ω_rα`.
    pub fn cglp(&self, alpha: f64) -> Result<Option<CgLp>> {
        let wf = hz(self.omega_f);
        let Some(wra) = self.omega_ra.map(hz) else {
            return Ok(None);
        };
        let gamma = self.gamma.unwrap_or(1.0);
        let wr = alpha * wra;
        let pair = match self.kind {
            ControllerKind::Pid => return Ok(None),
            ControllerKind::Fore => make_fore(wra, wr, wf, gamma)?,
            ControllerKind::Sore => make_sore(wra, self.beta.unwrap_or(1.0), wr, wf, gamma)?,
            ControllerKind::Sosre => make_sosre_cglp(wra, self.beta.unwrap_or(1.0), wr, wf, gamma)?,
            ControllerKind::Fosre => {
                let crone = self.crone()?.ok_or_else(|| config_err(&self.name, "missing CRONE data"))?;
                make_fosre_cglp(wra, self.beta.unwrap_or(1.0), wr, wf, gamma, &crone)?
            }
        };
        Ok(Some(pair))
    }

    /// Controller with the given `k_p` and `α`.
    pub fn build(&self, k_p: f64, alpha: f64) -> Result<Controller> {
        self.validate()?;
        let pi = pi_controller(k_p, hz(self.omega_i))?;
        let td = tamed_derivative(hz(self.omega_d), hz(self.omega_t))?;
        Ok(match self.cglp(alpha)? {
            Some(pair) => Controller::cglp(&self.name, pair, pi, td),
            None => Controller::pid(&self.name, low_pass2(hz(self.omega_f))?, pi, td),
        })
    }

    /// Fills in `α` (gain flattening over `[ω_rα/10, ω_f]`) and `k_p`
    /// (describing-function crossover at `crossover_hz`) where the document
    /// leaves them out.
    pub fn resolve(&self, plant: &StateSpaceSystem, crossover_hz: f64) -> Result<Resolved> {
        self.validate()?;
        let alpha = match (self.kind, self.alpha) {
            (ControllerKind::Pid, _) => 1.0,
            (_, Some(a)) => a,
            (_, None) => {
                let wra = hz(self.omega_ra.unwrap_or(1.0));
                let band = (wra / 10.0, hz(self.omega_f));
                flatten_alpha(|a| Ok(self.cglp(a)?.expect("reset controller")), band)?
            }
        };
        let k_p = match self.k_p {
            Some(k) => k,
            None => pick_kp(&self.build(1.0, alpha)?, plant, hz(crossover_hz), hz(self.omega_i))?,
        };
        Ok(Resolved {
            controller: self.build(k_p, alpha)?,
            k_p,
            alpha,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Resolved {
    pub controller: Controller,
    pub k_p: f64,
    pub alpha: f64,
}

/// Positioning stage `3.038e4 / (s² + 0.7413 s + 243.3)`.
pub fn stage_plant() -> StateSpaceSystem {
    StateSpaceSystem::biquad(&[3.038e4], &[243.3, 0.7413, 1.0])
        .expect("stage plant is well formed")
        .labelled("plant")
}

/// Crossover of the comparison study, Hz.
pub const DESIGN_CROSSOVER_HZ: f64 = 150.0;

/// Controller sets of the comparison study, as bundled JSON documents:
/// `(set number, document)`.
pub const TABLE_CONFIGS: [(u8, &str); 5] = [
    (0, include_str!("../configs/pid.json")),
    (1, include_str!("../configs/sosre_set1.json")),
    (2, include_str!("../configs/sosre_set2.json")),
    (1, include_str!("../configs/fosre_set1.json")),
    (2, include_str!("../configs/fosre_set2.json")),
];

pub fn table_configs() -> Vec<ControllerConfig> {
    TABLE_CONFIGS
        .iter()
        .map(|(_, text)| ControllerConfig::from_json(text).expect("bundled config is valid"))
        .collect()
}

//! Reset elements and the CgLp (reset lag + linear lead) controllers built
//! from them.
//!
//! A reset element flows as its base linear system while its input is
//! nonzero and multiplies its state by the diagonal reset matrix `A_ρ`
//! whenever the input crosses zero. All frequencies are in rad/s.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::crone::{crone_place, realize_crone, CroneConfig, ZeroPoleGain};
use crate::error::{Error, Result};
use crate::lti::{Factor, RationalFilter, StateSpaceSystem};

/// A SISO base linear system with a diagonal reset matrix and an optional
/// auxiliary output tapping the resetting state `x₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResetSystem {
    base: StateSpaceSystem,
    reset: DVector<f64>,
    aux: Option<DVector<f64>>,
    resetting: Vec<usize>,
}

impl ResetSystem {
    pub fn new(
        base: StateSpaceSystem,
        reset: DVector<f64>,
        aux: Option<DVector<f64>>,
    ) -> Result<Self> {
        if !base.is_siso() {
            return Err(Error::Dimension("reset element must be SISO".into()));
        }
        if reset.len() != base.n_states() {
            return Err(Error::Dimension(format!(
                "reset matrix has {} entries for {} states",
                reset.len(),
                base.n_states()
            )));
        }
        if let Some(g) = reset.iter().find(|g| !(-1.0..=1.0).contains(*g)) {
            return Err(Error::InvalidParameter(format!(
                "reset coefficient {g} outside [-1, 1]"
            )));
        }
        if let Some(t) = &aux {
            if t.len() != base.n_states() {
                return Err(Error::Dimension("auxiliary tap length".into()));
            }
        }
        let resetting = (0..reset.len()).filter(|&i| reset[i] != 1.0).collect();
        Ok(Self {
            base,
            reset,
            aux,
            resetting,
        })
    }

    /// Declare which states the element resets by construction, so that
    /// the bookkeeping survives a reset coefficient of one.
    pub fn with_resetting_states(mut self, idx: Vec<usize>) -> Result<Self> {
        if idx.iter().any(|&i| i >= self.n_states()) {
            return Err(Error::Dimension("resetting state index out of range".into()));
        }
        if (0..self.n_states()).any(|i| self.reset[i] != 1.0 && !idx.contains(&i)) {
            return Err(Error::InvalidParameter(
                "a state with a non-unit reset coefficient is not declared resetting".into(),
            ));
        }
        self.resetting = idx;
        Ok(self)
    }

    /// The system with resets disabled (`A_ρ = I`).
    pub fn base_linear(&self) -> &StateSpaceSystem {
        &self.base
    }

    /// Diagonal of `A_ρ`.
    pub fn reset_diagonal(&self) -> &DVector<f64> {
        &self.reset
    }

    pub fn reset_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.reset)
    }

    /// Indices of the states whose reset coefficient differs from one.
    pub fn reset_state_indices(&self) -> Vec<usize> {
        self.reset
            .iter()
            .enumerate()
            .filter(|(_, g)| **g != 1.0)
            .map(|(i, _)| i)
            .collect()
    }

    /// Indices of the states that the element is built to reset, whether or
    /// not the current coefficient happens to equal one.
    pub fn resetting_states(&self) -> &[usize] {
        &self.resetting
    }

    pub fn aux_tap(&self) -> Option<&DVector<f64>> {
        self.aux.as_ref()
    }

    pub fn n_states(&self) -> usize {
        self.base.n_states()
    }

    /// Copy with the coefficient of every resetting state replaced by `gamma`.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        let mut reset = DVector::from_element(self.n_states(), 1.0);
        for &i in &self.resetting {
            reset[i] = gamma;
        }
        Self::new(self.base.clone(), reset, self.aux.clone())?
            .with_resetting_states(self.resetting.clone())
    }

    /// Base-linear transfer from the input to the resetting state at `jω`.
    pub fn aux_response(&self, omega: f64) -> Result<Complex64> {
        let tap = self.aux.as_ref().ok_or(Error::MissingAuxOutput)?;
        let sys = StateSpaceSystem::new(
            self.base.a().clone(),
            self.base.b().clone(),
            DMatrix::from_row_slice(1, tap.len(), tap.as_slice()),
            DMatrix::zeros(1, 1),
        )?;
        sys.response(omega)
    }
}

/// Projection onto the base linear system.
pub fn base_linear(rs: &ResetSystem) -> StateSpaceSystem {
    rs.base_linear().clone()
}

/// A reset lag element together with its matching linear lead filter.
#[derive(Debug, Clone, PartialEq)]
pub struct CgLp {
    pub lag: ResetSystem,
    pub lead: StateSpaceSystem,
}

impl CgLp {
    /// Series lag → lead with resets disabled.
    pub fn base_linear(&self) -> Result<StateSpaceSystem> {
        self.lag.base_linear().series(&self.lead)
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if (-1.0..=1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "reset coefficient must lie in [-1, 1], got {gamma}"
        )))
    }
}

/// `1/((s/ω_f)² + 2 s/ω_f + 1)`.
pub fn low_pass2(omega_f: f64) -> Result<StateSpaceSystem> {
    check_positive("omega_f", omega_f)?;
    RationalFilter::new(
        1.0,
        vec![],
        vec![Factor::Second {
            corner: omega_f,
            damping: 1.0,
        }],
    )?
    .to_state_space()
    .map(|s| s.labelled("filter"))
}

/// First-order reset element CgLp: lag `1/(s/ω_rα + 1)` resetting by `γ`,
/// lead `(s/ω_r + 1)/(s/ω_f + 1)`.
pub fn make_fore(omega_ra: f64, omega_r: f64, omega_f: f64, gamma: f64) -> Result<CgLp> {
    check_positive("omega_ra", omega_ra)?;
    check_positive("omega_r", omega_r)?;
    check_positive("omega_f", omega_f)?;
    check_gamma(gamma)?;
    let base = StateSpaceSystem::new(
        DMatrix::from_element(1, 1, -omega_ra),
        DMatrix::from_element(1, 1, omega_ra),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::zeros(1, 1),
    )?
    .labelled("reset");
    let lag = ResetSystem::new(
        base,
        DVector::from_element(1, gamma),
        Some(DVector::from_element(1, 1.0)),
    )?
    .with_resetting_states(vec![0])?;
    let lead = RationalFilter::new(
        1.0,
        vec![Factor::First { corner: omega_r }],
        vec![Factor::First { corner: omega_f }],
    )?
    .to_state_space()?
    .labelled("lead");
    Ok(CgLp { lag, lead })
}

fn second_order_lead(omega_r: f64, beta: f64, omega_f: f64) -> Result<StateSpaceSystem> {
    Ok(RationalFilter::new(
        1.0,
        vec![Factor::Second {
            corner: omega_r,
            damping: beta,
        }],
        vec![Factor::Second {
            corner: omega_f,
            damping: 1.0,
        }],
    )?
    .to_state_space()?
    .labelled("lead"))
}

/// Second-order reset element CgLp: lag `1/((s/ω_rα)² + 2βs/ω_rα + 1)` with
/// both states reset by `γ`, lead `((s/ω_r)² + 2βs/ω_r + 1)/((s/ω_f)² + 2s/ω_f + 1)`.
pub fn make_sore(
    omega_ra: f64,
    beta: f64,
    omega_r: f64,
    omega_f: f64,
    gamma: f64,
) -> Result<CgLp> {
    check_positive("omega_ra", omega_ra)?;
    check_positive("beta", beta)?;
    check_positive("omega_r", omega_r)?;
    check_gamma(gamma)?;
    let w2 = omega_ra * omega_ra;
    let base = StateSpaceSystem::new(
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -w2, -2.0 * beta * omega_ra]),
        DMatrix::from_row_slice(2, 1, &[0.0, w2]),
        DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        DMatrix::zeros(1, 1),
    )?
    .labelled("reset");
    let lag = ResetSystem::new(base, DVector::from_element(2, gamma), None)?
        .with_resetting_states(vec![0, 1])?;
    let lead = second_order_lead(omega_r, beta, omega_f)?;
    Ok(CgLp { lag, lead })
}

/// Second-order single-state reset element: only the velocity-like state
/// `x₂` resets.
pub fn make_sosre(omega_ra: f64, beta: f64, gamma: f64) -> Result<ResetSystem> {
    check_positive("omega_ra", omega_ra)?;
    check_positive("beta", beta)?;
    check_gamma(gamma)?;
    let w = omega_ra;
    let base = StateSpaceSystem::with_labels(
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -w * w, -2.0 * beta * w]),
        DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        DMatrix::from_row_slice(1, 2, &[w, 0.0]),
        DMatrix::zeros(1, 1),
        vec!["lag".into(), "reset".into()],
    )?;
    ResetSystem::new(
        base,
        DVector::from_vec(vec![1.0, gamma]),
        Some(DVector::from_vec(vec![0.0, 1.0])),
    )?
    .with_resetting_states(vec![1])
}

/// Lead matching [`make_sosre`]: `ω_r ((s/ω_r)² + 2βs/ω_r + 1)/((s/ω_f)² + 2s/ω_f + 1)`.
/// The `ω_r` factor compensates the `1/ω_rα` DC gain of the lag.
pub fn make_sosre_lead(omega_r: f64, beta: f64, omega_f: f64) -> Result<StateSpaceSystem> {
    check_positive("omega_r", omega_r)?;
    check_positive("beta", beta)?;
    Ok(second_order_lead(omega_r, beta, omega_f)?.scaled(omega_r))
}

/// SOSRE CgLp pair.
pub fn make_sosre_cglp(
    omega_ra: f64,
    beta: f64,
    omega_r: f64,
    omega_f: f64,
    gamma: f64,
) -> Result<CgLp> {
    Ok(CgLp {
        lag: make_sosre(omega_ra, beta, gamma)?,
        lead: make_sosre_lead(omega_r, beta, omega_f)?,
    })
}

/// Fractional-order single-state reset element.
///
/// States are `[x₂, ξ]`: `x₂` is the resetting integrator, `ξ` the CRONE
/// chain approximating `(s/ω_l + 1)^λ` driven by `x₂`. With the chain
/// realized as `(Ā, B̄, C̄, D̄)`:
///
/// ```text
/// A = [[-2βω_rα, 0], [B̄, Ā]] - ω_rα² [1; 0] [D̄, C̄]
/// B = [1; 0],  C = ω_rα² [D̄, C̄],  D = 0,  A_ρ = diag(γ, 1, …, 1)
/// ```
pub fn make_fosre(omega_ra: f64, beta: f64, gamma: f64, crone: &CroneConfig) -> Result<ResetSystem> {
    check_positive("omega_ra", omega_ra)?;
    check_positive("beta", beta)?;
    check_gamma(gamma)?;
    let chain = realize_crone(&crone_place(crone)?)?;
    let n = chain.n_states();
    let w2 = omega_ra * omega_ra;
    let dim = n + 1;

    // row [D̄, C̄]
    let mut tap = DMatrix::zeros(1, dim);
    tap[(0, 0)] = chain.d()[(0, 0)];
    tap.view_mut((0, 1), (1, n)).copy_from(chain.c());

    let mut a = DMatrix::zeros(dim, dim);
    a[(0, 0)] = -2.0 * beta * omega_ra;
    a.view_mut((1, 0), (n, 1)).copy_from(chain.b());
    a.view_mut((1, 1), (n, n)).copy_from(chain.a());
    for j in 0..dim {
        a[(0, j)] -= w2 * tap[(0, j)];
    }
    let mut b = DMatrix::zeros(dim, 1);
    b[(0, 0)] = 1.0;
    let c = tap * w2;

    let mut labels = vec!["reset".to_string()];
    labels.extend(std::iter::repeat_n("crone".to_string(), n));
    let base = StateSpaceSystem::with_labels(a, b, c, DMatrix::zeros(1, 1), labels)?;

    let mut reset = DVector::from_element(dim, 1.0);
    reset[0] = gamma;
    let mut aux = DVector::zeros(dim);
    aux[0] = 1.0;
    ResetSystem::new(base, reset, Some(aux))?.with_resetting_states(vec![0])
}

/// Lead matching [`make_fosre`]:
/// `D(s) = [(s/ω_l + 1)^(-λ) (s/ω_r² + 2β/ω_r) + 1] / ((s/ω_f)² + 2s/ω_f + 1)`,
/// with the fractional factor realized by the reciprocal of the same CRONE
/// chain.
pub fn make_fosre_lead(
    omega_r: f64,
    beta: f64,
    omega_f: f64,
    crone: &CroneConfig,
) -> Result<StateSpaceSystem> {
    check_positive("omega_r", omega_r)?;
    check_positive("beta", beta)?;
    check_positive("omega_f", omega_f)?;
    let inv: ZeroPoleGain = crone_place(crone)?.inverse();
    let chain = realize_crone(&inv)?;
    let n = chain.n_states();
    let wf2 = omega_f * omega_f;

    // Observer form of the shared denominator s² + 2ω_f s + ω_f² with two
    // inputs: e (numerator ω_f²) and the chain output (numerator
    // ω_f² (s/ω_r² + 2β/ω_r)).
    let a_l = DMatrix::from_row_slice(2, 2, &[-2.0 * omega_f, 1.0, -wf2, 0.0]);
    let b_a = DMatrix::from_row_slice(2, 1, &[0.0, wf2]);
    let b_b = DMatrix::from_row_slice(
        2,
        1,
        &[wf2 / (omega_r * omega_r), 2.0 * beta * wf2 / omega_r],
    );

    let dim = n + 2;
    let mut a = DMatrix::zeros(dim, dim);
    a.view_mut((0, 0), (n, n)).copy_from(chain.a());
    a.view_mut((n, 0), (2, n)).copy_from(&(&b_b * chain.c()));
    a.view_mut((n, n), (2, 2)).copy_from(&a_l);
    let mut b = DMatrix::zeros(dim, 1);
    b.view_mut((0, 0), (n, 1)).copy_from(chain.b());
    b.view_mut((n, 0), (2, 1))
        .copy_from(&(&b_a + &b_b * chain.d()[(0, 0)]));
    let mut c = DMatrix::zeros(1, dim);
    c[(0, n)] = 1.0;
    let mut labels = vec!["lead-crone".to_string(); n];
    labels.extend(["lead".to_string(), "lead".to_string()]);
    StateSpaceSystem::with_labels(a, b, c, DMatrix::zeros(1, 1), labels)
}

/// FOSRE CgLp pair.
pub fn make_fosre_cglp(
    omega_ra: f64,
    beta: f64,
    omega_r: f64,
    omega_f: f64,
    gamma: f64,
    crone: &CroneConfig,
) -> Result<CgLp> {
    Ok(CgLp {
        lag: make_fosre(omega_ra, beta, gamma, crone)?,
        lead: make_fosre_lead(omega_r, beta, omega_f, crone)?,
    })
}

/// `k_p (1 + ω_i/s)`.
pub fn pi_controller(k_p: f64, omega_i: f64) -> Result<StateSpaceSystem> {
    check_positive("omega_i", omega_i)?;
    Ok(StateSpaceSystem::biquad(&[k_p * omega_i, k_p], &[0.0, 1.0])?.labelled("pi"))
}

/// Tamed derivative `(s/ω_d + 1)/(s/ω_t + 1)`.
pub fn tamed_derivative(omega_d: f64, omega_t: f64) -> Result<StateSpaceSystem> {
    Ok(RationalFilter::new(
        1.0,
        vec![Factor::First { corner: omega_d }],
        vec![Factor::First { corner: omega_t }],
    )?
    .to_state_space()?
    .labelled("derivative"))
}

/// Loop controller of the comparison study: an optional reset lag followed
/// by linear blocks `lead → PI → tamed derivative`.
///
/// For a PID the lag is absent and the `lead` slot holds the `ω_f` low-pass
/// filter.
#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    pub name: String,
    pub lag: Option<ResetSystem>,
    pub lead: StateSpaceSystem,
    pub pi: StateSpaceSystem,
    pub tamed_derivative: StateSpaceSystem,
}

impl Controller {
    pub fn cglp(name: &str, cglp: CgLp, pi: StateSpaceSystem, td: StateSpaceSystem) -> Self {
        Self {
            name: name.to_string(),
            lag: Some(cglp.lag),
            lead: cglp.lead,
            pi,
            tamed_derivative: td,
        }
    }

    pub fn pid(name: &str, filter: StateSpaceSystem, pi: StateSpaceSystem, td: StateSpaceSystem) -> Self {
        Self {
            name: name.to_string(),
            lag: None,
            lead: filter,
            pi,
            tamed_derivative: td,
        }
    }

    pub fn is_reset(&self) -> bool {
        self.lag.is_some()
    }

    /// Linear blocks after the reset lag: lead → PI → tamed derivative.
    pub fn linear_tail(&self) -> Result<StateSpaceSystem> {
        StateSpaceSystem::chain(&[&self.lead, &self.pi, &self.tamed_derivative])
    }

    /// Whole chain with resets disabled.
    pub fn base_linear(&self) -> Result<StateSpaceSystem> {
        let tail = self.linear_tail()?;
        match &self.lag {
            Some(lag) => lag.base_linear().series(&tail),
            None => Ok(tail),
        }
    }

    /// Copy with the PI gain replaced by `k_p`.
    pub fn with_kp(&self, k_p: f64, omega_i: f64) -> Result<Self> {
        let mut out = self.clone();
        out.pi = pi_controller(k_p, omega_i)?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crone::log_space;
    use approx::assert_relative_eq;

    const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

    fn fig4_crone() -> CroneConfig {
        CroneConfig::covering(-0.1, 0.8 * TWO_PI, 500.0 * TWO_PI).unwrap()
    }

    #[test]
    fn fore_identity_reset_is_first_order_lag() {
        let c = make_fore(10.0, 10.0, 1e3, 1.0).unwrap();
        assert_eq!(c.lag.n_states(), 1);
        assert!(c.lag.reset_state_indices().is_empty());
        for w in [0.1, 10.0, 500.0] {
            let g = c.lag.base_linear().response(w).unwrap();
            let exact = Complex64::new(1.0, w / 10.0).inv();
            assert!((g - exact).norm() < 1e-14);
        }
    }

    #[test]
    fn sore_structure_and_corner_magnitude() {
        let c = make_sore(20.0, 0.7, 20.0, 2e3, 0.3).unwrap();
        assert_eq!(c.lag.n_states(), 2);
        assert_eq!(c.lag.reset_state_indices(), vec![0, 1]);
        let g = c.lag.base_linear().response(20.0).unwrap();
        assert_relative_eq!(g.norm(), 1.0 / (2.0 * 0.7), max_relative = 1e-12);
        let crit = make_sore(20.0, 1.0, 20.0, 2e3, 1.0).unwrap();
        let g = crit.lag.base_linear().response(7.0).unwrap();
        let exact = Complex64::new(1.0, 7.0 / 20.0).powi(-2);
        assert!((g - exact).norm() < 1e-12);
    }

    #[test]
    fn sosre_matrices() {
        let rs = make_sosre(12.0, 0.8, 0.2).unwrap();
        let b = rs.base_linear();
        assert_eq!(b.a()[(1, 0)], -144.0);
        assert_relative_eq!(b.a()[(1, 1)], -2.0 * 0.8 * 12.0);
        assert_eq!(b.c()[(0, 0)], 12.0);
        assert_eq!(rs.reset_diagonal().as_slice(), &[1.0, 0.2]);
        assert_eq!(rs.reset_state_indices(), vec![1]);
        // x₂ is in phase with the input at ω_rα
        let x2 = rs.aux_response(12.0).unwrap();
        assert!(x2.arg().abs() < 1e-12);
    }

    #[test]
    fn fosre_structure() {
        let cfg = fig4_crone();
        let rs = make_fosre(3.18 * TWO_PI, 1.0, 0.2, &cfg).unwrap();
        assert_eq!(rs.n_states(), 1 + cfg.n);
        assert_eq!(rs.reset_diagonal()[0], 0.2);
        assert!(rs.reset_diagonal().iter().skip(1).all(|g| *g == 1.0));
        assert_eq!(rs.reset_state_indices(), vec![0]);
        assert!(crate::linalg::is_hurwitz(rs.base_linear().a()).unwrap());
    }

    #[test]
    fn fosre_matches_factored_transfer() {
        let cfg = CroneConfig::covering(-0.4, 2.5 * TWO_PI, 1500.0 * TWO_PI).unwrap();
        let (w_ra, beta) = (2.0 * TWO_PI, 1.0);
        let rs = make_fosre(w_ra, beta, 1.0, &cfg).unwrap();
        let zpk = crone_place(&cfg).unwrap();
        for w in log_space(0.1, 1e5, 40) {
            let s = Complex64::new(0.0, w);
            let f_inv = zpk.response(w).inv();
            let exact = (f_inv * (s / (w_ra * w_ra) + 2.0 * beta / w_ra) + 1.0).inv();
            let got = rs.base_linear().response(w).unwrap();
            assert!((got - exact).norm() <= 1e-9 * exact.norm(), "w={w}");

            // x₂/e = 1/(s + 2βω_rα + ω_rα² F(s))
            let x2 = (s + 2.0 * beta * w_ra + zpk.response(w) * w_ra * w_ra).inv();
            let tap = rs.aux_response(w).unwrap();
            assert!((tap - x2).norm() <= 1e-9 * x2.norm());
        }
    }

    #[test]
    fn fosre_lead_inverts_lag() {
        let cfg = CroneConfig::covering(-0.4, 1.3 * TWO_PI, 1500.0 * TWO_PI).unwrap();
        let (w, beta, wf) = (1.2 * TWO_PI, 1.0, 1500.0 * TWO_PI);
        let c = make_fosre_cglp(w, beta, w, wf, 0.2, &cfg).unwrap();
        let lp = low_pass2(wf).unwrap();
        let prod = c.base_linear().unwrap();
        for f in log_space(0.01, 1e4, 30) {
            let (x, y) = (prod.response(f).unwrap(), lp.response(f).unwrap());
            assert!((x - y).norm() <= 1e-8 * y.norm(), "f={f}");
        }
        // D(0) = 1 + 2β/ω_r, matching the lag's DC gain 1/(1 + 2β/ω_rα)
        let d0 = c.lead.response(0.0).unwrap();
        assert_relative_eq!(d0.re, 1.0 + 2.0 * beta / w, max_relative = 1e-10);
        // strictly proper, rolling off at -20 dB/decade far above ω_h
        let hi = c.lead.response(1e11).unwrap().norm() / c.lead.response(1e12).unwrap().norm();
        assert_relative_eq!(hi, 10.0, max_relative = 1e-3);
    }

    #[test]
    fn sosre_cglp_is_flat_at_alpha_one() {
        let w = 2.0 * TWO_PI;
        let wf = 1500.0 * TWO_PI;
        let c = make_sosre_cglp(w, 1.0, w, wf, 0.2).unwrap();
        let prod = c.base_linear().unwrap();
        let lp = low_pass2(wf).unwrap();
        for f in log_space(0.01, 1e4, 20) {
            let (x, y) = (prod.response(f).unwrap(), lp.response(f).unwrap());
            assert!((x - y).norm() <= 1e-8 * y.norm());
        }
    }

    #[test]
    fn gamma_range_is_enforced() {
        assert!(make_sosre(1.0, 1.0, 1.5).is_err());
        assert!(make_fore(1.0, 1.0, 10.0, -1.01).is_err());
        assert!(make_sosre(-1.0, 1.0, 0.2).is_err());
        assert!(make_fosre_lead(1.0, 1.0, 0.0, &fig4_crone()).is_err());
    }

    #[test]
    fn base_linear_projection() {
        let rs = make_sosre(5.0, 1.0, 0.2).unwrap();
        let bl = base_linear(&rs);
        assert_eq!(bl.n_states(), rs.n_states());
        let one = rs.with_gamma(1.0).unwrap();
        assert_eq!(base_linear(&one), bl);
        assert!(one.reset_state_indices().is_empty());
        assert_eq!(one.resetting_states(), vec![1]);
    }

    #[test]
    fn base_systems_are_hurwitz() {
        let cfg = CroneConfig::covering(-0.7, 1.0, 1e3).unwrap();
        for beta in [0.1, 0.5, 1.0, 2.0] {
            for rs in [
                make_sosre(3.0, beta, 0.0).unwrap(),
                make_fosre(3.0, beta, 0.0, &cfg).unwrap(),
                make_sore(3.0, beta, 3.0, 1e3, 0.0).unwrap().lag,
            ] {
                assert!(crate::linalg::is_hurwitz(rs.base_linear().a()).unwrap());
            }
        }
    }
}

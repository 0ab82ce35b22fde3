//! Open-loop convergence of reset elements and the H_β quadratic stability
//! certificate of the reset closed loop.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::elements::{Controller, ResetSystem};
use crate::error::{Error, Result};
use crate::linalg::{
    balance_diagonal, expm, is_hurwitz, lyapunov, normalized_sym_extremes, spectral_radius,
    sym_max_eig,
};
use crate::lti::StateSpaceSystem;

/// Unity-feedback loop `e = r − y` around plant and controller, with the
/// states ordered `[plant, non-resetting controller, resetting controller]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopResetSystem {
    pub a_cl: DMatrix<f64>,
    /// Reference input column.
    pub b_r: DVector<f64>,
    /// `e = e_row·x + e_ff·r`
    pub e_row: DVector<f64>,
    pub e_ff: f64,
    /// `u = u_row·x + u_ff·r`
    pub u_row: DVector<f64>,
    pub u_ff: f64,
    /// `y = y_row·x + y_ff·r`
    pub y_row: DVector<f64>,
    pub y_ff: f64,
    /// Plant output matrix in plant coordinates.
    pub c_p: DVector<f64>,
    /// Diagonal of the closed-loop reset map (ones outside the reset block).
    pub reset_diag: DVector<f64>,
    pub n_p: usize,
    pub n_nr: usize,
    pub n_r: usize,
    pub labels: Vec<String>,
}

impl ClosedLoopResetSystem {
    pub fn n_states(&self) -> usize {
        self.a_cl.nrows()
    }

    /// `A_ρ` restricted to the resetting states.
    pub fn reset_block(&self) -> DMatrix<f64> {
        let off = self.n_p + self.n_nr;
        DMatrix::from_fn(self.n_r, self.n_r, |i, j| {
            if i == j {
                self.reset_diag[off + i]
            } else {
                0.0
            }
        })
    }

    pub fn is_reset(&self) -> bool {
        self.n_r > 0
    }

    /// Copy with every reset coefficient set to `gamma`.
    pub fn with_gamma(&self, gamma: f64) -> Self {
        let mut out = self.clone();
        let off = self.n_p + self.n_nr;
        for i in 0..self.n_r {
            out.reset_diag[off + i] = gamma;
        }
        out
    }
}

/// Assembles the unity-feedback loop of `ctrl` (lag first) and `plant`.
pub fn build_closed_loop(
    plant: &StateSpaceSystem,
    ctrl: &Controller,
) -> Result<ClosedLoopResetSystem> {
    let k = ctrl.base_linear()?;
    let (reset_local, gammas): (Vec<usize>, Vec<f64>) = match &ctrl.lag {
        Some(lag) => lag
            .resetting_states()
            .iter()
            .map(|&i| (i, lag.reset_diagonal()[i]))
            .unzip(),
        None => (Vec::new(), Vec::new()),
    };
    assemble(plant, &k, &reset_local, &gammas)
}

fn assemble(
    plant: &StateSpaceSystem,
    k: &StateSpaceSystem,
    reset_local: &[usize],
    gammas: &[f64],
) -> Result<ClosedLoopResetSystem> {
    if !plant.is_siso() || !k.is_siso() {
        return Err(Error::Dimension("closed loop needs SISO plant and controller".into()));
    }
    let (np, nk) = (plant.n_states(), k.n_states());
    let n = np + nk;
    let (dp, dk) = (plant.d()[(0, 0)], k.d()[(0, 0)]);
    let s = 1.0 + dk * dp;
    if s.abs() < 1e-12 {
        return Err(Error::AlgebraicLoop(s));
    }
    let cp = plant.c().row(0).transpose();
    let ck = k.c().row(0).transpose();

    // e = (r − C_p x_p − D_p C_k x_k) / s
    let mut e_row = DVector::zeros(n);
    e_row.rows_mut(0, np).copy_from(&(-&cp / s));
    e_row.rows_mut(np, nk).copy_from(&(-&ck * (dp / s)));
    let e_ff = 1.0 / s;
    // u = C_k x_k + D_k e
    let mut u_row = &e_row * dk;
    {
        let mut tail = u_row.rows_mut(np, nk);
        tail += &ck;
    }
    let u_ff = dk * e_ff;
    // y = C_p x_p + D_p u
    let mut y_row = &u_row * dp;
    {
        let mut head = y_row.rows_mut(0, np);
        head += &cp;
    }
    let y_ff = dp * u_ff;

    let bp = plant.b().column(0).into_owned();
    let bk = k.b().column(0).into_owned();
    let mut a = DMatrix::zeros(n, n);
    a.view_mut((0, 0), (np, np)).copy_from(plant.a());
    a.view_mut((np, np), (nk, nk)).copy_from(k.a());
    let mut bu = DVector::zeros(n);
    bu.rows_mut(0, np).copy_from(&bp);
    let mut be = DVector::zeros(n);
    be.rows_mut(np, nk).copy_from(&bk);
    a += &bu * u_row.transpose() + &be * e_row.transpose();
    let b_r = &bu * u_ff + &be * e_ff;

    // permutation: plant, controller non-reset, controller reset
    let mut order: Vec<usize> = (0..np).collect();
    order.extend((0..nk).filter(|i| !reset_local.contains(i)).map(|i| np + i));
    order.extend(reset_local.iter().map(|i| np + i));
    let perm_v = |v: &DVector<f64>| DVector::from_fn(n, |i, _| v[order[i]]);
    let a_cl = DMatrix::from_fn(n, n, |i, j| a[(order[i], order[j])]);

    let mut labels: Vec<String> = plant.labels().iter().map(|l| {
        if l.is_empty() { "plant".to_string() } else { l.clone() }
    }).collect();
    labels.extend(k.labels().iter().cloned());
    let labels = order.iter().map(|&i| labels[i].clone()).collect();

    let n_r = reset_local.len();
    let mut reset_diag = DVector::from_element(n, 1.0);
    for (i, g) in gammas.iter().enumerate() {
        reset_diag[n - n_r + i] = *g;
    }
    Ok(ClosedLoopResetSystem {
        a_cl,
        b_r: perm_v(&b_r),
        e_row: perm_v(&e_row),
        e_ff,
        u_row: perm_v(&u_row),
        u_ff,
        y_row: perm_v(&y_row),
        y_ff,
        c_p: cp,
        reset_diag,
        n_p: np,
        n_nr: nk - n_r,
        n_r,
        labels,
    })
}

/// Outcome of the open-loop convergence test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lemma1Report {
    pub holds: bool,
    /// Largest `ρ(A_ρ e^{Aδ})` found, including the `δ → 0` limit `ρ(A_ρ)`.
    pub worst_radius: f64,
    /// `δ` at which the worst radius occurs (0 for the limit).
    pub worst_delta: f64,
    /// `1 − worst_radius`.
    pub margin: f64,
    /// `1 −` the largest radius on the grid alone. With partial reset the
    /// `δ → 0` limit is 1, so this is the informative margin.
    pub grid_margin: f64,
}

/// Checks `ρ(A_ρ e^{Aδ}) < 1` on a log grid `[1e-4, δ_max]`; the `δ → 0`
/// endpoint `ρ(A_ρ)` is accepted up to `1 + 1e-12`.
pub fn lemma1_check(rs: &ResetSystem, delta_max: f64, grid_points: usize) -> Lemma1Report {
    lemma1_condition(rs.base_linear().a(), &rs.reset_matrix(), delta_max, grid_points)
}

/// [`lemma1_check`] on raw matrices, without the `|γ| ≤ 1` domain of a
/// reset element.
pub fn lemma1_condition(
    a: &DMatrix<f64>,
    a_rho: &DMatrix<f64>,
    delta_max: f64,
    grid_points: usize,
) -> Lemma1Report {
    let rho0 = spectral_radius(a_rho);
    let lo: f64 = 1e-4_f64.min(delta_max);
    let n = grid_points.max(2);
    let mut worst = (rho0, 0.0);
    let mut grid_ok = true;
    let mut grid_worst: f64 = 0.0;
    for k in 0..n {
        let d = lo * (delta_max / lo).powf(k as f64 / (n - 1) as f64);
        let r = spectral_radius(&(a_rho * expm(&(a * d))));
        if r >= 1.0 {
            grid_ok = false;
        }
        grid_worst = grid_worst.max(r);
        if r > worst.0 {
            worst = (r, d);
        }
    }
    Lemma1Report {
        holds: grid_ok && rho0 <= 1.0 + 1e-12,
        worst_radius: worst.0,
        worst_delta: worst.1,
        margin: 1.0 - worst.0,
        grid_margin: 1.0 - grid_worst,
    }
}

/// Candidate certificate: `β`, `P` and the reset-block weight `P_ρ`.
#[derive(Debug, Clone, PartialEq)]
pub struct HbetaCertificate {
    pub beta: DVector<f64>,
    pub p: DMatrix<f64>,
    pub p_rho: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionCheck {
    pub condition: &'static str,
    /// Positive when satisfied.
    pub margin: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HbetaReport {
    pub passed: bool,
    pub checks: Vec<ConditionCheck>,
}

impl HbetaReport {
    pub fn failed(&self) -> Vec<&'static str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.condition).collect()
    }
}

/// `C₀ = [βC_p, 0, P_ρ]`.
fn c0(cl: &ClosedLoopResetSystem, beta: &DVector<f64>, p_rho: &DMatrix<f64>) -> DMatrix<f64> {
    let n = cl.n_states();
    let mut c = DMatrix::zeros(cl.n_r, n);
    for i in 0..cl.n_r {
        for j in 0..cl.n_p {
            c[(i, j)] = beta[i] * cl.c_p[j];
        }
    }
    c.view_mut((0, n - cl.n_r), (cl.n_r, cl.n_r)).copy_from(p_rho);
    c
}

/// Checks the four H_β conditions. Definiteness is judged on the
/// unit-diagonal rescaling of each matrix, so `tol` is independent of the
/// state scaling.
pub fn verify_hbeta(
    cl: &ClosedLoopResetSystem,
    cert: &HbetaCertificate,
    tol: f64,
) -> Result<HbetaReport> {
    let n = cl.n_states();
    if cert.p.shape() != (n, n)
        || cert.beta.len() != cl.n_r
        || cert.p_rho.shape() != (cl.n_r, cl.n_r)
    {
        return Err(Error::Dimension(format!(
            "certificate P {:?}, β {}, P_ρ {:?} for {} states with {} reset",
            cert.p.shape(),
            cert.beta.len(),
            cert.p_rho.shape(),
            n,
            cl.n_r
        )));
    }
    let p = &cert.p;
    let scale = p.amax().max(f64::MIN_POSITIVE);
    let asym = (p - p.transpose()).amax() / scale;
    let mut checks = Vec::new();

    let pmin = normalized_sym_extremes(p).0;
    let m1 = if asym > tol { -asym } else { pmin };
    checks.push(ConditionCheck {
        condition: "(i) P positive definite",
        margin: m1,
        passed: asym <= tol && pmin > tol,
    });

    let lyap = cl.a_cl.transpose() * p + p * &cl.a_cl;
    let lmax = normalized_sym_extremes(&lyap).1;
    checks.push(ConditionCheck {
        condition: "(ii) A_cl^T P + P A_cl negative definite",
        margin: -lmax,
        passed: lmax < -tol,
    });

    if cl.n_r > 0 {
        let target = c0(cl, &cert.beta, &cert.p_rho);
        let b0tp = p.rows(n - cl.n_r, cl.n_r).into_owned();
        let dev = (&b0tp - &target).amax();
        checks.push(ConditionCheck {
            condition: "(iii) B0^T P = C0",
            margin: -dev,
            passed: dev <= tol,
        });

        let ar = cl.reset_block();
        let jump = ar.transpose() * &cert.p_rho * &ar - &cert.p_rho;
        let jscale = cert.p_rho.amax().max(1.0);
        let jmax = sym_max_eig(&jump) / jscale;
        checks.push(ConditionCheck {
            condition: "(iv) A_rho^T P_rho A_rho - P_rho negative semidefinite",
            margin: -jmax,
            passed: jmax <= tol,
        });

        let (prmin, _) = normalized_sym_extremes(&cert.p_rho);
        checks.push(ConditionCheck {
            condition: "P_rho positive definite",
            margin: prmin,
            passed: prmin > tol,
        });
    }
    Ok(HbetaReport {
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}

/// Searches for an H_β certificate.
///
/// `P` is restricted to the affine set where its reset rows equal
/// `[βC_p, 0, P_ρ]` with `P_ρ` diagonal (so the jump condition holds for any
/// `|γ| ≤ 1`). The remaining conditions form a linear matrix inequality in
/// the free entries of `P`, `β` and `P_ρ`, solved by a log-barrier Newton
/// method on a diagonally balanced realization. Restarts use initial `β`
/// drawn from a generator seeded with `seed`. `None` means that no
/// certificate was found, not that none exists.
pub fn search_hbeta(
    cl: &ClosedLoopResetSystem,
    seed: u64,
    max_iters: usize,
) -> Option<HbetaCertificate> {
    const TOL: f64 = 1e-8;
    if !is_hurwitz(&cl.a_cl).ok()? {
        return None;
    }
    let n = cl.n_states();
    if cl.n_r == 0 {
        let p = lyapunov(&cl.a_cl, &DMatrix::identity(n, n)).ok()?;
        let cert = HbetaCertificate {
            beta: DVector::zeros(0),
            p,
            p_rho: DMatrix::zeros(0, 0),
        };
        return verify_hbeta(cl, &cert, TOL).ok()?.passed.then_some(cert);
    }
    if cl.reset_diag.iter().any(|g| g.abs() > 1.0) {
        return None;
    }

    let pinned: Vec<usize> = (n - cl.n_r..n).collect();
    let t = balance_diagonal(&cl.a_cl, &pinned);
    let tinv = t.map(|v| 1.0 / v);
    let a_bal = DMatrix::from_diagonal(&tinv) * &cl.a_cl * DMatrix::from_diagonal(&t);
    let cp_bal = DVector::from_fn(cl.n_p, |i, _| cl.c_p[i] * t[i]);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<f64> = std::iter::once(0.0)
        .chain((0..3).map(|_| rng.random_range(-10.0..10.0)))
        .collect();
    let found: Vec<Option<HbetaCertificate>> = starts
        .par_iter()
        .map(|&b0| {
            let (beta, p_bal, p_rho) =
                barrier_lmi(&a_bal, &cp_bal, cl.n_p, cl.n_r, b0, max_iters)?;
            // back to the original coordinates: P = T⁻¹ P̃ T⁻¹
            let mut p = DMatrix::from_fn(n, n, |i, j| p_bal[(i, j)] * tinv[i] * tinv[j]);
            let row = c0(cl, &beta, &p_rho);
            for i in 0..cl.n_r {
                for j in 0..n {
                    p[(n - cl.n_r + i, j)] = row[(i, j)];
                    p[(j, n - cl.n_r + i)] = row[(i, j)];
                }
            }
            let cert = HbetaCertificate { beta, p, p_rho };
            verify_hbeta(cl, &cert, TOL).ok()?.passed.then_some(cert)
        })
        .collect();
    found.into_iter().flatten().next()
}

/// Symmetric basis matrices of the free parameters: upper-triangular
/// entries of the non-reset block, then `β`, then the diagonal of `P_ρ`.
fn lmi_basis(n: usize, cp: &DVector<f64>, n_p: usize, n_r: usize) -> Vec<DMatrix<f64>> {
    let m = n - n_r;
    let mut out = Vec::new();
    for i in 0..m {
        for j in i..m {
            let mut e = DMatrix::zeros(n, n);
            e[(i, j)] = 1.0;
            e[(j, i)] = 1.0;
            out.push(e);
        }
    }
    for k in 0..n_r {
        let mut e = DMatrix::zeros(n, n);
        for j in 0..n_p {
            e[(m + k, j)] = cp[j];
            e[(j, m + k)] = cp[j];
        }
        out.push(e);
    }
    for k in 0..n_r {
        let mut e = DMatrix::zeros(n, n);
        e[(m + k, m + k)] = 1.0;
        out.push(e);
    }
    out
}

fn chol_inverse(m: &DMatrix<f64>) -> Option<(DMatrix<f64>, f64)> {
    let ch = m.clone().cholesky()?;
    let logdet = 2.0 * ch.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Some((ch.inverse(), logdet))
}

/// Minimizes `t` subject to `AᵀP + PA ≺ tI`, `P ≻ 0`, `tr P < T` and
/// returns `(β, P, P_ρ)` as soon as `t < 0` with margin.
#[allow(clippy::type_complexity)]
fn barrier_lmi(
    a: &DMatrix<f64>,
    cp: &DVector<f64>,
    n_p: usize,
    n_r: usize,
    beta0: f64,
    max_iters: usize,
) -> Option<(DVector<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    let m = n - n_r;
    let basis = lmi_basis(n, cp, n_p, n_r);
    let nz = basis.len();
    let lyap: Vec<DMatrix<f64>> = basis.iter().map(|e| a.transpose() * e + e * a).collect();
    let traces: Vec<f64> = basis.iter().map(|e| e.trace()).collect();
    let assemble = |z: &[f64], mats: &[DMatrix<f64>]| {
        let mut out = DMatrix::zeros(n, n);
        for (zi, e) in z.iter().zip(mats) {
            if *zi != 0.0 {
                out += e * *zi;
            }
        }
        out
    };

    // strictly feasible start: P = [[cI, q], [qᵀ, I]]
    let q2 = beta0 * beta0 * cp.norm_squared();
    let c = 1.0 + 2.0 * q2;
    let mut z = vec![0.0; nz];
    let mut idx = 0;
    for i in 0..m {
        for j in i..m {
            if i == j {
                z[idx] = c;
            }
            idx += 1;
        }
    }
    for k in 0..n_r {
        z[idx + k] = beta0;
        z[idx + n_r + k] = 1.0;
    }
    let p0 = assemble(&z, &basis);
    let cap = 2.0 * p0.trace();
    let m0 = assemble(&z, &lyap);
    let mut t = sym_max_eig(&m0).abs() + sym_max_eig(&m0) + 1.0;

    let phi = |z: &[f64], t: f64, tau: f64| -> Option<f64> {
        let p = assemble(z, &basis);
        let mm = assemble(z, &lyap);
        let slack = cap - p.trace();
        if slack <= 0.0 {
            return None;
        }
        let f1 = DMatrix::identity(n, n) * t - mm;
        let (_, l1) = chol_inverse(&f1)?;
        let (_, l2) = chol_inverse(&p)?;
        Some(tau * t - l1 - l2 - slack.ln())
    };

    let nv = nz + 1;
    let mut tau = 1.0 / t.abs().max(1e-3);
    let mut iters = 0;
    while iters < max_iters {
        // centering
        for _ in 0..100 {
            iters += 1;
            let p = assemble(&z, &basis);
            let mm = assemble(&z, &lyap);
            let slack = cap - p.trace();
            let f1 = DMatrix::identity(n, n) * t - &mm;
            let (w1, _) = chol_inverse(&f1)?;
            let (w2, _) = chol_inverse(&p)?;

            let x1: Vec<DMatrix<f64>> = lyap.iter().map(|g| &w1 * g).collect();
            let x2: Vec<DMatrix<f64>> = basis.iter().map(|e| &w2 * e).collect();
            let mut g = DVector::zeros(nv);
            for a_ in 0..nz {
                g[a_] = x1[a_].trace() - x2[a_].trace() + traces[a_] / slack;
            }
            g[nz] = tau - w1.trace();

            let nn = n * n;
            let mut v1 = DMatrix::zeros(nn, nv);
            let mut v1t = DMatrix::zeros(nn, nv);
            let mut v2 = DMatrix::zeros(nn, nz);
            let mut v2t = DMatrix::zeros(nn, nz);
            for a_ in 0..nz {
                v1.column_mut(a_).copy_from_slice(x1[a_].as_slice());
                v1t.column_mut(a_).copy_from_slice(x1[a_].transpose().as_slice());
                v2.column_mut(a_).copy_from_slice(x2[a_].as_slice());
                v2t.column_mut(a_).copy_from_slice(x2[a_].transpose().as_slice());
            }
            // t enters the first barrier with derivative +I, the z's with −G
            let neg_w1 = -&w1;
            v1.column_mut(nz).copy_from_slice(neg_w1.as_slice());
            v1t.column_mut(nz).copy_from_slice(neg_w1.transpose().as_slice());
            let mut h = v1.transpose() * &v1t;
            let h2 = v2.transpose() * &v2t;
            for i in 0..nz {
                for j in 0..nz {
                    h[(i, j)] += h2[(i, j)] + traces[i] * traces[j] / (slack * slack);
                }
            }
            let h = (&h + h.transpose()) * 0.5;
            let mut reg = 0.0;
            let step = loop {
                let mut hr = h.clone();
                for i in 0..nv {
                    hr[(i, i)] += reg * h[(i, i)].abs().max(1e-300);
                }
                if let Some(ch) = hr.cholesky() {
                    break ch.solve(&(-&g));
                }
                reg = if reg == 0.0 { 1e-12 } else { reg * 100.0 };
                if reg > 1.0 {
                    return None;
                }
            };
            let decrement = -g.dot(&step);
            if decrement / 2.0 < 1e-9 {
                break;
            }
            let f0 = phi(&z, t, tau)?;
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let zn: Vec<f64> = (0..nz).map(|i| z[i] + alpha * step[i]).collect();
                let tn = t + alpha * step[nz];
                if let Some(fv) = phi(&zn, tn, tau) {
                    if fv <= f0 - 0.25 * alpha * decrement {
                        z = zn;
                        t = tn;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
            if t < 0.0 {
                let mm = assemble(&z, &lyap);
                let p = assemble(&z, &basis);
                let (_, lmax) = normalized_sym_extremes(&mm);
                let (pmin, _) = normalized_sym_extremes(&p);
                if lmax < -1e-6 && pmin > 1e-9 {
                    let beta = DVector::from_fn(n_r, |k, _| z[nz - 2 * n_r + k]);
                    let p_rho =
                        DMatrix::from_diagonal(&DVector::from_fn(n_r, |k, _| z[nz - n_r + k]));
                    return Some((beta, p, p_rho));
                }
            }
            if iters >= max_iters {
                return None;
            }
        }
        tau *= 8.0;
        if tau > 1e14 {
            return None;
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elements::{make_fore, make_sosre, pi_controller, tamed_derivative, Controller};
    use approx::assert_relative_eq;

    fn plant() -> StateSpaceSystem {
        StateSpaceSystem::biquad(&[3.038e4], &[243.3, 0.7413, 1.0])
            .unwrap()
            .labelled("plant")
    }

    /// Plant 1/(s+1) with a reset integrator-like lag feeding it.
    fn toy(gamma: f64) -> ClosedLoopResetSystem {
        let p = StateSpaceSystem::biquad(&[1.0], &[1.0, 1.0]).unwrap();
        let lag = make_fore(2.0, 2.0, 100.0, gamma).unwrap().lag;
        let ctrl = Controller {
            name: "toy".into(),
            lag: Some(lag),
            lead: StateSpaceSystem::gain(3.0),
            pi: StateSpaceSystem::gain(1.0),
            tamed_derivative: StateSpaceSystem::gain(1.0),
        };
        build_closed_loop(&p, &ctrl).unwrap()
    }

    #[test]
    fn ordering_and_dimensions() {
        let lag = make_sosre(20.0, 1.0, 0.2).unwrap();
        let ctrl = Controller::cglp(
            "s",
            crate::elements::CgLp {
                lag,
                lead: StateSpaceSystem::gain(1.0),
            },
            pi_controller(1.0, 10.0).unwrap(),
            tamed_derivative(100.0, 1000.0).unwrap(),
        );
        let cl = build_closed_loop(&plant(), &ctrl).unwrap();
        assert_eq!((cl.n_p, cl.n_nr, cl.n_r), (2, 3, 1));
        assert_eq!(cl.reset_diag[cl.n_states() - 1], 0.2);
        assert_eq!(cl.labels[cl.n_states() - 1], "reset");
        assert_eq!(cl.labels[0], "plant");
        // the γ = 1 variant keeps the bookkeeping
        let one = cl.with_gamma(1.0);
        assert_eq!(one.n_r, 1);
    }

    #[test]
    fn closed_loop_matches_transfer_function() {
        // T = L/(1+L) evaluated independently
        let ctrl = Controller::pid(
            "pid",
            StateSpaceSystem::gain(1.0),
            pi_controller(0.01, 5.0).unwrap(),
            tamed_derivative(20.0, 200.0).unwrap(),
        );
        let cl = build_closed_loop(&plant(), &ctrl).unwrap();
        assert_eq!(cl.n_r, 0);
        let sys = StateSpaceSystem::new(
            cl.a_cl.clone(),
            DMatrix::from_column_slice(cl.n_states(), 1, cl.b_r.as_slice()),
            DMatrix::from_row_slice(1, cl.n_states(), cl.y_row.as_slice()),
            DMatrix::from_element(1, 1, cl.y_ff),
        )
        .unwrap();
        let l = ctrl.base_linear().unwrap().series(&plant()).unwrap();
        for w in [0.3, 7.0, 90.0] {
            let lw = l.response(w).unwrap();
            let t = lw / (lw + 1.0);
            assert!((sys.response(w).unwrap() - t).norm() < 1e-9 * t.norm());
        }
    }

    #[test]
    fn lemma1_scalar_fore() {
        let a = 3.0;
        for g in [0.0, 0.2, 0.6, 0.9] {
            let rs = make_fore(a, a, 100.0, g).unwrap().lag;
            let rep = lemma1_check(&rs, 100.0, 1000);
            assert!(rep.holds);
            assert_relative_eq!(rep.worst_radius, g, epsilon = 1e-12);
        }
        let rs = make_fore(a, a, 100.0, -1.0).unwrap().lag;
        let rep = lemma1_check(&rs, 100.0, 1000);
        assert!(rep.holds, "δ→0 endpoint accepted non-strictly");
        assert!(rep.margin.abs() < 1e-12);
    }

    #[test]
    fn lemma1_identity_reset_is_marginal() {
        let rs = make_sosre(10.0, 0.7, 1.0).unwrap();
        let rep = lemma1_check(&rs, 100.0, 1000);
        assert!(rep.holds);
        assert_eq!(rep.worst_radius, 1.0);
        assert_eq!(rep.worst_delta, 0.0);
    }

    #[test]
    fn verify_rejects_asymmetric_p() {
        let cl = toy(0.0);
        let mut p = DMatrix::identity(2, 2);
        p[(0, 1)] = 0.5;
        let cert = HbetaCertificate {
            beta: DVector::zeros(1),
            p,
            p_rho: DMatrix::identity(1, 1),
        };
        let rep = verify_hbeta(&cl, &cert, 1e-8).unwrap();
        assert!(!rep.passed);
        assert!(rep.failed().iter().any(|c| c.starts_with("(i)")));
    }

    #[test]
    fn verify_plain_lyapunov_without_reset() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, -3.0, -0.5]);
        let cl = ClosedLoopResetSystem {
            a_cl: a.clone(),
            b_r: DVector::zeros(2),
            e_row: DVector::zeros(2),
            e_ff: 1.0,
            u_row: DVector::zeros(2),
            u_ff: 0.0,
            y_row: DVector::zeros(2),
            y_ff: 0.0,
            c_p: DVector::from_vec(vec![1.0, 0.0]),
            reset_diag: DVector::from_element(2, 1.0),
            n_p: 2,
            n_nr: 0,
            n_r: 0,
            labels: vec!["plant".into(); 2],
        };
        let p = lyapunov(&a, &DMatrix::identity(2, 2)).unwrap();
        let cert = HbetaCertificate {
            beta: DVector::zeros(0),
            p,
            p_rho: DMatrix::zeros(0, 0),
        };
        let rep = verify_hbeta(&cl, &cert, 1e-8).unwrap();
        assert!(rep.passed);
        assert_eq!(rep.checks.len(), 2);
        assert!(search_hbeta(&cl, 1, 200).is_some());
    }

    #[test]
    fn toy_certificate_round_trip() {
        let cl = toy(0.0);
        assert!(is_hurwitz(&cl.a_cl).unwrap());
        let cert = search_hbeta(&cl, 7, 500).expect("certificate");
        assert!(verify_hbeta(&cl, &cert, 1e-8).unwrap().passed);
        let one = search_hbeta(&cl.with_gamma(1.0), 7, 500);
        assert!(one.is_some());
    }

    #[test]
    fn unstable_loop_has_no_certificate() {
        let mut cl = toy(0.0);
        cl.a_cl[(0, 0)] = 50.0;
        assert!(search_hbeta(&cl, 3, 100).is_none());
    }
}

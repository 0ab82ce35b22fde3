//! Dense linear-algebra helpers on top of `nalgebra`: matrix exponential,
//! eigenvalue utilities, diagonal balancing and small Lyapunov solves.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

// Degree-13 diagonal Padé coefficients for exp(x).
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `exp(A)` by scaling and squaring around a degree-13 Padé approximant.
///
/// Panics if `a` is not square; use [`matrix_exponential`] for the checked
/// variant.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(a.is_square(), "expm of a non-square matrix");
    let n = a.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    // e^A = D e^{D⁻¹AD} D⁻¹ with a power-of-two diagonal D, so exact
    let t = balance_diagonal(a, &[]);
    let bal = DMatrix::from_fn(n, n, |i, j| a[(i, j)] * t[j] / t[i]);
    let e = expm_pade(&bal);
    DMatrix::from_fn(n, n, |i, j| e[(i, j)] * t[i] / t[j])
}

fn expm_pade(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let nrm = norm1(a);
    let s = if nrm > THETA13 {
        (nrm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let a = a * 2f64.powi(-s);
    let b = &PADE13;
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
        + &a6 * b[7]
        + &a4 * b[5]
        + &a2 * b[3]
        + &id * b[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + &id * b[0];

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .expect("Pade denominator is nonsingular for scaled arguments");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// `exp(A t)` with input validation.
pub fn matrix_exponential(a: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::NonSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    if !t.is_finite() || t < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "exponential time must be finite and non-negative, got {t}"
        )));
    }
    Ok(expm(&(a * t)))
}

fn balanced(a: &DMatrix<f64>) -> DMatrix<f64> {
    let t = balance_diagonal(a, &[]);
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * t[j] / t[i])
}

/// Eigenvalues of a real square matrix, sorted by real part then imaginary part.
/// The matrix is diagonally balanced first.
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    if !a.is_square() {
        return Err(Error::NonSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    let ev = balanced(a).complex_eigenvalues();
    let mut out: Vec<Complex64> = ev.iter().map(|z| Complex64::new(z.re, z.im)).collect();
    out.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    Ok(out)
}

/// True iff every eigenvalue has a strictly negative real part.
pub fn is_hurwitz(a: &DMatrix<f64>) -> Result<bool> {
    Ok(eigenvalues(a)?.iter().all(|z| z.re < 0.0))
}

pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    balanced(a)
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Largest eigenvalue of the symmetric part of `m`.
pub fn sym_max_eig(m: &DMatrix<f64>) -> f64 {
    let s = (m + m.transpose()) * 0.5;
    s.symmetric_eigenvalues().max()
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn sym_min_eig(m: &DMatrix<f64>) -> f64 {
    let s = (m + m.transpose()) * 0.5;
    s.symmetric_eigenvalues().min()
}

/// Extreme eigenvalues of the unit-diagonal rescaling `D^-1/2 S D^-1/2` of a
/// symmetric matrix `S`, where `D = diag(|S_ii|)`. Definiteness is invariant
/// under this congruence, while the spectrum becomes independent of the
/// state scaling. Returns `(min, max)`; zero diagonal entries are left
/// unscaled.
pub fn normalized_sym_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    let mut s = (m + m.transpose()) * 0.5;
    let n = s.nrows();
    if n == 0 {
        return (0.0, 0.0);
    }
    let d: Vec<f64> = (0..n)
        .map(|i| {
            let v = s[(i, i)].abs();
            if v > 0.0 {
                1.0 / v.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    for i in 0..n {
        for j in 0..n {
            s[(i, j)] *= d[i] * d[j];
        }
    }
    let ev = s.symmetric_eigenvalues();
    (ev.min(), ev.max())
}

/// Diagonal similarity scaling `T` (returned as its diagonal) such that
/// `T^-1 A T` has roughly equal row and column norms. Entries listed in
/// `pinned` keep unit scale.
pub fn balance_diagonal(a: &DMatrix<f64>, pinned: &[usize]) -> DVector<f64> {
    let n = a.nrows();
    let mut t = DVector::from_element(n, 1.0);
    let mut m = a.clone();
    for _ in 0..100 {
        let mut changed = false;
        for i in 0..n {
            if pinned.contains(&i) {
                continue;
            }
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += m[(j, i)].abs();
                    r += m[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let mut f = 1.0;
            let g = r / 2.0;
            let mut cc = c;
            while cc < g {
                f *= 2.0;
                cc *= 4.0;
            }
            let g = r * 2.0;
            while cc >= g {
                f /= 2.0;
                cc /= 4.0;
            }
            if (cc + r / f) < 0.95 * (c + r) && f != 1.0 {
                changed = true;
                t[i] *= f;
                for j in 0..n {
                    m[(i, j)] /= f;
                    m[(j, i)] *= f;
                }
            }
        }
        if !changed {
            break;
        }
    }
    t
}

/// Inverse of a real square matrix, or `None` when it is numerically
/// singular after row and column equilibration.
pub fn inverse_checked(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = m.nrows();
    if !m.is_square() {
        return None;
    }
    if n == 0 {
        return Some(DMatrix::zeros(0, 0));
    }
    let r: Vec<f64> = (0..n).map(|i| m.row(i).amax()).collect();
    if r.iter().any(|v| *v == 0.0 || !v.is_finite()) {
        return None;
    }
    let mut s = m.clone();
    for (i, ri) in r.iter().enumerate() {
        s.row_mut(i).scale_mut(1.0 / ri);
    }
    let c: Vec<f64> = (0..n).map(|j| s.column(j).amax()).collect();
    if c.contains(&0.0) {
        return None;
    }
    for (j, cj) in c.iter().enumerate() {
        s.column_mut(j).scale_mut(1.0 / cj);
    }
    let lu = s.lu();
    let u = lu.u();
    let min_pivot = (0..n).map(|i| u[(i, i)].abs()).fold(f64::INFINITY, f64::min);
    if min_pivot <= f64::EPSILON * n as f64 {
        return None;
    }
    // m = R⁻¹ S C⁻¹  ⇒  m⁻¹ = C S⁻¹ R
    let mut inv = lu.try_inverse()?;
    for i in 0..n {
        for j in 0..n {
            inv[(i, j)] *= 1.0 / c[i] / r[j];
        }
    }
    inv.iter().all(|v| v.is_finite()).then_some(inv)
}

/// Solves `Aᵀ X + X A = -Q` for symmetric `X` through the Kronecker form.
/// Intended for small systems (tens of states).
pub fn lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if !a.is_square() || q.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "lyapunov: A is {:?}, Q is {:?}",
            a.shape(),
            q.shape()
        )));
    }
    let nn = n * n;
    let mut k = DMatrix::<f64>::zeros(nn, nn);
    // vec(AᵀX + XA) = (I ⊗ Aᵀ + Aᵀ ⊗ I) vec(X), column-major vec.
    for i in 0..n {
        for j in 0..n {
            let row = i + j * n;
            for l in 0..n {
                // (Aᵀ X)_{ij} = Σ_l A_{li} X_{lj}
                k[(row, l + j * n)] += a[(l, i)];
                // (X A)_{ij} = Σ_l X_{il} A_{lj}
                k[(row, i + l * n)] += a[(l, j)];
            }
        }
    }
    let rhs = DVector::from_iterator(nn, q.iter().map(|v| -v));
    let sol = k
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidParameter("lyapunov operator is singular".into()))?;
    let x = DMatrix::from_column_slice(n, n, sol.as_slice());
    Ok((&x + x.transpose()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn expm_zero_is_identity() {
        let e = expm(&DMatrix::zeros(3, 3));
        assert_eq!(e, DMatrix::identity(3, 3));
    }

    #[test]
    fn expm_scalar() {
        let e = matrix_exponential(&DMatrix::from_element(1, 1, -1.0), 1.0).unwrap();
        assert_relative_eq!(e[(0, 0)], (-1.0f64).exp(), max_relative = 1e-14);
    }

    #[test]
    fn expm_rotation() {
        let w = 3.0;
        let a = DMatrix::from_row_slice(2, 2, &[0.0, w, -w, 0.0]);
        let e = matrix_exponential(&a, 0.7).unwrap();
        assert_relative_eq!(e[(0, 0)], (w * 0.7).cos(), epsilon = 1e-13);
        assert_relative_eq!(e[(0, 1)], (w * 0.7).sin(), epsilon = 1e-13);
    }

    #[test]
    fn expm_rejects_bad_input() {
        assert!(matches!(
            matrix_exponential(&DMatrix::zeros(2, 3), 1.0),
            Err(Error::NonSquare { .. })
        ));
        assert!(matrix_exponential(&DMatrix::zeros(2, 2), -1.0).is_err());
    }

    #[test]
    fn eigen_diag_and_oscillator() {
        let ev = eigenvalues(&DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0]))).unwrap();
        assert_relative_eq!(ev[0].re, -2.0, epsilon = 1e-12);
        assert_relative_eq!(ev[1].re, -1.0, epsilon = 1e-12);
        assert!(is_hurwitz(&DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0]))).unwrap());

        let w: f64 = 5.0;
        let osc = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -w * w, 0.0]);
        let ev = eigenvalues(&osc).unwrap();
        assert!(ev.iter().all(|z| z.re.abs() < 1e-12));
        assert_relative_eq!(ev[0].im.abs(), w, epsilon = 1e-10);
        assert!(!is_hurwitz(&osc).unwrap());
    }

    #[test]
    fn checked_inverse() {
        let a = DMatrix::from_row_slice(3, 3, &[1e8, 0.0, 1.0, 2e7, 1.0, 0.0, 0.0, 1e-3, 2.0]);
        let inv = inverse_checked(&a).unwrap();
        let id = &a * &inv;
        assert!((id - DMatrix::identity(3, 3)).amax() < 1e-9);
        let sing = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(inverse_checked(&sing).is_none());
    }

    #[test]
    fn lyapunov_scalar_and_residual() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.0, -3.0]);
        let q = DMatrix::identity(2, 2);
        let x = lyapunov(&a, &q).unwrap();
        let r = a.transpose() * &x + &x * &a + &q;
        assert!(r.amax() < 1e-12);
        assert!(sym_min_eig(&x) > 0.0);
    }

    #[test]
    fn balancing_keeps_similarity() {
        let a = DMatrix::from_row_slice(3, 3, &[-1.0, 1e6, 0.0, 1e-6, -2.0, 1e4, 0.0, 1e-4, -3.0]);
        let t = balance_diagonal(&a, &[0]);
        assert_eq!(t[0], 1.0);
        let tm = DMatrix::from_diagonal(&t);
        let ti = DMatrix::from_diagonal(&t.map(|v| 1.0 / v));
        let b = &ti * &a * &tm;
        assert!(b.amax() < 1e3);
        let e1 = eigenvalues(&a).unwrap();
        let e2 = eigenvalues(&b).unwrap();
        for (x, y) in e1.iter().zip(&e2) {
            assert_relative_eq!(x.re, y.re, max_relative = 1e-9);
        }
    }
}

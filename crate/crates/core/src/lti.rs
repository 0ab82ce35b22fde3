//! Continuous-time linear systems: state-space realizations, frequency
//! response and block interconnection.
//!
//! All frequencies are in rad/s.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Continuous-time linear system `ẋ = A x + B u`, `y = C x + D u`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
    labels: Vec<String>,
}

impl StateSpaceSystem {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
    ) -> Result<Self> {
        let n = a.nrows();
        let labels = vec![String::new(); n];
        Self::with_labels(a, b, c, d, labels)
    }

    /// Like [`StateSpaceSystem::new`], tagging each state with a role label.
    pub fn with_labels(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        labels: Vec<String>,
    ) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::NonSquare {
                rows: a.nrows(),
                cols: a.ncols(),
            });
        }
        let (p, m) = d.shape();
        if b.nrows() != n || b.ncols() != m || c.nrows() != p || c.ncols() != n {
            return Err(Error::Dimension(format!(
                "A {:?}, B {:?}, C {:?}, D {:?}",
                a.shape(),
                b.shape(),
                c.shape(),
                d.shape()
            )));
        }
        if labels.len() != n {
            return Err(Error::Dimension(format!(
                "{} labels for {} states",
                labels.len(),
                n
            )));
        }
        Ok(Self { a, b, c, d, labels })
    }

    /// Static gain `k` (no states, one input, one output).
    pub fn gain(k: f64) -> Self {
        Self {
            a: DMatrix::zeros(0, 0),
            b: DMatrix::zeros(0, 1),
            c: DMatrix::zeros(1, 0),
            d: DMatrix::from_element(1, 1, k),
            labels: Vec::new(),
        }
    }

    /// Single-input single-output system with at most two states realizing
    /// `num(s) / den(s)`; coefficients are in ascending powers of `s`.
    pub fn biquad(num: &[f64], den: &[f64]) -> Result<Self> {
        let den = trim(den);
        let num = trim(num);
        if den.is_empty() || den.len() > 3 {
            return Err(Error::InvalidParameter(format!(
                "denominator degree must be 0..=2, got {:?}",
                den
            )));
        }
        if num.len() > den.len() {
            return Err(Error::InvalidParameter("improper section".into()));
        }
        let lead = den[den.len() - 1];
        let dn: Vec<f64> = den.iter().map(|v| v / lead).collect();
        let mut nn: Vec<f64> = num.iter().map(|v| v / lead).collect();
        nn.resize(dn.len(), 0.0);
        let order = dn.len() - 1;
        let feedthrough = nn[order];
        let rem: Vec<f64> = (0..order).map(|k| nn[k] - feedthrough * dn[k]).collect();
        let (a, b, c) = match order {
            0 => (
                DMatrix::zeros(0, 0),
                DMatrix::zeros(0, 1),
                DMatrix::zeros(1, 0),
            ),
            1 => (
                DMatrix::from_element(1, 1, -dn[0]),
                DMatrix::from_element(1, 1, rem[0]),
                DMatrix::from_element(1, 1, 1.0),
            ),
            _ => (
                // observer canonical form
                DMatrix::from_row_slice(2, 2, &[-dn[1], 1.0, -dn[0], 0.0]),
                DMatrix::from_row_slice(2, 1, &[rem[1], rem[0]]),
                DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            ),
        };
        Self::new(a, b, c, DMatrix::from_element(1, 1, feedthrough))
    }

    /// `1/s`.
    pub fn integrator() -> Self {
        Self::biquad(&[1.0], &[0.0, 1.0]).expect("valid integrator")
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }
    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }
    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn is_siso(&self) -> bool {
        self.n_inputs() == 1 && self.n_outputs() == 1
    }

    /// Replace all state labels with `label`.
    pub fn labelled(mut self, label: &str) -> Self {
        self.labels = vec![label.to_string(); self.n_states()];
        self
    }

    /// Multiply the output by `k`.
    pub fn scaled(mut self, k: f64) -> Self {
        self.c *= k;
        self.d *= k;
        self
    }

    /// Transfer matrix `C (sI - A)^-1 B + D` at a complex point `s`.
    pub fn eval(&self, s: Complex64) -> Result<DMatrix<Complex64>> {
        let n = self.n_states();
        let dc = self.d.map(|v| Complex64::new(v, 0.0));
        if n == 0 {
            return Ok(dc);
        }
        let ac = self.a.map(|v| Complex64::new(-v, 0.0));
        let mut m = ac;
        for i in 0..n {
            m[(i, i)] += s;
        }
        let x = solve_checked(m, &self.b.map(|v| Complex64::new(v, 0.0)))
            .ok_or(Error::PoleOnAxis { omega: s.im })?;
        Ok(self.c.map(|v| Complex64::new(v, 0.0)) * x + dc)
    }

    /// Frequency response `C (jωI - A)^-1 B + D`.
    pub fn freq_response(&self, omega: f64) -> Result<DMatrix<Complex64>> {
        self.eval(Complex64::new(0.0, omega))
    }

    /// Scalar frequency response of a single-input single-output system.
    pub fn response(&self, omega: f64) -> Result<Complex64> {
        if !self.is_siso() {
            return Err(Error::Dimension(format!(
                "response() needs a SISO system, got {}x{}",
                self.n_outputs(),
                self.n_inputs()
            )));
        }
        Ok(self.freq_response(omega)?[(0, 0)])
    }

    /// `self` followed by `next`: the output of `self` drives `next`.
    pub fn series(&self, next: &StateSpaceSystem) -> Result<StateSpaceSystem> {
        if self.n_outputs() != next.n_inputs() {
            return Err(Error::Dimension(format!(
                "series: {} outputs feed {} inputs",
                self.n_outputs(),
                next.n_inputs()
            )));
        }
        let (n1, n2) = (self.n_states(), next.n_states());
        let n = n1 + n2;
        let mut a = DMatrix::zeros(n, n);
        a.view_mut((0, 0), (n1, n1)).copy_from(&self.a);
        a.view_mut((n1, n1), (n2, n2)).copy_from(&next.a);
        a.view_mut((n1, 0), (n2, n1)).copy_from(&(&next.b * &self.c));
        let mut b = DMatrix::zeros(n, self.n_inputs());
        b.view_mut((0, 0), (n1, self.n_inputs())).copy_from(&self.b);
        b.view_mut((n1, 0), (n2, self.n_inputs()))
            .copy_from(&(&next.b * &self.d));
        let mut c = DMatrix::zeros(next.n_outputs(), n);
        c.view_mut((0, 0), (next.n_outputs(), n1))
            .copy_from(&(&next.d * &self.c));
        c.view_mut((0, n1), (next.n_outputs(), n2)).copy_from(&next.c);
        let d = &next.d * &self.d;
        let mut labels = self.labels.clone();
        labels.extend(next.labels.iter().cloned());
        StateSpaceSystem::with_labels(a, b, c, d, labels)
    }

    /// Sum of the outputs of `self` and `other` driven by the same input.
    pub fn parallel(&self, other: &StateSpaceSystem) -> Result<StateSpaceSystem> {
        if self.n_inputs() != other.n_inputs() || self.n_outputs() != other.n_outputs() {
            return Err(Error::Dimension("parallel: io dimensions differ".into()));
        }
        let (n1, n2) = (self.n_states(), other.n_states());
        let n = n1 + n2;
        let mut a = DMatrix::zeros(n, n);
        a.view_mut((0, 0), (n1, n1)).copy_from(&self.a);
        a.view_mut((n1, n1), (n2, n2)).copy_from(&other.a);
        let mut b = DMatrix::zeros(n, self.n_inputs());
        b.view_mut((0, 0), (n1, self.n_inputs())).copy_from(&self.b);
        b.view_mut((n1, 0), (n2, self.n_inputs())).copy_from(&other.b);
        let mut c = DMatrix::zeros(self.n_outputs(), n);
        c.view_mut((0, 0), (self.n_outputs(), n1)).copy_from(&self.c);
        c.view_mut((0, n1), (self.n_outputs(), n2)).copy_from(&other.c);
        let d = &self.d + &other.d;
        let mut labels = self.labels.clone();
        labels.extend(other.labels.iter().cloned());
        StateSpaceSystem::with_labels(a, b, c, d, labels)
    }

    /// Series connection of a list of blocks, first element first.
    pub fn chain(blocks: &[&StateSpaceSystem]) -> Result<StateSpaceSystem> {
        let (first, rest) = blocks
            .split_first()
            .ok_or_else(|| Error::Dimension("empty chain".into()))?;
        rest.iter()
            .try_fold((*first).clone(), |acc, blk| acc.series(blk))
    }

    /// Output row vector and feedthrough of output `k` as owned values.
    pub fn output_row(&self, k: usize) -> (DVector<f64>, f64) {
        (
            self.c.row(k).transpose(),
            if self.n_inputs() > 0 { self.d[(k, 0)] } else { 0.0 },
        )
    }
}

fn trim(p: &[f64]) -> Vec<f64> {
    let mut v = p.to_vec();
    while v.len() > 1 && v[v.len() - 1] == 0.0 {
        v.pop();
    }
    v
}

/// LU solve that reports numerically singular systems. Rows and columns are
/// equilibrated before the pivot test so that strongly coupled cascades with
/// widely spread corner frequencies are not mistaken for singular ones.
pub(crate) fn solve_checked(
    m: DMatrix<Complex64>,
    rhs: &DMatrix<Complex64>,
) -> Option<DMatrix<Complex64>> {
    let n = m.nrows();
    let mut m = m;
    let mut rhs = rhs.clone();
    for i in 0..n {
        let r = m.row(i).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if r == 0.0 {
            return None;
        }
        m.row_mut(i).scale_mut(1.0 / r);
        rhs.row_mut(i).scale_mut(1.0 / r);
    }
    let mut col = vec![1.0; n];
    for (j, cs) in col.iter_mut().enumerate() {
        let c = m.column(j).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if c == 0.0 {
            return None;
        }
        *cs = 1.0 / c;
        m.column_mut(j).scale_mut(*cs);
    }
    let lu = m.lu();
    let u = lu.u();
    let min_pivot = (0..n)
        .map(|i| u[(i, i)].norm())
        .fold(f64::INFINITY, f64::min);
    if min_pivot <= f64::EPSILON * n as f64 {
        return None;
    }
    let mut x = lu.solve(&rhs)?;
    for (j, cs) in col.iter().enumerate() {
        x.row_mut(j).scale_mut(*cs);
    }
    x.iter().all(|z| z.is_finite()).then_some(x)
}

/// First- or second-order polynomial factor with positive corner frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Factor {
    /// `s/ω + 1`
    First { corner: f64 },
    /// `(s/ω)² + 2ζ s/ω + 1`
    Second { corner: f64, damping: f64 },
}

impl Factor {
    fn corner(&self) -> f64 {
        match *self {
            Factor::First { corner } | Factor::Second { corner, .. } => corner,
        }
    }

    fn degree(&self) -> usize {
        match self {
            Factor::First { .. } => 1,
            Factor::Second { .. } => 2,
        }
    }

    /// Coefficients in ascending powers of `s`.
    fn coeffs(&self) -> Vec<f64> {
        match *self {
            Factor::First { corner } => vec![1.0, 1.0 / corner],
            Factor::Second { corner, damping } => {
                vec![1.0, 2.0 * damping / corner, 1.0 / (corner * corner)]
            }
        }
    }

    fn eval(&self, s: Complex64) -> Complex64 {
        let c = self.coeffs();
        c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &k| acc * s + k)
    }
}

/// Rational filter in factored form: `gain · Π num_k(s) / Π den_k(s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalFilter {
    pub gain: f64,
    pub numerator: Vec<Factor>,
    pub denominator: Vec<Factor>,
}

impl RationalFilter {
    pub fn new(gain: f64, numerator: Vec<Factor>, denominator: Vec<Factor>) -> Result<Self> {
        for f in numerator.iter().chain(&denominator) {
            if !(f.corner() > 0.0) || !f.corner().is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "corner frequency must be positive, got {}",
                    f.corner()
                )));
            }
            if let Factor::Second { damping, .. } = f {
                if !damping.is_finite() {
                    return Err(Error::InvalidParameter("non-finite damping".into()));
                }
            }
        }
        let deg = |v: &[Factor]| v.iter().map(Factor::degree).sum::<usize>();
        if deg(&numerator) > deg(&denominator) {
            return Err(Error::InvalidParameter("improper rational filter".into()));
        }
        Ok(Self {
            gain,
            numerator,
            denominator,
        })
    }

    /// Evaluate the factored product at `jω`.
    pub fn response(&self, omega: f64) -> Complex64 {
        let s = Complex64::new(0.0, omega);
        let num: Complex64 = self.numerator.iter().map(|f| f.eval(s)).product();
        let den: Complex64 = self.denominator.iter().map(|f| f.eval(s)).product();
        num / den * self.gain
    }

    /// Cascade of proper sections of order at most two, in ascending corner
    /// order of the denominator factors.
    pub fn to_state_space(&self) -> Result<StateSpaceSystem> {
        let sections = pair_sections(&self.numerator, &self.denominator).ok_or_else(|| {
            Error::InvalidParameter("cannot pair factors into proper sections".into())
        })?;
        let mut sys = StateSpaceSystem::gain(self.gain);
        for (n, d) in sections {
            sys = sys.series(&StateSpaceSystem::biquad(&n, &d)?)?;
        }
        Ok(sys)
    }
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Groups factors into proper sections: second-order numerators take
/// second-order denominators (pairs of first-order poles are merged when
/// there are not enough), the first-order numerators fill what is left.
fn pair_sections(num: &[Factor], den: &[Factor]) -> Option<Vec<(Vec<f64>, Vec<f64>)>> {
    let by_corner = |v: &[Factor], deg: usize| {
        let mut out: Vec<Factor> = v.iter().copied().filter(|f| f.degree() == deg).collect();
        out.sort_by(|x, y| x.corner().total_cmp(&y.corner()));
        out
    };
    let (n1, n2) = (by_corner(num, 1), by_corner(num, 2));
    let (d1, d2) = (by_corner(den, 1), by_corner(den, 2));

    // (corner, polynomial) of every denominator section
    let mut seconds: Vec<(f64, Vec<f64>)> = d2.iter().map(|f| (f.corner(), f.coeffs())).collect();
    let mut firsts: Vec<(f64, Vec<f64>)> = d1.iter().map(|f| (f.corner(), f.coeffs())).collect();
    while seconds.len() < n2.len() {
        if firsts.len() < 2 {
            return None;
        }
        let (c1, p1) = firsts.remove(0);
        let (_, p2) = firsts.remove(0);
        seconds.push((c1, poly_mul(&p1, &p2)));
    }
    seconds.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut sections: Vec<(f64, Vec<f64>, Vec<f64>)> = Vec::new();
    let mut free_seconds = Vec::new();
    for (k, (c, d)) in seconds.into_iter().enumerate() {
        if k < n2.len() {
            sections.push((c, n2[k].coeffs(), d));
        } else {
            free_seconds.push((c, d));
        }
    }
    let mut rest = n1.iter();
    for (c, d) in free_seconds {
        let mut n = vec![1.0];
        for _ in 0..2 {
            match rest.next() {
                Some(f) => n = poly_mul(&n, &f.coeffs()),
                None => break,
            }
        }
        sections.push((c, n, d));
    }
    for (c, d) in firsts {
        let n = rest.next().map(Factor::coeffs).unwrap_or_else(|| vec![1.0]);
        sections.push((c, n, d));
    }
    if rest.next().is_some() {
        return None;
    }
    sections.sort_by(|x, y| x.0.total_cmp(&y.0));
    Some(sections.into_iter().map(|(_, n, d)| (n, d)).collect())
}

//! Angular-momentum operators and Wigner small-d rotation algebra.
//!
//! Half-integers are carried as twice their value ([`HalfInt`]). Rows and
//! columns of every matrix built here are ordered `m = j, j-1, ..., -j`, so
//! `J_z` has a descending diagonal.

use std::fmt;

use num_complex::Complex64;

use crate::linalg::{unitary_exp, ComplexMatrix, ZERO};
use crate::{Error, Result};

/// A half-integer stored as twice its value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HalfInt(pub i32);

impl HalfInt {
    pub fn from_twice(twice: i32) -> Self {
        Self(twice)
    }

    pub fn twice(self) -> i32 {
        self.0
    }

    pub fn value(self) -> f64 {
        f64::from(self.0) / 2.0
    }
}

impl std::ops::Add<i32> for HalfInt {
    type Output = HalfInt;
    fn add(self, rhs: i32) -> HalfInt {
        HalfInt(self.0 + 2 * rhs)
    }
}

impl std::ops::Sub<i32> for HalfInt {
    type Output = HalfInt;
    fn sub(self, rhs: i32) -> HalfInt {
        HalfInt(self.0 - 2 * rhs)
    }
}

impl fmt::Display for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 % 2 == 0 {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

/// Spin quantum number `j = twice_j / 2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SpinQuantumNumber {
    twice_j: u32,
}

impl SpinQuantumNumber {
    pub fn from_twice(twice_j: u32) -> Self {
        Self { twice_j }
    }

    pub fn twice(self) -> u32 {
        self.twice_j
    }

    pub fn value(self) -> f64 {
        f64::from(self.twice_j) / 2.0
    }

    pub fn dim(self) -> usize {
        self.twice_j as usize + 1
    }

    /// Magnetic quantum numbers in matrix order, `j` down to `-j`.
    pub fn m_values(self) -> impl Iterator<Item = HalfInt> {
        let tj = self.twice_j as i32;
        (0..=self.twice_j as i32).map(move |k| HalfInt(tj - 2 * k))
    }

    /// Row/column index of `m`, or `None` if `m` is not a projection of `j`.
    pub fn index_of(self, m: HalfInt) -> Option<usize> {
        let tj = self.twice_j as i32;
        if m.0.abs() > tj || (tj - m.0) % 2 != 0 {
            None
        } else {
            Some(((tj - m.0) / 2) as usize)
        }
    }

    pub fn m_at(self, index: usize) -> HalfInt {
        HalfInt(self.twice_j as i32 - 2 * index as i32)
    }

    /// `sqrt((j - m)(j + m + 1))`, the raising coefficient of `|j,m>`.
    pub fn raising_coefficient(self, m: HalfInt) -> f64 {
        let (j, m) = (self.value(), m.value());
        ((j - m) * (j + m + 1.0)).max(0.0).sqrt()
    }

    /// `sqrt((j + m)(j - m + 1))`, the lowering coefficient of `|j,m>`.
    pub fn lowering_coefficient(self, m: HalfInt) -> f64 {
        let (j, m) = (self.value(), m.value());
        ((j + m) * (j - m + 1.0)).max(0.0).sqrt()
    }

    fn ensure_projection(self, m: HalfInt) -> Result<usize> {
        self.index_of(m).ok_or_else(|| {
            Error::Domain(format!("m = {m} is not a projection of j = {}", HalfInt(self.twice_j as i32)))
        })
    }
}

/// `(J_x, J_y, J_z)` in units of `hbar`.
pub fn angular_momentum_ops(j: SpinQuantumNumber) -> (ComplexMatrix, ComplexMatrix, ComplexMatrix) {
    let dim = j.dim();
    // <m+1| J+ |m> sits one row above the diagonal in descending order.
    let raise = |r: usize, c: usize| {
        if c == r + 1 {
            j.raising_coefficient(j.m_at(c))
        } else {
            0.0
        }
    };
    let jx = ComplexMatrix::from_fn(dim, |r, c| {
        Complex64::new(0.5 * (raise(r, c) + raise(c, r)), 0.0)
    });
    let jy = ComplexMatrix::from_fn(dim, |r, c| {
        // (J+ - J-) / 2i
        Complex64::new(0.0, -0.5 * (raise(r, c) - raise(c, r)))
    });
    let jz = ComplexMatrix::from_fn(dim, |r, c| {
        if r == c {
            Complex64::new(j.m_at(r).value(), 0.0)
        } else {
            ZERO
        }
    });
    (jx, jy, jz)
}

/// Real rotation matrix `d^j_{m'm}(beta) = <j,m'| exp(-i J_y beta) |j,m>`.
#[derive(Clone, Debug, PartialEq)]
pub struct WignerDMatrix {
    j: SpinQuantumNumber,
    beta: f64,
    entries: Vec<f64>,
}

impl WignerDMatrix {
    pub fn j(&self) -> SpinQuantumNumber {
        self.j
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn dim(&self) -> usize {
        self.j.dim()
    }

    /// Entry by matrix index.
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.dim() + col]
    }

    /// `d^j_{m'm}`; zero when either label lies outside `[-j, j]`, which is
    /// how the ladder sums treat their boundary terms.
    pub fn element(&self, m_prime: HalfInt, m: HalfInt) -> f64 {
        match (self.j.index_of(m_prime), self.j.index_of(m)) {
            (Some(r), Some(c)) => self.at(r, c),
            _ => 0.0,
        }
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.dim()).map(<[f64]>::to_vec).collect()
    }

    pub fn to_complex(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.dim(), |r, c| Complex64::new(self.at(r, c), 0.0))
    }
}

fn ln_factorial_table(n: usize) -> Vec<f64> {
    let mut table = vec![0.0; n + 1];
    for k in 1..=n {
        table[k] = table[k - 1] + (k as f64).ln();
    }
    table
}

/// `P_k^{(a,b)}(x)` by the three-term recurrence in degree.
fn jacobi(k: usize, a: f64, b: f64, x: f64) -> f64 {
    let mut p_prev = 1.0;
    if k == 0 {
        return p_prev;
    }
    let mut p = (a + 1.0) + (a + b + 2.0) * (x - 1.0) / 2.0;
    for n in 2..=k {
        let n = n as f64;
        let s = 2.0 * n + a + b;
        let c1 = 2.0 * n * (n + a + b) * (s - 2.0);
        let c2 = (s - 1.0) * (s * (s - 2.0) * x + a * a - b * b);
        let c3 = 2.0 * (n + a - 1.0) * (n + b - 1.0) * s;
        let next = (c2 * p - c3 * p_prev) / c1;
        p_prev = p;
        p = next;
    }
    p
}

/// Wigner small-d matrix in Jacobi-polynomial form.
///
/// With `k = min(j+m, j-m, j+m', j-m')` each entry is a binomial prefactor
/// (accumulated as log-factorials) times `sin^a(b/2) cos^b(b/2) P_k^{(a,b)}(cos b)`.
/// The polynomial comes from its three-term recurrence, which stays
/// accurate to rounding for all `j` up to 24; the alternating factorial
/// sum loses about seven digits there.
pub fn wigner_small_d(j: SpinQuantumNumber, beta: f64) -> Result<WignerDMatrix> {
    if !beta.is_finite() {
        return Err(Error::NonFinite("rotation angle"));
    }
    let tj = j.twice() as i32;
    let dim = j.dim();
    let lnf = ln_factorial_table(tj as usize);
    let ln_binom = |n: usize, k: usize| lnf[n] - lnf[k] - lnf[n - k];
    let (c, s) = ((beta / 2.0).cos(), (beta / 2.0).sin());
    let x = beta.cos();
    let mut entries = vec![0.0; dim * dim];
    for row in 0..dim {
        let mp = j.m_at(row).twice();
        for col in 0..dim {
            let m = j.m_at(col).twice();
            let cands = [(tj + m) / 2, (tj - m) / 2, (tj + mp) / 2, (tj - mp) / 2];
            let k = *cands.iter().min().expect("four candidates");
            let (a, lam) = if k == cands[0] {
                ((mp - m) / 2, (mp - m) / 2)
            } else if k == cands[1] || k == cands[2] {
                ((m - mp) / 2, 0)
            } else {
                ((mp - m) / 2, (mp - m) / 2)
            };
            let b = tj - 2 * k - a;
            let (ku, au, bu) = (k as usize, a as usize, b as usize);
            let ln_pref = 0.5 * ln_binom(tj as usize - ku, ku + au) - 0.5 * ln_binom(ku + bu, bu);
            let sign = if lam.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            entries[row * dim + col] = sign
                * ln_pref.exp()
                * s.powi(a)
                * c.powi(b)
                * jacobi(ku, f64::from(a), f64::from(b), x);
        }
    }
    Ok(WignerDMatrix { j, beta, entries })
}

/// `exp(-i J_z angle)`, diagonal with entries `exp(-i m angle)`.
pub fn rotation_z(j: SpinQuantumNumber, angle: f64) -> Result<ComplexMatrix> {
    if !angle.is_finite() {
        return Err(Error::NonFinite("rotation angle"));
    }
    let diag: Vec<Complex64> = j
        .m_values()
        .map(|m| Complex64::from_polar(1.0, -m.value() * angle))
        .collect();
    Ok(ComplexMatrix::from_diagonal(&diag))
}

/// `exp(-i J_y angle)` through the spectral decomposition of `J_y`.
pub fn rotation_y(j: SpinQuantumNumber, angle: f64) -> Result<ComplexMatrix> {
    if !angle.is_finite() {
        return Err(Error::NonFinite("rotation angle"));
    }
    let (_, jy, _) = angular_momentum_ops(j);
    unitary_exp(&jy, angle)
}

/// Absolute mismatch of the column recursion
/// `(n cos b - m)/sin b d_{mn} = 1/2 [d_{m,n+1} sqrt((j-n)(j+n+1)) + d_{m,n-1} sqrt((j+n)(j-n+1))]`.
pub fn d_recursion_residual(j: SpinQuantumNumber, beta: f64, m: HalfInt, n: HalfInt) -> Result<f64> {
    j.ensure_projection(m)?;
    j.ensure_projection(n)?;
    let sin_b = beta.sin();
    if sin_b.abs() < 1e-12 {
        return Err(Error::Domain(format!(
            "recursion needs sin(beta) != 0, got beta = {beta}"
        )));
    }
    let d = wigner_small_d(j, beta)?;
    Ok(recursion_residual_with(&d, m, n))
}

fn recursion_residual_with(d: &WignerDMatrix, m: HalfInt, n: HalfInt) -> f64 {
    let j = d.j();
    let beta = d.beta();
    let lhs = (-m.value() + n.value() * beta.cos()) / beta.sin() * d.element(m, n);
    let rhs = 0.5
        * (d.element(m, n + 1) * j.raising_coefficient(n)
            + d.element(m, n - 1) * j.lowering_coefficient(n));
    (lhs - rhs).abs()
}

/// `sum_n (m - m') n d_{mn} d_{m'n}`.
fn invariant_sum_lhs(d: &WignerDMatrix, m: HalfInt, m_prime: HalfInt) -> f64 {
    d.j()
        .m_values()
        .map(|n| (m.value() - m_prime.value()) * n.value() * d.element(m, n) * d.element(m_prime, n))
        .sum()
}

/// `(sin b / 2) sum_n d_{mn} [d_{m',n-1} sqrt((j+n)(j-n+1)) - d_{m',n+1} sqrt((j-n)(j+n+1))]`.
fn invariant_sum_rhs(d: &WignerDMatrix, m: HalfInt, m_prime: HalfInt) -> f64 {
    let j = d.j();
    let sum: f64 = j
        .m_values()
        .map(|n| {
            d.element(m, n)
                * (d.element(m_prime, n - 1) * j.lowering_coefficient(n)
                    - d.element(m_prime, n + 1) * j.raising_coefficient(n))
        })
        .sum();
    0.5 * d.beta().sin() * sum
}

/// Absolute mismatch of the bilinear invariant sum, written with `sin b`
/// multiplied through so it stays regular at `sin b = 0`.
pub fn invariant_sum_residual(
    j: SpinQuantumNumber,
    beta: f64,
    m: HalfInt,
    m_prime: HalfInt,
) -> Result<f64> {
    j.ensure_projection(m)?;
    j.ensure_projection(m_prime)?;
    let d = wigner_small_d(j, beta)?;
    Ok((invariant_sum_lhs(&d, m, m_prime) - invariant_sum_rhs(&d, m, m_prime)).abs())
}

/// Largest column-recursion residual over all labels of `d`.
pub fn max_recursion_residual(d: &WignerDMatrix) -> Result<f64> {
    if d.beta().sin().abs() < 1e-12 {
        return Err(Error::Domain(format!(
            "recursion needs sin(beta) != 0, got beta = {}",
            d.beta()
        )));
    }
    let j = d.j();
    Ok(j.m_values()
        .flat_map(|m| j.m_values().map(move |n| (m, n)))
        .map(|(m, n)| recursion_residual_with(d, m, n))
        .fold(0.0, f64::max))
}

/// Largest invariant-sum residual over all label pairs of `d`.
pub fn max_invariant_sum_residual(d: &WignerDMatrix) -> f64 {
    let j = d.j();
    j.m_values()
        .flat_map(|m| j.m_values().map(move |mp| (m, mp)))
        .map(|(m, mp)| (invariant_sum_lhs(d, m, mp) - invariant_sum_rhs(d, m, mp)).abs())
        .fold(0.0, f64::max)
}

/// Residuals of every step in the derivation of the invariant sum.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CouplingRuleResiduals {
    /// Column recursion for row `m`.
    pub recursion_m: f64,
    /// Column recursion for row `m'`.
    pub recursion_m_prime: f64,
    /// Recursion for `m` multiplied by `d_{m'n}`, summed in modulus over `n`.
    pub product_m: f64,
    /// Recursion for `m'` multiplied by `d_{mn}`, summed in modulus over `n`.
    pub product_m_prime: f64,
    /// Difference of the two products weighted by `n` and summed.
    pub weighted_difference: f64,
    /// First index-shift re-summation.
    pub shift_down: f64,
    /// Second index-shift re-summation.
    pub shift_up: f64,
    /// The final invariant sum.
    pub invariant_sum: f64,
}

impl CouplingRuleResiduals {
    pub fn max(&self) -> f64 {
        [
            self.recursion_m,
            self.recursion_m_prime,
            self.product_m,
            self.product_m_prime,
            self.weighted_difference,
            self.shift_down,
            self.shift_up,
            self.invariant_sum,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Evaluates each intermediate identity of the invariant-sum derivation
/// for one `(beta, m, m')`; requires `sin beta != 0`.
pub fn coupling_rule_residuals(
    j: SpinQuantumNumber,
    beta: f64,
    m: HalfInt,
    m_prime: HalfInt,
) -> Result<CouplingRuleResiduals> {
    j.ensure_projection(m)?;
    j.ensure_projection(m_prime)?;
    let sin_b = beta.sin();
    if sin_b.abs() < 1e-12 {
        return Err(Error::Domain(format!(
            "derivation divides by sin(beta), got beta = {beta}"
        )));
    }
    let d = wigner_small_d(j, beta)?;
    let cos_b = beta.cos();
    let up = |n: HalfInt| j.raising_coefficient(n);
    let down = |n: HalfInt| j.lowering_coefficient(n);
    let e = |a: HalfInt, b: HalfInt| d.element(a, b);

    let mut out = CouplingRuleResiduals::default();
    let mut weighted_lhs = 0.0;
    let mut weighted_rhs = 0.0;
    for n in j.m_values() {
        out.recursion_m = out.recursion_m.max(recursion_residual_with(&d, m, n));
        out.recursion_m_prime = out
            .recursion_m_prime
            .max(recursion_residual_with(&d, m_prime, n));

        let lhs3 = (-m.value() + n.value() * cos_b) / sin_b * e(m, n) * e(m_prime, n);
        let rhs3 = 0.5 * (e(m, n + 1) * e(m_prime, n) * up(n) + e(m, n - 1) * e(m_prime, n) * down(n));
        out.product_m += (lhs3 - rhs3).abs();

        let lhs4 = (-m_prime.value() + n.value() * cos_b) / sin_b * e(m_prime, n) * e(m, n);
        let rhs4 = 0.5 * (e(m_prime, n + 1) * e(m, n) * up(n) + e(m_prime, n - 1) * e(m, n) * down(n));
        out.product_m_prime += (lhs4 - rhs4).abs();

        let nv = n.value();
        weighted_lhs += (m.value() - m_prime.value()) * nv / sin_b * e(m, n) * e(m_prime, n);
        weighted_rhs += 0.5
            * (e(m_prime, n + 1) * e(m, n) * nv * up(n) - e(m, n - 1) * e(m_prime, n) * nv * down(n)
                + e(m_prime, n - 1) * e(m, n) * nv * down(n)
                - e(m, n + 1) * e(m_prime, n) * nv * up(n));
    }
    out.weighted_difference = (weighted_lhs - weighted_rhs).abs();

    let (mut s6l, mut s6r, mut s7l, mut s7r) = (0.0, 0.0, 0.0, 0.0);
    for n in j.m_values() {
        let nv = n.value();
        s6l += e(m, n - 1) * e(m_prime, n) * nv * down(n);
        s6r += e(m, n) * e(m_prime, n + 1) * (nv + 1.0) * up(n);
        s7l += e(m, n + 1) * e(m_prime, n) * nv * up(n);
        s7r += e(m, n) * e(m_prime, n - 1) * (nv - 1.0) * down(n);
    }
    out.shift_down = (s6l - s6r).abs();
    out.shift_up = (s7l - s7r).abs();

    let lhs8: f64 = j
        .m_values()
        .map(|n| (m.value() - m_prime.value()) * n.value() / sin_b * e(m, n) * e(m_prime, n))
        .sum();
    let rhs8: f64 = 0.5
        * j.m_values()
            .map(|n| e(m, n) * (e(m_prime, n - 1) * down(n) - e(m_prime, n + 1) * up(n)))
            .sum::<f64>();
    out.invariant_sum = (lhs8 - rhs8).abs();
    Ok(out)
}

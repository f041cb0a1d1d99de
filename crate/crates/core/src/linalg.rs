//! Dense complex matrices, pure states and density matrices.
//!
//! Everything here is immutable once built. Matrices are stored densely in a
//! [`nalgebra::DMatrix`]; dimensions in this crate stay below a few dozen.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use crate::{Error, Result};

/// Hermiticity tolerance applied to operators handed in by callers.
pub const INPUT_HERMITIAN_TOL: f64 = 1e-10;
/// Tolerance for objects this crate constructs itself.
pub const CONSTRUCTED_TOL: f64 = 1e-12;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub(crate) const I: Complex64 = Complex64::new(0.0, 1.0);

/// Square dense complex matrix with finite entries.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix(DMatrix<Complex64>);

impl ComplexMatrix {
    /// Wraps a square, finite nalgebra matrix.
    pub fn new(inner: DMatrix<Complex64>) -> Result<Self> {
        if inner.nrows() == 0 || inner.nrows() != inner.ncols() {
            return Err(Error::DimensionMismatch {
                expected: inner.nrows(),
                found: inner.ncols(),
            });
        }
        if inner.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("matrix entries"));
        }
        Ok(Self(inner))
    }

    /// Builds a matrix from row slices.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let dim = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        Self::new(DMatrix::from_fn(dim, dim, |r, c| rows[r][c]))
    }

    /// Builds a real matrix from row slices.
    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let rows: Vec<Vec<Complex64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| Complex64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> Complex64) -> Self {
        Self(DMatrix::from_fn(dim, dim, f))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn from_diagonal(diag: &[Complex64]) -> Self {
        Self(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    /// Outer product `|a><b|`.
    pub fn outer(a: &[Complex64], b: &[Complex64]) -> Self {
        debug_assert_eq!(a.len(), b.len());
        Self::from_fn(a.len(), |r, c| a[r] * b[c].conj())
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(columns: &[QuantumState]) -> Self {
        let dim = columns.len();
        Self::from_fn(dim, |r, c| columns[c].amplitudes()[r])
    }

    pub(crate) fn from_inner(inner: DMatrix<Complex64>) -> Self {
        Self(inner)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.0[(row, col)]
    }

    pub fn inner(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<Complex64> {
        self.0
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn trace(&self) -> Complex64 {
        self.0.trace()
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self(&self.0 * factor)
    }

    pub fn scale_real(&self, factor: f64) -> Self {
        Self(self.0.map(|z| z * factor))
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `max |A - A^dagger|` over entries.
    pub fn hermitian_deviation(&self) -> f64 {
        let n = self.dim();
        let mut dev: f64 = 0.0;
        for r in 0..n {
            for c in r..n {
                dev = dev.max((self.0[(r, c)] - self.0[(c, r)].conj()).norm());
            }
        }
        dev
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_deviation() <= tol
    }

    /// Fails unless the operator is Hermitian within `tol * max(1, |A|)`.
    pub fn ensure_hermitian(&self, tol: f64) -> Result<()> {
        let deviation = self.hermitian_deviation();
        if deviation <= tol * self.max_abs().max(1.0) {
            Ok(())
        } else {
            Err(Error::NotHermitian { deviation })
        }
    }

    /// `(A + A^dagger) / 2`.
    pub fn hermitian_part(&self) -> Self {
        Self((&self.0 + self.0.adjoint()).map(|z| z * 0.5))
    }

    pub fn apply(&self, psi: &QuantumState) -> Vec<Complex64> {
        let v = DVector::from_column_slice(psi.amplitudes());
        (&self.0 * v).iter().copied().collect()
    }

    pub fn apply_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        (&self.0 * DVector::from_column_slice(v)).iter().copied().collect()
    }

    /// `U^dagger A U`.
    pub fn conjugate_by(&self, unitary: &ComplexMatrix) -> Self {
        Self(unitary.0.adjoint() * &self.0 * &unitary.0)
    }

    pub fn column(&self, col: usize) -> Vec<Complex64> {
        self.0.column(col).iter().copied().collect()
    }

    /// `max |A - B|` over entries.
    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Real parts as row vectors.
    pub fn real_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|r| (0..self.dim()).map(|c| self.0[(r, c)].re).collect())
            .collect()
    }

    fn check_same_dim(&self, other: &ComplexMatrix) -> Result<()> {
        if self.dim() == other.dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            })
        }
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ComplexMatrix{}", self.0)
    }
}

impl<'a> Add<&'a ComplexMatrix> for &'a ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &'a ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix(&self.0 + &rhs.0)
    }
}

impl<'a> Sub<&'a ComplexMatrix> for &'a ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &'a ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix(&self.0 - &rhs.0)
    }
}

impl<'a> Mul<&'a ComplexMatrix> for &'a ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &'a ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix(&self.0 * &rhs.0)
    }
}

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn neg(self) -> ComplexMatrix {
        ComplexMatrix(-&self.0)
    }
}

/// Normalized state vector.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantumState {
    amplitudes: Vec<Complex64>,
}

impl QuantumState {
    /// Accepts amplitudes whose Euclidean norm is 1 within `1e-12`.
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        if amplitudes.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("state amplitudes"));
        }
        let norm = l2_norm(&amplitudes);
        if (norm - 1.0).abs() > CONSTRUCTED_TOL {
            return Err(Error::NotNormalized { norm });
        }
        Ok(Self { amplitudes })
    }

    /// Rescales arbitrary nonzero amplitudes to unit norm.
    pub fn normalized(amplitudes: Vec<Complex64>) -> Result<Self> {
        let norm = l2_norm(&amplitudes);
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::NotNormalized { norm });
        }
        Self::new(amplitudes.into_iter().map(|z| z / norm).collect())
    }

    /// Basis vector `|index>`.
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut amplitudes = vec![ZERO; dim];
        amplitudes[index] = ONE;
        Self { amplitudes }
    }

    pub(crate) fn from_unit_unchecked(amplitudes: Vec<Complex64>) -> Self {
        Self { amplitudes }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &QuantumState) -> Complex64 {
        inner_product(&self.amplitudes, &other.amplitudes)
    }

    /// Multiplies every amplitude by a global phase factor.
    pub fn with_phase(&self, phase: Complex64) -> Self {
        Self {
            amplitudes: self.amplitudes.iter().map(|z| z * phase).collect(),
        }
    }
}

pub(crate) fn inner_product(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub(crate) fn l2_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Positive, unit-trace, Hermitian operator.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
}

impl DensityMatrix {
    /// Validates a caller-supplied density matrix (Hermitian and unit trace
    /// within `1e-10`, eigenvalues above `-1e-10`) and stores its exact
    /// Hermitian part.
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        let deviation = matrix.hermitian_deviation();
        if deviation > INPUT_HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation });
        }
        let matrix = matrix.hermitian_part();
        let trace = matrix.trace();
        if (trace.re - 1.0).abs() > INPUT_HERMITIAN_TOL {
            return Err(Error::InvalidDensity(format!("trace {} != 1", trace.re)));
        }
        let min_eig = hermitian_eigenvalues(&matrix)
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -1e-10 {
            return Err(Error::InvalidDensity(format!(
                "negative eigenvalue {min_eig:e}"
            )));
        }
        Ok(Self { matrix })
    }

    /// Re-Hermitizes and trace-normalizes an operator produced by an
    /// integrator. Returns the state and the size of the applied correction.
    pub(crate) fn repaired(raw: &ComplexMatrix) -> Result<(Self, f64)> {
        let herm = raw.hermitian_part();
        let trace = herm.trace().re;
        if !(trace.is_finite() && trace > 0.0) {
            return Err(Error::InvalidDensity(format!("trace {trace}")));
        }
        let matrix = herm.scale_real(1.0 / trace);
        let correction = matrix.max_abs_diff(raw);
        Ok((Self { matrix }, correction))
    }

    /// Maximally mixed state `I / dim`.
    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            matrix: ComplexMatrix::identity(dim).scale_real(1.0 / dim as f64),
        }
    }

    /// Diagonal state in the computational basis.
    pub fn diagonal(populations: &[f64]) -> Result<Self> {
        let diag: Vec<Complex64> = populations.iter().map(|&p| Complex64::new(p, 0.0)).collect();
        Self::new(ComplexMatrix::from_diagonal(&diag))
    }

    /// `sum_k p_k |v_k><v_k|` for orthonormal `v_k` and weights summing to 1.
    pub(crate) fn from_spectral(weights: &[f64], vectors: &[QuantumState]) -> Self {
        let dim = vectors[0].dim();
        let matrix = ComplexMatrix::from_fn(dim, |r, c| {
            weights
                .iter()
                .zip(vectors)
                .map(|(&p, v)| v.amplitudes()[r] * v.amplitudes()[c].conj() * p)
                .sum()
        });
        Self {
            matrix: matrix.hermitian_part(),
        }
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.matrix.get(row, col)
    }

    /// Smallest eigenvalue.
    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigenvalues(&self.matrix)
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }
}

/// `ab - ba`.
pub fn commutator(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    a.check_same_dim(b)?;
    Ok(&(a * b) - &(b * a))
}

/// `Tr(ab)` without forming the product.
pub fn trace_product(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<Complex64> {
    a.check_same_dim(b)?;
    let n = a.dim();
    let mut acc = ZERO;
    for r in 0..n {
        for c in 0..n {
            acc += a.get(r, c) * b.get(c, r);
        }
    }
    Ok(acc)
}

/// `Re Tr(rho obs)` for a Hermitian observable.
pub fn expectation(rho: &DensityMatrix, obs: &ComplexMatrix) -> Result<f64> {
    obs.ensure_hermitian(INPUT_HERMITIAN_TOL)?;
    let value = trace_product(rho.matrix(), obs)?;
    if value.im.abs() >= INPUT_HERMITIAN_TOL * obs.max_abs().max(1.0) {
        return Err(Error::NotHermitian {
            deviation: value.im.abs(),
        });
    }
    Ok(value.re)
}

/// `|psi><psi|`.
pub fn pure_state_density(psi: &QuantumState) -> Result<DensityMatrix> {
    let norm = l2_norm(psi.amplitudes());
    if (norm - 1.0).abs() > CONSTRUCTED_TOL {
        return Err(Error::NotNormalized { norm });
    }
    let matrix = ComplexMatrix::outer(psi.amplitudes(), psi.amplitudes());
    Ok(DensityMatrix {
        matrix: matrix.hermitian_part(),
    })
}

/// `Tr(rho^2)`.
pub fn purity(rho: &DensityMatrix) -> f64 {
    rho.matrix().inner().iter().map(|z| z.norm_sqr()).sum()
}

/// Eigenvalues of a Hermitian matrix, unsorted.
pub(crate) fn hermitian_eigenvalues(m: &ComplexMatrix) -> Vec<f64> {
    m.inner()
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect()
}

/// `exp(-i G t)` for Hermitian `G`, through its spectral decomposition.
pub fn unitary_exp(generator: &ComplexMatrix, t: f64) -> Result<ComplexMatrix> {
    generator.ensure_hermitian(INPUT_HERMITIAN_TOL)?;
    let eig = generator.hermitian_part().into_inner().symmetric_eigen();
    let v = &eig.eigenvectors;
    let phases: Vec<Complex64> = eig
        .eigenvalues
        .iter()
        .map(|&e| Complex64::from_polar(1.0, -e * t))
        .collect();
    let d = DMatrix::from_diagonal(&DVector::from_vec(phases));
    Ok(ComplexMatrix(v * d * v.adjoint()))
}

/// The Pauli matrices `(sigma_x, sigma_y, sigma_z)`.
pub fn pauli() -> (ComplexMatrix, ComplexMatrix, ComplexMatrix) {
    let sx = ComplexMatrix::from_fn(2, |r, c| if r != c { ONE } else { ZERO });
    let sy = ComplexMatrix::from_fn(2, |r, c| match (r, c) {
        (0, 1) => -I,
        (1, 0) => I,
        _ => ZERO,
    });
    let sz = ComplexMatrix::from_diagonal(&[ONE, -ONE]);
    (sx, sy, sz)
}

/// Hermitian matrix with real and imaginary parts of each entry uniform in
/// `[-scale, scale]` before symmetrization.
pub fn random_hermitian<R: Rng + ?Sized>(dim: usize, scale: f64, rng: &mut R) -> ComplexMatrix {
    let raw = ComplexMatrix::from_fn(dim, |_, _| {
        Complex64::new(rng.random_range(-scale..=scale), rng.random_range(-scale..=scale))
    });
    raw.hermitian_part()
}

/// Full-rank mixed state `G G^dagger / Tr(G G^dagger)` with uniform complex `G`.
pub fn random_density<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DensityMatrix {
    let g = DMatrix::from_fn(dim, dim, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    let gg = &g * g.adjoint();
    let tr = gg.trace().re;
    let matrix = ComplexMatrix(gg.map(|z| z / tr)).hermitian_part();
    DensityMatrix { matrix }
}

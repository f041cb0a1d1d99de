//! Independent oracles shared by the integration tests. Nothing here calls
//! the library's spectral, flux or model code.
#![allow(dead_code)]

use coherent_flux_core::linalg::ComplexMatrix;
use coherent_flux_core::Complex64;
use nalgebra::{DMatrix, DVector};

pub type M = DMatrix<Complex64>;
pub type V = DVector<Complex64>;

pub const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn raw(m: &ComplexMatrix) -> M {
    m.inner().clone()
}

pub fn wrap(m: M) -> ComplexMatrix {
    ComplexMatrix::new(m).expect("square")
}

/// Hermitian eigendecomposition with ascending eigenvalues.
pub fn eigh(m: &M) -> (Vec<f64>, M) {
    let e = m.clone().symmetric_eigen();
    let mut idx: Vec<usize> = (0..m.nrows()).collect();
    idx.sort_by(|&a, &b| e.eigenvalues[a].total_cmp(&e.eigenvalues[b]));
    let vals = idx.iter().map(|&i| e.eigenvalues[i]).collect();
    let vecs = M::from_fn(m.nrows(), m.ncols(), |r, k| e.eigenvectors[(r, idx[k])]);
    (vals, vecs)
}

/// `exp(-i k t)` for Hermitian `k`.
pub fn expm_i(k: &M, t: f64) -> M {
    let (vals, v) = eigh(k);
    let phases = M::from_diagonal(&V::from_iterator(
        vals.len(),
        vals.iter().map(|&e| Complex64::from_polar(1.0, -e * t)),
    ));
    &v * phases * v.adjoint()
}

/// `(Jx, Jy, Jz)` for spin `twice_j / 2`, basis ordered `m = j, ..., -j`.
pub fn spin_matrices(twice_j: u32) -> (M, M, M) {
    let dim = twice_j as usize + 1;
    let j = twice_j as f64 / 2.0;
    let m_of = |k: usize| j - k as f64;
    let mut jp = M::zeros(dim, dim);
    for k in 1..dim {
        let m = m_of(k);
        jp[(k - 1, k)] = c(((j - m) * (j + m + 1.0)).sqrt());
    }
    let jm = jp.adjoint();
    let jx = (&jp + &jm) * c(0.5);
    let jy = (&jp - &jm) * Complex64::new(0.0, -0.5);
    let jz = M::from_diagonal(&V::from_iterator(dim, (0..dim).map(|k| c(m_of(k)))));
    (jx, jy, jz)
}

/// `H(t) = g [sin(th) (cos(w t) Jx + sin(w t) Jy) + cos(th) Jz]`.
pub fn precessing_h(twice_j: u32, g: f64, theta: f64, omega: f64, t: f64) -> M {
    let (jx, jy, jz) = spin_matrices(twice_j);
    let (s, co) = (omega * t).sin_cos();
    (jx * c(co) + jy * c(s)) * c(g * theta.sin()) + jz * c(g * theta.cos())
}

pub fn precessing_hdot(twice_j: u32, g: f64, theta: f64, omega: f64, t: f64) -> M {
    let (jx, jy, _) = spin_matrices(twice_j);
    let (s, co) = (omega * t).sin_cos();
    (jx * c(-s) + jy * c(co)) * c(g * theta.sin() * omega)
}

/// Exact state of the precessing spin from the rotating-frame solution
/// `psi(t) = exp(-i w t Jz) exp(-i (H(0) - w Jz) t) psi(0)`.
pub fn precessing_state(twice_j: u32, g: f64, theta: f64, omega: f64, psi0: &V, t: f64) -> V {
    let (_, _, jz) = spin_matrices(twice_j);
    let k = precessing_h(twice_j, g, theta, omega, 0.0) - &jz * c(omega);
    expm_i(&jz, omega * t) * expm_i(&k, t) * psi0
}

/// Eigenvector of `H(0)` with the `level`-th largest eigenvalue.
pub fn precessing_eigenstate(twice_j: u32, g: f64, theta: f64, omega: f64, level: usize) -> V {
    let (_, v) = eigh(&precessing_h(twice_j, g, theta, omega, 0.0));
    v.column(v.ncols() - 1 - level).into_owned()
}

pub fn projector(psi: &V) -> M {
    psi * psi.adjoint()
}

pub fn lab_rho_dot(h: &M, rho: &M) -> M {
    (h * rho - rho * h) * (-I)
}

/// `sum_n E_n(t) <n(t+s)| rho(t+s) |n(t+s)>`.
fn weighted_populations(h_at: &dyn Fn(f64) -> M, rho_at: &dyn Fn(f64) -> M, t: f64, s: f64) -> f64 {
    let (e, _) = eigh(&h_at(t));
    let (_, v) = eigh(&h_at(t + s));
    let rho = rho_at(t + s);
    (0..e.len())
        .map(|n| {
            let col = v.column(n);
            e[n] * (col.adjoint() * &rho * col)[(0, 0)].re
        })
        .sum()
}

/// `sum_n d(rho_nn)/dt E_n` by a Richardson-extrapolated central difference
/// of gauge-invariant populations.
pub fn diag_pop_flux_fd(h_at: &dyn Fn(f64) -> M, rho_at: &dyn Fn(f64) -> M, t: f64, step: f64) -> f64 {
    let d = |s: f64| {
        (weighted_populations(h_at, rho_at, t, s) - weighted_populations(h_at, rho_at, t, -s)) / (2.0 * s)
    };
    (4.0 * d(0.5 * step) - d(step)) / 3.0
}

/// `sum_{n != m} rho_nm <m|dH/dt|n>` in the eigenbasis of `h`.
pub fn coherence_sum(h: &M, hdot: &M, rho: &M) -> Complex64 {
    let (_, v) = eigh(h);
    let r = v.adjoint() * rho * &v;
    let mm = v.adjoint() * hdot * &v;
    let mut sum = Complex64::new(0.0, 0.0);
    for n in 0..h.nrows() {
        for m in 0..h.nrows() {
            if n != m {
                sum += r[(n, m)] * mm[(m, n)];
            }
        }
    }
    sum
}

/// `(rho_G, F, S)` at temperature `temp`.
pub fn gibbs(h: &M, temp: f64) -> (M, f64, f64) {
    let (e, v) = eigh(h);
    let e0 = e[0];
    let w: Vec<f64> = e.iter().map(|&x| (-(x - e0) / temp).exp()).collect();
    let z: f64 = w.iter().sum();
    let p: Vec<f64> = w.iter().map(|x| x / z).collect();
    let rho = &v * M::from_diagonal(&V::from_iterator(p.len(), p.iter().map(|&x| c(x)))) * v.adjoint();
    let f = e0 - temp * z.ln();
    let s = -p.iter().filter(|&&x| x > 0.0).map(|x| x * x.ln()).sum::<f64>();
    (rho, f, s)
}

pub fn max_abs(m: &M) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn infidelity(rho: &M, psi: &V) -> f64 {
    1.0 - (psi.adjoint() * rho * psi)[(0, 0)].re
}

/// Random Hermitian matrix with entries uniform in `[-scale, scale]`.
pub fn random_hermitian<R: rand::Rng>(dim: usize, scale: f64, rng: &mut R) -> M {
    let a = M::from_fn(dim, dim, |_, _| {
        Complex64::new(rng.random_range(-scale..=scale), rng.random_range(-scale..=scale))
    });
    (&a + a.adjoint()) * c(0.5)
}

/// Random full-rank density matrix `G G^dag / tr`.
pub fn random_density<R: rand::Rng>(dim: usize, rng: &mut R) -> M {
    let g = M::from_fn(dim, dim, |_, _| {
        Complex64::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0))
    });
    let r = &g * g.adjoint();
    let tr = r.trace();
    r / tr
}

/// `lambda = sqrt(w^2 + w1^2 - 2 w w1 cos(alpha))`.
pub fn two_level_lambda(omega1: f64, omega: f64, alpha: f64) -> f64 {
    (omega * omega + omega1 * omega1 - 2.0 * omega * omega1 * alpha.cos()).sqrt()
}

/// `-(w1 / 2 lambda) w^2 sin^2(alpha) sin(lambda t)`.
pub fn two_level_flux(omega1: f64, omega: f64, alpha: f64, t: f64) -> f64 {
    let l = two_level_lambda(omega1, omega, alpha);
    -(omega1 / (2.0 * l)) * omega * omega * alpha.sin().powi(2) * (l * t).sin()
}

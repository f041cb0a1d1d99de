//! Closed-form solutions of the two rotating-field spin models.
//!
//! * Two-level electron spin in a field of fixed magnitude rotating on a cone
//!   of half-angle `alpha` at rate `omega`: `H = (omega1/2) n(t).sigma`.
//! * Spin-`j` precession, `H = gamma B(t).J`, with the same geometry (tilt
//!   `theta`), solved exactly in the co-rotating frame.
//!
//! Both have time-independent spectra, so every energy rate reported by the
//! naive split is pure population flow while the exact fluxes put it all in
//! the work channel.
//!
//! Eigenstates are labelled in descending energy (`+` before `-`, and
//! `n = j, j-1, ..., -j` for spin `j`).

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::angular::{angular_momentum_ops, wigner_small_d, HalfInt, SpinQuantumNumber, WignerDMatrix};
use crate::dynamics::DriveProtocol;
use crate::linalg::{inner_product, pauli, ComplexMatrix, QuantumState, I};
use crate::{Error, Result};

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

fn ensure_finite(values: &[(f64, &'static str)]) -> Result<()> {
    for &(v, name) in values {
        if !v.is_finite() {
            return Err(Error::NonFinite(name));
        }
    }
    Ok(())
}

/// Parameters of the rotating-field two-level model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoLevelParams {
    pub omega1: f64,
    pub omega: f64,
    pub alpha: f64,
}

impl TwoLevelParams {
    pub fn new(omega1: f64, omega: f64, alpha: f64) -> Result<Self> {
        ensure_finite(&[(omega1, "omega1"), (omega, "omega"), (alpha, "alpha")])?;
        if omega1 <= 0.0 {
            return Err(Error::InvalidParameter(format!("omega1 = {omega1} must be > 0")));
        }
        if !(0.0..=std::f64::consts::PI).contains(&alpha) {
            return Err(Error::InvalidParameter(format!("alpha = {alpha} must lie in [0, pi]")));
        }
        Ok(Self { omega1, omega, alpha })
    }

    /// Generalized Rabi frequency `sqrt(omega^2 + omega1^2 - 2 omega omega1 cos alpha)`.
    pub fn lambda(&self) -> f64 {
        self.detuning().hypot(self.omega * self.alpha.sin())
    }

    /// `omega1 - omega cos(alpha)`, free of cancellation near `omega = omega1`, `alpha = 0`.
    fn detuning(&self) -> f64 {
        (self.omega1 - self.omega) + 2.0 * self.omega * (0.5 * self.alpha).sin().powi(2)
    }

    /// Period of the population oscillation, `2 pi / lambda`.
    pub fn period(&self) -> Option<f64> {
        let l = self.lambda();
        (l > 0.0).then(|| TAU / l)
    }

    /// Equivalent spin-1/2 precession parameters (`gamma B0 = omega1`,
    /// `theta = alpha`, initial label `M = +1/2`).
    pub fn as_high_spin(&self) -> HighSpinParams {
        HighSpinParams {
            j: SpinQuantumNumber::from_twice(1),
            gamma_b0: self.omega1,
            theta: self.alpha,
            omega: self.omega,
            m: HalfInt::from_twice(1),
        }
    }
}

pub fn two_level_drive(p: &TwoLevelParams) -> Result<DriveProtocol> {
    let (sx, sy, sz) = pauli();
    let TwoLevelParams { omega1, omega, alpha } = *p;
    let amp = 0.5 * omega1;
    let (sa, ca) = alpha.sin_cos();
    let h = {
        let (sx, sy, sz) = (sx.clone(), sy.clone(), sz.clone());
        move |t: f64| {
            let (s, c) = (omega * t).sin_cos();
            &(&sx.scale_real(amp * sa * c) + &sy.scale_real(amp * sa * s)) + &sz.scale_real(amp * ca)
        }
    };
    let dh = move |t: f64| {
        let (s, c) = (omega * t).sin_cos();
        &sx.scale_real(-amp * sa * omega * s) + &sy.scale_real(amp * sa * omega * c)
    };
    let period = if omega != 0.0 { TAU / omega.abs() } else { TAU / omega1 };
    Ok(DriveProtocol::new(2, h, dh, Some(period))?.with_static_spectrum())
}

/// `(|chi_+(t)>, |chi_-(t)>)` with energies `+omega1/2` and `-omega1/2`.
pub fn two_level_eigenbasis(p: &TwoLevelParams, t: f64) -> (QuantumState, QuantumState) {
    let (s, c) = (0.5 * p.alpha).sin_cos();
    let ph = Complex64::from_polar(1.0, p.omega * t);
    let plus = QuantumState::from_unit_unchecked(vec![Complex64::new(c, 0.0), ph * s]);
    let minus = QuantumState::from_unit_unchecked(vec![ph.conj() * s, Complex64::new(-c, 0.0)]);
    (plus, minus)
}

/// Amplitudes `(a_+, a_-)` on `|chi_+(t)>, |chi_-(t)>` of the exact state
/// that starts in `|chi_+(0)>`.
pub fn two_level_amplitudes(p: &TwoLevelParams, t: f64) -> (Complex64, Complex64) {
    let l = p.lambda();
    let half = 0.5 * l * t;
    // sin(lambda t / 2) / lambda, finite at lambda = 0.
    let s_over_l = 0.5 * t * sinc(half);
    let a_plus = (Complex64::new(half.cos(), 0.0) - I * (p.detuning() * s_over_l))
        * Complex64::from_polar(1.0, -0.5 * p.omega * t);
    let a_minus = I * (p.omega * p.alpha.sin() * s_over_l) * Complex64::from_polar(1.0, 0.5 * p.omega * t);
    (a_plus, a_minus)
}

/// Exact lab-basis state, starting from `|chi_+(0)>`.
pub fn two_level_exact_state(p: &TwoLevelParams, t: f64) -> QuantumState {
    let (a_plus, a_minus) = two_level_amplitudes(p, t);
    let (plus, minus) = two_level_eigenbasis(p, t);
    let amps: Vec<Complex64> = plus
        .amplitudes()
        .iter()
        .zip(minus.amplitudes())
        .map(|(u, v)| a_plus * u + a_minus * v)
        .collect();
    QuantumState::from_unit_unchecked(amps)
}

/// `(rho_{++}, rho_{--})` from the closed forms.
pub fn two_level_populations(p: &TwoLevelParams, t: f64) -> (f64, f64) {
    let l = p.lambda();
    let half = 0.5 * l * t;
    let s_over_l = 0.5 * t * sinc(half);
    let rho_pp = half.cos().powi(2) + (p.detuning() * s_over_l).powi(2);
    let rho_mm = (p.omega * p.alpha.sin() * s_over_l).powi(2);
    (rho_pp, rho_mm)
}

/// `sum_{n != m} rho_nm <m|dH/dt|n> = -(omega1 / 2 lambda) omega^2 sin^2(alpha) sin(lambda t)`.
pub fn two_level_coherence_flux(p: &TwoLevelParams, t: f64) -> f64 {
    let l = p.lambda();
    // sin(lambda t) / lambda = t sinc(lambda t)
    -0.5 * p.omega1 * (p.omega * p.alpha.sin()).powi(2) * t * sinc(l * t)
}

/// Work done on the system over `[0, t]`: the integral of the coherence flux.
pub fn two_level_work(p: &TwoLevelParams, t: f64) -> f64 {
    let l = p.lambda();
    // (1 - cos(lambda t)) / lambda^2 = (t^2 / 2) sinc^2(lambda t / 2)
    let one_minus_cos_over_l2 = 0.5 * t * t * sinc(0.5 * l * t).powi(2);
    -0.5 * p.omega1 * (p.omega * p.alpha.sin()).powi(2) * one_minus_cos_over_l2
}

/// Quantum adiabatic parameter `omega sin(alpha) / (2 omega1)`.
pub fn two_level_adiabatic_parameter(p: &TwoLevelParams) -> f64 {
    (p.omega * p.alpha.sin() / (2.0 * p.omega1)).abs()
}

/// Parameters of spin-`j` precession about a tilted rotating field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HighSpinParams {
    pub j: SpinQuantumNumber,
    pub gamma_b0: f64,
    pub theta: f64,
    pub omega: f64,
    /// Label of the instantaneous eigenstate occupied at `t = 0`.
    pub m: HalfInt,
}

impl HighSpinParams {
    pub fn new(j: SpinQuantumNumber, gamma_b0: f64, theta: f64, omega: f64, m: HalfInt) -> Result<Self> {
        ensure_finite(&[(gamma_b0, "gamma_b0"), (theta, "theta"), (omega, "omega")])?;
        if gamma_b0 <= 0.0 {
            return Err(Error::InvalidParameter(format!("gamma_b0 = {gamma_b0} must be > 0")));
        }
        if j.index_of(m).is_none() {
            return Err(Error::InvalidParameter(format!(
                "M = {m} is not a projection of j = {}",
                HalfInt::from_twice(j.twice() as i32)
            )));
        }
        Ok(Self {
            j,
            gamma_b0,
            theta,
            omega,
            m,
        })
    }

    /// Builds the parameters from `lambda0 = omega / gamma B0`.
    pub fn from_lambda0(j: SpinQuantumNumber, gamma_b0: f64, theta: f64, lambda0: f64, m: HalfInt) -> Result<Self> {
        Self::new(j, gamma_b0, theta, lambda0 * gamma_b0, m)
    }

    /// Instantaneous energies `n gamma B0`, `n = j..-j`.
    pub fn energies(&self) -> Vec<f64> {
        self.j.m_values().map(|n| n.value() * self.gamma_b0).collect()
    }
}

/// Co-rotating frame quantities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotatingFrameParams {
    pub lambda0: f64,
    pub omega0: f64,
    pub phi: f64,
    pub beta: f64,
}

pub fn rotating_frame_params(p: &HighSpinParams) -> Result<RotatingFrameParams> {
    let lambda0 = p.omega / p.gamma_b0;
    let st = p.theta.sin();
    // cos(theta) - lambda0 without cancellation near theta = 0, lambda0 = 1.
    let ct_minus = (1.0 - lambda0) - 2.0 * (0.5 * p.theta).sin().powi(2);
    let n = ct_minus.hypot(st);
    if n < 1e-14 {
        return Err(Error::DegenerateFrame);
    }
    let phi = st.atan2(ct_minus);
    Ok(RotatingFrameParams {
        lambda0,
        omega0: p.gamma_b0 * n,
        phi,
        beta: p.theta - phi,
    })
}

pub fn highspin_drive(p: &HighSpinParams) -> Result<DriveProtocol> {
    let (jx, jy, jz) = angular_momentum_ops(p.j);
    let HighSpinParams {
        gamma_b0,
        theta,
        omega,
        ..
    } = *p;
    let (st, ct) = theta.sin_cos();
    let h = {
        let (jx, jy) = (jx.clone(), jy.clone());
        move |t: f64| {
            let (s, c) = (omega * t).sin_cos();
            &(&jx.scale_real(gamma_b0 * st * c) + &jy.scale_real(gamma_b0 * st * s)) + &jz.scale_real(gamma_b0 * ct)
        }
    };
    let dh = move |t: f64| {
        let (s, c) = (omega * t).sin_cos();
        let k = gamma_b0 * omega * st;
        &jx.scale_real(-k * s) + &jy.scale_real(k * c)
    };
    let period = if omega != 0.0 { TAU / omega.abs() } else { TAU / gamma_b0 };
    Ok(DriveProtocol::new(p.j.dim(), h, dh, Some(period))?.with_static_spectrum())
}

/// Instantaneous eigenvectors `R_z(omega t) R_y(theta) |j, n>`, `n = j..-j`.
pub fn highspin_eigenbasis(p: &HighSpinParams, t: f64) -> Result<Vec<QuantumState>> {
    let d = wigner_small_d(p.j, p.theta)?;
    let phases = rz_phases(p.j, p.omega * t);
    Ok((0..p.j.dim())
        .map(|n| {
            let amps = (0..p.j.dim()).map(|m| phases[m] * d.at(m, n)).collect();
            QuantumState::from_unit_unchecked(amps)
        })
        .collect())
}

fn rz_phases(j: SpinQuantumNumber, angle: f64) -> Vec<Complex64> {
    j.m_values()
        .map(|m| Complex64::from_polar(1.0, -m.value() * angle))
        .collect()
}

/// Exact state starting in the instantaneous eigenstate `M` of `H(0)`:
/// `sum_{m m'} d_{m'M}(beta) d_{mm'}(phi) e^{-i m' omega0 t} R_z(omega t)|j,m>`.
pub fn highspin_exact_state(p: &HighSpinParams, t: f64) -> Result<QuantumState> {
    let frame = rotating_frame_params(p)?;
    let dim = p.j.dim();
    let mi = p.j.index_of(p.m).ok_or(Error::InvalidParameter("M out of range".into()))?;
    let d_beta = wigner_small_d(p.j, frame.beta)?;
    let d_phi = wigner_small_d(p.j, frame.phi)?;
    let precession = rz_phases(p.j, frame.omega0 * t);
    let rz = rz_phases(p.j, p.omega * t);
    let amps: Vec<Complex64> = (0..dim)
        .map(|m| {
            let s: Complex64 = (0..dim)
                .map(|mp| precession[mp] * (d_beta.at(mp, mi) * d_phi.at(m, mp)))
                .sum();
            rz[m] * s
        })
        .collect();
    QuantumState::new(amps)
}

/// `rho_nl = <psi_n| rho(t) |psi_l>` in the instantaneous eigenbasis, from
/// direct inner products with the exact state.
pub fn highspin_density_elements(p: &HighSpinParams, t: f64) -> Result<ComplexMatrix> {
    let psi = highspin_exact_state(p, t)?;
    let basis = highspin_eigenbasis(p, t)?;
    let proj: Vec<Complex64> = basis
        .iter()
        .map(|b| inner_product(b.amplitudes(), psi.amplitudes()))
        .collect();
    Ok(ComplexMatrix::from_fn(p.j.dim(), |n, l| proj[n] * proj[l].conj()))
}

/// The four-factor Wigner-d form
/// `sum_{mm'} e^{-i(m-m') omega0 t} d_{mM} d_{m'M} d_{mn} d_{m'l}`, all at `beta`.
pub fn highspin_density_d_form(p: &HighSpinParams, t: f64) -> Result<ComplexMatrix> {
    let frame = rotating_frame_params(p)?;
    let ctx = SumContext::new(p, &frame)?;
    let dim = p.j.dim();
    Ok(ComplexMatrix::from_fn(dim, |n, l| {
        let mut acc = Complex64::new(0.0, 0.0);
        for m in 0..dim {
            for mp in 0..dim {
                acc += ctx.phase(m, mp, t) * (ctx.w[m] * ctx.w[mp] * ctx.d.at(m, n) * ctx.d.at(mp, l));
            }
        }
        acc
    }))
}

struct SumContext {
    j: SpinQuantumNumber,
    d: WignerDMatrix,
    /// `d_{mM}(beta)` for each row `m`.
    w: Vec<f64>,
    ms: Vec<f64>,
    omega0: f64,
}

impl SumContext {
    fn new(p: &HighSpinParams, frame: &RotatingFrameParams) -> Result<Self> {
        let d = wigner_small_d(p.j, frame.beta)?;
        let mi = p.j.index_of(p.m).ok_or(Error::InvalidParameter("M out of range".into()))?;
        let w = (0..p.j.dim()).map(|m| d.at(m, mi)).collect();
        Ok(Self {
            j: p.j,
            d,
            w,
            ms: p.j.m_values().map(HalfInt::value).collect(),
            omega0: frame.omega0,
        })
    }

    fn phase(&self, m: usize, mp: usize, t: f64) -> Complex64 {
        Complex64::from_polar(1.0, -(self.ms[m] - self.ms[mp]) * self.omega0 * t)
    }

    /// `d_{m, n+shift}(beta)`, zero outside the index range.
    fn d_shifted(&self, m: usize, n: usize, shift: i32) -> f64 {
        // Row/column indices run opposite to the projection label.
        let col = n as i64 - i64::from(shift);
        if col < 0 || col >= self.j.dim() as i64 {
            0.0
        } else {
            self.d.at(m, col as usize)
        }
    }
}

/// `sum_n d/dt(rho_nn) E_n` from the closed-form triple sum.
pub fn highspin_diag_flux(p: &HighSpinParams, t: f64) -> Result<f64> {
    let frame = rotating_frame_params(p)?;
    let ctx = SumContext::new(p, &frame)?;
    let dim = p.j.dim();
    let mut acc = Complex64::new(0.0, 0.0);
    for m in 0..dim {
        for mp in 0..dim {
            let dm = ctx.ms[m] - ctx.ms[mp];
            if dm == 0.0 {
                continue;
            }
            let inner: f64 = (0..dim)
                .map(|n| ctx.ms[n] * ctx.d.at(m, n) * ctx.d.at(mp, n))
                .sum();
            acc += ctx.phase(m, mp, t) * (dm * ctx.w[m] * ctx.w[mp] * inner);
        }
    }
    Ok((-I * acc * (frame.omega0 * p.gamma_b0)).re)
}

/// `sum_{nm} rho_nm <psi_m| dH/dt |psi_n>` from the closed-form ladder sum.
pub fn highspin_coherence_flux(p: &HighSpinParams, t: f64) -> Result<f64> {
    let frame = rotating_frame_params(p)?;
    let ctx = SumContext::new(p, &frame)?;
    let dim = p.j.dim();
    let j = p.j.value();
    let mut acc = Complex64::new(0.0, 0.0);
    for m in 0..dim {
        for mp in 0..dim {
            let inner: f64 = (0..dim)
                .map(|n| {
                    let nv = ctx.ms[n];
                    let up = ((j - nv) * (j + nv + 1.0)).max(0.0).sqrt();
                    let down = ((j + nv) * (j - nv + 1.0)).max(0.0).sqrt();
                    ctx.d.at(m, n) * (ctx.d_shifted(mp, n, 1) * up - ctx.d_shifted(mp, n, -1) * down)
                })
                .sum();
            acc += ctx.phase(m, mp, t) * (ctx.w[m] * ctx.w[mp] * inner);
        }
    }
    Ok((I * acc * (frame.omega0 * p.gamma_b0 * 0.5 * frame.beta.sin())).re)
}

/// `<psi_m| dH/dt |psi_n>` in the instantaneous eigenbasis: only the
/// neighbouring levels couple, with amplitude
/// `(omega gamma B0 sin theta / 2i) sqrt(...)`.
pub fn highspin_transition_elements(p: &HighSpinParams) -> ComplexMatrix {
    let j = p.j.value();
    let k = p.omega * p.gamma_b0 * p.theta.sin() / 2.0;
    ComplexMatrix::from_fn(p.j.dim(), |m, n| {
        let nv = p.j.m_at(n).value();
        // m = n + 1 sits one row above.
        if m + 1 == n {
            -I * (k * ((j - nv) * (j + nv + 1.0)).sqrt())
        } else if n + 1 == m {
            I * (k * ((j + nv) * (j - nv + 1.0)).sqrt())
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// Quantum adiabatic parameter `max |<m|dH/dt|n>| / (E_n - E_m)^2`.
pub fn highspin_adiabatic_parameter(p: &HighSpinParams) -> f64 {
    if p.j.twice() == 0 {
        return 0.0;
    }
    let j = p.j.value();
    let widest = p
        .j
        .m_values()
        .map(|n| n.value())
        .filter(|&n| n < j)
        .map(|n| ((j - n) * (j + n + 1.0)).sqrt())
        .fold(0.0, f64::max);
    (p.omega * p.theta.sin()).abs() * widest / (2.0 * p.gamma_b0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::{diagonalize_instantaneous, transition_elements};
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, PI};

    fn spin(twice: u32) -> SpinQuantumNumber {
        SpinQuantumNumber::from_twice(twice)
    }

    fn reference() -> TwoLevelParams {
        TwoLevelParams::new(1.0, 0.6, FRAC_PI_3).unwrap()
    }

    #[test]
    fn two_level_parameter_validation() {
        assert!(TwoLevelParams::new(0.0, 1.0, 0.1).is_err());
        assert!(TwoLevelParams::new(1.0, 1.0, -0.1).is_err());
        assert!(TwoLevelParams::new(1.0, f64::NAN, 0.1).is_err());
    }

    #[test]
    fn two_level_eigenpairs() {
        let p = reference();
        let drive = two_level_drive(&p).unwrap();
        for &t in &[0.0, 0.7, 3.1] {
            let h = drive.hamiltonian_at(t);
            let (plus, minus) = two_level_eigenbasis(&p, t);
            for (v, e) in [(&plus, 0.5), (&minus, -0.5)] {
                let hv = h.apply(v);
                for (a, b) in hv.iter().zip(v.amplitudes()) {
                    assert!((a - b * e).norm() < 1e-12);
                }
            }
            assert!(plus.inner(&minus).norm() < 1e-15);
        }
        let flat = TwoLevelParams::new(1.0, 0.6, 0.0).unwrap();
        let (plus, minus) = two_level_eigenbasis(&flat, 2.0);
        assert_eq!(plus.amplitudes()[0], Complex64::new(1.0, 0.0));
        assert_eq!(minus.amplitudes()[1], Complex64::new(-1.0, 0.0));
    }

    #[test]
    fn two_level_initial_state_and_populations() {
        let p = reference();
        let psi = two_level_exact_state(&p, 0.0);
        let (s, c) = (0.5 * p.alpha).sin_cos();
        assert!((psi.amplitudes()[0] - Complex64::new(c, 0.0)).norm() < 1e-15);
        assert!((psi.amplitudes()[1] - Complex64::new(s, 0.0)).norm() < 1e-15);
        assert_eq!(two_level_populations(&p, 0.0), (1.0, 0.0));

        let q = TwoLevelParams::new(1.0, 1.0, FRAC_PI_2).unwrap();
        assert!((q.lambda() - 2f64.sqrt()).abs() < 1e-15);
        for &t in &[0.3, 1.9, 7.7] {
            let (_, mm) = two_level_populations(&q, t);
            assert!((mm - 0.5 * (t / 2f64.sqrt()).sin().powi(2)).abs() < 1e-14);
        }
    }

    #[test]
    fn two_level_populations_match_projections() {
        let p = reference();
        for k in 0..40 {
            let t = 0.37 * k as f64;
            let psi = two_level_exact_state(&p, t);
            let (plus, minus) = two_level_eigenbasis(&p, t);
            let (pp, mm) = two_level_populations(&p, t);
            assert!((pp + mm - 1.0).abs() < 1e-12);
            assert!((plus.inner(&psi).norm_sqr() - pp).abs() < 1e-12);
            assert!((minus.inner(&psi).norm_sqr() - mm).abs() < 1e-12);
        }
    }

    #[test]
    fn two_level_static_field_stays_put() {
        let p = TwoLevelParams::new(1.3, 0.0, 1.1).unwrap();
        for &t in &[0.5, 4.0] {
            assert!((two_level_populations(&p, t).0 - 1.0).abs() < 1e-15);
            assert_eq!(two_level_coherence_flux(&p, t), 0.0);
        }
    }

    #[test]
    fn two_level_flux_zeros() {
        let p = reference();
        let l = p.lambda();
        for k in 0..4 {
            assert!(two_level_coherence_flux(&p, TAU * k as f64 / l).abs() < 1e-14);
        }
        let flat = TwoLevelParams::new(1.0, 0.6, 0.0).unwrap();
        assert_eq!(two_level_coherence_flux(&flat, 1.3), 0.0);
    }

    #[test]
    fn two_level_resonant_limit_is_finite() {
        // lambda = 0 when omega = omega1 and alpha = 0.
        let p = TwoLevelParams::new(1.0, 1.0, 0.0).unwrap();
        assert_eq!(p.lambda(), 0.0);
        let psi = two_level_exact_state(&p, 2.0);
        assert!(psi.amplitudes().iter().all(|z| z.re.is_finite() && z.im.is_finite()));
        assert!((crate::linalg::l2_norm(psi.amplitudes()) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn two_level_work_is_flux_antiderivative() {
        let p = reference();
        let h = 1e-5;
        for &t in &[0.4, 2.0, 5.5] {
            let fd = (two_level_work(&p, t + h) - two_level_work(&p, t - h)) / (2.0 * h);
            assert!((fd - two_level_coherence_flux(&p, t)).abs() < 1e-9);
        }
        assert_eq!(two_level_work(&p, 0.0), 0.0);
    }

    #[test]
    fn two_level_coherence_flux_matches_numeric_frame() {
        let p = reference();
        let drive = two_level_drive(&p).unwrap();
        for k in 0..25 {
            let t = 0.41 * k as f64;
            let psi = two_level_exact_state(&p, t);
            let frame = diagonalize_instantaneous(&drive.hamiltonian_at(t), t, None).unwrap();
            let m = transition_elements(&frame, &drive.derivative_at(t)).unwrap();
            let coeffs: Vec<Complex64> = frame
                .eigenvectors()
                .iter()
                .map(|v| v.inner(&psi))
                .collect();
            let mut c = Complex64::new(0.0, 0.0);
            for n in 0..2 {
                for mm in 0..2 {
                    if n != mm {
                        c += coeffs[n] * coeffs[mm].conj() * m.get(mm, n);
                    }
                }
            }
            assert!((c.re - two_level_coherence_flux(&p, t)).abs() < 1e-10, "t = {t}");
            assert!(c.im.abs() < 1e-12);
        }
    }

    #[test]
    fn rotating_frame_special_cases() {
        let p = HighSpinParams::new(spin(2), 1.5, 0.8, 0.0, HalfInt(0)).unwrap();
        let f = rotating_frame_params(&p).unwrap();
        assert!((f.phi - 0.8).abs() < 1e-15 && f.beta.abs() < 1e-15);
        assert!((f.omega0 - 1.5).abs() < 1e-15);

        let q = HighSpinParams::from_lambda0(spin(2), 2.0, 0.0, 0.5, HalfInt(0)).unwrap();
        let f = rotating_frame_params(&q).unwrap();
        assert!(f.phi.abs() < 1e-15 && (f.omega0 - 1.0).abs() < 1e-15);

        let res = HighSpinParams::from_lambda0(spin(2), 2.0, 0.0, 1.0, HalfInt(0)).unwrap();
        assert!(matches!(rotating_frame_params(&res), Err(Error::DegenerateFrame)));
    }

    #[test]
    fn rotating_frame_obtuse_branch() {
        // lambda0 > cos(theta) puts phi in the second quadrant.
        let p = HighSpinParams::from_lambda0(spin(2), 1.0, 0.5, 1.5, HalfInt(0)).unwrap();
        let f = rotating_frame_params(&p).unwrap();
        assert!(f.phi > FRAC_PI_2 && f.phi < PI);
        let n = (1.0 - 2.0 * f.lambda0 * 0.5f64.cos() + f.lambda0.powi(2)).sqrt();
        assert!((f.phi.sin() - 0.5f64.sin() / n).abs() < 1e-12);
        assert!((f.phi.cos() - (0.5f64.cos() - f.lambda0) / n).abs() < 1e-12);
        assert!((p.omega * p.theta.sin() + f.omega0 * f.beta.sin()).abs() < 1e-12);
    }

    #[test]
    fn highspin_spectrum_and_eigenbasis() {
        let p = HighSpinParams::from_lambda0(spin(4), 1.3, 0.9, 0.7, HalfInt(2)).unwrap();
        let drive = highspin_drive(&p).unwrap();
        for &t in &[0.0, 1.7, 4.2] {
            let h = drive.hamiltonian_at(t);
            let basis = highspin_eigenbasis(&p, t).unwrap();
            for (v, e) in basis.iter().zip(p.energies()) {
                let hv = h.apply(v);
                for (a, b) in hv.iter().zip(v.amplitudes()) {
                    assert!((a - b * e).norm() < 1e-12);
                }
            }
            assert!((h.norm() - drive.hamiltonian_at(0.0).norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn spin_half_drive_equals_two_level_drive() {
        let p = reference();
        let a = two_level_drive(&p).unwrap();
        let b = highspin_drive(&p.as_high_spin()).unwrap();
        for &t in &[0.0, 0.9, 2.5] {
            assert!(a.hamiltonian_at(t).max_abs_diff(&b.hamiltonian_at(t)) < 1e-15);
            assert!(a.derivative_at(t).max_abs_diff(&b.derivative_at(t)) < 1e-15);
        }
        let f = rotating_frame_params(&p.as_high_spin()).unwrap();
        assert!((f.omega0 - p.lambda()).abs() < 1e-14);
    }

    #[test]
    fn highspin_initial_state_is_eigenstate() {
        let p = HighSpinParams::from_lambda0(spin(4), 1.0, FRAC_PI_4, 0.5, HalfInt(4)).unwrap();
        let psi = highspin_exact_state(&p, 0.0).unwrap();
        let basis = highspin_eigenbasis(&p, 0.0).unwrap();
        assert!((basis[0].inner(&psi).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn highspin_spin_half_matches_two_level_state() {
        let p = reference();
        let hs = p.as_high_spin();
        for k in 0..20 {
            let t = 0.53 * k as f64;
            let a = two_level_exact_state(&p, t);
            let b = highspin_exact_state(&hs, t).unwrap();
            // Equal up to a global phase.
            assert!((a.inner(&b).norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn highspin_state_solves_schrodinger() {
        for twice in 1..=5u32 {
            let p = HighSpinParams::from_lambda0(spin(twice), 1.1, 1.0, 0.6, HalfInt(twice as i32)).unwrap();
            let drive = highspin_drive(&p).unwrap();
            let w0 = rotating_frame_params(&p).unwrap().omega0;
            let h = 1e-6 * TAU / w0;
            for &t in &[0.3, 2.2] {
                let plus = highspin_exact_state(&p, t + h).unwrap();
                let minus = highspin_exact_state(&p, t - h).unwrap();
                let psi = highspin_exact_state(&p, t).unwrap();
                let hpsi = drive.hamiltonian_at(t).apply(&psi);
                let res = plus
                    .amplitudes()
                    .iter()
                    .zip(minus.amplitudes())
                    .zip(&hpsi)
                    .map(|((a, b), hp)| (I * (a - b) / (2.0 * h) - hp).norm())
                    .fold(0.0, f64::max);
                assert!(res < 1e-8, "twice_j = {twice}, residual {res:e}");
            }
        }
    }

    #[test]
    fn d_form_density_matches_inner_products() {
        for &(twice, l0, th, mm) in &[(1u32, 0.6, 1.0, 1i32), (4, 0.5, FRAC_PI_4, 4), (5, 1.7, 2.3, -1)] {
            let p = HighSpinParams::from_lambda0(spin(twice), 1.2, th, l0, HalfInt(mm)).unwrap();
            for &t in &[0.0, 1.1, 6.0] {
                let a = highspin_density_elements(&p, t).unwrap();
                let b = highspin_density_d_form(&p, t).unwrap();
                assert!(a.max_abs_diff(&b) < 1e-12);
                assert!((a.trace().re - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn no_coherence_without_rotation() {
        let p = HighSpinParams::new(spin(3), 1.0, 0.7, 0.0, HalfInt(1)).unwrap();
        let rho = highspin_density_elements(&p, 2.5).unwrap();
        for n in 0..4 {
            for l in 0..4 {
                let expected = if n == 1 && l == 1 { 1.0 } else { 0.0 };
                assert!((rho.get(n, l) - Complex64::new(expected, 0.0)).norm() < 1e-12);
            }
        }
        assert!(highspin_diag_flux(&p, 1.0).unwrap().abs() < 1e-15);
    }

    #[test]
    fn diag_flux_matches_finite_difference() {
        let p = HighSpinParams::from_lambda0(spin(4), 1.0, 1.1, 0.8, HalfInt(0)).unwrap();
        let e = p.energies();
        let energy_pop = |t: f64| {
            let rho = highspin_density_elements(&p, t).unwrap();
            (0..e.len()).map(|n| rho.get(n, n).re * e[n]).sum::<f64>()
        };
        let h = 1e-5;
        for &t in &[0.2, 1.4, 3.3] {
            let fd = (energy_pop(t + h) - energy_pop(t - h)) / (2.0 * h);
            assert!((fd - highspin_diag_flux(&p, t).unwrap()).abs() < 1e-8);
        }
    }

    #[test]
    fn coherence_flux_identity_and_spin_half_reduction() {
        let tl = reference();
        let hs = tl.as_high_spin();
        for k in 0..30 {
            let t = 0.29 * k as f64;
            let diag = highspin_diag_flux(&hs, t).unwrap();
            let coh = highspin_coherence_flux(&hs, t).unwrap();
            let target = two_level_coherence_flux(&tl, t);
            assert!((diag - target).abs() < 1e-12);
            assert!((coh - target).abs() < 1e-12);
        }
        let flat = HighSpinParams::new(spin(4), 1.0, 0.0, 0.4, HalfInt(2)).unwrap();
        assert!(highspin_coherence_flux(&flat, 1.0).unwrap().abs() < 1e-15);
    }

    #[test]
    fn transition_elements_closed_form() {
        let p = HighSpinParams::from_lambda0(spin(3), 0.9, 1.2, 0.4, HalfInt(1)).unwrap();
        let drive = highspin_drive(&p).unwrap();
        let t = 1.3;
        let basis = highspin_eigenbasis(&p, t).unwrap();
        let v = ComplexMatrix::from_columns(&basis);
        let numeric = drive.derivative_at(t).conjugate_by(&v);
        assert!(numeric.max_abs_diff(&highspin_transition_elements(&p)) < 1e-12);

        // Gauge-free moduli agree with the numerically diagonalized frame.
        let frame = diagonalize_instantaneous(&drive.hamiltonian_at(t), t, None).unwrap();
        let m = transition_elements(&frame, &drive.derivative_at(t)).unwrap();
        let closed = highspin_transition_elements(&p);
        let d = p.j.dim();
        // Numeric frame is ascending in energy, closed form descending.
        for a in 0..d {
            for b in 0..d {
                let x = m.get(a, b).norm();
                let y = closed.get(d - 1 - a, d - 1 - b).norm();
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn adiabatic_parameters() {
        let slow = TwoLevelParams::new(1.0, 0.01, FRAC_PI_2).unwrap();
        assert!(two_level_adiabatic_parameter(&slow) < 0.05);
        let fast = TwoLevelParams::new(1.0, 1.0, FRAC_PI_2).unwrap();
        assert!((two_level_adiabatic_parameter(&fast) - 0.5).abs() < 1e-15);
        let hs = fast.as_high_spin();
        assert!((highspin_adiabatic_parameter(&hs) - 0.5).abs() < 1e-15);
    }
}

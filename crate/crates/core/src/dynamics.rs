//! Time evolution of density matrices.
//!
//! Both the unitary and the dissipative propagators integrate
//! `d rho/dt = -i [H(t), rho] + L_D(rho)` with an adaptive Dormand-Prince
//! 5(4) pair. The requested time grid only selects output samples: steps are
//! shortened to land on each sample, but the local error control is
//! otherwise independent of the grid.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::{ComplexMatrix, DensityMatrix, QuantumState, INPUT_HERMITIAN_TOL, I};
use crate::spectra::{diagonalize_instantaneous, SpectralFrame};
use crate::units::{HBAR, K_B};
use crate::{Error, Result};

type OperatorFn = Arc<dyn Fn(f64) -> ComplexMatrix + Send + Sync>;

/// A Hamiltonian `H(t)` together with its analytic time derivative.
#[derive(Clone)]
pub struct DriveProtocol {
    dim: usize,
    hamiltonian: OperatorFn,
    derivative: OperatorFn,
    natural_period: Option<f64>,
    static_spectrum: bool,
}

impl fmt::Debug for DriveProtocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriveProtocol")
            .field("dim", &self.dim)
            .field("natural_period", &self.natural_period)
            .field("static_spectrum", &self.static_spectrum)
            .finish_non_exhaustive()
    }
}

impl DriveProtocol {
    /// Builds and validates a drive: `H(t)` must be Hermitian and the
    /// supplied derivative must agree with a central difference of `H`
    /// within `1e-6 |H|` at ten sampled times.
    pub fn new(
        dim: usize,
        hamiltonian: impl Fn(f64) -> ComplexMatrix + Send + Sync + 'static,
        derivative: impl Fn(f64) -> ComplexMatrix + Send + Sync + 'static,
        natural_period: Option<f64>,
    ) -> Result<Self> {
        if let Some(p) = natural_period {
            if !(p.is_finite() && p > 0.0) {
                return Err(Error::InvalidParameter(format!("natural period {p}")));
            }
        }
        let drive = Self {
            dim,
            hamiltonian: Arc::new(hamiltonian),
            derivative: Arc::new(derivative),
            natural_period,
            static_spectrum: false,
        };
        drive.validate()?;
        Ok(drive)
    }

    /// Time-independent Hamiltonian.
    pub fn constant(h: ComplexMatrix) -> Result<Self> {
        let dim = h.dim();
        let zero = ComplexMatrix::zeros(dim);
        Ok(Self::new(dim, move |_| h.clone(), move |_| zero.clone(), None)?.with_static_spectrum())
    }

    /// `H(t)` interpolated linearly from `h_start` at `t_start` to `h_end` at
    /// `t_end`, held constant outside that window.
    pub fn linear_ramp(h_start: ComplexMatrix, h_end: ComplexMatrix, t_start: f64, t_end: f64) -> Result<Self> {
        if h_start.dim() != h_end.dim() {
            return Err(Error::DimensionMismatch {
                expected: h_start.dim(),
                found: h_end.dim(),
            });
        }
        if !(t_end > t_start) {
            return Err(Error::InvalidParameter(format!(
                "ramp window [{t_start}, {t_end}] is empty"
            )));
        }
        let dim = h_start.dim();
        let span = t_end - t_start;
        let slope = (&h_end - &h_start).scale_real(1.0 / span);
        let slope_d = slope.clone();
        let h0 = h_start.clone();
        Self::new(
            dim,
            move |t| {
                let s = (t - t_start).clamp(0.0, span);
                &h0 + &slope.scale_real(s)
            },
            move |t| {
                if (t_start..=t_end).contains(&t) {
                    slope_d.clone()
                } else {
                    ComplexMatrix::zeros(dim)
                }
            },
            Some(span),
        )
    }

    /// `H(t) = h0 + h1 cos(omega t) + h2 sin(omega t)`.
    pub fn harmonic(h0: ComplexMatrix, h1: ComplexMatrix, h2: ComplexMatrix, omega: f64) -> Result<Self> {
        let dim = h0.dim();
        for h in [&h1, &h2] {
            if h.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: h.dim(),
                });
            }
        }
        if !(omega.is_finite() && omega != 0.0) {
            return Err(Error::InvalidParameter(format!("drive frequency {omega}")));
        }
        let (d1, d2) = (h1.clone(), h2.clone());
        Self::new(
            dim,
            move |t| {
                let (s, c) = (omega * t).sin_cos();
                &(&h0 + &h1.scale_real(c)) + &h2.scale_real(s)
            },
            move |t| {
                let (s, c) = (omega * t).sin_cos();
                &d1.scale_real(-omega * s) + &d2.scale_real(omega * c)
            },
            Some(std::f64::consts::TAU / omega.abs()),
        )
    }

    /// Declares that the instantaneous eigenvalues do not depend on time,
    /// so `dE_n/dt = 0` is used analytically.
    pub fn with_static_spectrum(mut self) -> Self {
        self.static_spectrum = true;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hamiltonian_at(&self, t: f64) -> ComplexMatrix {
        (self.hamiltonian)(t)
    }

    pub fn derivative_at(&self, t: f64) -> ComplexMatrix {
        (self.derivative)(t)
    }

    pub fn natural_period(&self) -> Option<f64> {
        self.natural_period
    }

    pub fn has_static_spectrum(&self) -> bool {
        self.static_spectrum
    }

    /// Largest mismatch between the analytic derivative and a central
    /// difference with step `1e-5` of the natural period, relative to `|H|`.
    pub fn derivative_mismatch(&self, t: f64) -> f64 {
        let h = 1e-5 * self.natural_period.unwrap_or(1.0);
        let fd = (&self.hamiltonian_at(t + h) - &self.hamiltonian_at(t - h)).scale_real(0.5 / h);
        let scale = self.hamiltonian_at(t).norm();
        fd.max_abs_diff(&self.derivative_at(t)) / scale.max(f64::MIN_POSITIVE)
    }

    fn validate(&self) -> Result<()> {
        let period = self.natural_period.unwrap_or(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        for _ in 0..10 {
            let t = rng.random_range(0.0..period);
            let h = self.hamiltonian_at(t);
            let dh = self.derivative_at(t);
            for op in [&h, &dh] {
                if op.dim() != self.dim {
                    return Err(Error::DimensionMismatch {
                        expected: self.dim,
                        found: op.dim(),
                    });
                }
                op.ensure_hermitian(INPUT_HERMITIAN_TOL)?;
            }
            let step = 1e-5 * period;
            let fd = (&self.hamiltonian_at(t + step) - &self.hamiltonian_at(t - step)).scale_real(0.5 / step);
            let mismatch = fd.max_abs_diff(&dh);
            if mismatch > 1e-6 * h.norm() + 1e-13 {
                return Err(Error::InvalidParameter(format!(
                    "analytic derivative disagrees with finite differences at t = {t} (|diff| = {mismatch:e})"
                )));
            }
        }
        Ok(())
    }
}

/// GKSL dissipator `sum_k g_k (L_k rho L_k^dagger - {L_k^dagger L_k, rho}/2)`.
#[derive(Clone, Debug)]
pub struct Dissipator {
    jump_operators: Vec<ComplexMatrix>,
    rates: Vec<f64>,
}

impl Dissipator {
    pub fn new(jump_operators: Vec<ComplexMatrix>, rates: Vec<f64>) -> Result<Self> {
        if jump_operators.len() != rates.len() {
            return Err(Error::DimensionMismatch {
                expected: jump_operators.len(),
                found: rates.len(),
            });
        }
        if let Some(r) = rates.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
            return Err(Error::InvalidParameter(format!("dissipation rate {r}")));
        }
        if let Some(first) = jump_operators.first() {
            if let Some(bad) = jump_operators.iter().find(|l| l.dim() != first.dim()) {
                return Err(Error::DimensionMismatch {
                    expected: first.dim(),
                    found: bad.dim(),
                });
            }
        }
        Ok(Self {
            jump_operators,
            rates,
        })
    }

    pub fn jump_operators(&self) -> &[ComplexMatrix] {
        &self.jump_operators
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    /// `None` for an empty dissipator.
    pub fn dim(&self) -> Option<usize> {
        self.jump_operators.first().map(ComplexMatrix::dim)
    }

    /// Copy with every rate multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.jump_operators.clone(),
            self.rates.iter().map(|r| r * factor).collect(),
        )
    }

    pub fn apply(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        let mut acc = DMatrix::<Complex64>::zeros(rho.dim(), rho.dim());
        let r = rho.inner();
        for (l, &g) in self.jump_operators.iter().zip(&self.rates) {
            if g == 0.0 {
                continue;
            }
            let l = l.inner();
            let ld = l.adjoint();
            let ldl = &ld * l;
            acc += (l * r * &ld - (&ldl * r + r * &ldl).map(|z| z * 0.5)).map(|z| z * g);
        }
        ComplexMatrix::from_inner(acc)
    }
}

/// Detailed-balance dissipator in the eigenbasis of a nondegenerate `h`:
/// jumps `|m><n|` with rate `base_rate` downhill and
/// `base_rate * exp(-(E_m - E_n) / k_B T)` uphill.
pub fn thermal_dissipator(h: &ComplexMatrix, temperature: f64, base_rate: f64) -> Result<Dissipator> {
    if !(temperature > 0.0) {
        return Err(Error::InvalidParameter(format!("temperature {temperature} must be > 0")));
    }
    if !(base_rate.is_finite() && base_rate > 0.0) {
        return Err(Error::InvalidParameter(format!("base rate {base_rate} must be > 0")));
    }
    let frame = diagonalize_instantaneous(h, 0.0, None)?;
    let floor = frame.default_gap_floor().max(f64::MIN_POSITIVE);
    let gap = frame.min_gap();
    if gap <= floor {
        return Err(Error::Degenerate { gap, floor });
    }
    let e = frame.energies();
    let v = frame.eigenvectors();
    let mut jumps = Vec::new();
    let mut rates = Vec::new();
    for m in 0..frame.dim() {
        for n in 0..frame.dim() {
            if m == n {
                continue;
            }
            let rise = e[m] - e[n];
            let rate = if rise <= 0.0 {
                base_rate
            } else {
                base_rate * (-rise / (K_B * temperature)).exp()
            };
            jumps.push(ComplexMatrix::outer(v[m].amplitudes(), v[n].amplitudes()));
            rates.push(rate);
        }
    }
    Dissipator::new(jumps, rates)
}

/// `-(i/hbar) [H(t), rho] + L_D(rho)`.
pub fn equation_of_motion(
    drive: &DriveProtocol,
    dissipator: Option<&Dissipator>,
    t: f64,
    rho: &ComplexMatrix,
) -> ComplexMatrix {
    let h = drive.hamiltonian_at(t);
    let (hm, r) = (h.inner(), rho.inner());
    let unitary = (hm * r - r * hm).map(|z| z * (-I / HBAR));
    let mut out = ComplexMatrix::from_inner(unitary);
    if let Some(d) = dissipator {
        out = &out + &d.apply(rho);
    }
    out
}

/// Sampled solution of the equation of motion.
#[derive(Clone, Debug)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<DensityMatrix>,
    frames: Vec<SpectralFrame>,
    dissipator: Option<Dissipator>,
    corrections: Vec<f64>,
    accepted_steps: usize,
    rejected_steps: usize,
}

impl Trajectory {
    /// Wraps externally computed states (e.g. closed-form solutions) and
    /// builds their continuity-aligned frames.
    pub fn from_states(
        drive: &DriveProtocol,
        times: Vec<f64>,
        states: Vec<DensityMatrix>,
        dissipator: Option<Dissipator>,
    ) -> Result<Self> {
        if times.len() != states.len() {
            return Err(Error::DimensionMismatch {
                expected: times.len(),
                found: states.len(),
            });
        }
        check_grid(&times)?;
        let frames = frames_along(drive, &times)?;
        let n = times.len();
        Ok(Self {
            times,
            states,
            frames,
            dissipator,
            corrections: vec![0.0; n],
            accepted_steps: 0,
            rejected_steps: 0,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[DensityMatrix] {
        &self.states
    }

    pub fn frames(&self) -> &[SpectralFrame] {
        &self.frames
    }

    pub fn dissipator(&self) -> Option<&Dissipator> {
        self.dissipator.as_ref()
    }

    /// True when no dissipator with a nonzero rate acted.
    pub fn is_unitary(&self) -> bool {
        self.dissipator
            .as_ref()
            .is_none_or(|d| d.rates().iter().all(|&r| r == 0.0))
    }

    /// Size of the re-Hermitization and trace renormalization applied at
    /// each output sample.
    pub fn corrections(&self) -> &[f64] {
        &self.corrections
    }

    pub fn accepted_steps(&self) -> usize {
        self.accepted_steps
    }

    pub fn rejected_steps(&self) -> usize {
        self.rejected_steps
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

fn check_grid(times: &[f64]) -> Result<()> {
    if times.len() < 2 {
        return Err(Error::InvalidParameter("time grid needs at least two points".into()));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("time grid"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("time grid must be strictly ascending".into()));
    }
    Ok(())
}

pub(crate) fn frames_along(drive: &DriveProtocol, times: &[f64]) -> Result<Vec<SpectralFrame>> {
    let mut frames: Vec<SpectralFrame> = Vec::with_capacity(times.len());
    for &t in times {
        let frame = diagonalize_instantaneous(&drive.hamiltonian_at(t), t, frames.last())?;
        frames.push(frame);
    }
    Ok(frames)
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// Fifth-order weights equal the last row of A (FSAL); these are b5 - b4.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const MAX_STEPS: usize = 5_000_000;

fn propagate(
    drive: &DriveProtocol,
    dissipator: Option<Dissipator>,
    rho0: &DensityMatrix,
    t_grid: &[f64],
    tol: f64,
) -> Result<Trajectory> {
    check_grid(t_grid)?;
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance {tol} must be > 0")));
    }
    if rho0.dim() != drive.dim() {
        return Err(Error::DimensionMismatch {
            expected: drive.dim(),
            found: rho0.dim(),
        });
    }
    if let Some(d) = dissipator.as_ref().and_then(Dissipator::dim) {
        if d != drive.dim() {
            return Err(Error::DimensionMismatch {
                expected: drive.dim(),
                found: d,
            });
        }
    }
    let diss = dissipator.as_ref();
    let rhs = |t: f64, y: &ComplexMatrix| equation_of_motion(drive, diss, t, y);

    let mut t = t_grid[0];
    let mut y = rho0.matrix().clone();
    let mut k1 = rhs(t, &y);

    let span = t_grid[t_grid.len() - 1] - t;
    let rate_scale = drive.hamiltonian_at(t).max_abs()
        + dissipator.as_ref().map_or(0.0, |d| d.rates().iter().sum::<f64>());
    let mut h = (0.01 / rate_scale.max(1e-12)).min(span) * tol.powf(0.2).clamp(1e-3, 1.0);

    let mut states = vec![rho0.clone()];
    let mut corrections = vec![0.0];
    let (mut accepted, mut rejected) = (0usize, 0usize);

    for &target in &t_grid[1..] {
        while t < target {
            if accepted + rejected > MAX_STEPS {
                return Err(Error::Integration {
                    t,
                    reason: format!("exceeded {MAX_STEPS} steps"),
                });
            }
            let remaining = target - t;
            let clamped = h >= remaining;
            let step = if clamped { remaining } else { h };
            if step < 1e-13 * t.abs().max(1.0) && !clamped {
                return Err(Error::Integration {
                    t,
                    reason: format!("step size underflow (h = {step:e}); the problem may be stiff"),
                });
            }

            let mut ks: Vec<ComplexMatrix> = Vec::with_capacity(7);
            ks.push(k1.clone());
            for stage in 1..7 {
                let mut acc = y.inner().clone();
                for (prev, &a) in ks.iter().zip(&A[stage]) {
                    if a != 0.0 {
                        acc += prev.inner().map(|z| z * (a * step));
                    }
                }
                ks.push(rhs(t + C[stage] * step, &ComplexMatrix::from_inner(acc)));
            }
            // The seventh stage was evaluated at the fifth-order solution.
            let mut y5 = y.inner().clone();
            for (k, &b) in ks.iter().zip(&A[6]) {
                if b != 0.0 {
                    y5 += k.inner().map(|z| z * (b * step));
                }
            }
            let mut err_m = DMatrix::<Complex64>::zeros(y.dim(), y.dim());
            for (k, &e) in ks.iter().zip(&E) {
                if e != 0.0 {
                    err_m += k.inner().map(|z| z * (e * step));
                }
            }
            let err = err_m.iter().map(|z| z.norm()).fold(0.0, f64::max);
            if !err.is_finite() {
                return Err(Error::Integration {
                    t,
                    reason: "non-finite state".into(),
                });
            }

            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * (tol / err).powf(0.2)).clamp(0.2, 5.0)
            };
            if err <= tol {
                t = if clamped { target } else { t + step };
                y = ComplexMatrix::from_inner(y5);
                k1 = ks.pop().expect("seven stages");
                accepted += 1;
                if !clamped {
                    h = step * factor;
                } else {
                    h = h.max(step * factor);
                }
            } else {
                rejected += 1;
                h = step * factor.min(0.9);
            }
        }
        let (state, correction) = DensityMatrix::repaired(&y)?;
        if correction > 10.0 * tol {
            log::warn!("output correction {correction:e} at t = {t} exceeds 10 * tol");
        }
        log::trace!("t = {t}: output correction {correction:e}");
        states.push(state);
        corrections.push(correction);
    }

    let frames = frames_along(drive, t_grid)?;
    Ok(Trajectory {
        times: t_grid.to_vec(),
        states,
        frames,
        dissipator,
        corrections,
        accepted_steps: accepted,
        rejected_steps: rejected,
    })
}

/// Integrates the Liouville-von Neumann equation with local error `< tol`.
pub fn propagate_unitary(
    drive: &DriveProtocol,
    rho0: &DensityMatrix,
    t_grid: &[f64],
    tol: f64,
) -> Result<Trajectory> {
    propagate(drive, None, rho0, t_grid, tol)
}

/// Integrates the GKSL master equation with local error `< tol`.
pub fn propagate_lindblad(
    drive: &DriveProtocol,
    dissipator: &Dissipator,
    rho0: &DensityMatrix,
    t_grid: &[f64],
    tol: f64,
) -> Result<Trajectory> {
    propagate(drive, Some(dissipator.clone()), rho0, t_grid, tol)
}

/// Evenly spaced grid with `samples` points on `[t_start, t_end]`.
pub fn uniform_grid(t_start: f64, t_end: f64, samples: usize) -> Vec<f64> {
    let n = samples.max(2) - 1;
    (0..=n)
        .map(|i| {
            if i == n {
                t_end
            } else {
                t_start + (t_end - t_start) * i as f64 / n as f64
            }
        })
        .collect()
}

/// `<psi|rho|psi>`.
pub fn fidelity_with_pure(rho: &DensityMatrix, psi: &QuantumState) -> f64 {
    let r = rho.matrix().apply(psi);
    crate::linalg::inner_product(psi.amplitudes(), &r).re
}

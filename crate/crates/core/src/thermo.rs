//! Heat and work rates with coherence corrections.
//!
//! In the instantaneous eigenframe `H(t) = sum_n E_n |n><n|` the energy rate
//! splits into four terms,
//!
//! ```text
//! dU/dt = sum_n d(rho_nn)/dt E_n - C + sum_n rho_nn dE_n/dt + C,
//! C     = sum_{n != m} rho_nm <m| dH/dt |n>,
//! ```
//!
//! and the heat and work rates are `Qdot = sum d(rho_nn)/dt E_n - C` and
//! `Wdot = sum rho_nn dE_n/dt + C`. Dropping `C` gives the naive split, which
//! assigns work to heat whenever the driven state carries coherence in the
//! moving eigenbasis.
//!
//! `d(rho_nn)/dt` is the derivative of `<n(t)|rho(t)|n(t)>`; it includes the
//! motion of the basis through the couplings `<m|dn/dt>`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{equation_of_motion, frames_along, propagate_lindblad, DriveProtocol, Dissipator, Trajectory};
use crate::linalg::{hermitian_eigenvalues, purity, trace_product, ComplexMatrix, DensityMatrix};
use crate::quadrature::integrate;
use crate::spectra::{adiabatic_parameter, diagonalize_instantaneous, transition_elements, SpectralFrame, TransitionMatrix};
use crate::units::K_B;
use crate::{Error, Result};

/// Default absolute tolerance (scaled by the sample scale) for audits.
pub const DEFAULT_AUDIT_TOL: f64 = 1e-8;

/// The energy-rate decomposition at one instant.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FluxSample {
    pub t: f64,
    /// Internal energy `Tr(rho H)`.
    pub u: f64,
    /// `Tr(rho_dot H) + Tr(rho dH/dt)`.
    pub u_dot: f64,
    pub q_dot: f64,
    pub w_dot: f64,
    /// `sum_n d(rho_nn)/dt E_n`.
    pub diag_pop_flux: f64,
    /// `sum_n rho_nn dE_n/dt`.
    pub diag_energy_flux: f64,
    /// Real part of `sum_{n != m} rho_nm <m|dH/dt|n>`.
    pub coherence_flux: f64,
    /// Imaginary part of the same sum; zero up to rounding.
    pub coherence_imag: f64,
    pub q_dot_naive: f64,
    pub w_dot_naive: f64,
    /// `u_dot - q_dot - w_dot`.
    pub first_law_residual: f64,
    /// Quantum adiabatic parameter; `None` at a degeneracy.
    pub tau: Option<f64>,
    pub purity: f64,
    /// `max|E_n| * max(1, |rho_dot|)`, the yardstick for residuals.
    pub scale: f64,
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// Fills a [`FluxSample`] from the frame, the state, its time derivative
/// (lab basis), the transition elements and the level velocities.
pub fn flux_decomposition(
    frame: &SpectralFrame,
    rho: &DensityMatrix,
    rho_dot: &ComplexMatrix,
    m: &TransitionMatrix,
    edot: &[f64],
) -> Result<FluxSample> {
    let dim = frame.dim();
    check_dim(dim, rho.dim())?;
    check_dim(dim, rho_dot.dim())?;
    check_dim(dim, m.dim())?;
    check_dim(dim, edot.len())?;
    if edot.iter().any(|e| !e.is_finite()) {
        return Err(Error::NonFinite("level velocities"));
    }
    let rd_norm = rho_dot.norm();
    if !rd_norm.is_finite() {
        return Err(Error::NonFinite("rho_dot"));
    }
    let slack = 1e-9 * rd_norm.max(1.0);
    if rho_dot.hermitian_deviation() > slack {
        return Err(Error::NotHermitian {
            deviation: rho_dot.hermitian_deviation(),
        });
    }
    if rho_dot.trace().norm() > slack {
        return Err(Error::InvalidParameter(format!(
            "rho_dot must be traceless (trace {:e})",
            rho_dot.trace().norm()
        )));
    }

    let e = frame.energies();
    let r = frame.to_frame(rho.matrix())?;
    let rd = frame.to_frame(rho_dot)?;
    let floor = frame.default_gap_floor();

    let mut trace_rate = 0.0; // sum_n <n|rho_dot|n> E_n
    let mut diag_energy = 0.0;
    let mut u = 0.0;
    let mut diag_m = 0.0; // sum_n rho_nn M_nn
    for n in 0..dim {
        trace_rate += rd.get(n, n).re * e[n];
        diag_energy += r.get(n, n).re * edot[n];
        diag_m += r.get(n, n).re * m.get(n, n).re;
        u += r.get(n, n).re * e[n];
    }

    let mut coherence = Complex64::new(0.0, 0.0);
    let mut basis_motion = 0.0; // sum_n E_n d/dt of <n|rho|n> from moving |n>
    for n in 0..dim {
        for k in 0..dim {
            if n == k {
                continue;
            }
            let x = r.get(n, k) * m.get(k, n);
            coherence += x;
            let gap = e[n] - e[k];
            basis_motion += if gap.abs() > floor {
                // 2 E_n Re(rho_nk <k|dn/dt>), <k|dn/dt> = M_kn / (E_n - E_k)
                2.0 * e[n] * (x / gap).re
            } else {
                // Within a degenerate pair only the pair sum is defined.
                x.re
            };
        }
    }

    let diag_pop = trace_rate + basis_motion;
    let u_dot = trace_rate + diag_m + coherence.re;
    let q_dot = diag_pop - coherence.re;
    let w_dot = diag_energy + coherence.re;
    let e_max = e.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let scale = e_max * rd_norm.max(1.0);
    if coherence.im.abs() > 1e-9 * scale.max(1.0) {
        log::warn!(
            "t = {}: imaginary part of the coherence flux is {:e}",
            frame.t(),
            coherence.im
        );
    }
    Ok(FluxSample {
        t: frame.t(),
        u,
        u_dot,
        q_dot,
        w_dot,
        diag_pop_flux: diag_pop,
        diag_energy_flux: diag_energy,
        coherence_flux: coherence.re,
        coherence_imag: coherence.im,
        q_dot_naive: diag_pop,
        w_dot_naive: diag_energy,
        first_law_residual: u_dot - q_dot - w_dot,
        tau: adiabatic_parameter(frame, m, None).ok(),
        purity: purity(rho),
        scale,
    })
}

/// Level velocities: zero for drives with a static spectrum, otherwise the
/// diagonal transition elements `M_nn`.
fn level_velocities(drive: &DriveProtocol, m: &TransitionMatrix) -> Vec<f64> {
    if drive.has_static_spectrum() {
        vec![0.0; m.dim()]
    } else {
        (0..m.dim()).map(|n| m.get(n, n).re).collect()
    }
}

/// Flux sample at one point of a trajectory, with `rho_dot` from the
/// equation of motion.
pub fn sample_at(
    drive: &DriveProtocol,
    dissipator: Option<&Dissipator>,
    frame: &SpectralFrame,
    rho: &DensityMatrix,
) -> Result<FluxSample> {
    let t = frame.t();
    let rho_dot = equation_of_motion(drive, dissipator, t, rho.matrix());
    let m = transition_elements(frame, &drive.derivative_at(t))?;
    let edot = level_velocities(drive, &m);
    flux_decomposition(frame, rho, &rho_dot, &m, &edot)
}

/// Time-integrated energy balance over a trajectory.
#[derive(Clone, Debug)]
pub struct EnergyLedger {
    pub samples: Vec<FluxSample>,
    /// Integrated heat.
    pub q: f64,
    /// Integrated work.
    pub w: f64,
    pub u0: f64,
    pub u_final: f64,
    pub q_error: f64,
    pub w_error: f64,
    pub initial_state: DensityMatrix,
    pub final_state: DensityMatrix,
}

impl EnergyLedger {
    fn from_samples(
        samples: Vec<FluxSample>,
        initial_state: DensityMatrix,
        final_state: DensityMatrix,
        tol: f64,
    ) -> Result<Self> {
        let times: Vec<f64> = samples.iter().map(|s| s.t).collect();
        let qd: Vec<f64> = samples.iter().map(|s| s.q_dot).collect();
        let wd: Vec<f64> = samples.iter().map(|s| s.w_dot).collect();
        let q = integrate(&times, &qd);
        let w = integrate(&times, &wd);
        let scale = samples.iter().map(|s| s.scale).fold(1.0, f64::max);
        let tolerance = tol * scale;
        let estimate = q.error_estimate.max(w.error_estimate);
        if estimate > tolerance {
            return Err(Error::GridTooCoarse { estimate, tolerance });
        }
        let u0 = samples.first().map_or(0.0, |s| s.u);
        let u_final = samples.last().map_or(0.0, |s| s.u);
        Ok(Self {
            samples,
            q: q.value,
            w: w.value,
            u0,
            u_final,
            q_error: q.error_estimate,
            w_error: w.error_estimate,
            initial_state,
            final_state,
        })
    }

    pub fn delta_u(&self) -> f64 {
        self.u_final - self.u0
    }

    /// `Delta U - Q - W`.
    pub fn first_law_gap(&self) -> f64 {
        self.delta_u() - self.q - self.w
    }

    pub fn max_first_law_residual(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.first_law_residual.abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_q_dot(&self) -> f64 {
        self.samples.iter().map(|s| s.q_dot.abs()).fold(0.0, f64::max)
    }

    pub fn max_abs_q_dot_naive(&self) -> f64 {
        self.samples.iter().map(|s| s.q_dot_naive.abs()).fold(0.0, f64::max)
    }

    pub fn max_scale(&self) -> f64 {
        self.samples.iter().map(|s| s.scale).fold(0.0, f64::max)
    }

    /// Largest `tau` over the samples where it is defined.
    pub fn max_tau(&self) -> Option<f64> {
        self.samples.iter().filter_map(|s| s.tau).reduce(f64::max)
    }
}

fn ensure_audit_tol(tol: f64) -> Result<()> {
    if tol.is_finite() && tol > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("audit tolerance {tol} must be > 0")))
    }
}

/// Per-sample decomposition and integrated heat and work along a
/// trajectory. Fails with [`Error::GridTooCoarse`] when the quadrature
/// error estimate exceeds `tol * max(1, scale)`.
pub fn audit_trajectory(traj: &Trajectory, drive: &DriveProtocol, tol: f64) -> Result<EnergyLedger> {
    ensure_audit_tol(tol)?;
    if traj.len() < 3 {
        return Err(Error::InvalidParameter("audit needs at least three samples".into()));
    }
    check_dim(drive.dim(), traj.states()[0].dim())?;
    let diss = traj.dissipator();
    let samples = traj
        .frames()
        .par_iter()
        .zip(traj.states().par_iter())
        .map(|(frame, rho)| sample_at(drive, diss, frame, rho))
        .collect::<Result<Vec<_>>>()?;
    let first = traj.states()[0].clone();
    let last = traj.states()[traj.len() - 1].clone();
    EnergyLedger::from_samples(samples, first, last, tol)
}

/// Worst-case violations of the closed-system identities along a
/// trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AdiabaticityReport {
    /// `max |Tr(rho_dot H)|`, computed in the lab basis.
    pub max_trace_rate: f64,
    /// `max |sum d(rho_nn)/dt E_n - sum_{n != m} rho_nm M_mn|`.
    pub max_identity_residual: f64,
    /// `max |Qdot|`.
    pub max_q_dot: f64,
    pub max_scale: f64,
}

impl AdiabaticityReport {
    pub fn max(&self) -> f64 {
        self.max_trace_rate.max(self.max_identity_residual)
    }
}

/// For unitary evolution `Tr(rho_dot H) = 0`, equivalently the population
/// flux equals the coherence flux. Reports how far a trajectory is from it.
pub fn adiabaticity_audit(traj: &Trajectory, drive: &DriveProtocol) -> Result<AdiabaticityReport> {
    if !traj.is_unitary() {
        return Err(Error::NotApplicable(
            "the adiabaticity identity holds only for unitary evolution".into(),
        ));
    }
    let rows = traj
        .frames()
        .par_iter()
        .zip(traj.states().par_iter())
        .map(|(frame, rho)| {
            let t = frame.t();
            let rho_dot = equation_of_motion(drive, None, t, rho.matrix());
            let tr = trace_product(&rho_dot, &drive.hamiltonian_at(t))?.re;
            let s = sample_at(drive, None, frame, rho)?;
            Ok((tr.abs(), (s.diag_pop_flux - s.coherence_flux).abs(), s.q_dot.abs(), s.scale))
        })
        .collect::<Result<Vec<_>>>()?;
    let fold = |f: fn(&(f64, f64, f64, f64)) -> f64| rows.iter().map(f).fold(0.0, f64::max);
    Ok(AdiabaticityReport {
        max_trace_rate: fold(|r| r.0),
        max_identity_residual: fold(|r| r.1),
        max_q_dot: fold(|r| r.2),
        max_scale: fold(|r| r.3),
    })
}

fn ensure_temperature(temperature: f64) -> Result<()> {
    if temperature > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("temperature {temperature} must be > 0")))
    }
}

/// Boltzmann weights for the given energies; `T = inf` gives uniform weights.
pub fn boltzmann_weights(energies: &[f64], temperature: f64) -> Result<Vec<f64>> {
    ensure_temperature(temperature)?;
    let e_min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = energies
        .iter()
        .map(|e| (-(e - e_min) / (K_B * temperature)).exp())
        .collect();
    let z: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / z).collect())
}

fn gibbs_in_frame(frame: &SpectralFrame, temperature: f64) -> Result<(DensityMatrix, Vec<f64>)> {
    let p = boltzmann_weights(frame.energies(), temperature)?;
    Ok((DensityMatrix::from_spectral(&p, frame.eigenvectors()), p))
}

/// Thermal state `exp(-H / k_B T) / Z`.
pub fn gibbs_state(h: &ComplexMatrix, temperature: f64) -> Result<DensityMatrix> {
    ensure_temperature(temperature)?;
    let frame = diagonalize_instantaneous(h, 0.0, None)?;
    Ok(gibbs_in_frame(&frame, temperature)?.0)
}

/// Helmholtz free energy `-k_B T ln Z`.
pub fn free_energy(h: &ComplexMatrix, temperature: f64) -> Result<f64> {
    ensure_temperature(temperature)?;
    h.ensure_hermitian(crate::linalg::INPUT_HERMITIAN_TOL)?;
    let e = hermitian_eigenvalues(h);
    let e_min = e.iter().copied().fold(f64::INFINITY, f64::min);
    let kt = K_B * temperature;
    let z_shifted: f64 = e.iter().map(|x| (-(x - e_min) / kt).exp()).sum();
    Ok(e_min - kt * z_shifted.ln())
}

/// `-Tr(rho ln rho)` in units of `k_B`.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> f64 {
    hermitian_eigenvalues(rho.matrix())
        .into_iter()
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum()
}

/// `(p_n - p_m) / (E_n - E_m)` for Boltzmann weights, finite at `E_n = E_m`.
fn boltzmann_divided_difference(p_m: f64, e_n: f64, e_m: f64, temperature: f64) -> f64 {
    let delta = e_n - e_m;
    let kt = K_B * temperature;
    if delta == 0.0 {
        -p_m / kt
    } else {
        p_m * (-delta / kt).exp_m1() / delta
    }
}

/// Quasi-static isothermal process: the state is the Gibbs state of `H(t)`
/// at every grid point, and its time derivative follows from differentiating
/// `exp(-H(t)/k_B T)/Z` exactly. The coherence term vanishes identically, so
/// `Qdot = sum_n dp_n/dt E_n` and `Wdot = sum_n p_n dE_n/dt`.
pub fn quasistatic_isothermal(
    drive: &DriveProtocol,
    temperature: f64,
    t_grid: &[f64],
    tol: f64,
) -> Result<EnergyLedger> {
    ensure_temperature(temperature)?;
    ensure_audit_tol(tol)?;
    if t_grid.len() < 3 {
        return Err(Error::InvalidParameter("audit needs at least three samples".into()));
    }
    let frames = frames_along(drive, t_grid)?;
    let rows = frames
        .par_iter()
        .map(|frame| {
            let (rho, p) = gibbs_in_frame(frame, temperature)?;
            let m = transition_elements(frame, &drive.derivative_at(frame.t()))?;
            let edot = level_velocities(drive, &m);
            let mean_edot: f64 = p.iter().zip(&edot).map(|(a, b)| a * b).sum();
            let e = frame.energies();
            let kt = K_B * temperature;
            let rd_frame = ComplexMatrix::from_fn(frame.dim(), |a, b| {
                if a == b {
                    Complex64::new(-p[a] * (edot[a] - mean_edot) / kt, 0.0)
                } else {
                    m.get(a, b) * boltzmann_divided_difference(p[a], e[b], e[a], temperature)
                }
            });
            let basis = frame.basis();
            let rho_dot = rd_frame.conjugate_by(&basis.adjoint());
            let sample = flux_decomposition(frame, &rho, &rho_dot, &m, &edot)?;
            Ok((sample, rho))
        })
        .collect::<Result<Vec<_>>>()?;
    let first = rows[0].1.clone();
    let last = rows[rows.len() - 1].1.clone();
    let samples = rows.into_iter().map(|(s, _)| s).collect();
    EnergyLedger::from_samples(samples, first, last, tol)
}

/// Relaxation under a fixed Hamiltonian: no work is done and all energy
/// change is heat carried by population transfer.
pub fn isochoric_process(
    h: &ComplexMatrix,
    diss: &Dissipator,
    rho0: &DensityMatrix,
    t_grid: &[f64],
    tol: f64,
) -> Result<EnergyLedger> {
    let drive = DriveProtocol::constant(h.clone())?;
    let traj = propagate_lindblad(&drive, diss, rho0, t_grid, tol)?;
    audit_trajectory(&traj, &drive, DEFAULT_AUDIT_TOL)
}

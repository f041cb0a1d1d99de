//! Python bindings for `coherent-flux-core`.
//!
//! Matrices cross the boundary as nested lists of Python `complex`.

use std::path::PathBuf;

use coherent_flux_core::angular::{wigner_small_d as core_wigner, SpinQuantumNumber};
use coherent_flux_core::dynamics::{
    fidelity_with_pure, propagate_lindblad, propagate_unitary, thermal_dissipator, uniform_grid, DriveProtocol,
};
use coherent_flux_core::linalg::{pure_state_density, ComplexMatrix, DensityMatrix};
use coherent_flux_core::models::{self, HighSpinParams, TwoLevelParams};
use coherent_flux_core::scenario::{self, ScenarioConfig, ScenarioReport};
use coherent_flux_core::spectra::diagonalize_instantaneous;
use coherent_flux_core::thermo::{self, EnergyLedger};
use coherent_flux_core::{Complex64, Error};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

type Rows = Vec<Vec<Complex64>>;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        Error::Integration { .. } | Error::GridTooCoarse { .. } => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn matrix(rows: &Rows) -> PyResult<ComplexMatrix> {
    ComplexMatrix::from_rows(rows).map_err(to_py)
}

fn rows_of(m: &ComplexMatrix) -> Rows {
    (0..m.dim())
        .map(|r| (0..m.dim()).map(|c| m.get(r, c)).collect())
        .collect()
}

fn density(rows: &Rows) -> PyResult<DensityMatrix> {
    DensityMatrix::new(matrix(rows)?).map_err(to_py)
}

fn spin(j: f64) -> PyResult<SpinQuantumNumber> {
    let twice = 2.0 * j;
    if !(twice >= 0.0 && (twice - twice.round()).abs() < 1e-9) {
        return Err(PyValueError::new_err(format!("j = {j} must be a non-negative multiple of 1/2")));
    }
    Ok(SpinQuantumNumber::from_twice(twice.round() as u32))
}

/// Energy-rate decomposition at one instant.
#[pyclass(name = "FluxSample", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct PyFluxSample {
    t: f64,
    u: f64,
    u_dot: f64,
    q_dot: f64,
    w_dot: f64,
    diag_pop_flux: f64,
    diag_energy_flux: f64,
    coherence_flux: f64,
    q_dot_naive: f64,
    w_dot_naive: f64,
    first_law_residual: f64,
    tau: Option<f64>,
    purity: f64,
}

impl From<&thermo::FluxSample> for PyFluxSample {
    fn from(s: &thermo::FluxSample) -> Self {
        Self {
            t: s.t,
            u: s.u,
            u_dot: s.u_dot,
            q_dot: s.q_dot,
            w_dot: s.w_dot,
            diag_pop_flux: s.diag_pop_flux,
            diag_energy_flux: s.diag_energy_flux,
            coherence_flux: s.coherence_flux,
            q_dot_naive: s.q_dot_naive,
            w_dot_naive: s.w_dot_naive,
            first_law_residual: s.first_law_residual,
            tau: s.tau,
            purity: s.purity,
        }
    }
}

#[pymethods]
impl PyFluxSample {
    fn __repr__(&self) -> String {
        format!(
            "FluxSample(t={}, q_dot={:.3e}, w_dot={:.3e}, q_dot_naive={:.3e})",
            self.t, self.q_dot, self.w_dot, self.q_dot_naive
        )
    }
}

/// Integrated heat and work along a trajectory.
#[pyclass(name = "EnergyLedger", frozen)]
struct PyEnergyLedger(EnergyLedger);

#[pymethods]
impl PyEnergyLedger {
    #[getter]
    fn q(&self) -> f64 {
        self.0.q
    }

    #[getter]
    fn w(&self) -> f64 {
        self.0.w
    }

    #[getter]
    fn delta_u(&self) -> f64 {
        self.0.delta_u()
    }

    #[getter]
    fn first_law_gap(&self) -> f64 {
        self.0.first_law_gap()
    }

    #[getter]
    fn max_abs_q_dot(&self) -> f64 {
        self.0.max_abs_q_dot()
    }

    #[getter]
    fn samples(&self) -> Vec<PyFluxSample> {
        self.0.samples.iter().map(PyFluxSample::from).collect()
    }

    fn __len__(&self) -> usize {
        self.0.samples.len()
    }
}

/// Spin-1/2 in a field rotating on a cone of half-angle `alpha`.
#[pyclass(name = "TwoLevel", frozen)]
struct PyTwoLevel(TwoLevelParams);

#[pymethods]
impl PyTwoLevel {
    #[new]
    fn new(omega1: f64, omega: f64, alpha: f64) -> PyResult<Self> {
        TwoLevelParams::new(omega1, omega, alpha).map(Self).map_err(to_py)
    }

    #[getter]
    fn lambda_(&self) -> f64 {
        self.0.lambda()
    }

    #[getter]
    fn period(&self) -> Option<f64> {
        self.0.period()
    }

    #[getter]
    fn adiabatic_parameter(&self) -> f64 {
        models::two_level_adiabatic_parameter(&self.0)
    }

    fn populations(&self, t: f64) -> (f64, f64) {
        models::two_level_populations(&self.0, t)
    }

    fn exact_state(&self, t: f64) -> Vec<Complex64> {
        models::two_level_exact_state(&self.0, t).amplitudes().to_vec()
    }

    /// Closed-form work rate, equal to the naive heat rate.
    fn coherence_flux(&self, t: f64) -> f64 {
        models::two_level_coherence_flux(&self.0, t)
    }

    fn work(&self, t: f64) -> f64 {
        models::two_level_work(&self.0, t)
    }

    /// Audits the exact state on a uniform grid.
    #[pyo3(signature = (t_end, samples = 2001, tol = thermo::DEFAULT_AUDIT_TOL))]
    fn audit(&self, t_end: f64, samples: usize, tol: f64) -> PyResult<PyEnergyLedger> {
        let drive = models::two_level_drive(&self.0).map_err(to_py)?;
        let grid = uniform_grid(0.0, t_end, samples);
        let states = grid
            .iter()
            .map(|&t| pure_state_density(&models::two_level_exact_state(&self.0, t)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(to_py)?;
        let traj = coherent_flux_core::dynamics::Trajectory::from_states(&drive, grid, states, None).map_err(to_py)?;
        thermo::audit_trajectory(&traj, &drive, tol).map(PyEnergyLedger).map_err(to_py)
    }

    /// Propagates the initial eigenstate numerically; returns the ledger
    /// and the worst infidelity against the exact state.
    #[pyo3(signature = (t_end, samples = 2001, tol = 1e-10))]
    fn propagate(&self, t_end: f64, samples: usize, tol: f64) -> PyResult<(PyEnergyLedger, f64)> {
        let p = &self.0;
        let drive = models::two_level_drive(p).map_err(to_py)?;
        let grid = uniform_grid(0.0, t_end, samples);
        let rho0 = pure_state_density(&models::two_level_exact_state(p, 0.0)).map_err(to_py)?;
        let traj = propagate_unitary(&drive, &rho0, &grid, tol).map_err(to_py)?;
        let infidelity = traj
            .times()
            .iter()
            .zip(traj.states())
            .map(|(&t, rho)| 1.0 - fidelity_with_pure(rho, &models::two_level_exact_state(p, t)))
            .fold(0.0, f64::max);
        let ledger = thermo::audit_trajectory(&traj, &drive, thermo::DEFAULT_AUDIT_TOL).map_err(to_py)?;
        Ok((PyEnergyLedger(ledger), infidelity))
    }
}

/// Spin `j` precessing about a rotating field.
#[pyclass(name = "HighSpin", frozen)]
struct PyHighSpin(HighSpinParams);

#[pymethods]
impl PyHighSpin {
    #[new]
    #[pyo3(signature = (j, m, theta, lambda0, gamma_b0 = 1.0))]
    fn new(j: f64, m: f64, theta: f64, lambda0: f64, gamma_b0: f64) -> PyResult<Self> {
        let j = spin(j)?;
        let twice_m = 2.0 * m;
        if (twice_m - twice_m.round()).abs() > 1e-9 {
            return Err(PyValueError::new_err(format!("m = {m} must be a multiple of 1/2")));
        }
        let m = coherent_flux_core::angular::HalfInt::from_twice(twice_m.round() as i32);
        HighSpinParams::from_lambda0(j, gamma_b0, theta, lambda0, m)
            .map(Self)
            .map_err(to_py)
    }

    fn energies(&self) -> Vec<f64> {
        self.0.energies()
    }

    /// `(lambda0, omega0, phi, beta)` of the rotating frame.
    fn rotating_frame(&self) -> PyResult<(f64, f64, f64, f64)> {
        let f = models::rotating_frame_params(&self.0).map_err(to_py)?;
        Ok((f.lambda0, f.omega0, f.phi, f.beta))
    }

    #[getter]
    fn adiabatic_parameter(&self) -> f64 {
        models::highspin_adiabatic_parameter(&self.0)
    }

    fn exact_state(&self, t: f64) -> PyResult<Vec<Complex64>> {
        Ok(models::highspin_exact_state(&self.0, t).map_err(to_py)?.amplitudes().to_vec())
    }

    fn diag_flux(&self, t: f64) -> PyResult<f64> {
        models::highspin_diag_flux(&self.0, t).map_err(to_py)
    }

    fn coherence_flux(&self, t: f64) -> PyResult<f64> {
        models::highspin_coherence_flux(&self.0, t).map_err(to_py)
    }

    /// Flux sample of the exact state, evaluated in a numerically
    /// diagonalised frame.
    fn sample(&self, t: f64) -> PyResult<PyFluxSample> {
        let drive = models::highspin_drive(&self.0).map_err(to_py)?;
        let frame = diagonalize_instantaneous(&drive.hamiltonian_at(t), t, None).map_err(to_py)?;
        let psi = models::highspin_exact_state(&self.0, t).map_err(to_py)?;
        let rho = pure_state_density(&psi).map_err(to_py)?;
        let s = thermo::sample_at(&drive, None, &frame, &rho).map_err(to_py)?;
        Ok(PyFluxSample::from(&s))
    }
}

/// Real Wigner small-d matrix, rows and columns ordered `m = j, ..., -j`.
#[pyfunction]
fn wigner_small_d(j: f64, beta: f64) -> PyResult<Vec<Vec<f64>>> {
    Ok(core_wigner(spin(j)?, beta).map_err(to_py)?.rows())
}

/// Flux decomposition of `rho` under the Hamiltonian `h + t hdot` at `t = 0`.
#[pyfunction]
fn flux_sample(h: Rows, hdot: Rows, rho: Rows) -> PyResult<PyFluxSample> {
    let (h, hdot, rho) = (matrix(&h)?, matrix(&hdot)?, density(&rho)?);
    let slope = hdot.clone();
    let drive = DriveProtocol::new(
        h.dim(),
        move |t| ComplexMatrix::new(h.inner() + slope.inner() * Complex64::new(t, 0.0)).expect("square"),
        move |_| hdot.clone(),
        None,
    )
    .map_err(to_py)?;
    let frame = diagonalize_instantaneous(&drive.hamiltonian_at(0.0), 0.0, None).map_err(to_py)?;
    let s = thermo::sample_at(&drive, None, &frame, &rho).map_err(to_py)?;
    Ok(PyFluxSample::from(&s))
}

#[pyfunction]
fn gibbs_state(h: Rows, temperature: f64) -> PyResult<Rows> {
    let g = thermo::gibbs_state(&matrix(&h)?, temperature).map_err(to_py)?;
    Ok(rows_of(g.matrix()))
}

#[pyfunction]
fn free_energy(h: Rows, temperature: f64) -> PyResult<f64> {
    thermo::free_energy(&matrix(&h)?, temperature).map_err(to_py)
}

#[pyfunction]
fn von_neumann_entropy(rho: Rows) -> PyResult<f64> {
    Ok(thermo::von_neumann_entropy(&density(&rho)?))
}

/// Relaxation of `rho0` under a fixed `h` with detailed-balance jumps.
#[pyfunction]
#[pyo3(signature = (h, temperature, base_rate, rho0, t_end, samples = 2001, tol = 1e-10))]
fn isochoric(
    h: Rows,
    temperature: f64,
    base_rate: f64,
    rho0: Rows,
    t_end: f64,
    samples: usize,
    tol: f64,
) -> PyResult<PyEnergyLedger> {
    let h = matrix(&h)?;
    let diss = thermal_dissipator(&h, temperature, base_rate).map_err(to_py)?;
    let drive = DriveProtocol::constant(h).map_err(to_py)?;
    let grid = uniform_grid(0.0, t_end, samples);
    let traj = propagate_lindblad(&drive, &diss, &density(&rho0)?, &grid, tol).map_err(to_py)?;
    thermo::audit_trajectory(&traj, &drive, thermo::DEFAULT_AUDIT_TOL)
        .map(PyEnergyLedger)
        .map_err(to_py)
}

/// Outcome of a scenario run.
#[pyclass(name = "ScenarioReport", frozen)]
struct PyScenarioReport(ScenarioReport);

#[pymethods]
impl PyScenarioReport {
    #[getter]
    fn passed(&self) -> bool {
        self.0.summary.pass
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.0.kind.name()
    }

    fn csv(&self) -> String {
        self.0.to_csv()
    }

    fn summary_json(&self) -> String {
        self.0.summary_json()
    }

    fn failed_checks(&self) -> Vec<String> {
        self.0.summary.failed_checks().into_iter().map(String::from).collect()
    }

    #[getter]
    fn samples(&self) -> Vec<PyFluxSample> {
        self.0.samples.iter().map(PyFluxSample::from).collect()
    }

    /// Writes the CSV and summary into `directory`; returns both paths.
    fn write(&self, directory: PathBuf) -> PyResult<(PathBuf, PathBuf)> {
        self.0.write_to(&directory).map_err(to_py)
    }
}

/// Runs a scenario from its JSON configuration.
#[pyfunction]
fn run_scenario(py: Python<'_>, config_json: &str) -> PyResult<PyScenarioReport> {
    let config = ScenarioConfig::from_json_str(config_json).map_err(to_py)?;
    py.detach(|| scenario::run_scenario(&config))
        .map(PyScenarioReport)
        .map_err(to_py)
}

/// Runs a parameter sweep; returns the sweep CSV.
#[pyfunction]
fn run_sweep(py: Python<'_>, config_json: &str, parameter: &str, values: Vec<f64>) -> PyResult<String> {
    let config = ScenarioConfig::from_json_str(config_json).map_err(to_py)?;
    py.detach(|| scenario::run_sweep(&config, parameter, &values))
        .map(|s| s.to_csv())
        .map_err(to_py)
}

#[pymodule]
fn coherent_flux(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFluxSample>()?;
    m.add_class::<PyEnergyLedger>()?;
    m.add_class::<PyTwoLevel>()?;
    m.add_class::<PyHighSpin>()?;
    m.add_class::<PyScenarioReport>()?;
    m.add_function(wrap_pyfunction!(wigner_small_d, m)?)?;
    m.add_function(wrap_pyfunction!(flux_sample, m)?)?;
    m.add_function(wrap_pyfunction!(gibbs_state, m)?)?;
    m.add_function(wrap_pyfunction!(free_energy, m)?)?;
    m.add_function(wrap_pyfunction!(von_neumann_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(isochoric, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add("CSV_HEADER", scenario::CSV_HEADER)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

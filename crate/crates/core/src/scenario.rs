//! Declarative scenarios: a JSON configuration in, a CSV of flux samples
//! and a JSON audit summary out.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_3, FRAC_PI_4, PI, TAU};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::angular::{max_invariant_sum_residual, max_recursion_residual, rotation_y, wigner_small_d, HalfInt, SpinQuantumNumber};
use crate::dynamics::{
    fidelity_with_pure, propagate_lindblad, propagate_unitary, thermal_dissipator, uniform_grid, DriveProtocol,
    Trajectory,
};
use crate::linalg::{pauli, pure_state_density, random_density, random_hermitian, trace_product, DensityMatrix, QuantumState};
use crate::models::{
    highspin_coherence_flux, highspin_density_elements, highspin_density_d_form, highspin_diag_flux, highspin_drive,
    highspin_exact_state, rotating_frame_params, two_level_coherence_flux, two_level_drive, two_level_exact_state,
    two_level_work, HighSpinParams, TwoLevelParams,
};
use crate::spectra::diagonalize_instantaneous;
use crate::thermo::{
    adiabaticity_audit, audit_trajectory, free_energy, gibbs_state, quasistatic_isothermal, sample_at,
    von_neumann_entropy, EnergyLedger, FluxSample,
};
use crate::units::Units;
use crate::{Complex64, Error, Result};

/// Bit-exact CSV header of a scenario run.
pub const CSV_HEADER: &str =
    "t,U,Qdot,Wdot,diag_pop_flux,diag_energy_flux,coherence_flux,Qdot_naive,Wdot_naive,first_law_residual,tau,purity";

/// Header of a sweep summary CSV.
pub const SWEEP_HEADER: &str = "value,pass,max_first_law_residual,max_q_dot,peak_w_dot,max_tau,first_law_gap";

/// Threshold on infidelity against closed-form states for numeric runs.
pub const NUMERIC_STATE_TOL: f64 = 1e-6;

/// Names accepted by [`ScenarioConfig::set_param`].
pub const SWEEPABLE: &[&str] = &[
    "omega1",
    "omega",
    "alpha",
    "j",
    "m",
    "gamma_b0",
    "theta",
    "lambda0",
    "temperature",
    "base_rate",
    "omega1_end",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    TwoLevelExact,
    TwoLevelNumeric,
    HighSpinExact,
    HighSpinNumeric,
    Isochoric,
    Isothermal,
    IdentitySuite,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::TwoLevelExact => "two_level_exact",
            Self::TwoLevelNumeric => "two_level_numeric",
            Self::HighSpinExact => "high_spin_exact",
            Self::HighSpinNumeric => "high_spin_numeric",
            Self::Isochoric => "isochoric",
            Self::Isothermal => "isothermal",
            Self::IdentitySuite => "identity_suite",
        }
    }

    pub const ALL: [ScenarioKind; 7] = [
        Self::TwoLevelExact,
        Self::TwoLevelNumeric,
        Self::HighSpinExact,
        Self::HighSpinNumeric,
        Self::Isochoric,
        Self::Isothermal,
        Self::IdentitySuite,
    ];
}

/// Model parameters; every field is optional and falls back to a
/// kind-specific default.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Spin quantum number (integer or half-integer).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j: Option<f64>,
    /// Initial eigenstate label `M`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_b0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    /// `omega / gamma B0`; exclusive with `omega` for spin runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_rate: Option<f64>,
    /// Final level splitting of the isothermal ramp.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega1_end: Option<f64>,
    /// Largest `j` checked by the identity suite.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_j: Option<f64>,
    /// Random rotation angles per `j` in the identity suite.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_samples: Option<usize>,
    /// Random parameter draws per check in the identity suite.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub random_draws: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub t_start: f64,
    /// Defaults to two natural periods of the model.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    pub samples: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            t_start: 0.0,
            t_end: None,
            samples: 2001,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub integrator_tol: f64,
    pub audit_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            integrator_tol: 1e-10,
            audit_tol: 1e-8,
        }
    }
}

fn default_hbar() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario_kind: ScenarioKind,
    #[serde(default)]
    pub model_params: ModelParams,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<String>,
    #[serde(default = "default_hbar")]
    pub hbar: f64,
}

impl ScenarioConfig {
    /// Default configuration of the given kind.
    pub fn new(kind: ScenarioKind) -> Self {
        Self {
            scenario_kind: kind,
            model_params: ModelParams::default(),
            grid: GridSpec::default(),
            tolerances: Tolerances::default(),
            output_path: None,
            hbar: 1.0,
        }
    }

    /// Parses and validates a JSON document; parse errors carry line and
    /// column.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)
            .map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if !g.t_start.is_finite() {
            return Err(Error::Config("grid.t_start must be finite".into()));
        }
        if let Some(t_end) = g.t_end {
            if !(t_end.is_finite() && t_end > g.t_start) {
                return Err(Error::Config(format!(
                    "grid.t_end = {t_end} must exceed grid.t_start = {}",
                    g.t_start
                )));
            }
        }
        if g.samples < 3 {
            return Err(Error::Config(format!("grid.samples = {} must be >= 3", g.samples)));
        }
        for (name, v) in [
            ("tolerances.integrator_tol", self.tolerances.integrator_tol),
            ("tolerances.audit_tol", self.tolerances.audit_tol),
            ("hbar", self.hbar),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} = {v} must be > 0")));
            }
        }
        let mp = &self.model_params;
        if mp.omega.is_some() && mp.lambda0.is_some() && self.is_spin() {
            return Err(Error::Config("give either omega or lambda0, not both".into()));
        }
        Ok(())
    }

    fn is_spin(&self) -> bool {
        matches!(
            self.scenario_kind,
            ScenarioKind::HighSpinExact | ScenarioKind::HighSpinNumeric
        )
    }

    /// Overrides one model parameter by name.
    pub fn set_param(&mut self, name: &str, value: f64) -> Result<()> {
        let mp = &mut self.model_params;
        let slot = match name {
            "omega1" => &mut mp.omega1,
            "omega" => {
                mp.lambda0 = None;
                &mut mp.omega
            }
            "alpha" => &mut mp.alpha,
            "j" => &mut mp.j,
            "m" => &mut mp.m,
            "gamma_b0" => &mut mp.gamma_b0,
            "theta" => &mut mp.theta,
            "lambda0" => {
                mp.omega = None;
                &mut mp.lambda0
            }
            "temperature" => &mut mp.temperature,
            "base_rate" => &mut mp.base_rate,
            "omega1_end" => &mut mp.omega1_end,
            other => {
                return Err(Error::Config(format!(
                    "unknown parameter `{other}` (expected one of {})",
                    SWEEPABLE.join(", ")
                )))
            }
        };
        *slot = Some(value);
        Ok(())
    }

    fn two_level_params(&self) -> Result<TwoLevelParams> {
        let mp = &self.model_params;
        TwoLevelParams::new(
            mp.omega1.unwrap_or(1.0),
            mp.omega.unwrap_or(0.6),
            mp.alpha.unwrap_or(FRAC_PI_3),
        )
    }

    fn high_spin_params(&self) -> Result<HighSpinParams> {
        let mp = &self.model_params;
        let j = mp.j.unwrap_or(2.0);
        let j = SpinQuantumNumber::from_twice(twice_of(j, "j")?.try_into().map_err(|_| {
            Error::Config(format!("j = {j} must be >= 0"))
        })?);
        let m = HalfInt::from_twice(twice_of(mp.m.unwrap_or(j.value()), "m")?);
        let gamma_b0 = mp.gamma_b0.unwrap_or(1.0);
        let theta = mp.theta.unwrap_or(FRAC_PI_4);
        let omega = match (mp.omega, mp.lambda0) {
            (Some(w), _) => w,
            (None, l0) => l0.unwrap_or(0.5) * gamma_b0,
        };
        HighSpinParams::new(j, gamma_b0, theta, omega, m)
    }

    fn time_grid(&self, natural_span: f64) -> Vec<f64> {
        let t0 = self.grid.t_start;
        let t1 = self.grid.t_end.unwrap_or(t0 + natural_span);
        uniform_grid(t0, t1, self.grid.samples)
    }
}

fn twice_of(value: f64, name: &str) -> Result<i32> {
    let twice = 2.0 * value;
    if !value.is_finite() || (twice - twice.round()).abs() > 1e-9 || twice.abs() > 1e4 {
        return Err(Error::Config(format!("{name} = {value} must be a multiple of 1/2")));
    }
    Ok(twice.round() as i32)
}

/// One audited quantity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    fn new(value: f64, threshold: f64) -> Self {
        Self {
            value,
            threshold,
            pass: value.is_finite() && value <= threshold,
        }
    }
}

/// Machine-readable outcome of a scenario run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub scenario_kind: String,
    pub hbar: f64,
    pub max_first_law_residual: f64,
    /// Present for closed (adiabatic) runs.
    pub max_q_dot: Option<f64>,
    pub max_identity_residuals: BTreeMap<String, f64>,
    pub metrics: BTreeMap<String, f64>,
    pub checks: BTreeMap<String, Check>,
    pub pass: bool,
}

impl AuditSummary {
    fn new(kind: ScenarioKind, hbar: f64) -> Self {
        Self {
            scenario_kind: kind.name().to_string(),
            hbar,
            max_first_law_residual: 0.0,
            max_q_dot: None,
            max_identity_residuals: BTreeMap::new(),
            metrics: BTreeMap::new(),
            checks: BTreeMap::new(),
            pass: true,
        }
    }

    fn check(&mut self, name: &str, value: f64, threshold: f64) {
        let c = Check::new(value, threshold);
        self.pass &= c.pass;
        self.checks.insert(name.to_string(), c);
    }

    fn identity(&mut self, name: &str, value: f64, threshold: f64) {
        self.max_identity_residuals.insert(name.to_string(), value);
        self.check(name, value, threshold);
    }

    fn metric(&mut self, name: &str, value: f64) {
        self.metrics.insert(name.to_string(), value);
    }

    pub fn failed_checks(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|(_, c)| !c.pass)
            .map(|(k, _)| k.as_str())
            .collect()
    }

    fn absorb_ledger(&mut self, ledger: &EnergyLedger, audit_tol: f64) {
        self.max_first_law_residual = ledger.max_first_law_residual();
        let scale = ledger.max_scale().max(1.0);
        self.check("first_law_pointwise", self.max_first_law_residual, audit_tol * scale);
        self.check(
            "first_law_closure",
            ledger.first_law_gap().abs(),
            10.0 * audit_tol * (1.0 + ledger.delta_u().abs()),
        );
        self.metric("Q", ledger.q);
        self.metric("W", ledger.w);
        self.metric("U0", ledger.u0);
        self.metric("U_final", ledger.u_final);
        self.metric("delta_U", ledger.delta_u());
        self.metric("first_law_gap", ledger.first_law_gap());
        self.metric("Q_quadrature_error", ledger.q_error);
        self.metric("W_quadrature_error", ledger.w_error);
        self.metric("peak_w_dot", peak(ledger.samples.iter().map(|s| s.w_dot)));
        self.metric("peak_q_dot_naive", ledger.max_abs_q_dot_naive());
        if let Some(tau) = ledger.max_tau() {
            self.metric("max_tau", tau);
        }
    }
}

fn peak(values: impl Iterator<Item = f64>) -> f64 {
    values.map(f64::abs).fold(0.0, f64::max)
}

/// Samples and audit of one scenario.
#[derive(Clone, Debug)]
pub struct ScenarioReport {
    pub kind: ScenarioKind,
    pub samples: Vec<FluxSample>,
    pub summary: AuditSummary,
    pub units: Units,
}

fn fmt_float(out: &mut String, x: f64) {
    let _ = write!(out, "{x:.16e}");
}

impl ScenarioReport {
    /// Flux samples as CSV, energies in output units.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(256 * (self.samples.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        let e = |x: f64| self.units.energy(x);
        for s in &self.samples {
            let cols = [
                s.t,
                e(s.u),
                e(s.q_dot),
                e(s.w_dot),
                e(s.diag_pop_flux),
                e(s.diag_energy_flux),
                e(s.coherence_flux),
                e(s.q_dot_naive),
                e(s.w_dot_naive),
                e(s.first_law_residual),
            ];
            for (i, c) in cols.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                fmt_float(&mut out, *c);
            }
            out.push(',');
            if let Some(tau) = s.tau {
                fmt_float(&mut out, tau);
            }
            out.push(',');
            fmt_float(&mut out, s.purity);
            out.push('\n');
        }
        out
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary serializes")
    }

    /// Writes `<kind>.csv` and `<kind>_summary.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let csv = dir.join(format!("{}.csv", self.kind.name()));
        let json = dir.join(format!("{}_summary.json", self.kind.name()));
        std::fs::write(&csv, self.to_csv())?;
        std::fs::write(&json, self.summary_json() + "\n")?;
        Ok((csv, json))
    }
}

/// Runs a validated configuration.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioReport> {
    config.validate()?;
    let kind = config.scenario_kind;
    let mut summary = AuditSummary::new(kind, config.hbar);
    let samples = match kind {
        ScenarioKind::TwoLevelExact => two_level_exact(config, &mut summary)?,
        ScenarioKind::TwoLevelNumeric => two_level_numeric(config, &mut summary)?,
        ScenarioKind::HighSpinExact => high_spin_exact(config, &mut summary)?,
        ScenarioKind::HighSpinNumeric => high_spin_numeric(config, &mut summary)?,
        ScenarioKind::Isochoric => isochoric(config, &mut summary)?,
        ScenarioKind::Isothermal => isothermal(config, &mut summary)?,
        ScenarioKind::IdentitySuite => identity_suite(config, &mut summary)?,
    };
    log::info!(
        "{}: {} samples, pass = {}",
        kind.name(),
        samples.len(),
        summary.pass
    );
    Ok(ScenarioReport {
        kind,
        samples,
        summary,
        units: Units::new(config.hbar),
    })
}

fn pure_states(states: impl Iterator<Item = QuantumState>) -> Result<Vec<DensityMatrix>> {
    states.map(|psi| pure_state_density(&psi)).collect()
}

/// Audit of a closed run: ledger, `Qdot = 0` and the trace identity.
fn closed_run_checks(
    traj: &Trajectory,
    drive: &DriveProtocol,
    audit_tol: f64,
    summary: &mut AuditSummary,
) -> Result<EnergyLedger> {
    let ledger = audit_trajectory(traj, drive, audit_tol)?;
    summary.absorb_ledger(&ledger, audit_tol);
    let report = adiabaticity_audit(traj, drive)?;
    let scale = report.max_scale.max(1.0);
    summary.identity("trace_rate_vanishes", report.max_trace_rate, audit_tol * scale);
    summary.identity("population_flux_vs_coherence_flux", report.max_identity_residual, audit_tol * scale);
    summary.max_q_dot = Some(ledger.max_abs_q_dot());
    summary.check("max_q_dot", ledger.max_abs_q_dot(), audit_tol);
    Ok(ledger)
}

fn two_level_span(p: &TwoLevelParams) -> f64 {
    2.0 * p.period().unwrap_or(TAU / p.omega1)
}

fn two_level_exact(config: &ScenarioConfig, summary: &mut AuditSummary) -> Result<Vec<FluxSample>> {
    let tol = config.tolerances.audit_tol;
    let p = config.two_level_params()?;
    let drive = two_level_drive(&p)?;
    let grid = config.time_grid(two_level_span(&p));
    let states = pure_states(grid.iter().map(|&t| two_level_exact_state(&p, t)))?;
    let traj = Trajectory::from_states(&drive, grid.clone(), states, None)?;
    let ledger = closed_run_checks(&traj, &drive, tol, summary)?;

    let w_err = peak(ledger.samples.iter().map(|s| s.w_dot - two_level_coherence_flux(&p, s.t)));
    let naive_err = peak(ledger.samples.iter().map(|s| s.q_dot_naive - two_level_coherence_flux(&p, s.t)));
    summary.identity("w_dot_vs_closed_form", w_err, tol);
    summary.identity("q_dot_naive_vs_closed_form", naive_err, tol);
    let analytic_w = two_level_work(&p, grid[grid.len() - 1]) - two_level_work(&p, grid[0]);
    summary.identity("work_vs_closed_form", (ledger.w - analytic_w).abs(), 10.0 * tol);
    summary.metric("lambda", p.lambda());
    Ok(ledger.samples)
}

fn numeric_state_checks(
    traj: &Trajectory,
    exact: impl Fn(f64) -> Result<QuantumState>,
    summary: &mut AuditSummary,
) -> Result<()> {
    let mut infidelity: f64 = 0.0;
    for (t, rho) in traj.times().iter().zip(traj.states()) {
        infidelity = infidelity.max(1.0 - fidelity_with_pure(rho, &exact(*t)?));
    }
    let p0 = crate::linalg::purity(&traj.states()[0]);
    let purity_drift = peak(traj.states().iter().map(|r| crate::linalg::purity(r) - p0));
    let max_correction = traj.corrections().iter().copied().fold(0.0, f64::max);
    summary.check("max_infidelity", infidelity, NUMERIC_STATE_TOL);
    summary.check("purity_drift", purity_drift, 1e-8);
    summary.check("trace_correction", max_correction, 1e-8);
    summary.metric("accepted_steps", traj.accepted_steps() as f64);
    summary.metric("rejected_steps", traj.rejected_steps() as f64);
    Ok(())
}

fn two_level_numeric(config: &ScenarioConfig, summary: &mut AuditSummary) -> Result<Vec<FluxSample>> {
    let tol = config.tolerances.audit_tol;
    let p = config.two_level_params()?;
    let drive = two_level_drive(&p)?;
    let grid = config.time_grid(two_level_span(&p));
    let rho0 = pure_state_density(&two_level_exact_state(&p, grid[0]))?;
    let traj = propagate_unitary(&drive, &rho0, &grid, config.tolerances.integrator_tol)?;
    let ledger = closed_run_checks(&traj, &drive, tol, summary)?;
    numeric_state_checks(&traj, |t| Ok(two_level_exact_state(&p, t)), summary)?;
    let w_err = peak(ledger.samples.iter().map(|s| s.w_dot - two_level_coherence_flux(&p, s.t)));
    summary.check("w_dot_vs_closed_form", w_err, NUMERIC_STATE_TOL);
    Ok(ledger.samples)
}

fn high_spin_span(p: &HighSpinParams) -> Result<f64> {
    Ok(2.0 * TAU / rotating_frame_params(p)?.omega0)
}

fn high_spin_exact(config: &ScenarioConfig, summary: &mut AuditSummary) -> Result<Vec<FluxSample>> {
    let tol = config.tolerances.audit_tol;
    let p = config.high_spin_params()?;
    let drive = highspin_drive(&p)?;
    let grid = config.time_grid(high_spin_span(&p)?);
    let states = pure_states(
        grid.iter()
            .map(|&t| highspin_exact_state(&p, t))
            .collect::<Result<Vec<_>>>()?
            .into_iter(),
    )?;
    let traj = Trajectory::from_states(&drive, grid.clone(), states, None)?;
    let ledger = closed_run_checks(&traj, &drive, tol, summary)?;

    let mut closed_forms: f64 = 0.0;
    let mut vs_numeric: f64 = 0.0;
    let mut d_form: f64 = 0.0;
    for s in &ledger.samples {
        let diag = highspin_diag_flux(&p, s.t)?;
        let coh = highspin_coherence_flux(&p, s.t)?;
        closed_forms = closed_forms.max((diag - coh).abs());
        vs_numeric = vs_numeric.max((diag - s.diag_pop_flux).abs()).max((coh - s.coherence_flux).abs());
        let direct = highspin_density_elements(&p, s.t)?;
        d_form = d_form.max(direct.max_abs_diff(&highspin_density_d_form(&p, s.t)?));
    }
    summary.identity("closed_form_population_vs_coherence", closed_forms, tol);
    summary.identity("closed_form_vs_numeric_frame", vs_numeric, tol);
    summary.identity("density_d_form_vs_direct", d_form, tol);
    let frame = rotating_frame_params(&p)?;
    summary.metric("omega0", frame.omega0);
    summary.metric("phi", frame.phi);
    summary.metric("beta", frame.beta);
    Ok(ledger.samples)
}

fn high_spin_numeric(config: &ScenarioConfig, summary: &mut AuditSummary) -> Result<Vec<FluxSample>> {
    let tol = config.tolerances.audit_tol;
    let p = config.high_spin_params()?;
    let drive = highspin_drive(&p)?;
    let grid = config.time_grid(high_spin_span(&p)?);
    let rho0 = pure_state_density(&highspin_exact_state(&p, grid[0])?)?;
    let traj = propagate_unitary(&drive, &rho0, &grid, config.tolerances.integrator_tol)?;
    let ledger = closed_run_checks(&traj, &drive, tol, summary)?;
    numeric_state_checks(&traj, |t| highspin_exact_state(&p, t), summary)?;
    Ok(ledger.samples)
}

fn isochoric(config: &ScenarioConfig, summary: &mut AuditSummary) -> Result<Vec<FluxSample>> {
    let tol = config.tolerances.audit_tol;
    let mp = &config.model_params;
    let omega1 = mp.omega1.unwrap_or(1.0);
    let temperature = mp.temperature.unwrap_or(0.5);
    let rate = mp.base_rate.unwrap_or(0.2);
    let h = pauli().2.scale_real(0.5 * omega1);
    let diss = thermal_dissipator(&h, temperature, rate)?;
    let drive = DriveProtocol::constant(h.clone())?;
    let grid = config.time_grid(40.0 / rate);
    // Start in the upper level.
    let rho0 = pure_state_density(&QuantumState::basis(2, if omega1 > 0.0 { 0 } else { 1 }))?;
    let traj = propagate_lindblad(&drive, &diss, &rho0, &grid, config.tolerances.integrator_tol)?;
    let ledger = audit_trajectory(&traj, &drive, tol)?;
    summary.absorb_ledger(&ledger, tol);
    summary.check("work_vanishes", ledger.w.abs(), tol);
    summary.check("heat_equals_delta_u", (ledger.q - ledger.delta_u()).abs(), tol * (1.0 + ledger.delta_u().abs()));
    let gibbs = gibbs_state(&h, temperature)?;
    summary.metric("distance_to_gibbs", ledger.final_state.matrix().max_abs_diff(gibbs.matrix()));
    Ok(ledger.samples)
}

fn isothermal(config: &ScenarioConfig, summary: &mut AuditSummary) -> Result<Vec<FluxSample>> {
    let tol = config.tolerances.audit_tol;
    let mp = &config.model_params;
    let w_start = mp.omega1.unwrap_or(1.0);
    let w_end = mp.omega1_end.unwrap_or(2.0 * w_start);
    let temperature = mp.temperature.unwrap_or(1.0);
    let grid = config.time_grid(1.0);
    let sz = pauli().2;
    let (h0, h1) = (sz.scale_real(0.5 * w_start), sz.scale_real(0.5 * w_end));
    let drive = DriveProtocol::linear_ramp(h0.clone(), h1.clone(), grid[0], grid[grid.len() - 1])?;
    let ledger = quasistatic_isothermal(&drive, temperature, &grid, tol)?;
    summary.absorb_ledger(&ledger, tol);
    let delta_f = free_energy(&h1, temperature)? - free_energy(&h0, temperature)?;
    let delta_s = von_neumann_entropy(&gibbs_state(&h1, temperature)?) - von_neumann_entropy(&gibbs_state(&h0, temperature)?);
    summary.check("work_equals_delta_f", (ledger.w - delta_f).abs(), tol * (1.0 + delta_f.abs()));
    summary.check(
        "heat_equals_t_delta_s",
        (ledger.q - temperature * delta_s).abs(),
        tol * (1.0 + (temperature * delta_s).abs()),
    );
    summary.metric("delta_F", delta_f);
    summary.metric("T_delta_S", temperature * delta_s);
    Ok(ledger.samples)
}

/// Residuals of the Wigner-matrix identities for `j <= max_j` over random
/// angles bounded away from `sin(beta) = 0`.
pub fn wigner_identity_residuals(max_twice_j: u32, beta_samples: usize, seed: u64) -> Result<(f64, f64, f64)> {
    let rows = (0..=max_twice_j)
        .into_par_iter()
        .map(|twice| {
            let j = SpinQuantumNumber::from_twice(twice);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ u64::from(twice));
            let (mut recursion, mut inv_sum, mut rexp) = (0.0f64, 0.0f64, 0.0f64);
            for _ in 0..beta_samples {
                let beta = loop {
                    let b = rng.random_range(0.0..TAU);
                    if b.sin().abs() > 0.05 {
                        break b;
                    }
                };
                let d = wigner_small_d(j, beta)?;
                recursion = recursion.max(max_recursion_residual(&d)?);
                inv_sum = inv_sum.max(max_invariant_sum_residual(&d));
                rexp = rexp.max(d.to_complex().max_abs_diff(&rotation_y(j, beta)?));
            }
            Ok((recursion, inv_sum, rexp))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rows
        .into_iter()
        .fold((0.0, 0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1), a.2.max(b.2))))
}

/// Random spin precession parameters with `lambda0` in `[0.1, 2]`,
/// `theta` in `(0, pi)` and a uniformly chosen `M`.
pub fn random_high_spin<R: Rng + ?Sized>(j: SpinQuantumNumber, rng: &mut R) -> Result<HighSpinParams> {
    let lambda0 = rng.random_range(0.1..=2.0);
    let theta = rng.random_range(1e-3..PI - 1e-3);
    let gamma_b0 = rng.random_range(0.5..=2.0);
    let m = j.m_at(rng.random_range(0..j.dim()));
    HighSpinParams::from_lambda0(j, gamma_b0, theta, lambda0, m)
}

/// Worst residuals of the high-spin closed forms: `(|population flux - coherence flux|, |Qdot|)`
/// over random draws for each `j` in `twice_js`.
pub fn high_spin_universality(twice_js: &[u32], draws: usize, seed: u64) -> Result<(f64, f64)> {
    let rows = twice_js
        .par_iter()
        .map(|&twice| {
            let j = SpinQuantumNumber::from_twice(twice);
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(u64::from(twice)));
            let (mut ident, mut qdot) = (0.0f64, 0.0f64);
            for _ in 0..draws {
                let p = random_high_spin(j, &mut rng)?;
                let t = rng.random_range(0.0..20.0);
                ident = ident.max((highspin_diag_flux(&p, t)? - highspin_coherence_flux(&p, t)?).abs());
                let drive = highspin_drive(&p)?;
                let frame = diagonalize_instantaneous(&drive.hamiltonian_at(t), t, None)?;
                let rho = pure_state_density(&highspin_exact_state(&p, t)?)?;
                qdot = qdot.max(sample_at(&drive, None, &frame, &rho)?.q_dot.abs());
            }
            Ok((ident, qdot))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rows.into_iter().fold((0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1))))
}

/// Random harmonic drive of dimension `dim` with a generic spectrum.
pub fn random_drive<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<DriveProtocol> {
    let h0 = random_hermitian(dim, 1.0, rng);
    let h1 = random_hermitian(dim, 0.5, rng);
    let h2 = random_hermitian(dim, 0.5, rng);
    let omega = rng.random_range(0.3..=1.5);
    DriveProtocol::harmonic(h0, h1, h2, omega)
}

/// Identity residuals along unitary runs of random drives from random mixed
/// states: `(Tr(rho_dot H), heat-rate trace form, work-rate trace form, gauge)`, each relative to the sample scale.
pub fn random_drive_residuals(count: usize, samples: usize, tol: f64, seed: u64) -> Result<[f64; 4]> {
    let rows = (0..count)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31).wrapping_add(k as u64));
            let dim = 2 + k % 4;
            let drive = random_drive(dim, &mut rng)?;
            let rho0 = random_density(dim, &mut rng);
            let period = drive.natural_period().unwrap_or(1.0);
            let grid = uniform_grid(0.0, period, samples);
            let traj = propagate_unitary(&drive, &rho0, &grid, tol)?;
            let report = adiabaticity_audit(&traj, &drive)?;
            let mut out = [report.max() / report.max_scale.max(1.0), 0.0, 0.0, 0.0];
            for (frame, rho) in traj.frames().iter().zip(traj.states()) {
                let t = frame.t();
                let s = sample_at(&drive, None, frame, rho)?;
                let scale = s.scale.max(1.0);
                let rho_dot = crate::dynamics::equation_of_motion(&drive, None, t, rho.matrix());
                let tr_rdot_h = trace_product(&rho_dot, &drive.hamiltonian_at(t))?.re;
                let tr_rho_hdot = trace_product(rho.matrix(), &drive.derivative_at(t))?.re;
                out[1] = out[1].max((tr_rdot_h - (s.diag_pop_flux - s.coherence_flux)).abs() / scale);
                out[2] = out[2].max((tr_rho_hdot - (s.diag_energy_flux + s.coherence_flux)).abs() / scale);
                let phases: Vec<Complex64> = (0..dim)
                    .map(|_| Complex64::from_polar(1.0, rng.random_range(0.0..TAU)))
                    .collect();
                let g = sample_at(&drive, None, &frame.rephased(&phases)?, rho)?;
                out[3] = out[3].max((g.q_dot - s.q_dot).abs().max((g.w_dot - s.w_dot).abs()));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rows.into_iter().fold([0.0; 4], |mut a, b| {
        for i in 0..4 {
            a[i] = a[i].max(b[i]);
        }
        a
    }))
}

fn identity_suite(config: &ScenarioConfig, summary: &mut AuditSummary) -> Result<Vec<FluxSample>> {
    let tol = config.tolerances.audit_tol;
    let mp = &config.model_params;
    let seed = mp.seed.unwrap_or(7);
    let max_twice_j = u32::try_from(twice_of(mp.max_j.unwrap_or(6.0), "max_j")?)
        .map_err(|_| Error::Config("max_j must be >= 0".into()))?;
    let betas = mp.beta_samples.unwrap_or(100);
    let draws = mp.random_draws.unwrap_or(50);

    let (recursion, inv_sum, rexp) = wigner_identity_residuals(max_twice_j, betas, seed)?;
    summary.identity("wigner_recursion", recursion, tol);
    summary.identity("wigner_invariant_sum", inv_sum, tol);
    summary.identity("wigner_vs_matrix_exponential", rexp, tol);

    let (ident, qdot) = high_spin_universality(&[1, 2, 3, 4, 5], draws, seed)?;
    summary.identity("closed_form_population_vs_coherence", ident, tol);
    summary.identity("high_spin_q_dot", qdot, tol);

    let [trace_rate, q_trace, w_trace, gauge] = random_drive_residuals(20, 101, config.tolerances.integrator_tol, seed)?;
    summary.identity("random_drive_trace_rate", trace_rate, tol);
    summary.identity("heat_rate_trace_form", q_trace, tol);
    summary.identity("work_rate_trace_form", w_trace, tol);
    summary.identity("gauge_invariance", gauge, tol);

    // Spin-1/2 reduction and the reference two-level run that fills the CSV.
    let p = config.two_level_params()?;
    let hs = p.as_high_spin();
    let grid = config.time_grid(two_level_span(&p));
    let mut reduction: f64 = 0.0;
    for &t in &grid {
        let target = two_level_coherence_flux(&p, t);
        reduction = reduction
            .max((highspin_diag_flux(&hs, t)? - target).abs())
            .max((highspin_coherence_flux(&hs, t)? - target).abs());
    }
    summary.identity("spin_half_reduction", reduction, tol);
    let drive = two_level_drive(&p)?;
    let states = pure_states(grid.iter().map(|&t| two_level_exact_state(&p, t)))?;
    let traj = Trajectory::from_states(&drive, grid, states, None)?;
    let ledger = closed_run_checks(&traj, &drive, tol, summary)?;
    Ok(ledger.samples)
}

/// One summary per swept value.
#[derive(Clone, Debug)]
pub struct SweepReport {
    pub parameter: String,
    pub rows: Vec<(f64, AuditSummary)>,
}

impl SweepReport {
    pub fn pass(&self) -> bool {
        self.rows.iter().all(|(_, s)| s.pass)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(SWEEP_HEADER);
        out.push('\n');
        for (value, s) in &self.rows {
            fmt_float(&mut out, *value);
            let _ = write!(out, ",{}", s.pass);
            let cols = [
                Some(s.max_first_law_residual),
                s.max_q_dot,
                s.metrics.get("peak_w_dot").copied(),
                s.metrics.get("max_tau").copied(),
                s.metrics.get("first_law_gap").copied(),
            ];
            for c in cols {
                out.push(',');
                if let Some(c) = c {
                    fmt_float(&mut out, c);
                }
            }
            out.push('\n');
        }
        out
    }

    /// Writes `sweep_<param>.csv` and `sweep_<param>_summary.json`.
    pub fn write_to(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let csv = dir.join(format!("sweep_{}.csv", self.parameter));
        let json = dir.join(format!("sweep_{}_summary.json", self.parameter));
        std::fs::write(&csv, self.to_csv())?;
        let summaries: Vec<_> = self
            .rows
            .iter()
            .map(|(v, s)| serde_json::json!({ "value": v, "summary": s }))
            .collect();
        std::fs::write(&json, serde_json::to_string_pretty(&summaries).expect("serializes") + "\n")?;
        Ok((csv, json))
    }
}

/// Runs `base` once per value of `parameter`; runs are independent and
/// execute in parallel.
pub fn run_sweep(base: &ScenarioConfig, parameter: &str, values: &[f64]) -> Result<SweepReport> {
    base.validate()?;
    base.clone().set_param(parameter, 0.0)?;
    let rows = values
        .par_iter()
        .map(|&v| {
            let mut config = base.clone();
            config.set_param(parameter, v)?;
            run_scenario(&config).map(|r| (v, r.summary))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport {
        parameter: parameter.to_string(),
        rows,
    })
}

/// Configuration used by the `verify` verb.
pub fn default_identity_suite() -> ScenarioConfig {
    let mut config = ScenarioConfig::new(ScenarioKind::IdentitySuite);
    config.grid.samples = 401;
    config
}

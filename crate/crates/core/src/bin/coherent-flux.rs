use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use coherent_flux_core::scenario::{
    default_identity_suite, run_scenario, run_sweep, AuditSummary, ScenarioConfig,
};
use coherent_flux_core::{Error, Result};

/// Coherence-corrected heat and work fluxes for driven quantum systems.
#[derive(Parser, Debug)]
#[command(name = "coherent-flux", version, about)]
struct Cli {
    /// Output directory (overrides COHERENT_FLUX_OUT and the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Audit tolerance (overrides tolerances.audit_tol).
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Reduced Planck constant used for reported energies.
    #[arg(long, global = true)]
    hbar: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario.
    Run { config: PathBuf },
    /// Run a scenario once per value of one model parameter.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        param: String,
        /// Comma-separated values; may be empty.
        #[arg(long, default_value = "", allow_hyphen_values = true)]
        values: String,
    },
    /// Run the identity suite with default settings.
    Verify,
}

fn output_dir(cli: &Cli, config: &ScenarioConfig) -> PathBuf {
    if let Some(dir) = &cli.out {
        return dir.clone();
    }
    if let Some(dir) = std::env::var_os("COHERENT_FLUX_OUT").filter(|d| !d.is_empty()) {
        return PathBuf::from(dir);
    }
    config
        .output_path
        .as_ref()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn load(cli: &Cli, path: Option<&Path>) -> Result<ScenarioConfig> {
    let mut config = match path {
        Some(p) => ScenarioConfig::from_path(p)?,
        None => default_identity_suite(),
    };
    if let Some(tol) = cli.tol {
        config.tolerances.audit_tol = tol;
    }
    if let Some(hbar) = cli.hbar {
        config.hbar = hbar;
    }
    config.validate()?;
    Ok(config)
}

fn parse_values(list: &str) -> Result<Vec<f64>> {
    list.split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| {
            v.parse::<f64>()
                .map_err(|e| Error::Config(format!("--values: `{v}`: {e}")))
        })
        .collect()
}

fn report_failures(label: &str, summary: &AuditSummary) {
    for name in summary.failed_checks() {
        let c = &summary.checks[name];
        eprintln!("{label}: FAIL {name}: {:.3e} > {:.3e}", c.value, c.threshold);
    }
}

fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Run { config } => execute(cli, load(cli, Some(config))?),
        Command::Verify => execute(cli, load(cli, None)?),
        Command::Sweep { config, param, values } => {
            let base = load(cli, Some(config))?;
            let values = parse_values(values)?;
            let sweep = run_sweep(&base, param, &values)?;
            let (csv, json) = sweep.write_to(&output_dir(cli, &base))?;
            for (v, s) in &sweep.rows {
                report_failures(&format!("{param}={v}"), s);
            }
            println!("{}", csv.display());
            println!("{}", json.display());
            println!("{} runs, pass = {}", sweep.rows.len(), sweep.pass());
            Ok(sweep.pass())
        }
    }
}

fn execute(cli: &Cli, config: ScenarioConfig) -> Result<bool> {
    let report = run_scenario(&config)?;
    let (csv, json) = report.write_to(&output_dir(cli, &config))?;
    report_failures(report.kind.name(), &report.summary);
    println!("{}", csv.display());
    println!("{}", json.display());
    println!("{}: pass = {}", report.kind.name(), report.summary.pass);
    Ok(report.summary.pass)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

//! Scenario runner for the `stirfcs` engine.
//!
//! A run reads a TOML configuration, executes one named scenario (or a sweep
//! of it over one numeric parameter), writes CSV and JSON artifacts
//! atomically, and writes a verification report comparing every result
//! with its closed-form prediction.

pub mod config;
pub mod error;
pub mod fit;
pub mod report;
pub mod scenarios;
pub mod sweep;

use std::fs;
use std::path::{Path, PathBuf};

use stirfcs::export::write_atomic;

pub use config::{Scenario, ScenarioConfig, Tolerances};
pub use error::CliError;
pub use report::{Check, VerificationReport};
pub use sweep::SweepSpec;

use scenarios::Artifact;

/// Exit status when a gating check fails.
pub const EXIT_CHECK_FAILED: i32 = 1;

/// Everything a run needs after the command line has been resolved.
#[derive(Clone, Debug)]
pub struct Invocation {
    pub config: ScenarioConfig,
    pub out: PathBuf,
    pub report: PathBuf,
    pub sweep: Option<SweepSpec>,
    pub tolerance_scale: f64,
}

/// Reads the configuration at `path`, or falls back to the example
/// configuration of `scenario`. A given `scenario` overrides the file.
pub fn load_config(
    path: Option<&Path>,
    scenario: Option<Scenario>,
) -> Result<ScenarioConfig, CliError> {
    let mut cfg = match (path, scenario) {
        (Some(p), _) => {
            let text = fs::read_to_string(p).map_err(|source| CliError::Read {
                path: p.to_path_buf(),
                source,
            })?;
            ScenarioConfig::from_toml(&text)?
        }
        (None, Some(sc)) => ScenarioConfig::from_toml(sc.example_config())?,
        (None, None) => {
            return Err(CliError::Config("give --config or --scenario".into()));
        }
    };
    if let Some(sc) = scenario {
        cfg.scenario = sc;
    }
    Ok(cfg)
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    write_atomic(path, bytes).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Runs the invocation, writes its artifacts and report, and returns the
/// report.
pub fn execute(inv: &Invocation) -> Result<VerificationReport, CliError> {
    if !(inv.tolerance_scale > 0.0 && inv.tolerance_scale.is_finite()) {
        return Err(CliError::Config(format!(
            "tolerance scale must be positive, got {}",
            inv.tolerance_scale
        )));
    }
    let cfg = &inv.config;
    cfg.validate()?;
    let tol = cfg.tolerances.scaled(inv.tolerance_scale);
    let checks = match &inv.sweep {
        None => {
            let outcome = scenarios::run(cfg, &tol)?;
            for (name, artifact) in &outcome.artifacts {
                let path = inv.out.join(name);
                match artifact {
                    Artifact::Csv(t) => write(&path, t.to_csv().as_bytes())?,
                    Artifact::Json(v) => write(&path, &stirfcs::export::json_bytes(v))?,
                }
                log::info!("wrote {}", path.display());
            }
            outcome.checks
        }
        Some(spec) => {
            let outcome = sweep::run(cfg, spec, &tol)?;
            let path = inv.out.join(spec.file_name());
            write(&path, outcome.table.to_csv().as_bytes())?;
            log::info!("wrote {}", path.display());
            outcome.checks
        }
    };
    let report = VerificationReport::new(
        cfg.hash(),
        cfg.scenario.to_string(),
        inv.sweep.as_ref().map(ToString::to_string),
        inv.tolerance_scale,
        checks,
    );
    write(&inv.report, &report.to_json())?;
    Ok(report)
}

/// 0 if every gating check passed, 1 if one failed, 2 for configuration
/// errors and 3 for numerical or I/O failures.
pub fn exit_code(result: &Result<VerificationReport, CliError>) -> i32 {
    match result {
        Ok(r) if r.all_passed() => 0,
        Ok(_) => EXIT_CHECK_FAILED,
        Err(e) => e.exit_code(),
    }
}

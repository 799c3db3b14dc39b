use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use stirfcs_cli::{execute, exit_code, load_config, CliError, Invocation, Scenario, SweepSpec};

/// Run a counting-statistics scenario and verify it against closed-form
/// predictions.
#[derive(Debug, Parser)]
#[command(name = "stirfcs", version)]
struct Args {
    /// TOML scenario configuration.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory for data files.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Scenario to run; overrides the configuration. Without --config the
    /// bundled example configuration of the scenario is used.
    #[arg(long, value_name = "NAME")]
    scenario: Option<String>,
    /// Sweep one numeric parameter, e.g. `dwell=0:25:12`.
    #[arg(long, value_name = "AXIS=start:stop:count")]
    sweep: Option<String>,
    /// Multiplies every tolerance.
    #[arg(long, value_name = "X", default_value_t = 1.0)]
    tolerance_scale: f64,
    /// Verification report path [default: OUT/report.json].
    #[arg(long, value_name = "PATH")]
    report: Option<PathBuf>,
}

fn resolve(args: Args) -> Result<Invocation, CliError> {
    let scenario = args
        .scenario
        .as_deref()
        .map(str::parse::<Scenario>)
        .transpose()?;
    let config = load_config(args.config.as_deref(), scenario)?;
    let sweep = args
        .sweep
        .as_deref()
        .map(str::parse::<SweepSpec>)
        .transpose()?;
    let out = args
        .out
        .or_else(|| config.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let report = args
        .report
        .or_else(|| config.output.report.clone())
        .unwrap_or_else(|| out.join("report.json"));
    Ok(Invocation {
        config,
        out,
        report,
        sweep,
        tolerance_scale: args.tolerance_scale,
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let result = resolve(args).and_then(|inv| execute(&inv));
    match &result {
        Ok(report) => {
            for check in report.checks.iter().filter(|c| !c.passed) {
                let tag = if check.gating { "FAIL" } else { "contrast" };
                eprintln!(
                    "{tag}: {} measured {:.6e}, predicted {:.6e} ({})",
                    check.name, check.measured, check.predicted, check.oracle
                );
            }
            let t = &report.totals;
            eprintln!(
                "{}: {} checks, {} passed, {} gating failures",
                report.scenario, t.checks, t.passed, t.gating_failed
            );
        }
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(exit_code(&result) as u8)
}

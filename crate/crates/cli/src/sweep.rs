//! Parameter sweeps: one scenario run per value, merged in value order.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use stirfcs::analytic;
use stirfcs::export::Table;

use crate::config::{Scenario, ScenarioConfig, Tolerances};
use crate::error::CliError;
use crate::fit;
use crate::report::{Check, Comparison};
use crate::scenarios::{self, primary_columns};

/// `AXIS=start:stop:count`, sampled as `count` evenly spaced values with
/// both ends included.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub axis: String,
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl FromStr for SweepSpec {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        let bad = || {
            CliError::Config(format!(
                "sweep '{s}' is not of the form AXIS=start:stop:count"
            ))
        };
        let (axis, range) = s.split_once('=').ok_or_else(bad)?;
        let parts: Vec<&str> = range.split(':').collect();
        if axis.trim().is_empty() || parts.len() != 3 {
            return Err(bad());
        }
        let start: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let stop: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let count: usize = parts[2].trim().parse().map_err(|_| bad())?;
        if !(start.is_finite() && stop.is_finite()) {
            return Err(bad());
        }
        Ok(Self {
            axis: axis.trim().to_string(),
            start,
            stop,
            count,
        })
    }
}

impl fmt::Display for SweepSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}={}:{}:{}",
            self.axis, self.start, self.stop, self.count
        )
    }
}

impl SweepSpec {
    pub fn values(&self) -> Vec<f64> {
        match self.count {
            0 => Vec::new(),
            1 => vec![self.start],
            n => (0..n)
                .map(|i| self.start + (self.stop - self.start) * i as f64 / (n - 1) as f64)
                .collect(),
        }
    }

    /// `table.key`, with bare names resolved to the protocol table.
    pub fn qualified_axis(&self) -> String {
        if self.axis.contains('.') {
            self.axis.clone()
        } else {
            format!("protocol.{}", self.axis)
        }
    }

    pub fn file_name(&self) -> String {
        let stem: String = self
            .axis
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
            .collect();
        format!("sweep_{stem}.csv")
    }

    fn column(&self) -> String {
        let key = self.axis.rsplit('.').next().unwrap_or(&self.axis);
        let unit = match key {
            "c" | "u" | "u_span" | "delta" | "c1" | "c2" => "energy",
            "udot" => "energy/time",
            "dwell" | "rest" | "duration" | "t_start" | "t_end" => "time",
            "p_lz" => "probability",
            "q_max" => "particles",
            _ => "1",
        };
        // prefixed so it never collides with a column of the scenario table
        format!("sweep_{key}[{unit}]")
    }
}

pub struct SweepOutcome {
    pub table: Table,
    pub checks: Vec<Check>,
}

fn is_axis(spec: &SweepSpec, key: &str) -> bool {
    spec.qualified_axis() == format!("protocol.{key}")
}

/// Number of sweep-level checks added on top of the per-value checks.
fn sweep_level_checks(cfg: &ScenarioConfig, spec: &SweepSpec, n: usize) -> usize {
    if cfg.scenario != Scenario::StirCycle {
        return 0;
    }
    if is_axis(spec, "lambda_cw") && n >= 2 {
        1
    } else if is_axis(spec, "dwell") && n >= 3 && cfg.protocol.lambda_ccw == cfg.protocol.lambda_cw
    {
        4
    } else {
        0
    }
}

/// Runs the scenario for every value of the sweep, concurrently, and merges
/// the primary tables in value order.
pub fn run(
    cfg: &ScenarioConfig,
    spec: &SweepSpec,
    tol: &Tolerances,
) -> Result<SweepOutcome, CliError> {
    let values = spec.values();
    let configs: Vec<ScenarioConfig> = values
        .iter()
        .map(|&v| {
            let c = cfg.with_value(&spec.qualified_axis(), v)?;
            c.validate()?;
            Ok(c)
        })
        .collect::<Result<_, CliError>>()?;

    let mut columns = vec![spec.column()];
    columns.extend(primary_columns(cfg)?);
    let mut table = Table::new(columns);
    let outcomes: Vec<_> = configs
        .par_iter()
        .map(|c| scenarios::run(c, tol))
        .collect::<Result<_, CliError>>()?;

    let mut checks = Vec::new();
    for (v, out) in values.iter().zip(&outcomes) {
        for row in out.primary_table().rows() {
            let mut r = vec![*v];
            r.extend(row);
            table.push(r);
        }
        let prefix = format!("{}={v}", spec.axis);
        checks.extend(out.checks.iter().cloned().map(|k| k.prefixed(&prefix)));
    }
    let before = checks.len();
    checks.extend(stir_sweep_checks(cfg, spec, &table, tol));
    debug_assert_eq!(
        checks.len() - before,
        sweep_level_checks(cfg, spec, values.len())
    );
    Ok(SweepOutcome { table, checks })
}

pub fn declared_checks(cfg: &ScenarioConfig, spec: &SweepSpec) -> Result<usize, CliError> {
    let values = spec.values();
    let mut total = sweep_level_checks(cfg, spec, values.len());
    for v in values {
        total += scenarios::declared_checks(&cfg.with_value(&spec.qualified_axis(), v)?)?;
    }
    Ok(total)
}

fn column(table: &Table, name: &str) -> Vec<f64> {
    let idx = table
        .columns()
        .iter()
        .position(|c| c == name)
        .unwrap_or_else(|| panic!("missing column {name}"));
    table.rows().iter().map(|r| r[idx]).collect()
}

fn stir_sweep_checks(
    cfg: &ScenarioConfig,
    spec: &SweepSpec,
    table: &Table,
    tol: &Tolerances,
) -> Vec<Check> {
    let n = table.rows().len();
    match sweep_level_checks(cfg, spec, n) {
        1 => {
            let lb = column(table, "lambda_cw[1]");
            let mean = column(table, "mean[particles]");
            let (_, slope, _) = fit::linear(&lb, &mean);
            vec![Check::new(
                "sweep/pumping_slope",
                "analytic::stirring_charge",
                -1.0,
                slope,
                tol.slope_rel,
                Comparison::Relative,
            )]
        }
        4 => {
            let phi = column(table, "phi[rad]");
            let variance = column(table, "variance[particles^2]");
            let residual = column(table, "residual[probability]");
            let p_lz = column(table, "P_LZ[probability]")[0];
            let lambda = cfg.protocol.lambda_ccw.expect("validated stir-cycle");
            let cos2: Vec<f64> = phi.iter().map(|p| (0.5 * p).cos().powi(2)).collect();
            let sin2: Vec<f64> = phi.iter().map(|p| (0.5 * p).sin().powi(2)).collect();
            let (a, r2_var) = fit::proportional(&cos2, &variance);
            let (b, r2_res) = fit::proportional(&sin2, &residual);
            // amplitudes of the two closed forms at φ = 0 and φ = π
            let var_amp = analytic::stirring_variance(&analytic::CyclePrediction {
                lambda_ccw: lambda,
                lambda_cw: lambda,
                phi: 0.0,
                p_lz,
            });
            let res_amp = analytic::residual_occupation(std::f64::consts::PI, p_lz);
            vec![
                Check::new(
                    "sweep/variance_cos2_r2",
                    "analytic::stirring_variance",
                    1.0,
                    r2_var,
                    tol.interference_r2,
                    Comparison::Absolute,
                )
                .contrast(),
                Check::new(
                    "sweep/variance_amplitude",
                    "analytic::stirring_variance",
                    var_amp,
                    a,
                    tol.interference_amplitude,
                    Comparison::Relative,
                )
                .contrast(),
                Check::new(
                    "sweep/residual_sin2_r2",
                    "analytic::residual_occupation",
                    1.0,
                    r2_res,
                    tol.interference_r2,
                    Comparison::Absolute,
                ),
                Check::new(
                    "sweep/residual_amplitude",
                    "analytic::residual_occupation",
                    res_amp,
                    b,
                    tol.interference_amplitude,
                    Comparison::Relative,
                ),
            ]
        }
        _ => Vec::new(),
    }
}

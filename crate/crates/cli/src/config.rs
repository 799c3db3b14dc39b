//! Scenario configuration files.
//!
//! A configuration is a TOML document with a top-level `scenario` key, a
//! `[protocol]` table, optional `[integrator]` and `[tolerances]` tables and
//! one table per scenario holding its grid and sweep settings. Tables for
//! scenarios other than the selected one are accepted and ignored, so one
//! file can drive several scenarios via `--scenario`.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use stirfcs::model::{hex_digest, ProtocolConfig, ProtocolKind};
use stirfcs::propagation::StepControl;
use stirfcs::{Bond, DrivingProtocol, Sites};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Levels,
    LzSweep,
    SinglePath,
    DoublePath,
    StirCycle,
    Fcs,
    MultiCycle,
}

impl Scenario {
    pub const ALL: [Scenario; 7] = [
        Scenario::Levels,
        Scenario::LzSweep,
        Scenario::SinglePath,
        Scenario::DoublePath,
        Scenario::StirCycle,
        Scenario::Fcs,
        Scenario::MultiCycle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Levels => "levels",
            Scenario::LzSweep => "lz-sweep",
            Scenario::SinglePath => "single-path",
            Scenario::DoublePath => "double-path",
            Scenario::StirCycle => "stir-cycle",
            Scenario::Fcs => "fcs",
            Scenario::MultiCycle => "multi-cycle",
        }
    }

    /// The example configuration shipped for this scenario.
    pub fn example_config(self) -> &'static str {
        match self {
            Scenario::Levels => include_str!("../configs/levels.toml"),
            Scenario::LzSweep => include_str!("../configs/lz-sweep.toml"),
            Scenario::SinglePath => include_str!("../configs/single-path.toml"),
            Scenario::DoublePath => include_str!("../configs/double-path.toml"),
            Scenario::StirCycle => include_str!("../configs/stir-cycle.toml"),
            Scenario::Fcs => include_str!("../configs/fcs.toml"),
            Scenario::MultiCycle => include_str!("../configs/multi-cycle.toml"),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Scenario::ALL.iter().map(|s| s.name()).collect();
                CliError::Config(format!(
                    "unknown scenario '{s}', expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

/// Initial state of a counting run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preparation {
    /// Particle on site 0.
    #[default]
    Site0,
    /// `(|0⟩ + |1⟩)/√2`.
    Generic,
    /// The Floquet state of one period with the largest site-0 weight.
    Floquet,
}

/// Tolerances of the verification checks. `--tolerance-scale` multiplies
/// every entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative error of the passage probability.
    pub lz_rel: f64,
    /// Absolute error of single-path eigenvalues and weights.
    pub spectrum_abs: f64,
    /// Relative error of single-path mean and variance.
    pub moments_rel: f64,
    pub double_mean_rel: f64,
    pub double_variance_rel: f64,
    /// Absolute floor under `double_variance_rel`.
    pub double_variance_floor: f64,
    /// Upper bound on the half-split variance in the adiabatic limit.
    pub double_variance_bound: f64,
    pub stir_mean_rel: f64,
    /// Absolute floor under `stir_mean_rel`, for cycles that pump nothing.
    pub stir_mean_floor: f64,
    /// Relative deviation reported for the phase-dependent predictions.
    pub stir_variance_rel: f64,
    pub residual_rel: f64,
    /// Equal-split identity between variance and residual occupation.
    pub identity_rel: f64,
    pub continuity_abs: f64,
    pub fcs_moment_abs: f64,
    pub fcs_norm_abs: f64,
    /// Relative error of the minimal gap against twice the coupling.
    pub gap_rel: f64,
    /// Allowed `1 − R²` of the linear spreading fit.
    pub spreading_r2: f64,
    /// Bound on the Floquet-state spread relative to its one-cycle value.
    pub floquet_ratio: f64,
    /// Relative error of the pumping slope in a `lambda_cw` sweep.
    pub slope_rel: f64,
    /// Allowed `1 − R²` of the interference fits in a `dwell` sweep.
    pub interference_r2: f64,
    /// Allowed deviation of the interference amplitudes from their
    /// predicted values, relative.
    pub interference_amplitude: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            lz_rel: 0.05,
            spectrum_abs: 1e-3,
            moments_rel: 0.02,
            double_mean_rel: 0.01,
            double_variance_rel: 0.05,
            double_variance_floor: 1e-4,
            double_variance_bound: 1e-4,
            stir_mean_rel: 0.05,
            stir_mean_floor: 1e-3,
            stir_variance_rel: 0.1,
            residual_rel: 0.1,
            identity_rel: 1e-3,
            continuity_abs: 1e-8,
            fcs_moment_abs: 1e-4,
            fcs_norm_abs: 1e-9,
            gap_rel: 0.05,
            spreading_r2: 0.01,
            floquet_ratio: 3.0,
            slope_rel: 0.02,
            interference_r2: 0.02,
            interference_amplitude: 0.1,
        }
    }
}

impl Tolerances {
    fn entries_mut(&mut self) -> [(&'static str, &mut f64); 21] {
        [
            ("lz_rel", &mut self.lz_rel),
            ("spectrum_abs", &mut self.spectrum_abs),
            ("moments_rel", &mut self.moments_rel),
            ("double_mean_rel", &mut self.double_mean_rel),
            ("double_variance_rel", &mut self.double_variance_rel),
            ("double_variance_floor", &mut self.double_variance_floor),
            ("double_variance_bound", &mut self.double_variance_bound),
            ("stir_mean_rel", &mut self.stir_mean_rel),
            ("stir_mean_floor", &mut self.stir_mean_floor),
            ("stir_variance_rel", &mut self.stir_variance_rel),
            ("residual_rel", &mut self.residual_rel),
            ("identity_rel", &mut self.identity_rel),
            ("continuity_abs", &mut self.continuity_abs),
            ("fcs_moment_abs", &mut self.fcs_moment_abs),
            ("fcs_norm_abs", &mut self.fcs_norm_abs),
            ("gap_rel", &mut self.gap_rel),
            ("spreading_r2", &mut self.spreading_r2),
            ("floquet_ratio", &mut self.floquet_ratio),
            ("slope_rel", &mut self.slope_rel),
            ("interference_r2", &mut self.interference_r2),
            ("interference_amplitude", &mut self.interference_amplitude),
        ]
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let mut copy = self.clone();
        for (name, value) in copy.entries_mut() {
            if !(*value > 0.0 && value.is_finite()) {
                return Err(CliError::Config(format!(
                    "tolerance '{name}' must be positive, got {value}"
                )));
            }
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> Tolerances {
        let mut out = self.clone();
        for (_, value) in out.entries_mut() {
            *value *= factor;
        }
        out
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LevelsConfig {
    /// Uniform time samples of the level diagram, breakpoints added.
    pub samples: usize,
}

impl Default for LevelsConfig {
    fn default() -> Self {
        Self { samples: 2001 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LzSweepConfig {
    /// Values of the adiabaticity exponent `2πc²/u̇`.
    pub exponents: Vec<f64>,
}

impl Default for LzSweepConfig {
    fn default() -> Self {
        Self {
            exponents: vec![0.5, 1.0, 2.0, 3.0, 4.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SinglePathConfig {
    /// Transferred probabilities whose counting spectrum is resolved.
    pub p_targets: Vec<f64>,
    /// Passage probabilities for the mean and variance checks.
    pub p_lz_values: Vec<f64>,
    /// Highest moment written to the moment table.
    pub max_order: usize,
}

impl Default for SinglePathConfig {
    fn default() -> Self {
        Self {
            p_targets: vec![0.25, 0.5, 0.9],
            p_lz_values: vec![0.05, 0.1, 0.2, 0.4, 0.6],
            max_order: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DoublePathConfig {
    pub lambdas: Vec<f64>,
    pub p_lz: f64,
}

impl Default for DoublePathConfig {
    fn default() -> Self {
        Self {
            lambdas: vec![-0.7, 0.3, 0.5, 1.0, 1.7],
            p_lz: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StirCycleConfig {
    /// Samples of the adiabatic frame used for the dynamical phase.
    pub frame_samples: usize,
    pub preparation: Preparation,
}

impl Default for StirCycleConfig {
    fn default() -> Self {
        Self {
            frame_samples: 4001,
            preparation: Preparation::Site0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FcsConfig {
    pub bond: Bond,
    pub preparation: Preparation,
    /// Half-width of the charge grid.
    pub q_max: f64,
    /// Charge grid points on each side of zero.
    pub points: usize,
}

impl Default for FcsConfig {
    fn default() -> Self {
        Self {
            bond: Bond::ZeroOne,
            preparation: Preparation::Site0,
            q_max: 3.0,
            points: 60,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MultiCycleConfig {
    pub cycles: usize,
}

impl Default for MultiCycleConfig {
    fn default() -> Self {
        Self { cycles: 16 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub integrator: StepControl,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub levels: LevelsConfig,
    #[serde(default, rename = "lz-sweep")]
    pub lz_sweep: LzSweepConfig,
    #[serde(default, rename = "single-path")]
    pub single_path: SinglePathConfig,
    #[serde(default, rename = "double-path")]
    pub double_path: DoublePathConfig,
    #[serde(default, rename = "stir-cycle")]
    pub stir_cycle: StirCycleConfig,
    #[serde(default)]
    pub fcs: FcsConfig,
    #[serde(default, rename = "multi-cycle")]
    pub multi_cycle: MultiCycleConfig,
}

fn config_err(e: impl fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn probability(name: &str, p: f64) -> Result<(), CliError> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "{name} must lie in (0, 1), got {p}"
        )))
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(config_err)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configurations always serialize")
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hex_digest(&serde_json::to_vec(self).expect("configurations always serialize"))
    }

    pub fn protocol(&self) -> Result<DrivingProtocol, CliError> {
        self.protocol.to_protocol().map_err(config_err)
    }

    /// Protocol table for scenarios that derive `udot` per point.
    fn ramp_base(&self, sites: Sites) -> Result<f64, CliError> {
        let p = &self.protocol;
        if p.kind != ProtocolKind::LinearRamp {
            return Err(CliError::Config(format!(
                "{} needs a linear-ramp protocol",
                self.scenario
            )));
        }
        if p.udot.is_some() || p.p_lz.is_some() {
            return Err(CliError::Config(format!(
                "{} sets the sweep rate per point; remove 'udot' and 'p_lz'",
                self.scenario
            )));
        }
        if let Some(n) = p.sites {
            if n != sites.dim() {
                return Err(CliError::Config(format!(
                    "{} needs {} sites, got {n}",
                    self.scenario,
                    sites.dim()
                )));
            }
        }
        match p.c {
            Some(c) if c > 0.0 && c.is_finite() => Ok(c),
            _ => Err(CliError::Config(format!(
                "{} needs a positive coupling 'c'",
                self.scenario
            ))),
        }
    }

    /// Checks that every parameter the selected scenario reads is valid.
    pub fn validate(&self) -> Result<(), CliError> {
        self.tolerances.validate()?;
        self.integrator.validate().map_err(config_err)?;
        match self.scenario {
            Scenario::Levels => {
                self.protocol()?;
                if self.levels.samples < 2 {
                    return Err(config_err("levels.samples must be at least 2"));
                }
            }
            Scenario::LzSweep => {
                self.ramp_base(Sites::Two)?;
                if self
                    .lz_sweep
                    .exponents
                    .iter()
                    .any(|&x| !(x > 0.0 && x.is_finite()))
                {
                    return Err(config_err("lz-sweep.exponents must be positive"));
                }
            }
            Scenario::SinglePath => {
                self.ramp_base(Sites::Two)?;
                for &p in self
                    .single_path
                    .p_targets
                    .iter()
                    .chain(&self.single_path.p_lz_values)
                {
                    probability("single-path probabilities", p)?;
                }
                if self.single_path.max_order < 2 {
                    return Err(config_err("single-path.max_order must be at least 2"));
                }
            }
            Scenario::DoublePath => {
                self.ramp_base(Sites::Three)?;
                probability("double-path.p_lz", self.double_path.p_lz)?;
                if self.double_path.lambdas.iter().any(|l| !l.is_finite()) {
                    return Err(config_err("double-path.lambdas must be finite"));
                }
            }
            Scenario::StirCycle | Scenario::MultiCycle => {
                if self.protocol.kind != ProtocolKind::StirCycle {
                    return Err(CliError::Config(format!(
                        "{} needs a stir-cycle protocol",
                        self.scenario
                    )));
                }
                self.protocol()?;
                if self.scenario == Scenario::StirCycle && self.stir_cycle.frame_samples < 2 {
                    return Err(config_err("stir-cycle.frame_samples must be at least 2"));
                }
                if self.scenario == Scenario::MultiCycle
                    && self.multi_cycle.cycles < stirfcs::counting::MIN_CYCLES
                {
                    return Err(CliError::Config(format!(
                        "multi-cycle.cycles must be at least {}",
                        stirfcs::counting::MIN_CYCLES
                    )));
                }
            }
            Scenario::Fcs => {
                let proto = self.protocol()?;
                proto
                    .current_operator(proto.t_start(), self.fcs.bond)
                    .map_err(config_err)?;
                if !(self.fcs.q_max > 0.0 && self.fcs.q_max.is_finite()) || self.fcs.points == 0 {
                    return Err(config_err("fcs needs q_max > 0 and points ≥ 1"));
                }
                if self.fcs.preparation == Preparation::Floquet
                    && self.protocol.kind != ProtocolKind::StirCycle
                {
                    return Err(config_err(
                        "a Floquet preparation needs a stir-cycle protocol",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Copy with the numeric field at `axis` set to `value`. A bare name
    /// refers to the `[protocol]` table; other tables use `table.key`.
    pub fn with_value(&self, axis: &str, value: f64) -> Result<Self, CliError> {
        let (table, key) = axis.split_once('.').unwrap_or(("protocol", axis));
        let mut doc = toml::Value::try_from(self).map_err(config_err)?;
        let section = doc
            .get_mut(table)
            .and_then(toml::Value::as_table_mut)
            .ok_or_else(|| CliError::Config(format!("unknown sweep table '{table}'")))?;
        let new = match section.get(key) {
            Some(toml::Value::Integer(_)) => {
                if value.fract() != 0.0 || value < 0.0 {
                    return Err(CliError::Config(format!(
                        "sweep axis '{axis}' takes non-negative integers, got {value}"
                    )));
                }
                toml::Value::Integer(value as i64)
            }
            Some(toml::Value::Float(_)) | None => toml::Value::Float(value),
            Some(_) => {
                return Err(CliError::Config(format!(
                    "sweep axis '{axis}' is not numeric"
                )))
            }
        };
        section.insert(key.to_string(), new);
        doc.try_into()
            .map_err(|e| CliError::Config(format!("sweep axis '{axis}': {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_example_config_parses_and_validates() {
        for sc in Scenario::ALL {
            let cfg = ScenarioConfig::from_toml(sc.example_config()).unwrap();
            assert_eq!(cfg.scenario, sc);
            cfg.validate().unwrap_or_else(|e| panic!("{sc}: {e}"));
        }
    }

    #[test]
    fn toml_round_trip_keeps_hash() {
        let cfg = ScenarioConfig::from_toml(Scenario::StirCycle.example_config()).unwrap();
        let back = ScenarioConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = "scenario = \"levels\"\n[protocol]\nkind = \"constant\"\nu = 1.0\nduration = 2.0\nwobble = 3\n";
        assert!(matches!(
            ScenarioConfig::from_toml(text),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn sweep_values_land_in_the_right_table() {
        let cfg = ScenarioConfig::from_toml(Scenario::StirCycle.example_config()).unwrap();
        let swept = cfg.with_value("dwell", 2.5).unwrap();
        assert_eq!(swept.protocol.dwell, Some(2.5));
        let swept = cfg.with_value("stir-cycle.frame_samples", 101.0).unwrap();
        assert_eq!(swept.stir_cycle.frame_samples, 101);
        assert!(cfg.with_value("stir-cycle.frame_samples", 1.5).is_err());
        assert!(cfg.with_value("stir-cycle.preparation", 1.0).is_err());
        assert!(cfg.with_value("nonsense", 1.0).is_err());
    }

    #[test]
    fn tolerances_scale_and_validate() {
        let t = Tolerances::default().scaled(10.0);
        assert_eq!(t.lz_rel, 0.5);
        assert_eq!(t.continuity_abs, 1e-7);
        assert!(Tolerances::default().scaled(0.0).validate().is_err());
    }

    #[test]
    fn ramp_scenarios_reject_a_fixed_rate() {
        let mut cfg = ScenarioConfig::from_toml(Scenario::LzSweep.example_config()).unwrap();
        cfg.protocol.udot = Some(0.01);
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
    }
}

//! The named experiments. Each returns its artifacts and the checks that
//! compare them with closed-form predictions.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64 as C64;
use serde_json::Value;
use stirfcs::analytic::{self, CyclePrediction, LZParams};
use stirfcs::counting::{
    charge_matrix_full, conjugate_grids, continuity_check, counting_stats, fcs_quasi,
    multi_cycle_spreading, CountingResult,
};
use stirfcs::export::{self, Metadata, Table};
use stirfcs::model::{crossing_coupling, ProtocolConfig, ProtocolPreset, StirCycle};
use stirfcs::propagation::{
    adiabatic_frame, dynamical_phase, floquet_states, frame_grid, StepControl,
};
use stirfcs::{Bond, CVec, DrivingProtocol, Error as CoreError};

use crate::config::{Preparation, Scenario, ScenarioConfig, Tolerances};
use crate::error::CliError;
use crate::fit;
use crate::report::{Check, Comparison};

pub enum Artifact {
    Csv(Table),
    Json(Value),
}

/// Files produced by one scenario run, keyed by file name, and its checks.
pub struct Outcome {
    pub artifacts: Vec<(String, Artifact)>,
    /// File name of the table that sweeps aggregate.
    pub primary: &'static str,
    pub checks: Vec<Check>,
}

impl Outcome {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.artifacts.iter().find_map(|(n, a)| match a {
            Artifact::Csv(t) if n == name => Some(t),
            _ => None,
        })
    }

    pub fn primary_table(&self) -> &Table {
        self.table(self.primary)
            .expect("scenarios always emit their primary table")
    }
}

const LZ_COLUMNS: [&str; 4] = [
    "exponent[1]",
    "P_numeric[probability]",
    "P_predicted[probability]",
    "rel_err[1]",
];
const SINGLE_SPECTRUM_COLUMNS: [&str; 6] = [
    "p_target[probability]",
    "p_transferred[probability]",
    "Q[particles]",
    "weight[probability]",
    "Q_predicted[particles]",
    "weight_predicted[probability]",
];
const SINGLE_MOMENT_COLUMNS: [&str; 5] = [
    "P_LZ[probability]",
    "k[order]",
    "moment[particles^k]",
    "quantum[particles^k]",
    "classical[particles^k]",
];
const DOUBLE_COLUMNS: [&str; 6] = [
    "lambda[1]",
    "p[probability]",
    "mean[particles]",
    "mean_predicted[particles]",
    "variance[particles^2]",
    "variance_predicted[particles^2]",
];
const STIR_COLUMNS: [&str; 13] = [
    "lambda_ccw[1]",
    "lambda_cw[1]",
    "P_LZ[probability]",
    "dwell[time]",
    "period[time]",
    "phi[rad]",
    "mean[particles]",
    "mean_predicted[particles]",
    "variance[particles^2]",
    "variance_predicted[particles^2]",
    "residual[probability]",
    "residual_predicted[probability]",
    "continuity_defect[particles]",
];
const FCS_SPECTRUM_COLUMNS: [&str; 2] = ["Q[particles]", "p[probability]"];
const MULTI_COLUMNS: [&str; 5] = [
    "n[cycles]",
    "mean_generic[particles]",
    "std_generic[particles]",
    "mean_floquet[particles]",
    "std_floquet[particles]",
];

/// Header of the primary table, known without running the scenario.
pub fn primary_columns(cfg: &ScenarioConfig) -> Result<Vec<String>, CliError> {
    let cols: Vec<&str> = match cfg.scenario {
        Scenario::Levels => {
            if cfg.protocol()?.dim() == 3 {
                vec![
                    "t[time]",
                    "E0[energy]",
                    "E_minus[energy]",
                    "E_plus[energy]",
                    "followed[level]",
                ]
            } else {
                vec!["t[time]", "E0[energy]", "E1[energy]", "followed[level]"]
            }
        }
        Scenario::LzSweep => LZ_COLUMNS.to_vec(),
        Scenario::SinglePath => SINGLE_SPECTRUM_COLUMNS.to_vec(),
        Scenario::DoublePath => DOUBLE_COLUMNS.to_vec(),
        Scenario::StirCycle => STIR_COLUMNS.to_vec(),
        Scenario::Fcs => FCS_SPECTRUM_COLUMNS.to_vec(),
        Scenario::MultiCycle => MULTI_COLUMNS.to_vec(),
    };
    Ok(cols.into_iter().map(String::from).collect())
}

/// Number of checks a run of `cfg` reports.
pub fn declared_checks(cfg: &ScenarioConfig) -> Result<usize, CliError> {
    Ok(match cfg.scenario {
        Scenario::Levels => usize::from(!cfg.protocol()?.nominal_crossings().is_empty()),
        Scenario::LzSweep => cfg.lz_sweep.exponents.len(),
        Scenario::SinglePath => {
            4 * cfg.single_path.p_targets.len() + 2 * cfg.single_path.p_lz_values.len()
        }
        Scenario::DoublePath => {
            2 * cfg.double_path.lambdas.len()
                + if cfg.double_path.lambdas.contains(&0.5) {
                    2
                } else {
                    0
                }
        }
        Scenario::StirCycle => {
            let cycle = stir_params(&cfg.protocol()?)?;
            4 + usize::from(cycle.lambda_ccw == cycle.lambda_cw)
        }
        Scenario::Fcs => 3,
        Scenario::MultiCycle => 2,
    })
}

/// Runs the scenario selected in `cfg`, which must already be validated.
pub fn run(cfg: &ScenarioConfig, tol: &Tolerances) -> Result<Outcome, CliError> {
    let outcome = match cfg.scenario {
        Scenario::Levels => levels(cfg, tol),
        Scenario::LzSweep => lz_sweep(cfg, tol),
        Scenario::SinglePath => single_path(cfg, tol),
        Scenario::DoublePath => double_path(cfg, tol),
        Scenario::StirCycle => stir_cycle(cfg, tol),
        Scenario::Fcs => fcs(cfg, tol),
        Scenario::MultiCycle => multi_cycle(cfg, tol),
    }?;
    let declared = declared_checks(cfg)?;
    assert_eq!(
        outcome.checks.len(),
        declared,
        "{} reported a different number of checks than it declares",
        cfg.scenario
    );
    Ok(outcome)
}

fn metadata(proto: &DrivingProtocol, ctrl: &StepControl, steps: usize) -> Metadata {
    Metadata {
        engine_version: export::ENGINE_VERSION.to_string(),
        protocol: proto.canonical_description(),
        protocol_hash: proto.hash(),
        step_control: *ctrl,
        steps,
    }
}

fn stir_params(proto: &DrivingProtocol) -> Result<StirCycle, CliError> {
    match proto.preset() {
        ProtocolPreset::StirCycle(s) => Ok(*s),
        _ => Err(CliError::Config("expected a stir-cycle protocol".into())),
    }
}

/// `|⟨0|ψ⟩|²` after the protocol, the population left on (or returned to)
/// site 0.
fn site0_population(u: &stirfcs::CMat, psi0: &CVec) -> f64 {
    u.mul_vec(psi0)[0].norm_sqr()
}

pub fn prepare(
    prep: Preparation,
    proto: &DrivingProtocol,
    ctrl: &StepControl,
) -> Result<CVec, CliError> {
    let dim = proto.dim();
    Ok(match prep {
        Preparation::Site0 => CVec::basis(dim, 0),
        Preparation::Generic => {
            let mut v = vec![C64::new(0.0, 0.0); dim];
            v[0] = C64::new(FRAC_1_SQRT_2, 0.0);
            v[1] = C64::new(FRAC_1_SQRT_2, 0.0);
            CVec::from_slice(&v)
        }
        Preparation::Floquet => {
            let spectrum = floquet_states(proto, ctrl)?;
            *spectrum
                .states
                .iter()
                .max_by(|a, b| a[0].norm_sqr().total_cmp(&b[0].norm_sqr()))
                .expect("non-empty Floquet spectrum")
        }
    })
}

fn levels(cfg: &ScenarioConfig, tol: &Tolerances) -> Result<Outcome, CliError> {
    let proto = cfg.protocol()?;
    let frame = adiabatic_frame(&proto, &frame_grid(&proto, cfg.levels.samples))?;
    let mut checks = Vec::new();
    if let Some(&t_cross) = proto.nominal_crossings().first() {
        let c_eff = crossing_coupling(proto.sites(), &proto.couplings(t_cross)?);
        let min_gap = frame
            .gap(frame.tracked(), frame.partner())
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        checks.push(Check::new(
            "minimal_gap",
            "twice the effective crossing coupling",
            2.0 * c_eff,
            min_gap,
            tol.gap_rel,
            Comparison::Relative,
        ));
    }
    Ok(Outcome {
        artifacts: vec![(
            "levels.csv".into(),
            Artifact::Csv(export::levels_table(&frame)),
        )],
        primary: "levels.csv",
        checks,
    })
}

fn with_rate(
    base: &ProtocolConfig,
    f: impl FnOnce(&mut ProtocolConfig),
) -> Result<DrivingProtocol, CliError> {
    let mut cfg = base.clone();
    f(&mut cfg);
    cfg.to_protocol()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn lz_sweep(cfg: &ScenarioConfig, tol: &Tolerances) -> Result<Outcome, CliError> {
    let c = cfg.protocol.c.expect("validated");
    let ctrl = cfg.integrator;
    let mut table = Table::new(LZ_COLUMNS);
    let mut checks = Vec::new();
    for &x in &cfg.lz_sweep.exponents {
        let udot = 2.0 * PI * c * c / x;
        let proto = with_rate(&cfg.protocol, |p| {
            p.sites = Some(2);
            p.udot = Some(udot);
        })?;
        let rec = stirfcs::propagation::propagate_full(&proto, &ctrl)?;
        let numeric = site0_population(&rec.u, &CVec::basis(2, 0));
        let predicted = analytic::lz_probability(&LZParams { c, udot });
        table.push(vec![
            x,
            numeric,
            predicted,
            (numeric - predicted) / predicted,
        ]);
        checks.push(Check::new(
            format!("lz_probability/exponent={x}"),
            "analytic::lz_probability",
            predicted,
            numeric,
            tol.lz_rel,
            Comparison::Relative,
        ));
    }
    Ok(Outcome {
        artifacts: vec![("lz_sweep.csv".into(), Artifact::Csv(table))],
        primary: "lz_sweep.csv",
        checks,
    })
}

fn single_passage(
    cfg: &ScenarioConfig,
    p_lz: f64,
    k_max: usize,
) -> Result<(CountingResult, f64), CliError> {
    let proto = with_rate(&cfg.protocol, |p| {
        p.sites = Some(2);
        p.p_lz = Some(p_lz);
    })?;
    let psi0 = CVec::basis(2, 0);
    let qm = charge_matrix_full(&proto, Bond::ZeroOne, &cfg.integrator)?;
    let transferred = 1.0 - site0_population(&qm.propagator.u, &psi0);
    Ok((counting_stats(&qm, &psi0, k_max)?, transferred))
}

fn single_path(cfg: &ScenarioConfig, tol: &Tolerances) -> Result<Outcome, CliError> {
    let mut spectrum = Table::new(SINGLE_SPECTRUM_COLUMNS);
    let mut moments = Table::new(SINGLE_MOMENT_COLUMNS);
    let mut checks = Vec::new();
    for &p in &cfg.single_path.p_targets {
        let (stats, transferred) = single_passage(cfg, 1.0 - p, 2)?;
        let predicted = analytic::single_path_spectrum(p);
        // lines are sorted by eigenvalue, as are the predictions
        for (line, (q_pred, w_pred)) in stats.spectrum.iter().zip(predicted) {
            spectrum.push(vec![p, transferred, line.q, line.p, q_pred, w_pred]);
            let sign = if q_pred < 0.0 { "minus" } else { "plus" };
            checks.push(Check::new(
                format!("eigenvalue_{sign}/p={p}"),
                "analytic::single_path_spectrum",
                q_pred,
                line.q,
                tol.spectrum_abs,
                Comparison::Absolute,
            ));
            checks.push(Check::new(
                format!("weight_{sign}/p={p}"),
                "analytic::single_path_spectrum",
                w_pred,
                line.p,
                tol.spectrum_abs,
                Comparison::Absolute,
            ));
        }
    }
    let k_max = cfg.single_path.max_order;
    for &p_lz in &cfg.single_path.p_lz_values {
        let (stats, _) = single_passage(cfg, p_lz, k_max)?;
        let p = 1.0 - p_lz;
        for k in 1..=k_max {
            moments.push(vec![
                p_lz,
                k as f64,
                stats.moments[k],
                analytic::single_path_moments(p, k as u32),
                analytic::classical_single_path_moment(p, k as u32),
            ]);
        }
        let (mean, variance) = analytic::double_path_moments(1.0, p);
        checks.push(Check::new(
            format!("mean/P_LZ={p_lz}"),
            "analytic::single_path_moments",
            mean,
            stats.mean,
            tol.moments_rel,
            Comparison::Relative,
        ));
        checks.push(Check::new(
            format!("variance/P_LZ={p_lz}"),
            "analytic::single_path_moments",
            variance,
            stats.variance,
            tol.moments_rel,
            Comparison::Relative,
        ));
    }
    Ok(Outcome {
        artifacts: vec![
            ("single_path_spectrum.csv".into(), Artifact::Csv(spectrum)),
            ("single_path_moments.csv".into(), Artifact::Csv(moments)),
        ],
        primary: "single_path_spectrum.csv",
        checks,
    })
}

fn double_path(cfg: &ScenarioConfig, tol: &Tolerances) -> Result<Outcome, CliError> {
    let p_lz = cfg.double_path.p_lz;
    let p = 1.0 - p_lz;
    let psi0 = CVec::basis(3, 0);
    let mut table = Table::new(DOUBLE_COLUMNS);
    let mut checks = Vec::new();
    for &lambda in &cfg.double_path.lambdas {
        let proto = with_rate(&cfg.protocol, |c| {
            c.sites = Some(3);
            c.p_lz = Some(p_lz);
            c.lambda = Some(lambda);
        })?;
        let qm = charge_matrix_full(&proto, Bond::ZeroOne, &cfg.integrator)?;
        let stats = counting_stats(&qm, &psi0, 2)?;
        let transferred = 1.0 - site0_population(&qm.propagator.u, &psi0);
        let (mean, variance) = analytic::double_path_moments(lambda, p);
        table.push(vec![
            lambda,
            transferred,
            stats.mean,
            mean,
            stats.variance,
            variance,
        ]);
        checks.push(Check::new(
            format!("mean/lambda={lambda}"),
            "analytic::double_path_moments",
            mean,
            stats.mean,
            tol.double_mean_rel,
            Comparison::Relative,
        ));
        checks.push(Check::new(
            format!("variance/lambda={lambda}"),
            "analytic::double_path_moments",
            variance,
            stats.variance,
            tol.double_variance_rel,
            Comparison::RelativeWithFloor {
                floor: tol.double_variance_floor,
            },
        ));
        if lambda == 0.5 {
            checks.push(Check::new(
                "half_split_variance_bound",
                "analytic::double_path_moments",
                variance,
                stats.variance,
                tol.double_variance_bound,
                Comparison::UpperBound,
            ));
            let classical = analytic::classical_double_path_variance(lambda, p)?;
            checks.push(
                Check::new(
                    "half_split_classical_variance",
                    "analytic::classical_double_path_variance",
                    classical,
                    stats.variance,
                    tol.double_variance_rel,
                    Comparison::Relative,
                )
                .contrast(),
            );
        }
    }
    Ok(Outcome {
        artifacts: vec![("double_path.csv".into(), Artifact::Csv(table))],
        primary: "double_path.csv",
        checks,
    })
}

/// Measured and predicted quantities of one stirring cycle.
pub struct CycleRun {
    pub cycle: StirCycle,
    pub p_lz: f64,
    pub phi: f64,
    pub stats: CountingResult,
    pub residual: f64,
    pub continuity_defect: f64,
    pub steps: usize,
}

pub fn run_cycle(
    proto: &DrivingProtocol,
    psi0: &CVec,
    ctrl: &StepControl,
    frame_samples: usize,
) -> Result<CycleRun, CliError> {
    let cycle = stir_params(proto)?;
    let frame = adiabatic_frame(proto, &frame_grid(proto, frame_samples))?;
    let phi = dynamical_phase(&frame, &[proto.t_end()])?
        .relative_phase()
        .ok_or(CoreError::NoCrossing)?;
    let qm = charge_matrix_full(proto, Bond::ZeroOne, ctrl)?;
    let stats = counting_stats(&qm, psi0, 2)?;
    let residual = 1.0 - site0_population(&qm.propagator.u, psi0);
    let continuity = continuity_check(proto, psi0, ctrl)?;
    Ok(CycleRun {
        cycle,
        p_lz: analytic::lz_probability(&LZParams {
            c: cycle.c,
            udot: cycle.udot,
        }),
        phi,
        stats,
        residual,
        continuity_defect: continuity.max_defect,
        steps: qm.propagator.steps,
    })
}

impl CycleRun {
    pub fn prediction(&self) -> CyclePrediction {
        CyclePrediction {
            lambda_ccw: self.cycle.lambda_ccw,
            lambda_cw: self.cycle.lambda_cw,
            phi: self.phi,
            p_lz: self.p_lz,
        }
    }
}

fn stir_cycle(cfg: &ScenarioConfig, tol: &Tolerances) -> Result<Outcome, CliError> {
    let proto = cfg.protocol()?;
    let ctrl = cfg.integrator;
    let psi0 = prepare(cfg.stir_cycle.preparation, &proto, &ctrl)?;
    let run = run_cycle(&proto, &psi0, &ctrl, cfg.stir_cycle.frame_samples)?;
    let (la, lb) = (run.cycle.lambda_ccw, run.cycle.lambda_cw);
    let pred = run.prediction();
    let mean_pred = analytic::stirring_charge(la, lb);
    let variance_pred = analytic::stirring_variance(&pred);
    let residual_pred = analytic::residual_occupation(run.phi, run.p_lz);

    let mut table = Table::new(STIR_COLUMNS);
    table.push(vec![
        la,
        lb,
        run.p_lz,
        run.cycle.dwell,
        proto.duration(),
        run.phi,
        run.stats.mean,
        mean_pred,
        run.stats.variance,
        variance_pred,
        run.residual,
        residual_pred,
        run.continuity_defect,
    ]);

    let mut checks = vec![
        Check::new(
            "mean_per_cycle",
            "analytic::stirring_charge",
            mean_pred,
            run.stats.mean,
            tol.stir_mean_rel,
            Comparison::RelativeWithFloor {
                floor: tol.stir_mean_floor,
            },
        ),
        Check::new(
            "continuity",
            "charge through both bonds equals the site-0 population change",
            0.0,
            run.continuity_defect,
            tol.continuity_abs,
            Comparison::Absolute,
        ),
        Check::new(
            "variance_at_measured_phase",
            "analytic::stirring_variance",
            variance_pred,
            run.stats.variance,
            tol.stir_variance_rel,
            Comparison::Relative,
        )
        .contrast(),
        Check::new(
            "residual_at_measured_phase",
            "analytic::residual_occupation",
            residual_pred,
            run.residual,
            tol.residual_rel,
            Comparison::Relative,
        )
        .contrast(),
    ];
    if la == lb {
        // with equal splits Q₀₁ = λ·(n₀ − U†n₀U) on the crossing pair
        let r = run.residual;
        checks.push(Check::new(
            "equal_split_variance_identity",
            "continuity with equal splitting: λ²·r·(1 − r)",
            la * la * r * (1.0 - r),
            run.stats.variance,
            tol.identity_rel,
            Comparison::RelativeWithFloor { floor: 1e-10 },
        ));
    }

    let meta = metadata(&proto, &ctrl, run.steps);
    Ok(Outcome {
        artifacts: vec![
            ("stir_cycle.csv".into(), Artifact::Csv(table)),
            (
                "stir_cycle.json".into(),
                Artifact::Json(export::counting_result_json(&run.stats, &meta)),
            ),
        ],
        primary: "stir_cycle.csv",
        checks,
    })
}

fn fcs(cfg: &ScenarioConfig, tol: &Tolerances) -> Result<Outcome, CliError> {
    let proto = cfg.protocol()?;
    let ctrl = cfg.integrator;
    let psi0 = prepare(cfg.fcs.preparation, &proto, &ctrl)?;
    let (r_grid, q_grid) = conjugate_grids(cfg.fcs.q_max, cfg.fcs.points)?;
    let quasi = fcs_quasi(&proto, cfg.fcs.bond, &psi0, &r_grid, &q_grid, &ctrl)?;
    let checks = vec![
        Check::new(
            "first_moment",
            "spectral distribution of the charge matrix",
            quasi.spectral.mean,
            quasi.moments[0],
            tol.fcs_moment_abs,
            Comparison::Absolute,
        ),
        Check::new(
            "second_moment",
            "spectral distribution of the charge matrix",
            quasi.spectral.moments[2],
            quasi.moments[1],
            tol.fcs_moment_abs,
            Comparison::Absolute,
        ),
        Check::new(
            "normalization",
            "generating function at zero counting field",
            1.0,
            quasi.normalization,
            tol.fcs_norm_abs,
            Comparison::Absolute,
        ),
    ];
    let meta = metadata(&proto, &ctrl, quasi.steps);
    Ok(Outcome {
        artifacts: vec![
            (
                "fcs_chi.csv".into(),
                Artifact::Csv(export::chi_table(&quasi)),
            ),
            ("fcs_p0.csv".into(), Artifact::Csv(export::p0_table(&quasi))),
            (
                "fcs_spectrum.csv".into(),
                Artifact::Csv(export::spectrum_table(&quasi.spectral)),
            ),
            (
                "fcs.json".into(),
                Artifact::Json(export::quasi_json(&quasi, &meta)),
            ),
        ],
        primary: "fcs_spectrum.csv",
        checks,
    })
}

fn multi_cycle(cfg: &ScenarioConfig, tol: &Tolerances) -> Result<Outcome, CliError> {
    let proto = cfg.protocol()?;
    let ctrl = cfg.integrator;
    let n = cfg.multi_cycle.cycles;
    let generic = prepare(Preparation::Generic, &proto, &ctrl)?;
    let floquet = prepare(Preparation::Floquet, &proto, &ctrl)?;
    let g = multi_cycle_spreading(&proto, Bond::ZeroOne, &generic, n, &ctrl)?;
    let f = multi_cycle_spreading(&proto, Bond::ZeroOne, &floquet, n, &ctrl)?;

    let mut table = Table::new(MULTI_COLUMNS);
    for (a, b) in g.iter().zip(&f) {
        table.push(vec![a.n as f64, a.mean, a.std, b.mean, b.std]);
    }
    let cycles: Vec<f64> = g.iter().map(|s| s.n as f64).collect();
    let spread: Vec<f64> = g.iter().map(|s| s.std).collect();
    let (_, _, r2) = fit::linear(&cycles, &spread);
    let bounded = f.iter().map(|s| s.std).fold(0.0, f64::max) / f[0].std;
    let checks = vec![
        Check::new(
            "generic_spread_linear_r2",
            "linear growth of the spread with the number of cycles",
            1.0,
            r2,
            tol.spreading_r2,
            Comparison::Absolute,
        ),
        Check::new(
            "floquet_spread_ratio",
            "bounded spread of a Floquet state",
            1.0,
            bounded,
            tol.floquet_ratio,
            Comparison::UpperBound,
        ),
    ];
    Ok(Outcome {
        artifacts: vec![("multi_cycle.csv".into(), Artifact::Csv(table))],
        primary: "multi_cycle.csv",
        checks,
    })
}

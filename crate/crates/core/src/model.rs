//! Hamiltonians, bond currents and driving protocols.
//!
//! The three-site Hamiltonian in the basis `|0⟩, |1⟩, |2⟩` is
//!
//! ```text
//!     | u   c1  c2 |
//! H = | c1  0   1  |
//!     | c2  1   0  |
//! ```
//!
//! so sites 1 and 2 form a ring segment with hopping fixed at 1 and levels
//! `E± = ±1`, while the driven site 0 sits at energy `u`. The two-site
//! system is the reduced pair `[[u, c], [c, 1]]`. Currents are counted
//! positive when the particle leaves site 0.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytic;
use crate::error::{Error, Result};
use crate::linalg::{eig_hermitian, CMat};

/// Hopping between sites 1 and 2; sets the unit of energy and time.
pub const REFERENCE_HOPPING: f64 = 1.0;

/// Couplings above this magnitude break the small-coupling assumption.
pub const COUPLING_WARN: f64 = 0.2;

/// Number of sites in the closed system.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sites {
    Two,
    Three,
}

impl Sites {
    pub fn dim(self) -> usize {
        match self {
            Sites::Two => 2,
            Sites::Three => 3,
        }
    }

    pub fn from_count(n: usize) -> Result<Self> {
        match n {
            2 => Ok(Sites::Two),
            3 => Ok(Sites::Three),
            _ => Err(Error::InvalidProtocol(format!(
                "sites must be 2 or 3, got {n}"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SystemSpec {
    pub sites: Sites,
}

impl SystemSpec {
    pub fn new(sites: Sites) -> Self {
        Self { sites }
    }

    pub fn dim(&self) -> usize {
        self.sites.dim()
    }

    pub fn reference_hopping(&self) -> f64 {
        REFERENCE_HOPPING
    }
}

/// Bond across which transported charge is counted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Bond {
    #[serde(rename = "0-1")]
    ZeroOne,
    #[serde(rename = "0-2")]
    ZeroTwo,
}

impl fmt::Display for Bond {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bond::ZeroOne => f.write_str("0-1"),
            Bond::ZeroTwo => f.write_str("0-2"),
        }
    }
}

impl std::str::FromStr for Bond {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "0-1" | "01" | "0->1" => Ok(Bond::ZeroOne),
            "0-2" | "02" | "0->2" => Ok(Bond::ZeroTwo),
            other => Err(Error::InvalidArgument(format!("unknown bond '{other}'"))),
        }
    }
}

/// Instantaneous control parameters. `c2` is identically zero for two sites.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Couplings {
    pub u: f64,
    pub c1: f64,
    pub c2: f64,
}

/// Flat-top raised-cosine envelope on `s ∈ [0, 1]`.
///
/// The envelope rises as `sin²` over the first `(1 − flat)/2` of the
/// interval, stays at 1, and falls symmetrically. `flat = 0` is a plain
/// `sin²` pulse and `flat = 1` a box.
pub fn flat_top(s: f64, flat: f64) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        return 0.0;
    }
    let r = 0.5 * (1.0 - flat);
    if r <= 0.0 {
        1.0
    } else if s < r {
        (0.5 * PI * s / r).sin().powi(2)
    } else if s > 1.0 - r {
        (0.5 * PI * (1.0 - s) / r).sin().powi(2)
    } else {
        1.0
    }
}

fn envelope_knots(flat: f64) -> Vec<f64> {
    let r = 0.5 * (1.0 - flat);
    if r > 0.0 && r < 0.5 {
        vec![r, 1.0 - r]
    } else {
        Vec::new()
    }
}

/// Linear sweep of `u` through the crossing at `u = 1`.
///
/// `u` runs from `1 − u_span` to `1 + u_span` at rate `udot`, so the
/// crossing sits at mid-protocol. With three sites the couplings are
/// `c1 = √2·c·λ`, `c2 = √2·c·(1 − λ)`, both scaled by the envelope, which
/// keeps the effective coupling at `c` and the splitting ratio at `λ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearRamp {
    pub c: f64,
    pub udot: f64,
    pub u_span: f64,
    pub flat: f64,
    pub lambda: f64,
}

impl LinearRamp {
    /// Ramp with the default window `|u − 1| ≤ 40c` and half-flat envelope.
    pub fn new(c: f64, udot: f64) -> Self {
        Self {
            c,
            udot,
            u_span: 40.0 * c,
            flat: 0.5,
            lambda: 1.0,
        }
    }

    pub fn duration(&self) -> f64 {
        2.0 * self.u_span / self.udot
    }
}

/// One stirring period: raise `u` through the crossing with splitting ratio
/// `lambda_ccw`, wait `dwell` at the top, lower it back with `lambda_cw`,
/// then rest for `rest` at the bottom.
///
/// `u` sweeps linearly over `[1 − delta, 1 + delta]`; the couplings carry a
/// flat-top envelope during each sweep and vanish while `u` is parked.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StirCycle {
    pub c: f64,
    pub lambda_ccw: f64,
    pub lambda_cw: f64,
    pub udot: f64,
    pub delta: f64,
    pub dwell: f64,
    pub rest: f64,
    pub flat: f64,
}

impl StirCycle {
    pub fn new(c: f64, lambda_ccw: f64, lambda_cw: f64, udot: f64) -> Self {
        Self {
            c,
            lambda_ccw,
            lambda_cw,
            udot,
            delta: 0.5,
            dwell: 0.0,
            rest: 0.0,
            flat: 0.5,
        }
    }

    /// Duration of one sweep.
    pub fn half_sweep(&self) -> f64 {
        2.0 * self.delta / self.udot
    }

    pub fn period(&self) -> f64 {
        2.0 * self.half_sweep() + self.dwell + self.rest
    }

    /// Nominal crossing times relative to the cycle start.
    pub fn nominal_crossings(&self) -> [f64; 2] {
        let th = self.half_sweep();
        [0.5 * th, th + self.dwell + 0.5 * th]
    }
}

/// Time-independent parameters held for `duration`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constant {
    pub u: f64,
    pub c1: f64,
    pub c2: f64,
    pub duration: f64,
}

pub type CouplingFn = dyn Fn(f64) -> Couplings + Send + Sync;

/// User-supplied parameter track with its smoothness breakpoints.
#[derive(Clone)]
pub struct Custom {
    pub f: Arc<CouplingFn>,
    pub breakpoints: Vec<f64>,
}

impl fmt::Debug for Custom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Custom")
            .field("breakpoints", &self.breakpoints)
            .finish_non_exhaustive()
    }
}

#[derive(Clone, Debug)]
pub enum ProtocolPreset {
    LinearRamp(LinearRamp),
    StirCycle(StirCycle),
    Constant(Constant),
    Custom(Custom),
}

/// Immutable time-dependent parameter track `u(t), c1(t), c2(t)` on
/// `[t_start, t_end]`.
#[derive(Clone, Debug)]
pub struct DrivingProtocol {
    sites: Sites,
    preset: ProtocolPreset,
    t_start: f64,
    t_end: f64,
    label: String,
}

fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidProtocol(msg()))
    }
}

fn finite(name: &str, x: f64) -> Result<()> {
    require(x.is_finite(), || format!("{name} must be finite, got {x}"))
}

impl DrivingProtocol {
    pub fn linear_ramp(sites: Sites, ramp: LinearRamp, t_start: f64) -> Result<Self> {
        for (name, x) in [
            ("c", ramp.c),
            ("udot", ramp.udot),
            ("u_span", ramp.u_span),
            ("flat", ramp.flat),
            ("lambda", ramp.lambda),
            ("t_start", t_start),
        ] {
            finite(name, x)?;
        }
        require(ramp.udot > 0.0, || {
            format!("udot must be positive, got {}", ramp.udot)
        })?;
        require(ramp.u_span > 0.0, || {
            format!("u_span must be positive, got {}", ramp.u_span)
        })?;
        require((0.0..=1.0).contains(&ramp.flat), || {
            format!("flat must lie in [0, 1], got {}", ramp.flat)
        })?;
        let proto = Self {
            sites,
            preset: ProtocolPreset::LinearRamp(ramp),
            t_start,
            t_end: t_start + ramp.duration(),
            label: "linear-ramp".into(),
        };
        proto.warn_if_strong();
        Ok(proto)
    }

    pub fn stir_cycle(cycle: StirCycle, t_start: f64) -> Result<Self> {
        for (name, x) in [
            ("c", cycle.c),
            ("lambda_ccw", cycle.lambda_ccw),
            ("lambda_cw", cycle.lambda_cw),
            ("udot", cycle.udot),
            ("delta", cycle.delta),
            ("dwell", cycle.dwell),
            ("rest", cycle.rest),
            ("flat", cycle.flat),
            ("t_start", t_start),
        ] {
            finite(name, x)?;
        }
        require(cycle.udot > 0.0, || {
            format!("udot must be positive, got {}", cycle.udot)
        })?;
        require(cycle.delta > 0.0, || {
            format!("delta must be positive, got {}", cycle.delta)
        })?;
        require(cycle.dwell >= 0.0 && cycle.rest >= 0.0, || {
            "dwell and rest must be non-negative".into()
        })?;
        require((0.0..=1.0).contains(&cycle.flat), || {
            format!("flat must lie in [0, 1], got {}", cycle.flat)
        })?;
        let proto = Self {
            sites: Sites::Three,
            preset: ProtocolPreset::StirCycle(cycle),
            t_start,
            t_end: t_start + cycle.period(),
            label: "stir-cycle".into(),
        };
        proto.warn_if_strong();
        Ok(proto)
    }

    pub fn constant(sites: Sites, params: Constant, t_start: f64) -> Result<Self> {
        for (name, x) in [
            ("u", params.u),
            ("c1", params.c1),
            ("c2", params.c2),
            ("duration", params.duration),
            ("t_start", t_start),
        ] {
            finite(name, x)?;
        }
        require(params.duration > 0.0, || {
            format!("duration must be positive, got {}", params.duration)
        })?;
        require(sites == Sites::Three || params.c2 == 0.0, || {
            "c2 must vanish for two sites".into()
        })?;
        let proto = Self {
            sites,
            preset: ProtocolPreset::Constant(params),
            t_start,
            t_end: t_start + params.duration,
            label: "constant".into(),
        };
        proto.warn_if_strong();
        Ok(proto)
    }

    /// Arbitrary parameter track. `breakpoints` lists interior times where
    /// the track is not smooth; the integrator never steps across them.
    pub fn custom(
        sites: Sites,
        t_start: f64,
        t_end: f64,
        breakpoints: Vec<f64>,
        f: impl Fn(f64) -> Couplings + Send + Sync + 'static,
    ) -> Result<Self> {
        finite("t_start", t_start)?;
        finite("t_end", t_end)?;
        require(t_end > t_start, || "t_end must exceed t_start".into())?;
        let mut breakpoints: Vec<f64> = breakpoints
            .into_iter()
            .filter(|&b| b > t_start && b < t_end)
            .collect();
        breakpoints.sort_by(f64::total_cmp);
        breakpoints.dedup();
        Ok(Self {
            sites,
            preset: ProtocolPreset::Custom(Custom {
                f: Arc::new(f),
                breakpoints,
            }),
            t_start,
            t_end,
            label: "custom".into(),
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn sites(&self) -> Sites {
        self.sites
    }

    pub fn system(&self) -> SystemSpec {
        SystemSpec::new(self.sites)
    }

    pub fn dim(&self) -> usize {
        self.sites.dim()
    }

    pub fn preset(&self) -> &ProtocolPreset {
        &self.preset
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    fn warn_if_strong(&self) {
        let peak = self.peak_coupling();
        if peak > COUPLING_WARN {
            log::warn!(
                "{}: peak coupling {peak:.3} exceeds {COUPLING_WARN}; the small-coupling picture may not apply",
                self.label
            );
        }
    }

    /// Largest `|c1|` or `|c2|` reached by a preset (sampled for custom tracks).
    pub fn peak_coupling(&self) -> f64 {
        match &self.preset {
            ProtocolPreset::LinearRamp(r) => match self.sites {
                Sites::Two => r.c.abs(),
                Sites::Three => SQRT_2 * r.c.abs() * r.lambda.abs().max((1.0 - r.lambda).abs()),
            },
            ProtocolPreset::StirCycle(s) => {
                let m = |l: f64| l.abs().max((1.0 - l).abs());
                SQRT_2 * s.c.abs() * m(s.lambda_ccw).max(m(s.lambda_cw))
            }
            ProtocolPreset::Constant(k) => k.c1.abs().max(k.c2.abs()),
            ProtocolPreset::Custom(_) => self
                .sample_times(2048)
                .into_iter()
                .map(|t| {
                    let k = self.couplings_unchecked(t);
                    k.c1.abs().max(k.c2.abs())
                })
                .fold(0.0, f64::max),
        }
    }

    /// Splits an effective coupling into bond couplings for three sites.
    fn split(&self, c_env: f64, lambda: f64) -> (f64, f64) {
        match self.sites {
            Sites::Two => (c_env, 0.0),
            Sites::Three => (SQRT_2 * c_env * lambda, SQRT_2 * c_env * (1.0 - lambda)),
        }
    }

    /// Parameters at `t` without range checking; times outside the window
    /// are clamped onto it.
    pub fn couplings_unchecked(&self, t: f64) -> Couplings {
        let tau = (t - self.t_start).clamp(0.0, self.duration());
        match &self.preset {
            ProtocolPreset::LinearRamp(r) => {
                let s = tau / r.duration();
                let env = r.c * flat_top(s, r.flat);
                let (c1, c2) = self.split(env, r.lambda);
                Couplings {
                    u: 1.0 - r.u_span + r.udot * tau,
                    c1,
                    c2,
                }
            }
            ProtocolPreset::StirCycle(s) => {
                let th = s.half_sweep();
                let (u, env, lambda) = if tau < th {
                    let x = tau / th;
                    (
                        1.0 - s.delta + 2.0 * s.delta * x,
                        flat_top(x, s.flat),
                        s.lambda_ccw,
                    )
                } else if tau < th + s.dwell {
                    (1.0 + s.delta, 0.0, s.lambda_ccw)
                } else if tau < 2.0 * th + s.dwell {
                    let x = (tau - th - s.dwell) / th;
                    (
                        1.0 + s.delta - 2.0 * s.delta * x,
                        flat_top(x, s.flat),
                        s.lambda_cw,
                    )
                } else {
                    (1.0 - s.delta, 0.0, s.lambda_cw)
                };
                let (c1, c2) = self.split(s.c * env, lambda);
                Couplings { u, c1, c2 }
            }
            ProtocolPreset::Constant(k) => Couplings {
                u: k.u,
                c1: k.c1,
                c2: k.c2,
            },
            ProtocolPreset::Custom(c) => {
                let mut k = (c.f)(t.clamp(self.t_start, self.t_end));
                if self.sites == Sites::Two {
                    k.c2 = 0.0;
                }
                k
            }
        }
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let slack = 1e-12 * (1.0 + self.t_start.abs().max(self.t_end.abs()));
        if t.is_finite() && t >= self.t_start - slack && t <= self.t_end + slack {
            Ok(())
        } else {
            Err(Error::TimeOutOfRange {
                t,
                t_start: self.t_start,
                t_end: self.t_end,
            })
        }
    }

    pub fn couplings(&self, t: f64) -> Result<Couplings> {
        self.check_time(t)?;
        let k = self.couplings_unchecked(t);
        if !(k.u.is_finite() && k.c1.is_finite() && k.c2.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite parameters at t = {t}"
            )));
        }
        Ok(k)
    }

    pub fn hamiltonian(&self, t: f64) -> Result<CMat> {
        Ok(hamiltonian_from(self.sites, &self.couplings(t)?))
    }

    pub fn current_operator(&self, t: f64, bond: Bond) -> Result<CMat> {
        check_bond(self.sites, bond)?;
        Ok(current_from(self.sites, &self.couplings(t)?, bond))
    }

    /// Times where the parameter track is not smooth, including both ends,
    /// sorted and deduplicated.
    pub fn breakpoints(&self) -> Vec<f64> {
        let t0 = self.t_start;
        let mut pts = vec![t0, self.t_end];
        match &self.preset {
            ProtocolPreset::LinearRamp(r) => {
                let d = r.duration();
                pts.extend(envelope_knots(r.flat).into_iter().map(|s| t0 + s * d));
            }
            ProtocolPreset::StirCycle(s) => {
                let th = s.half_sweep();
                let down = th + s.dwell;
                for offset in [0.0, down] {
                    pts.push(t0 + offset + th);
                    pts.extend(
                        envelope_knots(s.flat)
                            .into_iter()
                            .map(|x| t0 + offset + x * th),
                    );
                }
                pts.push(t0 + down);
            }
            ProtocolPreset::Constant(_) => {}
            ProtocolPreset::Custom(c) => pts.extend(c.breakpoints.iter().copied()),
        }
        pts.retain(|&b| b >= self.t_start && b <= self.t_end);
        pts.sort_by(f64::total_cmp);
        pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
        self.pin_ends(&mut pts);
        pts
    }

    // knots computed as sums can land an ulp away from the exact window ends
    fn pin_ends(&self, pts: &mut [f64]) {
        if let Some(first) = pts.first_mut() {
            *first = self.t_start;
        }
        if let Some(last) = pts.last_mut() {
            *last = self.t_end;
        }
    }

    /// Nominal crossing times of the presets, where `u` passes 1.
    pub fn nominal_crossings(&self) -> Vec<f64> {
        match &self.preset {
            ProtocolPreset::LinearRamp(r) => vec![self.t_start + r.u_span / r.udot],
            ProtocolPreset::StirCycle(s) => s
                .nominal_crossings()
                .iter()
                .map(|x| self.t_start + x)
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Splitting ratio of each half cycle for the stirring preset.
    pub fn half_cycle_lambdas(&self) -> Option<(f64, f64)> {
        match &self.preset {
            ProtocolPreset::StirCycle(s) => Some((s.lambda_ccw, s.lambda_cw)),
            _ => None,
        }
    }

    /// `‖H(t_end) − H(t_start)‖_F`.
    pub fn periodicity_mismatch(&self) -> f64 {
        let a = hamiltonian_from(self.sites, &self.couplings_unchecked(self.t_start));
        let b = hamiltonian_from(self.sites, &self.couplings_unchecked(self.t_end));
        (a - b).frobenius_norm()
    }

    /// Uniform sample of the window merged with the breakpoints.
    pub fn sample_times(&self, n: usize) -> Vec<f64> {
        let n = n.max(2);
        let d = self.duration();
        let mut ts: Vec<f64> = (0..n)
            .map(|k| self.t_start + d * k as f64 / (n - 1) as f64)
            .collect();
        ts.extend(self.breakpoints());
        ts.sort_by(f64::total_cmp);
        ts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
        self.pin_ends(&mut ts);
        ts
    }

    /// Text that identifies the protocol exactly; floats use shortest
    /// round-trip formatting.
    pub fn canonical_description(&self) -> String {
        let sites = self.sites.dim();
        let (t0, t1) = (self.t_start, self.t_end);
        match &self.preset {
            ProtocolPreset::LinearRamp(r) => format!(
                "linear-ramp;sites={sites};c={:e};udot={:e};u_span={:e};flat={:e};lambda={:e};t_start={t0:e}",
                r.c, r.udot, r.u_span, r.flat, r.lambda
            ),
            ProtocolPreset::StirCycle(s) => format!(
                "stir-cycle;sites={sites};c={:e};lambda_ccw={:e};lambda_cw={:e};udot={:e};delta={:e};dwell={:e};rest={:e};flat={:e};t_start={t0:e}",
                s.c, s.lambda_ccw, s.lambda_cw, s.udot, s.delta, s.dwell, s.rest, s.flat
            ),
            ProtocolPreset::Constant(k) => format!(
                "constant;sites={sites};u={:e};c1={:e};c2={:e};duration={:e};t_start={t0:e}",
                k.u, k.c1, k.c2, k.duration
            ),
            ProtocolPreset::Custom(c) => format!(
                "custom;sites={sites};label={};t_start={t0:e};t_end={t1:e};breakpoints={:?}",
                self.label, c.breakpoints
            ),
        }
    }

    /// SHA-256 of the canonical description, hex encoded.
    pub fn hash(&self) -> String {
        hex_digest(self.canonical_description().as_bytes())
    }
}

/// Lower-case hex SHA-256 digest.
pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn check_bond(sites: Sites, bond: Bond) -> Result<()> {
    if sites == Sites::Two && bond == Bond::ZeroTwo {
        Err(Error::InvalidBond {
            bond: bond.to_string(),
            sites: 2,
        })
    } else {
        Ok(())
    }
}

/// Hamiltonian for given instantaneous parameters.
pub fn hamiltonian_from(sites: Sites, k: &Couplings) -> CMat {
    match sites {
        Sites::Two => CMat::from_real_rows(&[&[k.u, k.c1], &[k.c1, REFERENCE_HOPPING]]),
        Sites::Three => CMat::from_real_rows(&[
            &[k.u, k.c1, k.c2],
            &[k.c1, 0.0, REFERENCE_HOPPING],
            &[k.c2, REFERENCE_HOPPING, 0.0],
        ]),
    }
}

/// Bond current for given instantaneous parameters. The bond must exist.
pub fn current_from(sites: Sites, k: &Couplings, bond: Bond) -> CMat {
    let mut m = CMat::zeros(sites.dim());
    let (j, c) = match bond {
        Bond::ZeroOne => (1, k.c1),
        Bond::ZeroTwo => (2, k.c2),
    };
    m[(0, j)] = C64::new(0.0, c);
    m[(j, 0)] = C64::new(0.0, -c);
    m
}

fn check_spec(spec: &SystemSpec, proto: &DrivingProtocol) -> Result<()> {
    if spec.sites == proto.sites {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "protocol is defined for {} sites, system has {}",
            proto.dim(),
            spec.dim()
        )))
    }
}

pub fn hamiltonian(spec: &SystemSpec, proto: &DrivingProtocol, t: f64) -> Result<CMat> {
    check_spec(spec, proto)?;
    proto.hamiltonian(t)
}

pub fn current_operator(
    spec: &SystemSpec,
    proto: &DrivingProtocol,
    t: f64,
    bond: Bond,
) -> Result<CMat> {
    check_spec(spec, proto)?;
    check_bond(spec.sites, bond)?;
    proto.current_operator(t, bond)
}

/// `λ = c1 / (c1 + c2)`; may leave `[0, 1]`.
pub fn splitting_ratio(c1: f64, c2: f64) -> Result<f64> {
    let sum = c1 + c2;
    if sum == 0.0 || !sum.is_finite() {
        return Err(Error::DegenerateSplit { c1, c2 });
    }
    Ok(c1 / sum)
}

/// `c = (c1 + c2) / √2`, the coupling of site 0 to the symmetric level.
pub fn effective_coupling(c1: f64, c2: f64) -> f64 {
    (c1 + c2) * FRAC_1_SQRT_2
}

/// Coupling that opens the avoided crossing at `u = 1`.
pub fn crossing_coupling(sites: Sites, k: &Couplings) -> f64 {
    match sites {
        Sites::Two => k.c1,
        Sites::Three => effective_coupling(k.c1, k.c2),
    }
}

/// Landau-Zener estimate for one passage through `u = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CrossingEstimate {
    pub t: f64,
    pub c_eff: f64,
    pub udot: f64,
    pub p_lz: f64,
    /// `c / |u̇|`, the duration of the crossing.
    pub t_lz: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdiabaticityReport {
    pub crossings: Vec<CrossingEstimate>,
    /// Mean spacing between the crossing pair and the remaining level;
    /// `None` for two sites.
    pub omega: Option<f64>,
    /// Protocol time per crossing.
    pub t_p: f64,
    /// `exp(−Ω·t_p)`; zero when there is no third level.
    pub p_fgr: f64,
    pub p_lz_max: f64,
    pub p_lz_min: f64,
    /// `P_FGR ≤ 0.1·P_LZ`.
    pub fgr_below_lz: bool,
    /// `P_LZ ≤ 0.1`.
    pub lz_small: bool,
    /// `t_p ≥ 10·t_LZ`.
    pub timescales_separated: bool,
    pub adiabatic: bool,
}

const SEPARATION_RATIO: f64 = 0.1;

/// Estimates Landau-Zener and leakage probabilities of a protocol.
pub fn adiabaticity_report(proto: &DrivingProtocol) -> Result<AdiabaticityReport> {
    let ts = proto.sample_times(4096);
    let g = |t: f64| proto.couplings_unchecked(t).u - 1.0;
    let mut times = Vec::new();
    // last sample with nonzero u − 1; zeros in between are bracketed by it
    let mut last: Option<(f64, f64)> = None;
    for &t in &ts {
        let gt = g(t);
        if gt == 0.0 {
            continue;
        }
        if let Some((a, ga)) = last {
            if ga.signum() != gt.signum() {
                let (mut lo, mut hi) = (a, t);
                while hi - lo > 1e-14 * (1.0 + hi.abs()) {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if g(mid).signum() == ga.signum() {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                times.push(0.5 * (lo + hi));
            }
        }
        last = Some((t, gt));
    }
    if times.is_empty() {
        return Err(Error::NoCrossing);
    }
    let sites = proto.sites();
    let h = 1e-6 * proto.duration();
    let mut crossings = Vec::with_capacity(times.len());
    let mut spacings = Vec::new();
    for &t in &times {
        let a = (t - h).max(proto.t_start());
        let b = (t + h).min(proto.t_end());
        let udot = ((g(b) - g(a)) / (b - a)).abs();
        let k = proto.couplings_unchecked(t);
        let c_eff = crossing_coupling(sites, &k).abs();
        let p_lz = analytic::lz_probability(&analytic::LZParams { c: c_eff, udot });
        crossings.push(CrossingEstimate {
            t,
            c_eff,
            udot,
            p_lz,
            t_lz: c_eff / udot,
        });
        if sites == Sites::Three {
            let eig = eig_hermitian(&hamiltonian_from(sites, &k))?;
            let e = eig.eigenvalues();
            spacings.push(0.5 * (e[1] + e[2]) - e[0]);
        }
    }
    let t_p = proto.duration() / crossings.len() as f64;
    let omega = if spacings.is_empty() {
        None
    } else {
        Some(spacings.iter().sum::<f64>() / spacings.len() as f64)
    };
    let p_fgr = omega.map_or(0.0, |o| analytic::fgr_scale(o, t_p));
    let p_lz_max = crossings.iter().map(|c| c.p_lz).fold(0.0, f64::max);
    let p_lz_min = crossings.iter().map(|c| c.p_lz).fold(1.0, f64::min);
    let t_lz_max = crossings.iter().map(|c| c.t_lz).fold(0.0, f64::max);
    let fgr_below_lz = p_fgr <= SEPARATION_RATIO * p_lz_min;
    let lz_small = p_lz_max <= SEPARATION_RATIO;
    let timescales_separated = t_p >= t_lz_max / SEPARATION_RATIO;
    Ok(AdiabaticityReport {
        crossings,
        omega,
        t_p,
        p_fgr,
        p_lz_max,
        p_lz_min,
        fgr_below_lz,
        lz_small,
        timescales_separated,
        adiabatic: fgr_below_lz && lz_small && timescales_separated,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolKind {
    #[default]
    LinearRamp,
    StirCycle,
    Constant,
}

/// Flat key/value description of a preset protocol.
///
/// `t_end` is derived from the other parameters; when given it must agree
/// with the derived value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub kind: ProtocolKind,
    pub sites: Option<usize>,
    pub c: Option<f64>,
    pub udot: Option<f64>,
    /// Alternative to `udot`: the transition probability of one passage.
    pub p_lz: Option<f64>,
    pub lambda: Option<f64>,
    pub lambda_ccw: Option<f64>,
    pub lambda_cw: Option<f64>,
    pub u_span: Option<f64>,
    pub delta: Option<f64>,
    pub dwell: Option<f64>,
    pub rest: Option<f64>,
    pub flat: Option<f64>,
    pub u: Option<f64>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub duration: Option<f64>,
    pub t_start: Option<f64>,
    pub t_end: Option<f64>,
}

fn need(value: Option<f64>, key: &str, kind: &str) -> Result<f64> {
    value.ok_or_else(|| Error::InvalidProtocol(format!("{kind} protocol requires '{key}'")))
}

impl ProtocolConfig {
    /// `udot` as given, or derived from `p_lz` and `c`.
    pub fn sweep_rate(&self, kind: &str) -> Result<f64> {
        match (self.udot, self.p_lz) {
            (Some(_), Some(_)) => Err(Error::InvalidProtocol(
                "give either 'udot' or 'p_lz', not both".into(),
            )),
            (Some(udot), None) => Ok(udot),
            (None, Some(p)) => crate::analytic::udot_for_probability(need(self.c, "c", kind)?, p),
            (None, None) => Err(Error::InvalidProtocol(format!(
                "{kind} protocol requires 'udot' or 'p_lz'"
            ))),
        }
    }

    pub fn to_protocol(&self) -> Result<DrivingProtocol> {
        let t_start = self.t_start.unwrap_or(0.0);
        let proto = match self.kind {
            ProtocolKind::LinearRamp => {
                let sites = Sites::from_count(self.sites.unwrap_or(2))?;
                let c = need(self.c, "c", "linear-ramp")?;
                let udot = self.sweep_rate("linear-ramp")?;
                let mut ramp = LinearRamp::new(c, udot);
                if let Some(span) = self.u_span {
                    ramp.u_span = span;
                }
                if let Some(flat) = self.flat {
                    ramp.flat = flat;
                }
                if let Some(lambda) = self.lambda {
                    ramp.lambda = lambda;
                }
                DrivingProtocol::linear_ramp(sites, ramp, t_start)?
            }
            ProtocolKind::StirCycle => {
                if let Some(n) = self.sites {
                    require(n == 3, || "stir-cycle requires three sites".into())?;
                }
                let mut cycle = StirCycle::new(
                    need(self.c, "c", "stir-cycle")?,
                    need(self.lambda_ccw, "lambda_ccw", "stir-cycle")?,
                    need(self.lambda_cw, "lambda_cw", "stir-cycle")?,
                    self.sweep_rate("stir-cycle")?,
                );
                if let Some(x) = self.delta {
                    cycle.delta = x;
                }
                if let Some(x) = self.dwell {
                    cycle.dwell = x;
                }
                if let Some(x) = self.rest {
                    cycle.rest = x;
                }
                if let Some(x) = self.flat {
                    cycle.flat = x;
                }
                DrivingProtocol::stir_cycle(cycle, t_start)?
            }
            ProtocolKind::Constant => {
                let sites = Sites::from_count(self.sites.unwrap_or(3))?;
                DrivingProtocol::constant(
                    sites,
                    Constant {
                        u: need(self.u, "u", "constant")?,
                        c1: self.c1.unwrap_or(0.0),
                        c2: self.c2.unwrap_or(0.0),
                        duration: need(self.duration, "duration", "constant")?,
                    },
                    t_start,
                )?
            }
        };
        if let Some(t_end) = self.t_end {
            let derived = proto.t_end();
            require(
                (t_end - derived).abs() <= 1e-9 * (1.0 + derived.abs()),
                || format!("t_end = {t_end} disagrees with the derived end time {derived}"),
            )?;
        }
        Ok(proto)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn three(u: f64, c1: f64, c2: f64) -> DrivingProtocol {
        DrivingProtocol::constant(
            Sites::Three,
            Constant {
                u,
                c1,
                c2,
                duration: 1.0,
            },
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn uncoupled_site_zero_sits_at_u() {
        let h = three(0.5, 0.0, 0.0).hamiltonian(0.5).unwrap();
        let eig = eig_hermitian(&h).unwrap();
        let e = eig.eigenvalues();
        assert_abs_diff_eq!(e[0], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e[1], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(e[2], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn two_site_gap_is_twice_the_coupling() {
        let p = DrivingProtocol::constant(
            Sites::Two,
            Constant {
                u: 1.0,
                c1: 0.1,
                c2: 0.0,
                duration: 1.0,
            },
            0.0,
        )
        .unwrap();
        let h = p.hamiltonian(0.0).unwrap();
        assert_eq!(h, CMat::from_real_rows(&[&[1.0, 0.1], &[0.1, 1.0]]));
        let e = eig_hermitian(&h).unwrap();
        assert_abs_diff_eq!(
            e.eigenvalues()[1] - e.eigenvalues()[0],
            0.2,
            epsilon = 1e-15
        );
    }

    #[test]
    fn three_site_matrix_layout() {
        let h = three(1.0, 0.06, 0.02).hamiltonian(0.0).unwrap();
        let expect =
            CMat::from_real_rows(&[&[1.0, 0.06, 0.02], &[0.06, 0.0, 1.0], &[0.02, 1.0, 0.0]]);
        assert_eq!(h, expect);
        assert_eq!(h.hermiticity_defect(), 0.0);
    }

    #[test]
    fn time_outside_window_is_rejected() {
        let p = three(0.0, 0.0, 0.0);
        assert!(matches!(
            p.hamiltonian(1.5),
            Err(Error::TimeOutOfRange { .. })
        ));
        assert!(matches!(
            p.hamiltonian(-0.1),
            Err(Error::TimeOutOfRange { .. })
        ));
    }

    #[test]
    fn current_entries_and_bond_checks() {
        let p = three(0.0, 0.05, 0.0);
        let i01 = p.current_operator(0.0, Bond::ZeroOne).unwrap();
        assert_eq!(i01[(0, 1)], C64::new(0.0, 0.05));
        assert_eq!(i01[(1, 0)], C64::new(0.0, -0.05));
        assert_eq!(i01[(0, 2)], C64::new(0.0, 0.0));
        assert_eq!(
            p.current_operator(0.0, Bond::ZeroTwo)
                .unwrap()
                .frobenius_norm(),
            0.0
        );

        let two =
            DrivingProtocol::linear_ramp(Sites::Two, LinearRamp::new(0.1, 0.01), 0.0).unwrap();
        assert!(matches!(
            two.current_operator(0.0, Bond::ZeroTwo),
            Err(Error::InvalidBond { sites: 2, .. })
        ));
    }

    #[test]
    fn real_superposition_carries_no_current() {
        let i01 = three(0.0, 0.05, 0.0)
            .current_operator(0.0, Bond::ZeroOne)
            .unwrap();
        let psi = crate::CVec::from_real(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0]);
        assert_abs_diff_eq!(i01.sandwich(&psi, &psi).norm(), 0.0, epsilon = 1e-17);
    }

    #[test]
    fn currents_sum_to_population_loss_rate() {
        // I01 + I02 = −i[H, n0] = −dn0/dt
        let p = three(0.3, 0.07, -0.02);
        let h = p.hamiltonian(0.0).unwrap();
        let total = p.current_operator(0.0, Bond::ZeroOne).unwrap()
            + p.current_operator(0.0, Bond::ZeroTwo).unwrap();
        let n0 = CMat::diag(&[1.0, 0.0, 0.0]);
        let rate = (h * n0 - n0 * h).scale(C64::new(0.0, -1.0));
        assert_abs_diff_eq!((total - rate).frobenius_norm(), 0.0, epsilon = 1e-16);
    }

    #[test]
    fn splitting_ratio_examples() {
        assert_eq!(splitting_ratio(1.0, 1.0).unwrap(), 0.5);
        assert_eq!(splitting_ratio(1.0, 0.0).unwrap(), 1.0);
        let l = splitting_ratio(1.7 * 0.3, -0.7 * 0.3).unwrap();
        assert_abs_diff_eq!(l, 1.7, epsilon = 1e-14);
        assert_abs_diff_eq!(1.0 - l, -0.7, epsilon = 1e-14);
        assert!(matches!(
            splitting_ratio(0.1, -0.1),
            Err(Error::DegenerateSplit { .. })
        ));
    }

    #[test]
    fn effective_coupling_examples() {
        assert_eq!(effective_coupling(0.0, 0.0), 0.0);
        assert_abs_diff_eq!(
            effective_coupling(0.1, 0.1),
            0.141421356237,
            epsilon = 1e-12
        );
        assert_eq!(effective_coupling(0.1, -0.1), 0.0);
    }

    #[test]
    fn ramp_couplings_reproduce_lambda_and_c() {
        let mut ramp = LinearRamp::new(0.03, 1e-3);
        ramp.lambda = 1.7;
        let p = DrivingProtocol::linear_ramp(Sites::Three, ramp, 0.0).unwrap();
        let mid = 0.5 * (p.t_start() + p.t_end());
        let k = p.couplings(mid).unwrap();
        assert_abs_diff_eq!(k.u, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(effective_coupling(k.c1, k.c2), 0.03, epsilon = 1e-15);
        assert_abs_diff_eq!(splitting_ratio(k.c1, k.c2).unwrap(), 1.7, epsilon = 1e-12);
        let edge = p.couplings(p.t_start()).unwrap();
        assert_eq!((edge.c1, edge.c2), (0.0, 0.0));
        assert_abs_diff_eq!(edge.u, 1.0 - 1.2, epsilon = 1e-12);
    }

    #[test]
    fn stir_cycle_is_periodic_and_switches_lambda() {
        let mut cycle = StirCycle::new(0.03, 0.8, 0.3, 2e-3);
        cycle.dwell = 40.0;
        cycle.rest = 10.0;
        let p = DrivingProtocol::stir_cycle(cycle, 0.0).unwrap();
        assert_eq!(p.periodicity_mismatch(), 0.0);
        let [t1, t2] = cycle.nominal_crossings();
        let k1 = p.couplings(t1).unwrap();
        let k2 = p.couplings(t2).unwrap();
        assert_abs_diff_eq!(k1.u, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(k2.u, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(splitting_ratio(k1.c1, k1.c2).unwrap(), 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(splitting_ratio(k2.c1, k2.c2).unwrap(), 0.3, epsilon = 1e-12);
        let top = p.couplings(cycle.half_sweep() + 20.0).unwrap();
        assert_eq!((top.c1, top.c2), (0.0, 0.0));
        assert_abs_diff_eq!(top.u, 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(
            t1 + t2,
            2.0 * cycle.half_sweep() + cycle.dwell,
            epsilon = 1e-9
        );
    }

    #[test]
    fn breakpoints_include_envelope_knots() {
        let cycle = StirCycle::new(0.03, 0.8, 0.3, 2e-3);
        let p = DrivingProtocol::stir_cycle(cycle, 0.0).unwrap();
        let th = cycle.half_sweep();
        let bps = p.breakpoints();
        for t in [
            0.0,
            0.25 * th,
            0.75 * th,
            th,
            1.25 * th,
            1.75 * th,
            2.0 * th,
        ] {
            assert!(
                bps.iter().any(|&b| (b - t).abs() < 1e-9),
                "missing {t} in {bps:?}"
            );
        }
    }

    #[test]
    fn lz_estimate_for_slow_ramp() {
        let p = DrivingProtocol::linear_ramp(Sites::Two, LinearRamp::new(0.1, 0.01), 0.0).unwrap();
        let r = adiabaticity_report(&p).unwrap();
        assert_eq!(r.crossings.len(), 1);
        assert_abs_diff_eq!(r.crossings[0].p_lz, (-2.0 * PI).exp(), epsilon = 1e-9);
        assert!(r.adiabatic);
    }

    #[test]
    fn zero_coupling_is_not_adiabatic() {
        let p = DrivingProtocol::linear_ramp(Sites::Two, LinearRamp::new(0.0, 0.01), 0.0);
        // u_span defaults to 40c, which vanishes with c; give it a window
        assert!(p.is_err());
        let mut ramp = LinearRamp::new(0.0, 0.01);
        ramp.u_span = 1.0;
        let p = DrivingProtocol::linear_ramp(Sites::Two, ramp, 0.0).unwrap();
        let r = adiabaticity_report(&p).unwrap();
        assert_eq!(r.crossings[0].p_lz, 1.0);
        assert!(!r.adiabatic);
    }

    #[test]
    fn stir_cycle_separates_timescales() {
        let c = 0.03;
        let cycle = StirCycle::new(c, 0.8, 0.3, 5e-3);
        let p = DrivingProtocol::stir_cycle(cycle, 0.0).unwrap();
        let r = adiabaticity_report(&p).unwrap();
        assert_eq!(r.crossings.len(), 2);
        assert!(r.t_p >= 10.0 * c / 5e-3);
        assert!(r.timescales_separated);
        assert!(r.omega.unwrap() > 1.9);
    }

    #[test]
    fn constant_at_crossing_has_no_crossing() {
        assert!(matches!(
            adiabaticity_report(&three(1.0, 0.05, 0.05)),
            Err(Error::NoCrossing)
        ));
    }

    #[test]
    fn config_round_trip_and_t_end_check() {
        let cfg = ProtocolConfig {
            kind: ProtocolKind::LinearRamp,
            c: Some(0.1),
            udot: Some(0.02),
            u_span: Some(2.0),
            ..Default::default()
        };
        let p = cfg.to_protocol().unwrap();
        assert_abs_diff_eq!(p.t_end(), 200.0, epsilon = 1e-12);
        let bad = ProtocolConfig {
            t_end: Some(150.0),
            ..cfg.clone()
        };
        assert!(matches!(bad.to_protocol(), Err(Error::InvalidProtocol(_))));
        let missing = ProtocolConfig {
            kind: ProtocolKind::StirCycle,
            c: Some(0.1),
            ..Default::default()
        };
        assert!(missing.to_protocol().is_err());
    }

    #[test]
    fn probability_sets_the_sweep_rate() {
        let cfg = ProtocolConfig {
            kind: ProtocolKind::LinearRamp,
            c: Some(0.05),
            p_lz: Some(0.3),
            ..Default::default()
        };
        let expected = crate::analytic::udot_for_probability(0.05, 0.3).unwrap();
        assert_eq!(cfg.sweep_rate("linear-ramp").unwrap(), expected);
        let both = ProtocolConfig {
            udot: Some(0.01),
            ..cfg.clone()
        };
        assert!(matches!(both.to_protocol(), Err(Error::InvalidProtocol(_))));
        let out_of_range = ProtocolConfig {
            p_lz: Some(1.5),
            ..cfg
        };
        assert!(out_of_range.to_protocol().is_err());
    }

    #[test]
    fn window_ends_are_exact_sample_points() {
        // a dwell of π makes the summed segment knots miss the period by an ulp
        let mut cycle = StirCycle::new(0.03, 0.5, 0.5, 0.0123);
        cycle.dwell = std::f64::consts::PI;
        let p = DrivingProtocol::stir_cycle(cycle, 0.0).unwrap();
        for ts in [p.breakpoints(), p.sample_times(4001)] {
            assert_eq!(ts[0], p.t_start());
            assert_eq!(*ts.last().unwrap(), p.t_end());
            assert!(ts.windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn hash_tracks_parameters() {
        let a = DrivingProtocol::linear_ramp(Sites::Two, LinearRamp::new(0.1, 0.01), 0.0).unwrap();
        let b = DrivingProtocol::linear_ramp(Sites::Two, LinearRamp::new(0.1, 0.01), 0.0).unwrap();
        let c =
            DrivingProtocol::linear_ramp(Sites::Two, LinearRamp::new(0.1, 0.0100001), 0.0).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn symmetric_pair_gap_near_twice_effective_coupling() {
        // c ≤ 0.05: the E0/E+ gap at u = 1 is 2c to first order
        for &(c1, c2) in &[(0.05, 0.02), (0.03, 0.03), (0.06, -0.01)] {
            let c = effective_coupling(c1, c2);
            let eig = eig_hermitian(&three(1.0, c1, c2).hamiltonian(0.0).unwrap()).unwrap();
            let e = eig.eigenvalues();
            let gap = e[2] - e[1];
            assert!(
                (gap - 2.0 * c).abs() <= 0.05 * 2.0 * c,
                "gap {gap} vs {}",
                2.0 * c
            );
        }
    }

    proptest! {
        #[test]
        fn splitting_ratios_are_complementary(c1 in -1.0f64..1.0, c2 in -1.0f64..1.0) {
            prop_assume!((c1 + c2).abs() > 1e-6);
            let a = splitting_ratio(c1, c2).unwrap();
            let b = splitting_ratio(c2, c1).unwrap();
            prop_assert!((a + b - 1.0).abs() <= 1e-9);
        }

        #[test]
        fn hamiltonian_is_exactly_hermitian(t in 0.0f64..1.0, lam in -1.0f64..2.0, flat in 0.0f64..1.0) {
            let mut ramp = LinearRamp::new(0.05, 0.01);
            ramp.lambda = lam;
            ramp.flat = flat;
            let p = DrivingProtocol::linear_ramp(Sites::Three, ramp, 0.0).unwrap();
            let h = p.hamiltonian(t * p.t_end()).unwrap();
            prop_assert_eq!(h.hermiticity_defect(), 0.0);
        }

        #[test]
        fn envelope_stays_in_unit_interval(s in -0.5f64..1.5, flat in 0.0f64..1.0) {
            let e = flat_top(s, flat);
            prop_assert!((0.0..=1.0).contains(&e));
        }
    }
}

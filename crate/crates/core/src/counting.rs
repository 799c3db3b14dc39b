//! Transported-charge operator and its counting statistics.
//!
//! The counting operator across a bond is `Q = ∫ U(t)† I(t) U(t) dt`. Within
//! every midpoint substep the Hamiltonian is constant, so the integral over
//! the substep is evaluated in closed form in the eigenbasis of `H`:
//!
//! ```text
//! ∫₀ʰ e^{iHs} I e^{−iHs} ds = V (Ĩ ∘ W) V†,   Ĩ = V† I V,
//! W_jk = (e^{i(λⱼ−λₖ)h} − 1) / (i(λⱼ−λₖ))
//! ```
//!
//! The charge is therefore the exact derivative of the discretized
//! counting-field propagator, and the continuity identity across site 0
//! holds to rounding.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{eig_hermitian, expm_from_eigen, CMat, CVec, EigenSystem};
use crate::model::{current_from, hamiltonian_from, Bond, DrivingProtocol, Sites};
use crate::propagation::{
    evolve, AdiabaticFrame, StepControl, Substep, UnitaryRecord, PERIODICITY_TOL,
};

/// Largest Hermiticity defect accepted for an accumulated charge matrix.
pub const CHARGE_HERMITIAN_TOL: f64 = 1e-10;
/// Tolerance on the norm of an initial state.
pub const NORM_TOL: f64 = 1e-10;
/// Roundoff band below zero in which a variance is clipped to zero.
pub const VARIANCE_CLIP: f64 = 1e-10;
/// Agreement required between spectral and direct moments.
pub const CONSISTENCY_TOL: f64 = 1e-9;
/// Largest leakage `Σ|Q_ac|²` into the third level for a two-level split.
pub const LEAK_TOL: f64 = 1e-9;
/// Agreement required between counting-field and spectral moments.
pub const FCS_MOMENT_TOL: f64 = 1e-4;
/// Counting-field spacing of the derivative stencils.
pub const STENCIL_STEP: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Site,
    AdiabaticInitial,
}

/// Counting operator across `bond` over `[t0, t1]`.
#[derive(Clone, Debug)]
pub struct ChargeMatrix {
    pub q: CMat,
    pub basis: Basis,
    pub bond: Bond,
    pub t0: f64,
    pub t1: f64,
    /// Propagator of the same run.
    pub propagator: UnitaryRecord,
    /// Hermiticity defect before symmetrization.
    pub raw_defect: f64,
    /// `‖Q − Q'‖_F` against a rerun with halved steps, when requested.
    pub refinement_delta: Option<f64>,
}

impl ChargeMatrix {
    /// Re-expresses `Q` in the initial adiabatic basis of `frame`, ordered
    /// as tracked branch, partner, remaining branch.
    pub fn in_adiabatic_basis(&self, frame: &AdiabaticFrame) -> Result<ChargeMatrix> {
        if self.basis == Basis::AdiabaticInitial {
            return Ok(self.clone());
        }
        let t0 = frame.times()[0];
        if (t0 - self.t0).abs() > 1e-9 * (1.0 + t0.abs()) {
            return Err(Error::InvalidArgument(format!(
                "frame starts at {t0}, charge matrix at {}",
                self.t0
            )));
        }
        let basis = adiabatic_columns(frame);
        Ok(ChargeMatrix {
            q: self.q.in_basis(&basis),
            basis: Basis::AdiabaticInitial,
            ..self.clone()
        })
    }
}

fn adiabatic_columns(frame: &AdiabaticFrame) -> CMat {
    let (a, b) = (frame.tracked(), frame.partner());
    let mut cols = vec![frame.initial_state(a), frame.initial_state(b)];
    if frame.dim() == 3 {
        cols.push(frame.initial_state(3 - a - b));
    }
    CMat::from_columns(&cols)
}

/// `∫₀ʰ e^{i d s} ds` without cancellation for small `d·h`.
fn phase_integral(d: f64, h: f64) -> C64 {
    let x = d * h;
    if x.abs() < 1e-3 {
        let ix = C64::new(0.0, x);
        let series = C64::new(1.0, 0.0)
            + ix / 2.0
            + ix * ix / 6.0
            + ix * ix * ix / 24.0
            + ix * ix * ix * ix / 120.0;
        series * h
    } else {
        (C64::from_polar(1.0, x) - 1.0) / C64::new(0.0, d)
    }
}

/// `∫₀ʰ e^{iHs} I e^{−iHs} ds` for constant `H` with eigensystem `eig`.
pub fn in_step_charge(eig: &EigenSystem, current: &CMat, h: f64) -> CMat {
    let v = eig.vectors();
    let mut it = current.in_basis(v);
    let lam = eig.eigenvalues();
    for j in 0..lam.len() {
        for k in 0..lam.len() {
            it[(j, k)] *= phase_integral(lam[j] - lam[k], h);
        }
    }
    *v * it * v.adjoint()
}

fn check_bond(proto: &DrivingProtocol, bond: Bond) -> Result<()> {
    proto.current_operator(proto.t_start(), bond).map(|_| ())
}

/// Accumulates the counting operator across `bond` on the adaptive grid of
/// the propagator.
pub fn charge_matrix(
    proto: &DrivingProtocol,
    bond: Bond,
    t0: f64,
    t1: f64,
    ctrl: &StepControl,
) -> Result<ChargeMatrix> {
    check_bond(proto, bond)?;
    let sites = proto.sites();
    let mut q = CMat::zeros(proto.dim());
    let record = evolve(proto, t0, t1, ctrl, |v| {
        let current = current_from(sites, &v.couplings, bond);
        let qs = in_step_charge(v.eig, &current, v.substep.h);
        q = q + v.before.adjoint() * qs * *v.before;
        Ok(())
    })?;
    let raw_defect = (q - q.adjoint()).frobenius_norm();
    if !q.is_finite() || raw_defect > CHARGE_HERMITIAN_TOL * (1.0 + q.frobenius_norm()) {
        return Err(Error::Numerical(format!(
            "charge matrix not Hermitian (defect {raw_defect:.3e})"
        )));
    }
    Ok(ChargeMatrix {
        q: q.hermitian_part(),
        basis: Basis::Site,
        bond,
        t0,
        t1,
        propagator: record,
        raw_defect,
        refinement_delta: None,
    })
}

/// [`charge_matrix`] followed by a rerun with halved steps; the difference
/// bounds the time-discretization error.
pub fn charge_matrix_refined(
    proto: &DrivingProtocol,
    bond: Bond,
    t0: f64,
    t1: f64,
    ctrl: &StepControl,
) -> Result<ChargeMatrix> {
    let mut coarse = charge_matrix(proto, bond, t0, t1, ctrl)?;
    let fine_ctrl = StepControl {
        dt_max: 0.5 * ctrl.dt_max,
        tol: ctrl.tol / 8.0,
        dt_min: ctrl.dt_min,
    };
    let fine = charge_matrix(proto, bond, t0, t1, &fine_ctrl)?;
    coarse.refinement_delta = Some((coarse.q - fine.q).frobenius_norm());
    Ok(coarse)
}

/// Whole-window counting operator.
pub fn charge_matrix_full(
    proto: &DrivingProtocol,
    bond: Bond,
    ctrl: &StepControl,
) -> Result<ChargeMatrix> {
    charge_matrix(proto, bond, proto.t_start(), proto.t_end(), ctrl)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpectralLine {
    /// Eigenvalue of `Q`.
    pub q: f64,
    /// `|⟨Qᵢ|ψ₀⟩|²`.
    pub p: f64,
}

/// Spectral counting statistics of an initial state.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CountingResult {
    pub mean: f64,
    pub variance: f64,
    pub spectrum: Vec<SpectralLine>,
    /// `⟨Q^k⟩` for `k = 0..=k_max`.
    pub moments: Vec<f64>,
    /// `⟨ψ₀|Q|ψ₀⟩`.
    pub direct_mean: f64,
    /// `⟨ψ₀|Q²|ψ₀⟩`.
    pub direct_second: f64,
}

impl CountingResult {
    pub fn std(&self) -> f64 {
        self.variance.sqrt()
    }
}

fn check_normalized(psi: &CVec) -> Result<()> {
    let norm = psi.norm();
    if !psi.is_finite() || (norm - 1.0).abs() > NORM_TOL {
        return Err(Error::UnnormalizedState { norm });
    }
    Ok(())
}

/// Spectrum and moments of the Hermitian operator `q` in the state `psi0`.
pub fn spectral_stats(q: &CMat, psi0: &CVec, k_max: usize) -> Result<CountingResult> {
    check_normalized(psi0)?;
    if psi0.dim() != q.dim() {
        return Err(Error::InvalidArgument(format!(
            "state has dimension {}, operator {}",
            psi0.dim(),
            q.dim()
        )));
    }
    let eig = eig_hermitian(q)?;
    let spectrum: Vec<SpectralLine> = (0..eig.dim())
        .map(|i| SpectralLine {
            q: eig.eigenvalues()[i],
            p: eig.eigenvector(i).inner(psi0).norm_sqr(),
        })
        .collect();
    let moments: Vec<f64> = (0..=k_max.max(2))
        .map(|k| spectrum.iter().map(|l| l.p * l.q.powi(k as i32)).sum())
        .collect();
    let qpsi = q.mul_vec(psi0);
    let direct_mean = psi0.inner(&qpsi).re;
    let direct_second = qpsi.inner(&qpsi).re;
    let scale = 1.0 + moments[2].abs();
    if (moments[1] - direct_mean).abs() > CONSISTENCY_TOL * scale
        || (moments[2] - direct_second).abs() > CONSISTENCY_TOL * scale
    {
        return Err(Error::Numerical(format!(
            "spectral moments ({}, {}) disagree with direct ({direct_mean}, {direct_second})",
            moments[1], moments[2]
        )));
    }
    let mut variance = moments[2] - moments[1] * moments[1];
    if variance < 0.0 {
        if variance < -VARIANCE_CLIP {
            return Err(Error::Numerical(format!("negative variance {variance:e}")));
        }
        log::debug!("clipping roundoff variance {variance:e} to zero");
        variance = 0.0;
    }
    let mean = moments[1];
    let mut moments = moments;
    moments.truncate(k_max + 1);
    Ok(CountingResult {
        mean,
        variance,
        spectrum,
        moments,
        direct_mean,
        direct_second,
    })
}

/// Spectral counting statistics of a charge matrix.
pub fn counting_stats(qm: &ChargeMatrix, psi0: &CVec, k_max: usize) -> Result<CountingResult> {
    if qm.basis != Basis::Site {
        return Err(Error::InvalidArgument(
            "counting statistics expect a site-basis charge matrix".into(),
        ));
    }
    spectral_stats(&qm.q, psi0, k_max)
}

/// Diagonal and off-diagonal parts of `Q` in the initial adiabatic basis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ChargeSplit {
    /// `Q_aa` for the tracked branch `a`.
    pub q_par: f64,
    /// `−i·Q_ab` with the partner branch `b`.
    pub q_perp: C64,
    /// `Q_bb`; equals `−Q∥` when the pair carries no net charge.
    pub q_partner: f64,
    /// `Σ_c |Q_ac|²` over the remaining branch.
    pub leak: f64,
}

/// Splits the counting operator into `Q∥` and `Q⊥` for a particle starting
/// in the tracked adiabatic level.
///
/// Fails with [`Error::ReductionInvalid`] when the tracked level couples to
/// the third level through `Q` beyond [`LEAK_TOL`].
pub fn q_parallel_perp(qm: &ChargeMatrix, frame: &AdiabaticFrame) -> Result<ChargeSplit> {
    let qa = qm.in_adiabatic_basis(frame)?.q;
    let leak = if qa.dim() == 3 {
        qa[(0, 2)].norm_sqr()
    } else {
        0.0
    };
    if leak > LEAK_TOL {
        return Err(Error::ReductionInvalid(format!(
            "charge couples the tracked level to the third level (|Q_ac|² = {leak:.3e})"
        )));
    }
    let split = ChargeSplit {
        q_par: qa[(0, 0)].re,
        q_perp: qa[(0, 1)] * C64::new(0.0, -1.0),
        q_partner: qa[(1, 1)].re,
        leak,
    };
    // ⟨Q⟩ = Q∥ and Var(Q) = |Q⊥|² for the tracked level
    let psi = frame.initial_state(frame.tracked());
    let direct = spectral_stats(&qm.q_site_or(frame)?, &psi, 2)?;
    if (direct.mean - split.q_par).abs() > CONSISTENCY_TOL
        || (direct.variance - split.q_perp.norm_sqr()).abs() > CONSISTENCY_TOL
    {
        return Err(Error::ReductionInvalid(format!(
            "split identities violated: mean {} vs {}, variance {} vs {}",
            direct.mean,
            split.q_par,
            direct.variance,
            split.q_perp.norm_sqr()
        )));
    }
    Ok(split)
}

impl ChargeMatrix {
    fn q_site_or(&self, frame: &AdiabaticFrame) -> Result<CMat> {
        match self.basis {
            Basis::Site => Ok(self.q),
            Basis::AdiabaticInitial => {
                let b = adiabatic_columns(frame);
                Ok(b * self.q * b.adjoint())
            }
        }
    }
}

/// Counting-field quasi-distribution and its generating function.
#[derive(Clone, Debug, Serialize)]
pub struct QuasiDistribution {
    pub r_grid: Vec<f64>,
    #[serde(skip)]
    pub chi: Vec<C64>,
    pub q_grid: Vec<f64>,
    /// Fourier inversion of the tapered `χ`; negative values are kept.
    pub p0: Vec<f64>,
    /// `Σ P₀ ΔQ` on the chosen grid.
    pub normalization: f64,
    /// `⟨Q^k⟩` of `P₀` for `k = 1..=4` from derivatives of `χ` at `r = 0`.
    pub moments: [f64; 4],
    /// Spectral statistics of the same run.
    pub spectral: CountingResult,
    /// Substeps of the shared time grid.
    pub steps: usize,
}

/// Conjugate grids for Fourier inversion: `2k + 1` charge points spanning
/// `[−q_max, q_max]` and the counting-field grid with `Δr = 2π / (N ΔQ)`,
/// for which `Σ P₀ ΔQ = χ(0) = 1` holds exactly.
pub fn conjugate_grids(q_max: f64, k: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(q_max > 0.0 && q_max.is_finite()) || k == 0 {
        return Err(Error::InvalidArgument(format!(
            "need q_max > 0 and k ≥ 1, got q_max = {q_max}, k = {k}"
        )));
    }
    let n = 2 * k + 1;
    let dq = q_max / k as f64;
    let dr = 2.0 * std::f64::consts::PI / (n as f64 * dq);
    let axis = |step: f64| -> Vec<f64> { (0..n).map(|i| (i as f64 - k as f64) * step).collect() };
    Ok((axis(dr), axis(dq)))
}

fn uniform_step(grid: &[f64], name: &str) -> Result<f64> {
    if grid.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "{name} needs at least two points"
        )));
    }
    let step = (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64;
    let uniform = grid
        .iter()
        .enumerate()
        .all(|(i, &x)| (x - (grid[0] + i as f64 * step)).abs() <= 1e-9 * step.abs().max(1.0));
    if !(step > 0.0 && uniform) {
        return Err(Error::InvalidArgument(format!(
            "{name} must be uniform and increasing"
        )));
    }
    Ok(step)
}

/// Propagates `ψ₀` under `H ± (r/2)·I` on a fixed substep grid and returns
/// `χ(r) = ⟨U₊ψ₀|U₋ψ₀⟩`.
pub fn generating_function(
    proto: &DrivingProtocol,
    bond: Bond,
    psi0: &CVec,
    substeps: &[Substep],
    r: f64,
) -> Result<C64> {
    if r == 0.0 {
        return Ok(psi0.inner(psi0));
    }
    let sites = proto.sites();
    let mut plus = *psi0;
    let mut minus = *psi0;
    for s in substeps {
        let k = proto.couplings(s.mid())?;
        let h = hamiltonian_from(sites, &k);
        let i = current_from(sites, &k, bond).scale_real(0.5 * r);
        let ep = eig_hermitian(&(h + i))?;
        let em = eig_hermitian(&(h - i))?;
        plus = expm_from_eigen(&ep, s.h).mul_vec(&plus);
        minus = expm_from_eigen(&em, s.h).mul_vec(&minus);
    }
    Ok(plus.inner(&minus))
}

/// `⟨Q^k⟩`, `k = 1..=4`, from central differences of `χ` on `r = jε`,
/// `j = −3..=3`.
fn stencil_moments(chi: &[C64; 7], eps: f64) -> [f64; 4] {
    let f = |j: i32| chi[(j + 3) as usize];
    let d1 = (-f(-3) + f(-2) * 9.0 - f(-1) * 45.0 + f(1) * 45.0 - f(2) * 9.0 + f(3)) / (60.0 * eps);
    let d2 = (f(-3) * 2.0 - f(-2) * 27.0 + f(-1) * 270.0 - f(0) * 490.0 + f(1) * 270.0
        - f(2) * 27.0
        + f(3) * 2.0)
        / (180.0 * eps * eps);
    let d3 = (f(-3) - f(-2) * 8.0 + f(-1) * 13.0 - f(1) * 13.0 + f(2) * 8.0 - f(3))
        / (8.0 * eps.powi(3));
    let d4 = (-f(-3) + f(-2) * 12.0 - f(-1) * 39.0 + f(0) * 56.0 - f(1) * 39.0 + f(2) * 12.0
        - f(3))
        / (6.0 * eps.powi(4));
    // f⁽ᵏ⁾(0) = iᵏ ⟨Qᵏ⟩
    let mi = C64::new(0.0, -1.0);
    [
        (d1 * mi).re,
        (d2 * mi * mi).re,
        (d3 * mi * mi * mi).re,
        (d4 * mi * mi * mi * mi).re,
    ]
}

/// Raised-cosine taper `½(1 + cos(πr/r_max))`.
pub fn taper(r: f64, r_max: f64) -> f64 {
    if r.abs() >= r_max {
        0.0
    } else {
        0.5 * (1.0 + (std::f64::consts::PI * r / r_max).cos())
    }
}

/// Evaluates the generating function on `r_grid` and inverts it onto
/// `q_grid`.
///
/// Moments come from untapered derivative stencils at `r = 0`; the taper
/// applies only to the Fourier inversion.
pub fn fcs_quasi(
    proto: &DrivingProtocol,
    bond: Bond,
    psi0: &CVec,
    r_grid: &[f64],
    q_grid: &[f64],
    ctrl: &StepControl,
) -> Result<QuasiDistribution> {
    check_normalized(psi0)?;
    let dr = uniform_step(r_grid, "r grid")?;
    let dq = uniform_step(q_grid, "Q grid")?;
    let r_edge = r_grid[r_grid.len() - 1];
    if (r_grid[0] + r_edge).abs() > 1e-9 * dr || !r_grid.iter().any(|&r| r.abs() < 1e-9 * dr) {
        return Err(Error::InvalidArgument(
            "r grid must be symmetric about 0 and contain 0".into(),
        ));
    }
    let q_max = q_grid.iter().fold(0.0f64, |m, q| m.max(q.abs()));
    if dr > std::f64::consts::PI / q_max * (1.0 + 1e-12) {
        return Err(Error::GridTooCoarse(format!(
            "Δr = {dr} exceeds π/Q_max = {}",
            std::f64::consts::PI / q_max
        )));
    }

    let qm = charge_matrix_full(proto, bond, ctrl)?;
    let spectral = counting_stats(&qm, psi0, 4)?;
    let substeps = &qm.propagator.substeps;

    let stencil: Vec<f64> = (-3..=3).map(|j| j as f64 * STENCIL_STEP).collect();
    let points: Vec<f64> = stencil.iter().chain(r_grid).copied().collect();
    let values: Vec<C64> = points
        .par_iter()
        .map(|&r| generating_function(proto, bond, psi0, substeps, snap_zero(r, dr)))
        .collect::<Result<_>>()?;
    let (stencil_chi, chi) = values.split_at(7);
    let moments = stencil_moments(
        stencil_chi.try_into().expect("seven stencil values"),
        STENCIL_STEP,
    );

    let mean_err = (moments[0] - spectral.mean).abs();
    let second_err = (moments[1] - spectral.moments[2]).abs();
    if mean_err > FCS_MOMENT_TOL || second_err > FCS_MOMENT_TOL {
        return Err(Error::GridTooCoarse(format!(
            "counting-field moments off by {mean_err:.3e} (first) and {second_err:.3e} (second)"
        )));
    }

    let r_max = r_edge + dr;
    let p0: Vec<f64> = q_grid
        .iter()
        .map(|&q| {
            let sum: C64 = r_grid
                .iter()
                .zip(chi)
                .map(|(&r, &x)| x * taper(r, r_max) * C64::from_polar(1.0, -r * q))
                .sum();
            (sum * dr / (2.0 * std::f64::consts::PI)).re
        })
        .collect();
    let normalization = p0.iter().sum::<f64>() * dq;
    Ok(QuasiDistribution {
        r_grid: r_grid.to_vec(),
        chi: chi.to_vec(),
        q_grid: q_grid.to_vec(),
        p0,
        normalization,
        moments,
        spectral,
        steps: substeps.len(),
    })
}

fn snap_zero(r: f64, dr: f64) -> f64 {
    if r.abs() < 1e-9 * dr {
        0.0
    } else {
        r
    }
}

/// Continuity diagnostics across the site-0 cut.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContinuityReport {
    /// `max_t |⟨Q₀₁⟩ + ⟨Q₀₂⟩ − (n₀(0) − n₀(t))|`.
    pub max_defect: f64,
    pub samples: usize,
    /// `(t, ⟨Q₀₁⟩, ⟨Q₀₂⟩, n₀(t))` after every substep.
    #[serde(skip)]
    pub trace: Vec<[f64; 4]>,
}

/// Checks that the charge leaving through both bonds equals the population
/// lost by site 0 after every substep.
pub fn continuity_check(
    proto: &DrivingProtocol,
    psi0: &CVec,
    ctrl: &StepControl,
) -> Result<ContinuityReport> {
    if proto.sites() != Sites::Three {
        return Err(Error::InvalidArgument(
            "continuity across site 0 needs three sites".into(),
        ));
    }
    check_normalized(psi0)?;
    let n0_initial = psi0[0].norm_sqr();
    let mut q01 = CMat::zeros(3);
    let mut q02 = CMat::zeros(3);
    let mut max_defect: f64 = 0.0;
    let mut trace = Vec::new();
    evolve(proto, proto.t_start(), proto.t_end(), ctrl, |v| {
        let h = v.substep.h;
        let i01 = current_from(Sites::Three, &v.couplings, Bond::ZeroOne);
        let i02 = current_from(Sites::Three, &v.couplings, Bond::ZeroTwo);
        let ub = v.before;
        q01 = q01 + ub.adjoint() * in_step_charge(v.eig, &i01, h) * *ub;
        q02 = q02 + ub.adjoint() * in_step_charge(v.eig, &i02, h) * *ub;
        let psi = (*v.step * *ub).mul_vec(psi0);
        let a = q01.sandwich(psi0, psi0).re;
        let b = q02.sandwich(psi0, psi0).re;
        let n0 = psi[0].norm_sqr();
        max_defect = max_defect.max((a + b - (n0_initial - n0)).abs());
        trace.push([v.substep.t + h, a, b, n0]);
        Ok(())
    })?;
    Ok(ContinuityReport {
        max_defect,
        samples: trace.len(),
        trace,
    })
}

/// Charge statistics after `n` repetitions of a driving cycle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CycleStats {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

/// Minimum number of cycles for a spreading analysis.
pub const MIN_CYCLES: usize = 8;

/// Mean and spread of the charge transported over `1..=n_cycles` periods.
///
/// With `U₁` and `Q₁` of one period, `Qₙ = Σ_{k<n} (U₁ᵏ)† Q₁ U₁ᵏ`.
pub fn multi_cycle_spreading(
    proto: &DrivingProtocol,
    bond: Bond,
    psi0: &CVec,
    n_cycles: usize,
    ctrl: &StepControl,
) -> Result<Vec<CycleStats>> {
    if n_cycles < MIN_CYCLES {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_CYCLES} cycles, got {n_cycles}"
        )));
    }
    let mismatch = proto.periodicity_mismatch();
    if mismatch > PERIODICITY_TOL {
        return Err(Error::ProtocolNotPeriodic { mismatch });
    }
    check_normalized(psi0)?;
    let one = charge_matrix_full(proto, bond, ctrl)?;
    let u1 = one.propagator.u;
    let mut power = CMat::identity(proto.dim());
    let mut qn = CMat::zeros(proto.dim());
    let mut out = Vec::with_capacity(n_cycles);
    for n in 1..=n_cycles {
        qn = qn + power.adjoint() * one.q * power;
        let stats = spectral_stats(&qn.hermitian_part(), psi0, 2)?;
        out.push(CycleStats {
            n,
            mean: stats.mean,
            std: stats.std(),
        });
        power = u1 * power;
    }
    Ok(out)
}

//! Time evolution.
//!
//! The propagator is built from midpoint exponentials `exp(−i·H(t + h/2)·h)`,
//! which are unitary to rounding. Step sizes adapt by comparing one full
//! step with two half steps. The integrator never steps across a protocol
//! breakpoint, so every substep sees a smooth Hamiltonian.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eig_hermitian, expm_from_eigen, CMat, CVec, EigenSystem};
use crate::model::{hamiltonian_from, Couplings, DrivingProtocol, Sites};

/// Adaptive step control.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepControl {
    pub dt_max: f64,
    /// Bound on the Frobenius difference between one step and two half steps.
    pub tol: f64,
    pub dt_min: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            dt_max: 1.0,
            tol: 1e-10,
            dt_min: 1e-12,
        }
    }
}

impl StepControl {
    pub fn with_dt_max(dt_max: f64) -> Self {
        Self {
            dt_max,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt_max > 0.0 && self.dt_max.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "dt_max must be positive, got {}",
                self.dt_max
            )));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "tolerance must be positive, got {}",
                self.tol
            )));
        }
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_max) {
            return Err(Error::InvalidArgument(format!(
                "dt_min must lie in (0, dt_max], got {}",
                self.dt_min
            )));
        }
        Ok(())
    }
}

/// One accepted midpoint substep starting at `t` with width `h`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Substep {
    pub t: f64,
    pub h: f64,
}

impl Substep {
    pub fn mid(&self) -> f64 {
        self.t + 0.5 * self.h
    }
}

/// Data handed to an [`evolve`] observer for every accepted substep.
pub struct SubstepView<'a> {
    pub substep: Substep,
    pub couplings: Couplings,
    /// Eigendecomposition of the midpoint Hamiltonian.
    pub eig: &'a EigenSystem,
    /// `exp(−i·H_mid·h)`.
    pub step: &'a CMat,
    /// Propagator from `t0` to the start of the substep.
    pub before: &'a CMat,
}

/// Accumulated propagator `U(t1 ← t0)` with its step log.
#[derive(Clone, Debug, Serialize)]
pub struct UnitaryRecord {
    #[serde(skip)]
    pub u: CMat,
    pub t0: f64,
    pub t1: f64,
    /// Accepted substeps.
    pub steps: usize,
    /// Rejected trial steps.
    pub rejected: usize,
    pub unitarity_defect: f64,
    #[serde(skip)]
    pub substeps: Vec<Substep>,
}

impl UnitaryRecord {
    pub fn apply(&self, psi: &CVec) -> CVec {
        self.u.mul_vec(psi)
    }
}

/// Largest unitarity defect accepted for a propagator.
pub const UNITARITY_TOL: f64 = 1e-10;

const SAFETY: f64 = 0.9;
const MAX_GROWTH: f64 = 2.0;
const MIN_SHRINK: f64 = 0.2;

struct Trial {
    eig1: EigenSystem,
    eig2: EigenSystem,
    step1: CMat,
    step2: CMat,
    k1: Couplings,
    k2: Couplings,
    err: f64,
}

fn midpoint(proto: &DrivingProtocol, t: f64, h: f64) -> Result<(Couplings, EigenSystem, CMat)> {
    let k = proto.couplings(t + 0.5 * h)?;
    let eig = eig_hermitian(&hamiltonian_from(proto.sites(), &k))?;
    let step = expm_from_eigen(&eig, h);
    Ok((k, eig, step))
}

fn trial(proto: &DrivingProtocol, t: f64, h: f64) -> Result<Trial> {
    let (_, _, full) = midpoint(proto, t, h)?;
    let (k1, eig1, step1) = midpoint(proto, t, 0.5 * h)?;
    let (k2, eig2, step2) = midpoint(proto, t + 0.5 * h, 0.5 * h)?;
    let err = (full - step2 * step1).frobenius_norm();
    Ok(Trial {
        eig1,
        eig2,
        step1,
        step2,
        k1,
        k2,
        err,
    })
}

fn step_factor(err: f64, tol: f64) -> f64 {
    if err == 0.0 {
        MAX_GROWTH
    } else {
        (SAFETY * (tol / err).cbrt()).clamp(MIN_SHRINK, MAX_GROWTH)
    }
}

const REUNITARIZE_EVERY: usize = 64;

/// Propagates from `t0` to `t1`, calling `observer` on every accepted
/// substep in time order.
///
/// Each accepted step of width `h` is recorded as its two half substeps,
/// whose product is the propagator actually used.
pub fn evolve<F>(
    proto: &DrivingProtocol,
    t0: f64,
    t1: f64,
    ctrl: &StepControl,
    mut observer: F,
) -> Result<UnitaryRecord>
where
    F: FnMut(&SubstepView) -> Result<()>,
{
    ctrl.validate()?;
    proto.couplings(t0)?;
    proto.couplings(t1)?;
    if t1 < t0 {
        return Err(Error::InvalidArgument(format!(
            "propagation window reversed: t0 = {t0}, t1 = {t1}"
        )));
    }
    let dim = proto.dim();
    let mut u = CMat::identity(dim);
    let mut substeps = Vec::new();
    let mut rejected = 0;
    let mut accepted_steps = 0usize;

    // gaps below this are rounding noise and would force steps below dt_min
    let merge = 1e-9 * (t0.abs().max(t1.abs()).max(1.0));
    let mut stops: Vec<f64> = Vec::new();
    for b in proto.breakpoints() {
        if b > t0 + merge && b < t1 - merge && stops.last().is_none_or(|&l| b - l > merge) {
            stops.push(b);
        }
    }
    stops.push(t1);

    let mut t = t0;
    let mut h_next = ctrl.dt_max;
    for &stop in &stops {
        while t < stop {
            let remaining = stop - t;
            let mut h = h_next.min(ctrl.dt_max).min(remaining);
            // absorb a sliver that would otherwise force a tiny final step
            if remaining - h < merge.max(1e-9 * h) {
                h = remaining;
            }
            let accepted = loop {
                if h < ctrl.dt_min {
                    return Err(Error::StepUnderflow { t, dt: h });
                }
                let tr = trial(proto, t, h)?;
                if !tr.err.is_finite() {
                    return Err(Error::Numerical(format!(
                        "non-finite step error at t = {t}"
                    )));
                }
                if tr.err <= ctrl.tol {
                    h_next = h * step_factor(tr.err, ctrl.tol);
                    break tr;
                }
                rejected += 1;
                h *= step_factor(tr.err, ctrl.tol).min(SAFETY);
            };
            accepted_steps += 1;
            // rounding in each exponential has a small systematic bias
            if accepted_steps.is_multiple_of(REUNITARIZE_EVERY) {
                u = u.reunitarized();
            }
            let half = 0.5 * h;
            let first = Substep { t, h: half };
            let second = Substep {
                t: t + half,
                h: half,
            };
            observer(&SubstepView {
                substep: first,
                couplings: accepted.k1,
                eig: &accepted.eig1,
                step: &accepted.step1,
                before: &u,
            })?;
            let mid = accepted.step1 * u;
            observer(&SubstepView {
                substep: second,
                couplings: accepted.k2,
                eig: &accepted.eig2,
                step: &accepted.step2,
                before: &mid,
            })?;
            u = accepted.step2 * mid;
            substeps.push(first);
            substeps.push(second);
            t = if h == remaining { stop } else { t + h };
        }
        t = stop;
    }

    let unitarity_defect = u.unitarity_defect();
    if !u.is_finite() || unitarity_defect > UNITARITY_TOL {
        return Err(Error::Numerical(format!(
            "propagator lost unitarity (defect {unitarity_defect:.3e})"
        )));
    }
    Ok(UnitaryRecord {
        u,
        t0,
        t1,
        steps: substeps.len(),
        rejected,
        unitarity_defect,
        substeps,
    })
}

/// Exact-in-step propagator `U(t1 ← t0)`.
pub fn propagate(
    proto: &DrivingProtocol,
    t0: f64,
    t1: f64,
    ctrl: &StepControl,
) -> Result<UnitaryRecord> {
    evolve(proto, t0, t1, ctrl, |_| Ok(()))
}

/// Propagates over the whole protocol window.
pub fn propagate_full(proto: &DrivingProtocol, ctrl: &StepControl) -> Result<UnitaryRecord> {
    propagate(proto, proto.t_start(), proto.t_end(), ctrl)
}

const OVERLAP_MIN: f64 = 0.999;
const DEGENERACY_TOL: f64 = 1e-9;

/// Instantaneous eigenbasis followed continuously along a time grid.
///
/// Branch `n` at grid point `k` is the eigenvector best overlapping branch
/// `n` at `k − 1`, so branches keep their identity through crossings. Each
/// eigenvector is phase-rotated so that successive overlaps are real and
/// positive, which realizes parallel transport on the grid.
#[derive(Clone, Debug)]
pub struct AdiabaticFrame {
    proto: DrivingProtocol,
    times: Vec<f64>,
    levels: Vec<Vec<f64>>,
    states: Vec<Vec<CVec>>,
    tracked: usize,
    partner: usize,
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    match n {
        2 => vec![vec![0, 1], vec![1, 0]],
        _ => vec![
            vec![0, 1, 2],
            vec![0, 2, 1],
            vec![1, 0, 2],
            vec![1, 2, 0],
            vec![2, 0, 1],
            vec![2, 1, 0],
        ],
    }
}

/// Replaces eigenvectors inside degenerate clusters by the orthonormalized
/// projections of the previous vectors, so exact crossings stay continuous.
fn align_degenerate(values: &[f64], vectors: &mut [CVec], previous: &[CVec]) {
    let n = values.len();
    let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && values[j] - values[j - 1] <= DEGENERACY_TOL * scale {
            j += 1;
        }
        if j - i > 1 {
            let cluster: Vec<CVec> = vectors[i..j].to_vec();
            let project = |p: &CVec| {
                cluster
                    .iter()
                    .fold(CVec::zeros(p.dim()), |acc, v| acc + v.scale(v.inner(p)))
            };
            let mut candidates: Vec<CVec> = previous.iter().map(project).collect();
            candidates.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
            let mut basis: Vec<CVec> = Vec::with_capacity(j - i);
            for cand in candidates {
                if basis.len() == j - i {
                    break;
                }
                let mut w = cand;
                for b in &basis {
                    w = w - b.scale(b.inner(&w));
                }
                if w.norm() > 1e-6 {
                    basis.push(w.normalized());
                }
            }
            if basis.len() == j - i {
                vectors[i..j].copy_from_slice(&basis);
            }
        }
        i = j;
    }
}

impl AdiabaticFrame {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Energies per grid point, indexed `[time][branch]`.
    pub fn levels(&self) -> &[Vec<f64>] {
        &self.levels
    }

    /// Phase-continuous eigenvectors per grid point, indexed `[time][branch]`.
    pub fn states(&self) -> &[Vec<CVec>] {
        &self.states
    }

    pub fn protocol(&self) -> &DrivingProtocol {
        &self.proto
    }

    pub fn dim(&self) -> usize {
        self.proto.dim()
    }

    /// Branch that starts with the largest weight on site 0.
    pub fn tracked(&self) -> usize {
        self.tracked
    }

    /// Branch that comes closest to the tracked one.
    pub fn partner(&self) -> usize {
        self.partner
    }

    pub fn initial_state(&self, branch: usize) -> CVec {
        self.states[0][branch]
    }

    /// `|E_a − E_b|` along the grid.
    pub fn gap(&self, a: usize, b: usize) -> Vec<f64> {
        self.levels.iter().map(|e| (e[a] - e[b]).abs()).collect()
    }

    /// Times of the avoided crossings between the tracked pair: strict local
    /// minima of the pair gap below half its maximum, refined by a parabola
    /// through the neighbouring grid points.
    pub fn crossing_times(&self) -> Vec<f64> {
        let g = self.gap(self.tracked, self.partner);
        let gmax = g.iter().cloned().fold(0.0, f64::max);
        let ts = &self.times;
        let mut out = Vec::new();
        for k in 1..g.len().saturating_sub(1) {
            if g[k] < g[k - 1] && g[k] <= g[k + 1] && g[k] < 0.5 * gmax {
                out.push(parabola_vertex(
                    (ts[k - 1], g[k - 1]),
                    (ts[k], g[k]),
                    (ts[k + 1], g[k + 1]),
                ));
            }
        }
        out
    }

    /// Index of the last grid point not after `t`.
    fn index_before(&self, t: f64) -> usize {
        match self.times.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(k) => k,
            Err(0) => 0,
            Err(k) => k - 1,
        }
    }

    /// Energies of the given branches at an arbitrary time, identified by
    /// overlap with the frame states at the nearest earlier grid point.
    pub fn branch_energies(&self, t: f64, branches: &[usize]) -> Result<Vec<f64>> {
        let h = self.proto.hamiltonian(t)?;
        let eig = eig_hermitian(&h)?;
        let k = self.index_before(t);
        let refs = &self.states[k];
        Ok(branches
            .iter()
            .map(|&b| {
                let mut best = (0, -1.0);
                for j in 0..eig.dim() {
                    let ov = refs[b].inner(&eig.eigenvector(j)).norm();
                    if ov > best.1 {
                        best = (j, ov);
                    }
                }
                eig.eigenvalues()[best.0]
            })
            .collect())
    }

    /// Diabatic reference vectors: `|0⟩, |−⟩, |+⟩` for three sites and
    /// `|0⟩, |1⟩` for two.
    fn diabatic_basis(&self) -> Vec<CVec> {
        match self.proto.sites() {
            Sites::Two => vec![CVec::basis(2, 0), CVec::basis(2, 1)],
            Sites::Three => vec![
                CVec::basis(3, 0),
                CVec::from_real(&[0.0, FRAC_1_SQRT_2, -FRAC_1_SQRT_2]),
                CVec::from_real(&[0.0, FRAC_1_SQRT_2, FRAC_1_SQRT_2]),
            ],
        }
    }

    /// Energies relabelled by diabatic character and the diabatic label of
    /// the tracked branch, one row per grid point.
    ///
    /// Rows hold the energies in diabatic order followed by the label index
    /// of the tracked branch.
    pub fn diabatic_rows(&self) -> Vec<(f64, Vec<f64>, usize)> {
        let basis = self.diabatic_basis();
        let perms = permutations(self.dim());
        self.times
            .iter()
            .zip(self.levels.iter().zip(&self.states))
            .map(|(&t, (levels, states))| {
                // perm[d] = branch assigned to diabatic label d
                let best = perms
                    .iter()
                    .max_by(|p, q| {
                        let score = |perm: &Vec<usize>| -> f64 {
                            perm.iter()
                                .enumerate()
                                .map(|(d, &b)| basis[d].inner(&states[b]).norm_sqr())
                                .sum()
                        };
                        score(p).total_cmp(&score(q))
                    })
                    .expect("at least one permutation");
                let energies = best.iter().map(|&b| levels[b]).collect();
                let label = best
                    .iter()
                    .position(|&b| b == self.tracked)
                    .expect("tracked branch is assigned");
                (t, energies, label)
            })
            .collect()
    }
}

fn parabola_vertex(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    let (x0, y0) = a;
    let (x1, y1) = b;
    let (x2, y2) = c;
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let curv = (d12 - d01) / (x2 - x0);
    if curv <= 0.0 || !curv.is_finite() {
        return x1;
    }
    // vertex of the interpolating parabola
    let x = 0.5 * (x0 + x1) - d01 / (2.0 * curv);
    x.clamp(x0, x2)
}

/// Builds the phase-continuous adiabatic basis on `grid`.
pub fn adiabatic_frame(proto: &DrivingProtocol, grid: &[f64]) -> Result<AdiabaticFrame> {
    if grid.len() < 2 {
        return Err(Error::InvalidArgument(
            "grid needs at least two points".into(),
        ));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "grid must be strictly increasing".into(),
        ));
    }
    let dim = proto.dim();
    let perms = permutations(dim);
    let mut levels: Vec<Vec<f64>> = Vec::with_capacity(grid.len());
    let mut states: Vec<Vec<CVec>> = Vec::with_capacity(grid.len());
    for &t in grid {
        let eig = eig_hermitian(&proto.hamiltonian(t)?)?;
        let values = eig.eigenvalues().to_vec();
        let mut vectors: Vec<CVec> = (0..dim).map(|j| eig.eigenvector(j)).collect();
        let Some(prev) = states.last() else {
            levels.push(values);
            states.push(vectors);
            continue;
        };
        align_degenerate(&values, &mut vectors, prev);
        let overlap = |n: usize, j: usize| prev[n].inner(&vectors[j]);
        // perm[n] = new eigen index continuing branch n
        let best = perms
            .iter()
            .max_by(|p, q| {
                let s = |perm: &Vec<usize>| -> f64 {
                    perm.iter()
                        .enumerate()
                        .map(|(n, &j)| overlap(n, j).norm())
                        .sum()
                };
                s(p).total_cmp(&s(q))
            })
            .expect("at least one permutation");
        let worst = best
            .iter()
            .enumerate()
            .map(|(n, &j)| overlap(n, j).norm())
            .fold(1.0, f64::min);
        if worst < OVERLAP_MIN {
            return Err(Error::BranchAmbiguity { t, overlap: worst });
        }
        let mut row_e = Vec::with_capacity(dim);
        let mut row_v = Vec::with_capacity(dim);
        for (n, &j) in best.iter().enumerate() {
            let ov = overlap(n, j);
            row_e.push(values[j]);
            row_v.push(vectors[j].scale(ov.conj() / ov.norm()));
        }
        levels.push(row_e);
        states.push(row_v);
    }
    let tracked = (0..dim)
        .max_by(|&a, &b| states[0][a][0].norm().total_cmp(&states[0][b][0].norm()))
        .expect("non-empty basis");
    let partner = (0..dim)
        .filter(|&b| b != tracked)
        .min_by(|&a, &b| {
            let ga = levels
                .iter()
                .map(|e| (e[a] - e[tracked]).abs())
                .fold(f64::INFINITY, f64::min);
            let gb = levels
                .iter()
                .map(|e| (e[b] - e[tracked]).abs())
                .fold(f64::INFINITY, f64::min);
            ga.total_cmp(&gb)
        })
        .expect("at least two branches");
    Ok(AdiabaticFrame {
        proto: proto.clone(),
        times: grid.to_vec(),
        levels,
        states,
        tracked,
        partner,
    })
}

/// Uniform grid over the protocol window with every breakpoint included.
pub fn frame_grid(proto: &DrivingProtocol, n: usize) -> Vec<f64> {
    proto.sample_times(n)
}

/// Zero-order adiabatic propagator `Σₙ |n(t₁)⟩ e^{−i∫Eₙ} ⟨n(t₀)|` with the
/// energy integrals taken by the trapezoid rule on the frame grid.
pub fn adiabatic_propagator(frame: &AdiabaticFrame) -> UnitaryRecord {
    let dim = frame.dim();
    let last = frame.times.len() - 1;
    let mut u = CMat::zeros(dim);
    for n in 0..dim {
        let mut theta = 0.0;
        for k in 0..last {
            let dt = frame.times[k + 1] - frame.times[k];
            theta += 0.5 * dt * (frame.levels[k][n] + frame.levels[k + 1][n]);
        }
        let ket = frame.states[last][n].scale(C64::from_polar(1.0, -theta));
        u = u + ket.outer(&frame.states[0][n]);
    }
    UnitaryRecord {
        unitarity_defect: u.unitarity_defect(),
        u,
        t0: frame.times[0],
        t1: frame.times[last],
        steps: last,
        rejected: 0,
        substeps: Vec::new(),
    }
}

/// Dynamical phase `Φ(t) = ∫ (E_a − E_b) dt` of the tracked pair.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseRecord {
    pub times: Vec<f64>,
    pub phi: Vec<f64>,
    pub crossing_times: Vec<f64>,
    /// `Φ` at the first crossing.
    pub phi1: Option<f64>,
    /// `Φ` at the second crossing.
    pub phi2: Option<f64>,
}

impl PhaseRecord {
    /// `φ₂ − φ₁` when the protocol has two crossings.
    pub fn relative_phase(&self) -> Option<f64> {
        Some(self.phi2? - self.phi1?)
    }
}

const PHASE_TOL: f64 = 1e-12;
const SIMPSON_DEPTH: u32 = 40;

/// One Simpson panel on `[a, b]` with its endpoint and midpoint samples.
#[derive(Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
}

impl Panel {
    fn new(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> Self {
        Self {
            a,
            b,
            fa,
            fm,
            fb,
            whole: (b - a) / 6.0 * (fa + 4.0 * fm + fb),
        }
    }
}

fn simpson_adaptive(f: &dyn Fn(f64) -> Result<f64>, p: Panel, tol: f64, depth: u32) -> Result<f64> {
    let m = 0.5 * (p.a + p.b);
    let left = Panel::new(p.a, m, p.fa, f(0.5 * (p.a + m))?, p.fm);
    let right = Panel::new(m, p.b, p.fm, f(0.5 * (m + p.b))?, p.fb);
    let delta = left.whole + right.whole - p.whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return Ok(left.whole + right.whole + delta / 15.0);
    }
    Ok(simpson_adaptive(f, left, 0.5 * tol, depth - 1)?
        + simpson_adaptive(f, right, 0.5 * tol, depth - 1)?)
}

/// Adaptive Simpson quadrature on `[a, b]` to absolute tolerance `tol`.
pub fn integrate(f: &dyn Fn(f64) -> Result<f64>, a: f64, b: f64, tol: f64) -> Result<f64> {
    if b <= a {
        return Ok(0.0);
    }
    let panel = Panel::new(a, b, f(a)?, f(0.5 * (a + b))?, f(b)?);
    simpson_adaptive(f, panel, tol, SIMPSON_DEPTH)
}

/// Integrates the instantaneous gap of the tracked pair from the start of
/// the frame up to each requested time.
///
/// Fails with [`Error::ReductionInvalid`] when the third level approaches
/// the pair closer than five times the largest coupling scale.
pub fn dynamical_phase(frame: &AdiabaticFrame, times: &[f64]) -> Result<PhaseRecord> {
    let (a, b) = (frame.tracked, frame.partner);
    if frame.dim() == 3 {
        let c = 3 - a - b;
        let proto = frame.protocol();
        let c_max = frame
            .times
            .iter()
            .map(|&t| {
                let k = proto.couplings_unchecked(t);
                k.c1.abs().max(k.c2.abs())
            })
            .fold(0.0, f64::max);
        let closest = frame
            .levels
            .iter()
            .map(|e| (e[c] - e[a]).abs().min((e[c] - e[b]).abs()))
            .fold(f64::INFINITY, f64::min);
        let bound = 5.0 * SQRT_2 * c_max;
        if closest < bound {
            return Err(Error::ReductionInvalid(format!(
                "third level comes within {closest:.3e} of the crossing pair (bound {bound:.3e})"
            )));
        }
    }
    let crossing_times = frame.crossing_times();
    let t0 = frame.times[0];
    let t_last = *frame.times.last().expect("non-empty grid");
    for &t in times {
        if t < t0 || t > t_last {
            return Err(Error::TimeOutOfRange {
                t,
                t_start: t0,
                t_end: t_last,
            });
        }
    }
    let gap = |t: f64| -> Result<f64> {
        let e = frame.branch_energies(t, &[a, b])?;
        Ok((e[0] - e[1]).abs())
    };
    // integrate cumulatively across all breakpoints and query times
    let mut nodes: Vec<f64> = frame
        .protocol()
        .breakpoints()
        .into_iter()
        .filter(|&x| x > t0 && x < t_last)
        .chain(times.iter().copied())
        .chain(crossing_times.iter().copied())
        .chain([t0])
        .collect();
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();
    let span = t_last - t0;
    let mut cumulative = vec![0.0; nodes.len()];
    for k in 1..nodes.len() {
        let (lo, hi) = (nodes[k - 1], nodes[k]);
        let tol = PHASE_TOL * (hi - lo) / span.max(f64::MIN_POSITIVE);
        cumulative[k] = cumulative[k - 1] + integrate(&gap, lo, hi, tol.max(1e-15))?;
    }
    let lookup = |t: f64| -> f64 {
        let k = nodes
            .binary_search_by(|x| x.total_cmp(&t))
            .expect("query time is a node");
        cumulative[k]
    };
    let phi = times.iter().map(|&t| lookup(t)).collect();
    Ok(PhaseRecord {
        times: times.to_vec(),
        phi,
        phi1: crossing_times.first().map(|&t| lookup(t)),
        phi2: crossing_times.get(1).map(|&t| lookup(t)),
        crossing_times,
    })
}

/// Eigenphases and eigenvectors of the one-period propagator.
#[derive(Clone, Debug)]
pub struct FloquetSpectrum {
    /// `θₙ ∈ (−π, π]` with `U|vₙ⟩ = e^{iθₙ}|vₙ⟩`, ascending.
    pub phases: Vec<f64>,
    pub states: Vec<CVec>,
    pub propagator: UnitaryRecord,
}

impl FloquetSpectrum {
    pub fn eigenvalues(&self) -> Vec<C64> {
        self.phases
            .iter()
            .map(|&p| C64::from_polar(1.0, p))
            .collect()
    }
}

/// Largest `‖H(t_end) − H(t_start)‖_F` accepted as periodic.
pub const PERIODICITY_TOL: f64 = 1e-9;

const FLOQUET_CLUSTER_TOL: f64 = 1e-6;

/// Wraps an angle into `(−π, π]`.
pub fn wrap_phase(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// Diagonalizes the one-period propagator of a periodic protocol.
///
/// The unitary is split into the commuting Hermitian parts
/// `(U + U†)/2` and `(U − U†)/2i`; the second resolves degeneracies of the
/// first, so eigenvectors stay orthonormal for any spectrum.
pub fn floquet_states(proto: &DrivingProtocol, ctrl: &StepControl) -> Result<FloquetSpectrum> {
    let mismatch = proto.periodicity_mismatch();
    if mismatch > PERIODICITY_TOL {
        return Err(Error::ProtocolNotPeriodic { mismatch });
    }
    let record = propagate_full(proto, ctrl)?;
    let (phases, states) = unitary_eigen(&record.u)?;
    Ok(FloquetSpectrum {
        phases,
        states,
        propagator: record,
    })
}

/// Eigenphases (ascending in `(−π, π]`) and eigenvectors of a unitary.
pub fn unitary_eigen(u: &CMat) -> Result<(Vec<f64>, Vec<CVec>)> {
    let dim = u.dim();
    let m1 = (*u + u.adjoint()).scale_real(0.5);
    let m2 = (*u - u.adjoint()).scale(C64::new(0.0, -0.5));
    let e1 = eig_hermitian(&m1.hermitian_part())?;
    let mut vectors: Vec<CVec> = (0..dim).map(|j| e1.eigenvector(j)).collect();
    let vals = e1.eigenvalues();
    let mut i = 0;
    while i < dim {
        let mut j = i + 1;
        while j < dim && vals[j] - vals[j - 1] <= FLOQUET_CLUSTER_TOL {
            j += 1;
        }
        let size = j - i;
        if size == dim {
            let e2 = eig_hermitian(&m2.hermitian_part())?;
            vectors = (0..dim).map(|k| e2.eigenvector(k)).collect();
        } else if size == 2 {
            let (a, b) = (vectors[i], vectors[i + 1]);
            let mut sub = CMat::zeros(2);
            let pair = [a, b];
            for (r, x) in pair.iter().enumerate() {
                for (s, y) in pair.iter().enumerate() {
                    sub[(r, s)] = m2.sandwich(x, y);
                }
            }
            let e2 = eig_hermitian(&sub.hermitian_part())?;
            for k in 0..2 {
                let w = e2.eigenvector(k);
                vectors[i + k] = (a.scale(w[0]) + b.scale(w[1])).normalized();
            }
        }
        i = j;
    }
    let mut pairs: Vec<(f64, CVec)> = vectors
        .into_iter()
        .map(|v| {
            let z = u.sandwich(&v, &v);
            (z.arg(), crate::linalg::fix_phase(&v))
        })
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    Ok(pairs.into_iter().unzip())
}

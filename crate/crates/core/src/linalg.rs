//! Fixed-size complex linear algebra for the 2×2 and 3×3 operators used by
//! the engine.
//!
//! Everything lives on the stack: a [`CMat`] is a 3×3 array with an active
//! dimension, so products and eigendecompositions never allocate. Hermitian
//! eigenproblems are solved in closed form for dimension 2 and by cyclic
//! complex Jacobi sweeps for dimension 3.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Largest supported dimension.
pub const MAX_DIM: usize = 3;

/// Relative Frobenius tolerance for accepting a matrix as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

fn check_dim(dim: usize) {
    assert!(
        dim == 2 || dim == 3,
        "only dimensions 2 and 3 are supported, got {dim}"
    );
}

/// Complex amplitude vector over 2 or 3 sites.
#[derive(Clone, Copy, PartialEq)]
pub struct CVec {
    dim: usize,
    data: [C64; MAX_DIM],
}

impl CVec {
    pub fn zeros(dim: usize) -> Self {
        check_dim(dim);
        Self {
            dim,
            data: [ZERO; MAX_DIM],
        }
    }

    /// Unit vector `|i⟩` of the site basis.
    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.data[i] = ONE;
        v
    }

    pub fn from_slice(entries: &[C64]) -> Self {
        let mut v = Self::zeros(entries.len());
        v.data[..entries.len()].copy_from_slice(entries);
        v
    }

    pub fn from_real(entries: &[f64]) -> Self {
        let mut v = Self::zeros(entries.len());
        for (slot, &x) in v.data.iter_mut().zip(entries) {
            *slot = C64::new(x, 0.0);
        }
        v
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data[..self.dim]
    }

    /// `⟨self|other⟩`, antilinear in `self`.
    pub fn inner(&self, other: &CVec) -> C64 {
        debug_assert_eq!(self.dim, other.dim);
        let mut acc = ZERO;
        for i in 0..self.dim {
            acc += self.data[i].conj() * other.data[i];
        }
        acc
    }

    pub fn norm(&self) -> f64 {
        self.as_slice()
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Returns a unit-norm copy. A zero vector is returned unchanged.
    pub fn normalized(&self) -> CVec {
        let n = self.norm();
        if n == 0.0 {
            return *self;
        }
        self.scale(C64::new(1.0 / n, 0.0))
    }

    pub fn scale(&self, s: C64) -> CVec {
        let mut out = *self;
        for z in &mut out.data[..self.dim] {
            *z *= s;
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice()
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// `|self⟩⟨other|`.
    pub fn outer(&self, other: &CVec) -> CMat {
        let mut m = CMat::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                m.data[i][j] = self.data[i] * other.data[j].conj();
            }
        }
        m
    }
}

impl Index<usize> for CVec {
    type Output = C64;
    fn index(&self, i: usize) -> &C64 {
        &self.as_slice()[i]
    }
}

impl IndexMut<usize> for CVec {
    fn index_mut(&mut self, i: usize) -> &mut C64 {
        &mut self.data[..self.dim][i]
    }
}

impl Add for CVec {
    type Output = CVec;
    fn add(mut self, rhs: CVec) -> CVec {
        for i in 0..self.dim {
            self.data[i] += rhs.data[i];
        }
        self
    }
}

impl Sub for CVec {
    type Output = CVec;
    fn sub(mut self, rhs: CVec) -> CVec {
        for i in 0..self.dim {
            self.data[i] -= rhs.data[i];
        }
        self
    }
}

impl fmt::Debug for CVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.as_slice()).finish()
    }
}

/// Dense complex matrix of dimension 2 or 3.
#[derive(Clone, Copy, PartialEq)]
pub struct CMat {
    dim: usize,
    data: [[C64; MAX_DIM]; MAX_DIM],
}

impl CMat {
    pub fn zeros(dim: usize) -> Self {
        check_dim(dim);
        Self {
            dim,
            data: [[ZERO; MAX_DIM]; MAX_DIM],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i][i] = ONE;
        }
        m
    }

    pub fn from_rows(rows: &[&[C64]]) -> Self {
        let mut m = Self::zeros(rows.len());
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), rows.len(), "matrix must be square");
            m.data[i][..row.len()].copy_from_slice(row);
        }
        m
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let mut m = Self::zeros(rows.len());
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), rows.len(), "matrix must be square");
            for (j, &x) in row.iter().enumerate() {
                m.data[i][j] = C64::new(x, 0.0);
            }
        }
        m
    }

    pub fn diag(entries: &[f64]) -> Self {
        let mut m = Self::zeros(entries.len());
        for (i, &x) in entries.iter().enumerate() {
            m.data[i][i] = C64::new(x, 0.0);
        }
        m
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(cols: &[CVec]) -> Self {
        let mut m = Self::zeros(cols.len());
        for (j, col) in cols.iter().enumerate() {
            for i in 0..m.dim {
                m.data[i][j] = col[i];
            }
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn column(&self, j: usize) -> CVec {
        let mut v = CVec::zeros(self.dim);
        for i in 0..self.dim {
            v.data[i] = self.data[i][j];
        }
        v
    }

    pub fn adjoint(&self) -> CMat {
        let mut m = CMat::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                m.data[i][j] = self.data[j][i].conj();
            }
        }
        m
    }

    pub fn scale(&self, s: C64) -> CMat {
        let mut m = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                m.data[i][j] *= s;
            }
        }
        m
    }

    pub fn scale_real(&self, s: f64) -> CMat {
        self.scale(C64::new(s, 0.0))
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.data[i][i]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                acc += self.data[i][j].norm_sqr();
            }
        }
        acc.sqrt()
    }

    pub fn mul_vec(&self, v: &CVec) -> CVec {
        debug_assert_eq!(self.dim, v.dim());
        let mut out = CVec::zeros(self.dim);
        for i in 0..self.dim {
            let mut acc = ZERO;
            for j in 0..self.dim {
                acc += self.data[i][j] * v[j];
            }
            out.data[i] = acc;
        }
        out
    }

    /// `⟨a|self|b⟩`.
    pub fn sandwich(&self, a: &CVec, b: &CVec) -> C64 {
        a.inner(&self.mul_vec(b))
    }

    /// `(self + self†) / 2`.
    pub fn hermitian_part(&self) -> CMat {
        (*self + self.adjoint()).scale_real(0.5)
    }

    /// `‖A − A†‖_F / ‖A‖_F` (absolute when `A = 0`).
    pub fn hermiticity_defect(&self) -> f64 {
        let diff = (*self - self.adjoint()).frobenius_norm();
        let norm = self.frobenius_norm();
        if norm > 0.0 {
            diff / norm
        } else {
            diff
        }
    }

    /// `‖U†U − 1‖_F`.
    pub fn unitarity_defect(&self) -> f64 {
        (self.adjoint() * *self - CMat::identity(self.dim)).frobenius_norm()
    }

    /// One Newton step `U(3 − U†U)/2` towards the nearest unitary. The
    /// defect after the step is quadratic in the defect before it.
    pub fn reunitarized(&self) -> CMat {
        let id = CMat::identity(self.dim);
        let gram = self.adjoint() * *self;
        (*self * (id.scale_real(3.0) - gram)).scale_real(0.5)
    }

    pub fn is_finite(&self) -> bool {
        (0..self.dim).all(|i| {
            (0..self.dim).all(|j| self.data[i][j].re.is_finite() && self.data[i][j].im.is_finite())
        })
    }

    /// Expresses the operator in the orthonormal basis given by the columns
    /// of `basis`: `B† A B`.
    pub fn in_basis(&self, basis: &CMat) -> CMat {
        basis.adjoint() * *self * *basis
    }
}

impl Index<(usize, usize)> for CMat {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        assert!(i < self.dim && j < self.dim, "index out of range");
        &self.data[i][j]
    }
}

impl IndexMut<(usize, usize)> for CMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        assert!(i < self.dim && j < self.dim, "index out of range");
        &mut self.data[i][j]
    }
}

impl Add for CMat {
    type Output = CMat;
    fn add(mut self, rhs: CMat) -> CMat {
        debug_assert_eq!(self.dim, rhs.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                self.data[i][j] += rhs.data[i][j];
            }
        }
        self
    }
}

impl Sub for CMat {
    type Output = CMat;
    fn sub(mut self, rhs: CMat) -> CMat {
        debug_assert_eq!(self.dim, rhs.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                self.data[i][j] -= rhs.data[i][j];
            }
        }
        self
    }
}

impl Mul for CMat {
    type Output = CMat;
    fn mul(self, rhs: CMat) -> CMat {
        debug_assert_eq!(self.dim, rhs.dim);
        let n = self.dim;
        let mut out = CMat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i][k];
                if a == ZERO {
                    continue;
                }
                for j in 0..n {
                    out.data[i][j] += a * rhs.data[k][j];
                }
            }
        }
        out
    }
}

impl fmt::Debug for CMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[C64]> = (0..self.dim).map(|i| &self.data[i][..self.dim]).collect();
        f.debug_list().entries(rows).finish()
    }
}

/// Eigenvalues (ascending) and orthonormal eigenvectors of a Hermitian matrix.
#[derive(Clone, Copy, Debug)]
pub struct EigenSystem {
    dim: usize,
    values: [f64; MAX_DIM],
    vectors: CMat,
}

impl EigenSystem {
    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.values[..self.dim]
    }

    pub fn eigenvector(&self, i: usize) -> CVec {
        self.vectors.column(i)
    }

    /// Unitary matrix with the eigenvectors as columns.
    pub fn vectors(&self) -> &CMat {
        &self.vectors
    }

    /// `V f(Λ) V†` for a scalar function of the eigenvalues.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> C64) -> CMat {
        let v = self.vectors;
        let mut scaled = v;
        for j in 0..self.dim {
            let fj = f(self.values[j]);
            for i in 0..self.dim {
                scaled.data[i][j] *= fj;
            }
        }
        scaled * v.adjoint()
    }

    pub fn reconstruct(&self) -> CMat {
        self.map_spectrum(|x| C64::new(x, 0.0))
    }
}

/// Diagonalizes a Hermitian matrix.
///
/// Eigenvalues come back in ascending order. Each eigenvector is rotated so
/// that its largest-magnitude component (the first one, on ties) is real
/// and positive.
pub fn eig_hermitian(a: &CMat) -> Result<EigenSystem> {
    let defect = a.hermiticity_defect();
    if !a.is_finite() || defect > HERMITIAN_TOL {
        return Err(Error::NonHermitian { defect });
    }
    let h = a.hermitian_part();
    let (values, vectors) = match h.dim {
        2 => eig2(&h),
        _ => jacobi(&h),
    };
    Ok(finish(h.dim, values, vectors))
}

fn eig2(h: &CMat) -> ([f64; MAX_DIM], CMat) {
    let a = h.data[0][0].re;
    let d = h.data[1][1].re;
    let b = h.data[0][1];
    let mean = 0.5 * (a + d);
    let half = 0.5 * (a - d);
    let babs = b.norm();
    let r = half.hypot(babs);
    let mut values = [0.0; MAX_DIM];
    values[0] = mean - r;
    values[1] = mean + r;
    let mut vectors = CMat::zeros(2);
    if babs == 0.0 {
        // already diagonal
        let (lo, hi) = if a <= d { (0, 1) } else { (1, 0) };
        vectors.data[lo][0] = ONE;
        vectors.data[hi][1] = ONE;
        return (values, vectors);
    }
    let phase = b / babs;
    let theta = 0.5 * babs.atan2(half);
    let (s, c) = theta.sin_cos();
    // upper: (cos θ, e^{-iβ} sin θ); lower: (-e^{iβ} sin θ, cos θ)
    vectors.data[0][1] = C64::new(c, 0.0);
    vectors.data[1][1] = phase.conj() * s;
    vectors.data[0][0] = -phase * s;
    vectors.data[1][0] = C64::new(c, 0.0);
    (values, vectors)
}

const JACOBI_MAX_SWEEPS: usize = 64;

fn off_diagonal_norm(h: &CMat) -> f64 {
    let mut acc = 0.0;
    for i in 0..h.dim {
        for j in 0..h.dim {
            if i != j {
                acc += h.data[i][j].norm_sqr();
            }
        }
    }
    acc.sqrt()
}

fn jacobi(h: &CMat) -> ([f64; MAX_DIM], CMat) {
    let n = h.dim;
    let mut a = *h;
    let mut v = CMat::identity(n);
    let scale = h.frobenius_norm();
    if scale == 0.0 {
        return ([0.0; MAX_DIM], v);
    }
    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_diagonal_norm(&a) <= f64::EPSILON * 1e-2 * scale {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a.data[p][q];
                let g = apq.norm();
                if g <= f64::MIN_POSITIVE * 1e4 {
                    continue;
                }
                let phase = apq / g;
                let app = a.data[p][p].re;
                let aqq = a.data[q][q].re;
                let tau = (aqq - app) / (2.0 * g);
                let t = if tau == 0.0 {
                    1.0
                } else {
                    tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // J = D·R with D = diag(.., e^{-iα} at q, ..) making a_pq real
                let mut j = CMat::identity(n);
                j.data[p][p] = C64::new(c, 0.0);
                j.data[p][q] = C64::new(s, 0.0);
                j.data[q][p] = -phase.conj() * s;
                j.data[q][q] = phase.conj() * c;
                a = j.adjoint() * a * j;
                a.data[p][q] = ZERO;
                a.data[q][p] = ZERO;
                v = v * j;
            }
        }
    }
    let mut values = [0.0; MAX_DIM];
    for (i, x) in values.iter_mut().enumerate().take(n) {
        *x = a.data[i][i].re;
    }
    (values, v)
}

fn finish(dim: usize, values: [f64; MAX_DIM], vectors: CMat) -> EigenSystem {
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut sorted_values = [0.0; MAX_DIM];
    let mut cols: Vec<CVec> = Vec::with_capacity(dim);
    for (k, &i) in order.iter().enumerate() {
        sorted_values[k] = values[i];
        cols.push(fix_phase(&vectors.column(i)));
    }
    EigenSystem {
        dim,
        values: sorted_values,
        vectors: CMat::from_columns(&cols),
    }
}

/// Rotates `v` so its largest-magnitude component is real and positive.
pub fn fix_phase(v: &CVec) -> CVec {
    let mags: Vec<f64> = v.as_slice().iter().map(|z| z.norm()).collect();
    let max = mags.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return *v;
    }
    let pivot = mags
        .iter()
        .position(|&m| m >= max * (1.0 - 1e-12))
        .unwrap_or(0);
    let z = v[pivot];
    v.scale(z.conj() / z.norm())
}

/// `exp(−i·A·dt)` for Hermitian `A`, built from the eigendecomposition.
pub fn expm_skew(a: &CMat, dt: f64) -> Result<CMat> {
    if !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite time step {dt}")));
    }
    let eig = eig_hermitian(a)?;
    Ok(expm_from_eigen(&eig, dt))
}

/// `exp(−i·A·dt)` from an existing eigendecomposition of `A`.
pub fn expm_from_eigen(eig: &EigenSystem, dt: f64) -> CMat {
    eig.map_spectrum(|x| C64::from_polar(1.0, -x * dt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn eq9(u: f64, c1: f64, c2: f64) -> CMat {
        CMat::from_real_rows(&[&[u, c1, c2], &[c1, 0.0, 1.0], &[c2, 1.0, 0.0]])
    }

    #[test]
    fn reunitarized_squares_the_defect() {
        let u = expm_skew(&eq9(0.3, 0.2, -0.1), 1.3).unwrap();
        let mut bumped = u;
        bumped[(0, 1)] += c(3e-7, -1e-7);
        bumped[(2, 2)] += c(2e-7, 0.0);
        let before = bumped.unitarity_defect();
        let after = bumped.reunitarized().unitarity_defect();
        assert!(before > 1e-7);
        assert!(after < 1e-12, "defect {after:e}");
        assert!((bumped.reunitarized() - u).frobenius_norm() < 1e-6);
    }

    /// Real roots of the characteristic cubic by the trigonometric method.
    fn cubic_roots_symmetric(m: &CMat) -> [f64; 3] {
        let g = |i: usize, j: usize| m[(i, j)].re;
        let tr = g(0, 0) + g(1, 1) + g(2, 2);
        let minors = g(0, 0) * g(1, 1) - g(0, 1) * g(1, 0) + g(0, 0) * g(2, 2) - g(0, 2) * g(2, 0)
            + g(1, 1) * g(2, 2)
            - g(1, 2) * g(2, 1);
        let det = g(0, 0) * (g(1, 1) * g(2, 2) - g(1, 2) * g(2, 1))
            - g(0, 1) * (g(1, 0) * g(2, 2) - g(1, 2) * g(2, 0))
            + g(0, 2) * (g(1, 0) * g(2, 1) - g(1, 1) * g(2, 0));
        // λ³ − tr λ² + minors λ − det = 0, shift λ = x + tr/3
        let p = minors - tr * tr / 3.0;
        let q = -2.0 * tr.powi(3) / 27.0 + tr * minors / 3.0 - det;
        let r = (-p / 3.0).sqrt();
        let arg = (-q / (2.0 * r.powi(3))).clamp(-1.0, 1.0);
        let phi = arg.acos() / 3.0;
        let mut roots = [0.0; 3];
        for (k, root) in roots.iter_mut().enumerate() {
            *root = 2.0 * r * (phi - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos() + tr / 3.0;
        }
        // polish with Newton on det(A − λ)
        for root in roots.iter_mut() {
            for _ in 0..3 {
                let x = *root;
                let f = x.powi(3) - tr * x * x + minors * x - det;
                let df = 3.0 * x * x - 2.0 * tr * x + minors;
                if df != 0.0 {
                    *root = x - f / df;
                }
            }
        }
        roots.sort_by(f64::total_cmp);
        roots
    }

    #[test]
    fn diagonal_input_gives_standard_basis() {
        let eig = eig_hermitian(&CMat::diag(&[0.0, 1.5])).unwrap();
        assert_eq!(eig.eigenvalues(), &[0.0, 1.5]);
        assert_eq!(eig.eigenvector(0), CVec::basis(2, 0));
        assert_eq!(eig.eigenvector(1), CVec::basis(2, 1));
    }

    #[test]
    fn hopping_pair_splits_into_symmetric_and_antisymmetric() {
        let eig = eig_hermitian(&CMat::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]])).unwrap();
        assert_abs_diff_eq!(eig.eigenvalues()[0], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(eig.eigenvalues()[1], 1.0, epsilon = 1e-15);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let lo = eig.eigenvector(0);
        let hi = eig.eigenvector(1);
        assert_abs_diff_eq!(
            (lo - CVec::from_real(&[s, -s])).norm(),
            0.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!((hi - CVec::from_real(&[s, s])).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn three_site_levels_match_cubic_roots() {
        let h = eq9(0.7, 0.05, 0.03);
        let eig = eig_hermitian(&h).unwrap();
        let roots = cubic_roots_symmetric(&h);
        for (x, r) in eig.eigenvalues().iter().zip(roots) {
            assert_abs_diff_eq!(*x, r, epsilon = 1e-10);
        }
    }

    #[test]
    fn non_hermitian_input_is_rejected() {
        let m = CMat::from_rows(&[&[c(0.0, 0.0), c(1.0, 0.0)], &[c(2.0, 0.0), c(0.0, 0.0)]]);
        match eig_hermitian(&m) {
            Err(Error::NonHermitian { defect }) => assert!(defect > 0.1),
            other => panic!("expected NonHermitian, got {other:?}"),
        }
        assert!(expm_skew(&m, 1.0).is_err());
    }

    #[test]
    fn exponential_of_zero_is_identity() {
        let u = expm_skew(&CMat::zeros(3), 2.5).unwrap();
        assert_abs_diff_eq!(
            (u - CMat::identity(3)).frobenius_norm(),
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn exponential_of_pauli_z_at_pi_is_minus_identity() {
        let u = expm_skew(&CMat::diag(&[1.0, -1.0]), std::f64::consts::PI).unwrap();
        assert_abs_diff_eq!(
            (u + CMat::identity(2)).frobenius_norm(),
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn exponential_of_pauli_x_is_rabi_rotation() {
        let sx = CMat::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        for &t in &[0.0, 0.3, 1.0, 2.7, 10.0] {
            let u = expm_skew(&sx, t).unwrap();
            let expected = CMat::identity(2).scale_real(t.cos()) - sx.scale(c(0.0, t.sin()));
            assert_abs_diff_eq!((u - expected).frobenius_norm(), 0.0, epsilon = 1e-14);
        }
    }

    fn arb_hermitian(dim: usize) -> impl Strategy<Value = CMat> {
        prop::collection::vec(-2.0f64..2.0, dim * dim).prop_map(move |xs| {
            let mut m = CMat::zeros(dim);
            let mut k = 0;
            for i in 0..dim {
                m[(i, i)] = c(xs[k], 0.0);
                k += 1;
            }
            for i in 0..dim {
                for j in i + 1..dim {
                    let z = c(xs[k], xs[k + 1]);
                    k += 2;
                    m[(i, j)] = z;
                    m[(j, i)] = z.conj();
                }
            }
            m
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(5000))]

        #[test]
        fn eigendecomposition_round_trips_3x3(m in arb_hermitian(3)) {
            let eig = eig_hermitian(&m).unwrap();
            let v = *eig.vectors();
            prop_assert!((v.adjoint() * v - CMat::identity(3)).frobenius_norm() <= 1e-12);
            let scale = m.frobenius_norm().max(1e-300);
            prop_assert!((eig.reconstruct() - m).frobenius_norm() <= 1e-12 * scale);
            let vals = eig.eigenvalues();
            prop_assert!(vals[0] <= vals[1] && vals[1] <= vals[2]);
        }

        #[test]
        fn eigendecomposition_round_trips_2x2(m in arb_hermitian(2)) {
            let eig = eig_hermitian(&m).unwrap();
            let v = *eig.vectors();
            prop_assert!((v.adjoint() * v - CMat::identity(2)).frobenius_norm() <= 1e-12);
            let scale = m.frobenius_norm().max(1e-300);
            prop_assert!((eig.reconstruct() - m).frobenius_norm() <= 1e-12 * scale);
        }

        #[test]
        fn short_exponentials_are_unitary(m in arb_hermitian(3), dt in -1.0f64..1.0) {
            // keep ‖A‖·dt ≤ 1
            let scaled = m.scale_real(1.0 / m.frobenius_norm().max(1.0));
            let u = expm_skew(&scaled, dt).unwrap();
            prop_assert!(u.unitarity_defect() <= 1e-13);
        }

        #[test]
        fn phase_convention_is_deterministic(m in arb_hermitian(3)) {
            let eig = eig_hermitian(&m).unwrap();
            for i in 0..3 {
                let v = eig.eigenvector(i);
                let again = fix_phase(&v.scale(C64::from_polar(1.0, 1.234)));
                prop_assert!((again - v).norm() <= 1e-12);
            }
        }
    }
}

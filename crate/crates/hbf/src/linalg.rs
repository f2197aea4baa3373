//! Dense complex linear algebra helpers used throughout the solvers.
//!
//! Matrices are small (at most antenna-count sized, typically 16–64), so
//! everything here is backed by nalgebra's dense routines. Inverses of
//! Hermitian systems always go through a factorization, never an explicit
//! inverse.

use nalgebra::{Cholesky, Complex, DMatrix, DVector, SymmetricEigen};

use crate::error::{HbfError, Result};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Reciprocal condition number below which a Hermitian system is treated as
/// singular.
pub const SINGULAR_RCOND: f64 = 1e-14;

pub fn cx(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Real scalar times complex matrix.
pub fn scale(m: &CMat, s: f64) -> CMat {
    m * cx(s, 0.0)
}

/// (M + M^H) / 2, killing round-off level Hermitian drift.
pub fn hermitianize(m: &CMat) -> CMat {
    (m + m.adjoint()) * cx(0.5, 0.0)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn trace_re(m: &CMat) -> f64 {
    m.diagonal().iter().map(|z| z.re).sum()
}

/// Re tr(A^H B), the real Frobenius inner product.
pub fn fro_inner_re(a: &CMat, b: &CMat) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// Cholesky factorization that actually verifies positive definiteness.
///
/// nalgebra's complex Cholesky happily takes complex square roots of
/// negative pivots, so the factor diagonal has to be checked explicitly.
pub fn herm_cholesky(a: &CMat) -> Option<Cholesky<C64, nalgebra::Dyn>> {
    let chol = Cholesky::new(hermitianize(a))?;
    let l = chol.l_dirty();
    for i in 0..l.nrows() {
        let d = l[(i, i)];
        if !(d.re > 0.0) || d.im.abs() > 1e-10 * d.re {
            return None;
        }
    }
    Some(chol)
}

/// Solve the Hermitian system A X = B via Cholesky, falling back to an
/// eigendecomposition when A is not numerically positive definite.
///
/// Returns [`HbfError::SingularSystem`] when the reciprocal condition number
/// falls below [`SINGULAR_RCOND`].
pub fn herm_solve(a: &CMat, b: &CMat) -> Result<CMat> {
    let sym = hermitianize(a);
    if let Some(chol) = herm_cholesky(&sym) {
        let l = chol.l_dirty();
        let mut dmin = f64::INFINITY;
        let mut dmax = 0.0f64;
        for i in 0..l.nrows() {
            let d = l[(i, i)].re.abs();
            dmin = dmin.min(d);
            dmax = dmax.max(d);
        }
        let rcond = (dmin / dmax).powi(2);
        if rcond < SINGULAR_RCOND {
            return Err(HbfError::SingularSystem { rcond });
        }
        return Ok(chol.solve(b));
    }
    // Indefinite or semi-definite input: solve through the spectral
    // factorization and report near-singularity honestly.
    let eig = SymmetricEigen::new(sym);
    let amax = eig.eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l.abs()));
    let amin = eig
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |m, &l| m.min(l.abs()));
    if amax == 0.0 || amin / amax < SINGULAR_RCOND {
        return Err(HbfError::SingularSystem {
            rcond: if amax == 0.0 { 0.0 } else { amin / amax },
        });
    }
    let qh_b = eig.eigenvectors.adjoint() * b;
    let mut scaled = qh_b;
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        let inv = cx(1.0 / l, 0.0);
        scaled.row_mut(i).apply(|z| *z *= inv);
    }
    Ok(&eig.eigenvectors * scaled)
}

/// tr(A^{-1}) for Hermitian positive definite A.
pub fn herm_inv_trace(a: &CMat) -> Result<f64> {
    let n = a.nrows();
    let x = herm_solve(a, &identity(n))?;
    Ok(trace_re(&x))
}

/// Minimal-norm solution of the Hermitian system A X = B: eigenvalues below
/// `SINGULAR_RCOND` times the largest are treated as zero. Coincides with
/// the exact solve on well-conditioned systems and stays finite on
/// rank-deficient ones.
pub fn herm_pseudo_solve(a: &CMat, b: &CMat) -> CMat {
    let eig = SymmetricEigen::new(hermitianize(a));
    let amax = eig.eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l.abs()));
    if amax == 0.0 {
        return CMat::zeros(a.nrows(), b.ncols());
    }
    let mut scaled = eig.eigenvectors.adjoint() * b;
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        let inv = if l.abs() < SINGULAR_RCOND * amax {
            cx(0.0, 0.0)
        } else {
            cx(1.0 / l, 0.0)
        };
        scaled.row_mut(i).apply(|z| *z *= inv);
    }
    &eig.eigenvectors * scaled
}

/// ln det A for Hermitian positive definite A, via Cholesky.
pub fn herm_pd_ln_det(a: &CMat) -> Result<f64> {
    let chol = herm_cholesky(a).ok_or(HbfError::NotPositiveDefinite("ln det"))?;
    let l = chol.l_dirty();
    Ok((0..l.nrows()).map(|i| 2.0 * l[(i, i)].re.ln()).sum())
}

/// Rotate a vector so its first entry of non-negligible magnitude is real
/// positive. Fixes the arbitrary phase of eigenvectors for reproducibility.
pub fn canonicalize_phase(v: &mut CVec) {
    let max = v.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    if max == 0.0 {
        return;
    }
    let pivot = v.iter().find(|z| z.norm() > 1e-12 * max).copied();
    if let Some(z) = pivot {
        let rot = z.conj() / z.norm();
        v.apply(|e| *e *= rot);
    }
}

/// Eigendecomposition of a Hermitian matrix with eigenvalues sorted in
/// descending order and phase-canonicalized eigenvectors.
pub fn herm_eigen_desc(a: &CMat) -> (Vec<f64>, CMat) {
    let eig = SymmetricEigen::new(hermitianize(a));
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col: CVec = eig.eigenvectors.column(src).into();
        canonicalize_phase(&mut col);
        vectors.set_column(dst, &col);
    }
    (values, vectors)
}

/// The `k` eigenvectors of a Hermitian matrix with the largest eigenvalues.
pub fn top_eigenvectors(a: &CMat, k: usize) -> CMat {
    let (_, vecs) = herm_eigen_desc(a);
    vecs.columns(0, k).into()
}

/// True when every entry has modulus 1 within `tol`.
pub fn is_unit_modulus(m: &CMat, tol: f64) -> bool {
    m.iter().all(|z| (z.norm() - 1.0).abs() <= tol)
}

/// Deterministic pairwise summation; order-independent aggregation for
/// Monte Carlo reductions.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

/// Sample mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(xs) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&sq) / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

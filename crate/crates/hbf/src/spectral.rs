//! Eigen-structure based analog beamformer solvers: generalized-eigenvector
//! column updates, bound-based eigendecomposition solvers for the broadband
//! objective, greedy dictionary selection, power iteration and phase
//! extraction.

use crate::channel::{array_response, ArrayGeometry};
use crate::error::{HbfError, Result};
use crate::linalg::{
    canonicalize_phase, cx, herm_solve, hermitianize, identity, scale, top_eigenvectors,
    trace_re, CMat, CVec,
};
use crate::mmse::ReducedObjective;

/// Default power-method iteration count; enough for the column updates.
pub const DEFAULT_POWER_ITERS: usize = 10;

/// Project a matrix onto the unit-modulus set by keeping entry phases.
///
/// Zero entries map to 1; the returned flag tells whether any did.
pub fn phase_extract(m: &CMat) -> (CMat, bool) {
    let mut had_zero = false;
    let out = CMat::from_fn(m.nrows(), m.ncols(), |i, j| {
        let z = m[(i, j)];
        let n = z.norm();
        if n == 0.0 {
            had_zero = true;
            cx(1.0, 0.0)
        } else {
            z / n
        }
    });
    (out, had_zero)
}

/// Dominant generalized eigenpair of the Hermitian pencil `(U, W)` with `W`
/// positive definite, by power iteration on `W^{-1} U` with one Hermitian
/// solve per step.
///
/// Returns the phase-canonicalized eigenvector and its Rayleigh quotient
/// `x^H U x / x^H W x`. For positive semidefinite `U` the quotient is
/// non-decreasing across iterations.
pub fn power_gevd(u: &CMat, w: &CMat, start: &CVec, n_iters: usize) -> Result<(CVec, f64)> {
    let chol = crate::linalg::herm_cholesky(w)
        .ok_or(HbfError::NotPositiveDefinite("power_gevd pencil"))?;
    let mut x = start.clone();
    let n = x.norm();
    if n == 0.0 {
        return Err(HbfError::InvalidInput("start vector must be nonzero".into()));
    }
    x /= cx(n, 0.0);
    for _ in 0..n_iters {
        let y = u * &x;
        let mut next = chol.solve(&y);
        let n = next.norm();
        if n < 1e-300 {
            // x is numerically in the null space of U; the quotient is zero
            // and further iterations cannot improve it.
            break;
        }
        next /= cx(n, 0.0);
        x = next;
    }
    let num = (x.adjoint() * u * &x)[(0, 0)].re;
    let den = (x.adjoint() * w * &x)[(0, 0)].re;
    canonicalize_phase(&mut x);
    Ok((x, num / den))
}

/// The Hermitian matrices of one generalized-eigenvector column update.
#[derive(Debug, Clone)]
pub struct GevdWorkspace {
    /// `A_m = M + (1/(c n_ant)) F^H V̄_m V̄_m^H F`, over the complement
    /// columns.
    pub a_m: CMat,
    /// `U_m = (1/(c n_ant)) F A_m^{-2} F^H`.
    pub u_m: CMat,
    /// `W_m = (1/n_ant) I + (1/(c n_ant)) F A_m^{-1} F^H`.
    pub w_m: CMat,
}

/// Build the pencil for updating column `m` of `b`. Narrowband only.
pub fn gevd_workspace(problem: &ReducedObjective, b: &CMat, m: usize) -> Result<GevdWorkspace> {
    if problem.num_subcarriers() != 1 {
        return Err(HbfError::InvalidInput(
            "GEVD column updates require the narrowband scenario".into(),
        ));
    }
    let f = &problem.eff_channels[0];
    let n_ant = problem.n_ant() as f64;
    let coeff = 1.0 / (problem.noise_coeffs[0] * n_ant);

    let others: Vec<_> = (0..b.ncols()).filter(|&j| j != m).map(|j| b.column(j)).collect();
    let a_m = if others.is_empty() {
        problem.weight_inv_at(0)
    } else {
        let complement = CMat::from_columns(&others);
        let s = complement.adjoint() * f;
        hermitianize(&(problem.weight_inv_at(0) + scale(&(s.adjoint() * s), coeff)))
    };

    let fh = f.adjoint();
    let a_inv_fh = herm_solve(&a_m, &fh)?;
    let a_inv2_fh = herm_solve(&a_m, &a_inv_fh)?;
    let u_m = hermitianize(&scale(&(f * a_inv2_fh), coeff));
    let w_m = hermitianize(
        &(scale(&identity(f.nrows()), 1.0 / n_ant) + scale(&(f * a_inv_fh), coeff)),
    );
    Ok(GevdWorkspace { a_m, u_m, w_m })
}

/// New value for column `m`: the phase of the dominant generalized
/// eigenvector of `(U_m, W_m)`, warm-started at the current column.
pub fn gevd_update_column_on(
    problem: &ReducedObjective,
    b: &CMat,
    m: usize,
    power_iters: usize,
) -> Result<CVec> {
    let ws = gevd_workspace(problem, b, m)?;
    let start: CVec = b.column(m).into();
    let (z, _) = power_gevd(&ws.u_m, &ws.w_m, &start, power_iters)?;
    let z_mat = CMat::from_columns(&[z.column(0)]);
    let (col, _) = phase_extract(&z_mat);
    Ok(col.column(0).into())
}

/// Spec-shaped convenience for the narrowband unweighted precoder problem:
/// update column `m` of `v_rf` given `H1`, `σ²` and `w = tr(W^H W)`.
pub fn gevd_update_column(
    v_rf: &CMat,
    m: usize,
    h1: &CMat,
    sigma2: f64,
    w: f64,
    power_iters: usize,
) -> Result<CVec> {
    let problem = ReducedObjective::precoder(&[h1.clone()], sigma2, &[w], None)?;
    gevd_update_column_on(&problem, v_rf, m, power_iters)
}

/// One sweep of generalized-eigenvector updates over all columns of `b`.
pub fn gevd_sweep(problem: &ReducedObjective, b: &mut CMat, power_iters: usize) -> Result<()> {
    for m in 0..b.ncols() {
        let col = gevd_update_column_on(problem, b, m, power_iters)?;
        b.set_column(m, &col);
    }
    Ok(())
}

/// Lower-bound eigendecomposition solver: phase-extracted top eigenvectors
/// of `Σ_k (1/c_k) F_k F_k^H`.
pub fn evd_lb_analog(problem: &ReducedObjective, n_rf: usize) -> Result<CMat> {
    let n_ant = problem.n_ant();
    let mut acc = CMat::zeros(n_ant, n_ant);
    for (f, &c) in problem.eff_channels.iter().zip(&problem.noise_coeffs) {
        acc += scale(&(f * f.adjoint()), 1.0 / c);
    }
    let vecs = top_eigenvectors(&hermitianize(&acc), n_rf);
    Ok(phase_extract(&vecs).0)
}

/// `G_k = (1/(c_k n_ant)) F_k (I + (1/(c_k n_ant)) F_k^H F_k)^{-1} F_k^H`,
/// the complement of `A_k^{-1}` under the matrix inversion lemma.
pub fn evd_ub_gain(f: &CMat, coeff: f64) -> Result<CMat> {
    let inner = identity(f.ncols()) + scale(&(f.adjoint() * f), coeff);
    let x = herm_solve(&hermitianize(&inner), &f.adjoint())?;
    Ok(hermitianize(&scale(&(f * x), coeff)))
}

/// Upper-bound eigendecomposition solver: phase-extracted top eigenvectors
/// of `Σ_k G_k`. Defined for the unweighted objective only.
pub fn evd_ub_analog(problem: &ReducedObjective, n_rf: usize) -> Result<CMat> {
    if problem.weight_invs.is_some() {
        return Err(HbfError::InvalidInput(
            "the upper-bound EVD solver does not support weights".into(),
        ));
    }
    let n_ant = problem.n_ant() as f64;
    let mut acc = CMat::zeros(problem.n_ant(), problem.n_ant());
    for (f, &c) in problem.eff_channels.iter().zip(&problem.noise_coeffs) {
        acc += evd_ub_gain(f, 1.0 / (c * n_ant))?;
    }
    let vecs = top_eigenvectors(&hermitianize(&acc), n_rf);
    Ok(phase_extract(&vecs).0)
}

/// Jensen lower bound of the orthogonality-approximated objective at an
/// isometric point: `(N N_s)² / Σ_k tr(Q_k)`.
pub fn jensen_lower_bound(problem: &ReducedObjective, b: &CMat) -> f64 {
    let n_ant = problem.n_ant() as f64;
    let mut denom = 0.0;
    for (k, f) in problem.eff_channels.iter().enumerate() {
        let s = b.adjoint() * f;
        let q = problem.weight_inv_at(k)
            + scale(&(s.adjoint() * s), 1.0 / (problem.noise_coeffs[k] * n_ant));
        denom += trace_re(&q);
    }
    let count = (problem.num_subcarriers() * problem.n_streams()) as f64;
    count * count / denom
}

/// Eigenvalue-domination upper bound `Σ_k tr(B^H A_k^{-1} B)` with
/// `A_k = I + (1/(c_k n_ant)) F_k F_k^H`.
pub fn domination_upper_bound(problem: &ReducedObjective, b: &CMat) -> Result<f64> {
    let n_ant = problem.n_ant() as f64;
    let mut total = 0.0;
    for (f, &c) in problem.eff_channels.iter().zip(&problem.noise_coeffs) {
        let a = identity(problem.n_ant()) + scale(&(f * f.adjoint()), 1.0 / (c * n_ant));
        let x = herm_solve(&hermitianize(&a), b)?;
        total += (b.adjoint() * x).diagonal().iter().map(|z| z.re).sum::<f64>();
    }
    Ok(total)
}

/// Dictionary of candidate analog columns (transmit or receive array
/// responses at the true ray angles).
#[derive(Debug, Clone)]
pub struct Dictionary {
    pub columns: CMat,
}

impl Dictionary {
    pub fn from_angles(geom: &ArrayGeometry, angles: &[f64]) -> Self {
        let cols: Vec<CVec> = angles.iter().map(|&a| array_response(geom, a)).collect();
        let refs: Vec<_> = cols.iter().map(|c| c.column(0)).collect();
        Dictionary {
            columns: CMat::from_columns(&refs),
        }
    }

    pub fn num_atoms(&self) -> usize {
        self.columns.ncols()
    }
}

/// Unconstrained (full-digital) minimizer of one subcarrier's reduced
/// problem: `(F Λ F^H + c I)^{-1} F Λ`.
fn unconstrained_precoder(problem: &ReducedObjective, k: usize) -> Result<CMat> {
    let f = &problem.eff_channels[k];
    let c = problem.noise_coeffs[k];
    match &problem.weight_invs {
        None => {
            let a = f * f.adjoint() + scale(&identity(f.nrows()), c);
            herm_solve(&a, f)
        }
        Some(ms) => {
            let lambda = herm_solve(&ms[k], &identity(ms[k].nrows()))?;
            let fl = f * &lambda;
            let a = &fl * f.adjoint() + scale(&identity(f.nrows()), c);
            herm_solve(&hermitianize(&a), &fl)
        }
    }
}

/// Digital part for a fixed analog matrix, in reduced-problem coordinates
/// (minimal-norm when the selected columns are nearly dependent).
fn reduced_digital(problem: &ReducedObjective, b: &CMat, k: usize) -> Result<CMat> {
    let f = &problem.eff_channels[k];
    let c = problem.noise_coeffs[k];
    let weight = match &problem.weight_invs {
        None => None,
        Some(ms) => Some(herm_solve(&ms[k], &identity(ms[k].nrows()))?),
    };
    Ok(crate::mmse::digital_precoder_min_norm(b, f, c, 1.0, weight.as_ref()))
}

/// Greedy orthogonal-matching-pursuit analog design.
///
/// The residual starts at the per-subcarrier unconstrained precoder; each of
/// the `n_rf` rounds appends the dictionary column most correlated with the
/// residuals (phase-extracted to unit modulus), then refreshes the digital
/// parts through the closed form and the residuals `R_k = V_fd,k - B V_U,k`.
/// Ties break toward the lowest index.
pub fn omp_analog(
    problem: &ReducedObjective,
    dict: &Dictionary,
    n_rf: usize,
) -> Result<(CMat, Vec<usize>)> {
    if dict.num_atoms() < n_rf {
        return Err(HbfError::DictionaryTooSmall {
            available: dict.num_atoms(),
            required: n_rf,
        });
    }
    let targets: Vec<CMat> = (0..problem.num_subcarriers())
        .map(|k| unconstrained_precoder(problem, k))
        .collect::<Result<Vec<_>>>()?;
    let mut residuals = targets.clone();
    let mut selected: Vec<usize> = Vec::with_capacity(n_rf);

    for _ in 0..n_rf {
        let mut best = None;
        for i in 0..dict.num_atoms() {
            if selected.contains(&i) {
                continue;
            }
            let atom = dict.columns.column(i);
            let score: f64 = residuals
                .iter()
                .map(|r| (atom.adjoint() * r).norm_squared())
                .sum();
            let better = match best {
                None => true,
                Some((_, s)) => score > s,
            };
            if better {
                best = Some((i, score));
            }
        }
        let (idx, _) = best.expect("dictionary has enough unselected atoms");
        selected.push(idx);

        let cols: Vec<_> = selected.iter().map(|&i| dict.columns.column(i)).collect();
        let b = phase_extract(&CMat::from_columns(&cols)).0;
        for (k, target) in targets.iter().enumerate() {
            let v_u = reduced_digital(problem, &b, k)?;
            residuals[k] = target - &b * v_u;
        }
    }

    let cols: Vec<_> = selected.iter().map(|&i| dict.columns.column(i)).collect();
    let b = phase_extract(&CMat::from_columns(&cols)).0;
    Ok((b, selected))
}

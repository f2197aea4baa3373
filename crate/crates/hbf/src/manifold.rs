//! Riemannian optimization on the product manifold of unit-modulus complex
//! matrices.
//!
//! A point is a matrix whose every entry lies on the complex unit circle.
//! Gradient descent runs in three steps per iteration: project the Euclidean
//! conjugate gradient onto the tangent space, backtrack along the negative
//! Riemannian gradient under the Armijo condition, and retract entrywise back
//! onto the circle.

use crate::error::{HbfError, Result};
use crate::linalg::{cx, fro_inner_re, is_unit_modulus, CMat};
use crate::mmse::ReducedObjective;

/// Matrix with every entry on the complex unit circle.
#[derive(Debug, Clone)]
pub struct UnitModulusPoint {
    mat: CMat,
}

impl UnitModulusPoint {
    pub fn new(mat: CMat) -> Result<Self> {
        if !is_unit_modulus(&mat, 1e-12) {
            return Err(HbfError::InvalidInput(
                "entries must have unit modulus".into(),
            ));
        }
        Ok(UnitModulusPoint { mat })
    }

    /// Project an arbitrary matrix onto the manifold by keeping entry phases.
    pub fn from_phases(mat: &CMat) -> Self {
        let (m, _) = crate::spectral::phase_extract(mat);
        UnitModulusPoint { mat: m }
    }

    pub fn random(rng: &mut impl rand::Rng, rows: usize, cols: usize) -> Self {
        UnitModulusPoint {
            mat: crate::rng::uniform_phase_matrix(rng, rows, cols),
        }
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn into_matrix(self) -> CMat {
        self.mat
    }
}

/// Armijo backtracking parameters.
#[derive(Debug, Clone, Copy)]
pub struct LineSearchParams {
    pub initial_step: f64,
    pub contraction: f64,
    pub sufficient_decrease: f64,
    pub max_backtracks: usize,
}

impl Default for LineSearchParams {
    fn default() -> Self {
        LineSearchParams {
            initial_step: 1.0,
            contraction: 0.5,
            sufficient_decrease: 1e-4,
            max_backtracks: 50,
        }
    }
}

/// Stopping and line-search options for [`mo_solve`].
#[derive(Debug, Clone, Copy)]
pub struct MoOptions {
    pub line_search: LineSearchParams,
    /// Stop when the relative objective change falls below this.
    pub rel_tol: f64,
    /// Stop when the Riemannian gradient norm falls below this.
    pub grad_tol: f64,
    pub max_iters: usize,
}

impl Default for MoOptions {
    fn default() -> Self {
        MoOptions {
            line_search: LineSearchParams::default(),
            rel_tol: 1e-5,
            grad_tol: 1e-8,
            max_iters: 500,
        }
    }
}

/// Objective with a Euclidean conjugate gradient, as needed by [`mo_solve`].
pub trait ManifoldObjective {
    fn value(&self, b: &CMat) -> Result<f64>;
    fn euclidean_grad(&self, b: &CMat) -> Result<CMat>;
}

impl ManifoldObjective for ReducedObjective {
    fn value(&self, b: &CMat) -> Result<f64> {
        ReducedObjective::value(self, b)
    }

    fn euclidean_grad(&self, b: &CMat) -> Result<CMat> {
        ReducedObjective::euclidean_grad(self, b)
    }
}

/// Euclidean conjugate gradient of the reduced precoder objective; the
/// convenience form mirroring [`crate::mmse::reduced_objective_j`].
/// Requires `v_rf` of full column rank.
pub fn euclidean_grad(
    v_rf: &CMat,
    h1s: &[CMat],
    sigma2: f64,
    noise_weights: &[f64],
    weights: Option<&[CMat]>,
) -> Result<CMat> {
    let gram = v_rf.adjoint() * v_rf;
    let (eigs, _) = crate::linalg::herm_eigen_desc(&gram);
    if eigs[eigs.len() - 1] < crate::linalg::SINGULAR_RCOND * eigs[0] {
        return Err(HbfError::RankDeficient);
    }
    ReducedObjective::precoder(h1s, sigma2, noise_weights, weights)?.euclidean_grad(v_rf)
}

/// Project an ambient gradient onto the tangent space of the unit-modulus
/// manifold at `point`: `t = g - Re(g ∘ conj(x)) ∘ x` entrywise.
pub fn project_tangent(point: &CMat, ambient: &CMat) -> CMat {
    let mut out = ambient.clone();
    for (t, x) in out.iter_mut().zip(point.iter()) {
        let radial = (t.conj() * x).re;
        *t -= x * cx(radial, 0.0);
    }
    out
}

/// Entrywise retraction `(x + d) / |x + d|`; entries where `|x + d|` is
/// numerically zero keep the old value.
pub fn retract(point: &CMat, step: &CMat) -> CMat {
    CMat::from_fn(point.nrows(), point.ncols(), |i, j| {
        let z = point[(i, j)] + step[(i, j)];
        let n = z.norm();
        if n < 1e-14 {
            point[(i, j)]
        } else {
            z / n
        }
    })
}

/// One row of the per-iteration solver trace.
#[derive(Debug, Clone, Copy)]
pub struct MoTraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub grad_norm: f64,
    pub step: f64,
}

/// Result of a manifold descent run.
#[derive(Debug, Clone)]
pub struct MoOutcome {
    pub point: UnitModulusPoint,
    pub objective: f64,
    pub iterations: usize,
    /// Line search failed to make progress before any stop condition fired.
    pub stalled: bool,
    pub trace: Vec<MoTraceRow>,
}

/// Riemannian gradient descent with Armijo backtracking.
///
/// Each accepted step satisfies the sufficient-decrease inequality, so the
/// objective sequence is non-increasing. The accepted step size seeds the
/// next line search (expanded by one contraction factor), which keeps the
/// method fast when the gradient scale is far from 1. Stops on relative
/// objective change, gradient norm, the iteration cap, or a stalled line
/// search.
pub fn mo_solve(
    objective: &impl ManifoldObjective,
    start: &UnitModulusPoint,
    opts: &MoOptions,
) -> Result<MoOutcome> {
    let ls = opts.line_search;
    let mut x = start.matrix().clone();
    let mut value = objective.value(&x)?;
    let mut trace = Vec::new();
    let mut stalled = false;
    let mut iterations = 0;
    let mut next_initial = ls.initial_step;

    for iter in 0..opts.max_iters {
        let egrad = objective.euclidean_grad(&x)?;
        let rgrad = project_tangent(&x, &egrad);
        let gnorm2 = fro_inner_re(&rgrad, &rgrad);
        let gnorm = gnorm2.sqrt();
        if gnorm < opts.grad_tol {
            break;
        }

        // The ambient function of the real/imaginary parts has directional
        // derivative 2 Re<∇J, D> along D, hence the factor 2 in the Armijo
        // model slope.
        let slope = -2.0 * gnorm2;
        let mut tau = next_initial;
        let mut accepted = None;
        for _ in 0..ls.max_backtracks {
            let candidate = retract(&x, &(&rgrad * cx(-tau, 0.0)));
            let cand_value = objective.value(&candidate)?;
            if cand_value <= value + ls.sufficient_decrease * tau * slope {
                accepted = Some((candidate, cand_value));
                break;
            }
            tau *= ls.contraction;
        }

        let Some((next, next_value)) = accepted else {
            stalled = true;
            break;
        };
        next_initial = tau / ls.contraction;

        iterations = iter + 1;
        trace.push(MoTraceRow {
            iteration: iterations,
            objective: next_value,
            grad_norm: gnorm,
            step: tau,
        });
        let rel = (value - next_value).abs() / value.abs().max(f64::MIN_POSITIVE);
        x = next;
        value = next_value;
        if rel < opts.rel_tol {
            break;
        }
    }

    Ok(MoOutcome {
        point: UnitModulusPoint { mat: x },
        objective: value,
        iterations,
        stalled,
        trace,
    })
}

//! Modified-MSE transceiver machinery: closed-form digital beamformers,
//! scaling factors, reduced objectives, spectral efficiency and the
//! unconstrained full-digital oracle.
//!
//! The modified MSE of a link is `E ||β^{-1} y - s||²` with a positive scalar
//! `β` optimized jointly with the beamformers. With the digital parts at
//! their closed-form optima, each side's analog design reduces to minimizing
//!
//! ```text
//! J(B) = Σ_k tr( (M_k + (1/c_k) F_k^H B (B^H B)^{-1} B^H F_k)^{-1} )
//! ```
//!
//! over the unit-modulus matrix `B`, where `F_k` is that side's effective
//! channel, `c_k` a noise coefficient, and `M_k` the inverse weight matrix
//! (identity in the unweighted case). [`ReducedObjective`] captures this form
//! once; the precoder and combiner sub-problems, weighted or not, are
//! instances of it.

use serde::{Deserialize, Serialize};

use crate::error::{HbfError, Result};
use crate::linalg::{
    cx, herm_eigen_desc, herm_inv_trace, herm_pd_ln_det, herm_pseudo_solve, herm_solve,
    hermitianize, identity, is_unit_modulus, scale, trace_re, CMat,
};

/// Antenna, RF-chain, stream and subcarrier counts plus the noise variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemDims {
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_rf: usize,
    pub n_streams: usize,
    pub n_subcarriers: usize,
    pub noise_var: f64,
}

impl SystemDims {
    pub fn new(
        n_tx: usize,
        n_rx: usize,
        n_rf: usize,
        n_streams: usize,
        n_subcarriers: usize,
        noise_var: f64,
    ) -> Result<Self> {
        let dims = SystemDims {
            n_tx,
            n_rx,
            n_rf,
            n_streams,
            n_subcarriers,
            noise_var,
        };
        dims.validate()?;
        Ok(dims)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_tx == 0 || self.n_rx == 0 || self.n_rf == 0 || self.n_streams == 0 {
            return Err(HbfError::InvalidInput("all counts must be positive".into()));
        }
        if self.n_subcarriers == 0 {
            return Err(HbfError::InvalidInput(
                "need at least one subcarrier".into(),
            ));
        }
        if !(self.noise_var > 0.0) {
            return Err(HbfError::InvalidInput(
                "noise variance must be positive".into(),
            ));
        }
        if self.n_rf < self.n_streams {
            return Err(HbfError::InvalidInput(format!(
                "n_rf = {} must be at least n_streams = {}",
                self.n_rf, self.n_streams
            )));
        }
        if self.n_rf > self.n_tx.min(self.n_rx) {
            return Err(HbfError::InvalidInput(format!(
                "n_rf = {} must not exceed min(n_tx, n_rx) = {}",
                self.n_rf,
                self.n_tx.min(self.n_rx)
            )));
        }
        Ok(())
    }

    pub fn narrowband(&self) -> bool {
        self.n_subcarriers == 1
    }
}

/// Anything that exposes per-subcarrier overall precoders/combiners.
///
/// `precoder(k)` includes the power scaling, so `||precoder(k)||_F² = 1`.
pub trait Transceiver {
    fn num_subcarriers(&self) -> usize;
    fn precoder(&self, k: usize) -> CMat;
    fn combiner(&self, k: usize) -> CMat;
    fn beta(&self, k: usize) -> f64;
}

/// Hybrid beamformer: frequency-flat unit-modulus analog matrices plus
/// per-subcarrier digital matrices and scaling factors.
///
/// `v_dig[k]` is the unnormalized digital precoder; the overall transmit
/// matrix is `beta[k] * v_rf * v_dig[k]` and meets the unit power constraint
/// with equality.
#[derive(Debug, Clone)]
pub struct HybridBeamformer {
    pub v_rf: CMat,
    pub w_rf: CMat,
    pub v_dig: Vec<CMat>,
    pub w_dig: Vec<CMat>,
    pub beta: Vec<f64>,
}

impl HybridBeamformer {
    /// Check unit-modulus analog entries (1e-12) and per-subcarrier unit
    /// transmit power (1e-9).
    pub fn validate(&self) -> Result<()> {
        if !is_unit_modulus(&self.v_rf, 1e-12) || !is_unit_modulus(&self.w_rf, 1e-12) {
            return Err(HbfError::InvalidInput(
                "analog beamformer entries must have unit modulus".into(),
            ));
        }
        if self.v_dig.len() != self.beta.len() || self.w_dig.len() != self.beta.len() {
            return Err(HbfError::DimensionMismatch {
                context: "HybridBeamformer",
                details: "per-subcarrier lists must have equal length".into(),
            });
        }
        for (k, (vd, &b)) in self.v_dig.iter().zip(&self.beta).enumerate() {
            if !(b > 0.0) {
                return Err(HbfError::InvalidInput(format!("beta[{k}] must be positive")));
            }
            let power = scale(&(&self.v_rf * vd), b).norm_squared();
            if (power - 1.0).abs() > 1e-9 {
                return Err(HbfError::InvalidInput(format!(
                    "transmit power at subcarrier {k} is {power}, expected 1"
                )));
            }
        }
        Ok(())
    }
}

impl Transceiver for HybridBeamformer {
    fn num_subcarriers(&self) -> usize {
        self.beta.len()
    }

    fn precoder(&self, k: usize) -> CMat {
        scale(&(&self.v_rf * &self.v_dig[k]), self.beta[k])
    }

    fn combiner(&self, k: usize) -> CMat {
        &self.w_rf * &self.w_dig[k]
    }

    fn beta(&self, k: usize) -> f64 {
        self.beta[k]
    }
}

/// Unconstrained per-subcarrier MMSE transceiver (the full-digital oracle).
#[derive(Debug, Clone)]
pub struct FullDigitalBeamformer {
    pub v: Vec<CMat>,
    pub w: Vec<CMat>,
}

impl Transceiver for FullDigitalBeamformer {
    fn num_subcarriers(&self) -> usize {
        self.v.len()
    }

    fn precoder(&self, k: usize) -> CMat {
        self.v[k].clone()
    }

    fn combiner(&self, k: usize) -> CMat {
        self.w[k].clone()
    }

    fn beta(&self, _k: usize) -> f64 {
        1.0
    }
}

/// Per-subcarrier Hermitian positive definite weight matrices.
#[derive(Debug, Clone)]
pub struct WeightMatrices {
    pub lambda: Vec<CMat>,
}

impl WeightMatrices {
    pub fn identity(n_streams: usize, n_subcarriers: usize) -> Self {
        WeightMatrices {
            lambda: vec![identity(n_streams); n_subcarriers],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (k, l) in self.lambda.iter().enumerate() {
            if (l - l.adjoint()).norm() > 1e-10 * l.norm().max(1.0) {
                return Err(HbfError::InvalidInput(format!(
                    "weight matrix {k} is not Hermitian"
                )));
            }
            let (vals, _) = herm_eigen_desc(l);
            if vals.iter().any(|&v| v <= 0.0) {
                return Err(HbfError::NotPositiveDefinite("weight matrix"));
            }
        }
        Ok(())
    }
}

fn check_dims(context: &'static str, ok: bool, details: String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(HbfError::DimensionMismatch { context, details })
    }
}

/// Modified MSE matrix `T = E{(β^{-1}y - s)(β^{-1}y - s)^H}` for overall
/// beamformers `v` (power included) and `w`.
pub fn mse_matrix_overall(h: &CMat, v: &CMat, w: &CMat, beta: f64, sigma2: f64) -> Result<CMat> {
    check_dims(
        "mse_matrix",
        h.nrows() == w.nrows() && h.ncols() == v.nrows() && v.ncols() == w.ncols(),
        format!(
            "H {}x{}, V {}x{}, W {}x{}",
            h.nrows(),
            h.ncols(),
            v.nrows(),
            v.ncols(),
            w.nrows(),
            w.ncols()
        ),
    )?;
    if !(beta > 0.0) {
        return Err(HbfError::InvalidInput("beta must be positive".into()));
    }
    let n_s = v.ncols();
    let e = w.adjoint() * h * v; // W^H H V
    let ib = 1.0 / beta;
    let t = scale(&(&e * e.adjoint()), ib * ib) - scale(&e, ib) - scale(&e.adjoint(), ib)
        + scale(&(w.adjoint() * w), sigma2 * ib * ib)
        + identity(n_s);
    Ok(hermitianize(&t))
}

/// Modified MSE matrix from the hybrid factors; `v_dig` is the unnormalized
/// digital precoder.
pub fn mse_matrix(
    h: &CMat,
    v_rf: &CMat,
    v_dig: &CMat,
    w_rf: &CMat,
    w_dig: &CMat,
    beta: f64,
    sigma2: f64,
) -> Result<CMat> {
    let v = scale(&(v_rf * v_dig), beta);
    let w = w_rf * w_dig;
    mse_matrix_overall(h, &v, &w, beta, sigma2)
}

/// Modified MSE, the trace of [`mse_matrix`].
pub fn modified_mse(
    h: &CMat,
    v_rf: &CMat,
    v_dig: &CMat,
    w_rf: &CMat,
    w_dig: &CMat,
    beta: f64,
    sigma2: f64,
) -> Result<f64> {
    Ok(trace_re(&mse_matrix(h, v_rf, v_dig, w_rf, w_dig, beta, sigma2)?))
}

/// Sum of per-subcarrier modified MSEs — the broadband objective.
pub fn sum_mse(channels: &[CMat], t: &impl Transceiver, sigma2: f64) -> Result<f64> {
    let mut acc = 0.0;
    for (k, h) in channels.iter().enumerate() {
        let tm = mse_matrix_overall(h, &t.precoder(k), &t.combiner(k), t.beta(k), sigma2)?;
        acc += trace_re(&tm);
    }
    Ok(acc)
}

/// Scaling factor meeting the transmit power constraint with equality:
/// `β = tr(V_RF V_U V_U^H V_RF^H)^{-1/2}`.
pub fn optimal_beta(v_rf: &CMat, v_dig: &CMat) -> Result<f64> {
    let power = (v_rf * v_dig).norm_squared();
    if power <= 0.0 || !power.is_finite() {
        return Err(HbfError::ZeroPrecoder);
    }
    Ok(1.0 / power.sqrt())
}

/// Closed-form digital precoder given the analog part.
///
/// Unweighted: `V_U = (V^H H1 H1^H V + σ²w V^H V)^{-1} V^H H1` with
/// `w = tr(W^H W)`. With a weight `Λ` the Gram becomes
/// `V^H H1 Λ H1^H V + σ²ψ V^H V` and the right factor `V^H H1 Λ`, where the
/// caller passes `ψ = tr(Λ W^H W)` in `noise_weight`.
pub fn optimal_digital_precoder(
    v_rf: &CMat,
    h1: &CMat,
    sigma2: f64,
    noise_weight: f64,
    weight: Option<&CMat>,
) -> Result<CMat> {
    check_dims(
        "optimal_digital_precoder",
        v_rf.nrows() == h1.nrows(),
        format!("V_RF has {} rows, H1 has {}", v_rf.nrows(), h1.nrows()),
    )?;
    if !(noise_weight > 0.0) {
        return Err(HbfError::InvalidInput(
            "noise weight must be positive".into(),
        ));
    }
    let s = v_rf.adjoint() * h1; // V^H H1
    let gram = v_rf.adjoint() * v_rf;
    match weight {
        None => {
            let a = &s * s.adjoint() + scale(&gram, sigma2 * noise_weight);
            herm_solve(&a, &s)
        }
        Some(lambda) => {
            let sl = &s * lambda;
            let a = &sl * s.adjoint() + scale(&gram, sigma2 * noise_weight);
            herm_solve(&hermitianize(&a), &sl)
        }
    }
}

/// Closed-form digital combiner given the analog part:
/// `W_B = (W^H H2 H2^H W + σ²β^{-2} W^H W)^{-1} W^H H2`.
///
/// The weighted combiner sub-problem has the same solution — the weight
/// matrix cancels — so no weight argument exists.
pub fn optimal_digital_combiner(w_rf: &CMat, h2: &CMat, sigma2: f64, beta: f64) -> Result<CMat> {
    check_dims(
        "optimal_digital_combiner",
        w_rf.nrows() == h2.nrows(),
        format!("W_RF has {} rows, H2 has {}", w_rf.nrows(), h2.nrows()),
    )?;
    if !(beta > 0.0) {
        return Err(HbfError::InvalidInput("beta must be positive".into()));
    }
    let s = w_rf.adjoint() * h2;
    let gram = w_rf.adjoint() * w_rf;
    let a = &s * s.adjoint() + scale(&gram, sigma2 / (beta * beta));
    herm_solve(&a, &s)
}

/// Digital precoder as in [`optimal_digital_precoder`] but taking the
/// minimal-norm KKT solution when the analog matrix is rank deficient
/// (phase-extraction solvers can emit duplicate columns at very low SNR;
/// the redundant direction then carries no power).
pub(crate) fn digital_precoder_min_norm(
    v_rf: &CMat,
    h1: &CMat,
    sigma2: f64,
    noise_weight: f64,
    weight: Option<&CMat>,
) -> CMat {
    let s = v_rf.adjoint() * h1;
    let gram = v_rf.adjoint() * v_rf;
    match weight {
        None => {
            let a = &s * s.adjoint() + scale(&gram, sigma2 * noise_weight);
            herm_pseudo_solve(&a, &s)
        }
        Some(lambda) => {
            let sl = &s * lambda;
            let a = &sl * s.adjoint() + scale(&gram, sigma2 * noise_weight);
            herm_pseudo_solve(&hermitianize(&a), &sl)
        }
    }
}

/// Digital combiner as in [`optimal_digital_combiner`], minimal-norm form.
pub(crate) fn digital_combiner_min_norm(
    w_rf: &CMat,
    h2: &CMat,
    sigma2: f64,
    beta: f64,
) -> CMat {
    let s = w_rf.adjoint() * h2;
    let gram = w_rf.adjoint() * w_rf;
    let a = &s * s.adjoint() + scale(&gram, sigma2 / (beta * beta));
    herm_pseudo_solve(&a, &s)
}

/// One side's analog design problem once the digital part is optimized out:
/// `J(B) = Σ_k tr((M_k + (1/c_k) F_k^H B (B^H B)^{-1} B^H F_k)^{-1})`.
#[derive(Debug, Clone)]
pub struct ReducedObjective {
    /// Effective channels `F_k`, one per subcarrier, `n_ant x n_streams`.
    pub eff_channels: Vec<CMat>,
    /// Noise coefficients `c_k > 0`.
    pub noise_coeffs: Vec<f64>,
    /// Constant Hermitian PD blocks `M_k`; `None` means identity. The
    /// precoder side uses `Λ_k^{-1}`, the whitened combiner side
    /// `L_k^{-1} L_k^{-H}`.
    pub weight_invs: Option<Vec<CMat>>,
}

impl ReducedObjective {
    pub fn new(
        eff_channels: Vec<CMat>,
        noise_coeffs: Vec<f64>,
        weight_invs: Option<Vec<CMat>>,
    ) -> Result<Self> {
        if eff_channels.is_empty() || eff_channels.len() != noise_coeffs.len() {
            return Err(HbfError::DimensionMismatch {
                context: "ReducedObjective",
                details: "need one effective channel and coefficient per subcarrier".into(),
            });
        }
        if noise_coeffs.iter().any(|&c| !(c > 0.0)) {
            return Err(HbfError::InvalidInput(
                "noise coefficients must be positive".into(),
            ));
        }
        if let Some(ms) = &weight_invs {
            if ms.len() != eff_channels.len() {
                return Err(HbfError::DimensionMismatch {
                    context: "ReducedObjective",
                    details: "need one weight per subcarrier".into(),
                });
            }
        }
        Ok(ReducedObjective {
            eff_channels,
            noise_coeffs,
            weight_invs,
        })
    }

    /// Precoder side: `F_k = H1_k`, `c_k = σ² w_k` (or `σ² ψ_k` weighted).
    pub fn precoder(
        h1s: &[CMat],
        sigma2: f64,
        noise_weights: &[f64],
        weights: Option<&[CMat]>,
    ) -> Result<Self> {
        let coeffs = noise_weights.iter().map(|w| sigma2 * w).collect();
        let weight_invs = match weights {
            None => None,
            Some(ls) => Some(
                ls.iter()
                    .map(|l| herm_solve(l, &identity(l.nrows())))
                    .collect::<Result<Vec<_>>>()?,
            ),
        };
        Self::new(h1s.to_vec(), coeffs, weight_invs)
    }

    /// Combiner side: `F_k = H2_k`, `c_k = σ² / β_k²`. With weights `Λ_k =
    /// L L^H`, the objective `tr(Λ (I + (β²/σ²) X)^{-1})` is rewritten in the
    /// reduced form through the congruence `L^{-1} (·) L^{-H}`, giving the
    /// whitened channel `H2_k L_k^{-H}` and the constant block
    /// `M_k = L^{-1} L^{-H}`.
    pub fn combiner(
        h2s: &[CMat],
        sigma2: f64,
        betas: &[f64],
        weights: Option<&[CMat]>,
    ) -> Result<Self> {
        if betas.iter().any(|&b| !(b > 0.0)) {
            return Err(HbfError::InvalidInput("betas must be positive".into()));
        }
        let coeffs = betas.iter().map(|b| sigma2 / (b * b)).collect();
        match weights {
            None => Self::new(h2s.to_vec(), coeffs, None),
            Some(ls) => {
                let mut eff = Vec::with_capacity(h2s.len());
                let mut blocks = Vec::with_capacity(h2s.len());
                for (h2, l) in h2s.iter().zip(ls) {
                    let chol = crate::linalg::herm_cholesky(l)
                        .ok_or(HbfError::NotPositiveDefinite("weight matrix"))?;
                    let lfac = chol.l();
                    // F = H2 L^{-H}: solve L Y = H2^H, then F = Y^H.
                    let y = lfac
                        .solve_lower_triangular(&h2.adjoint())
                        .ok_or(HbfError::SingularSystem { rcond: 0.0 })?;
                    eff.push(y.adjoint());
                    let l_inv = lfac
                        .solve_lower_triangular(&identity(l.nrows()))
                        .ok_or(HbfError::SingularSystem { rcond: 0.0 })?;
                    blocks.push(hermitianize(&(&l_inv * l_inv.adjoint())));
                }
                Self::new(eff, coeffs, Some(blocks))
            }
        }
    }

    pub fn n_ant(&self) -> usize {
        self.eff_channels[0].nrows()
    }

    pub fn n_streams(&self) -> usize {
        self.eff_channels[0].ncols()
    }

    pub fn num_subcarriers(&self) -> usize {
        self.eff_channels.len()
    }

    pub fn weight_inv_at(&self, k: usize) -> CMat {
        match &self.weight_invs {
            Some(ms) => ms[k].clone(),
            None => identity(self.n_streams()),
        }
    }

    /// Objective value at analog matrix `b`.
    ///
    /// The Gram inverse is evaluated in the minimal-norm sense, so the value
    /// extends continuously to rank-deficient `b` (the span-restricted
    /// optimum); solvers can pass through such points without failing.
    pub fn value(&self, b: &CMat) -> Result<f64> {
        let gram = b.adjoint() * b;
        let mut total = 0.0;
        for (k, f) in self.eff_channels.iter().enumerate() {
            let s = b.adjoint() * f; // B^H F
            let gs = herm_pseudo_solve(&gram, &s); // G^{-1} B^H F
            let x = s.adjoint() * &gs;
            let p = self.weight_inv_at(k) + scale(&x, 1.0 / self.noise_coeffs[k]);
            total += herm_inv_trace(&hermitianize(&p))?;
        }
        Ok(total)
    }

    /// Euclidean conjugate gradient `∂J/∂B*`:
    /// `Σ_k (1/c_k)(B G^{-1} B^H - I) F_k P_k^{-2} F_k^H B G^{-1}`.
    pub fn euclidean_grad(&self, b: &CMat) -> Result<CMat> {
        let gram = b.adjoint() * b;
        let mut grad = CMat::zeros(b.nrows(), b.ncols());
        for (k, f) in self.eff_channels.iter().enumerate() {
            let s = b.adjoint() * f;
            let gs = herm_pseudo_solve(&gram, &s); // G^{-1} B^H F
            let x = s.adjoint() * &gs;
            let p = hermitianize(
                &(self.weight_inv_at(k) + scale(&x, 1.0 / self.noise_coeffs[k])),
            );
            // Q = P^{-2} (F^H B G^{-1})
            let z = gs.adjoint(); // F^H B G^{-1}
            let q = herm_solve(&p, &herm_solve(&p, &z)?)?;
            let a = f * q; // F P^{-2} F^H B G^{-1}
            let bha = b.adjoint() * &a;
            let proj = b * herm_pseudo_solve(&gram, &bha); // B G^{-1} B^H A
            grad += scale(&(proj - a), 1.0 / self.noise_coeffs[k]);
        }
        Ok(grad)
    }

    /// Objective under the large-array orthogonality approximation
    /// `B^H B ≈ n_ant I`:
    /// `Σ_k tr((M_k + (1/(c_k n_ant)) F_k^H B B^H F_k)^{-1})`.
    pub fn orth_value(&self, b: &CMat) -> Result<f64> {
        let n_ant = self.n_ant() as f64;
        let mut total = 0.0;
        for (k, f) in self.eff_channels.iter().enumerate() {
            let s = b.adjoint() * f;
            let x = s.adjoint() * &s;
            let p = self.weight_inv_at(k) + scale(&x, 1.0 / (self.noise_coeffs[k] * n_ant));
            total += herm_inv_trace(&hermitianize(&p))?;
        }
        Ok(total)
    }
}

/// Reduced precoder objective `J(V_RF)`; see [`ReducedObjective`].
pub fn reduced_objective_j(
    v_rf: &CMat,
    h1s: &[CMat],
    sigma2: f64,
    noise_weights: &[f64],
    weights: Option<&[CMat]>,
) -> Result<f64> {
    ReducedObjective::precoder(h1s, sigma2, noise_weights, weights)?.value(v_rf)
}

/// Reduced combiner objective `I(W_RF)`, the same functional form as `J`
/// under `H1 -> H2`, `1/(σ²w) -> β²/σ²`.
pub fn reduced_objective_i(
    w_rf: &CMat,
    h2s: &[CMat],
    sigma2: f64,
    betas: &[f64],
    weights: Option<&[CMat]>,
) -> Result<f64> {
    ReducedObjective::combiner(h2s, sigma2, betas, weights)?.value(w_rf)
}

/// Spectral efficiency in bits/s/Hz, averaged over subcarriers:
/// `R_k = log2 det(I + σ^{-2} (W^H W)^{-1} W^H H V V^H H^H W)`.
///
/// Evaluated through the projector onto the combiner column space
/// (`det(I + AB) = det(I + BA)`), which is algebraically identical for a
/// full-rank combiner and remains the continuous limit when the MSE optimum
/// switches a stream off and `W^H W` degenerates. A zero combiner yields
/// zero rate.
pub fn spectral_efficiency(channels: &[CMat], t: &impl Transceiver, sigma2: f64) -> Result<f64> {
    let mut acc = 0.0;
    for (k, h) in channels.iter().enumerate() {
        let v = t.precoder(k);
        let w = t.combiner(k);
        if w.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(HbfError::CombinerRankDeficient);
        }
        let n_s = v.ncols();
        let qr = w.col_piv_qr();
        let r = qr.r();
        let rmax = (0..r.nrows().min(r.ncols()))
            .map(|i| r[(i, i)].norm())
            .fold(0.0f64, f64::max);
        let rank = (0..r.nrows().min(r.ncols()))
            .take_while(|&i| r[(i, i)].norm() > 1e-12 * rmax)
            .count();
        if rank == 0 {
            continue; // zero combiner: zero rate on this subcarrier
        }
        let q = qr.q();
        let g = q.columns(0, rank).adjoint() * h * &v; // Q_r^H H V
        let inner = identity(n_s) + scale(&(g.adjoint() * &g), 1.0 / sigma2);
        acc += herm_pd_ln_det(&inner)? / std::f64::consts::LN_2;
    }
    Ok(acc / channels.len() as f64)
}

/// Optimal WMMSE weight `Λ = T^{-1}`.
///
/// Eigenvalues of `T` below 1e-10 are clamped before inversion; the returned
/// flag reports whether clamping occurred.
pub fn optimal_weight(t: &CMat) -> Result<(CMat, bool)> {
    let (vals, vecs) = herm_eigen_desc(t);
    let mut clamped = false;
    let inv_vals: Vec<f64> = vals
        .iter()
        .map(|&v| {
            if v < 1e-10 {
                clamped = true;
                1.0 / 1e-10
            } else {
                1.0 / v
            }
        })
        .collect();
    let d = CMat::from_diagonal(&nalgebra::DVector::from_iterator(
        inv_vals.len(),
        inv_vals.iter().map(|&v| cx(v, 0.0)),
    ));
    Ok((hermitianize(&(&vecs * d * vecs.adjoint())), clamped))
}

/// Power allocation minimizing `Σ_i σ²/(p_i s_i² + σ²)` over the simplex.
///
/// KKT water-filling with active-set clipping; `svals` must be sorted in
/// descending order.
pub fn water_fill(svals: &[f64], sigma2: f64) -> Vec<f64> {
    let n = svals.len();
    let mut active: Vec<usize> = (0..n).filter(|&i| svals[i] > 0.0).collect();
    if active.is_empty() {
        return vec![1.0 / n as f64; n];
    }
    loop {
        let inv_s: f64 = active.iter().map(|&i| 1.0 / svals[i]).sum();
        let inv_s2: f64 = active.iter().map(|&i| 1.0 / (svals[i] * svals[i])).sum();
        let mu = (1.0 + sigma2 * inv_s2) / inv_s;
        let p_last = {
            let i = *active.last().unwrap();
            mu / svals[i] - sigma2 / (svals[i] * svals[i])
        };
        if p_last >= 0.0 || active.len() == 1 {
            let mut p = vec![0.0; n];
            for &i in &active {
                p[i] = (mu / svals[i] - sigma2 / (svals[i] * svals[i])).max(0.0);
            }
            // Exact renormalization against accumulated round-off.
            let total: f64 = p.iter().sum();
            if total > 0.0 {
                for x in &mut p {
                    *x /= total;
                }
            }
            return p;
        }
        active.pop();
    }
}

/// Unconstrained per-subcarrier MMSE transceiver: top singular vectors of
/// each `H_k` with water-filled power, the matching Wiener combiner, β = 1.
pub fn full_digital_mmse(channels: &[CMat], dims: &SystemDims) -> Result<FullDigitalBeamformer> {
    let n_s = dims.n_streams;
    let mut vs = Vec::with_capacity(channels.len());
    let mut ws = Vec::with_capacity(channels.len());
    for h in channels {
        check_dims(
            "full_digital_mmse",
            h.nrows() == dims.n_rx && h.ncols() == dims.n_tx,
            format!("channel is {}x{}", h.nrows(), h.ncols()),
        )?;
        let svd = h.clone().svd(true, true);
        let v_full = svd.v_t.as_ref().unwrap().adjoint();
        let svals: Vec<f64> = svd.singular_values.iter().take(n_s).copied().collect();
        let p = water_fill(&svals, dims.noise_var);
        let mut v = CMat::zeros(dims.n_tx, n_s);
        for i in 0..n_s {
            let mut col: nalgebra::DVector<crate::linalg::C64> = v_full.column(i).into();
            crate::linalg::canonicalize_phase(&mut col);
            v.set_column(i, &(col * cx(p[i].sqrt(), 0.0)));
        }
        let hv = h * &v;
        let a = &hv * hv.adjoint() + scale(&identity(dims.n_rx), dims.noise_var);
        let w = herm_solve(&a, &hv)?;
        vs.push(v);
        ws.push(w);
    }
    Ok(FullDigitalBeamformer { v: vs, w: ws })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::CVec;
    use crate::rng::{complex_gaussian_matrix, derive_rng, uniform_phase_matrix};
    use rand::Rng;

    fn cmat1(z: f64) -> CMat {
        CMat::from_element(1, 1, cx(z, 0.0))
    }

    #[test]
    fn mse_matrix_trivial_cases() {
        // Perfect noiseless equalization: T = 0.
        let h = identity(2);
        let v = identity(2);
        let w = identity(2);
        let t = mse_matrix_overall(&h, &v, &w, 1.0, 0.0).unwrap();
        assert!(t.norm() < 1e-14);

        // Zero beamformers: T = I, MSE = N_s.
        let t = mse_matrix_overall(&h, &CMat::zeros(2, 2), &CMat::zeros(2, 2), 1.0, 0.5).unwrap();
        assert!((t - identity(2)).norm() < 1e-14);

        // Scalar h = v = w = beta = 1, sigma2 = 1: T = [1].
        let t = mse_matrix_overall(&cmat1(1.0), &cmat1(1.0), &cmat1(1.0), 1.0, 1.0).unwrap();
        assert!((t[(0, 0)].re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn mse_matrix_is_psd() {
        let mut rng = derive_rng(10, 60, 0);
        for _ in 0..20 {
            let h = complex_gaussian_matrix(&mut rng, 4, 6);
            let v = complex_gaussian_matrix(&mut rng, 6, 2);
            let v = scale(&v, 1.0 / v.norm());
            let w = complex_gaussian_matrix(&mut rng, 4, 2);
            let t = mse_matrix_overall(&h, &v, &w, 1.0, 0.3).unwrap();
            let (vals, _) = herm_eigen_desc(&t);
            assert!(vals.iter().all(|&l| l >= -1e-10), "eigs {vals:?}");
        }
    }

    #[test]
    fn optimal_beta_examples() {
        // tr = 4 -> beta = 0.5 (2x2 identity scaled by 1: use V_RF = I*2^0)
        let v_rf = scale(&identity(2), 2.0_f64.sqrt());
        let v_dig = scale(&identity(2), 2.0_f64.sqrt() / 2.0_f64.sqrt());
        // ||v_rf * v_dig||^2 = 4 after scaling both appropriately
        let v_rf = scale(&v_rf, 2.0_f64.sqrt());
        let _ = v_rf;
        let v = scale(&identity(2), 2.0_f64.sqrt()); // ||V||^2 = 4
        assert!((optimal_beta(&v, &identity(2)).unwrap() - 0.5).abs() < 1e-14);
        let _ = v_dig;

        // Orthonormal product with N_s = 2 -> trace 2 -> beta = 1/sqrt(2).
        let b = optimal_beta(&identity(4), &identity(4).columns(0, 2).into()).unwrap();
        assert!((b - 1.0 / 2.0_f64.sqrt()).abs() < 1e-14);

        // Any input: power after scaling is 1.
        let mut rng = derive_rng(11, 60, 1);
        for _ in 0..10 {
            let v_rf = uniform_phase_matrix(&mut rng, 6, 3);
            let v_dig = complex_gaussian_matrix(&mut rng, 3, 2);
            let beta = optimal_beta(&v_rf, &v_dig).unwrap();
            let power = scale(&(&v_rf * &v_dig), beta).norm_squared();
            assert!((power - 1.0).abs() < 1e-12);
        }

        assert!(matches!(
            optimal_beta(&identity(2), &CMat::zeros(2, 2)),
            Err(HbfError::ZeroPrecoder)
        ));
    }

    #[test]
    fn digital_precoder_scalar_and_weight_reduction() {
        // Scalar: V_RF = 1, H1 = 2, sigma2 w = 1 -> V_U = 2/5.
        let v = optimal_digital_precoder(&cmat1(1.0), &cmat1(2.0), 1.0, 1.0, None).unwrap();
        assert!((v[(0, 0)].re - 0.4).abs() < 1e-14);

        // Weight = I reduces to the unweighted form exactly.
        let mut rng = derive_rng(12, 60, 2);
        let v_rf = uniform_phase_matrix(&mut rng, 8, 3);
        let h1 = complex_gaussian_matrix(&mut rng, 8, 2);
        let unweighted = optimal_digital_precoder(&v_rf, &h1, 0.3, 1.7, None).unwrap();
        let weighted =
            optimal_digital_precoder(&v_rf, &h1, 0.3, 1.7, Some(&identity(2))).unwrap();
        assert!((unweighted - weighted).norm() < 1e-12);
    }

    /// Problem-6 objective as a pure function of V_U with the power
    /// constraint tight: f = ||H1^H V_RF V_U - I||² + σ²w ||V_RF V_U||².
    fn precoder_subproblem_objective(v_rf: &CMat, v_u: &CMat, h1: &CMat, s2w: f64) -> f64 {
        let v = v_rf * v_u;
        let e = h1.adjoint() * &v - identity(h1.ncols());
        e.norm_squared() + s2w * v.norm_squared()
    }

    #[test]
    fn digital_precoder_is_stationary() {
        let mut rng = derive_rng(13, 60, 3);
        for _ in 0..20 {
            let v_rf = uniform_phase_matrix(&mut rng, 8, 3);
            let h1 = complex_gaussian_matrix(&mut rng, 8, 2);
            let sigma2 = 0.5;
            let w = 2.0;
            let v_u = optimal_digital_precoder(&v_rf, &h1, sigma2, w, None).unwrap();
            let base = precoder_subproblem_objective(&v_rf, &v_u, &h1, sigma2 * w);
            for _ in 0..20 {
                let dir = complex_gaussian_matrix(&mut rng, 3, 2);
                let dir = scale(&dir, 1.0 / dir.norm());
                let perturbed = &v_u + scale(&dir, 1e-4);
                let val = precoder_subproblem_objective(&v_rf, &perturbed, &h1, sigma2 * w);
                assert!(val >= base - 1e-8, "decreased by {}", base - val);
            }
        }
    }

    #[test]
    fn digital_combiner_scalar_stationary_and_invariant() {
        let w = optimal_digital_combiner(&cmat1(1.0), &cmat1(2.0), 1.0, 1.0).unwrap();
        assert!((w[(0, 0)].re - 0.4).abs() < 1e-14);

        // MSE stationarity under perturbations of W_B.
        let mut rng = derive_rng(14, 60, 4);
        let h = complex_gaussian_matrix(&mut rng, 5, 6);
        let v = complex_gaussian_matrix(&mut rng, 6, 2);
        let v = scale(&v, 1.0 / v.norm());
        let w_rf = uniform_phase_matrix(&mut rng, 5, 3);
        let beta = 0.8;
        let h2 = &h * &v; // effective channel (overall V includes beta below)
        let w_b = optimal_digital_combiner(&w_rf, &h2, 0.4, beta).unwrap();
        let overall = scale(&v, beta);
        let base = trace_re(
            &mse_matrix_overall(&h, &overall, &(&w_rf * &w_b), beta, 0.4).unwrap(),
        );
        for _ in 0..20 {
            let dir = complex_gaussian_matrix(&mut rng, 3, 2);
            let dir = scale(&dir, 1e-4 / dir.norm());
            let wb2 = &w_b + dir;
            let val = trace_re(
                &mse_matrix_overall(&h, &overall, &(&w_rf * &wb2), beta, 0.4).unwrap(),
            );
            assert!(val >= base - 1e-8);
        }

        // Unit-modulus diagonal rescaling of W_RF leaves W_RF W_B unchanged.
        let phases: Vec<f64> = (0..3).map(|_| rng.gen::<f64>() * std::f64::consts::TAU).collect();
        let d = CMat::from_diagonal(&CVec::from_iterator(
            3,
            phases.iter().map(|&p| cx(p.cos(), p.sin())),
        ));
        let w_rf2 = &w_rf * &d;
        let w_b2 = optimal_digital_combiner(&w_rf2, &h2, 0.4, beta).unwrap();
        assert!((&w_rf * &w_b - w_rf2 * w_b2).norm() < 1e-10);
    }

    #[test]
    fn reduced_j_values() {
        // Scalar: h1 = 2, sigma2 w = 1, v_rf = 1 -> 1/(1+4) = 0.2.
        let j = reduced_objective_j(&cmat1(1.0), &[cmat1(2.0)], 1.0, &[1.0], None).unwrap();
        assert!((j - 0.2).abs() < 1e-14);

        // H1 = 0 -> J = N * N_s.
        let mut rng = derive_rng(15, 60, 5);
        let v_rf = uniform_phase_matrix(&mut rng, 8, 3);
        let zeros = vec![CMat::zeros(8, 2); 4];
        let j = reduced_objective_j(&v_rf, &zeros, 0.7, &[1.0; 4], None).unwrap();
        assert!((j - 8.0).abs() < 1e-12);
    }

    #[test]
    fn plug_in_equality_precoder_and_combiner() {
        let mut rng = derive_rng(16, 60, 6);
        for _ in 0..50 {
            let n_t = 8;
            let n_r = 6;
            let n_rf = 3;
            let n_s = 2;
            let sigma2 = 0.4;
            let h = complex_gaussian_matrix(&mut rng, n_r, n_t);
            let w_overall = complex_gaussian_matrix(&mut rng, n_r, n_s);
            let h1 = h.adjoint() * &w_overall;
            let w = w_overall.norm_squared();
            let v_rf = uniform_phase_matrix(&mut rng, n_t, n_rf);
            let v_u = optimal_digital_precoder(&v_rf, &h1, sigma2, w, None).unwrap();
            let beta = optimal_beta(&v_rf, &v_u).unwrap();
            let v_overall = scale(&(&v_rf * &v_u), beta);
            let t = mse_matrix_overall(&h, &v_overall, &w_overall, beta, sigma2).unwrap();
            let j = reduced_objective_j(&v_rf, &[h1.clone()], sigma2, &[w], None).unwrap();
            assert!((trace_re(&t) - j).abs() < 1e-9, "precoder plug-in");

            // Combiner side: fix the precoder just built, optimize W_B.
            let w_rf = uniform_phase_matrix(&mut rng, n_r, n_rf);
            let h2 = &h * &v_rf * &v_u;
            let w_b = optimal_digital_combiner(&w_rf, &h2, sigma2, beta).unwrap();
            let t = mse_matrix_overall(&h, &v_overall, &(&w_rf * &w_b), beta, sigma2).unwrap();
            let i = reduced_objective_i(&w_rf, &[h2], sigma2, &[beta], None).unwrap();
            assert!((trace_re(&t) - i).abs() < 1e-9, "combiner plug-in");
        }
    }

    #[test]
    fn weighted_combiner_objective_matches_direct_form() {
        // tr(Λ (I + (β²/σ²) X)^{-1}) computed directly vs the whitened
        // reduced form.
        let mut rng = derive_rng(17, 60, 7);
        for _ in 0..20 {
            let h2 = complex_gaussian_matrix(&mut rng, 6, 2);
            let w_rf = uniform_phase_matrix(&mut rng, 6, 3);
            let beta = 0.9;
            let sigma2 = 0.5;
            let a = complex_gaussian_matrix(&mut rng, 2, 2);
            let lambda = &a * a.adjoint() + scale(&identity(2), 0.3);

            let i_reduced =
                reduced_objective_i(&w_rf, &[h2.clone()], sigma2, &[beta], Some(&[lambda.clone()]))
                    .unwrap();

            let gram = w_rf.adjoint() * &w_rf;
            let s = w_rf.adjoint() * &h2;
            let x = s.adjoint() * herm_solve(&gram, &s).unwrap();
            let inner = identity(2) + scale(&x, beta * beta / sigma2);
            let inv = herm_solve(&hermitianize(&inner), &identity(2)).unwrap();
            let direct = trace_re(&(&lambda * inv));
            assert!((i_reduced - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn weighted_identity_equals_unweighted() {
        let mut rng = derive_rng(18, 60, 8);
        let h1s: Vec<CMat> = (0..3).map(|_| complex_gaussian_matrix(&mut rng, 8, 2)).collect();
        let v_rf = uniform_phase_matrix(&mut rng, 8, 3);
        let ws = [1.3, 0.7, 2.2];
        let eye = vec![identity(2); 3];
        let a = reduced_objective_j(&v_rf, &h1s, 0.6, &ws, None).unwrap();
        let b = reduced_objective_j(&v_rf, &h1s, 0.6, &ws, Some(&eye)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn j_nonincreasing_in_snr() {
        let mut rng = derive_rng(19, 60, 9);
        for _ in 0..20 {
            let h1s: Vec<CMat> = (0..2).map(|_| complex_gaussian_matrix(&mut rng, 8, 2)).collect();
            let v_rf = uniform_phase_matrix(&mut rng, 8, 3);
            let mut prev = f64::INFINITY;
            for &s2 in &[2.0, 1.0, 0.5, 0.1, 0.01] {
                let j = reduced_objective_j(&v_rf, &h1s, s2, &[1.0, 1.0], None).unwrap();
                assert!(j <= prev + 1e-12);
                prev = j;
            }
        }
    }

    #[test]
    fn spectral_efficiency_cases() {
        // Zero effective link -> R = 0? W = 0 makes W^H W singular, so use
        // orthogonal W to H V instead: take V in the null space of W^H H.
        let h = CMat::zeros(3, 3);
        let fd = FullDigitalBeamformer {
            v: vec![scale(&identity(3).columns(0, 1).into(), 1.0)],
            w: vec![identity(3).columns(0, 1).into()],
        };
        let r = spectral_efficiency(&[h], &fd, 0.5).unwrap();
        assert!(r.abs() < 1e-12);

        // Scalar reduction: R = log2(1 + |w^H h v|² / (σ² ||w||²)).
        let h = cmat1(2.0);
        let fd = FullDigitalBeamformer {
            v: vec![cmat1(1.0)],
            w: vec![cmat1(0.7)],
        };
        let r = spectral_efficiency(&[h], &fd, 0.5).unwrap();
        let expect = (1.0 + (0.7f64 * 2.0).powi(2) / (0.5 * 0.49)).log2();
        assert!((r - expect).abs() < 1e-12);
    }

    #[test]
    fn mmse_combiner_rate_identity() {
        // With the MMSE combiner, R = -log2 det(T).
        let mut rng = derive_rng(20, 60, 10);
        for _ in 0..50 {
            let h = complex_gaussian_matrix(&mut rng, 6, 5);
            let dims = SystemDims::new(5, 6, 2, 2, 1, 0.4).unwrap();
            let fd = full_digital_mmse(&[h.clone()], &dims).unwrap();
            let r = spectral_efficiency(&[h.clone()], &fd, 0.4).unwrap();
            let t = mse_matrix_overall(&h, &fd.v[0], &fd.w[0], 1.0, 0.4).unwrap();
            let neg_log = -herm_pd_ln_det(&t).unwrap() / std::f64::consts::LN_2;
            assert!((r - neg_log).abs() < 1e-9, "r={r} neglog={neg_log}");
        }
    }

    #[test]
    fn optimal_weight_cases() {
        let (l, clamped) = optimal_weight(&identity(2)).unwrap();
        assert!(!clamped);
        assert!((l - identity(2)).norm() < 1e-12);

        let t = CMat::from_diagonal(&CVec::from_vec(vec![cx(0.5, 0.0), cx(0.25, 0.0)]));
        let (l, _) = optimal_weight(&t).unwrap();
        assert!((l[(0, 0)].re - 2.0).abs() < 1e-12);
        assert!((l[(1, 1)].re - 4.0).abs() < 1e-12);

        // Objective identity: tr(ΛT) - ln det Λ at Λ = T^{-1} equals
        // N_s + ln det T.
        let mut rng = derive_rng(21, 60, 11);
        for _ in 0..50 {
            let a = complex_gaussian_matrix(&mut rng, 3, 3);
            let t = &a * a.adjoint() + scale(&identity(3), 0.1);
            let (l, _) = optimal_weight(&t).unwrap();
            let obj = trace_re(&(&l * &t)) - herm_pd_ln_det(&l).unwrap();
            let expect = 3.0 + herm_pd_ln_det(&t).unwrap();
            assert!((obj - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn water_fill_cases() {
        // Equal singular values split evenly.
        let p = water_fill(&[2.0, 2.0], 0.5);
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12);

        // Very weak second channel gets clipped to zero at low SNR.
        let p = water_fill(&[10.0, 1e-3], 1.0);
        assert!(p[1] == 0.0 && (p[0] - 1.0).abs() < 1e-12);

        // Allocation sums to one.
        let p = water_fill(&[3.0, 2.0, 0.5], 0.2);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_digital_scalar_aligns_phase() {
        let h = CMat::from_element(1, 1, cx(0.6, -0.8));
        let dims = SystemDims::new(1, 1, 1, 1, 1, 0.5).unwrap();
        let fd = full_digital_mmse(&[h.clone()], &dims).unwrap();
        // Full power on the single stream.
        assert!((fd.v[0].norm() - 1.0).abs() < 1e-12);
        // The effective link w^H h v is real positive: the channel phase is
        // absorbed by the transceiver pair.
        let g = (fd.w[0].adjoint() * h * &fd.v[0])[(0, 0)];
        assert!(g.im.abs() < 1e-12 && g.re > 0.0, "g = {g}");
    }

    #[test]
    fn full_digital_equal_singular_values_split_power() {
        // Unitary channel: all singular values equal -> p = 1/2 each.
        let h = identity(4);
        let dims = SystemDims::new(4, 4, 2, 2, 1, 0.3).unwrap();
        let fd = full_digital_mmse(&[h], &dims).unwrap();
        let c0 = fd.v[0].column(0).norm_squared();
        let c1 = fd.v[0].column(1).norm_squared();
        assert!((c0 - 0.5).abs() < 1e-10 && (c1 - 0.5).abs() < 1e-10);
    }

    #[test]
    fn water_fill_matches_grid_search() {
        let mut rng = derive_rng(22, 60, 12);
        for _ in 0..20 {
            let h = complex_gaussian_matrix(&mut rng, 4, 4);
            let svd = h.svd(false, false);
            let s: Vec<f64> = svd.singular_values.iter().take(2).copied().collect();
            let sigma2 = 0.5;
            let p = water_fill(&s, sigma2);
            let obj = |p0: f64| {
                sigma2 / (p0 * s[0] * s[0] + sigma2) + sigma2 / ((1.0 - p0) * s[1] * s[1] + sigma2)
            };
            let ours = obj(p[0]);
            let best_grid = (0..=1000)
                .map(|i| obj(i as f64 / 1000.0))
                .fold(f64::INFINITY, f64::min);
            assert!(ours <= best_grid + 1e-3);
        }
    }

    #[test]
    fn dims_validation() {
        assert!(SystemDims::new(16, 16, 2, 2, 1, 0.1).is_ok());
        assert!(SystemDims::new(16, 16, 1, 2, 1, 0.1).is_err());
        assert!(SystemDims::new(2, 16, 4, 2, 1, 0.1).is_err());
        assert!(SystemDims::new(16, 16, 2, 2, 1, 0.0).is_err());
    }
}

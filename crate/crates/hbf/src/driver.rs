//! Alternating minimization between the transmit and receive hybrid
//! beamformers.
//!
//! Each outer iteration solves the precoder sub-problem for the current
//! combiner (analog solver + closed-form digital part + scaling), then the
//! combiner sub-problem for the new precoder. Under the WMMSE criterion a
//! weight update `Λ_k = T_k^{-1}` follows. The loop stops when the relative
//! objective change drops below the outer tolerance or the iteration cap is
//! hit.
//!
//! The alternation starts at the transmit side, seeded either by a virtual
//! full-digital combiner (VFD) or by a random hybrid combiner.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelRealization;
use crate::error::{HbfError, Result};
use crate::linalg::{herm_pd_ln_det, trace_re, CMat};
use crate::manifold::{mo_solve, MoOptions, UnitModulusPoint};
use crate::mmse::{
    digital_combiner_min_norm, digital_precoder_min_norm, full_digital_mmse, mse_matrix,
    optimal_beta, optimal_weight, spectral_efficiency, sum_mse, FullDigitalBeamformer,
    HybridBeamformer, ReducedObjective, SystemDims, Transceiver, WeightMatrices,
};
use crate::rng::{derive_rng, uniform_phase_matrix, STREAM_INIT};
use crate::spectral::{
    evd_lb_analog, evd_ub_analog, gevd_sweep, omp_analog, Dictionary, DEFAULT_POWER_ITERS,
};

/// Analog beamformer design algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Mo,
    Gevd,
    EvdLb,
    EvdUb,
    Omp,
    #[serde(rename = "fd")]
    FullDigital,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Algorithm::Mo => "mo",
            Algorithm::Gevd => "gevd",
            Algorithm::EvdLb => "evd-lb",
            Algorithm::EvdUb => "evd-ub",
            Algorithm::Omp => "omp",
            Algorithm::FullDigital => "fd",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for Algorithm {
    type Err = HbfError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mo" => Ok(Algorithm::Mo),
            "gevd" => Ok(Algorithm::Gevd),
            "evd-lb" | "evd_lb" | "evdlb" => Ok(Algorithm::EvdLb),
            "evd-ub" | "evd_ub" | "evdub" => Ok(Algorithm::EvdUb),
            "omp" => Ok(Algorithm::Omp),
            "fd" | "full-digital" | "full_digital" => Ok(Algorithm::FullDigital),
            other => Err(HbfError::Config(format!("unknown algorithm `{other}`"))),
        }
    }
}

/// Design criterion: plain sum-MSE or weighted sum-MSE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    Mmse,
    Wmmse,
}

impl std::fmt::Display for Criterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Criterion::Mmse => write!(f, "mmse"),
            Criterion::Wmmse => write!(f, "wmmse"),
        }
    }
}

impl std::str::FromStr for Criterion {
    type Err = HbfError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mmse" => Ok(Criterion::Mmse),
            "wmmse" => Ok(Criterion::Wmmse),
            other => Err(HbfError::Config(format!("unknown criterion `{other}`"))),
        }
    }
}

/// How the alternation is seeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    Vfd,
    Random,
}

impl std::str::FromStr for InitMode {
    type Err = HbfError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vfd" => Ok(InitMode::Vfd),
            "random" => Ok(InitMode::Random),
            other => Err(HbfError::Config(format!("unknown init mode `{other}`"))),
        }
    }
}

/// Everything a single solve needs beyond the channel and dimensions.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub algorithm: Algorithm,
    pub criterion: Criterion,
    pub init: InitMode,
    /// Outer stop: relative objective change threshold.
    pub outer_tol: f64,
    pub outer_cap: usize,
    pub mo: MoOptions,
    pub power_iters: usize,
    pub seed: u64,
    /// Uniformly quantize the final analog phases to this many bits.
    pub quant_bits: Option<u32>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            algorithm: Algorithm::Mo,
            criterion: Criterion::Mmse,
            init: InitMode::Vfd,
            outer_tol: 1e-5,
            outer_cap: 50,
            mo: MoOptions::default(),
            power_iters: DEFAULT_POWER_ITERS,
            seed: 0,
            quant_bits: None,
        }
    }
}

/// One outer-iteration record.
#[derive(Debug, Clone, Copy)]
pub struct TraceRow {
    pub outer_iter: usize,
    pub objective: f64,
    pub spectral_efficiency: f64,
}

/// Objective trajectory of a solve.
#[derive(Debug, Clone, Default)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
    /// Outer iteration (1-based) holding the best objective seen.
    pub best_iter: usize,
    /// The returned beamformer is the best-so-far iterate, not the last.
    pub best_differs_from_last: bool,
    /// A manifold line search stalled at some point.
    pub stalled: bool,
}

impl RunTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("outer_iter,objective,spectral_efficiency\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{}\n",
                r.outer_iter, r.objective, r.spectral_efficiency
            ));
        }
        out
    }
}

/// Output beamformer of [`solve`]: hybrid for the constrained algorithms,
/// unconstrained for the full-digital benchmark.
#[derive(Debug, Clone)]
pub enum SolvedBeamformer {
    Hybrid(HybridBeamformer),
    FullDigital(FullDigitalBeamformer),
}

impl SolvedBeamformer {
    pub fn as_hybrid(&self) -> Option<&HybridBeamformer> {
        match self {
            SolvedBeamformer::Hybrid(b) => Some(b),
            SolvedBeamformer::FullDigital(_) => None,
        }
    }
}

impl Transceiver for SolvedBeamformer {
    fn num_subcarriers(&self) -> usize {
        match self {
            SolvedBeamformer::Hybrid(b) => b.num_subcarriers(),
            SolvedBeamformer::FullDigital(b) => b.num_subcarriers(),
        }
    }

    fn precoder(&self, k: usize) -> CMat {
        match self {
            SolvedBeamformer::Hybrid(b) => b.precoder(k),
            SolvedBeamformer::FullDigital(b) => b.precoder(k),
        }
    }

    fn combiner(&self, k: usize) -> CMat {
        match self {
            SolvedBeamformer::Hybrid(b) => b.combiner(k),
            SolvedBeamformer::FullDigital(b) => b.combiner(k),
        }
    }

    fn beta(&self, k: usize) -> f64 {
        match self {
            SolvedBeamformer::Hybrid(b) => b.beta(k),
            SolvedBeamformer::FullDigital(b) => Transceiver::beta(b, k),
        }
    }
}

/// Result of [`solve`].
#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub beamformer: SolvedBeamformer,
    pub weights: Option<WeightMatrices>,
    pub trace: RunTrace,
}

fn validate_inputs(
    channel: &ChannelRealization,
    dims: &SystemDims,
    opts: &SolverOptions,
) -> Result<()> {
    dims.validate()?;
    if channel.num_subcarriers() != dims.n_subcarriers
        || channel.n_rx() != dims.n_rx
        || channel.n_tx() != dims.n_tx
    {
        return Err(HbfError::DimensionMismatch {
            context: "solve",
            details: format!(
                "channel is {}x{} with {} subcarriers, dims say {}x{} with {}",
                channel.n_rx(),
                channel.n_tx(),
                channel.num_subcarriers(),
                dims.n_rx,
                dims.n_tx,
                dims.n_subcarriers
            ),
        });
    }
    if opts.algorithm == Algorithm::Gevd && dims.n_subcarriers > 1 {
        return Err(HbfError::Config(
            "algorithm gevd requires the narrowband scenario (n_subcarriers = 1)".into(),
        ));
    }
    if opts.algorithm == Algorithm::EvdUb && opts.criterion == Criterion::Wmmse {
        return Err(HbfError::Config(
            "algorithm evd-ub is not defined for the wmmse criterion".into(),
        ));
    }
    Ok(())
}

/// Virtual full-digital initialization: the unconstrained MMSE combiners,
/// used to seed the first precoder sub-problem.
pub fn vfd_init(channels: &[CMat], dims: &SystemDims) -> Result<Vec<CMat>> {
    Ok(full_digital_mmse(channels, dims)?.w)
}

/// Random initialization: uniform-phase analog combiner, digital part from
/// the closed form against a fixed virtual precoder.
fn random_init(channels: &[CMat], dims: &SystemDims, rng: &mut ChaCha8Rng) -> Result<Vec<CMat>> {
    let w_rf = uniform_phase_matrix(rng, dims.n_rx, dims.n_rf);
    let mut v0 = CMat::zeros(dims.n_tx, dims.n_streams);
    for i in 0..dims.n_streams {
        v0[(i, i)] = crate::linalg::cx(1.0 / (dims.n_streams as f64).sqrt(), 0.0);
    }
    Ok(channels
        .iter()
        .map(|h| {
            let h2 = h * &v0;
            &w_rf * digital_combiner_min_norm(&w_rf, &h2, dims.noise_var, 1.0)
        })
        .collect())
}

enum WeightsMode {
    Off,
    Adaptive,
    FrozenIdentity,
}

fn analog_update(
    algorithm: Algorithm,
    problem: &ReducedObjective,
    warm: Option<CMat>,
    n_rf: usize,
    opts: &SolverOptions,
    rng: &mut ChaCha8Rng,
    dict: Option<&Dictionary>,
) -> Result<(CMat, bool)> {
    match algorithm {
        Algorithm::Mo => {
            let start = match warm {
                Some(m) => UnitModulusPoint::new(m)?,
                None => UnitModulusPoint::random(rng, problem.n_ant(), n_rf),
            };
            let out = mo_solve(problem, &start, &opts.mo)?;
            Ok((out.point.into_matrix(), out.stalled))
        }
        Algorithm::Gevd => {
            let mut b = warm.unwrap_or_else(|| uniform_phase_matrix(rng, problem.n_ant(), n_rf));
            gevd_sweep(problem, &mut b, opts.power_iters)?;
            Ok((b, false))
        }
        Algorithm::EvdLb => Ok((evd_lb_analog(problem, n_rf)?, false)),
        Algorithm::EvdUb => Ok((evd_ub_analog(problem, n_rf)?, false)),
        Algorithm::Omp => {
            let dict = dict.expect("OMP requires a dictionary");
            Ok((omp_analog(problem, dict, n_rf)?.0, false))
        }
        Algorithm::FullDigital => unreachable!("full digital is handled before the loop"),
    }
}

/// WMMSE objective `Σ_k (tr(Λ_k T_k) - ln det Λ_k)`.
pub fn wmmse_objective(
    channels: &[CMat],
    bf: &HybridBeamformer,
    weights: &WeightMatrices,
    sigma2: f64,
) -> Result<f64> {
    let mut acc = 0.0;
    for (k, h) in channels.iter().enumerate() {
        let t = mse_matrix(
            h,
            &bf.v_rf,
            &bf.v_dig[k],
            &bf.w_rf,
            &bf.w_dig[k],
            bf.beta[k],
            sigma2,
        )?;
        let lambda = &weights.lambda[k];
        acc += trace_re(&(lambda * t)) - herm_pd_ln_det(lambda)?;
    }
    Ok(acc)
}

fn alternate_impl(
    channel: &ChannelRealization,
    dims: &SystemDims,
    opts: &SolverOptions,
    mode: WeightsMode,
) -> Result<(HybridBeamformer, WeightMatrices, RunTrace)> {
    let channels = &channel.per_subcarrier;
    let sigma2 = dims.noise_var;
    let n = dims.n_subcarriers;
    let n_s = dims.n_streams;

    let mut init_rng = derive_rng(opts.seed, STREAM_INIT, 0);
    let mut w_overall = match opts.init {
        InitMode::Vfd => vfd_init(channels, dims)?,
        InitMode::Random => random_init(channels, dims, &mut init_rng)?,
    };

    let adaptive = matches!(mode, WeightsMode::Adaptive);
    let mut lambdas = WeightMatrices::identity(n_s, n);

    let (dict_tx, dict_rx) = if opts.algorithm == Algorithm::Omp {
        let tx = crate::channel::ArrayGeometry::new(dims.n_tx)?;
        let rx = crate::channel::ArrayGeometry::new(dims.n_rx)?;
        (
            Some(Dictionary::from_angles(&tx, &channel.rays.all_aod())),
            Some(Dictionary::from_angles(&rx, &channel.rays.all_aoa())),
        )
    } else {
        (None, None)
    };

    let mut v_rf: Option<CMat> = None;
    let mut w_rf: Option<CMat> = None;
    let mut trace = RunTrace::default();
    let mut prev_obj: Option<f64> = None;
    let mut best: Option<(f64, usize, HybridBeamformer, WeightMatrices)> = None;

    for outer in 1..=opts.outer_cap {
        // Transmit side: effective channels and noise scalars from the
        // previous combiner iterate.
        let h1s: Vec<CMat> = channels
            .iter()
            .zip(&w_overall)
            .map(|(h, w)| h.adjoint() * w)
            .collect();
        let scalars: Vec<f64> = w_overall
            .iter()
            .enumerate()
            .map(|(k, w)| {
                if adaptive {
                    trace_re(&(&lambdas.lambda[k] * (w.adjoint() * w)))
                } else {
                    w.norm_squared()
                }
            })
            .collect();
        let weights_arg: Option<&[CMat]> = adaptive.then_some(lambdas.lambda.as_slice());
        let problem = ReducedObjective::precoder(&h1s, sigma2, &scalars, weights_arg)?;
        let (v, stalled_v) = analog_update(
            opts.algorithm,
            &problem,
            v_rf.take(),
            dims.n_rf,
            opts,
            &mut init_rng,
            dict_tx.as_ref(),
        )?;
        trace.stalled |= stalled_v;
        let v_dig: Vec<CMat> = (0..n)
            .map(|k| {
                let weight = if adaptive { Some(&lambdas.lambda[k]) } else { None };
                digital_precoder_min_norm(&v, &h1s[k], sigma2, scalars[k], weight)
            })
            .collect();
        let betas: Vec<f64> = v_dig.iter().map(|vd| optimal_beta(&v, vd)).collect::<Result<_>>()?;
        v_rf = Some(v);
        let v_ref = v_rf.as_ref().unwrap();

        // Receive side.
        let h2s: Vec<CMat> = channels
            .iter()
            .zip(&v_dig)
            .map(|(h, vd)| h * v_ref * vd)
            .collect();
        let comb_problem = ReducedObjective::combiner(&h2s, sigma2, &betas, weights_arg)?;
        let (w, stalled_w) = analog_update(
            opts.algorithm,
            &comb_problem,
            w_rf.take(),
            dims.n_rf,
            opts,
            &mut init_rng,
            dict_rx.as_ref(),
        )?;
        trace.stalled |= stalled_w;
        let w_dig: Vec<CMat> = (0..n)
            .map(|k| digital_combiner_min_norm(&w, &h2s[k], sigma2, betas[k]))
            .collect();
        w_overall = w_dig.iter().map(|wd| &w * wd).collect();
        w_rf = Some(w);

        let bf = HybridBeamformer {
            v_rf: v_rf.clone().unwrap(),
            w_rf: w_rf.clone().unwrap(),
            v_dig,
            w_dig,
            beta: betas,
        };

        if adaptive {
            for k in 0..n {
                let t = mse_matrix(
                    &channels[k],
                    &bf.v_rf,
                    &bf.v_dig[k],
                    &bf.w_rf,
                    &bf.w_dig[k],
                    bf.beta[k],
                    sigma2,
                )?;
                let (l, _) = optimal_weight(&t)?;
                lambdas.lambda[k] = l;
            }
        }

        let objective = if adaptive {
            wmmse_objective(channels, &bf, &lambdas, sigma2)?
        } else {
            sum_mse(channels, &bf, sigma2)?
        };
        let se = spectral_efficiency(channels, &bf, sigma2)?;
        trace.rows.push(TraceRow {
            outer_iter: outer,
            objective,
            spectral_efficiency: se,
        });

        let is_better = best.as_ref().map_or(true, |(b, _, _, _)| objective < *b);
        if is_better {
            best = Some((objective, outer, bf, lambdas.clone()));
        }

        if let Some(prev) = prev_obj {
            let rel = (prev - objective).abs() / prev.abs().max(f64::MIN_POSITIVE);
            if rel < opts.outer_tol {
                break;
            }
        }
        prev_obj = Some(objective);
    }

    let (_, best_iter, bf, weights) = best.expect("at least one outer iteration ran");
    trace.best_iter = best_iter;
    trace.best_differs_from_last = best_iter != trace.rows.last().unwrap().outer_iter;
    Ok((bf, weights, trace))
}

/// Alternating minimization under the sum-MSE criterion.
pub fn alternate_mmse(
    channel: &ChannelRealization,
    dims: &SystemDims,
    opts: &SolverOptions,
) -> Result<(HybridBeamformer, RunTrace)> {
    validate_inputs(channel, dims, opts)?;
    let (bf, _, trace) = alternate_impl(channel, dims, opts, WeightsMode::Off)?;
    Ok((bf, trace))
}

/// Alternating minimization under the weighted sum-MSE criterion with the
/// weight update `Λ_k = T_k^{-1}` after each outer iteration.
pub fn alternate_wmmse(
    channel: &ChannelRealization,
    dims: &SystemDims,
    opts: &SolverOptions,
) -> Result<(HybridBeamformer, WeightMatrices, RunTrace)> {
    validate_inputs(channel, dims, opts)?;
    alternate_impl(channel, dims, opts, WeightsMode::Adaptive)
}

/// WMMSE loop with the weights pinned to identity; reduces to the MMSE path
/// exactly. Exposed for equivalence testing.
#[doc(hidden)]
pub fn alternate_wmmse_frozen_identity(
    channel: &ChannelRealization,
    dims: &SystemDims,
    opts: &SolverOptions,
) -> Result<(HybridBeamformer, WeightMatrices, RunTrace)> {
    validate_inputs(channel, dims, opts)?;
    alternate_impl(channel, dims, opts, WeightsMode::FrozenIdentity)
}

/// Solve one channel with the configured algorithm and criterion.
pub fn solve(
    channel: &ChannelRealization,
    dims: &SystemDims,
    opts: &SolverOptions,
) -> Result<SolveOutput> {
    validate_inputs(channel, dims, opts)?;
    if opts.algorithm == Algorithm::FullDigital {
        let fd = full_digital_mmse(&channel.per_subcarrier, dims)?;
        let objective = sum_mse(&channel.per_subcarrier, &fd, dims.noise_var)?;
        let se = spectral_efficiency(&channel.per_subcarrier, &fd, dims.noise_var)?;
        return Ok(SolveOutput {
            beamformer: SolvedBeamformer::FullDigital(fd),
            weights: None,
            trace: RunTrace {
                rows: vec![TraceRow {
                    outer_iter: 1,
                    objective,
                    spectral_efficiency: se,
                }],
                best_iter: 1,
                best_differs_from_last: false,
                stalled: false,
            },
        });
    }

    let (bf, weights, trace) = match opts.criterion {
        Criterion::Mmse => {
            let (bf, trace) = alternate_mmse(channel, dims, opts)?;
            (bf, None, trace)
        }
        Criterion::Wmmse => {
            let (bf, w, trace) = alternate_wmmse(channel, dims, opts)?;
            (bf, Some(w), trace)
        }
    };

    let bf = match opts.quant_bits {
        Some(q) => quantize_phases(&bf, q, &channel.per_subcarrier, dims.noise_var)?,
        None => bf,
    };

    Ok(SolveOutput {
        beamformer: SolvedBeamformer::Hybrid(bf),
        weights,
        trace,
    })
}

fn round_half_toward_zero(t: f64) -> f64 {
    let a = t.abs();
    let r = if (a.fract() - 0.5).abs() < 1e-12 {
        a.floor()
    } else {
        a.round()
    };
    r.copysign(t)
}

/// Round every analog phase to the nearest multiple of `2π / 2^q` (ties
/// toward zero), then re-optimize the digital parts and scaling factors once.
pub fn quantize_phases(
    bf: &HybridBeamformer,
    q: u32,
    channels: &[CMat],
    sigma2: f64,
) -> Result<HybridBeamformer> {
    if q == 0 {
        return Err(HbfError::InvalidInput("need at least one bit".into()));
    }
    let step = std::f64::consts::TAU / 2f64.powi(q as i32);
    let quantize = |m: &CMat| {
        CMat::from_fn(m.nrows(), m.ncols(), |i, j| {
            let phase = round_half_toward_zero(m[(i, j)].arg() / step) * step;
            crate::linalg::cx(phase.cos(), phase.sin())
        })
    };
    let v_rf = quantize(&bf.v_rf);
    let w_rf = quantize(&bf.w_rf);

    let n = channels.len();
    let mut v_dig = Vec::with_capacity(n);
    let mut w_dig = Vec::with_capacity(n);
    let mut betas = Vec::with_capacity(n);
    for k in 0..n {
        let w_prev = &w_rf * &bf.w_dig[k];
        let h1 = channels[k].adjoint() * &w_prev;
        let w_scalar = w_prev.norm_squared();
        let vd = digital_precoder_min_norm(&v_rf, &h1, sigma2, w_scalar, None);
        let beta = optimal_beta(&v_rf, &vd)?;
        let h2 = &channels[k] * &v_rf * &vd;
        let wd = digital_combiner_min_norm(&w_rf, &h2, sigma2, beta);
        v_dig.push(vd);
        w_dig.push(wd);
        betas.push(beta);
    }
    Ok(HybridBeamformer {
        v_rf,
        w_rf,
        v_dig,
        w_dig,
        beta: betas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{draw_rays, gen_channel, ArrayGeometry};
    use crate::linalg::cx;

    fn test_channel(seed: u64, n_tx: usize, n_rx: usize, n_sub: usize) -> ChannelRealization {
        let tx = ArrayGeometry::new(n_tx).unwrap();
        let rx = ArrayGeometry::new(n_rx).unwrap();
        let mut rng = derive_rng(seed, crate::rng::STREAM_CHANNEL, 0);
        let rays = draw_rays(&mut rng, 5, 10, 10.0);
        gen_channel(&rays, &tx, &rx, n_sub)
    }

    #[test]
    fn vfd_init_is_deterministic_and_svd_aligned() {
        let tx = ArrayGeometry::new(8).unwrap();
        let rx = ArrayGeometry::new(8).unwrap();
        let mut rng = derive_rng(60, crate::rng::STREAM_CHANNEL, 1);
        let rays = draw_rays(&mut rng, 1, 1, 0.0);
        let ch = gen_channel(&rays, &tx, &rx, 1);
        let dims = SystemDims::new(8, 8, 1, 1, 1, 0.5).unwrap();
        let w0 = vfd_init(&ch.per_subcarrier, &dims).unwrap();
        let w1 = vfd_init(&ch.per_subcarrier, &dims).unwrap();
        assert_eq!(w0[0], w1[0]);

        // Rank-one channel: the combiner is parallel to the dominant left
        // singular vector.
        let svd = ch.per_subcarrier[0].clone().svd(true, false);
        let u0 = svd.u.as_ref().unwrap().column(0);
        let w = w0[0].column(0);
        let corr = (u0.adjoint() * w)[(0, 0)].norm() / w.norm();
        assert!((corr - 1.0).abs() < 1e-10);
    }

    #[test]
    fn mmse_trace_monotone_for_mo() {
        let ch = test_channel(61, 12, 12, 1);
        let dims = SystemDims::new(12, 12, 2, 2, 1, 10f64.powf(1.0)).unwrap();
        let opts = SolverOptions {
            seed: 61,
            ..Default::default()
        };
        let (bf, trace) = alternate_mmse(&ch, &dims, &opts).unwrap();
        bf.validate().unwrap();
        let mut prev = f64::INFINITY;
        for row in &trace.rows {
            assert!(row.objective <= prev + 1e-9, "{} > {}", row.objective, prev);
            prev = row.objective;
        }
        assert!(!trace.best_differs_from_last);
    }

    #[test]
    fn all_algorithms_produce_feasible_output() {
        let dims_nb = SystemDims::new(12, 12, 3, 2, 1, 1.0).unwrap();
        let ch_nb = test_channel(62, 12, 12, 1);
        let dims_bb = SystemDims::new(12, 12, 3, 2, 4, 1.0).unwrap();
        let ch_bb = test_channel(63, 12, 12, 4);
        for algo in [
            Algorithm::Mo,
            Algorithm::Gevd,
            Algorithm::EvdLb,
            Algorithm::EvdUb,
            Algorithm::Omp,
        ] {
            let (dims, ch) = if algo == Algorithm::Gevd {
                (&dims_nb, &ch_nb)
            } else {
                (&dims_bb, &ch_bb)
            };
            let opts = SolverOptions {
                algorithm: algo,
                seed: 64,
                ..Default::default()
            };
            let (bf, trace) = alternate_mmse(ch, dims, &opts).unwrap();
            bf.validate().unwrap();
            let bound = (dims.n_subcarriers * dims.n_streams) as f64;
            for row in &trace.rows {
                assert!(
                    row.objective > 0.0 && row.objective <= bound + 1e-9,
                    "{algo}: objective {} out of (0, {bound}]",
                    row.objective
                );
            }
        }
    }

    #[test]
    fn gevd_rejected_for_broadband() {
        let ch = test_channel(65, 8, 8, 4);
        let dims = SystemDims::new(8, 8, 2, 2, 4, 1.0).unwrap();
        let opts = SolverOptions {
            algorithm: Algorithm::Gevd,
            ..Default::default()
        };
        assert!(alternate_mmse(&ch, &dims, &opts).is_err());
    }

    #[test]
    fn evd_ub_rejected_for_wmmse() {
        let ch = test_channel(66, 8, 8, 2);
        let dims = SystemDims::new(8, 8, 2, 2, 2, 1.0).unwrap();
        let opts = SolverOptions {
            algorithm: Algorithm::EvdUb,
            criterion: Criterion::Wmmse,
            ..Default::default()
        };
        assert!(solve(&ch, &dims, &opts).is_err());
    }

    #[test]
    fn wmmse_frozen_identity_equals_mmse() {
        let ch = test_channel(67, 10, 10, 2);
        let dims = SystemDims::new(10, 10, 2, 2, 2, 1.0).unwrap();
        let opts = SolverOptions {
            seed: 67,
            ..Default::default()
        };
        let (bf_m, trace_m) = alternate_mmse(&ch, &dims, &opts).unwrap();
        let (bf_w, _, trace_w) = alternate_wmmse_frozen_identity(&ch, &dims, &opts).unwrap();
        assert_eq!(bf_m.v_rf, bf_w.v_rf);
        assert_eq!(bf_m.w_rf, bf_w.w_rf);
        for k in 0..2 {
            assert_eq!(bf_m.v_dig[k], bf_w.v_dig[k]);
            assert_eq!(bf_m.w_dig[k], bf_w.w_dig[k]);
            assert_eq!(bf_m.beta[k], bf_w.beta[k]);
        }
        assert_eq!(trace_m.rows.len(), trace_w.rows.len());
        for (a, b) in trace_m.rows.iter().zip(&trace_w.rows) {
            assert_eq!(a.objective, b.objective);
        }
    }

    #[test]
    fn wmmse_trace_monotone_for_mo() {
        let ch = test_channel(68, 12, 12, 2);
        let dims = SystemDims::new(12, 12, 2, 2, 2, 1.0).unwrap();
        let opts = SolverOptions {
            criterion: Criterion::Wmmse,
            seed: 68,
            ..Default::default()
        };
        let (bf, weights, trace) = alternate_wmmse(&ch, &dims, &opts).unwrap();
        bf.validate().unwrap();
        weights.validate().unwrap();
        let mut prev = f64::INFINITY;
        for row in &trace.rows {
            assert!(row.objective <= prev + 1e-9);
            prev = row.objective;
        }
    }

    #[test]
    fn solver_is_deterministic() {
        let ch = test_channel(69, 10, 10, 2);
        let dims = SystemDims::new(10, 10, 2, 2, 2, 0.5).unwrap();
        for algo in [Algorithm::Mo, Algorithm::EvdLb, Algorithm::Omp] {
            let opts = SolverOptions {
                algorithm: algo,
                seed: 69,
                ..Default::default()
            };
            let a = solve(&ch, &dims, &opts).unwrap();
            let b = solve(&ch, &dims, &opts).unwrap();
            assert_eq!(a.trace.rows.len(), b.trace.rows.len());
            for (x, y) in a.trace.rows.iter().zip(&b.trace.rows) {
                assert!(x.objective == y.objective && x.spectral_efficiency == y.spectral_efficiency);
            }
        }
    }

    #[test]
    fn fd_lower_bounds_hybrid_mse() {
        let ch = test_channel(70, 12, 12, 2);
        let dims = SystemDims::new(12, 12, 2, 2, 2, 1.0).unwrap();
        let fd = full_digital_mmse(&ch.per_subcarrier, &dims).unwrap();
        let fd_mse = sum_mse(&ch.per_subcarrier, &fd, 1.0).unwrap();
        for algo in [Algorithm::Mo, Algorithm::EvdLb, Algorithm::EvdUb, Algorithm::Omp] {
            let opts = SolverOptions {
                algorithm: algo,
                seed: 70,
                ..Default::default()
            };
            let (bf, _) = alternate_mmse(&ch, &dims, &opts).unwrap();
            let mse = sum_mse(&ch.per_subcarrier, &bf, 1.0).unwrap();
            assert!(fd_mse <= mse + 1e-9, "{algo}: fd {fd_mse} > hybrid {mse}");
        }
    }

    #[test]
    fn quantize_phase_grid() {
        let ch = test_channel(71, 8, 8, 1);
        let dims = SystemDims::new(8, 8, 2, 2, 1, 1.0).unwrap();
        let opts = SolverOptions {
            seed: 71,
            ..Default::default()
        };
        let (bf, _) = alternate_mmse(&ch, &dims, &opts).unwrap();

        // q = 1: phases land on {0, π}; π/3 rounds to 0.
        let mut probe = bf.clone();
        probe.v_rf[(0, 0)] = cx((std::f64::consts::PI / 3.0).cos(), (std::f64::consts::PI / 3.0).sin());
        let q1 = quantize_phases(&probe, 1, &ch.per_subcarrier, 1.0).unwrap();
        assert!((q1.v_rf[(0, 0)] - cx(1.0, 0.0)).norm() < 1e-12);

        // q = 2: 0.8π rounds to π.
        probe.v_rf[(0, 0)] = cx((0.8 * std::f64::consts::PI).cos(), (0.8 * std::f64::consts::PI).sin());
        let q2 = quantize_phases(&probe, 2, &ch.per_subcarrier, 1.0).unwrap();
        assert!((q2.v_rf[(0, 0)] - cx(-1.0, 0.0)).norm() < 1e-12);

        for q in [1u32, 3, 6] {
            let qb = quantize_phases(&bf, q, &ch.per_subcarrier, 1.0).unwrap();
            qb.validate().unwrap();
            let levels = 2f64.powi(q as i32);
            for z in qb.v_rf.iter().chain(qb.w_rf.iter()) {
                let t = z.arg() / (std::f64::consts::TAU / levels);
                assert!((t - t.round()).abs() < 1e-9);
            }
        }

        // Fine quantization leaves the objective essentially unchanged.
        let base = sum_mse(&ch.per_subcarrier, &bf, 1.0).unwrap();
        let q16 = quantize_phases(&bf, 16, &ch.per_subcarrier, 1.0).unwrap();
        let quantized = sum_mse(&ch.per_subcarrier, &q16, 1.0).unwrap();
        assert!((quantized - base).abs() / base < 1e-6);
    }

    #[test]
    fn algorithm_parsing_round_trips() {
        for algo in [
            Algorithm::Mo,
            Algorithm::Gevd,
            Algorithm::EvdLb,
            Algorithm::EvdUb,
            Algorithm::Omp,
            Algorithm::FullDigital,
        ] {
            let s = algo.to_string();
            assert_eq!(s.parse::<Algorithm>().unwrap(), algo);
        }
        assert!("nope".parse::<Algorithm>().is_err());
    }
}

//! Monte Carlo link-level simulation: QPSK transmission, MSE/BER/spectral
//! efficiency sweeps over SNR, convergence studies and phase-quantization
//! studies.
//!
//! Trials are independent work items executed on a rayon pool (capped by the
//! `HBF_THREADS` environment variable). Trial `t` derives all its randomness
//! from `(seed, stream, t)`, and aggregation uses pairwise summation over the
//! trial-ordered results, so every CSV artifact is bytewise reproducible for
//! a given `(config, seed)` regardless of thread count.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

use crate::channel::{draw_rays, gen_channel, ArrayGeometry, ChannelRealization};
use crate::driver::{solve, Algorithm, Criterion, InitMode, SolverOptions, TraceRow};
use crate::error::{HbfError, Result};
use crate::linalg::{cx, mean_stderr, C64};
use crate::mmse::{sum_mse, spectral_efficiency, SystemDims, Transceiver};
use crate::rng::{derive_rng, STREAM_CHANNEL, STREAM_INIT, STREAM_NOISE};

/// Full description of one Monte Carlo experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_rf: usize,
    pub n_streams: usize,
    pub n_subcarriers: usize,
    pub n_clusters: usize,
    pub rays_per_cluster: usize,
    pub angular_spread_deg: f64,
    /// SNR grid in dB; SNR is defined as 1/σ².
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub algorithms: Vec<Algorithm>,
    pub criterion: Criterion,
    pub init: InitMode,
    pub seed: u64,
    pub symbols_per_trial: usize,
    /// Quantization levels for the quantization study.
    pub quant_bits: Vec<u32>,
    pub outer_tol: f64,
    pub outer_cap: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_tx: 16,
            n_rx: 16,
            n_rf: 2,
            n_streams: 2,
            n_subcarriers: 1,
            n_clusters: 5,
            rays_per_cluster: 10,
            angular_spread_deg: 10.0,
            snr_db: vec![-10.0],
            trials: 10,
            algorithms: vec![Algorithm::Mo],
            criterion: Criterion::Mmse,
            init: InitMode::Vfd,
            seed: 1,
            symbols_per_trial: 1000,
            quant_bits: vec![1, 2, 3, 4, 5, 6, 8],
            outer_tol: 1e-5,
            outer_cap: 50,
        }
    }
}

impl ExperimentConfig {
    /// The paper-scale configuration: 64 antennas either side, 64
    /// subcarriers, 1000 trials. Slow; desk-scale defaults are the norm.
    pub fn paper_scale(mut self) -> Self {
        self.n_tx = 64;
        self.n_rx = 64;
        self.n_subcarriers = 64;
        self.trials = 1000;
        self
    }

    pub fn scenario(&self) -> &'static str {
        if self.n_subcarriers == 1 {
            "narrowband"
        } else {
            "broadband"
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(HbfError::Config("trials must be at least 1".into()));
        }
        if self.snr_db.is_empty() {
            return Err(HbfError::Config("snr_db must be nonempty".into()));
        }
        if self.algorithms.is_empty() {
            return Err(HbfError::Config("algorithms must be nonempty".into()));
        }
        if self.algorithms.contains(&Algorithm::Gevd) && self.n_subcarriers > 1 {
            return Err(HbfError::Config(
                "`algorithms` contains gevd but `n_subcarriers` > 1: gevd requires narrowband"
                    .into(),
            ));
        }
        if self.algorithms.contains(&Algorithm::EvdUb) && self.criterion == Criterion::Wmmse {
            return Err(HbfError::Config(
                "`algorithms` contains evd-ub but `criterion` is wmmse".into(),
            ));
        }
        self.dims_at(self.snr_db[0]).validate()
    }

    /// System dimensions at a given SNR (σ² = 10^{-snr/10}).
    pub fn dims_at(&self, snr_db: f64) -> SystemDims {
        SystemDims {
            n_tx: self.n_tx,
            n_rx: self.n_rx,
            n_rf: self.n_rf,
            n_streams: self.n_streams,
            n_subcarriers: self.n_subcarriers,
            noise_var: 10f64.powf(-snr_db / 10.0),
        }
    }

    fn solver_options(&self, algorithm: Algorithm, trial: u64) -> SolverOptions {
        // Per-trial solver seed so random initializations differ across
        // trials while staying reproducible and order-independent.
        let seed = derive_rng(self.seed, STREAM_INIT, trial).gen::<u64>();
        SolverOptions {
            algorithm,
            criterion: self.criterion,
            init: self.init,
            outer_tol: self.outer_tol,
            outer_cap: self.outer_cap,
            seed,
            ..Default::default()
        }
    }

    /// Seeded channel for one trial.
    pub fn channel_for_trial(&self, trial: u64) -> Result<ChannelRealization> {
        let tx = ArrayGeometry::new(self.n_tx)?;
        let rx = ArrayGeometry::new(self.n_rx)?;
        let mut rng = derive_rng(self.seed, STREAM_CHANNEL, trial);
        let rays = draw_rays(
            &mut rng,
            self.n_clusters,
            self.rays_per_cluster,
            self.angular_spread_deg,
        );
        Ok(gen_channel(&rays, &tx, &rx, self.n_subcarriers))
    }
}

/// Metric carried by a [`SweepRecord`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Mse,
    Ber,
    Se,
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Metric::Mse => write!(f, "mse"),
            Metric::Ber => write!(f, "ber"),
            Metric::Se => write!(f, "se"),
        }
    }
}

/// One aggregated Monte Carlo result row.
#[derive(Debug, Clone)]
pub struct SweepRecord {
    pub algorithm: Algorithm,
    pub criterion: Criterion,
    pub scenario: &'static str,
    pub snr_db: f64,
    pub metric: Metric,
    pub value: f64,
    pub stderr: f64,
    pub trials: usize,
    pub seed: u64,
}

pub const SWEEP_CSV_HEADER: &str = "algorithm,criterion,scenario,snr_db,metric,value,stderr,trials,seed";

pub fn sweep_records_to_csv(records: &[SweepRecord]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.algorithm, r.criterion, r.scenario, r.snr_db, r.metric, r.value, r.stderr, r.trials, r.seed
        );
    }
    out
}

/// QPSK with Gray mapping: bit pair `(b1, b0)` maps to
/// `((1-2 b1) + j (1-2 b0)) / √2`, unit average symbol energy.
pub fn qpsk_modulate(bits: &[u8]) -> Vec<C64> {
    assert!(bits.len() % 2 == 0, "QPSK needs an even number of bits");
    let s = std::f64::consts::FRAC_1_SQRT_2;
    bits.chunks_exact(2)
        .map(|p| {
            cx(
                (1.0 - 2.0 * p[0] as f64) * s,
                (1.0 - 2.0 * p[1] as f64) * s,
            )
        })
        .collect()
}

/// Minimum-distance QPSK slicing: sign of the real and imaginary parts.
/// Zeros slice to bit 0.
pub fn qpsk_demodulate(symbols: &[C64]) -> Vec<u8> {
    let mut bits = Vec::with_capacity(symbols.len() * 2);
    for z in symbols {
        bits.push(if z.re < 0.0 { 1 } else { 0 });
        bits.push(if z.im < 0.0 { 1 } else { 0 });
    }
    bits
}

/// Outcome of one link-level trial.
#[derive(Debug, Clone, Copy)]
pub struct LinkStats {
    pub bit_errors: u64,
    pub bits: u64,
    /// Mean of the per-symbol error norm `||β^{-1}y - s||²` over symbols and
    /// subcarriers — an estimate of the per-subcarrier modified MSE.
    pub empirical_mse: f64,
    /// Standard error of `empirical_mse`.
    pub mse_stderr: f64,
}

impl LinkStats {
    pub fn ber(&self) -> f64 {
        self.bit_errors as f64 / self.bits as f64
    }
}

/// Transmit QPSK through `y_k = W_k^H H_k V_k s_k + W_k^H u_k` with
/// `u_k ~ CN(0, σ² I)`, slice `β_k^{-1} y_k`, count bit errors and average
/// the empirical error energy.
pub fn run_link_trial(
    channel: &ChannelRealization,
    t: &impl Transceiver,
    sigma2: f64,
    symbols_per_subcarrier: usize,
    rng: &mut ChaCha8Rng,
) -> LinkStats {
    let n_s = t.precoder(0).ncols();
    let n_r = channel.n_rx();
    let noise_scale = (sigma2 / 2.0).sqrt();
    let mut bit_errors = 0u64;
    let mut bits = 0u64;
    let mut err_sum = 0.0;
    let mut err_sq_sum = 0.0;
    let mut samples = 0usize;

    for k in 0..channel.num_subcarriers() {
        let eff = t.combiner(k).adjoint() * &channel.per_subcarrier[k] * t.precoder(k);
        let wh = t.combiner(k).adjoint();
        let inv_beta = 1.0 / t.beta(k);
        for _ in 0..symbols_per_subcarrier {
            let tx_bits: Vec<u8> = (0..2 * n_s).map(|_| rng.gen_range(0..2u8)).collect();
            let s = nalgebra::DVector::from_vec(qpsk_modulate(&tx_bits));
            let noise = nalgebra::DVector::from_fn(n_r, |_, _| {
                cx(
                    rng.sample::<f64, _>(rand_distr::StandardNormal) * noise_scale,
                    rng.sample::<f64, _>(rand_distr::StandardNormal) * noise_scale,
                )
            });
            let y = &eff * &s + &wh * noise;
            let est = y * cx(inv_beta, 0.0);
            let rx_bits = qpsk_demodulate(est.as_slice());
            bit_errors += tx_bits
                .iter()
                .zip(&rx_bits)
                .filter(|(a, b)| a != b)
                .count() as u64;
            bits += 2 * n_s as u64;
            let e = (&est - &s).norm_squared();
            err_sum += e;
            err_sq_sum += e * e;
            samples += 1;
        }
    }

    let mean = err_sum / samples as f64;
    let var = (err_sq_sum / samples as f64 - mean * mean).max(0.0);
    LinkStats {
        bit_errors,
        bits,
        empirical_mse: mean,
        mse_stderr: (var / samples as f64).sqrt(),
    }
}

/// Run closures over the trial index range on a pool sized by `HBF_THREADS`.
fn run_trials<T: Send>(trials: usize, f: impl Fn(u64) -> Result<T> + Sync) -> Result<Vec<T>> {
    use rayon::prelude::*;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(n) = std::env::var("HBF_THREADS") {
        if let Ok(n) = n.parse::<usize>() {
            builder = builder.num_threads(n.max(1));
        }
    }
    let pool = builder
        .build()
        .map_err(|e| HbfError::Solver(format!("thread pool: {e}")))?;
    pool.install(|| (0..trials as u64).into_par_iter().map(&f).collect())
}

/// Per-trial metric triple (per-subcarrier MSE, BER, spectral efficiency).
#[derive(Debug, Clone, Copy, Default)]
pub struct TrialMetrics {
    pub mse: f64,
    pub ber: f64,
    pub se: f64,
}

/// Solve and evaluate every trial of `config` for one `(algorithm, SNR)`
/// cell; the vector is indexed by trial, so paired comparisons across
/// algorithms line up.
pub fn eval_algorithm_at_snr(
    config: &ExperimentConfig,
    algorithm: Algorithm,
    snr_db: f64,
) -> Result<Vec<TrialMetrics>> {
    let dims = config.dims_at(snr_db);
    run_trials(config.trials, |trial| {
        let channel = config.channel_for_trial(trial)?;
        let opts = config.solver_options(algorithm, trial);
        let out = solve(&channel, &dims, &opts)?;
        let mse = sum_mse(&channel.per_subcarrier, &out.beamformer, dims.noise_var)?
            / dims.n_subcarriers as f64;
        let se = spectral_efficiency(&channel.per_subcarrier, &out.beamformer, dims.noise_var)?;
        let mut rng = derive_rng(config.seed, STREAM_NOISE, trial);
        let stats = run_link_trial(
            &channel,
            &out.beamformer,
            dims.noise_var,
            config.symbols_per_trial,
            &mut rng,
        );
        Ok(TrialMetrics {
            mse,
            ber: stats.ber(),
            se,
        })
    })
}

/// Monte Carlo sweep over `(algorithm, SNR)`: mean and standard error of the
/// per-subcarrier MSE, BER and spectral efficiency.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<SweepRecord>> {
    config.validate()?;
    let mut records = Vec::new();
    for &algorithm in &config.algorithms {
        for &snr_db in &config.snr_db {
            eprintln!("sweep: algorithm={algorithm} snr={snr_db} dB ({} trials)", config.trials);
            let metrics = eval_algorithm_at_snr(config, algorithm, snr_db)?;
            let per_metric = [
                (Metric::Mse, metrics.iter().map(|m| m.mse).collect::<Vec<_>>()),
                (Metric::Ber, metrics.iter().map(|m| m.ber).collect::<Vec<_>>()),
                (Metric::Se, metrics.iter().map(|m| m.se).collect::<Vec<_>>()),
            ];
            for (metric, values) in per_metric {
                let (value, stderr) = mean_stderr(&values);
                records.push(SweepRecord {
                    algorithm,
                    criterion: config.criterion,
                    scenario: config.scenario(),
                    snr_db,
                    metric,
                    value,
                    stderr,
                    trials: config.trials,
                    seed: config.seed,
                });
            }
        }
    }
    Ok(records)
}

/// Mean objective per outer iteration for one `(algorithm, init)` pair, with
/// convergence statistics.
#[derive(Debug, Clone)]
pub struct ConvergenceCurve {
    pub algorithm: Algorithm,
    pub init: InitMode,
    /// Mean objective at outer iteration `i+1`; traces shorter than the
    /// longest are padded with their final value.
    pub mean_objective: Vec<f64>,
    pub mean_iters: f64,
    pub stderr_iters: f64,
    /// Mean first iteration whose objective is within 1% of the trial's
    /// final objective.
    pub mean_iters_to_1pct: f64,
    /// Per-trial iteration counts, for paired comparisons.
    pub iters: Vec<f64>,
}

/// Convergence study: average the outer-iteration objective trajectory over
/// trials, for both initialization modes.
pub fn run_convergence_study(config: &ExperimentConfig) -> Result<Vec<ConvergenceCurve>> {
    config.validate()?;
    let snr_db = config.snr_db[0];
    let dims = config.dims_at(snr_db);
    let mut curves = Vec::new();
    for &algorithm in &config.algorithms {
        if algorithm == Algorithm::FullDigital {
            continue;
        }
        for init in [InitMode::Vfd, InitMode::Random] {
            eprintln!("convergence: algorithm={algorithm} init={init:?} ({} trials)", config.trials);
            let traces: Vec<Vec<TraceRow>> = run_trials(config.trials, |trial| {
                let channel = config.channel_for_trial(trial)?;
                let mut opts = config.solver_options(algorithm, trial);
                opts.init = init;
                let out = solve(&channel, &dims, &opts)?;
                Ok(out.trace.rows)
            })?;
            let max_len = traces.iter().map(|t| t.len()).max().unwrap_or(0);
            let mut mean_objective = Vec::with_capacity(max_len);
            for i in 0..max_len {
                let vals: Vec<f64> = traces
                    .iter()
                    .map(|t| {
                        t.get(i)
                            .map(|r| r.objective)
                            .unwrap_or_else(|| t.last().unwrap().objective)
                    })
                    .collect();
                mean_objective.push(mean_stderr(&vals).0);
            }
            let iters: Vec<f64> = traces.iter().map(|t| t.len() as f64).collect();
            let (mean_iters, stderr_iters) = mean_stderr(&iters);
            let to_1pct: Vec<f64> = traces
                .iter()
                .map(|t| {
                    let fin = t.last().unwrap().objective;
                    let idx = t
                        .iter()
                        .position(|r| r.objective - fin <= 0.01 * fin.abs())
                        .unwrap_or(t.len() - 1);
                    (idx + 1) as f64
                })
                .collect();
            curves.push(ConvergenceCurve {
                algorithm,
                init,
                mean_objective,
                mean_iters,
                stderr_iters,
                mean_iters_to_1pct: mean_stderr(&to_1pct).0,
                iters,
            });
        }
    }
    Ok(curves)
}

pub fn convergence_to_csv(curves: &[ConvergenceCurve], trials: usize) -> String {
    let mut out = String::from("algorithm,init,outer_iter,mean_objective,trials\n");
    for c in curves {
        let init = match c.init {
            InitMode::Vfd => "vfd",
            InitMode::Random => "random",
        };
        for (i, obj) in c.mean_objective.iter().enumerate() {
            let _ = writeln!(out, "{},{},{},{},{}", c.algorithm, init, i + 1, obj, trials);
        }
    }
    out
}

/// One row of the quantization study: metric value at `q_bits` phase bits
/// (`q_bits = 0` is the unquantized baseline).
#[derive(Debug, Clone)]
pub struct QuantRecord {
    pub algorithm: Algorithm,
    pub criterion: Criterion,
    pub scenario: &'static str,
    pub q_bits: u32,
    pub metric: Metric,
    pub value: f64,
    pub stderr: f64,
    pub trials: usize,
    pub seed: u64,
}

pub fn quant_records_to_csv(records: &[QuantRecord]) -> String {
    let mut out = String::from("algorithm,criterion,scenario,q_bits,metric,value,stderr,trials,seed\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.algorithm, r.criterion, r.scenario, r.q_bits, r.metric, r.value, r.stderr, r.trials, r.seed
        );
    }
    out
}

/// Phase-quantization study at the first configured SNR: solve once per
/// trial, quantize the analog parts for each `q`, re-evaluate the metrics
/// with paired noise.
pub fn run_quantization_study(config: &ExperimentConfig) -> Result<Vec<QuantRecord>> {
    config.validate()?;
    if config.quant_bits.is_empty() {
        return Err(HbfError::Config("quant_bits must be nonempty".into()));
    }
    let snr_db = config.snr_db[0];
    let dims = config.dims_at(snr_db);
    let mut records = Vec::new();
    for &algorithm in &config.algorithms {
        if algorithm == Algorithm::FullDigital {
            // No analog phases to quantize.
            continue;
        }
        eprintln!("quantization: algorithm={algorithm} ({} trials)", config.trials);
        let per_trial: Vec<Vec<TrialMetrics>> = run_trials(config.trials, |trial| {
            let channel = config.channel_for_trial(trial)?;
            let opts = config.solver_options(algorithm, trial);
            let out = solve(&channel, &dims, &opts)?;
            let hybrid = out
                .beamformer
                .as_hybrid()
                .expect("constrained algorithms produce hybrid beamformers")
                .clone();
            let mut row = Vec::with_capacity(config.quant_bits.len() + 1);
            // Paired evaluation: identical noise/data stream per trial.
            let baseline = {
                let mut rng = derive_rng(config.seed, STREAM_NOISE, trial);
                let stats = run_link_trial(
                    &channel,
                    &hybrid,
                    dims.noise_var,
                    config.symbols_per_trial,
                    &mut rng,
                );
                TrialMetrics {
                    mse: sum_mse(&channel.per_subcarrier, &hybrid, dims.noise_var)?
                        / dims.n_subcarriers as f64,
                    ber: stats.ber(),
                    se: spectral_efficiency(&channel.per_subcarrier, &hybrid, dims.noise_var)?,
                }
            };
            row.push(baseline);
            for &q in &config.quant_bits {
                let qbf = crate::driver::quantize_phases(
                    &hybrid,
                    q,
                    &channel.per_subcarrier,
                    dims.noise_var,
                )?;
                let mut rng = derive_rng(config.seed, STREAM_NOISE, trial);
                let stats = run_link_trial(
                    &channel,
                    &qbf,
                    dims.noise_var,
                    config.symbols_per_trial,
                    &mut rng,
                );
                row.push(TrialMetrics {
                    mse: sum_mse(&channel.per_subcarrier, &qbf, dims.noise_var)?
                        / dims.n_subcarriers as f64,
                    ber: stats.ber(),
                    se: spectral_efficiency(&channel.per_subcarrier, &qbf, dims.noise_var)?,
                });
            }
            Ok(row)
        })?;

        let mut emit = |q_bits: u32, idx: usize| {
            let per_metric = [
                (Metric::Mse, per_trial.iter().map(|r| r[idx].mse).collect::<Vec<_>>()),
                (Metric::Ber, per_trial.iter().map(|r| r[idx].ber).collect::<Vec<_>>()),
                (Metric::Se, per_trial.iter().map(|r| r[idx].se).collect::<Vec<_>>()),
            ];
            for (metric, values) in per_metric {
                let (value, stderr) = mean_stderr(&values);
                records.push(QuantRecord {
                    algorithm,
                    criterion: config.criterion,
                    scenario: config.scenario(),
                    q_bits,
                    metric,
                    value,
                    stderr,
                    trials: config.trials,
                    seed: config.seed,
                });
            }
        };
        emit(0, 0);
        for (i, &q) in config.quant_bits.iter().enumerate() {
            emit(q, i + 1);
        }
    }
    Ok(records)
}

/// Write a CSV artifact together with the resolved config as JSON.
pub fn write_artifact(path: &Path, csv: &str, config: &ExperimentConfig) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| HbfError::io(parent, e))?;
        }
    }
    std::fs::write(path, csv).map_err(|e| HbfError::io(path, e))?;
    let json = serde_json::to_string_pretty(config)
        .map_err(|e| HbfError::Config(format!("config serialization: {e}")))?;
    let json_path = path.with_extension("config.json");
    std::fs::write(&json_path, json).map_err(|e| HbfError::io(json_path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mmse::full_digital_mmse;

    #[test]
    fn qpsk_mapping() {
        let syms = qpsk_modulate(&[0, 0]);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((syms[0] - cx(s, s)).norm() < 1e-15);
        for bits in [[0u8, 0], [0, 1], [1, 0], [1, 1]] {
            let z = qpsk_modulate(&bits)[0];
            assert!((z.norm() - 1.0).abs() < 1e-15);
        }
        // Round trip.
        let bits: Vec<u8> = vec![0, 1, 1, 0, 1, 1, 0, 0];
        assert_eq!(qpsk_demodulate(&qpsk_modulate(&bits)), bits);
        // Slicing signs and the zero tie rule.
        assert_eq!(qpsk_demodulate(&[cx(-0.3, 0.9)]), vec![1, 0]);
        assert_eq!(qpsk_demodulate(&[cx(0.0, 0.0)]), vec![0, 0]);
    }

    #[test]
    fn noiseless_full_digital_link_is_error_free() {
        let config = ExperimentConfig {
            n_tx: 8,
            n_rx: 8,
            seed: 5,
            ..Default::default()
        };
        let channel = config.channel_for_trial(0).unwrap();
        let mut dims = config.dims_at(0.0);
        dims.noise_var = 1e-12;
        let fd = full_digital_mmse(&channel.per_subcarrier, &dims).unwrap();
        let mut rng = derive_rng(5, STREAM_NOISE, 0);
        let stats = run_link_trial(&channel, &fd, dims.noise_var, 10_000, &mut rng);
        assert_eq!(stats.bit_errors, 0);
    }

    #[test]
    fn zero_beamformer_guesses_half() {
        // V = W = 0 is not representable as a Transceiver with beta > 0 power
        // normalization, so drive the slicer directly: independent noise on
        // both rails gives BER 1/2.
        let mut rng = derive_rng(6, STREAM_NOISE, 1);
        let n = 100_000;
        let mut errors = 0u64;
        for _ in 0..n {
            let bits: Vec<u8> = vec![rng.gen_range(0..2u8), rng.gen_range(0..2u8)];
            let est = cx(
                rng.sample::<f64, _>(rand_distr::StandardNormal),
                rng.sample::<f64, _>(rand_distr::StandardNormal),
            );
            let got = qpsk_demodulate(&[est]);
            errors += bits.iter().zip(&got).filter(|(a, b)| a != b).count() as u64;
        }
        let ber = errors as f64 / (2 * n) as f64;
        let sigma = (0.25f64 / (2.0 * n as f64)).sqrt();
        assert!((ber - 0.5).abs() < 3.0 * sigma, "ber = {ber}");
    }

    #[test]
    fn empirical_mse_matches_analytic() {
        let config = ExperimentConfig {
            n_tx: 8,
            n_rx: 8,
            seed: 7,
            ..Default::default()
        };
        let dims = config.dims_at(-5.0);
        for trial in 0..10 {
            let channel = config.channel_for_trial(trial).unwrap();
            let fd = full_digital_mmse(&channel.per_subcarrier, &dims).unwrap();
            let analytic = sum_mse(&channel.per_subcarrier, &fd, dims.noise_var).unwrap();
            let mut rng = derive_rng(7, STREAM_NOISE, trial);
            let stats = run_link_trial(&channel, &fd, dims.noise_var, 100_000, &mut rng);
            assert!(
                (stats.empirical_mse - analytic).abs() < 3.0 * stats.mse_stderr,
                "trial {trial}: empirical {} vs analytic {analytic} (se {})",
                stats.empirical_mse,
                stats.mse_stderr
            );
        }
    }

    #[test]
    fn sweep_structure_and_determinism() {
        let config = ExperimentConfig {
            n_tx: 8,
            n_rx: 8,
            trials: 2,
            snr_db: vec![-10.0, 0.0],
            algorithms: vec![Algorithm::FullDigital, Algorithm::EvdLb],
            symbols_per_trial: 50,
            seed: 9,
            ..Default::default()
        };
        let records = run_sweep(&config).unwrap();
        assert_eq!(records.len(), 2 * 2 * 3);
        let csv_a = sweep_records_to_csv(&records);
        let csv_b = sweep_records_to_csv(&run_sweep(&config).unwrap());
        assert_eq!(csv_a, csv_b);
        for r in &records {
            match r.metric {
                Metric::Ber => assert!((0.0..=1.0).contains(&r.value)),
                Metric::Mse | Metric::Se => assert!(r.value >= 0.0),
            }
        }
    }

    #[test]
    fn single_trial_fd_sweep_has_one_record_per_metric() {
        let config = ExperimentConfig {
            n_tx: 8,
            n_rx: 8,
            trials: 1,
            snr_db: vec![0.0],
            algorithms: vec![Algorithm::FullDigital],
            symbols_per_trial: 10,
            ..Default::default()
        };
        let records = run_sweep(&config).unwrap();
        assert_eq!(records.len(), 3);
    }
}

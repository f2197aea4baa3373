//! Command-line front end: config parsing, experiment dispatch, artifact
//! output.
//!
//! Configs are flat `key = value` lines under `[section]` headers (see
//! [`serialize_config`] for the canonical form); `#` starts a comment.
//! Command-line flags override file values. Every experiment writes all of
//! its artifacts under `--out`, and each CSV is accompanied by a JSON dump
//! of the resolved config.
//!
//! Exit codes: 0 success, 1 config error, 2 solver failure.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

use crate::driver::{solve, Algorithm, Criterion, InitMode};
use crate::error::HbfError;
use crate::fixture;
use crate::harness::{
    convergence_to_csv, quant_records_to_csv, run_convergence_study, run_quantization_study,
    run_sweep, sweep_records_to_csv, write_artifact, ExperimentConfig,
};
use crate::mmse::{spectral_efficiency, sum_mse};

/// A config parse problem, tagged with its 1-based line number (0 when the
/// problem spans the whole file).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.line > 0 {
            write!(f, "line {}: {}", self.line, self.message)
        } else {
            write!(f, "{}", self.message)
        }
    }
}

fn parse_scalar<T: std::str::FromStr>(value: &str, line: usize, key: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse::<T>().map_err(|e| ConfigError {
        line,
        message: format!("bad value for `{key}`: {e}"),
    })
}

fn parse_list<T: std::str::FromStr>(value: &str, line: usize, key: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(|t| parse_scalar::<T>(t, line, key))
        .collect()
}

/// Parse the line-oriented config grammar into a fully validated
/// [`ExperimentConfig`], or all the problems found.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, Vec<ConfigError>> {
    let mut config = ExperimentConfig::default();
    let mut errors = Vec::new();
    let mut section = String::new();
    let mut key_lines: std::collections::HashMap<&'static str, usize> = Default::default();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            match name.strip_suffix(']') {
                Some(name) if ["system", "channel", "experiment"].contains(&name.trim()) => {
                    section = name.trim().to_string();
                }
                Some(name) => errors.push(ConfigError {
                    line: line_no,
                    message: format!("unknown section `[{}]`", name.trim()),
                }),
                None => errors.push(ConfigError {
                    line: line_no,
                    message: "unterminated section header".into(),
                }),
            }
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            errors.push(ConfigError {
                line: line_no,
                message: format!("expected `key = value`, got `{line}`"),
            });
            continue;
        };
        let key = key.trim();
        let value = value.trim();
        let mut set = |k: &'static str| {
            key_lines.insert(k, line_no);
        };
        let result: Result<(), ConfigError> = (|| {
            match (section.as_str(), key) {
                ("system", "n_tx") => config.n_tx = parse_scalar(value, line_no, key)?,
                ("system", "n_rx") => config.n_rx = parse_scalar(value, line_no, key)?,
                ("system", "n_rf") => config.n_rf = parse_scalar(value, line_no, key)?,
                ("system", "n_streams") => config.n_streams = parse_scalar(value, line_no, key)?,
                ("system", "n_subcarriers") => {
                    set("n_subcarriers");
                    config.n_subcarriers = parse_scalar(value, line_no, key)?;
                }
                ("channel", "n_clusters") => config.n_clusters = parse_scalar(value, line_no, key)?,
                ("channel", "rays_per_cluster") => {
                    config.rays_per_cluster = parse_scalar(value, line_no, key)?
                }
                ("channel", "angular_spread_deg") => {
                    config.angular_spread_deg = parse_scalar(value, line_no, key)?
                }
                ("experiment", "snr_db") => config.snr_db = parse_list(value, line_no, key)?,
                ("experiment", "trials") => config.trials = parse_scalar(value, line_no, key)?,
                ("experiment", "algorithms") => {
                    set("algorithms");
                    config.algorithms = value
                        .split(',')
                        .map(|t| {
                            t.trim().parse::<Algorithm>().map_err(|e| ConfigError {
                                line: line_no,
                                message: e.to_string(),
                            })
                        })
                        .collect::<Result<_, _>>()?;
                }
                ("experiment", "criterion") => {
                    set("criterion");
                    config.criterion = value.parse::<Criterion>().map_err(|e| ConfigError {
                        line: line_no,
                        message: e.to_string(),
                    })?;
                }
                ("experiment", "init") => {
                    config.init = value.parse::<InitMode>().map_err(|e| ConfigError {
                        line: line_no,
                        message: e.to_string(),
                    })?;
                }
                ("experiment", "seed") => config.seed = parse_scalar(value, line_no, key)?,
                ("experiment", "symbols_per_trial") => {
                    config.symbols_per_trial = parse_scalar(value, line_no, key)?
                }
                ("experiment", "quant_bits") => {
                    config.quant_bits = parse_list(value, line_no, key)?
                }
                ("experiment", "outer_tol") => config.outer_tol = parse_scalar(value, line_no, key)?,
                ("experiment", "outer_cap") => config.outer_cap = parse_scalar(value, line_no, key)?,
                ("", k) => {
                    return Err(ConfigError {
                        line: line_no,
                        message: format!("key `{k}` appears before any [section] header"),
                    })
                }
                (s, k) => {
                    return Err(ConfigError {
                        line: line_no,
                        message: format!("unknown key `{k}` in section [{s}]"),
                    })
                }
            }
            Ok(())
        })();
        if let Err(e) = result {
            errors.push(e);
        }
    }

    // Cross-key constraints, named after the offending keys.
    if config.algorithms.contains(&Algorithm::Gevd) && config.n_subcarriers > 1 {
        errors.push(ConfigError {
            line: *key_lines.get("algorithms").unwrap_or(&0),
            message: format!(
                "`algorithms` contains gevd but `n_subcarriers` = {}: gevd requires narrowband",
                config.n_subcarriers
            ),
        });
    }
    if config.algorithms.contains(&Algorithm::EvdUb) && config.criterion == Criterion::Wmmse {
        errors.push(ConfigError {
            line: *key_lines.get("criterion").unwrap_or(&0),
            message: "`algorithms` contains evd-ub but `criterion` is wmmse".into(),
        });
    }
    if errors.is_empty() {
        if let Err(e) = config.validate() {
            errors.push(ConfigError {
                line: 0,
                message: e.to_string(),
            });
        }
    }
    if errors.is_empty() {
        Ok(config)
    } else {
        Err(errors)
    }
}

/// Canonical text form of a config; `parse_config` inverts it.
pub fn serialize_config(c: &ExperimentConfig) -> String {
    let join_f64 = |xs: &[f64]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
    let algos = c
        .algorithms
        .iter()
        .map(|a| a.to_string())
        .collect::<Vec<_>>()
        .join(", ");
    let quant = c
        .quant_bits
        .iter()
        .map(|q| q.to_string())
        .collect::<Vec<_>>()
        .join(", ");
    let init = match c.init {
        InitMode::Vfd => "vfd",
        InitMode::Random => "random",
    };
    format!(
        "[system]\n\
         n_tx = {}\n\
         n_rx = {}\n\
         n_rf = {}\n\
         n_streams = {}\n\
         n_subcarriers = {}\n\
         \n\
         [channel]\n\
         n_clusters = {}\n\
         rays_per_cluster = {}\n\
         angular_spread_deg = {}\n\
         \n\
         [experiment]\n\
         snr_db = {}\n\
         trials = {}\n\
         algorithms = {}\n\
         criterion = {}\n\
         init = {}\n\
         seed = {}\n\
         symbols_per_trial = {}\n\
         quant_bits = {}\n\
         outer_tol = {}\n\
         outer_cap = {}\n",
        c.n_tx,
        c.n_rx,
        c.n_rf,
        c.n_streams,
        c.n_subcarriers,
        c.n_clusters,
        c.rays_per_cluster,
        c.angular_spread_deg,
        join_f64(&c.snr_db),
        c.trials,
        algos,
        c.criterion,
        init,
        c.seed,
        c.symbols_per_trial,
        quant,
        c.outer_tol,
        c.outer_cap
    )
}

#[derive(Parser, Debug)]
#[command(
    name = "hbf",
    about = "Hybrid beamforming Monte Carlo experiments for mmWave MIMO"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// MSE/BER/spectral-efficiency sweep over the SNR grid.
    Sweep(RunArgs),
    /// Mean objective vs outer iteration, VFD vs random initialization.
    Converge(RunArgs),
    /// Metrics vs analog phase quantization bits.
    Quantize(RunArgs),
    /// Solve one seeded channel and dump the beamformer.
    SolveOne(RunArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Config file in the `key = value` grammar.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated algorithms (mo, gevd, evd-lb, evd-ub, omp, fd).
    #[arg(long)]
    algo: Option<String>,
    /// mmse | wmmse.
    #[arg(long)]
    criterion: Option<String>,
    /// narrowband | broadband (broadband defaults to 16 subcarriers).
    #[arg(long)]
    scenario: Option<String>,
    /// Comma-separated SNR grid in dB.
    #[arg(long)]
    snr: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated quantization bit counts.
    #[arg(long)]
    quant_bits: Option<String>,
    /// Output directory; all artifacts land here.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Paper-scale run: 64x64 antennas, 64 subcarriers, 1000 trials.
    #[arg(long)]
    paper_scale: bool,
    /// Also write the outer-iteration trace CSV (solve-one).
    #[arg(long)]
    trace: bool,
    /// Render SVG charts next to the CSVs.
    #[arg(long)]
    plot: bool,
}

fn resolve_config(args: &RunArgs) -> Result<ExperimentConfig, i32> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                eprintln!("error: cannot read config {}: {e}", path.display());
                1
            })?;
            parse_config(&text).map_err(|errors| {
                for e in &errors {
                    eprintln!("error: {}: {e}", path.display());
                }
                1
            })?
        }
        None => ExperimentConfig::default(),
    };

    if args.paper_scale {
        config = config.paper_scale();
        eprintln!(
            "warning: paper-scale run (64x64 antennas, {} subcarriers, {} trials) may take hours",
            config.n_subcarriers, config.trials
        );
    }
    let parse_err = |msg: String| -> i32 {
        eprintln!("error: {msg}");
        1
    };
    if let Some(algo) = &args.algo {
        config.algorithms = algo
            .split(',')
            .map(|t| t.trim().parse::<Algorithm>())
            .collect::<Result<_, _>>()
            .map_err(|e| parse_err(e.to_string()))?;
    }
    if let Some(c) = &args.criterion {
        config.criterion = c.parse().map_err(|e: HbfError| parse_err(e.to_string()))?;
    }
    if let Some(s) = &args.scenario {
        match s.as_str() {
            "narrowband" => config.n_subcarriers = 1,
            "broadband" => {
                if config.n_subcarriers == 1 {
                    config.n_subcarriers = 16;
                }
            }
            other => return Err(parse_err(format!("unknown scenario `{other}`"))),
        }
    }
    if let Some(snr) = &args.snr {
        config.snr_db = snr
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| parse_err(format!("bad --snr: {e}")))?;
    }
    if let Some(t) = args.trials {
        config.trials = t;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(q) = &args.quant_bits {
        config.quant_bits = q
            .split(',')
            .map(|t| t.trim().parse::<u32>())
            .collect::<Result<_, _>>()
            .map_err(|e| parse_err(format!("bad --quant-bits: {e}")))?;
    }
    config.validate().map_err(|e| parse_err(e.to_string()))?;
    Ok(config)
}

fn solver_exit(e: HbfError) -> i32 {
    eprintln!("error: {e}");
    2
}

fn cmd_sweep(args: &RunArgs) -> i32 {
    let config = match resolve_config(args) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let records = match run_sweep(&config) {
        Ok(r) => r,
        Err(e) => return solver_exit(e),
    };
    let csv_path = args.out.join("sweep.csv");
    if let Err(e) = write_artifact(&csv_path, &sweep_records_to_csv(&records), &config) {
        return solver_exit(e);
    }
    eprintln!("wrote {}", csv_path.display());
    if args.plot {
        match crate::plot::plot_sweep(&records, &args.out, "sweep") {
            Ok(paths) => {
                for p in paths {
                    eprintln!("wrote {}", p.display());
                }
            }
            Err(e) => return solver_exit(e),
        }
    }
    0
}

fn cmd_converge(args: &RunArgs) -> i32 {
    let config = match resolve_config(args) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let curves = match run_convergence_study(&config) {
        Ok(c) => c,
        Err(e) => return solver_exit(e),
    };
    let csv_path = args.out.join("convergence.csv");
    if let Err(e) = write_artifact(&csv_path, &convergence_to_csv(&curves, config.trials), &config)
    {
        return solver_exit(e);
    }
    eprintln!("wrote {}", csv_path.display());
    for c in &curves {
        eprintln!(
            "algorithm={} init={:?}: mean outer iterations {:.2} (se {:.2}), within 1% of final after {:.2}",
            c.algorithm, c.init, c.mean_iters, c.stderr_iters, c.mean_iters_to_1pct
        );
    }
    0
}

fn cmd_quantize(args: &RunArgs) -> i32 {
    let config = match resolve_config(args) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let records = match run_quantization_study(&config) {
        Ok(r) => r,
        Err(e) => return solver_exit(e),
    };
    let csv_path = args.out.join("quantization.csv");
    if let Err(e) = write_artifact(&csv_path, &quant_records_to_csv(&records), &config) {
        return solver_exit(e);
    }
    eprintln!("wrote {}", csv_path.display());
    if args.plot {
        match crate::plot::plot_quantization(&records, &args.out, "quantization") {
            Ok(paths) => {
                for p in paths {
                    eprintln!("wrote {}", p.display());
                }
            }
            Err(e) => return solver_exit(e),
        }
    }
    0
}

fn cmd_solve_one(args: &RunArgs) -> i32 {
    let config = match resolve_config(args) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let algorithm = config.algorithms[0];
    let snr_db = config.snr_db[0];
    let dims = config.dims_at(snr_db);
    let channel = match config.channel_for_trial(0) {
        Ok(c) => c,
        Err(e) => return solver_exit(e),
    };
    let mut opts = crate::driver::SolverOptions {
        algorithm,
        criterion: config.criterion,
        init: config.init,
        outer_tol: config.outer_tol,
        outer_cap: config.outer_cap,
        seed: config.seed,
        ..Default::default()
    };
    opts.quant_bits = None;
    let out = match solve(&channel, &dims, &opts) {
        Ok(o) => o,
        Err(e) => return solver_exit(e),
    };
    let mse = sum_mse(&channel.per_subcarrier, &out.beamformer, dims.noise_var)
        .map(|m| m / dims.n_subcarriers as f64);
    let se = spectral_efficiency(&channel.per_subcarrier, &out.beamformer, dims.noise_var);
    let (mse, se) = match (mse, se) {
        (Ok(m), Ok(s)) => (m, s),
        (Err(e), _) | (_, Err(e)) => return solver_exit(e),
    };
    println!(
        "algorithm={algorithm} criterion={} scenario={} snr_db={snr_db} mse={mse} se={se} outer_iters={}",
        config.criterion,
        config.scenario(),
        out.trace.rows.len()
    );

    if let Err(code) = std::fs::create_dir_all(&args.out).map_err(|e| {
        eprintln!("error: cannot create {}: {e}", args.out.display());
        2
    }) {
        return code;
    }
    let bf_path = args.out.join("beamformer.txt");
    let write_result = match &out.beamformer {
        crate::driver::SolvedBeamformer::Hybrid(bf) => fixture::save_beamformer(&bf_path, bf),
        crate::driver::SolvedBeamformer::FullDigital(fd) => {
            let mut text = String::from("# v\n");
            text.push_str(&fixture::write_matrix_stack(&fd.v));
            text.push_str("# w\n");
            text.push_str(&fixture::write_matrix_stack(&fd.w));
            std::fs::write(&bf_path, text).map_err(|e| HbfError::io(&bf_path, e))
        }
    };
    if let Err(e) = write_result {
        return solver_exit(e);
    }
    eprintln!("wrote {}", bf_path.display());
    if args.trace {
        let trace_path = args.out.join("trace.csv");
        if let Err(e) = write_artifact(&trace_path, &out.trace.to_csv(), &config) {
            return solver_exit(e);
        }
        eprintln!("wrote {}", trace_path.display());
    }
    0
}

/// Entry point for the `hbf` binary; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match &cli.command {
        Command::Sweep(args) => cmd_sweep(args),
        Command::Converge(args) => cmd_converge(args),
        Command::Quantize(args) => cmd_quantize(args),
        Command::SolveOne(args) => cmd_solve_one(args),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let config = parse_config("").unwrap();
        assert_eq!(config.n_tx, 16);
        assert_eq!(config.n_rx, 16);
        assert_eq!(config.n_subcarriers, 1);
    }

    #[test]
    fn gevd_broadband_error_names_both_keys() {
        let text = "[system]\nn_subcarriers = 64\n[experiment]\nalgorithms = gevd\n";
        let errors = parse_config(text).unwrap_err();
        let joined = errors.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ");
        assert!(joined.contains("algorithms"), "{joined}");
        assert!(joined.contains("n_subcarriers"), "{joined}");
        assert!(joined.contains("line 4"), "{joined}");
    }

    #[test]
    fn unknown_key_reports_line() {
        let text = "[system]\nn_tx = 8\nbogus = 3\n";
        let errors = parse_config(text).unwrap_err();
        assert_eq!(errors.len(), 1);
        assert_eq!(errors[0].line, 3);
        assert!(errors[0].message.contains("bogus"));
    }

    #[test]
    fn type_mismatch_reports_line() {
        let text = "[experiment]\ntrials = many\n";
        let errors = parse_config(text).unwrap_err();
        assert_eq!(errors[0].line, 2);
    }

    #[test]
    fn config_round_trips() {
        let text = "[system]\nn_tx = 8\nn_rx = 12\nn_rf = 3\nn_streams = 2\nn_subcarriers = 4\n\
                    [experiment]\nsnr_db = -10, -5\nalgorithms = mo, evd-lb, fd\nseed = 42\n";
        let a = parse_config(text).unwrap();
        let b = parse_config(&serialize_config(&a)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn comments_and_blanks_ignored() {
        let text = "# leading comment\n\n[system]\nn_tx = 4 # trailing\nn_rx = 4\nn_rf = 2\n";
        let config = parse_config(text).unwrap();
        assert_eq!(config.n_tx, 4);
    }
}

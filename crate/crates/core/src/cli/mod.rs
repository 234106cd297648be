//! Batch front end: four subcommands (simulate, identify, reconstruct,
//! evaluate) over a flat key=value config. Every flag mirrors a config key;
//! flags win. Artifacts are byte-reproducible for a fixed config + seed
//! (wall times are reported as 0.0 unless --timing is passed).

pub mod artifacts;
pub mod commands;
pub mod ingest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::Config;
use crate::error::{Error, ErrorCategory, Result};

#[derive(Parser, Debug)]
#[command(name = "hdmd", version, about = "Hankel-DMD modal identification and virtual sensing")]
pub struct Cli {
    /// key=value config file; command-line flags override its keys
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for anything stochastic (only simulate draws randomness)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory artifacts are written into
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Worker threads for parallel sections (default: all cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Record real wall times in artifacts (breaks byte-reproducibility)
    #[arg(long, global = true)]
    pub timing: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic plant record plus ground-truth JSON
    Simulate(SimulateArgs),
    /// Fit a model from a data CSV; write model, modes, and eigenvalues
    Identify(IdentifyArgs),
    /// Rolling virtual sensing of hidden channels from a trained model
    Reconstruct(ReconstructArgs),
    /// Compare a model against ground truth; optional Lyapunov estimate
    Evaluate(EvaluateArgs),
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Plant preset: fowt | none [synth.preset]
    #[arg(long)]
    pub preset: Option<String>,
    /// Record length in seconds [synth.duration_s]
    #[arg(long)]
    pub duration_s: Option<f64>,
    /// Noise level as a fraction of per-channel RMS [synth.noise_std]
    #[arg(long)]
    pub noise_std: Option<f64>,
}

#[derive(Args, Debug)]
pub struct IdentifyArgs {
    /// Input data CSV [input]
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Sample period when the CSV has no time column [dt]
    #[arg(long)]
    pub dt: Option<f64>,
    /// Hankel delay window in seconds [identify.delay_s]
    #[arg(long)]
    pub delay_s: Option<f64>,
    /// Cap on the delay count d [identify.max_d]
    #[arg(long)]
    pub max_d: Option<usize>,
    /// Truncation rank for the fixed policy [identify.rank]
    #[arg(long)]
    pub rank: Option<usize>,
    /// fixed | energy | gavish_donoho [identify.rank_policy]
    #[arg(long)]
    pub rank_policy: Option<String>,
    /// Cumulative energy target for the energy policy [identify.energy_tau]
    #[arg(long)]
    pub energy_tau: Option<f64>,
    /// Use exact (non-projected) mode shapes [identify.exact_modes]
    #[arg(long)]
    pub exact_modes: bool,
    /// snapshot | global amplitude fit [identify.amplitude_source]
    #[arg(long)]
    pub amplitude_source: Option<String>,
    /// Samples used by the global amplitude fit [identify.k_fit]
    #[arg(long)]
    pub k_fit: Option<usize>,
    /// Normalized energy floor for the structural label [identify.stability_floor]
    #[arg(long)]
    pub stability_floor: Option<f64>,
    /// Bandpass order [filter.order]
    #[arg(long)]
    pub filter_order: Option<usize>,
    /// Bandpass low cut, Hz [filter.low_hz]
    #[arg(long)]
    pub filter_low_hz: Option<f64>,
    /// Bandpass high cut, Hz [filter.high_hz]
    #[arg(long)]
    pub filter_high_hz: Option<f64>,
    /// Causal (single-pass) filtering instead of zero-phase [filter.zero_phase=false]
    #[arg(long)]
    pub causal: bool,
    /// Comma-separated d values for ensemble shape bands [ensemble.d_values]
    #[arg(long)]
    pub ensemble_d: Option<String>,
}

#[derive(Args, Debug)]
pub struct ReconstructArgs {
    /// Trained model container [model]
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Test data CSV [input]
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Comma-separated hidden channels, names or indices [mask.hidden]
    #[arg(long)]
    pub hidden: Option<String>,
    /// Re-calibration horizon in seconds [reconstruct.horizon_s]
    #[arg(long)]
    pub horizon_s: Option<f64>,
    /// Calibration window in samples (default: model d) [reconstruct.calibration_len]
    #[arg(long)]
    pub calibration_len: Option<usize>,
    /// SVD cutoff for full calibration windows [reconstruct.rcond]
    #[arg(long)]
    pub rcond: Option<f64>,
    /// SVD cutoff for short startup windows [reconstruct.rcond_short]
    #[arg(long)]
    pub rcond_short: Option<f64>,
    /// Energy floor for mode retention [reconstruct.stability_floor]
    #[arg(long)]
    pub stability_floor: Option<f64>,
    /// Write reconstruction in physical units [reconstruct.denormalize]
    #[arg(long)]
    pub denormalize: bool,
    /// Proceed when observations underdetermine the amplitudes [reconstruct.allow_underdetermined]
    #[arg(long)]
    pub allow_underdetermined: bool,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Trained model container [model]
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Ground-truth JSON from simulate [truth]
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Reference modes CSV (freq_hz, then one shape column per sensor) [reference_modes]
    #[arg(long)]
    pub reference_modes: Option<PathBuf>,
    /// Data CSV for the Lyapunov estimate [input]
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Channel (name or index) whose raw signal is analyzed [evaluate.lyapunov_channel]
    #[arg(long)]
    pub lyapunov_channel: Option<String>,
    /// Delay-embedding dimension [evaluate.embed_dim]
    #[arg(long)]
    pub embed_dim: Option<usize>,
    /// Embedding lag in samples (default: first autocorrelation zero) [evaluate.lag]
    #[arg(long)]
    pub lag: Option<usize>,
    /// Theiler exclusion in samples (default: one mean period) [evaluate.theiler]
    #[arg(long)]
    pub theiler: Option<usize>,
    /// Divergence-fit start, samples [evaluate.fit_start]
    #[arg(long)]
    pub fit_start: Option<usize>,
    /// Divergence-fit end, samples (default: 2 s worth) [evaluate.fit_end]
    #[arg(long)]
    pub fit_end: Option<usize>,
    /// Relative frequency gate for mode matching [evaluate.freq_gate]
    #[arg(long)]
    pub freq_gate: Option<f64>,
    /// Energy floor for which modes enter matching [evaluate.stability_floor]
    #[arg(long)]
    pub stability_floor: Option<f64>,
}

/// Resolved run parameters: file config with flag overrides applied.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub cfg: Config,
}

impl RunConfig {
    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.cfg.str_or("out_dir", "."))
    }

    pub fn seed(&self) -> Result<u64> {
        self.cfg.u64_or("seed", 0)
    }

    pub fn timing(&self) -> Result<bool> {
        self.cfg.bool_or("timing", false)
    }

    pub fn require_file(&self, key: &str) -> Result<PathBuf> {
        let path = PathBuf::from(self.cfg.require(key)?);
        if !path.is_file() {
            return Err(Error::Config(format!("{key} file {} not found", path.display())));
        }
        Ok(path)
    }
}

fn set_if<T: ToString>(cfg: &mut Config, key: &str, value: &Option<T>) {
    if let Some(v) = value {
        cfg.set(key, v.to_string());
    }
}

fn set_path(cfg: &mut Config, key: &str, value: &Option<PathBuf>) {
    if let Some(v) = value {
        cfg.set(key, v.display().to_string());
    }
}

/// Merges the config file and flags into the final [`RunConfig`].
pub fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            if !path.is_file() {
                return Err(Error::Config(format!("config file {} not found", path.display())));
            }
            Config::from_file(path)?
        }
        None => Config::new(),
    };
    set_if(&mut cfg, "seed", &cli.seed);
    set_path(&mut cfg, "out_dir", &cli.out_dir);
    if cli.timing {
        cfg.set("timing", "true");
    }
    match &cli.command {
        Command::Simulate(a) => {
            set_if(&mut cfg, "synth.preset", &a.preset);
            set_if(&mut cfg, "synth.duration_s", &a.duration_s);
            set_if(&mut cfg, "synth.noise_std", &a.noise_std);
        }
        Command::Identify(a) => {
            set_path(&mut cfg, "input", &a.input);
            set_if(&mut cfg, "dt", &a.dt);
            set_if(&mut cfg, "identify.delay_s", &a.delay_s);
            set_if(&mut cfg, "identify.max_d", &a.max_d);
            set_if(&mut cfg, "identify.rank", &a.rank);
            set_if(&mut cfg, "identify.rank_policy", &a.rank_policy);
            set_if(&mut cfg, "identify.energy_tau", &a.energy_tau);
            if a.exact_modes {
                cfg.set("identify.exact_modes", "true");
            }
            set_if(&mut cfg, "identify.amplitude_source", &a.amplitude_source);
            set_if(&mut cfg, "identify.k_fit", &a.k_fit);
            set_if(&mut cfg, "identify.stability_floor", &a.stability_floor);
            set_if(&mut cfg, "filter.order", &a.filter_order);
            set_if(&mut cfg, "filter.low_hz", &a.filter_low_hz);
            set_if(&mut cfg, "filter.high_hz", &a.filter_high_hz);
            if a.causal {
                cfg.set("filter.zero_phase", "false");
            }
            set_if(&mut cfg, "ensemble.d_values", &a.ensemble_d);
        }
        Command::Reconstruct(a) => {
            set_path(&mut cfg, "model", &a.model);
            set_path(&mut cfg, "input", &a.input);
            set_if(&mut cfg, "mask.hidden", &a.hidden);
            set_if(&mut cfg, "reconstruct.horizon_s", &a.horizon_s);
            set_if(&mut cfg, "reconstruct.calibration_len", &a.calibration_len);
            set_if(&mut cfg, "reconstruct.rcond", &a.rcond);
            set_if(&mut cfg, "reconstruct.rcond_short", &a.rcond_short);
            set_if(&mut cfg, "reconstruct.stability_floor", &a.stability_floor);
            if a.denormalize {
                cfg.set("reconstruct.denormalize", "true");
            }
            if a.allow_underdetermined {
                cfg.set("reconstruct.allow_underdetermined", "true");
            }
        }
        Command::Evaluate(a) => {
            set_path(&mut cfg, "model", &a.model);
            set_path(&mut cfg, "truth", &a.truth);
            set_path(&mut cfg, "reference_modes", &a.reference_modes);
            set_path(&mut cfg, "input", &a.input);
            set_if(&mut cfg, "evaluate.lyapunov_channel", &a.lyapunov_channel);
            set_if(&mut cfg, "evaluate.embed_dim", &a.embed_dim);
            set_if(&mut cfg, "evaluate.lag", &a.lag);
            set_if(&mut cfg, "evaluate.theiler", &a.theiler);
            set_if(&mut cfg, "evaluate.fit_start", &a.fit_start);
            set_if(&mut cfg, "evaluate.fit_end", &a.fit_end);
            set_if(&mut cfg, "evaluate.freq_gate", &a.freq_gate);
            set_if(&mut cfg, "evaluate.stability_floor", &a.stability_floor);
        }
    }
    Ok(RunConfig { cfg })
}

/// Runs the parsed command line. The binary maps the error to an exit code.
pub fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        // First caller wins; a later global-pool error only means a pool
        // already exists, which is fine for tests driving run() in-process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let rc = resolve(cli)?;
    std::fs::create_dir_all(rc.out_dir())?;
    match &cli.command {
        Command::Simulate(_) => commands::cmd_simulate(&rc),
        Command::Identify(_) => commands::cmd_identify(&rc),
        Command::Reconstruct(_) => commands::cmd_reconstruct(&rc),
        Command::Evaluate(_) => commands::cmd_evaluate(&rc),
    }
}

/// Process exit code for an error, per the documented contract
/// (0 success, 2 usage, 3 data, 4 numerical).
pub fn exit_code(err: &Error) -> i32 {
    match err.category() {
        ErrorCategory::Usage => 2,
        ErrorCategory::Data => 3,
        ErrorCategory::Numerical => 4,
    }
}

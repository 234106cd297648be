//! Artifact writers. All output is deterministic for a fixed config: maps
//! are ordered, floats print in shortest round-trip form, and wall times
//! default to 0.0 so repeated runs produce byte-identical files.

use std::collections::BTreeMap;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::koopman::{KoopmanModel, ModalParameterSet, ModeLabel};
use crate::synth::PlantedMode;

#[derive(Serialize)]
pub struct ChannelMetric {
    pub name: String,
    pub hidden: bool,
    pub r2: f64,
    pub nrmse: f64,
}

#[derive(Serialize)]
pub struct MetricsFile {
    pub run_id: String,
    pub config: BTreeMap<String, String>,
    pub per_channel: Vec<ChannelMetric>,
    pub wall_time_s: f64,
}

#[derive(Serialize)]
pub struct TruthFile {
    pub modes: Vec<PlantedMode>,
    pub harmonic_frequencies: Vec<f64>,
    pub config: BTreeMap<String, String>,
}

#[derive(Serialize)]
pub struct MatchEntry {
    pub identified_mode: usize,
    pub reference_mode: usize,
    pub freq_identified_hz: f64,
    pub freq_reference_hz: f64,
    pub freq_error_rel: f64,
    pub mac: f64,
}

#[derive(Serialize)]
pub struct LyapunovReport {
    pub channel: String,
    pub lambda_max: f64,
    /// None when the slope is not positive.
    pub lyapunov_time_s: Option<f64>,
    pub embed_dim: usize,
    pub lag: usize,
    pub theiler: usize,
    pub fit_start: usize,
    pub fit_end: usize,
    pub non_positive_slope: bool,
}

#[derive(Serialize)]
pub struct EvaluationFile {
    pub run_id: String,
    pub config: BTreeMap<String, String>,
    pub matches: Vec<MatchEntry>,
    pub unmatched_reference: Vec<usize>,
    pub lyapunov: Option<LyapunovReport>,
    pub wall_time_s: f64,
}

/// One sensor of one mode's ensemble band.
pub struct BandRow {
    pub mode_id: usize,
    pub sensor: usize,
    pub lo: f64,
    pub mean: f64,
    pub hi: f64,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)
        .map_err(|e| Error::Config(format!("serialize {}: {e}", path.display())))?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// Modes table in spectrum order (energy-descending). `mode_id` is the
/// column index into the model's arrays, so rows stay joinable with the
/// model file and eigenvalue table.
pub fn write_modes_csv(
    path: &Path,
    spectrum: &ModalParameterSet,
    labels: &[ModeLabel],
) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "mode_id,freq_hz,damping_pct,discrete_mag,energy,label")?;
    for mode in &spectrum.modes {
        let damping = match mode.damping_ratio {
            Some(z) => format!("{}", z * 100.0),
            None => String::new(),
        };
        writeln!(
            out,
            "{},{},{},{},{},{}",
            mode.index,
            mode.frequency_hz,
            damping,
            mode.discrete_magnitude,
            mode.energy,
            labels[mode.index].as_str()
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Discrete eigenvalues in model column order, for unit-circle plots.
pub fn write_eigs_csv(path: &Path, model: &KoopmanModel) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "mode_id,re_mu,im_mu")?;
    for (j, mu) in model.mu.iter().enumerate() {
        writeln!(out, "{},{},{}", j, mu.re, mu.im)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_shape_bands_csv(path: &Path, rows: &[BandRow]) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "mode_id,sensor,lo,mean,hi")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{}", r.mode_id, r.sensor, r.lo, r.mean, r.hi)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_mac_table_csv(path: &Path, entries: &[MatchEntry]) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        out,
        "identified_mode,reference_mode,freq_identified_hz,freq_reference_hz,freq_error_rel,mac"
    )?;
    for e in entries {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            e.identified_mode,
            e.reference_mode,
            e.freq_identified_hz,
            e.freq_reference_hz,
            e.freq_error_rel,
            e.mac
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Mean log nearest-neighbor separation per divergence step.
pub fn write_divergence_csv(path: &Path, dt: f64, curve: &[f64]) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "step,t_s,mean_log_dist")?;
    for (k, v) in curve.iter().enumerate() {
        writeln!(out, "{},{},{}", k, k as f64 * dt, v)?;
    }
    out.flush()?;
    Ok(())
}

/// Stable run identifier derived only from the resolved config.
pub fn run_id(command: &str, config: &BTreeMap<String, String>) -> String {
    let mut hash: u64 = 0xcbf29ce484222325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x100000001b3);
        }
    };
    for (k, v) in config {
        eat(k.as_bytes());
        eat(b"=");
        eat(v.as_bytes());
        eat(b"\n");
    }
    format!("{command}-{hash:016x}")
}

pub fn config_echo(cfg: &crate::config::Config) -> BTreeMap<String, String> {
    cfg.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

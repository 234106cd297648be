//! The four workflows. Seconds-to-samples conversion happens only here;
//! core modules are sample-indexed throughout.

use std::path::Path;
use std::time::Instant;

use ndarray_linalg::c64;
use rayon::prelude::*;

use super::artifacts::{self, BandRow, ChannelMetric, LyapunovReport, MatchEntry};
use super::ingest;
use super::RunConfig;
use crate::config::{plant_spec_from_config, plant_spec_to_config};
use crate::embedding;
use crate::error::{Error, Result};
use crate::koopman::{
    self, KoopmanModel, ModalParameterSet, ModeLabel, ModeShapes, RankPolicy,
};
use crate::metrics::{self, ReferenceMode};
use crate::model_io;
use crate::preprocess::{self, FilterSpec};
use crate::sensing::{self, RollingConfig, SensorMask};
use crate::timeseries::TimeSeriesMatrix;
use crate::{config::Config, linalg};

fn wall(t0: Instant, timing: bool) -> f64 {
    if timing {
        t0.elapsed().as_secs_f64()
    } else {
        0.0
    }
}

pub fn cmd_simulate(rc: &RunConfig) -> Result<()> {
    let mut spec = plant_spec_from_config(&rc.cfg)?;
    if !rc.cfg.contains("synth.seed") {
        spec.seed = rc.seed()?;
    }
    let truth = crate::synth::generate(&spec)?;
    let out = rc.out_dir();
    ingest::write_data_csv(&out.join("data.csv"), &truth.data)?;
    let mut echo = artifacts::config_echo(&rc.cfg);
    for (k, v) in plant_spec_to_config(&spec) {
        echo.insert(k, v);
    }
    artifacts::write_json(
        &out.join("truth.json"),
        &artifacts::TruthFile {
            modes: truth.modes,
            harmonic_frequencies: truth.harmonic_frequencies,
            config: echo,
        },
    )?;
    println!(
        "simulate: wrote {} ({} channels, {} samples) and truth.json",
        out.join("data.csv").display(),
        truth.data.p(),
        truth.data.n()
    );
    Ok(())
}

fn filter_from_cfg(cfg: &Config) -> Result<FilterSpec> {
    let dflt = FilterSpec::default();
    Ok(FilterSpec {
        order: cfg.usize_or("filter.order", dflt.order)?,
        low_hz: cfg.f64_or("filter.low_hz", dflt.low_hz)?,
        high_hz: cfg.f64_or("filter.high_hz", dflt.high_hz)?,
        zero_phase: cfg.bool_or("filter.zero_phase", dflt.zero_phase)?,
    })
}

fn rank_policy_from_cfg(cfg: &Config) -> Result<RankPolicy> {
    match cfg.str_or("identify.rank_policy", "fixed") {
        "fixed" => Ok(RankPolicy::Fixed(cfg.usize_or("identify.rank", 90)?)),
        "energy" => Ok(RankPolicy::Energy(cfg.f64_or("identify.energy_tau", 0.99)?)),
        "gavish_donoho" => Ok(RankPolicy::GavishDonoho),
        other => Err(Error::Config(format!("unknown identify.rank_policy {other:?}"))),
    }
}

/// Delay count from the configured delay window, capped by max_d, with a
/// hard memory guard on the Hankel factorization working set.
fn resolve_d(cfg: &Config, dt: f64, p: usize, n: usize) -> Result<usize> {
    let delay_s = cfg.f64_or("identify.delay_s", 60.0)?;
    let max_d = cfg.usize_or("identify.max_d", 96)?;
    let d_raw = (delay_s / dt).round() as usize;
    let d = d_raw.clamp(2, max_d.max(2));
    if n < d + 2 {
        return Err(Error::InsufficientSamples { n, d });
    }
    let budget_mb = cfg.usize_or("identify.memory_budget_mb", 4096)?;
    // Peak: Hankel + one H1 copy + V^T from the SVD, all p*d x ~m doubles.
    let m = n - d + 1;
    let need_mb = 3 * p * d * m * 8 / (1 << 20);
    if need_mb > budget_mb {
        return Err(Error::Config(format!(
            "p*d = {} needs ~{need_mb} MB (> identify.memory_budget_mb {budget_mb}); \
             lower identify.max_d or raise the budget",
            p * d
        )));
    }
    Ok(d)
}

struct FitOutcome {
    model: KoopmanModel,
    spectrum: ModalParameterSet,
    labels: Vec<ModeLabel>,
}

fn fit_pipeline(cfg: &Config, x: &TimeSeriesMatrix, d: usize) -> Result<FitOutcome> {
    let h = embedding::build_hankel(x, d)?;
    let h1 = h.h1().to_owned();
    let svd = linalg::thin_svd(&h1)?;
    drop(h1);
    let rows = h.p * h.d;
    let cols = h.m - 1;
    let sigma: Vec<f64> = svd.1.to_vec();
    let r = koopman::select_rank(&sigma, rows, cols, rank_policy_from_cfg(cfg)?)?;
    let shapes = if cfg.bool_or("identify.exact_modes", false)? {
        ModeShapes::Exact
    } else {
        ModeShapes::Projected
    };
    let mut model = koopman::fit_from_svd(&h, svd, r, shapes)?;
    if cfg.str_or("identify.amplitude_source", "snapshot") == "global" {
        let k_fit = cfg.usize_or("identify.k_fit", 2000)?;
        model.b_global =
            Some(koopman::fit_amplitudes_global(&model, &x.values, k_fit, 1e-8)?);
    }
    let spectrum = koopman::continuous_spectrum(&model);
    let floor = cfg.f64_or("identify.stability_floor", 0.0)?;
    let labels = koopman::classify_stability(&model, floor)?;
    Ok(FitOutcome { model, spectrum, labels })
}

pub fn cmd_identify(rc: &RunConfig) -> Result<()> {
    let t0 = Instant::now();
    let cfg = &rc.cfg;
    let input = rc.require_file("input")?;
    let dt_override = match cfg.get("dt") {
        Some(_) => Some(cfg.f64_or("dt", 0.0)?),
        None => None,
    };
    let raw = ingest::ingest_csv(&input, dt_override)?;
    let filter = filter_from_cfg(cfg)?;
    let filtered = preprocess::bandpass_zero_phase(&raw, &filter)?;
    let norm = preprocess::zscore_fit(&filtered)?;
    let x = preprocess::zscore_apply(&filtered, &norm)?;
    let d = resolve_d(cfg, x.dt, x.p(), x.n())?;

    let mut outcome = fit_pipeline(cfg, &x, d)?;
    outcome.model.norm = norm;
    outcome.model.filter = filter;
    outcome.model.channel_names = raw.channel_names.clone();

    let out = rc.out_dir();
    model_io::save_model(&out.join("model.json"), &outcome.model)?;
    artifacts::write_modes_csv(&out.join("modes.csv"), &outcome.spectrum, &outcome.labels)?;
    artifacts::write_eigs_csv(&out.join("eigs.csv"), &outcome.model)?;

    if let Some(d_values) = cfg.usize_list("ensemble.d_values")? {
        let rows = ensemble_bands(cfg, &x, &outcome, &d_values)?;
        artifacts::write_shape_bands_csv(&out.join("shape_bands.csv"), &rows)?;
    }

    let structural = outcome
        .labels
        .iter()
        .filter(|l| matches!(l, ModeLabel::Structural))
        .count();
    println!(
        "identify: d={} r={} ({} structural) -> {}",
        d,
        outcome.model.r,
        structural,
        out.join("model.json").display()
    );
    if rc.timing()? {
        println!("identify: wall {:.2} s", wall(t0, true));
    }
    Ok(())
}

/// Per-sensor 2.5/97.5 percentile bands of mode shapes refit across a range
/// of delay counts. Members are matched to the base model's modes by MAC
/// within a frequency gate, phase-aligned, unit-normalized, then sign-fixed
/// against the ensemble mean.
fn ensemble_bands(
    cfg: &Config,
    x: &TimeSeriesMatrix,
    base: &FitOutcome,
    d_values: &[usize],
) -> Result<Vec<BandRow>> {
    let mut ds: Vec<usize> = d_values.to_vec();
    ds.sort_unstable();
    ds.dedup();
    let max_modes = cfg.usize_or("ensemble.max_modes", 8)?;
    let gate = cfg.f64_or("ensemble.freq_gate", 0.25)?;

    // Base modes worth banding: structural, oscillatory, energy-ranked.
    let base_modes: Vec<(usize, f64)> = base
        .spectrum
        .modes
        .iter()
        .filter(|m| {
            matches!(base.labels[m.index], ModeLabel::Structural) && m.frequency_hz > 0.0 && !m.dc
        })
        .take(max_modes)
        .map(|m| (m.index, m.frequency_hz))
        .collect();
    if base_modes.is_empty() {
        return Ok(Vec::new());
    }

    let members: Vec<FitOutcome> = ds
        .par_iter()
        .map(|&d| fit_pipeline(cfg, x, d))
        .collect::<Result<_>>()?;
    let p = x.p();
    let mut rows = Vec::new();
    for &(base_idx, base_f) in &base_modes {
        let base_shape = base.model.phi_phys.column(base_idx);
        // One aligned real unit-norm shape per ensemble member.
        let mut aligned: Vec<Vec<f64>> = Vec::new();
        for member in &members {
            let spec = koopman::continuous_spectrum(&member.model);
            let mut best: Option<(f64, usize)> = None;
            for m in &spec.modes {
                if m.dc || m.frequency_hz <= 0.0 {
                    continue;
                }
                if (m.frequency_hz - base_f).abs() / base_f > gate {
                    continue;
                }
                let a: Vec<c64> = base_shape.to_vec();
                let b: Vec<c64> = member.model.phi_phys.column(m.index).to_vec();
                let mac = metrics::mac(&a, &b)?;
                if best.map_or(true, |(bm, _)| mac > bm) {
                    best = Some((mac, m.index));
                }
            }
            if let Some((_, idx)) = best {
                let col = member.model.phi_phys.column(idx);
                let inner: c64 =
                    base_shape.iter().zip(col.iter()).map(|(bz, cz)| bz.conj() * cz).sum();
                let phase = if inner.norm() > 0.0 { inner / inner.norm() } else { c64::new(1.0, 0.0) };
                let re: Vec<f64> = col.iter().map(|z| (z * phase.conj()).re).collect();
                let norm: f64 = re.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    aligned.push(re.iter().map(|v| v / norm).collect());
                }
            }
        }
        if aligned.is_empty() {
            continue;
        }
        // Sign-fix each member toward the ensemble mean, then re-average.
        let mean = |shapes: &[Vec<f64>]| -> Vec<f64> {
            let mut m = vec![0.0; p];
            for s in shapes {
                for (mi, v) in m.iter_mut().zip(s) {
                    *mi += v;
                }
            }
            m.iter().map(|v| v / shapes.len() as f64).collect()
        };
        let m0 = mean(&aligned);
        for s in &mut aligned {
            let dot: f64 = s.iter().zip(&m0).map(|(a, b)| a * b).sum();
            if dot < 0.0 {
                for v in s.iter_mut() {
                    *v = -*v;
                }
            }
        }
        let m1 = mean(&aligned);
        for sensor in 0..p {
            let mut vals: Vec<f64> = aligned.iter().map(|s| s[sensor]).collect();
            vals.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            rows.push(BandRow {
                mode_id: base_idx,
                sensor,
                lo: percentile(&vals, 2.5),
                mean: m1[sensor],
                hi: percentile(&vals, 97.5),
            });
        }
    }
    Ok(rows)
}

/// Linear-interpolated percentile of pre-sorted values.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let k = sorted.len();
    if k == 1 {
        return sorted[0];
    }
    let rank = q / 100.0 * (k - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

fn parse_channel(token: &str, names: &[String]) -> Result<usize> {
    if let Ok(idx) = token.parse::<usize>() {
        if idx >= names.len() {
            return Err(Error::Config(format!(
                "channel index {idx} out of range for {} channels",
                names.len()
            )));
        }
        return Ok(idx);
    }
    names
        .iter()
        .position(|n| n == token)
        .ok_or_else(|| Error::Config(format!("unknown channel {token:?}")))
}

pub fn cmd_reconstruct(rc: &RunConfig) -> Result<()> {
    let t0 = Instant::now();
    let cfg = &rc.cfg;
    let model = model_io::load_model(&rc.require_file("model")?)?;
    let input = rc.require_file("input")?;
    let dt_override = match cfg.get("dt") {
        Some(_) => Some(cfg.f64_or("dt", 0.0)?),
        None => None,
    };
    let raw = ingest::ingest_csv(&input, dt_override)?;
    if raw.p() != model.p {
        return Err(Error::ModelDataMismatch(format!(
            "data has {} channels, model expects {}",
            raw.p(),
            model.p
        )));
    }
    if raw.channel_names != model.channel_names {
        return Err(Error::ModelDataMismatch("channel names differ from the model's".into()));
    }
    if ((raw.dt - model.dt) / model.dt).abs() > 1e-9 {
        return Err(Error::ModelDataMismatch(format!(
            "data dt {} differs from model dt {}",
            raw.dt, model.dt
        )));
    }

    let filtered = preprocess::bandpass_zero_phase(&raw, &model.filter)?;
    let x = preprocess::zscore_apply(&filtered, &model.norm)?;

    let mask = match cfg.get("mask.hidden") {
        None => SensorMask::full(model.p),
        Some(spec_str) => {
            let mut hidden = Vec::new();
            for tok in spec_str.split(',').map(str::trim).filter(|t| !t.is_empty()) {
                hidden.push(parse_channel(tok, &model.channel_names)?);
            }
            if hidden.is_empty() {
                SensorMask::full(model.p)
            } else {
                SensorMask::hiding(model.p, &hidden)?
            }
        }
    };

    // Retain non-growing modes above the energy floor before sensing.
    let floor = cfg.f64_or("reconstruct.stability_floor", 0.0)?;
    let labels = koopman::classify_stability(&model, floor)?;
    let keep: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter(|(_, l)| matches!(l, ModeLabel::Structural))
        .map(|(j, _)| j)
        .collect();
    let retained = model.retain_modes(&keep)?;

    let horizon_s = cfg.f64_or("reconstruct.horizon_s", 1.0)?;
    let w = ((horizon_s / model.dt).round() as usize).max(1);
    let cal = cfg.usize_or("reconstruct.calibration_len", model.d)?;
    let mut rcfg = RollingConfig::new(w, cal);
    rcfg.rcond = cfg.f64_or("reconstruct.rcond", rcfg.rcond)?;
    rcfg.rcond_short = cfg.f64_or("reconstruct.rcond_short", rcfg.rcond_short)?;
    rcfg.denormalize = cfg.bool_or("reconstruct.denormalize", false)?;
    rcfg.allow_underdetermined = cfg.bool_or("reconstruct.allow_underdetermined", false)?;

    let report = sensing::rolling_reconstruct(&retained, &mask, &x, &rcfg)?;

    let out = rc.out_dir();
    ingest::write_data_csv(&out.join("reconstruction.csv"), &report.y_hat)?;
    let hidden = mask.hidden();
    let per_channel: Vec<ChannelMetric> = (0..model.p)
        .map(|i| ChannelMetric {
            name: model.channel_names[i].clone(),
            hidden: hidden.contains(&i),
            r2: report.r2[i],
            nrmse: report.nrmse[i],
        })
        .collect();
    let echo = artifacts::config_echo(cfg);
    artifacts::write_json(
        &out.join("metrics.json"),
        &artifacts::MetricsFile {
            run_id: artifacts::run_id("reconstruct", &echo),
            config: echo,
            per_channel,
            wall_time_s: wall(t0, rc.timing()?),
        },
    )?;

    let min_hidden_r2 = hidden
        .iter()
        .map(|&i| report.r2[i])
        .fold(f64::INFINITY, f64::min);
    if hidden.is_empty() {
        println!(
            "reconstruct: full mask, {} modes retained, min R2 {:.4}",
            retained.r,
            report.r2.iter().cloned().fold(f64::INFINITY, f64::min)
        );
    } else {
        println!(
            "reconstruct: {} hidden channels, {} modes retained, min hidden R2 {:.4}",
            hidden.len(),
            retained.r,
            min_hidden_r2
        );
    }
    Ok(())
}

fn load_reference_modes(path: &Path) -> Result<Vec<ReferenceMode>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::InsufficientData(format!("reference csv: {e}")))?;
        let mut it = record.iter();
        let f: f64 = it
            .next()
            .ok_or_else(|| Error::InsufficientData("reference csv: empty row".into()))?
            .parse()
            .map_err(|_| Error::InsufficientData("reference csv: bad frequency".into()))?;
        let shape: Vec<c64> = it
            .map(|v| v.parse::<f64>().map(|x| c64::new(x, 0.0)))
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::InsufficientData("reference csv: bad shape value".into()))?;
        out.push(ReferenceMode { frequency_hz: f, shape });
    }
    Ok(out)
}

pub fn cmd_evaluate(rc: &RunConfig) -> Result<()> {
    let t0 = Instant::now();
    let cfg = &rc.cfg;
    let model = model_io::load_model(&rc.require_file("model")?)?;
    let floor = cfg.f64_or("evaluate.stability_floor", 0.0)?;
    let labels = koopman::classify_stability(&model, floor)?;

    // Reference modes from a synth truth file and/or a plain CSV.
    let mut refs: Vec<ReferenceMode> = Vec::new();
    if cfg.contains("truth") {
        let path = rc.require_file("truth")?;
        let text = std::fs::read_to_string(&path)?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Error::InsufficientData(format!("{}: {e}", path.display())))?;
        let modes = value
            .get("modes")
            .and_then(|m| m.as_array())
            .ok_or_else(|| Error::InsufficientData(format!("{}: no modes array", path.display())))?;
        for m in modes {
            let f = m
                .get("frequency_hz")
                .and_then(|v| v.as_f64())
                .ok_or_else(|| Error::InsufficientData("truth mode missing frequency_hz".into()))?;
            let shape: Vec<c64> = m
                .get("shape")
                .and_then(|v| v.as_array())
                .ok_or_else(|| Error::InsufficientData("truth mode missing shape".into()))?
                .iter()
                .map(|v| c64::new(v.as_f64().unwrap_or(f64::NAN), 0.0))
                .collect();
            refs.push(ReferenceMode { frequency_hz: f, shape });
        }
    }
    if cfg.contains("reference_modes") {
        refs.extend(load_reference_modes(&rc.require_file("reference_modes")?)?);
    }
    if refs.is_empty() && !cfg.contains("evaluate.lyapunov_channel") {
        return Err(Error::Config(
            "nothing to evaluate: provide truth, reference_modes, or a lyapunov channel".into(),
        ));
    }

    let mut matches = Vec::new();
    let mut unmatched_reference = Vec::new();
    if !refs.is_empty() {
        // One representative per conjugate pair: the non-negative-frequency
        // member; structural modes only.
        let candidates: Vec<usize> = (0..model.r)
            .filter(|&j| {
                matches!(labels[j], ModeLabel::Structural) && model.lambda_c[j].im >= 0.0
            })
            .collect();
        let shapes: Vec<Vec<c64>> =
            candidates.iter().map(|&j| model.phi_phys.column(j).to_vec()).collect();
        let freqs: Vec<f64> = candidates
            .iter()
            .map(|&j| model.lambda_c[j].im.abs() / (2.0 * std::f64::consts::PI))
            .collect();
        let gate = cfg.f64_or("evaluate.freq_gate", 0.5)?;
        let result = metrics::match_modes(&shapes, &freqs, &refs, gate)?;
        for pair in &result.pairs {
            matches.push(MatchEntry {
                identified_mode: candidates[pair.identified],
                reference_mode: pair.reference,
                freq_identified_hz: freqs[pair.identified],
                freq_reference_hz: refs[pair.reference].frequency_hz,
                freq_error_rel: pair.frequency_error,
                mac: pair.mac,
            });
        }
        unmatched_reference = result.unmatched_reference;
    }

    let out = rc.out_dir();
    let mut lyap_report = None;
    if let Some(channel_tok) = cfg.get("evaluate.lyapunov_channel") {
        let input = rc.require_file("input")?;
        let dt_override = match cfg.get("dt") {
            Some(_) => Some(cfg.f64_or("dt", 0.0)?),
            None => None,
        };
        let raw = ingest::ingest_csv(&input, dt_override)?;
        let ch = parse_channel(channel_tok, &raw.channel_names)?;
        // The raw signal: filtering would distort the divergence geometry.
        let signal: Vec<f64> = raw.values.row(ch).to_vec();
        let embed_dim = cfg.usize_or("evaluate.embed_dim", 10)?;
        let lag = match cfg.get("evaluate.lag") {
            Some(_) => cfg.usize_or("evaluate.lag", 1)?,
            None => metrics::autocorr_first_zero_lag(&signal),
        };
        let theiler = match cfg.get("evaluate.theiler") {
            Some(_) => cfg.usize_or("evaluate.theiler", 0)?,
            None => metrics::mean_period_samples(&signal).round() as usize,
        };
        let fit_start = cfg.usize_or("evaluate.fit_start", 0)?;
        let fit_end =
            cfg.usize_or("evaluate.fit_end", (2.0 / raw.dt).round() as usize)?;
        let est = metrics::lyapunov_max(
            &signal,
            raw.dt,
            embed_dim,
            lag,
            theiler,
            (fit_start, fit_end),
        )?;
        artifacts::write_divergence_csv(&out.join("divergence.csv"), raw.dt, &est.divergence)?;
        lyap_report = Some(LyapunovReport {
            channel: raw.channel_names[ch].clone(),
            lambda_max: est.lambda_max,
            lyapunov_time_s: est.lyapunov_time.is_finite().then_some(est.lyapunov_time),
            embed_dim,
            lag,
            theiler,
            fit_start: est.fit_start,
            fit_end: est.fit_end,
            non_positive_slope: est.non_positive_slope,
        });
    }

    artifacts::write_mac_table_csv(&out.join("mac_table.csv"), &matches)?;
    let echo = artifacts::config_echo(cfg);
    let n_matched = matches.len();
    artifacts::write_json(
        &out.join("evaluation.json"),
        &artifacts::EvaluationFile {
            run_id: artifacts::run_id("evaluate", &echo),
            config: echo,
            matches,
            unmatched_reference,
            lyapunov: lyap_report,
            wall_time_s: wall(t0, rc.timing()?),
        },
    )?;
    println!(
        "evaluate: {} of {} reference modes matched -> {}",
        n_matched,
        refs.len(),
        out.join("evaluation.json").display()
    );
    Ok(())
}

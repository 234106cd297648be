//! Validation metrics: MAC mode matching, R2 / NRMSE, mode-to-reference
//! assignment, and a nearest-neighbor divergence estimate of the maximal
//! Lyapunov exponent.

use ndarray_linalg::c64;
use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{Error, Result};

/// Modal assurance criterion |a^H b|^2 / ((a^H a)(b^H b)), scale invariant,
/// in [0, 1].
pub fn mac(a: &[c64], b: &[c64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "mac needs equal nonempty lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let aa: f64 = a.iter().map(|z| z.norm_sqr()).sum();
    let bb: f64 = b.iter().map(|z| z.norm_sqr()).sum();
    if aa == 0.0 || bb == 0.0 {
        return Err(Error::ZeroVector);
    }
    let ab: c64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    Ok(ab.norm_sqr() / (aa * bb))
}

/// Coefficient of determination, 1 - SS_res / SS_tot with the truth mean
/// taken over the evaluated window. May be negative.
pub fn r2(truth: &[f64], pred: &[f64]) -> Result<f64> {
    if truth.len() != pred.len() || truth.len() < 2 {
        return Err(Error::ShapeMismatch(format!(
            "r2 needs equal lengths >= 2, got {} and {}",
            truth.len(),
            pred.len()
        )));
    }
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_tot: f64 = truth.iter().map(|y| (y - mean) * (y - mean)).sum();
    if ss_tot <= 0.0 {
        return Err(Error::ConstantTruth);
    }
    let ss_res: f64 = truth.iter().zip(pred).map(|(y, yh)| (y - yh) * (y - yh)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Root-mean-square error normalized by the truth's range.
pub fn nrmse(truth: &[f64], pred: &[f64]) -> Result<f64> {
    if truth.len() != pred.len() || truth.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "nrmse needs equal nonempty lengths, got {} and {}",
            truth.len(),
            pred.len()
        )));
    }
    let max = truth.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = truth.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > min) {
        return Err(Error::ZeroRange);
    }
    let mse: f64 =
        truth.iter().zip(pred).map(|(y, yh)| (y - yh) * (y - yh)).sum::<f64>() / truth.len() as f64;
    Ok(mse.sqrt() / (max - min))
}

/// A reference mode for matching: frequency plus a shape sampled at the same
/// sensor locations as the identified modes.
#[derive(Debug, Clone)]
pub struct ReferenceMode {
    pub frequency_hz: f64,
    pub shape: Vec<c64>,
}

#[derive(Debug, Clone)]
pub struct MatchPair {
    pub identified: usize,
    pub reference: usize,
    pub mac: f64,
    /// |f_id - f_ref| / f_ref.
    pub frequency_error: f64,
}

#[derive(Debug, Clone)]
pub struct ModeMatchResult {
    pub pairs: Vec<MatchPair>,
    pub unmatched_identified: Vec<usize>,
    pub unmatched_reference: Vec<usize>,
}

/// Greedy assignment by descending MAC, gated so that a candidate pair must
/// satisfy |f_id - f_ref| / f_ref <= freq_gate; each side is used at most
/// once. The gate keeps spatially plausible but spectrally wrong pairings
/// (e.g. harmonic forcing shapes) from stealing a reference.
pub fn match_modes(
    identified_shapes: &[Vec<c64>],
    identified_freqs: &[f64],
    reference: &[ReferenceMode],
    freq_gate: f64,
) -> Result<ModeMatchResult> {
    if identified_shapes.len() != identified_freqs.len() {
        return Err(Error::ShapeMismatch(
            "one frequency per identified shape required".into(),
        ));
    }
    if let (Some(id), Some(rf)) = (identified_shapes.first(), reference.first()) {
        if id.len() != rf.shape.len() {
            return Err(Error::SensorCountMismatch { got: id.len(), expected: rf.shape.len() });
        }
    }
    let mut candidates = Vec::new();
    for (i, shape) in identified_shapes.iter().enumerate() {
        for (j, rm) in reference.iter().enumerate() {
            if rm.frequency_hz > 0.0
                && (identified_freqs[i] - rm.frequency_hz).abs() / rm.frequency_hz > freq_gate
            {
                continue;
            }
            candidates.push((i, j, mac(shape, &rm.shape)?));
        }
    }
    candidates.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap_or(std::cmp::Ordering::Equal));
    let mut used_id = vec![false; identified_shapes.len()];
    let mut used_ref = vec![false; reference.len()];
    let mut pairs = Vec::new();
    for (i, j, m) in candidates {
        if used_id[i] || used_ref[j] {
            continue;
        }
        used_id[i] = true;
        used_ref[j] = true;
        pairs.push(MatchPair {
            identified: i,
            reference: j,
            mac: m,
            frequency_error: (identified_freqs[i] - reference[j].frequency_hz).abs()
                / reference[j].frequency_hz,
        });
    }
    Ok(ModeMatchResult {
        pairs,
        unmatched_identified: (0..identified_shapes.len()).filter(|&i| !used_id[i]).collect(),
        unmatched_reference: (0..reference.len()).filter(|&j| !used_ref[j]).collect(),
    })
}

/// Maximal-Lyapunov-exponent estimate from nearest-neighbor divergence.
#[derive(Debug, Clone)]
pub struct LyapunovEstimate {
    /// 1/s; least-squares slope of the divergence curve over the fit window.
    pub lambda_max: f64,
    /// 1 / lambda_max seconds (infinite when the slope is not positive).
    pub lyapunov_time: f64,
    pub fit_start: usize,
    pub fit_end: usize,
    /// Mean log neighbor distance per step.
    pub divergence: Vec<f64>,
    /// Set when the slope is below the detectability floor ln(2) / T_fit:
    /// trajectories that do not even double over the fit span are
    /// indistinguishable from the estimator's regression-to-the-mean bias,
    /// so the signal is not detectably chaotic.
    pub non_positive_slope: bool,
}

/// Rosenstein-style estimator: delay-embed the scalar signal, find each
/// reference point's nearest neighbor outside the Theiler exclusion, and
/// track the mean log separation over `fit_window.1` steps. Reference points
/// are spread evenly over the embedded series (deterministic; parallelized
/// with a fixed reduction order).
pub fn lyapunov_max(
    signal: &[f64],
    dt: f64,
    embed_dim: usize,
    embed_lag: usize,
    theiler: usize,
    fit_window: (usize, usize),
) -> Result<LyapunovEstimate> {
    let n = signal.len();
    let (fit_start, fit_end) = fit_window;
    if embed_dim < 2 || embed_lag < 1 {
        return Err(Error::InsufficientData(
            "embed_dim must be >= 2 and embed_lag >= 1".into(),
        ));
    }
    if fit_start + 2 > fit_end {
        return Err(Error::InsufficientData("fit window needs at least 2 steps".into()));
    }
    let span = (embed_dim - 1) * embed_lag;
    let curve_len = fit_end;
    let n_emb = n.saturating_sub(span);
    let usable = n_emb.saturating_sub(curve_len);
    if usable < theiler + 2 {
        return Err(Error::InsufficientData(format!(
            "{n} samples leave {usable} usable embedded points for theiler {theiler}"
        )));
    }

    let point = |i: usize, c: usize| signal[i + c * embed_lag];
    let dist = |i: usize, j: usize| -> f64 {
        let mut s = 0.0;
        for c in 0..embed_dim {
            let dv = point(i, c) - point(j, c);
            s += dv * dv;
        }
        s.sqrt()
    };

    let n_ref = usable.min(2000);
    let refs: Vec<usize> = (0..n_ref).map(|i| i * usable / n_ref).collect();

    let curves: Vec<Option<Vec<f64>>> = refs
        .par_iter()
        .map(|&i| {
            let mut best = f64::INFINITY;
            let mut best_j = None;
            for j in 0..usable {
                let far = if j > i { j - i } else { i - j };
                if far <= theiler {
                    continue;
                }
                let d = dist(i, j);
                if d > 0.0 && d < best {
                    best = d;
                    best_j = Some(j);
                }
            }
            best_j.map(|j| {
                (0..curve_len)
                    .map(|k| dist(i + k, j + k).max(f64::MIN_POSITIVE).ln())
                    .collect()
            })
        })
        .collect();

    let mut divergence = vec![0.0f64; curve_len];
    let mut count = 0usize;
    for c in curves.iter().flatten() {
        for (acc, v) in divergence.iter_mut().zip(c) {
            *acc += v;
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::InsufficientData("no reference point has a valid neighbor".into()));
    }
    for v in &mut divergence {
        *v /= count as f64;
    }

    // Least-squares line over the fit window, slope per step -> per second.
    let k_vals: Vec<f64> = (fit_start..fit_end).map(|k| k as f64).collect();
    let y_vals = &divergence[fit_start..fit_end];
    let n_fit = k_vals.len() as f64;
    let kx = k_vals.iter().sum::<f64>() / n_fit;
    let ky = y_vals.iter().sum::<f64>() / n_fit;
    let sxx: f64 = k_vals.iter().map(|k| (k - kx) * (k - kx)).sum();
    let sxy: f64 = k_vals.iter().zip(y_vals).map(|(k, y)| (k - kx) * (y - ky)).sum();
    let lambda_max = sxy / sxx / dt;

    let t_fit = (fit_end - fit_start) as f64 * dt;
    let floor = std::f64::consts::LN_2 / t_fit;
    let non_positive_slope = lambda_max <= floor;
    Ok(LyapunovEstimate {
        lambda_max,
        lyapunov_time: if lambda_max > 0.0 { 1.0 / lambda_max } else { f64::INFINITY },
        fit_start,
        fit_end,
        divergence,
        non_positive_slope,
    })
}

/// First lag at which the autocorrelation crosses zero; a standard default
/// for the embedding lag.
pub fn autocorr_first_zero_lag(signal: &[f64]) -> usize {
    let n = signal.len();
    let mean = signal.iter().sum::<f64>() / n as f64;
    let x: Vec<f64> = signal.iter().map(|v| v - mean).collect();
    for lag in 1..n / 2 {
        let r: f64 = (0..n - lag).map(|t| x[t] * x[t + lag]).sum();
        if r <= 0.0 {
            return lag;
        }
    }
    1
}

/// Mean period in samples from the power-spectrum mean frequency; a standard
/// default for the Theiler exclusion.
pub fn mean_period_samples(signal: &[f64]) -> f64 {
    let n = signal.len();
    let mean = signal.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> =
        signal.iter().map(|v| Complex::new(v - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let mut power_sum = 0.0;
    let mut weighted = 0.0;
    for (k, z) in buf.iter().enumerate().take(n / 2 + 1).skip(1) {
        let p = z.norm_sqr();
        power_sum += p;
        weighted += p * k as f64 / n as f64;
    }
    if weighted <= 0.0 {
        return 1.0;
    }
    power_sum / weighted
}

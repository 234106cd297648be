//! Signal conditioning: Butterworth bandpass with zero-phase application and
//! z-score standardization.
//!
//! The filter is designed as cascaded second-order sections (biquads). The
//! zero-phase pass runs each section forward and backward with boundary
//! initial conditions chosen so that the two sweep orders agree
//! (Gustafsson's method), on top of odd-reflection edge padding; this keeps
//! startup transients out of the band-edge modes that the identification
//! stage depends on.

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::timeseries::TimeSeriesMatrix;

/// Bandpass filter description. Defaults follow the common structural band:
/// 4th order, 0.25-5 Hz, applied zero-phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub order: usize,
    pub low_hz: f64,
    pub high_hz: f64,
    pub zero_phase: bool,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self { order: 4, low_hz: 0.25, high_hz: 5.0, zero_phase: true }
    }
}

/// Per-channel standardization constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

/// One second-order section: [b0, b1, b2, 1, a1, a2].
pub type Sos = [f64; 6];

/// Window length for the boundary-state fit of the zero-phase pass; beyond
/// this many samples a 4th-order section's impulse response at the band
/// edges used here is negligible.
const GUST_IRLEN: usize = 2000;

// -------------------------------------------------------------------------
// Butterworth bandpass design
// -------------------------------------------------------------------------

/// Digital Butterworth bandpass as second-order sections, bilinear transform
/// with frequency pre-warping.
///
/// Sections are ordered by increasing pole radius (the pole pair closest to
/// the unit circle comes last) and the overall gain is folded into the first
/// section's numerator. Zeros at z = +1 pair with the low-frequency poles,
/// zeros at z = -1 with the high-frequency poles.
pub fn butter_bandpass_sos(order: usize, low_hz: f64, high_hz: f64, fs: f64) -> Result<Vec<Sos>> {
    if order == 0 {
        return Err(Error::Config("filter order must be at least 1".into()));
    }
    let nyq = fs / 2.0;
    if !(0.0 < low_hz && low_hz < high_hz) {
        return Err(Error::Config(format!(
            "passband edges must satisfy 0 < low < high, got ({low_hz}, {high_hz})"
        )));
    }
    if high_hz >= nyq {
        return Err(Error::NyquistViolation { high_hz, nyquist_hz: nyq });
    }

    // Pre-warp the band edges (bilinear transform, internal rate 2 Hz).
    let warp = |f_hz: f64| 4.0 * (std::f64::consts::PI * (f_hz / nyq) / 2.0).tan();
    let (w1, w2) = (warp(low_hz), warp(high_hz));
    let bw = w2 - w1;
    let w0 = (w1 * w2).sqrt();
    let fs2 = 4.0;

    // Analog lowpass prototype poles (unit cutoff), upper half plane only;
    // conjugates are implied. Odd orders add one real pole at -1.
    let n = order;
    let mut proto: Vec<Complex64> = Vec::new();
    for k in 0..n / 2 {
        let m = -(n as f64) + 1.0 + 2.0 * k as f64; // -n+1, -n+3, ...
        let angle = std::f64::consts::PI * m / (2.0 * n as f64);
        proto.push(-Complex64::new(0.0, angle).exp()); // im > 0 half
    }

    // Lowpass -> bandpass on poles; each prototype pole yields one pole on
    // either side of the center frequency. Track sections as conjugate pairs
    // and accumulate the real product of (fs2 - p) over all 2n analog poles
    // for the bilinear gain.
    struct PolePair {
        /// Digital pole; `real_pair` holds the second pole of an all-real pair.
        z: Complex64,
        real_pair: Option<f64>,
    }
    let mut pairs: Vec<PolePair> = Vec::new();
    let mut denom = 1.0f64; // prod over analog poles of (fs2 - p), real by closure
    let bilinear = |p: Complex64| (fs2 + p) / (fs2 - p);
    let push_conj_pair = |p: Complex64, pairs: &mut Vec<PolePair>, denom: &mut f64| {
        *denom *= ((fs2 - p) * (fs2 - p.conj())).re;
        pairs.push(PolePair { z: bilinear(p), real_pair: None });
    };
    for &p in &proto {
        let q = p * bw / 2.0;
        let disc = (q * q - w0 * w0).sqrt();
        // Images of the conjugate prototype are the conjugates of these.
        push_conj_pair(q + disc, &mut pairs, &mut denom);
        push_conj_pair(q - disc, &mut pairs, &mut denom);
    }
    if n % 2 == 1 {
        let q = -bw / 2.0;
        let disc = q * q - w0 * w0;
        if disc < 0.0 {
            push_conj_pair(Complex64::new(q, (-disc).sqrt()), &mut pairs, &mut denom);
        } else {
            let (r1, r2) = (q + disc.sqrt(), q - disc.sqrt());
            denom *= (fs2 - r1) * (fs2 - r2);
            pairs.push(PolePair { z: bilinear(r1.into()), real_pair: Some(bilinear(r2.into()).re) });
        }
    }

    // Gain: analog bandpass has gain bw^n with n zeros at s=0; the bilinear
    // transform contributes (fs2 - 0)^n / prod(fs2 - p).
    let gain = bw.powi(n as i32) * fs2.powi(n as i32) / denom;

    // Assign the n digital zeros at z=+1 to the pole pairs nearest DC and the
    // n at z=-1 to the rest (cancels passband peaking on the matching edge).
    let mut order_by_angle: Vec<usize> = (0..pairs.len()).collect();
    order_by_angle.sort_by(|&i, &j| {
        pairs[i].z.arg().abs().partial_cmp(&pairs[j].z.arg().abs()).expect("finite pole angles")
    });
    let mut zeros_pos = n; // multiplicity at z = +1
    let mut numerators: Vec<[f64; 3]> = vec![[0.0; 3]; pairs.len()];
    for &idx in &order_by_angle {
        numerators[idx] = if zeros_pos >= 2 {
            zeros_pos -= 2;
            [1.0, -2.0, 1.0] // (1 - z^-1)^2
        } else if zeros_pos == 1 {
            zeros_pos = 0;
            [1.0, 0.0, -1.0] // (1 - z^-1)(1 + z^-1)
        } else {
            [1.0, 2.0, 1.0] // (1 + z^-1)^2
        };
    }

    // Emit sections ordered by pole radius, gain on the first.
    let mut section_order: Vec<usize> = (0..pairs.len()).collect();
    section_order.sort_by(|&i, &j| {
        pairs[i].z.norm().partial_cmp(&pairs[j].z.norm()).expect("finite pole radii")
    });
    let mut sos = Vec::with_capacity(pairs.len());
    for (si, &idx) in section_order.iter().enumerate() {
        let pair = &pairs[idx];
        let (a1, a2) = match pair.real_pair {
            None => (-2.0 * pair.z.re, pair.z.norm_sqr()),
            Some(r2) => (-(pair.z.re + r2), pair.z.re * r2),
        };
        let g = if si == 0 { gain } else { 1.0 };
        let b = numerators[idx];
        sos.push([g * b[0], g * b[1], g * b[2], 1.0, a1, a2]);
    }
    Ok(sos)
}

/// |H(e^{i 2 pi f / fs})| of an SOS cascade.
pub fn sos_magnitude(sos: &[Sos], f_hz: f64, fs: f64) -> f64 {
    let z_inv = Complex64::new(0.0, -2.0 * std::f64::consts::PI * f_hz / fs).exp();
    let mut h = Complex64::new(1.0, 0.0);
    for s in sos {
        let num = Complex64::new(s[0], 0.0) + s[1] * z_inv + s[2] * z_inv * z_inv;
        let den = Complex64::new(s[3], 0.0) + s[4] * z_inv + s[5] * z_inv * z_inv;
        h *= num / den;
    }
    h.norm()
}

// -------------------------------------------------------------------------
// Filtering
// -------------------------------------------------------------------------

/// Direct-form II transposed pass of one biquad, zero initial state.
fn biquad_forward(s: &Sos, x: &[f64], out: &mut Vec<f64>) {
    let (b0, b1, b2, a1, a2) = (s[0], s[1], s[2], s[4], s[5]);
    out.clear();
    out.reserve(x.len());
    let (mut z0, mut z1) = (0.0f64, 0.0f64);
    for &xk in x {
        let y = b0 * xk + z0;
        z0 = b1 * xk - a1 * y + z1;
        z1 = b2 * xk - a2 * y;
        out.push(y);
    }
}

fn reversed(x: &[f64]) -> Vec<f64> {
    x.iter().rev().cloned().collect()
}

/// Forward-backward pass of one biquad with boundary states fit so that
/// filtering forward-then-backward and backward-then-forward agree
/// (Gustafsson's criterion). `m` limits the boundary fit to a window where
/// the section's impulse response is non-negligible.
fn biquad_zero_phase(s: &Sos, x: &[f64], irlen: usize) -> Vec<f64> {
    let n = x.len();
    let (a1, a2) = (s[4], s[5]);
    let m = if n > 2 * irlen { irlen } else { n };

    // Zero-input responses of the two state components: col0 from state
    // (1, 0), col1 the same delayed one sample (state (0, 1)).
    let mut homog = Vec::with_capacity(m);
    for k in 0..m {
        let y = match k {
            0 => 1.0,
            1 => -a1,
            _ => -a1 * homog[k - 1] - a2 * homog[k - 2],
        };
        homog.push(y);
    }
    let col0 = homog;
    let col1: Vec<f64> = std::iter::once(0.0).chain(col0[..m - 1].iter().cloned()).collect();

    // Each zero-input response filtered in the opposite direction.
    let mut scratch = Vec::new();
    let mut filt_rev = |v: &[f64]| -> Vec<f64> {
        biquad_forward(s, &reversed(v), &mut scratch);
        reversed(&scratch)
    };
    let s0 = filt_rev(&col0);
    let s1 = filt_rev(&col1);

    let mut y_f = Vec::new();
    biquad_forward(s, x, &mut y_f);
    let mut y_fb_rev = Vec::new();
    biquad_forward(s, &reversed(&y_f), &mut y_fb_rev);
    let y_fb = reversed(&y_fb_rev);

    let mut y_b_rev = Vec::new();
    biquad_forward(s, &reversed(x), &mut y_b_rev);
    let y_b = reversed(&y_b_rev);
    let mut y_bf = Vec::new();
    biquad_forward(s, &y_b, &mut y_bf);

    // Solve for the four boundary states minimizing the disagreement between
    // the two sweep orders, then correct the forward-backward result.
    // s0/s1 hold the time-reversed opposite-direction responses, aligned with
    // the signal's start; col0/col1 read backward give the end alignment.
    let rcond = f64::EPSILON * 2.0 * m as f64;
    let mut y = y_fb.clone();
    if m == n {
        let mut mat = Array2::zeros((n, 4));
        let mut rhs = ndarray::Array1::zeros(n);
        for i in 0..n {
            mat[[i, 0]] = s0[i] - col0[i];
            mat[[i, 1]] = s1[i] - col1[i];
            mat[[i, 2]] = col0[n - 1 - i] - s0[n - 1 - i];
            mat[[i, 3]] = col1[n - 1 - i] - s1[n - 1 - i];
            rhs[i] = y_bf[i] - y_fb[i];
        }
        let ic = linalg::lstsq_rcond(&mat, &rhs, rcond).expect("4-column boundary fit");
        for i in 0..n {
            y[i] += s0[i] * ic[0] + s1[i] * ic[1];
            y[i] += col0[n - 1 - i] * ic[2] + col1[n - 1 - i] * ic[3];
        }
    } else {
        let mut mat = Array2::zeros((2 * m, 4));
        let mut rhs = ndarray::Array1::zeros(2 * m);
        for i in 0..m {
            mat[[i, 0]] = s0[i] - col0[i];
            mat[[i, 1]] = s1[i] - col1[i];
            rhs[i] = y_bf[i] - y_fb[i];
            mat[[m + i, 2]] = col0[m - 1 - i] - s0[m - 1 - i];
            mat[[m + i, 3]] = col1[m - 1 - i] - s1[m - 1 - i];
            rhs[m + i] = y_bf[n - m + i] - y_fb[n - m + i];
        }
        let ic = linalg::lstsq_rcond(&mat, &rhs, rcond).expect("4-column boundary fit");
        for i in 0..m {
            y[i] += s0[i] * ic[0] + s1[i] * ic[1];
            y[n - m + i] += col0[m - 1 - i] * ic[2] + col1[m - 1 - i] * ic[3];
        }
    }
    y
}

/// Odd reflection about both end samples.
fn pad_odd(x: &[f64], padlen: usize) -> Vec<f64> {
    let n = x.len();
    let mut ext = Vec::with_capacity(n + 2 * padlen);
    for i in (1..=padlen).rev() {
        ext.push(2.0 * x[0] - x[i]);
    }
    ext.extend_from_slice(x);
    for i in 1..=padlen {
        ext.push(2.0 * x[n - 1] - x[n - 1 - i]);
    }
    ext
}

/// Bandpass filter every channel; zero-phase (forward-backward) when the spec
/// asks for it, single causal pass otherwise. Shape, dt, and metadata are
/// preserved. An order of 0 switches filtering off (identity).
pub fn bandpass_zero_phase(x: &TimeSeriesMatrix, spec: &FilterSpec) -> Result<TimeSeriesMatrix> {
    if spec.order == 0 {
        return Ok(x.like(x.values.clone()));
    }
    let fs = 1.0 / x.dt;
    let n = x.n();
    let padlen = 3 * (2 * spec.order + 1);
    if n <= 9 * spec.order || n <= padlen {
        return Err(Error::SignalTooShort { n, min: (9 * spec.order).max(padlen) });
    }
    let sos = butter_bandpass_sos(spec.order, spec.low_hz, spec.high_hz, fs)?;

    let rows: Vec<Vec<f64>> = x
        .values
        .outer_iter()
        .into_iter()
        .map(|r| r.to_vec())
        .collect();
    let filtered: Vec<Vec<f64>> = rows
        .par_iter()
        .map(|row| {
            let mut ext = pad_odd(row, padlen);
            if spec.zero_phase {
                let irlen = GUST_IRLEN.min(ext.len() - 1);
                for s in &sos {
                    ext = biquad_zero_phase(s, &ext, irlen);
                }
            } else {
                let mut out = Vec::new();
                for s in &sos {
                    biquad_forward(s, &ext, &mut out);
                    std::mem::swap(&mut ext, &mut out);
                }
            }
            ext[padlen..padlen + n].to_vec()
        })
        .collect();

    let mut values = Array2::zeros((x.p(), n));
    for (i, row) in filtered.iter().enumerate() {
        values.row_mut(i).assign(&ndarray::ArrayView1::from(&row[..]));
    }
    Ok(x.like(values))
}

// -------------------------------------------------------------------------
// Standardization
// -------------------------------------------------------------------------

/// Per-channel mean and population (1/N) standard deviation.
pub fn zscore_fit(x: &TimeSeriesMatrix) -> Result<NormalizationParams> {
    let n = x.n() as f64;
    let mut means = Vec::with_capacity(x.p());
    let mut stds = Vec::with_capacity(x.p());
    for (i, row) in x.values.outer_iter().enumerate() {
        let mean = row.sum() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        if std < 1e-12 * mean.abs().max(1.0) {
            return Err(Error::DegenerateChannel(i));
        }
        means.push(mean);
        stds.push(std);
    }
    Ok(NormalizationParams { means, stds })
}

fn check_params(x: &TimeSeriesMatrix, params: &NormalizationParams) -> Result<()> {
    if params.means.len() != x.p() || params.stds.len() != x.p() {
        return Err(Error::ShapeMismatch(format!(
            "normalization for {} channels applied to {}",
            params.means.len(),
            x.p()
        )));
    }
    Ok(())
}

pub fn zscore_apply(x: &TimeSeriesMatrix, params: &NormalizationParams) -> Result<TimeSeriesMatrix> {
    check_params(x, params)?;
    let mut values = x.values.clone();
    for (i, mut row) in values.outer_iter_mut().enumerate() {
        let (mean, std) = (params.means[i], params.stds[i]);
        Zip::from(&mut row).for_each(|v| *v = (*v - mean) / std);
    }
    Ok(x.like(values))
}

pub fn zscore_invert(x: &TimeSeriesMatrix, params: &NormalizationParams) -> Result<TimeSeriesMatrix> {
    check_params(x, params)?;
    let mut values = x.values.clone();
    for (i, mut row) in values.outer_iter_mut().enumerate() {
        let (mean, std) = (params.means[i], params.stds[i]);
        Zip::from(&mut row).for_each(|v| *v = *v * std + mean);
    }
    Ok(x.like(values))
}

//! Virtual sensing: estimate hidden channels from a sparse sensor subset by
//! calibrating modal amplitudes on a trailing window of observations, then
//! propagating the modes forward over a short horizon. Repeating the pair
//! (calibrate, propagate) every `horizon_w` samples arrests open-loop drift.

use ndarray::{Array1, Array2, Zip};
use ndarray_linalg::c64;

use crate::error::{Error, Result};
use crate::koopman::KoopmanModel;
use crate::linalg;
use crate::metrics;
use crate::preprocess;
use crate::timeseries::TimeSeriesMatrix;

/// Set of live channels; the hidden set is the complement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SensorMask {
    pub p_total: usize,
    /// Sorted unique channel indices, at least one.
    pub available: Vec<usize>,
}

impl SensorMask {
    pub fn new(p_total: usize, mut available: Vec<usize>) -> Result<Self> {
        available.sort_unstable();
        available.dedup();
        if available.is_empty() {
            return Err(Error::EmptyMask);
        }
        if available.last().copied().unwrap_or(0) >= p_total {
            return Err(Error::ShapeMismatch(format!(
                "mask index {} out of range for {p_total} channels",
                available.last().unwrap()
            )));
        }
        Ok(Self { p_total, available })
    }

    /// All channels live.
    pub fn full(p_total: usize) -> Self {
        Self { p_total, available: (0..p_total).collect() }
    }

    /// Mask from the hidden set instead of the live set.
    pub fn hiding(p_total: usize, hidden: &[usize]) -> Result<Self> {
        let avail: Vec<usize> = (0..p_total).filter(|i| !hidden.contains(i)).collect();
        Self::new(p_total, avail)
    }

    pub fn q(&self) -> usize {
        self.available.len()
    }

    pub fn hidden(&self) -> Vec<usize> {
        (0..self.p_total).filter(|i| !self.available.contains(i)).collect()
    }
}

/// Rolling-loop parameters. `rcond` conditions the full-window calibration
/// solve; `rcond_short` the startup windows that hold fewer than
/// `calibration_len` samples, where the design matrix is far worse
/// conditioned and a noisy exactly-determined solve would otherwise blow up
/// the first horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct RollingConfig {
    pub horizon_w: usize,
    pub calibration_len: usize,
    /// Report in physical units (invert the model's normalization).
    pub denormalize: bool,
    pub rcond: f64,
    pub rcond_short: f64,
    /// Proceed with a warning when q * calibration_len < r.
    pub allow_underdetermined: bool,
}

impl RollingConfig {
    pub fn new(horizon_w: usize, calibration_len: usize) -> Self {
        Self {
            horizon_w,
            calibration_len,
            denormalize: false,
            rcond: 1e-8,
            rcond_short: 1e-2,
            allow_underdetermined: false,
        }
    }
}

/// Rolling reconstruction output plus per-channel fidelity metrics.
#[derive(Debug, Clone)]
pub struct ReconstructionReport {
    pub y_hat: TimeSeriesMatrix,
    /// Per channel, truth vs reconstruction over the full test span.
    pub r2: Vec<f64>,
    pub nrmse: Vec<f64>,
    pub mask: SensorMask,
    pub config: RollingConfig,
    /// Startup windows calibrated on fewer than `calibration_len` samples.
    pub short_window_calibrations: usize,
}

/// Block-Vandermonde design matrix: block t (t = 0..len-1) is
/// Phi_phys[available rows] * diag(mu^t), stacked time-major into a
/// (q*len) x r matrix.
pub fn sparse_basis(
    model: &KoopmanModel,
    mask: &SensorMask,
    calibration_len: usize,
) -> Result<Array2<c64>> {
    if mask.p_total != model.p {
        return Err(Error::ShapeMismatch(format!(
            "mask covers {} channels, model has {}",
            mask.p_total, model.p
        )));
    }
    if mask.available.is_empty() {
        return Err(Error::EmptyMask);
    }
    if calibration_len < 1 {
        return Err(Error::ShapeMismatch("calibration_len must be >= 1".into()));
    }
    let q = mask.q();
    let r = model.r;
    let mut out = Array2::<c64>::zeros((q * calibration_len, r));
    let mut powers: Array1<c64> = Array1::from_elem(r, c64::new(1.0, 0.0));
    for t in 0..calibration_len {
        for (row, &ch) in mask.available.iter().enumerate() {
            for j in 0..r {
                out[[t * q + row, j]] = model.phi_phys[[ch, j]] * powers[j];
            }
        }
        Zip::from(&mut powers).and(&model.mu).for_each(|pw, &m| *pw *= m);
    }
    Ok(out)
}

/// Modal amplitudes from an observed window (normalized units), referenced to
/// the window's first sample. Returns the amplitudes and the least-squares
/// residual norm.
pub fn calibrate(
    model: &KoopmanModel,
    mask: &SensorMask,
    observed: &Array2<f64>,
) -> Result<(Array1<c64>, f64)> {
    calibrate_with(model, mask, observed, 1e-8, false)
}

/// [`calibrate`] with an explicit singular-value cutoff and an opt-in for
/// underdetermined systems (q * len < r), which otherwise error.
pub fn calibrate_with(
    model: &KoopmanModel,
    mask: &SensorMask,
    observed: &Array2<f64>,
    rcond: f64,
    allow_underdetermined: bool,
) -> Result<(Array1<c64>, f64)> {
    let (q, len) = observed.dim();
    if q != mask.q() {
        return Err(Error::ShapeMismatch(format!(
            "observed window has {q} rows, mask selects {}",
            mask.q()
        )));
    }
    if q * len < model.r && !allow_underdetermined {
        return Err(Error::UnderdeterminedCalibration { rows: q * len, r: model.r });
    }
    let basis = sparse_basis(model, mask, len)?;
    let mut rhs = Array1::<c64>::zeros(q * len);
    for t in 0..len {
        for row in 0..q {
            rhs[t * q + row] = c64::new(observed[[row, t]], 0.0);
        }
    }
    let b = linalg::lstsq_rcond_c(&basis, &rhs, rcond)?;
    let residual = (&basis.dot(&b) - &rhs).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    Ok((b, residual))
}

/// Evolves amplitudes over a horizon: column t of the result is
/// Re(Phi_phys (b_k o mu^t)), t = 0..horizon_w-1. Powers accumulate by
/// cumulative multiplication.
pub fn propagate(model: &KoopmanModel, b_k: &Array1<c64>, horizon_w: usize) -> Array2<f64> {
    let mut out = Array2::zeros((model.p, horizon_w));
    let mut amps = b_k.clone();
    for t in 0..horizon_w {
        let col = model.phi_phys.dot(&amps);
        for (i, z) in col.iter().enumerate() {
            out[[i, t]] = z.re;
        }
        Zip::from(&mut amps).and(&model.mu).for_each(|a, &m| *a *= m);
    }
    out
}

/// Alternating calibrate-and-propagate sweep over a preprocessed test block.
///
/// At each anchor k the last `calibration_len` samples of the live channels
/// (ending at and including k) fix the amplitudes, which then fill samples
/// [k, k + horizon_w); anchors advance by `horizon_w`, the last window is
/// truncated to the data. Startup anchors with fewer than `calibration_len`
/// samples of history calibrate on what exists, with the underdetermined
/// guard relaxed to a warning and the `rcond_short` cutoff in force.
pub fn rolling_reconstruct(
    model: &KoopmanModel,
    mask: &SensorMask,
    test: &TimeSeriesMatrix,
    config: &RollingConfig,
) -> Result<ReconstructionReport> {
    if test.p() != model.p {
        return Err(Error::ModelDataMismatch(format!(
            "test data has {} channels, model {}",
            test.p(),
            model.p
        )));
    }
    let n = test.n();
    let (w, cal) = (config.horizon_w, config.calibration_len);
    if w < 1 || cal < 1 {
        return Err(Error::Config("horizon_w and calibration_len must be >= 1".into()));
    }
    if n < cal + w {
        return Err(Error::HorizonExceedsData { w, cal, n });
    }
    let q = mask.q();
    let basis_full = sparse_basis(model, mask, cal)?;
    if q * cal < model.r && !config.allow_underdetermined {
        return Err(Error::UnderdeterminedCalibration { rows: q * cal, r: model.r });
    }

    let mut y_hat = Array2::zeros((model.p, n));
    let mut short_windows = 0usize;
    let mut k = 0usize;
    while k < n {
        let len = cal.min(k + 1);
        let start = k + 1 - len;
        // vec(observed) time-major, oldest sample first.
        let mut rhs = Array1::<c64>::zeros(q * len);
        for t in 0..len {
            for (row, &ch) in mask.available.iter().enumerate() {
                rhs[t * q + row] = c64::new(test.values[[ch, start + t]], 0.0);
            }
        }
        let basis_owned;
        let rcond;
        let basis: &Array2<c64> = if len == cal {
            rcond = config.rcond;
            &basis_full
        } else {
            short_windows += 1;
            rcond = config.rcond_short;
            basis_owned = sparse_basis(model, mask, len)?;
            &basis_owned
        };
        let mut b = linalg::lstsq_rcond_c(basis, &rhs, rcond)?;
        // Rebase amplitudes from the window start to the anchor k.
        let mut powers: Array1<c64> = Array1::from_elem(model.r, c64::new(1.0, 0.0));
        for _ in 0..len - 1 {
            Zip::from(&mut powers).and(&model.mu).for_each(|pw, &m| *pw *= m);
        }
        Zip::from(&mut b).and(&powers).for_each(|bb, &pw| *bb *= pw);

        let wlen = w.min(n - k);
        let window = propagate(model, &b, wlen);
        y_hat.slice_mut(ndarray::s![.., k..k + wlen]).assign(&window);
        k += w;
    }

    let mut r2 = Vec::with_capacity(model.p);
    let mut nrmse = Vec::with_capacity(model.p);
    for i in 0..model.p {
        let truth: Vec<f64> = test.values.row(i).to_vec();
        let pred: Vec<f64> = y_hat.row(i).to_vec();
        r2.push(metrics::r2(&truth, &pred)?);
        nrmse.push(metrics::nrmse(&truth, &pred)?);
    }

    let y_hat = TimeSeriesMatrix::with_metadata(
        y_hat,
        test.dt,
        test.channel_names.clone(),
        test.channel_units.clone(),
    )?;
    let y_hat = if config.denormalize {
        preprocess::zscore_invert(&y_hat, &model.norm)?
    } else {
        y_hat
    };
    Ok(ReconstructionReport {
        y_hat,
        r2,
        nrmse,
        mask: mask.clone(),
        config: config.clone(),
        short_window_calibrations: short_windows,
    })
}

//! Reduced Koopman operator identification from a Hankel pair: truncated SVD,
//! eigendecomposition, modal spectrum, amplitudes, and reconstruction.

use ndarray::{s, Array1, Array2, Zip};
use ndarray_linalg::{c64, Solve};

use crate::embedding::HankelPair;
use crate::error::{Error, Result};
use crate::linalg;
use crate::preprocess::{FilterSpec, NormalizationParams};
use crate::timeseries::TimeSeriesMatrix;

/// Trained Hankel-DMD artifact.
///
/// `phi_phys` is always the first `p` rows of `phi_aug` (same values, no
/// recomputation). `norm`, `filter`, and `channel_names` record the
/// preprocessing the model was trained under so inference can replay it.
#[derive(Debug, Clone)]
pub struct KoopmanModel {
    pub r: usize,
    /// (p*d) x r left singular vectors.
    pub u_r: Array2<f64>,
    pub sigma_r: Array1<f64>,
    /// (m-1) x r right singular vectors.
    pub v_r: Array2<f64>,
    /// r x r reduced operator (real for real data).
    pub a_tilde: Array2<f64>,
    /// Discrete eigenvalues, one step of dt each.
    pub mu: Array1<c64>,
    /// Continuous eigenvalues ln(mu)/dt, principal branch (1/s).
    pub lambda_c: Array1<c64>,
    /// r x r reduced eigenvectors (columns).
    pub w: Array2<c64>,
    /// (p*d) x r augmented modes.
    pub phi_aug: Array2<c64>,
    /// p x r physical modes = first p rows of phi_aug.
    pub phi_phys: Array2<c64>,
    /// Amplitudes from the first training snapshot.
    pub b0: Array1<c64>,
    /// Amplitudes from a trajectory-wide fit, if one was run; preferred over
    /// b0 for energy ranking when present.
    pub b_global: Option<Array1<c64>>,
    pub dt: f64,
    pub p: usize,
    pub d: usize,
    pub norm: NormalizationParams,
    pub filter: FilterSpec,
    pub channel_names: Vec<String>,
}

/// Mode-shape construction variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModeShapes {
    /// Phi = U_r W (projected onto the POD basis).
    #[default]
    Projected,
    /// Phi = H2 V_r Sigma_r^-1 W diag(1/mu).
    Exact,
}

/// Per-mode stability label from [`classify_stability`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeLabel {
    Structural,
    Rejected,
}

impl ModeLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            ModeLabel::Structural => "structural",
            ModeLabel::Rejected => "rejected",
        }
    }
}

/// One retained mode's scalar parameters.
#[derive(Debug, Clone)]
pub struct ModalMode {
    /// Column index into the model's mode arrays.
    pub index: usize,
    pub frequency_hz: f64,
    /// None for rigid/DC modes (|lambda| below tolerance).
    pub damping_ratio: Option<f64>,
    /// Re(lambda), 1/s.
    pub growth_rate: f64,
    pub discrete_magnitude: f64,
    /// |b_j| of the amplitude set used for ranking.
    pub amplitude: f64,
    /// Normalized energy |b_j| * ||phi_j|| / total.
    pub energy: f64,
    pub dc: bool,
}

/// Modes sorted by energy (descending; frequency ascending on ties).
#[derive(Debug, Clone)]
pub struct ModalParameterSet {
    pub modes: Vec<ModalMode>,
}

/// Rank-selection policy for the SVD truncation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RankPolicy {
    Fixed(usize),
    GavishDonoho,
    Energy(f64),
}

fn complex_from_parts(re: Array2<f64>, im: Array2<f64>) -> Array2<c64> {
    let mut out = Array2::<c64>::zeros(re.dim());
    Zip::from(&mut out).and(&re).and(&im).for_each(|o, &r, &i| *o = c64::new(r, i));
    out
}

/// a (real) * b (complex) via two real GEMMs.
fn real_dot_complex(a: &Array2<f64>, b: &Array2<c64>) -> Array2<c64> {
    let br = b.mapv(|z| z.re);
    let bi = b.mapv(|z| z.im);
    complex_from_parts(a.dot(&br), a.dot(&bi))
}

/// Fits the reduced operator at rank `r` with projected mode shapes.
pub fn fit(h: &HankelPair, r: usize) -> Result<KoopmanModel> {
    fit_with(h, r, ModeShapes::Projected)
}

/// [`fit`] with an explicit mode-shape construction.
pub fn fit_with(h: &HankelPair, r: usize, shapes: ModeShapes) -> Result<KoopmanModel> {
    let h1 = h.h1().to_owned();
    let svd = linalg::thin_svd(&h1)?;
    drop(h1);
    fit_from_svd(h, svd, r, shapes)
}

/// [`fit_with`] reusing a precomputed thin SVD of h1, so rank selection and
/// fitting can share the one expensive factorization.
pub fn fit_from_svd(
    h: &HankelPair,
    svd: (Array2<f64>, Array1<f64>, Array2<f64>),
    r: usize,
    shapes: ModeShapes,
) -> Result<KoopmanModel> {
    let rows = h.p * h.d;
    let cols = h.m - 1;
    let max_rank = rows.min(cols);
    if r < 1 || r > max_rank {
        return Err(Error::RankTooLarge { r, max: max_rank });
    }

    let (u, sigma, vt) = svd;
    let ratio = sigma[r - 1] / sigma[0];
    if !(ratio > 1e-14) {
        return Err(Error::RankCrossesNullspace { r, ratio });
    }

    let u_r = u.slice(s![.., ..r]).to_owned();
    let sigma_r = sigma.slice(s![..r]).to_owned();
    let v_r = vt.slice(s![..r, ..]).t().to_owned(); // cols x r

    // A_tilde = U_r^T H2 V_r Sigma_r^-1; H2 V_r first keeps the big matrix
    // in one GEMM.
    let h2v = h.h2().dot(&v_r); // (p d) x r
    let mut a_tilde = u_r.t().dot(&h2v);
    for (j, mut col) in a_tilde.columns_mut().into_iter().enumerate() {
        col.mapv_inplace(|v| v / sigma_r[j]);
    }

    let (mu, w) = linalg::eig_real(&a_tilde)?;
    let cond_w = linalg::cond2_c(&w)?;
    if cond_w > 1e12 {
        return Err(Error::IllConditionedEigenbasis { cond: cond_w });
    }
    let lambda_c = mu.mapv(|m| m.ln() / h.dt);

    let phi_aug = match shapes {
        ModeShapes::Projected => real_dot_complex(&u_r, &w),
        ModeShapes::Exact => {
            // H2 V Sigma^-1 W diag(1/mu), reusing the H2 V product.
            let mut g = h2v.clone();
            for (j, mut col) in g.columns_mut().into_iter().enumerate() {
                col.mapv_inplace(|v| v / sigma_r[j]);
            }
            let mut phi = real_dot_complex(&g, &w);
            for (j, mut col) in phi.columns_mut().into_iter().enumerate() {
                let inv_mu = 1.0 / mu[j];
                col.mapv_inplace(|v| v * inv_mu);
            }
            phi
        }
    };
    let phi_phys = phi_aug.slice(s![..h.p, ..]).to_owned();

    // b0 from the first physical snapshot of H1.
    let y1 = h.h1().slice(s![..h.p, 0]).mapv(|v| c64::new(v, 0.0));
    let b0 = linalg::lstsq_rcond_c(&phi_phys, &y1, 1e-10)?;

    let p = h.p;
    Ok(KoopmanModel {
        r,
        u_r,
        sigma_r,
        v_r,
        a_tilde,
        mu,
        lambda_c,
        w,
        phi_aug,
        phi_phys,
        b0,
        b_global: None,
        dt: h.dt,
        p,
        d: h.d,
        norm: NormalizationParams { means: vec![0.0; p], stds: vec![1.0; p] },
        filter: FilterSpec::default(),
        channel_names: (0..p).map(|i| format!("ch{i:02}")).collect(),
    })
}

impl KoopmanModel {
    /// Amplitude set used for energy ranking: the trajectory-wide fit when
    /// available, else the first-snapshot amplitudes.
    pub fn ranking_amplitudes(&self) -> &Array1<c64> {
        self.b_global.as_ref().unwrap_or(&self.b0)
    }

    /// Raw (unnormalized) per-mode energies |b_j| * ||phi_j||.
    fn raw_energies(&self) -> Vec<f64> {
        let b = self.ranking_amplitudes();
        (0..self.r)
            .map(|j| {
                let norm = self.phi_phys.column(j).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                b[j].norm() * norm
            })
            .collect()
    }

    /// Normalized per-mode energies (sum to 1 when any energy is nonzero).
    pub fn normalized_energies(&self) -> Vec<f64> {
        let raw = self.raw_energies();
        let total: f64 = raw.iter().sum();
        if total > 0.0 {
            raw.iter().map(|e| e / total).collect()
        } else {
            raw
        }
    }

    /// Sub-model containing only the given mode columns (for sensing on a
    /// retained subset). The SVD factors and reduced operator are kept
    /// whole; only per-mode arrays shrink.
    pub fn retain_modes(&self, keep: &[usize]) -> Result<KoopmanModel> {
        if keep.is_empty() {
            return Err(Error::EmptySpectrum);
        }
        if keep.iter().any(|&j| j >= self.r) {
            return Err(Error::ShapeMismatch(format!(
                "mode index out of range (r = {})",
                self.r
            )));
        }
        let pick_cols_c = |a: &Array2<c64>| {
            let mut out = Array2::zeros((a.nrows(), keep.len()));
            for (jo, &ji) in keep.iter().enumerate() {
                out.column_mut(jo).assign(&a.column(ji));
            }
            out
        };
        let pick_vec = |v: &Array1<c64>| keep.iter().map(|&j| v[j]).collect::<Array1<c64>>();
        Ok(KoopmanModel {
            r: keep.len(),
            u_r: self.u_r.clone(),
            sigma_r: self.sigma_r.clone(),
            v_r: self.v_r.clone(),
            a_tilde: self.a_tilde.clone(),
            mu: pick_vec(&self.mu),
            lambda_c: pick_vec(&self.lambda_c),
            w: pick_cols_c(&self.w),
            phi_aug: pick_cols_c(&self.phi_aug),
            phi_phys: pick_cols_c(&self.phi_phys),
            b0: pick_vec(&self.b0),
            b_global: self.b_global.as_ref().map(|b| pick_vec(b)),
            dt: self.dt,
            p: self.p,
            d: self.d,
            norm: self.norm.clone(),
            filter: self.filter.clone(),
            channel_names: self.channel_names.clone(),
        })
    }
}

const DC_LAMBDA_TOL: f64 = 1e-12;

/// Extracts per-mode frequency, damping, growth rate, and energy, sorted by
/// energy descending (ascending frequency on ties).
pub fn continuous_spectrum(model: &KoopmanModel) -> ModalParameterSet {
    let energies = model.normalized_energies();
    let b = model.ranking_amplitudes();
    let mut modes: Vec<ModalMode> = (0..model.r)
        .map(|j| {
            let lam = model.lambda_c[j];
            let dc = lam.norm() < DC_LAMBDA_TOL;
            ModalMode {
                index: j,
                frequency_hz: lam.im.abs() / (2.0 * std::f64::consts::PI),
                damping_ratio: if dc { None } else { Some(-lam.re / lam.norm()) },
                growth_rate: lam.re,
                discrete_magnitude: model.mu[j].norm(),
                amplitude: b[j].norm(),
                energy: energies[j],
                dc,
            }
        })
        .collect();
    modes.sort_by(|a, bb| {
        bb.energy
            .partial_cmp(&a.energy)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.frequency_hz.partial_cmp(&bb.frequency_hz).unwrap_or(std::cmp::Ordering::Equal))
    });
    ModalParameterSet { modes }
}

/// Labels each mode column: structural iff the pole is within the unit
/// circle (|mu| <= 1 + 1e-6) and its normalized energy reaches the floor.
pub fn classify_stability(model: &KoopmanModel, energy_floor: f64) -> Result<Vec<ModeLabel>> {
    if !(0.0..1.0).contains(&energy_floor) {
        return Err(Error::Config(format!(
            "energy floor must be in [0, 1), got {energy_floor}"
        )));
    }
    let energies = model.normalized_energies();
    Ok((0..model.r)
        .map(|j| {
            if model.mu[j].norm() <= 1.0 + 1e-6 && energies[j] >= energy_floor {
                ModeLabel::Structural
            } else {
                ModeLabel::Rejected
            }
        })
        .collect())
}

/// Free-run reconstruction from the stored amplitudes:
/// y_k = Re(sum_j phi_j mu_j^k b0_j), k = 0..k_steps-1 (normalized units).
pub fn reconstruct(model: &KoopmanModel, k_steps: usize) -> Result<TimeSeriesMatrix> {
    if k_steps < 1 {
        return Err(Error::ShapeMismatch("k_steps must be >= 1".into()));
    }
    let mut values = Array2::zeros((model.p, k_steps));
    let mut amps: Array1<c64> = model.b0.clone();
    let mut max_imag = 0.0f64;
    let mut max_real = 0.0f64;
    for k in 0..k_steps {
        let col = model.phi_phys.dot(&amps);
        for (i, z) in col.iter().enumerate() {
            values[[i, k]] = z.re;
            max_imag = max_imag.max(z.im.abs());
            max_real = max_real.max(z.re.abs());
        }
        Zip::from(&mut amps).and(&model.mu).for_each(|a, &m| *a *= m);
    }
    let tol = 1e-8 * max_real.max(f64::MIN_POSITIVE);
    if max_imag > tol {
        return Err(Error::ConjugateImbalance { residual: max_imag, tol });
    }
    TimeSeriesMatrix::with_metadata(
        values,
        model.dt,
        model.channel_names.clone(),
        vec![String::from("-"); model.p],
    )
}

/// Unmixed per-mode time histories: Dynamics = W^-1 (Sigma_r V_r^*), r x (m-1).
pub fn temporal_dynamics(model: &KoopmanModel) -> Result<Array2<c64>> {
    if model.w.nrows() != model.w.ncols() {
        return Err(Error::ShapeMismatch(
            "temporal dynamics needs the full (square) eigenvector matrix".into(),
        ));
    }
    let cond = linalg::cond2_c(&model.w)?;
    if cond > 1e12 {
        return Err(Error::IllConditionedEigenbasis { cond });
    }
    // Sigma_r V_r^T, complexified.
    let cols = model.v_r.nrows();
    let mut rhs = Array2::<c64>::zeros((model.r, cols));
    for j in 0..model.r {
        for t in 0..cols {
            rhs[[j, t]] = c64::new(model.sigma_r[j] * model.v_r[[t, j]], 0.0);
        }
    }
    // Column-wise solve W X = rhs.
    let mut out = Array2::<c64>::zeros((model.r, cols));
    for t in 0..cols {
        let x = model
            .w
            .solve(&rhs.column(t).to_owned())
            .map_err(|e| Error::EigDecompositionFailure(format!("solve failed: {e}")))?;
        out.column_mut(t).assign(&x);
    }
    Ok(out)
}

/// Trajectory-wide amplitude fit: min over b of
/// ||Phi_phys diag(b) V_W - Y||_F on the first `k_fit` samples of `y`
/// (normalized units). Columns are equilibrated before the solve so strongly
/// damped modes (whose Vandermonde columns underflow) cannot poison it.
pub fn fit_amplitudes_global(
    model: &KoopmanModel,
    y: &Array2<f64>,
    k_fit: usize,
    rcond: f64,
) -> Result<Array1<c64>> {
    if y.nrows() != model.p {
        return Err(Error::ShapeMismatch(format!(
            "data has {} channels, model {}",
            y.nrows(),
            model.p
        )));
    }
    let k = k_fit.min(y.ncols());
    if k < 1 {
        return Err(Error::ShapeMismatch("no samples to fit amplitudes on".into()));
    }
    let (p, r) = (model.p, model.r);
    let mut a = Array2::<c64>::zeros((p * k, r));
    let mut rhs = Array1::<c64>::zeros(p * k);
    let mut powers: Array1<c64> = Array1::from_elem(r, c64::new(1.0, 0.0));
    for t in 0..k {
        for i in 0..p {
            rhs[t * p + i] = c64::new(y[[i, t]], 0.0);
            for j in 0..r {
                a[[t * p + i, j]] = model.phi_phys[[i, j]] * powers[j];
            }
        }
        Zip::from(&mut powers).and(&model.mu).for_each(|pw, &m| *pw *= m);
    }
    let mut scales = vec![1.0f64; r];
    for (j, mut col) in a.columns_mut().into_iter().enumerate() {
        let norm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.0 {
            scales[j] = norm;
            col.mapv_inplace(|z| z / norm);
        }
    }
    let z = linalg::lstsq_rcond_c(&a, &rhs, rcond)?;
    Ok(Array1::from_iter((0..r).map(|j| z[j] / scales[j])))
}

/// Rank from a singular-value spectrum under the given policy.
pub fn select_rank(sigma: &[f64], rows: usize, cols: usize, policy: RankPolicy) -> Result<usize> {
    if sigma.is_empty() {
        return Err(Error::EmptySpectrum);
    }
    match policy {
        RankPolicy::Fixed(r) => {
            if r < 1 || r > sigma.len() {
                Err(Error::RankTooLarge { r, max: sigma.len() })
            } else {
                Ok(r)
            }
        }
        RankPolicy::Energy(tau) => {
            if !(0.0..=1.0).contains(&tau) {
                return Err(Error::Config(format!("energy threshold must be in [0,1], got {tau}")));
            }
            let total: f64 = sigma.iter().map(|s| s * s).sum();
            let mut acc = 0.0;
            for (i, s) in sigma.iter().enumerate() {
                acc += s * s;
                if acc / total >= tau {
                    return Ok(i + 1);
                }
            }
            Ok(sigma.len())
        }
        RankPolicy::GavishDonoho => {
            let beta = rows.min(cols) as f64 / rows.max(cols) as f64;
            let omega = 0.56 * beta.powi(3) - 0.95 * beta.powi(2) + 1.82 * beta + 1.43;
            let mut sorted: Vec<f64> = sigma.to_vec();
            sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite singular values"));
            let mid = sorted.len() / 2;
            let median = if sorted.len() % 2 == 1 {
                sorted[mid]
            } else {
                0.5 * (sorted[mid - 1] + sorted[mid])
            };
            let thresh = omega * median;
            Ok(sigma.iter().filter(|&&s| s > thresh).count())
        }
    }
}

//! Thin wrappers around LAPACK used across the crate: truncated-SVD helpers,
//! rcond-style least squares, and eigendecomposition with error mapping.

use ndarray::{Array1, Array2};
use ndarray_linalg::{c64, Eig, JobSvd, SVDDC};

use crate::error::{Error, Result};

/// Full thin SVD of a real matrix: (U, sigma, V^T) with k = min(m, n) columns.
pub fn thin_svd(a: &Array2<f64>) -> Result<(Array2<f64>, Array1<f64>, Array2<f64>)> {
    let (u, s, vt) = a
        .svddc(JobSvd::Some)
        .map_err(|e| Error::EigDecompositionFailure(format!("SVD failed: {e}")))?;
    Ok((u.expect("JobSvd::Some returns U"), s, vt.expect("JobSvd::Some returns V^T")))
}

/// Singular values only.
pub fn singular_values_c(a: &Array2<c64>) -> Result<Array1<f64>> {
    let (_, s, _) = a
        .svddc(JobSvd::None)
        .map_err(|e| Error::EigDecompositionFailure(format!("SVD failed: {e}")))?;
    Ok(s)
}

/// 2-norm condition number of a complex matrix.
pub fn cond2_c(a: &Array2<c64>) -> Result<f64> {
    let s = singular_values_c(a)?;
    let smax = s.iter().cloned().fold(0.0, f64::max);
    let smin = s.iter().cloned().fold(f64::INFINITY, f64::min);
    if smin <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(smax / smin)
}

/// Conjugate transpose.
pub fn conj_t(a: &Array2<c64>) -> Array2<c64> {
    a.t().mapv(|z| z.conj())
}

/// Minimum-norm least squares via SVD with a relative singular-value cutoff:
/// directions with sigma_i <= rcond * sigma_max are discarded.
pub fn lstsq_rcond_c(a: &Array2<c64>, rhs: &Array1<c64>, rcond: f64) -> Result<Array1<c64>> {
    let (u, s, vt) = a
        .svddc(JobSvd::Some)
        .map_err(|e| Error::EigDecompositionFailure(format!("SVD failed: {e}")))?;
    let u = u.expect("JobSvd::Some returns U");
    let vt = vt.expect("JobSvd::Some returns V^T");
    let smax = s.iter().cloned().fold(0.0, f64::max);
    let cutoff = rcond * smax;
    let mut coeffs = conj_t(&u).dot(rhs);
    for (c, &sv) in coeffs.iter_mut().zip(s.iter()) {
        *c = if sv > cutoff { *c / sv } else { c64::new(0.0, 0.0) };
    }
    Ok(conj_t(&vt).dot(&coeffs))
}

/// Real-valued counterpart of [`lstsq_rcond_c`].
pub fn lstsq_rcond(a: &Array2<f64>, rhs: &Array1<f64>, rcond: f64) -> Result<Array1<f64>> {
    let (u, s, vt) = thin_svd(a)?;
    let smax = s.iter().cloned().fold(0.0, f64::max);
    let cutoff = rcond * smax;
    let mut coeffs = u.t().dot(rhs);
    for (c, &sv) in coeffs.iter_mut().zip(s.iter()) {
        *c = if sv > cutoff { *c / sv } else { 0.0 };
    }
    Ok(vt.t().dot(&coeffs))
}

/// Eigendecomposition of a real square matrix; LAPACK returns exact conjugate
/// pairs for complex eigenvalues of real input.
pub fn eig_real(a: &Array2<f64>) -> Result<(Array1<c64>, Array2<c64>)> {
    a.eig()
        .map_err(|e| Error::EigDecompositionFailure(format!("eig failed: {e}")))
}

//! Time-delay (Hankel) trajectory matrices and their one-step-shifted split.

use ndarray::{s, Array1, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::timeseries::TimeSeriesMatrix;

/// The full delay-embedded trajectory matrix plus views of its time-shifted
/// halves. `h1`/`h2` are slices of one backing matrix; peak storage is the
/// single (p*d) x m block.
#[derive(Debug, Clone)]
pub struct HankelPair {
    h: Array2<f64>,
    pub p: usize,
    pub d: usize,
    /// Column count of the full matrix: N - d + 1.
    pub m: usize,
    pub dt: f64,
}

impl HankelPair {
    /// Columns 0..m-1 of the full matrix.
    pub fn h1(&self) -> ArrayView2<'_, f64> {
        self.h.slice(s![.., ..self.m - 1])
    }

    /// Columns 1..m: `h2[:, j] = h1[:, j+1]`.
    pub fn h2(&self) -> ArrayView2<'_, f64> {
        self.h.slice(s![.., 1..])
    }

    /// The full embedded trajectory matrix, (p*d) x m.
    pub fn full(&self) -> ArrayView2<'_, f64> {
        self.h.view()
    }
}

/// Stacks d consecutive p-vector snapshots into each column: block row t of
/// column j holds the snapshot at sample j + t (sensor-major within a block).
pub fn build_hankel(x: &TimeSeriesMatrix, d: usize) -> Result<HankelPair> {
    let (p, n) = (x.p(), x.n());
    if d < 2 || n < d + 2 {
        return Err(Error::InsufficientSamples { n, d });
    }
    let m = n - d + 1;
    let mut h = Array2::zeros((p * d, m));
    for t in 0..d {
        // Block row t is the raw signal shifted t samples left.
        h.slice_mut(s![t * p..(t + 1) * p, ..])
            .assign(&x.values.slice(s![.., t..t + m]));
    }
    Ok(HankelPair { h, p, d, m, dt: x.dt })
}

/// One augmented state vector: snapshots start..start+d stacked.
pub fn embed_window(x: &TimeSeriesMatrix, d: usize, start: usize) -> Result<Array1<f64>> {
    let (p, n) = (x.p(), x.n());
    if start + d > n {
        return Err(Error::OutOfRange { start, d, n });
    }
    let mut out = Array1::zeros(p * d);
    for t in 0..d {
        out.slice_mut(s![t * p..(t + 1) * p])
            .assign(&x.values.column(start + t));
    }
    Ok(out)
}

use ndarray::Array2;

use crate::error::{Error, Result};

/// Uniformly sampled multichannel signal block: p channels by N samples.
#[derive(Debug, Clone)]
pub struct TimeSeriesMatrix {
    /// p x N, row per channel.
    pub values: Array2<f64>,
    /// Seconds per sample.
    pub dt: f64,
    pub channel_names: Vec<String>,
    pub channel_units: Vec<String>,
}

impl TimeSeriesMatrix {
    /// Builds a block with generated channel names ("ch00", "ch01", ...).
    pub fn new(values: Array2<f64>, dt: f64) -> Result<Self> {
        let p = values.nrows();
        let names = (0..p).map(|i| format!("ch{i:02}")).collect();
        let units = vec![String::from("-"); p];
        Self::with_metadata(values, dt, names, units)
    }

    pub fn with_metadata(
        values: Array2<f64>,
        dt: f64,
        channel_names: Vec<String>,
        channel_units: Vec<String>,
    ) -> Result<Self> {
        let (p, n) = values.dim();
        if p < 1 || n < 2 {
            return Err(Error::ShapeMismatch(format!(
                "need p >= 1 and N >= 2, got {p} x {n}"
            )));
        }
        if dt <= 0.0 || !dt.is_finite() {
            return Err(Error::ShapeMismatch(format!("dt must be positive, got {dt}")));
        }
        if channel_names.len() != p || channel_units.len() != p {
            return Err(Error::ShapeMismatch(format!(
                "metadata length {} / {} does not match p = {p}",
                channel_names.len(),
                channel_units.len()
            )));
        }
        if let Some((ix, _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteValue { row: ix.0, col: ix.1 });
        }
        Ok(Self { values, dt, channel_names, channel_units })
    }

    pub fn p(&self) -> usize {
        self.values.nrows()
    }

    pub fn n(&self) -> usize {
        self.values.ncols()
    }

    /// Same metadata, new sample values of identical shape.
    pub fn like(&self, values: Array2<f64>) -> Self {
        debug_assert_eq!(values.dim(), self.values.dim());
        Self {
            values,
            dt: self.dt,
            channel_names: self.channel_names.clone(),
            channel_units: self.channel_units.clone(),
        }
    }

    /// Copy of the sample range [start, end) with metadata preserved.
    pub fn slice_samples(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.n() {
            return Err(Error::ShapeMismatch(format!(
                "sample range {start}..{end} invalid for N = {}",
                self.n()
            )));
        }
        Ok(Self {
            values: self.values.slice(ndarray::s![.., start..end]).to_owned(),
            dt: self.dt,
            channel_names: self.channel_names.clone(),
            channel_units: self.channel_units.clone(),
        })
    }
}

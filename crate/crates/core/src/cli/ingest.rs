//! CSV ingestion and emission. Input: header row, optional `time` column on
//! a uniform grid, remaining columns are channels in file order. Output uses
//! shortest round-trip float formatting, so emitted files are byte-stable
//! and re-ingest losslessly.

use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::timeseries::TimeSeriesMatrix;

/// Maximum allowed relative deviation of any sample interval from the mean.
pub const TIME_JITTER_TOL: f64 = 1e-6;

pub fn ingest_csv(path: &Path, dt_override: Option<f64>) -> Result<TimeSeriesMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let headers: Vec<String> =
        reader.headers().map_err(csv_err)?.iter().map(|s| s.to_string()).collect();
    if headers.is_empty() {
        return Err(Error::MissingHeader(format!("{}: empty file", path.display())));
    }
    if headers.iter().all(|h| h.parse::<f64>().is_ok()) {
        return Err(Error::MissingHeader(format!(
            "{}: first row is numeric; a header row is required",
            path.display()
        )));
    }

    let time_col = headers.iter().position(|h| h == "time");
    let names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != time_col)
        .map(|(_, h)| h.clone())
        .collect();
    let p = names.len();
    if p == 0 {
        return Err(Error::MissingHeader(format!("{}: no data columns", path.display())));
    }

    let mut time = Vec::new();
    let mut data: Vec<f64> = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        if record.len() != headers.len() {
            return Err(Error::InsufficientData(format!(
                "row {row_idx}: {} fields, header has {}",
                record.len(),
                headers.len()
            )));
        }
        for (col_idx, field) in record.iter().enumerate() {
            let value: f64 = field
                .parse()
                .map_err(|_| Error::NonFiniteValue { row: row_idx, col: col_idx })?;
            if !value.is_finite() {
                return Err(Error::NonFiniteValue { row: row_idx, col: col_idx });
            }
            if Some(col_idx) == time_col {
                time.push(value);
            } else {
                data.push(value);
            }
        }
    }
    let n = data.len() / p;
    if n < 2 {
        return Err(Error::InsufficientData(format!("{}: needs at least 2 rows", path.display())));
    }

    let dt = match time_col {
        Some(_) => {
            let dt = (time[n - 1] - time[0]) / (n - 1) as f64;
            if !(dt > 0.0) {
                return Err(Error::NonUniformSampling { row: 1, jitter: f64::INFINITY });
            }
            for k in 0..n - 1 {
                let jitter = ((time[k + 1] - time[k]) - dt).abs() / dt;
                if jitter > TIME_JITTER_TOL {
                    return Err(Error::NonUniformSampling { row: k + 1, jitter });
                }
            }
            dt
        }
        None => dt_override.ok_or_else(|| {
            Error::Config(format!("{}: no time column; provide dt", path.display()))
        })?,
    };

    // Row-major (sample, channel) on disk -> channel-major matrix.
    let mut values = Array2::<f64>::zeros((p, n));
    for k in 0..n {
        for i in 0..p {
            values[[i, k]] = data[k * p + i];
        }
    }
    TimeSeriesMatrix::with_metadata(values, dt, names, vec![String::new(); p])
}

pub fn write_data_csv(path: &Path, x: &TimeSeriesMatrix) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    write!(out, "time")?;
    for name in &x.channel_names {
        write!(out, ",{name}")?;
    }
    writeln!(out)?;
    for k in 0..x.n() {
        write!(out, "{}", k as f64 * x.dt)?;
        for i in 0..x.p() {
            write!(out, ",{}", x.values[[i, k]])?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InsufficientData(format!("csv: {other:?}")),
    }
}

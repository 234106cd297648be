//! Versioned JSON container for trained models. Floats serialize in
//! shortest-roundtrip form, so save -> load -> save is byte-stable and a
//! reloaded model reproduces its spectrum bit for bit.

use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{s, Array1, Array2};
use ndarray_linalg::c64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::koopman::KoopmanModel;
use crate::preprocess::{FilterSpec, NormalizationParams};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct RealMat {
    rows: usize,
    cols: usize,
    /// Row-major.
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ComplexMat {
    rows: usize,
    cols: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ComplexVec {
    re: Vec<f64>,
    im: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    p: usize,
    d: usize,
    r: usize,
    dt: f64,
    channel_names: Vec<String>,
    filter: FilterSpec,
    norm: NormalizationParams,
    sigma_r: Vec<f64>,
    u_r: RealMat,
    v_r: RealMat,
    a_tilde: RealMat,
    mu: ComplexVec,
    lambda_c: ComplexVec,
    w: ComplexMat,
    phi_aug: ComplexMat,
    b0: ComplexVec,
    b_global: Option<ComplexVec>,
}

fn real_mat(a: &Array2<f64>) -> RealMat {
    RealMat { rows: a.nrows(), cols: a.ncols(), data: a.iter().cloned().collect() }
}

fn complex_mat(a: &Array2<c64>) -> ComplexMat {
    ComplexMat {
        rows: a.nrows(),
        cols: a.ncols(),
        re: a.iter().map(|z| z.re).collect(),
        im: a.iter().map(|z| z.im).collect(),
    }
}

fn complex_vec(a: &Array1<c64>) -> ComplexVec {
    ComplexVec { re: a.iter().map(|z| z.re).collect(), im: a.iter().map(|z| z.im).collect() }
}

fn unreal_mat(m: RealMat, what: &str) -> Result<Array2<f64>> {
    if m.data.len() != m.rows * m.cols {
        return Err(Error::ModelFormat(format!("{what}: {}x{} vs {} values", m.rows, m.cols, m.data.len())));
    }
    Array2::from_shape_vec((m.rows, m.cols), m.data)
        .map_err(|e| Error::ModelFormat(format!("{what}: {e}")))
}

fn uncomplex_mat(m: ComplexMat, what: &str) -> Result<Array2<c64>> {
    if m.re.len() != m.rows * m.cols || m.im.len() != m.re.len() {
        return Err(Error::ModelFormat(format!("{what}: inconsistent lengths")));
    }
    let data: Vec<c64> = m.re.iter().zip(&m.im).map(|(&r, &i)| c64::new(r, i)).collect();
    Array2::from_shape_vec((m.rows, m.cols), data)
        .map_err(|e| Error::ModelFormat(format!("{what}: {e}")))
}

fn uncomplex_vec(v: ComplexVec, what: &str) -> Result<Array1<c64>> {
    if v.re.len() != v.im.len() {
        return Err(Error::ModelFormat(format!("{what}: re/im length mismatch")));
    }
    Ok(Array1::from_vec(v.re.iter().zip(&v.im).map(|(&r, &i)| c64::new(r, i)).collect()))
}

pub fn save_model(path: &Path, model: &KoopmanModel) -> Result<()> {
    let file = ModelFile {
        format_version: FORMAT_VERSION,
        p: model.p,
        d: model.d,
        r: model.r,
        dt: model.dt,
        channel_names: model.channel_names.clone(),
        filter: model.filter.clone(),
        norm: model.norm.clone(),
        sigma_r: model.sigma_r.to_vec(),
        u_r: real_mat(&model.u_r),
        v_r: real_mat(&model.v_r),
        a_tilde: real_mat(&model.a_tilde),
        mu: complex_vec(&model.mu),
        lambda_c: complex_vec(&model.lambda_c),
        w: complex_mat(&model.w),
        phi_aug: complex_mat(&model.phi_aug),
        b0: complex_vec(&model.b0),
        b_global: model.b_global.as_ref().map(complex_vec),
    };
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(&mut out, &file)
        .map_err(|e| Error::ModelFormat(format!("serialize: {e}")))?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<KoopmanModel> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let file: ModelFile = serde_json::from_reader(reader)
        .map_err(|e| Error::ModelFormat(format!("parse: {e}")))?;
    if file.format_version != FORMAT_VERSION {
        return Err(Error::ModelFormat(format!(
            "format_version {} unsupported (expected {FORMAT_VERSION})",
            file.format_version
        )));
    }
    let phi_aug = uncomplex_mat(file.phi_aug, "phi_aug")?;
    if phi_aug.dim() != (file.p * file.d, file.r) {
        return Err(Error::ModelFormat(format!(
            "phi_aug {:?} inconsistent with p={} d={} r={}",
            phi_aug.dim(),
            file.p,
            file.d,
            file.r
        )));
    }
    if file.channel_names.len() != file.p
        || file.norm.means.len() != file.p
        || file.norm.stds.len() != file.p
    {
        return Err(Error::ModelFormat("metadata lengths inconsistent with p".into()));
    }
    let phi_phys = phi_aug.slice(s![..file.p, ..]).to_owned();
    let model = KoopmanModel {
        r: file.r,
        u_r: unreal_mat(file.u_r, "u_r")?,
        sigma_r: Array1::from_vec(file.sigma_r),
        v_r: unreal_mat(file.v_r, "v_r")?,
        a_tilde: unreal_mat(file.a_tilde, "a_tilde")?,
        mu: uncomplex_vec(file.mu, "mu")?,
        lambda_c: uncomplex_vec(file.lambda_c, "lambda_c")?,
        w: uncomplex_mat(file.w, "w")?,
        phi_aug,
        phi_phys,
        b0: uncomplex_vec(file.b0, "b0")?,
        b_global: file.b_global.map(|v| uncomplex_vec(v, "b_global")).transpose()?,
        dt: file.dt,
        p: file.p,
        d: file.d,
        norm: file.norm,
        filter: file.filter,
        channel_names: file.channel_names,
    };
    if model.mu.len() != model.r || model.sigma_r.len() != model.r || model.b0.len() != model.r {
        return Err(Error::ModelFormat("spectrum lengths inconsistent with r".into()));
    }
    Ok(model)
}

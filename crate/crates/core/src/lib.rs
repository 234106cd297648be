//! Hankel-DMD (Koopman) system identification and rolling-horizon virtual
//! sensing for multivariate structural sensor data.
//!
//! The pipeline: condition raw signals ([`preprocess`]), build time-delay
//! trajectory matrices ([`embedding`]), fit a reduced Koopman operator and
//! extract its modal spectrum ([`koopman`]), then reconstruct hidden channels
//! from a sparse sensor subset with a rolling calibrate-and-propagate loop
//! ([`sensing`]). [`synth`] provides a synthetic plant with analytically known
//! modes for validation, and [`metrics`] the quantitative checks (MAC, R2,
//! NRMSE, maximal Lyapunov exponent).

extern crate blas_src;

pub mod config;
pub mod embedding;
pub mod error;
pub mod koopman;
pub mod linalg;
pub mod metrics;
pub mod model_io;
pub mod preprocess;
pub mod sensing;
pub mod synth;
pub mod timeseries;

pub mod cli;

pub use error::{Error, ErrorCategory, Result};
pub use timeseries::TimeSeriesMatrix;

use thiserror::Error;

/// Every failure mode the library can produce.
///
/// Variants are grouped by the stage that raises them; the CLI maps the
/// groups onto process exit codes via [`Error::category`].
#[derive(Debug, Error)]
pub enum Error {
    // preprocessing
    #[error("high cutoff {high_hz} Hz reaches the Nyquist frequency {nyquist_hz} Hz")]
    NyquistViolation { high_hz: f64, nyquist_hz: f64 },
    #[error("signal too short for edge padding: {n} samples, need more than {min}")]
    SignalTooShort { n: usize, min: usize },
    #[error("channel {0} is degenerate (near-zero variance)")]
    DegenerateChannel(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    // embedding
    #[error("insufficient samples: N={n} but delay depth d={d} needs at least d+2")]
    InsufficientSamples { n: usize, d: usize },
    #[error("window start {start} with depth {d} exceeds N={n}")]
    OutOfRange { start: usize, d: usize, n: usize },

    // koopman
    #[error("rank {r} exceeds the admissible range 1..={max}")]
    RankTooLarge { r: usize, max: usize },
    #[error("rank {r} crosses the numerical null space (sigma_r/sigma_1 = {ratio:.3e})")]
    RankCrossesNullspace { r: usize, ratio: f64 },
    #[error("eigendecomposition failed: {0}")]
    EigDecompositionFailure(String),
    #[error("no singular values supplied")]
    EmptySpectrum,
    #[error("conjugate imbalance: imaginary residual {residual:.3e} exceeds {tol:.3e}")]
    ConjugateImbalance { residual: f64, tol: f64 },
    #[error("eigenvector matrix condition number {cond:.3e} exceeds 1e12")]
    IllConditionedEigenbasis { cond: f64 },

    // sensing
    #[error("sensor mask selects no channels")]
    EmptyMask,
    #[error("underdetermined calibration: q*len = {rows} equations for r = {r} amplitudes")]
    UnderdeterminedCalibration { rows: usize, r: usize },
    #[error("horizon {w} plus calibration {cal} exceed the {n} test samples")]
    HorizonExceedsData { w: usize, cal: usize, n: usize },

    // metrics
    #[error("zero vector passed to mac")]
    ZeroVector,
    #[error("truth vector is constant; R^2 undefined")]
    ConstantTruth,
    #[error("truth range is zero; NRMSE undefined")]
    ZeroRange,
    #[error("sensor count mismatch: identified shapes have {got} rows, reference {expected}")]
    SensorCountMismatch { got: usize, expected: usize },
    #[error("insufficient data for Lyapunov estimation: {0}")]
    InsufficientData(String),

    // synth
    #[error("invalid plant spec: {0}")]
    SpecInvalid(String),

    // cli / io
    #[error("non-uniform sampling: relative jitter {jitter:.3e} at row {row}")]
    NonUniformSampling { row: usize, jitter: f64 },
    #[error("missing header row in {0}")]
    MissingHeader(String),
    #[error("non-finite value at row {row}, column {col}")]
    NonFiniteValue { row: usize, col: usize },
    #[error("model does not match data: {0}")]
    ModelDataMismatch(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("model container error: {0}")]
    ModelFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse failure class, used for CLI exit codes and FFI status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// Bad configuration or usage (exit 2).
    Usage,
    /// Malformed or inconsistent input data (exit 3).
    Data,
    /// Numerical failure during fitting or solving (exit 4).
    Numerical,
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        use Error::*;
        match self {
            Config(_) | SpecInvalid(_) | NyquistViolation { .. } | OutOfRange { .. }
            | EmptyMask | HorizonExceedsData { .. } | RankTooLarge { .. } => ErrorCategory::Usage,
            SignalTooShort { .. } | DegenerateChannel(_) | ShapeMismatch(_)
            | InsufficientSamples { .. } | NonUniformSampling { .. } | MissingHeader(_)
            | NonFiniteValue { .. } | ModelDataMismatch(_) | ModelFormat(_) | Io(_)
            | SensorCountMismatch { .. } | InsufficientData(_) | ZeroVector | ConstantTruth
            | ZeroRange | EmptySpectrum => ErrorCategory::Data,
            RankCrossesNullspace { .. } | EigDecompositionFailure(_) | ConjugateImbalance { .. }
            | IllConditionedEigenbasis { .. } | UnderdeterminedCalibration { .. } => {
                ErrorCategory::Numerical
            }
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

//! Synthetic plant with analytically known modal content: lightly damped
//! second-order modes under Poisson re-excitation, persistent harmonic
//! forcing, optional Lorenz drive, and proportional white noise. Everything
//! is deterministic under the spec's seed, so generated records double as
//! ground-truth oracles.

use ndarray::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::TimeSeriesMatrix;

/// Mean inter-arrival time of re-excitation impulses, seconds.
pub const KICK_MEAN_INTERVAL_S: f64 = 30.0;
/// Base impulse amplitude; scaled by (0.5 + U) * 2 * omega_d into velocity.
pub const KICK_AMP: f64 = 0.004;
/// Offset applied to the seed for the chaotic drive's own random stream.
const CHAOS_SEED_OFFSET: u64 = 77;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeSpec {
    pub frequency_hz: f64,
    pub damping_ratio: f64,
    pub shape: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HarmonicSpec {
    pub frequency_hz: f64,
    pub amplitude: f64,
    pub profile: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LorenzParams {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
    /// Clock scale: the drive advances rate * dt of Lorenz time per sample.
    /// Below 1 slows the chaos relative to the plant dynamics.
    pub rate: f64,
}

impl Default for LorenzParams {
    fn default() -> Self {
        Self { sigma: 10.0, rho: 28.0, beta: 8.0 / 3.0, rate: 1.0 }
    }
}

impl LorenzParams {
    /// RK4-integrated x-component sampled every `dt_sample` seconds with
    /// `substeps` internal steps per sample, after `burn_in_substeps` warmup
    /// steps from `ic`. Deterministic; `rate` is not applied here.
    pub fn x_series(
        &self,
        ic: [f64; 3],
        dt_sample: f64,
        substeps: usize,
        burn_in_substeps: usize,
        n: usize,
    ) -> Vec<f64> {
        let h = dt_sample / substeps as f64;
        let mut s = ic;
        for _ in 0..burn_in_substeps {
            s = self.rk4_step(s, h);
        }
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            for _ in 0..substeps {
                s = self.rk4_step(s, h);
            }
            out.push(s[0]);
        }
        out
    }

    pub fn rhs(&self, s: [f64; 3]) -> [f64; 3] {
        let [x, y, z] = s;
        [self.sigma * (y - x), x * (self.rho - z) - y, x * y - self.beta * z]
    }

    fn rk4_step(&self, s: [f64; 3], h: f64) -> [f64; 3] {
        let ax = |a: [f64; 3], b: [f64; 3], c: f64| {
            [a[0] + c * b[0], a[1] + c * b[1], a[2] + c * b[2]]
        };
        let k1 = self.rhs(s);
        let k2 = self.rhs(ax(s, k1, h / 2.0));
        let k3 = self.rhs(ax(s, k2, h / 2.0));
        let k4 = self.rhs(ax(s, k3, h));
        let mut out = s;
        for i in 0..3 {
            out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChaoticDrive {
    pub lorenz: LorenzParams,
    pub gain: f64,
    /// Sensor indices receiving the drive (unit weight each).
    pub channels: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticPlantSpec {
    pub n_sensors: usize,
    pub modes: Vec<ModeSpec>,
    pub harmonics: Vec<HarmonicSpec>,
    /// White-noise level as a fraction of each channel's clean RMS.
    pub noise_std: f64,
    pub chaotic_drive: Option<ChaoticDrive>,
    pub dt: f64,
    pub duration_s: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantedMode {
    pub frequency_hz: f64,
    pub damping_ratio: f64,
    /// f_n * sqrt(1 - zeta^2), what an FFT peak sits on.
    pub damped_frequency_hz: f64,
    pub shape: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SyntheticTruth {
    pub data: TimeSeriesMatrix,
    pub modes: Vec<PlantedMode>,
    pub harmonic_frequencies: Vec<f64>,
}

impl SyntheticPlantSpec {
    pub fn n_samples(&self) -> usize {
        (self.duration_s / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::SpecInvalid(msg));
        if self.n_sensors == 0 {
            return bad("n_sensors must be positive".into());
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.duration_s > 0.0) || self.n_samples() < 2 {
            return bad(format!("duration {} s yields fewer than 2 samples", self.duration_s));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return bad(format!("noise_std must be >= 0, got {}", self.noise_std));
        }
        let nyquist = 0.5 / self.dt;
        for (i, m) in self.modes.iter().enumerate() {
            if !(m.frequency_hz > 0.0) || m.frequency_hz >= nyquist {
                return bad(format!(
                    "mode {i} frequency {} Hz outside (0, {nyquist}) Hz",
                    m.frequency_hz
                ));
            }
            if !(m.damping_ratio > 0.0 && m.damping_ratio < 1.0) {
                return bad(format!("mode {i} damping_ratio {} outside (0, 1)", m.damping_ratio));
            }
            if m.shape.len() != self.n_sensors {
                return bad(format!(
                    "mode {i} shape length {} != n_sensors {}",
                    m.shape.len(),
                    self.n_sensors
                ));
            }
            let norm: f64 = m.shape.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm > 0.0) || !norm.is_finite() {
                return bad(format!("mode {i} shape must be nonzero and finite"));
            }
        }
        for (i, h) in self.harmonics.iter().enumerate() {
            if !(h.frequency_hz > 0.0) || h.frequency_hz >= nyquist {
                return bad(format!(
                    "harmonic {i} frequency {} Hz outside (0, {nyquist}) Hz",
                    h.frequency_hz
                ));
            }
            if !h.amplitude.is_finite() {
                return bad(format!("harmonic {i} amplitude must be finite"));
            }
            if h.profile.len() != self.n_sensors {
                return bad(format!(
                    "harmonic {i} profile length {} != n_sensors {}",
                    h.profile.len(),
                    self.n_sensors
                ));
            }
        }
        if let Some(cd) = &self.chaotic_drive {
            if cd.channels.is_empty() {
                return bad("chaotic_drive needs at least one target channel".into());
            }
            if let Some(&c) = cd.channels.iter().find(|&&c| c >= self.n_sensors) {
                return bad(format!("chaotic_drive channel {c} >= n_sensors {}", self.n_sensors));
            }
            if !(cd.gain >= 0.0) || !cd.gain.is_finite() {
                return bad(format!("chaotic_drive gain must be >= 0, got {}", cd.gain));
            }
            if !(cd.lorenz.rate > 0.0) {
                return bad(format!("lorenz rate must be positive, got {}", cd.lorenz.rate));
            }
        }
        Ok(())
    }
}

/// Exact one-step transition of x'' + 2 zeta w x' + w^2 x = 0 for state
/// [x, x']; returns the 2x2 matrix rows and the damped angular frequency.
fn modal_step(frequency_hz: f64, zeta: f64, dt: f64) -> ([f64; 4], f64) {
    let w = 2.0 * std::f64::consts::PI * frequency_hz;
    let wd = w * (1.0 - zeta * zeta).sqrt();
    let e = (-zeta * w * dt).exp();
    let (s, c) = (wd * dt).sin_cos();
    let a = [
        e * (c + zeta * w * s / wd),
        e * (s / wd),
        e * (-w * w * s / wd),
        e * (c - zeta * w * s / wd),
    ];
    (a, wd)
}

/// Renders the spec into a sensor record. RNG draws happen in a fixed order
/// (per mode: amplitude, phase, then kick stream; then chaos; then noise),
/// so identical spec + seed reproduces the matrix bit for bit.
pub fn generate(spec: &SyntheticPlantSpec) -> Result<SyntheticTruth> {
    spec.validate()?;
    let p = spec.n_sensors;
    let n = spec.n_samples();
    let dt = spec.dt;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let kick_interval = Exp::new(1.0 / KICK_MEAN_INTERVAL_S).expect("positive rate");

    let mut y = Array2::<f64>::zeros((p, n));
    let mut truth_modes = Vec::with_capacity(spec.modes.len());
    for mode in &spec.modes {
        let (a, wd) = modal_step(mode.frequency_hz, mode.damping_ratio, dt);
        let w = 2.0 * std::f64::consts::PI * mode.frequency_hz;
        let amp = 0.7 + 0.6 * rng.gen::<f64>();
        let ph = 2.0 * std::f64::consts::PI * rng.gen::<f64>();
        // Free response sampled at a random phase of the cycle.
        let mut x0 = amp * ph.cos();
        let mut x1 = -amp * (wd * ph.sin() + mode.damping_ratio * w * ph.cos());

        let mut jolt = vec![0.0f64; n];
        let mut tk = 0.0;
        loop {
            tk += kick_interval.sample(&mut rng);
            let k = (tk / dt).round();
            if !(k < n as f64) {
                break;
            }
            let a_k = KICK_AMP * (0.5 + rng.gen::<f64>());
            let sign = if rng.gen_range(0..2) == 0 { -1.0 } else { 1.0 };
            jolt[k as usize] = a_k * sign * 2.0 * wd;
        }

        for k in 0..n {
            for (i, s) in mode.shape.iter().enumerate() {
                y[[i, k]] += s * x0;
            }
            let (nx0, nx1) = (a[0] * x0 + a[1] * x1, a[2] * x0 + a[3] * x1);
            x0 = nx0;
            // Impulses land in the velocity state between samples.
            x1 = nx1 + jolt[k];
        }
        truth_modes.push(PlantedMode {
            frequency_hz: mode.frequency_hz,
            damping_ratio: mode.damping_ratio,
            damped_frequency_hz: mode.frequency_hz
                * (1.0 - mode.damping_ratio * mode.damping_ratio).sqrt(),
            shape: mode.shape.clone(),
        });
    }

    for h in &spec.harmonics {
        let wf = 2.0 * std::f64::consts::PI * h.frequency_hz;
        for k in 0..n {
            let v = h.amplitude * (wf * (k as f64 * dt)).cos();
            for (i, pr) in h.profile.iter().enumerate() {
                y[[i, k]] += pr * v;
            }
        }
    }

    if let Some(cd) = &spec.chaotic_drive {
        if cd.gain > 0.0 {
            let mut crng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(CHAOS_SEED_OFFSET));
            let ic = [
                1.0 + crng.gen::<f64>() - 0.5,
                1.0 + crng.gen::<f64>() - 0.5,
                1.0 + crng.gen::<f64>() - 0.5,
            ];
            let x = cd.lorenz.x_series(ic, dt * cd.lorenz.rate, 4, 2000, n);
            for &c in &cd.channels {
                for k in 0..n {
                    y[[c, k]] += cd.gain * x[k];
                }
            }
        }
    }

    if spec.noise_std > 0.0 {
        let mut rms = vec![0.0f64; p];
        for i in 0..p {
            rms[i] = (y.row(i).iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
        }
        for i in 0..p {
            let scale = spec.noise_std * rms[i];
            for k in 0..n {
                let g: f64 = StandardNormal.sample(&mut rng);
                y[[i, k]] += scale * g;
            }
        }
    }

    Ok(SyntheticTruth {
        data: TimeSeriesMatrix::new(y, dt)?,
        modes: truth_modes,
        harmonic_frequencies: spec.harmonics.iter().map(|h| h.frequency_hz).collect(),
    })
}

/// Cantilever-like spatial profiles over 9 acceleration + 9 moment channels,
/// unit norm, pairwise well separated (first modes monotone, second modes
/// with an interior node).
pub fn bending_shapes() -> Vec<Vec<f64>> {
    let z: Vec<f64> = (0..9).map(|i| (i + 1) as f64 / 9.0).collect();
    let pi = std::f64::consts::PI;
    let build = |acc: &dyn Fn(f64) -> f64, mom: &dyn Fn(f64) -> f64| -> Vec<f64> {
        let mut s: Vec<f64> = z.iter().map(|&v| acc(v)).collect();
        s.extend(z.iter().map(|&v| mom(v)));
        let norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        s.iter().map(|v| v / norm).collect()
    };
    vec![
        build(&|v| (pi * v / 2.0).sin(), &|v| 0.8 * (1.0 - v) * (1.0 - v) + 0.2),
        build(&|v| 1.0 - (pi * v / 2.0).cos(), &|v| -(0.9 * (1.0 - v) + 0.1)),
        build(&|v| (pi * v / 0.55).sin(), &|v| 0.7 * (pi * v / 0.55).cos()),
        build(&|v| (pi * v / 0.68).sin(), &|v| -0.7 * (pi * v / 0.68).cos()),
    ]
}

/// Rotor-harmonic spatial pattern: smooth and node-free across both blocks,
/// deliberately not matching any bending shape.
pub fn rotor_harmonic_profile() -> Vec<f64> {
    let pi = std::f64::consts::PI;
    let za: Vec<f64> = (0..9).map(|i| 0.1 + 0.9 * i as f64 / 8.0).collect();
    let mut pr: Vec<f64> = za.iter().map(|&v| 0.45 + 0.55 * v.powf(1.5)).collect();
    pr.extend(za.iter().map(|&v| {
        let c = (pi * (v - 0.55)).cos();
        -(0.40 + 0.60 * c * c)
    }));
    pr
}

/// 18-channel floating-turbine-like plant: four bending modes (two
/// fore-aft-like, two side-side-like), a 3P-style harmonic at 0.61 Hz, 50 Hz
/// sampling for 600 s, 5% noise.
pub fn fowt_like_preset() -> SyntheticPlantSpec {
    let shapes = bending_shapes();
    let params = [(0.541, 0.0302), (0.524, 0.0582), (1.674, 0.0509), (2.042, 0.0180)];
    SyntheticPlantSpec {
        n_sensors: 18,
        modes: params
            .iter()
            .zip(shapes)
            .map(|(&(f, z), shape)| ModeSpec { frequency_hz: f, damping_ratio: z, shape })
            .collect(),
        harmonics: vec![HarmonicSpec {
            frequency_hz: 0.61,
            amplitude: 0.6,
            profile: rotor_harmonic_profile(),
        }],
        noise_std: 0.05,
        chaotic_drive: None,
        dt: 0.02,
        duration_s: 600.0,
        seed: 0,
    }
}

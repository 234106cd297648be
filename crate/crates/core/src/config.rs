//! Flat key=value run configuration. Keys use dotted section prefixes
//! (`filter.order=4`, `synth.mode.0.frequency_hz=0.541`); `#` starts a
//! comment line. Command-line flags are applied on top of the file, so a
//! flag always wins over its mirrored key.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::synth::{ChaoticDrive, HarmonicSpec, LorenzParams, ModeSpec, SyntheticPlantSpec};

#[derive(Debug, Clone, Default)]
pub struct Config {
    map: BTreeMap<String, String>,
}

impl Config {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_str(&text)
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got {line:?}", lineno + 1))
            })?;
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self { map })
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.map.insert(key.to_string(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|s| s.as_str())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.map.contains_key(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|_| {
                Error::Config(format!("key {key}: cannot parse {v:?}"))
            }),
        }
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.map.get(key).map(|s| s.as_str()) {
            None => Ok(default),
            Some("true") | Some("1") | Some("yes") => Ok(true),
            Some("false") | Some("0") | Some("no") => Ok(false),
            Some(v) => Err(Error::Config(format!("key {key}: expected bool, got {v:?}"))),
        }
    }

    pub fn str_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.map.get(key).map(|s| s.as_str()).unwrap_or(default)
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| Error::Config(format!("missing required key {key}")))
    }

    /// Comma-separated list of floats.
    pub fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.list(key)
    }

    /// Comma-separated list of indices.
    pub fn usize_list(&self, key: &str) -> Result<Option<Vec<usize>>> {
        self.list(key)
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        let Some(v) = self.map.get(key) else { return Ok(None) };
        let mut out = Vec::new();
        for item in v.split(',') {
            let item = item.trim();
            if item.is_empty() {
                continue;
            }
            out.push(item.parse::<T>().map_err(|_| {
                Error::Config(format!("key {key}: cannot parse list item {item:?}"))
            })?);
        }
        Ok(Some(out))
    }

    /// Number of consecutive indexed sections `prefix.0.`, `prefix.1.`, ...
    fn indexed_count(&self, prefix: &str) -> usize {
        let mut i = 0;
        while self.map.keys().any(|k| k.starts_with(&format!("{prefix}.{i}."))) {
            i += 1;
        }
        i
    }
}

fn join_f64(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(",")
}

/// Builds a plant spec from `synth.*` keys. `synth.preset=fowt` starts from
/// the built-in preset; individual keys then override it. Modes and
/// harmonics given as indexed sections replace the preset's lists wholesale.
pub fn plant_spec_from_config(cfg: &Config) -> Result<SyntheticPlantSpec> {
    let mut spec = match cfg.str_or("synth.preset", "fowt") {
        "fowt" => crate::synth::fowt_like_preset(),
        "none" => SyntheticPlantSpec {
            n_sensors: 1,
            modes: vec![],
            harmonics: vec![],
            noise_std: 0.0,
            chaotic_drive: None,
            dt: 0.02,
            duration_s: 60.0,
            seed: 0,
        },
        other => return Err(Error::Config(format!("unknown synth.preset {other:?}"))),
    };
    spec.n_sensors = cfg.usize_or("synth.n_sensors", spec.n_sensors)?;
    spec.dt = cfg.f64_or("synth.dt", spec.dt)?;
    spec.duration_s = cfg.f64_or("synth.duration_s", spec.duration_s)?;
    spec.noise_std = cfg.f64_or("synth.noise_std", spec.noise_std)?;
    spec.seed = cfg.u64_or("synth.seed", spec.seed)?;

    let n_modes = cfg.indexed_count("synth.mode");
    if n_modes > 0 {
        let mut modes = Vec::with_capacity(n_modes);
        for i in 0..n_modes {
            let pfx = format!("synth.mode.{i}");
            modes.push(ModeSpec {
                frequency_hz: cfg
                    .parsed(&format!("{pfx}.frequency_hz"))?
                    .ok_or_else(|| Error::Config(format!("missing {pfx}.frequency_hz")))?,
                damping_ratio: cfg
                    .parsed(&format!("{pfx}.damping_ratio"))?
                    .ok_or_else(|| Error::Config(format!("missing {pfx}.damping_ratio")))?,
                shape: cfg
                    .f64_list(&format!("{pfx}.shape"))?
                    .ok_or_else(|| Error::Config(format!("missing {pfx}.shape")))?,
            });
        }
        spec.modes = modes;
    }

    let n_harm = cfg.indexed_count("synth.harmonic");
    if n_harm > 0 || cfg.bool_or("synth.no_harmonics", false)? {
        let mut harmonics = Vec::with_capacity(n_harm);
        for i in 0..n_harm {
            let pfx = format!("synth.harmonic.{i}");
            harmonics.push(HarmonicSpec {
                frequency_hz: cfg
                    .parsed(&format!("{pfx}.frequency_hz"))?
                    .ok_or_else(|| Error::Config(format!("missing {pfx}.frequency_hz")))?,
                amplitude: cfg
                    .parsed(&format!("{pfx}.amplitude"))?
                    .ok_or_else(|| Error::Config(format!("missing {pfx}.amplitude")))?,
                profile: cfg
                    .f64_list(&format!("{pfx}.profile"))?
                    .ok_or_else(|| Error::Config(format!("missing {pfx}.profile")))?,
            });
        }
        spec.harmonics = harmonics;
    }

    if let Some(channels) = cfg.usize_list("synth.chaos.channels")? {
        spec.chaotic_drive = Some(ChaoticDrive {
            lorenz: LorenzParams {
                sigma: cfg.f64_or("synth.chaos.sigma", 10.0)?,
                rho: cfg.f64_or("synth.chaos.rho", 28.0)?,
                beta: cfg.f64_or("synth.chaos.beta", 8.0 / 3.0)?,
                rate: cfg.f64_or("synth.chaos.rate", 1.0)?,
            },
            gain: cfg.f64_or("synth.chaos.gain", 0.0)?,
            channels,
        });
    }
    Ok(spec)
}

/// Inverse of `plant_spec_from_config`, for echoing a resolved spec.
pub fn plant_spec_to_config(spec: &SyntheticPlantSpec) -> Vec<(String, String)> {
    let mut out = vec![
        ("synth.preset".into(), "none".to_string()),
        ("synth.n_sensors".into(), spec.n_sensors.to_string()),
        ("synth.dt".into(), format!("{}", spec.dt)),
        ("synth.duration_s".into(), format!("{}", spec.duration_s)),
        ("synth.noise_std".into(), format!("{}", spec.noise_std)),
        ("synth.seed".into(), spec.seed.to_string()),
    ];
    for (i, m) in spec.modes.iter().enumerate() {
        out.push((format!("synth.mode.{i}.frequency_hz"), format!("{}", m.frequency_hz)));
        out.push((format!("synth.mode.{i}.damping_ratio"), format!("{}", m.damping_ratio)));
        out.push((format!("synth.mode.{i}.shape"), join_f64(&m.shape)));
    }
    for (i, h) in spec.harmonics.iter().enumerate() {
        out.push((format!("synth.harmonic.{i}.frequency_hz"), format!("{}", h.frequency_hz)));
        out.push((format!("synth.harmonic.{i}.amplitude"), format!("{}", h.amplitude)));
        out.push((format!("synth.harmonic.{i}.profile"), join_f64(&h.profile)));
    }
    if let Some(cd) = &spec.chaotic_drive {
        out.push(("synth.chaos.sigma".into(), format!("{}", cd.lorenz.sigma)));
        out.push(("synth.chaos.rho".into(), format!("{}", cd.lorenz.rho)));
        out.push(("synth.chaos.beta".into(), format!("{}", cd.lorenz.beta)));
        out.push(("synth.chaos.rate".into(), format!("{}", cd.lorenz.rate)));
        out.push(("synth.chaos.gain".into(), format!("{}", cd.gain)));
        out.push((
            "synth.chaos.channels".into(),
            cd.channels.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(","),
        ));
    }
    out
}

//! Run configuration: a JSON file with a fixed top-level schema and command-specific
//! `parameters`; command-line flags override file keys.

use std::path::{Path, PathBuf};

use ginlab::duality::DualityCase;
use ginlab::model::{Deformation, EnsembleConfig, JordanSpec};
use ginlab::C64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Top level of a configuration file.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    pub command: Option<String>,
    #[serde(rename = "masterSeed", alias = "seed")]
    pub seed: Option<u64>,
    #[serde(rename = "outputDir", alias = "output_dir")]
    pub output_dir: Option<PathBuf>,
    pub format: Option<Format>,
    #[serde(default)]
    pub parameters: Map<String, Value>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: line {line}, column {column}: {message}")]
    Syntax { path: PathBuf, line: usize, column: usize, message: String },
    #[error("missing command: give it on the command line or as the \"command\" key")]
    MissingCommand,
    #[error("config file is for command \"{file}\" but \"{cli}\" was requested")]
    CommandMismatch { file: String, cli: String },
    #[error("parameters for {command}: {message}")]
    Parameters { command: String, message: String },
    #[error("{command} is stochastic and needs a seed (--seed or the \"masterSeed\" key)")]
    MissingSeed { command: String },
    #[error("{0}")]
    Invalid(String),
}

pub fn read_run_file(path: &Path) -> Result<RunFile, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
    if text.trim().is_empty() {
        return Ok(RunFile::default());
    }
    serde_json::from_str(&text).map_err(|e| ConfigError::Syntax {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Serializes a flag struct and drops unset (null) entries.
pub fn overrides<T: Serialize>(flags: &T) -> Map<String, Value> {
    match serde_json::to_value(flags).expect("flags serialize") {
        Value::Object(m) => m.into_iter().filter(|(_, v)| !v.is_null()).collect(),
        _ => Map::new(),
    }
}

/// File parameters with flag values laid over them, deserialized strictly.
pub fn resolve<T: DeserializeOwned>(command: &str, file: &Map<String, Value>, flags: Map<String, Value>) -> Result<T, ConfigError> {
    let mut merged = file.clone();
    merged.extend(flags);
    serde_json::from_value(Value::Object(merged))
        .map_err(|e| ConfigError::Parameters { command: command.to_string(), message: e.to_string() })
}

/// Jordan data, inline or as a path to a JSON file.
#[derive(Clone, Debug, Serialize)]
#[serde(untagged)]
pub enum JordanInput {
    Path(PathBuf),
    Inline(JordanSpec),
}

impl JordanInput {
    pub fn load(&self) -> Result<JordanSpec, ConfigError> {
        match self {
            JordanInput::Inline(s) => Ok(s.clone()),
            JordanInput::Path(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read { path: p.clone(), source })?;
                serde_json::from_str(&text).map_err(|e| ConfigError::Syntax {
                    path: p.clone(),
                    line: e.line(),
                    column: e.column(),
                    message: e.to_string(),
                })
            }
        }
    }
}

/// A duality case, inline or as a path.
#[derive(Clone, Debug, Serialize)]
#[serde(untagged)]
pub enum CaseInput {
    Path(PathBuf),
    Inline(Box<DualityCase>),
}

impl CaseInput {
    pub fn load(&self) -> Result<DualityCase, ConfigError> {
        match self {
            CaseInput::Inline(c) => Ok((**c).clone()),
            CaseInput::Path(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read { path: p.clone(), source })?;
                serde_json::from_str(&text).map_err(|e| ConfigError::Syntax {
                    path: p.clone(),
                    line: e.line(),
                    column: e.column(),
                    message: e.to_string(),
                })
            }
        }
    }
}

// Hand-written so that an invalid inline value reports its own error instead of
// serde's generic "did not match any variant".
fn path_or<'de, D, T>(d: D) -> Result<Result<PathBuf, T>, D::Error>
where
    D: serde::Deserializer<'de>,
    T: DeserializeOwned,
{
    let v = Value::deserialize(d)?;
    match v {
        Value::String(s) => Ok(Ok(PathBuf::from(s))),
        other => serde_json::from_value(other).map(Err).map_err(serde::de::Error::custom),
    }
}

impl<'de> Deserialize<'de> for JordanInput {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(match path_or::<D, JordanSpec>(d)? {
            Ok(p) => JordanInput::Path(p),
            Err(s) => JordanInput::Inline(s),
        })
    }
}

impl<'de> Deserialize<'de> for CaseInput {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(match path_or::<D, DualityCase>(d)? {
            Ok(p) => CaseInput::Path(p),
            Err(c) => CaseInput::Inline(Box::new(c)),
        })
    }
}

fn one() -> u64 {
    1
}
fn default_edge_replicas() -> u64 {
    200
}
fn default_window() -> f64 {
    5.0
}
fn default_min_expected() -> f64 {
    5.0
}
fn z0_re_default() -> f64 {
    1.0
}
fn default_beta2() -> u8 {
    2
}
fn default_i2_samples() -> u64 {
    1_000_000
}
fn default_prop13_n() -> usize {
    8
}
fn default_prop13_samples() -> u64 {
    100_000
}
fn default_prop13_replicas() -> u64 {
    200_000
}
fn default_bin() -> f64 {
    0.2
}
fn default_theta_re() -> f64 {
    1.5
}
fn default_outlier_replicas() -> u64 {
    300
}
fn default_n_eff() -> usize {
    256
}
fn default_slope_tolerance() -> f64 {
    0.05
}
fn default_ns_outlier() -> Vec<usize> {
    vec![128, 256, 512, 1024, 2048, 4096]
}
fn default_ns_critical() -> Vec<usize> {
    vec![256, 512, 1024, 2048]
}
fn default_p() -> usize {
    1
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleParams {
    pub beta: u8,
    pub n: usize,
    #[serde(default = "one")]
    pub replicas: u64,
    #[serde(default)]
    pub jordan: Option<JordanInput>,
    #[serde(default)]
    pub tau: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeParams {
    pub beta: u8,
    pub n: usize,
    #[serde(default = "default_edge_replicas")]
    pub replicas: u64,
    #[serde(default = "z0_re_default")]
    pub z0_re: f64,
    #[serde(default)]
    pub z0_im: f64,
    #[serde(default)]
    pub jordan: Option<JordanInput>,
    #[serde(default = "default_window")]
    pub window: f64,
    /// Bins per side of the window; the default gives a bin side of 0.25.
    #[serde(default)]
    pub bins: Option<usize>,
    #[serde(default = "default_min_expected")]
    pub min_expected: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelParams {
    #[serde(default)]
    pub t: u32,
    /// `start:stop:step` along the normal coordinate.
    pub grid: String,
    /// Fixed tangential coordinate.
    #[serde(default)]
    pub im: f64,
    #[serde(default = "default_beta2")]
    pub beta: u8,
    #[serde(default = "z0_re_default")]
    pub z0_re: f64,
    #[serde(default)]
    pub z0_im: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualityParams {
    #[serde(default)]
    pub beta: Option<u8>,
    #[serde(default)]
    pub case: Option<CaseInput>,
    /// Run the seeded random suite instead of a single case.
    #[serde(default)]
    pub suite: bool,
    #[serde(default)]
    pub samples: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegralParams {
    #[serde(default)]
    pub t: Option<u32>,
    /// Diagonal of `Ẑ`; without it the standard grid is run.
    #[serde(default)]
    pub points: Option<Vec<C64>>,
    #[serde(default = "default_i2_samples")]
    pub samples: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prop13Params {
    #[serde(default = "default_prop13_n")]
    pub n: usize,
    /// Without `a` the suite `a ∈ {0, 0.5, 0.9i}` is run.
    #[serde(default)]
    pub a: Option<C64>,
    #[serde(default)]
    pub z: Option<C64>,
    #[serde(default = "default_prop13_samples")]
    pub samples: u64,
    #[serde(default = "default_prop13_replicas")]
    pub replicas: u64,
    #[serde(default = "default_bin")]
    pub bin: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutlierParams {
    #[serde(default = "default_p")]
    pub p: usize,
    #[serde(default = "default_theta_re")]
    pub theta_re: f64,
    #[serde(default)]
    pub theta_im: f64,
    #[serde(default = "default_ns_outlier")]
    pub ns: Vec<usize>,
    #[serde(default = "default_outlier_replicas")]
    pub replicas: u64,
    #[serde(default = "default_n_eff")]
    pub n_eff: usize,
    #[serde(default = "default_slope_tolerance")]
    pub tolerance: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticalParams {
    #[serde(default = "default_p")]
    pub p: usize,
    #[serde(default = "z0_re_default")]
    pub z0_re: f64,
    #[serde(default)]
    pub z0_im: f64,
    #[serde(default)]
    pub theta_hat_re: f64,
    #[serde(default)]
    pub theta_hat_im: f64,
    #[serde(default = "default_ns_critical")]
    pub ns: Vec<usize>,
    #[serde(default = "default_edge_replicas")]
    pub replicas: u64,
    #[serde(default = "default_window")]
    pub window: f64,
}

pub fn ensemble(beta: u8, n: usize, jordan: &Option<JordanInput>, tau: Option<f64>, seed: u64) -> Result<EnsembleConfig, ConfigError> {
    let deformation = match jordan {
        Some(j) => Deformation::Jordan(j.load()?),
        None => Deformation::None,
    };
    let mut cfg = EnsembleConfig::new(beta, n, deformation, seed);
    cfg.tau = tau;
    cfg.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(cfg)
}

/// Parses `start:stop:step` (inclusive of `stop` up to rounding).
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, ConfigError> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || ConfigError::Invalid(format!("grid \"{spec}\" is not start:stop:step"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let v: Vec<f64> = parts.iter().map(|p| p.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?;
    let (a, b, h) = (v[0], v[1], v[2]);
    if !(h > 0.0) || b < a {
        return Err(ConfigError::Invalid(format!("grid \"{spec}\" needs step > 0 and stop >= start")));
    }
    let count = ((b - a) / h + 1e-9).floor() as usize + 1;
    // rounded so that e.g. -5 + 53·0.1 prints as 0.3
    Ok((0..count).map(|k| ((a + k as f64 * h) * 1e12).round() / 1e12).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        let g = parse_grid("-5:3:0.1").unwrap();
        assert_eq!(g.len(), 81);
        assert_eq!(g[0], -5.0);
        assert_eq!(*g.last().unwrap(), 3.0);
        assert_eq!(g[53], 0.3);
        assert!(parse_grid("1:0:0.1").is_err());
        assert!(parse_grid("a:b").is_err());
    }

    #[test]
    fn flags_override_file_keys() {
        let mut file = Map::new();
        file.insert("beta".into(), Value::from(2));
        file.insert("n".into(), Value::from(64));
        let mut flags = Map::new();
        flags.insert("n".into(), Value::from(128));
        let p: SampleParams = resolve("sample", &file, flags).unwrap();
        assert_eq!((p.beta, p.n, p.replicas), (2, 128, 1));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut file = Map::new();
        file.insert("beta".into(), Value::from(2));
        file.insert("n".into(), Value::from(64));
        file.insert("replica".into(), Value::from(3));
        let err = resolve::<SampleParams>("sample", &file, Map::new()).unwrap_err();
        assert!(err.to_string().contains("replica"), "{err}");
    }
}

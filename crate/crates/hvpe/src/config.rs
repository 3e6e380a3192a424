//! Flat key-value configuration, command-line override resolution, and
//! run manifests with output checksums.
//!
//! Config format: one `key = value` pair per line (`#` starts a comment,
//! blank lines ignored). Keys match the CLI flags: `theta`, `m`, `T`,
//! `dt`, `seed`, `ensemble`, `scheme`, `record_stride`, `fast`,
//! `threads`, `out_dir`. Parsing is strict: an unknown key is an error,
//! not a warning.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dynamics::{Scheme, SimConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Unreadable {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config line {line} is not a 'key = value' pair: {text:?}")]
    Malformed { line: usize, text: String },
    #[error("unknown config key '{0}'")]
    UnknownKey(String),
    #[error("duplicate config key '{0}'")]
    DuplicateKey(String),
    #[error("config key '{key}': cannot parse {value:?} as {expected}")]
    BadValue {
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("{0}")]
    Invalid(String),
}

/// Per-run settings that sit outside [`SimConfig`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarnessConfig {
    pub out_dir: PathBuf,
    /// Worker-pool size. Accepted and recorded for forward compatibility;
    /// the current build executes on a single core.
    pub threads: usize,
}

/// Command-line values layered on top of the file; `None` means "not
/// given on the command line".
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub theta: Option<f64>,
    pub m: Option<u32>,
    pub t_final: Option<f64>,
    pub dt: Option<f64>,
    pub seed: Option<u64>,
    pub ensemble: Option<usize>,
    pub scheme: Option<Scheme>,
    pub record_stride: Option<usize>,
    pub fast: bool,
    pub threads: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

fn defaults() -> (SimConfig, HarnessConfig) {
    (
        SimConfig {
            theta: 2.5,
            m: 8,
            t_final: 1.0,
            dt: 1e-3,
            master_seed: 1,
            ensemble: 100,
            scheme: Scheme::ExpEuler,
            record_stride: 1,
            fast_nonlinearity: false,
        },
        HarnessConfig {
            out_dir: PathBuf::from("."),
            threads: 1,
        },
    )
}

fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut pairs = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Malformed {
            line: i + 1,
            text: raw.to_string(),
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if pairs.insert(key.clone(), value).is_some() {
            return Err(ConfigError::DuplicateKey(key));
        }
    }
    Ok(pairs)
}

fn parse_as<T: std::str::FromStr>(
    key: &str,
    value: &str,
    expected: &'static str,
) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        expected,
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
            expected: "boolean (true/false)",
        }),
    }
}

fn apply_pairs(
    pairs: &BTreeMap<String, String>,
    sim: &mut SimConfig,
    harness: &mut HarnessConfig,
) -> Result<(), ConfigError> {
    for (key, value) in pairs {
        match key.as_str() {
            "theta" => sim.theta = parse_as(key, value, "real")?,
            "m" => sim.m = parse_as(key, value, "positive integer")?,
            "T" => sim.t_final = parse_as(key, value, "real")?,
            "dt" => sim.dt = parse_as(key, value, "real")?,
            "seed" => sim.master_seed = parse_as(key, value, "64-bit integer")?,
            "ensemble" => sim.ensemble = parse_as(key, value, "positive integer")?,
            "scheme" => {
                sim.scheme = value.parse().map_err(|_| ConfigError::BadValue {
                    key: key.clone(),
                    value: value.clone(),
                    expected: "exp_euler or splitting",
                })?
            }
            "record_stride" => sim.record_stride = parse_as(key, value, "positive integer")?,
            "fast" => sim.fast_nonlinearity = parse_bool(key, value)?,
            "threads" => harness.threads = parse_as(key, value, "positive integer")?,
            "out_dir" => harness.out_dir = PathBuf::from(value),
            _ => return Err(ConfigError::UnknownKey(key.clone())),
        }
    }
    Ok(())
}

/// Resolves the effective configuration: defaults, then the config file
/// (if any), then command-line flags, then the `OUT_DIR` environment
/// fallback for the output directory. The result is validated.
pub fn resolve(
    config_path: Option<&Path>,
    overrides: &Overrides,
) -> Result<(SimConfig, HarnessConfig), ConfigError> {
    let (mut sim, mut harness) = defaults();
    if let Some(path) = config_path {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Unreadable {
            path: path.to_path_buf(),
            source,
        })?;
        let pairs = parse_pairs(&text)?;
        apply_pairs(&pairs, &mut sim, &mut harness)?;
    }
    if let Some(v) = overrides.theta {
        sim.theta = v;
    }
    if let Some(v) = overrides.m {
        sim.m = v;
    }
    if let Some(v) = overrides.t_final {
        sim.t_final = v;
    }
    if let Some(v) = overrides.dt {
        sim.dt = v;
    }
    if let Some(v) = overrides.seed {
        sim.master_seed = v;
    }
    if let Some(v) = overrides.ensemble {
        sim.ensemble = v;
    }
    if let Some(v) = overrides.scheme {
        sim.scheme = v;
    }
    if let Some(v) = overrides.record_stride {
        sim.record_stride = v;
    }
    if overrides.fast {
        sim.fast_nonlinearity = true;
    }
    if let Some(v) = overrides.threads {
        harness.threads = v;
    }
    if let Some(v) = &overrides.out_dir {
        harness.out_dir = v.clone();
    } else if config_path.is_none() || harness.out_dir == PathBuf::from(".") {
        if let Ok(env_dir) = std::env::var("OUT_DIR") {
            if !env_dir.is_empty() {
                harness.out_dir = PathBuf::from(env_dir);
            }
        }
    }
    sim.validate()
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    if harness.threads == 0 {
        return Err(ConfigError::Invalid("threads must be >= 1".into()));
    }
    Ok((sim, harness))
}

/// Full double precision (17 significant digits), locale-independent.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputRecord {
    pub path: String,
    pub sha256: String,
}

/// Reproducibility manifest written next to every run's outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub subcommand: String,
    pub config: SimConfig,
    pub harness: HarnessConfig,
    pub master_seed: u64,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub outputs: Vec<OutputRecord>,
}

fn unix_ms() -> u128 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn start(subcommand: &str, sim: &SimConfig, harness: &HarnessConfig) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: subcommand.to_string(),
            config: sim.clone(),
            harness: harness.clone(),
            master_seed: sim.master_seed,
            started_unix_ms: unix_ms(),
            finished_unix_ms: 0,
            outputs: Vec::new(),
        }
    }

    /// Checksums and records one produced file.
    pub fn add_output(&mut self, path: &Path) -> std::io::Result<()> {
        self.outputs.push(OutputRecord {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    /// Stamps the end time and writes `manifest.json` into `dir`.
    pub fn finish(mut self, dir: &Path) -> std::io::Result<PathBuf> {
        self.finished_unix_ms = unix_ms();
        let path = dir.join("manifest.json");
        let body = serde_json::to_string_pretty(&self).expect("manifest serializes");
        std::fs::write(&path, body)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_overrides() -> Overrides {
        Overrides::default()
    }

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        use std::io::Write;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn minimal_config_is_valid() {
        let f = write_temp("theta = 2.5\nm = 8\nT = 1.0\ndt = 0.001\nseed = 1\nensemble = 100\n");
        let (sim, _) = resolve(Some(f.path()), &no_overrides()).unwrap();
        assert_eq!(sim.theta, 2.5);
        assert_eq!(sim.m, 8);
        assert_eq!(sim.t_final, 1.0);
        assert_eq!(sim.ensemble, 100);
        assert_eq!(sim.scheme, Scheme::ExpEuler);
    }

    #[test]
    fn constraint_violations_are_named() {
        let f = write_temp("theta = 0\n");
        let err = resolve(Some(f.path()), &no_overrides()).unwrap_err();
        assert!(err.to_string().contains("theta"), "{err}");

        let f = write_temp("dt = -1\n");
        let err = resolve(Some(f.path()), &no_overrides()).unwrap_err();
        assert!(err.to_string().contains("dt"), "{err}");
    }

    #[test]
    fn unknown_key_rejected_with_name() {
        let f = write_temp("thetaa = 2.5\n");
        let err = resolve(Some(f.path()), &no_overrides()).unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey(ref k) if k == "thetaa"), "{err}");
    }

    #[test]
    fn duplicate_and_malformed_lines_rejected() {
        let f = write_temp("m = 8\nm = 16\n");
        assert!(matches!(
            resolve(Some(f.path()), &no_overrides()),
            Err(ConfigError::DuplicateKey(_))
        ));
        let f = write_temp("just a line\n");
        assert!(matches!(
            resolve(Some(f.path()), &no_overrides()),
            Err(ConfigError::Malformed { line: 1, .. })
        ));
    }

    #[test]
    fn comments_and_type_errors() {
        let f = write_temp("# full line comment\nm = 16  # trailing comment\n\n");
        let (sim, _) = resolve(Some(f.path()), &no_overrides()).unwrap();
        assert_eq!(sim.m, 16);

        let f = write_temp("m = eight\n");
        let err = resolve(Some(f.path()), &no_overrides()).unwrap_err();
        assert!(
            matches!(err, ConfigError::BadValue { ref key, .. } if key == "m"),
            "{err}"
        );
    }

    #[test]
    fn cli_overrides_file_values() {
        let f = write_temp("theta = 2.5\nm = 8\nfast = false\nscheme = splitting\n");
        let ov = Overrides {
            theta: Some(3.0),
            m: Some(16),
            fast: true,
            ..Overrides::default()
        };
        let (sim, _) = resolve(Some(f.path()), &ov).unwrap();
        assert_eq!(sim.theta, 3.0);
        assert_eq!(sim.m, 16);
        assert!(sim.fast_nonlinearity);
        assert_eq!(sim.scheme, Scheme::Splitting);
    }

    #[test]
    fn float_formatting_round_trips() {
        for v in [1.0, std::f64::consts::PI, 1.2345678901234567e-12, -0.1] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
    }

    #[test]
    fn checksums_are_stable() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn manifest_round_trips_through_json() {
        let (sim, harness) = defaults();
        let m = RunManifest::start("simulate", &sim, &harness);
        let body = serde_json::to_string(&m).unwrap();
        let back: RunManifest = serde_json::from_str(&body).unwrap();
        assert_eq!(back.config, sim);
        assert_eq!(back.subcommand, "simulate");
    }
}

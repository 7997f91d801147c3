//! Flat `key = value` configuration with command-line overrides.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::CliError;

/// Keys a config file may set. Everything else is rejected.
pub const KEYS: &[&str] = &[
    "alpha",
    "delta1",
    "nu",
    "grid",
    "level",
    "n",
    "n_max",
    "steps",
    "samples",
    "samples_per_bin",
    "seed",
    "out",
    "threads",
    "confidence",
    "threshold",
    "field",
    "g_field",
    "kappa",
    "pullback",
    "substeps",
    "periods",
    "pairs",
    "kick_sequences",
    "method",
    "budget",
    "segment_length",
    "z0",
];

/// Keys that only affect where or how fast a run happens, not what it computes.
const UNHASHED: &[&str] = &["out", "threads"];

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub suite: String,
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn new(suite: &str) -> Self {
        Config { suite: suite.to_string(), values: BTreeMap::new() }
    }

    pub fn from_file(suite: &str, path: &Path) -> Result<Self, CliError> {
        let ini = ini::Ini::load_from_file(path).map_err(|e| match e {
            ini::Error::Io(e) => CliError::Resource(format!("cannot read {}: {e}", path.display())),
            ini::Error::Parse(e) => CliError::Validation(format!("{}: {e}", path.display())),
        })?;
        let mut cfg = Config::new(suite);
        for (section, props) in ini.iter() {
            if let Some(name) = section {
                return Err(CliError::Validation(format!("sections are not supported, found [{name}]")));
            }
            for (k, v) in props.iter() {
                cfg.set(k, v)?;
            }
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(CliError::Validation(format!("unknown config key '{key}'")));
        }
        self.values.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T, CliError> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| CliError::Validation(format!("cannot parse {key} = '{v}'"))),
        }
    }

    pub fn list<T: FromStr>(&self, key: &str, default: &str) -> Result<Vec<T>, CliError> {
        let raw = self.raw(key).unwrap_or(default);
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| CliError::Validation(format!("cannot parse {key} entry '{s}'"))))
            .collect()
    }

    pub fn string(&self, key: &str, default: &str) -> String {
        self.raw(key).unwrap_or(default).to_string()
    }

    /// `log2` of the `grid` side, which must be a power of two.
    pub fn grid_level(&self, default: usize) -> Result<u32, CliError> {
        let m: usize = self.get("grid", default)?;
        if m < 2 || !m.is_power_of_two() {
            return Err(CliError::Validation(format!("grid must be a power of two >= 2, got {m}")));
        }
        Ok(m.trailing_zeros())
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.get("seed", 1)
    }

    /// Canonical text of everything that determines the results.
    pub fn canonical(&self) -> String {
        let mut s = format!("suite = {}\nversion = {}\n", self.suite, env!("CARGO_PKG_VERSION"));
        for (k, v) in &self.values {
            if !UNHASHED.contains(&k.as_str()) {
                s.push_str(&format!("{k} = {v}\n"));
            }
        }
        s
    }

    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.canonical().as_bytes()))
    }

    /// Seed of task `index` of this suite.
    pub fn task_seed(&self, index: u64) -> Result<u64, CliError> {
        let d = Sha256::digest(self.suite.as_bytes());
        let suite = u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"));
        Ok(hypermix::rng::derive_seed(&[suite, index, self.seed()?]))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

//! Flat `key = value` configuration with flag overrides.
//!
//! A config file is plain text: one assignment per line, `#` starts a
//! comment, blank lines are ignored. Every key has a command-line flag
//! twin; a value given on the command line wins over the file.

use crate::error::{CliError, Result};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Every key any subcommand understands. One config file can serve several
/// commands, so unknown-key detection uses the union.
pub const KNOWN_KEYS: &[&str] = &[
    "data",
    "test_data",
    "model",
    "method",
    "spatial_kernel",
    "temporal_kernel",
    "site_col",
    "x_col",
    "y_col",
    "time_col",
    "response_col",
    "covariate_cols",
    "n_spatial_bins",
    "max_spatial",
    "max_temporal_lag",
    "max_evals",
    "fgls_passes",
    "allow_nonconverged",
    "workers",
    "seed",
    "reps",
    "methods",
    "sim_config",
    "n_sites",
    "n_times",
    "n_test",
    "rep",
    "emit_data",
    "sizes",
    "missing",
    "n_matrices",
    "split_fraction",
    "out",
    "out_params",
    "out_coefficients",
    "out_empirical",
    "out_fitted",
    "sv_n_spatial",
    "sv_max_spatial",
    "sv_max_temporal_lag",
];

#[derive(Debug, Default, Clone)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    /// Reads a config file, or starts empty when no path is given.
    pub fn load(path: Option<&Path>) -> Result<Config> {
        let mut cfg = Config::default();
        let Some(path) = path else { return Ok(cfg) };
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Usage(format!("cannot read config {}: {e}", path.display()))
        })?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Usage(format!(
                    "{}:{}: expected `key = value`, got '{raw}'",
                    path.display(),
                    lineno + 1
                )));
            };
            let key = key.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(CliError::Usage(format!(
                    "{}:{}: unknown key '{key}'",
                    path.display(),
                    lineno + 1
                )));
            }
            cfg.values.insert(key, value.trim().to_string());
        }
        Ok(cfg)
    }

    /// Applies one command-line override; flags always win over the file.
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        debug_assert!(KNOWN_KEYS.contains(&key), "unregistered key {key}");
        self.values.insert(key.to_string(), value.into());
    }

    pub fn set_opt(&mut self, key: &str, value: Option<impl Into<String>>) {
        if let Some(v) = value {
            self.set(key, v);
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    pub fn string(&self, key: &str, default: &str) -> String {
        self.get(key).unwrap_or(default).to_string()
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(PathBuf::from)
    }

    pub fn require_path(&self, key: &str) -> Result<PathBuf> {
        self.path(key)
            .ok_or_else(|| CliError::Usage(format!("missing required key '{key}'")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                CliError::Usage(format!(
                    "key '{key}': cannot parse '{raw}' as {}",
                    std::any::type_name::<T>()
                ))
            }),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        Ok(self.parse::<usize>(key)?.unwrap_or(default))
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        Ok(self.parse::<u64>(key)?.unwrap_or(default))
    }

    pub fn f64_opt(&self, key: &str) -> Result<Option<f64>> {
        self.parse::<f64>(key)
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.parse::<f64>(key)?.unwrap_or(default))
    }

    pub fn usize_opt(&self, key: &str) -> Result<Option<usize>> {
        self.parse::<usize>(key)
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some(raw) => match raw.to_ascii_lowercase().as_str() {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => Err(CliError::Usage(format!(
                    "key '{key}': cannot parse '{raw}' as a boolean"
                ))),
            },
        }
    }

    /// Comma-separated list value, trimmed, empty entries dropped.
    pub fn list(&self, key: &str) -> Option<Vec<String>> {
        self.get(key).map(|raw| {
            raw.split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect()
        })
    }

    /// Worker count: flag or file key, then the STLMM_WORKERS environment
    /// variable, then 1.
    pub fn workers(&self) -> Result<usize> {
        if let Some(n) = self.parse::<usize>("workers")? {
            return Ok(n.max(1));
        }
        if let Ok(raw) = std::env::var("STLMM_WORKERS") {
            let n: usize = raw.parse().map_err(|_| {
                CliError::Usage(format!("STLMM_WORKERS: cannot parse '{raw}' as a count"))
            })?;
            return Ok(n.max(1));
        }
        Ok(1)
    }
}

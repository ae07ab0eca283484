//! Key-value configuration files and flag/file/default resolution.
//!
//! Precedence: command-line flag, then config-file entry, then the built-in
//! default. Every resolved value is recorded and echoed into the output
//! directory so a run can be reproduced from its artifacts.

use std::collections::HashMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::errors::{usage, CliError};

/// Every key any command accepts; file entries outside this list are
/// rejected so typos do not silently fall back to defaults. A command
/// ignores keys it does not use, which lets one command's echo serve as
/// another command's config.
pub const KNOWN_KEYS: &[&str] = &[
    "trace",
    "out",
    "config",
    "model",
    "deployment-id",
    "k",
    "ll",
    "lp",
    "lt",
    "tp",
    "tt",
    "stem-channels",
    "batch-size",
    "lr",
    "epochs",
    "patience",
    "seed",
    "mape-floor",
    "per-vm",
    "schema-percent",
    "interval",
    "train-days",
    "val-days",
    "unscaled",
    "window",
    "vms",
    "days",
    "rho",
    "noise",
    "deployments",
    "drift-segments",
];

#[derive(Debug)]
pub struct Resolver {
    file: HashMap<String, String>,
    echo: Vec<(String, String)>,
}

fn normalize_key(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('_', "-")
}

impl Resolver {
    /// Loads the optional config file. Lines are `key = value`; blank lines
    /// and lines starting with `#` are skipped.
    pub fn new(config_path: Option<&Path>) -> Result<Self, CliError> {
        let mut file = HashMap::new();
        if let Some(path) = config_path {
            let text = fs::read_to_string(path)
                .map_err(|e| usage(format!("config file {}: {e}", path.display())))?;
            for (number, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    usage(format!(
                        "config file {} line {}: expected `key = value`, got `{line}`",
                        path.display(),
                        number + 1
                    ))
                })?;
                let key = normalize_key(key);
                if !KNOWN_KEYS.contains(&key.as_str()) {
                    return Err(usage(format!(
                        "config file {} line {}: unknown key `{key}`",
                        path.display(),
                        number + 1
                    )));
                }
                file.insert(key, value.trim().to_string());
            }
        }
        Ok(Resolver {
            file,
            echo: Vec::new(),
        })
    }

    fn parse_file_value<T>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.file.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|e| usage(format!("config key `{key}`: cannot parse `{raw}`: {e}"))),
        }
    }

    /// Flag > file > default; the winner lands in the echo.
    pub fn resolve<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T: FromStr + ToString,
        T::Err: Display,
    {
        debug_assert!(KNOWN_KEYS.contains(&key), "unregistered key {key}");
        let value = match flag {
            Some(v) => v,
            None => self.parse_file_value(key)?.unwrap_or(default),
        };
        self.echo.push((key.to_string(), value.to_string()));
        Ok(value)
    }

    /// Like `resolve` but without a default; absent keys stay out of the echo.
    pub fn resolve_opt<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T: FromStr + ToString,
        T::Err: Display,
    {
        debug_assert!(KNOWN_KEYS.contains(&key), "unregistered key {key}");
        let value = match flag {
            Some(v) => Some(v),
            None => self.parse_file_value(key)?,
        };
        if let Some(v) = &value {
            self.echo.push((key.to_string(), v.to_string()));
        }
        Ok(value)
    }

    pub fn resolve_required<T>(&mut self, key: &str, flag: Option<T>) -> Result<T, CliError>
    where
        T: FromStr + ToString,
        T::Err: Display,
    {
        self.resolve_opt(key, flag)?
            .ok_or_else(|| usage(format!("--{key} is required (flag or config file)")))
    }

    /// Booleans: a set flag wins; otherwise the file value; otherwise false.
    pub fn resolve_flag(&mut self, key: &str, set: bool) -> Result<bool, CliError> {
        let value = if set {
            true
        } else {
            self.parse_file_value::<bool>(key)?.unwrap_or(false)
        };
        self.echo.push((key.to_string(), value.to_string()));
        Ok(value)
    }

    /// Forces a value into the echo, bypassing flag/file resolution; used
    /// when the effective value comes from model metadata.
    pub fn record(&mut self, key: &str, value: impl Display) {
        self.echo.push((key.to_string(), value.to_string()));
    }

    pub fn echo_text(&self, command: &str) -> String {
        let mut out = format!("# resolved configuration ({command})\n");
        for (key, value) in &self.echo {
            out.push_str(&format!("{key} = {value}\n"));
        }
        out
    }

    /// Writes `resolved.cfg` into the output directory.
    pub fn write_echo(&self, out_dir: &Path, command: &str) -> Result<PathBuf, CliError> {
        let path = out_dir.join("resolved.cfg");
        fs::write(&path, self.echo_text(command))
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}

//! Flat `key = value` config files.
//!
//! Every subcommand accepts `--config <path>`. The file supplies defaults
//! for that command's long flags (same spelling, no leading dashes), and a
//! flag given on the command line always wins. Blank lines and `#` comments
//! are ignored. Keys the command does not recognize are usage errors, as
//! are duplicate keys and lines without an `=`.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use gph_core::{Error, Result};

/// Parsed config file: keys not yet claimed by [`FileConfig::take`].
#[derive(Debug, Default)]
pub struct FileConfig {
    shown_path: String,
    entries: BTreeMap<String, String>,
}

impl FileConfig {
    /// Read and parse a config file; `None` yields an empty config.
    pub fn load(path: Option<&Path>) -> Result<FileConfig> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::usage(format!("cannot read config file {shown}: {e}")))?;
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::usage(format!(
                    "{shown}:{}: expected `key = value`, got `{line}`",
                    idx + 1
                )));
            };
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(Error::usage(format!("{shown}:{}: empty key", idx + 1)));
            }
            if entries.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(Error::usage(format!("{shown}:{}: duplicate key `{key}`", idx + 1)));
            }
        }
        Ok(FileConfig { shown_path: shown, entries })
    }

    /// Claim `key` and parse its value, or `None` if the file does not set
    /// it. A value that fails to parse is a usage error.
    pub fn take<T>(&mut self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(value) => value.parse::<T>().map(Some).map_err(|e| {
                Error::usage(format!(
                    "{}: bad value for `{key}`: `{value}` ({e})",
                    self.shown_path
                ))
            }),
        }
    }

    /// Error out if any keys were never claimed — they are not flags of the
    /// command being run.
    pub fn finish(self) -> Result<()> {
        if self.entries.is_empty() {
            return Ok(());
        }
        let keys: Vec<&str> = self.entries.keys().map(String::as_str).collect();
        Err(Error::usage(format!(
            "{}: unknown config key(s): {}",
            self.shown_path,
            keys.join(", ")
        )))
    }
}

/// Three-layer precedence for a flag with a built-in default:
/// command line beats config file beats `default`.
pub fn resolve<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Two-layer precedence for a flag with no built-in default.
pub fn resolve_opt<T>(flag: Option<T>, file: Option<T>) -> Option<T> {
    flag.or(file)
}

/// Required value that may come from the flag or the config file.
pub fn resolve_required<T>(flag: Option<T>, file: Option<T>, flag_name: &str) -> Result<T> {
    flag.or(file).ok_or_else(|| {
        Error::usage(format!("missing --{flag_name} (flag or config key `{flag_name}`)"))
    })
}

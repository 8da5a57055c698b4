//! `key = value` configuration files.
//!
//! Blank lines and `#` comments are ignored. A key may be qualified with a
//! command name (`train.epochs = 60`); the qualified form wins over the bare
//! key for that command. Command-line flags win over both.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{usage, CliResult, IoContext};

pub const COMMANDS: [&str; 5] = ["suite", "train", "run", "compare", "gradcheck"];

pub const KEYS: &[&str] = &[
    "seed",
    "jobs",
    "out",
    // suite
    "dim",
    "train",
    "test",
    // train / run
    "suite",
    "role",
    "epochs",
    "trajectories",
    "horizon",
    "pop_size",
    "bins",
    "window",
    "hidden",
    "alpha",
    "sigma",
    "f_min",
    "p",
    "baseline",
    "checkpoint_every",
    "record_timing",
    "weights",
    "algorithms",
    "runs",
    "max_evals",
    "error_tol",
    "deterministic",
    "traces",
    "param_trace",
    // compare
    "results",
    "reference",
    "significance",
    // gradcheck
    "input",
    "pop",
    "steps",
    "eps",
    "tolerance",
];

#[derive(Clone, Debug, Default)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).at(path)?;
        Self::parse(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut entries = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `key = value`", n + 1))?;
            let key = key.trim();
            let bare = match key.split_once('.') {
                Some((cmd, rest)) if COMMANDS.contains(&cmd) => rest,
                Some(_) => return Err(format!("line {}: unknown section in `{key}`", n + 1)),
                None => key,
            };
            if !KEYS.contains(&bare) {
                return Err(format!("line {}: unknown key `{key}`", n + 1));
            }
            if entries
                .insert(key.to_string(), value.trim().to_string())
                .is_some()
            {
                return Err(format!("line {}: duplicate key `{key}`", n + 1));
            }
        }
        Ok(ConfigFile { entries })
    }
}

/// Resolves settings for one command: flag, then `command.key`, then `key`,
/// then the built-in default.
pub struct Settings<'a> {
    command: &'static str,
    file: &'a ConfigFile,
}

impl<'a> Settings<'a> {
    pub fn new(command: &'static str, file: &'a ConfigFile) -> Self {
        Settings { command, file }
    }

    fn lookup(&self, key: &str) -> Option<&str> {
        self.file
            .entries
            .get(&format!("{}.{key}", self.command))
            .or_else(|| self.file.entries.get(key))
            .map(String::as_str)
    }

    pub fn opt<T>(&self, flag: Option<T>, key: &str) -> CliResult<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        debug_assert!(KEYS.contains(&key), "undeclared config key {key}");
        if flag.is_some() {
            return Ok(flag);
        }
        match self.lookup(key) {
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|e| usage(format!("config key `{key}` = `{raw}`: {e}"))),
            None => Ok(None),
        }
    }

    pub fn get<T>(&self, flag: Option<T>, key: &str, default: T) -> CliResult<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.opt(flag, key)?.unwrap_or(default))
    }

    /// Boolean switch: set by the flag, or by `true`/`false` in the file.
    pub fn switch(&self, flag: bool, key: &str) -> CliResult<bool> {
        if flag {
            return Ok(true);
        }
        self.get(None, key, false)
    }

    pub fn list(&self, flag: Vec<String>, key: &str) -> CliResult<Vec<String>> {
        if !flag.is_empty() {
            return Ok(flag);
        }
        Ok(self
            .lookup(key)
            .map(|raw| {
                raw.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            })
            .unwrap_or_default())
    }
}

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

/// `key = value` lines; `#` starts a comment. Keys are the long flag names
/// without the leading dashes.
#[derive(Debug, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key = value", i + 1))?;
            let key = k.trim().trim_start_matches("--").replace('_', "-");
            if values.insert(key.clone(), v.trim().to_string()).is_some() {
                bail!("line {}: '{key}' set twice", i + 1);
            }
        }
        Ok(ConfigFile { values })
    }

    pub fn from_optional(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }
}

/// Resolves settings as flag, then config file, then default, and keeps a
/// record of every resolved value.
pub struct Resolver {
    file: ConfigFile,
    resolved: BTreeMap<String, String>,
    /// Keys that identify files rather than settings; left out of the record.
    unrecorded: &'static [&'static str],
}

impl Resolver {
    pub fn new(file: ConfigFile, known: &[&str], unrecorded: &'static [&'static str]) -> Result<Self> {
        let unknown: Vec<&String> = file.values.keys().filter(|k| !known.contains(&k.as_str())).collect();
        if !unknown.is_empty() {
            bail!(
                "unknown config key(s): {}",
                unknown.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
            );
        }
        Ok(Resolver {
            file,
            resolved: BTreeMap::new(),
            unrecorded,
        })
    }

    fn record(&mut self, key: &str, value: String) {
        if !self.unrecorded.contains(&key) {
            self.resolved.insert(key.to_string(), value);
        }
    }

    pub fn get<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let value = match flag {
            Some(v) => Some(v),
            None => match self.file.values.get(key) {
                Some(raw) => Some(raw.parse::<T>().map_err(|e| anyhow!("config key '{key}': {e}"))?),
                None => None,
            },
        };
        if let Some(v) = &value {
            self.record(key, v.to_string());
        }
        Ok(value)
    }

    pub fn get_or<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = self.get(key, flag)?.unwrap_or(default);
        self.record(key, v.to_string());
        Ok(v)
    }

    /// A switch: on when the flag is given, otherwise from the file.
    pub fn switch(&mut self, key: &str, flag: bool) -> Result<bool> {
        let v = if flag {
            true
        } else {
            self.get::<bool>(key, None)?.unwrap_or(false)
        };
        self.record(key, v.to_string());
        Ok(v)
    }

    /// Canonical `key=value` text of everything resolved so far.
    pub fn canonical(&self) -> String {
        self.resolved.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

/// Comma-separated list of numbers.
pub fn parse_list<T>(raw: &str) -> Result<Vec<T>>
where
    T: FromStr,
    T::Err: Display,
{
    raw.split(',')
        .map(|s| {
            let s = s.trim();
            s.parse::<T>().map_err(|e| anyhow!("'{s}': {e}"))
        })
        .collect()
}

/// A list of length 1 is repeated `p` times.
pub fn broadcast<T: Clone>(what: &str, values: Vec<T>, p: usize) -> Result<Vec<T>> {
    match values.len() {
        1 => Ok(vec![values[0].clone(); p]),
        l if l == p => Ok(values),
        l => bail!("{what}: got {l} values for {p} coefficients"),
    }
}

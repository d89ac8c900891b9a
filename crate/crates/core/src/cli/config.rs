use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::CliError;

/// `key = value` settings from an optional file, overridden by flags, and the
/// record of what every setting resolved to.
#[derive(Debug, Default)]
pub struct Settings {
    file: BTreeMap<String, String>,
    pub resolved: BTreeMap<String, String>,
}

impl Settings {
    pub fn parse(text: &str, allowed: &[&str]) -> Result<Self, CliError> {
        let mut file = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected `key = value`", i + 1)))?;
            let key = key.trim().replace('_', "-");
            if !allowed.contains(&key.as_str()) {
                return Err(CliError::Usage(format!("config line {}: unknown key {key:?}", i + 1)));
            }
            file.insert(key, value.trim().to_string());
        }
        Ok(Settings {
            file,
            resolved: BTreeMap::new(),
        })
    }

    pub fn load(path: Option<&Path>, allowed: &[&str]) -> Result<Self, CliError> {
        match path {
            None => Ok(Settings::default()),
            Some(p) => {
                let text =
                    fs::read_to_string(p).map_err(|e| CliError::Usage(format!("config file {}: {e}", p.display())))?;
                Settings::parse(&text, allowed)
            }
        }
    }

    /// The flag if given, else the file entry, else `default`.
    pub fn get<T>(&mut self, key: &str, flag: Option<T>, default: Option<T>) -> Result<Option<T>, CliError>
    where
        T: FromStr + Display,
    {
        let value = match flag {
            Some(v) => Some(v),
            None => match self.file.get(key) {
                Some(text) => Some(
                    text.parse()
                        .map_err(|_| CliError::Usage(format!("config key {key}: bad value {text:?}")))?,
                ),
                None => default,
            },
        };
        if let Some(v) = &value {
            self.resolved.insert(key.to_string(), v.to_string());
        }
        Ok(value)
    }

    pub fn require<T>(&mut self, key: &str, flag: Option<T>) -> Result<T, CliError>
    where
        T: FromStr + Display,
    {
        self.get(key, flag, None)?
            .ok_or_else(|| CliError::Usage(format!("--{key} is required (flag or config file)")))
    }

    /// A switch: on if the flag is present or the file says `true`.
    pub fn switch(&mut self, key: &str, flag: bool) -> Result<bool, CliError> {
        let on = self.get(key, flag.then_some(true), Some(false))?.unwrap_or(false);
        Ok(on)
    }
}

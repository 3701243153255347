//! Line-oriented `key = value` files with `#` comments. Keys may repeat.

use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected 'key = value'")]
    Syntax { line: usize },
    #[error("key '{key}': cannot parse '{value}': {reason}")]
    Value {
        key: String,
        value: String,
        reason: String,
    },
    #[error("unknown key '{0}'")]
    UnknownKey(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KeyValueConfig {
    entries: Vec<(String, String)>,
}

impl KeyValueConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax { line: i + 1 })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(ConfigError::Syntax { line: i + 1 });
            }
            entries.push((key.to_owned(), value.trim().to_owned()));
        }
        Ok(KeyValueConfig { entries })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.push((key.into(), value.into()));
    }

    /// Last value given for `key`.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn get_all(&self, key: &str) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .collect()
    }

    pub fn get_parsed<T>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse().map_err(|e: T::Err| ConfigError::Value {
                    key: key.to_owned(),
                    value: v.to_owned(),
                    reason: e.to_string(),
                })
            })
            .transpose()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    /// Fails on the first key not in `allowed`.
    pub fn ensure_known(&self, allowed: &[&str]) -> Result<(), ConfigError> {
        match self.keys().find(|k| !allowed.contains(k)) {
            Some(k) => Err(ConfigError::UnknownKey(k.to_owned())),
            None => Ok(()),
        }
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }
}

pub fn parse_bool(value: &str) -> Option<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Some(true),
        "false" | "no" | "off" | "0" => Some(false),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_repeats_and_last_wins() {
        let cfg = KeyValueConfig::parse(
            "# experiment\nmember = hog\nmember = pixel  # builtin\n\npca_k = 200\npca_k=300\n",
        )
        .unwrap();
        assert_eq!(cfg.get_all("member"), vec!["hog", "pixel"]);
        assert_eq!(cfg.get_parsed::<usize>("pca_k").unwrap(), Some(300));
        assert_eq!(cfg.get("missing"), None);
    }

    #[test]
    fn syntax_and_value_errors() {
        assert!(matches!(
            KeyValueConfig::parse("a = 1\nnot a pair\n"),
            Err(ConfigError::Syntax { line: 2 })
        ));
        let cfg = KeyValueConfig::parse("k = abc").unwrap();
        assert!(matches!(
            cfg.get_parsed::<u32>("k"),
            Err(ConfigError::Value { .. })
        ));
        assert!(matches!(
            cfg.ensure_known(&["x"]),
            Err(ConfigError::UnknownKey(_))
        ));
    }

    #[test]
    fn bools() {
        assert_eq!(parse_bool("On"), Some(true));
        assert_eq!(parse_bool("0"), Some(false));
        assert_eq!(parse_bool("maybe"), None);
    }
}

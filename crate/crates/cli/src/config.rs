//! `key = value` run configuration, merged under explicit flags.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

/// Every key a config file may set. Anything else is rejected so a typo
/// cannot silently fall back to a default.
pub const KNOWN_KEYS: &[&str] = &[
    "seed",
    "ratio",
    "stratified",
    "modal_lexicon",
    "conllu",
    "embeddings",
    "balance",
    "smote_k",
    "channels",
    "ngram_min",
    "ngram_max",
    "top_k",
    "weighting",
    "keep_stopwords",
    "lowercase",
    "c",
    "epochs",
    "loss",
    "lr",
    "beta1",
    "beta2",
    "eps",
    "weight_decay",
    "batch_size",
    "kernel_sizes",
    "filters",
    "dropout",
    "max_len",
    "crf_l2",
    "crf_lr",
    "crf_lr_decay",
    "crf_epochs",
    "crf_batch_size",
    "threshold",
];

/// Raised for missing required settings; mapped to the usage exit code.
#[derive(Debug)]
pub struct UsageError(pub String);

impl Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// File values plus the record of every value a command actually used.
#[derive(Debug, Default)]
pub struct RunConfig {
    file: BTreeMap<String, String>,
    resolved: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn parse(input: &str) -> Result<Self> {
        let mut file = BTreeMap::new();
        for (i, raw) in input.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("config line {}: expected `key = value`", i + 1))?;
            let key = key.trim().replace('-', "_");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                bail!("config line {}: unknown key {key:?}", i + 1);
            }
            if file.insert(key.clone(), value.trim().to_string()).is_some() {
                bail!("config line {}: key {key:?} set twice", i + 1);
            }
        }
        Ok(Self {
            file,
            resolved: BTreeMap::new(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    fn file_value<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        debug_assert!(KNOWN_KEYS.contains(&key), "unregistered key {key}");
        self.file
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| anyhow!("config key {key}: cannot parse {v:?}: {e}"))
            })
            .transpose()
    }

    fn record(&mut self, key: &str, value: String) {
        self.resolved.insert(key.to_string(), value);
    }

    /// Flag, then config file, then `default`.
    pub fn get<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => v,
            None => self.file_value(key)?.unwrap_or(default),
        };
        self.record(key, v.to_string());
        Ok(v)
    }

    /// Like [`get`](Self::get) but for comma-separated lists.
    pub fn get_list<T>(
        &mut self,
        key: &str,
        flag: Option<Vec<T>>,
        default: Vec<T>,
    ) -> Result<Vec<T>>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => v,
            None => match self.file.get(key) {
                Some(raw) => raw
                    .split(',')
                    .map(|s| {
                        s.trim()
                            .parse::<T>()
                            .map_err(|e| anyhow!("config key {key}: cannot parse {s:?}: {e}"))
                    })
                    .collect::<Result<_>>()?,
                None => default,
            },
        };
        let joined: Vec<String> = v.iter().map(|x| x.to_string()).collect();
        self.record(key, joined.join(","));
        Ok(v)
    }

    pub fn optional_path(&mut self, key: &str, flag: Option<PathBuf>) -> Result<Option<PathBuf>> {
        let v = match flag {
            Some(p) => Some(p),
            None => self.file_value::<PathBuf>(key)?,
        };
        if let Some(p) = &v {
            self.record(key, p.display().to_string());
        }
        Ok(v)
    }

    pub fn required_path(&mut self, key: &str, flag: Option<PathBuf>) -> Result<PathBuf> {
        self.optional_path(key, flag)?.ok_or_else(|| {
            UsageError(format!(
                "--{} is required (or set `{key}` in the config file)",
                key.replace('_', "-")
            ))
            .into()
        })
    }

    /// Values used so far, in key order; embedded in artifacts.
    pub fn resolved(&self) -> &BTreeMap<String, String> {
        &self.resolved
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_beats_file_beats_default() {
        let mut cfg = RunConfig::parse("c = 2.5\n# comment\nepochs = 7  # trailing\n").unwrap();
        assert_eq!(cfg.get("c", Some(9.0), 1.0).unwrap(), 9.0);
        assert_eq!(cfg.get("epochs", None, 20usize).unwrap(), 7);
        assert_eq!(cfg.get("seed", None, 0u64).unwrap(), 0);
        assert_eq!(cfg.resolved().get("c").map(String::as_str), Some("9"));
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(RunConfig::parse("epohcs = 3").is_err());
        assert!(RunConfig::parse("just words").is_err());
        assert!(RunConfig::parse("c = 1\nc = 2").is_err());
        let mut cfg = RunConfig::parse("c = many").unwrap();
        assert!(cfg.get("c", None, 1.0f64).is_err());
    }

    #[test]
    fn lists_and_dashes() {
        let mut cfg = RunConfig::parse("kernel-sizes = 2, 3").unwrap();
        assert_eq!(
            cfg.get_list("kernel_sizes", None, vec![3usize]).unwrap(),
            vec![2, 3]
        );
    }

    #[test]
    fn missing_required_path_is_usage_error() {
        let mut cfg = RunConfig::default();
        let err = cfg.required_path("embeddings", None).unwrap_err();
        assert!(err.downcast_ref::<UsageError>().is_some());
    }
}

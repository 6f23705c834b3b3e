//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Relative paths are
//! resolved against the directory holding the configuration file. Unknown
//! keys are rejected so that typos surface as configuration errors.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{CliError, Result};

/// Every key a configuration file may set. Synthetic task keys
/// (`synth.task.<name>.<field>`) are validated separately.
pub const KNOWN_KEYS: &[&str] = &[
    "notes",
    "labels",
    "concepts",
    "out",
    "seed",
    "feature_set",
    "representation",
    "task",
    "positive_class",
    "min_frequency",
    "placeholders",
    "exclude_categories",
    "sdae.preset",
    "sdae.layers",
    "sdae.corruption",
    "sdae.epochs",
    "sdae.batch_size",
    "sdae.learning_rate",
    "doc2vec.dim",
    "doc2vec.window",
    "doc2vec.min_count",
    "doc2vec.negatives",
    "doc2vec.epochs",
    "doc2vec.start_alpha",
    "doc2vec.end_alpha",
    "doc2vec.infer_epochs",
    "classifier.preset",
    "classifier.hidden_layers",
    "classifier.width",
    "classifier.activation",
    "classifier.max_epochs",
    "classifier.patience",
    "classifier.batch_size",
    "classifier.learning_rate",
    "search.samples",
    "search.min_layers",
    "search.max_layers",
    "search.min_width",
    "search.max_width",
    "search.width_step",
    "search.activations",
    "interpret.instance",
    "interpret.class",
    "interpret.output",
    "interpret.split",
    "project.pca_dims",
    "project.perplexity",
    "project.iterations",
    "project.color_task",
    "project.split",
    "significance.system_a",
    "significance.system_b",
    "significance.iterations",
    "significance.alpha",
    "significance.hypotheses",
    "synth.n_patients",
    "synth.vocab_size",
    "synth.zipf_exponent",
    "synth.notes_per_patient",
    "synth.tokens_per_note",
    "synth.numeric_rate",
    "synth.discharge_rate",
    "synth.concepts",
    "synth.tasks",
];

const TASK_FIELDS: &[&str] = &["rate", "markers", "injection", "noise", "per_document", "copies"];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
    base: PathBuf,
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Config::parse(&text, base)
    }

    pub fn parse(text: &str, base: PathBuf) -> Result<Config> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("line {}: expected key = value", i + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            check_key(key).map_err(|m| CliError::config(format!("line {}: {m}", i + 1)))?;
            if values.insert(key.to_owned(), value.to_owned()).is_some() {
                return Err(CliError::config(format!("line {}: duplicate key {key}", i + 1)));
            }
        }
        Ok(Config { values, base })
    }

    /// Sets or replaces a value (used for command-line overrides).
    pub fn set(&mut self, key: &str, value: impl Display) -> Result<()> {
        check_key(key).map_err(CliError::config)?;
        self.values.insert(key.to_owned(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| CliError::config(format!("missing required key {key}")))
    }

    pub fn parse_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| CliError::config(format!("{key} = {v:?}: {e}")))
            })
            .transpose()
    }

    pub fn parse_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        Ok(self.parse_opt(key)?.unwrap_or(default))
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: Display,
    {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse::<T>()
                            .map_err(|e| CliError::config(format!("{key}: {s:?}: {e}")))
                    })
                    .collect()
            })
            .transpose()
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(|v| self.base.join(v))
    }

    /// A path that must be configured and must exist.
    pub fn existing_path(&self, key: &str) -> Result<PathBuf> {
        let p = self.path(key).ok_or_else(|| CliError::config(format!("missing required key {key}")))?;
        if !p.exists() {
            return Err(CliError::config(format!("{key}: {} does not exist", p.display())));
        }
        Ok(p)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// `(field, value)` pairs set for one synthetic task.
    pub fn task_keys(&self, name: &str) -> impl Iterator<Item = (&str, &str)> {
        let prefix = format!("synth.task.{name}.");
        self.values
            .iter()
            .filter_map(move |(k, v)| k.strip_prefix(&prefix).map(|f| (f, v.as_str())))
    }
}

fn check_key(key: &str) -> std::result::Result<(), String> {
    if KNOWN_KEYS.contains(&key) {
        return Ok(());
    }
    if let Some(rest) = key.strip_prefix("synth.task.") {
        if let Some((name, field)) = rest.rsplit_once('.') {
            if !name.is_empty() && TASK_FIELDS.contains(&field) {
                return Ok(());
            }
        }
    }
    Err(format!("unknown key {key}"))
}

//! Per-command provenance records.
//!
//! A manifest lists the command, tool versions, the resolved settings and
//! the SHA-256 of every input and output file. It carries no timestamps, so
//! reruns with the same configuration produce identical manifests.

use std::fmt::{Display, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub command: String,
    pub settings: Vec<(String, String)>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Manifest {
            command: command.to_owned(),
            ..Manifest::default()
        }
    }

    /// Records a resolved setting; a later value for the same key replaces
    /// the earlier one.
    pub fn setting(&mut self, key: &str, value: impl Display) {
        let value = value.to_string();
        match self.settings.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.settings.push((key.to_owned(), value)),
        }
    }

    pub fn settings_from(&mut self, pairs: &[(String, String)]) {
        for (k, v) in pairs {
            self.setting(k, v);
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.settings.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Text form. Paths under `root` are shown relative to it.
    pub fn render(&self, root: &Path) -> Result<String> {
        let show = |p: &Path| p.strip_prefix(root).unwrap_or(p).display().to_string();
        let mut out = String::new();
        let _ = writeln!(out, "command\t{}", self.command);
        let _ = writeln!(out, "version\trepvec {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(out, "version\trepvec-core {}", repvec_core::VERSION);
        let mut settings = self.settings.clone();
        settings.sort();
        for (k, v) in &settings {
            let _ = writeln!(out, "setting\t{k}\t{v}");
        }
        for p in &self.inputs {
            let _ = writeln!(out, "input\t{}\t{}", show(p), sha256_file(p)?);
        }
        for p in &self.outputs {
            let _ = writeln!(out, "output\t{}\t{}", show(p), sha256_file(p)?);
        }
        Ok(out)
    }

    /// Writes `<root>/manifests/<command>.tsv` and returns its path.
    pub fn write(&self, root: &Path) -> Result<PathBuf> {
        let dir = root.join("manifests");
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        let path = dir.join(format!("{}.tsv", self.command));
        fs::write(&path, self.render(root)?).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

/// Settings recorded in a manifest file.
pub fn read_settings(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(text
        .lines()
        .filter_map(|l| l.strip_prefix("setting\t"))
        .filter_map(|l| l.split_once('\t'))
        .map(|(k, v)| (k.to_owned(), v.to_owned()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("abc.txt");
        fs::write(&p, "abc").unwrap();
        assert_eq!(
            sha256_file(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn render_is_sorted_and_relative() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.tsv");
        fs::write(&p, "").unwrap();
        let mut m = Manifest::new("split");
        m.setting("seed", 3);
        m.setting("feature_set", "bow");
        m.setting("seed", 4);
        m.output(&p);
        let text = m.render(dir.path()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "command\tsplit");
        assert_eq!(lines[3], "setting\tfeature_set\tbow");
        assert_eq!(lines[4], "setting\tseed\t4");
        assert!(lines[5].starts_with("output\tx.tsv\te3b0c442"));
        let path = m.write(dir.path()).unwrap();
        assert_eq!(read_settings(&path).unwrap().len(), 2);
    }
}

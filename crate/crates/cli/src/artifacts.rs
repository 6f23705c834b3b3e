//! Artifact layout under the output directory and the small file formats
//! that are specific to the command-line pipeline.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use repvec_core::corpus::{DatasetSplit, Partition, TfIdf, Vocabulary};

use crate::error::{CliError, Result};

#[derive(Debug, Clone)]
pub struct Workspace {
    pub root: PathBuf,
}

impl Workspace {
    pub fn new(root: PathBuf) -> Self {
        Workspace { root }
    }

    pub fn documents(&self) -> PathBuf {
        self.root.join("documents.tsv")
    }

    pub fn split(&self) -> PathBuf {
        self.root.join("split.tsv")
    }

    pub fn features(&self, feature_set: &str, part: Partition) -> PathBuf {
        self.root.join("features").join(feature_set).join(format!("{}.tsv", part.as_str()))
    }

    pub fn vocabulary(&self, feature_set: &str) -> PathBuf {
        self.root.join("features").join(feature_set).join("vocabulary.tsv")
    }

    pub fn sdae(&self, feature_set: &str) -> PathBuf {
        self.root.join("models").join(format!("sdae-{feature_set}.bin"))
    }

    pub fn sdae_loss(&self, feature_set: &str) -> PathBuf {
        self.root.join("models").join(format!("sdae-{feature_set}.loss.tsv"))
    }

    pub fn doc2vec(&self) -> PathBuf {
        self.root.join("models").join("doc2vec.bin")
    }

    pub fn classifier(&self, task: &str, tag: &str) -> PathBuf {
        self.root.join("models").join(format!("classifier-{task}-{tag}.bin"))
    }

    pub fn search(&self, task: &str, tag: &str) -> PathBuf {
        self.root.join("search").join(format!("{task}-{tag}.tsv"))
    }

    pub fn predictions(&self, task: &str, tag: &str) -> PathBuf {
        self.root.join("predictions").join(format!("{task}-{tag}.tsv"))
    }

    pub fn metrics(&self, task: &str, tag: &str) -> PathBuf {
        self.root.join("metrics").join(format!("{task}-{tag}.tsv"))
    }

    pub fn reconstruction(&self, feature_set: &str) -> PathBuf {
        self.root.join("interpret").join(format!("reconstruction-{feature_set}.tsv"))
    }

    pub fn correlation(&self, feature_set: &str) -> PathBuf {
        self.root.join("interpret").join(format!("correlation-{feature_set}.tsv"))
    }

    pub fn sensitivity(&self, task: &str, tag: &str) -> PathBuf {
        self.root.join("interpret").join(format!("sensitivity-{task}-{tag}.tsv"))
    }

    pub fn chi_square(&self, task: &str, feature_set: &str) -> PathBuf {
        self.root.join("interpret").join(format!("chi2-{task}-{feature_set}.tsv"))
    }

    pub fn projection(&self, tag: &str) -> PathBuf {
        self.root.join("projection").join(format!("{tag}.tsv"))
    }

    pub fn significance(&self, task: &str, a: &str, b: &str) -> PathBuf {
        self.root.join("significance").join(format!("{task}-{a}-vs-{b}.tsv"))
    }

    pub fn agreement(&self, task: &str, a: &str, b: &str) -> PathBuf {
        self.root.join("significance").join(format!("{task}-{a}-vs-{b}.kappa.tsv"))
    }
}

/// Checks that an upstream artifact exists.
pub fn require(path: PathBuf, producer: &'static str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::MissingArtifact { path, producer })
    }
}

pub fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> CliError {
    CliError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// `patient_id \t partition`, training patients first.
pub fn write_split(path: &Path, split: &DatasetSplit) -> Result<()> {
    let mut out = String::from("patient_id\tpartition\n");
    for part in [Partition::Train, Partition::Validation, Partition::Test] {
        for id in split.ids(part) {
            let _ = writeln!(out, "{id}\t{}", part.as_str());
        }
    }
    write_text(path, &out)
}

pub fn read_split(path: &Path) -> Result<DatasetSplit> {
    let mut split = DatasetSplit {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for (i, line) in read_text(path)?.lines().enumerate().skip(1) {
        let (id, part) = line
            .split_once('\t')
            .ok_or_else(|| parse_error(path, i + 1, "expected patient_id \\t partition"))?;
        let part = Partition::parse(part).ok_or_else(|| parse_error(path, i + 1, format!("unknown partition {part:?}")))?;
        match part {
            Partition::Train => split.train.push(id.to_owned()),
            Partition::Validation => split.validation.push(id.to_owned()),
            Partition::Test => split.test.push(id.to_owned()),
        }
    }
    Ok(split)
}

/// `term \t frequency \t idf` in index order, after a comment line with the
/// minimum frequency and the number of training documents.
pub fn write_vocabulary(path: &Path, vocab: &Vocabulary, tfidf: &TfIdf) -> Result<()> {
    let mut out = format!("# min_frequency {} n_docs {}\nterm\tfrequency\tidf\n", vocab.min_frequency(), tfidf.n_docs());
    for (i, term) in vocab.terms().iter().enumerate() {
        let _ = writeln!(out, "{term}\t{}\t{:?}", vocab.frequency(i), tfidf.idf()[i]);
    }
    write_text(path, &out)
}

pub fn read_vocabulary(path: &Path) -> Result<(Vocabulary, TfIdf)> {
    let text = read_text(path)?;
    let mut lines = text.lines();
    let head: Vec<&str> = lines.next().unwrap_or("").split_whitespace().collect();
    let (min_frequency, n_docs) = match head.as_slice() {
        ["#", "min_frequency", m, "n_docs", n] => (
            m.parse::<u64>().map_err(|e| parse_error(path, 1, e.to_string()))?,
            n.parse::<usize>().map_err(|e| parse_error(path, 1, e.to_string()))?,
        ),
        _ => return Err(parse_error(path, 1, "missing vocabulary header")),
    };
    let (mut terms, mut freqs, mut idf) = (Vec::new(), Vec::new(), Vec::new());
    for (i, line) in lines.enumerate().skip(1) {
        let f: Vec<&str> = line.split('\t').collect();
        let bad = || parse_error(path, i + 2, "expected term \\t frequency \\t idf");
        if f.len() != 3 {
            return Err(bad());
        }
        terms.push(f[0].to_owned());
        freqs.push(f[1].parse().map_err(|_| bad())?);
        idf.push(f[2].parse().map_err(|_| bad())?);
    }
    let vocab = Vocabulary::from_parts(terms, freqs, min_frequency);
    let tfidf = TfIdf::from_parts(idf, n_docs, vocab.fingerprint());
    Ok((vocab, tfidf))
}

/// Per-patient classifier output on one partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub classes: Vec<String>,
    pub patient_ids: Vec<String>,
    pub labels: Vec<String>,
    pub predicted: Vec<String>,
    pub probabilities: Vec<Vec<f64>>,
}

impl Predictions {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::from("patient_id\tlabel\tpredicted");
        for c in &self.classes {
            let _ = write!(out, "\tp_{c}");
        }
        out.push('\n');
        for i in 0..self.patient_ids.len() {
            let _ = write!(out, "{}\t{}\t{}", self.patient_ids[i], self.labels[i], self.predicted[i]);
            for p in &self.probabilities[i] {
                let _ = write!(out, "\t{p:?}");
            }
            out.push('\n');
        }
        write_text(path, &out)
    }

    pub fn read(path: &Path) -> Result<Predictions> {
        let text = read_text(path)?;
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap_or("").split('\t').collect();
        if header.len() < 4 || header[..3] != ["patient_id", "label", "predicted"] {
            return Err(parse_error(path, 1, "not a predictions file"));
        }
        let classes: Vec<String> = header[3..]
            .iter()
            .map(|h| h.strip_prefix("p_").map(str::to_owned).ok_or_else(|| parse_error(path, 1, "bad class column")))
            .collect::<Result<_>>()?;
        let mut p = Predictions {
            classes,
            patient_ids: Vec::new(),
            labels: Vec::new(),
            predicted: Vec::new(),
            probabilities: Vec::new(),
        };
        for (i, line) in lines.enumerate() {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != header.len() {
                return Err(parse_error(path, i + 2, "wrong number of fields"));
            }
            p.patient_ids.push(f[0].to_owned());
            p.labels.push(f[1].to_owned());
            p.predicted.push(f[2].to_owned());
            p.probabilities.push(
                f[3..]
                    .iter()
                    .map(|v| v.parse().map_err(|_| parse_error(path, i + 2, format!("bad probability {v:?}"))))
                    .collect::<Result<_>>()?,
            );
        }
        Ok(p)
    }
}

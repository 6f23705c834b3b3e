//! Synthetic note corpora with planted task signals.
//!
//! Filler tokens follow a Zipfian unigram distribution over pseudo-words.
//! Each task labels a fixed fraction of patients positive and injects its
//! marker tokens into positive (and, optionally, some negative) patients.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use super::concepts::{Assertion, ConceptAnnotation};
use super::normalize::{normalize_tokens, MEAS_VAL, NUMERIC_VAL, TIME_VAL};
use super::tsv::{write_concepts, write_labels, write_notes, LabelTable, NoteRecord};
use crate::error::{Error, Result};
use crate::rng::{self, SeededRng};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub name: String,
    /// Fraction of patients labelled positive (`round(rate · n)` exactly).
    pub positive_rate: f64,
    pub markers: Vec<String>,
    /// Probability that a positive patient receives markers.
    pub injection_probability: f64,
    /// Probability that a negative patient receives markers.
    pub noise_probability: f64,
    /// Distinct markers drawn per receiving patient; 0 means all of them.
    pub markers_per_document: usize,
    /// Occurrences of each drawn marker.
    pub marker_copies: usize,
}

impl SyntheticTask {
    /// A task whose positives always carry every marker once.
    pub fn lexical(name: &str, positive_rate: f64, markers: &[&str]) -> Self {
        SyntheticTask {
            name: name.to_owned(),
            positive_rate,
            markers: markers.iter().map(|m| (*m).to_owned()).collect(),
            injection_probability: 1.0,
            noise_probability: 0.0,
            markers_per_document: 0,
            marker_copies: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_patients: usize,
    pub vocab_size: usize,
    pub zipf_exponent: f64,
    pub notes_per_patient: (usize, usize),
    pub tokens_per_note: (usize, usize),
    /// Per-token probability of emitting a number, time or measurement.
    pub numeric_rate: f64,
    /// Probability that a patient also gets a `discharge_report` note.
    pub discharge_rate: f64,
    pub tasks: Vec<SyntheticTask>,
    /// Also emit concept annotations derived from the filler tokens.
    pub concepts: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_patients: 200,
            vocab_size: 1000,
            zipf_exponent: 1.0,
            notes_per_patient: (1, 5),
            tokens_per_note: (20, 60),
            numeric_rate: 0.02,
            discharge_rate: 0.2,
            tasks: Vec::new(),
            concepts: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub notes: Vec<NoteRecord>,
    pub labels: LabelTable,
    pub concepts: Vec<ConceptAnnotation>,
    /// Filler vocabulary, most frequent first.
    pub filler_terms: Vec<String>,
}

impl SyntheticCorpus {
    /// Writes `notes.tsv`, `labels.tsv` and, when present, `concepts.tsv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_notes(&dir.join("notes.tsv"), &self.notes)?;
        write_labels(&dir.join("labels.tsv"), &self.labels)?;
        if !self.concepts.is_empty() {
            write_concepts(&dir.join("concepts.tsv"), &self.concepts)?;
        }
        Ok(())
    }
}

const CONSONANTS: &[u8] = b"bdfghjklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

/// Pronounceable pseudo-word for a rank: alternating consonant/vowel
/// syllables, at least two, so no word starts with a vowel or contains a
/// digit.
pub(crate) fn filler_word(rank: usize) -> String {
    let base = CONSONANTS.len() * VOWELS.len();
    let mut digits = Vec::new();
    let mut r = rank;
    loop {
        digits.push(r % base);
        r /= base;
        if r == 0 {
            break;
        }
    }
    while digits.len() < 2 {
        digits.push(0);
    }
    digits
        .iter()
        .rev()
        .flat_map(|&d| {
            [
                CONSONANTS[d / VOWELS.len()] as char,
                VOWELS[d % VOWELS.len()] as char,
            ]
        })
        .collect()
}

fn validate(config: &SynthConfig) -> Result<()> {
    if config.n_patients == 0 || config.vocab_size == 0 {
        return Err(Error::invalid("synthetic corpus needs patients and a vocabulary"));
    }
    if !(config.zipf_exponent >= 0.0) {
        return Err(Error::invalid("zipf exponent must be non-negative"));
    }
    let (nmin, nmax) = config.notes_per_patient;
    let (tmin, tmax) = config.tokens_per_note;
    if nmin == 0 || nmin > nmax || tmin == 0 || tmin > tmax {
        return Err(Error::invalid("note and token ranges must be non-empty and positive"));
    }
    for p in [config.numeric_rate, config.discharge_rate] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid("rates must lie in [0, 1]"));
        }
    }
    for task in &config.tasks {
        for p in [task.positive_rate, task.injection_probability, task.noise_probability] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("task {}: probabilities must lie in [0, 1]", task.name)));
            }
        }
        for m in &task.markers {
            if [NUMERIC_VAL, TIME_VAL, MEAS_VAL].contains(&m.as_str()) {
                return Err(Error::invalid(format!(
                    "task {}: marker {m:?} collides with a placeholder token",
                    task.name
                )));
            }
            if normalize_tokens(m) != [m.clone()] {
                return Err(Error::invalid(format!(
                    "task {}: marker {m:?} is not stable under normalization",
                    task.name
                )));
            }
        }
    }
    Ok(())
}

fn numeric_token(rng: &mut SeededRng) -> String {
    match rng.random_range(0..5) {
        0 => rng.random_range(0..500).to_string(),
        1 => format!("{}.{}", rng.random_range(0..50), rng.random_range(0..10)),
        2 => format!("{}:{:02}{}", rng.random_range(1..13), rng.random_range(0..60), ["am", "pm", ""][rng.random_range(0..3)]),
        3 => format!("{}/{}", rng.random_range(90..180), rng.random_range(40..110)),
        _ => format!("{}mg", rng.random_range(1..1000)),
    }
}

const CATEGORIES: &[&str] = &["nursing", "physician", "radiology", "ecg", "respiratory"];

/// Generates the corpus. Output depends only on `config`.
pub fn generate_synthetic_corpus(config: &SynthConfig) -> Result<SyntheticCorpus> {
    validate(config)?;
    let mut rng = rng::seeded(config.seed);
    let filler_terms: Vec<String> = (0..config.vocab_size).map(filler_word).collect();
    let weights: Vec<f64> = (1..=config.vocab_size)
        .map(|r| (r as f64).powf(-config.zipf_exponent))
        .collect();
    let zipf = WeightedIndex::new(&weights).map_err(|e| Error::invalid(e.to_string()))?;

    let width = config.n_patients.to_string().len().max(4);
    let ids: Vec<String> = (0..config.n_patients)
        .map(|i| format!("P{:0width$}", i + 1))
        .collect();

    // positives per task: exact count, random membership
    let mut labels = LabelTable::default();
    let mut positive: Vec<Vec<bool>> = Vec::new();
    for task in &config.tasks {
        let n_pos = (task.positive_rate * config.n_patients as f64).round() as usize;
        let mut flags = vec![false; config.n_patients];
        flags[..n_pos].iter_mut().for_each(|f| *f = true);
        flags.shuffle(&mut rng);
        for (id, &pos) in ids.iter().zip(&flags) {
            labels.insert(id, &task.name, if pos { "1" } else { "0" });
        }
        positive.push(flags);
    }

    let mut notes = Vec::new();
    let mut concepts = Vec::new();
    for (p, id) in ids.iter().enumerate() {
        let n_notes = rng.random_range(config.notes_per_patient.0..=config.notes_per_patient.1);
        let mut texts: Vec<Vec<String>> = Vec::with_capacity(n_notes);
        let mut concept_counts: BTreeMap<(usize, Assertion), u64> = BTreeMap::new();
        for _ in 0..n_notes {
            let len = rng.random_range(config.tokens_per_note.0..=config.tokens_per_note.1);
            let mut tokens = Vec::with_capacity(len + 1);
            for _ in 0..len {
                if rng.random_bool(config.numeric_rate) {
                    tokens.push(numeric_token(&mut rng));
                } else {
                    let rank = zipf.sample(&mut rng);
                    tokens.push(filler_terms[rank].clone());
                    if config.concepts && rank % 3 == 0 {
                        let assertion = if rng.random_bool(0.8) { Assertion::Present } else { Assertion::Absent };
                        *concept_counts.entry((rank / 3, assertion)).or_insert(0) += 1;
                    }
                }
            }
            texts.push(tokens);
        }

        for (t, task) in config.tasks.iter().enumerate() {
            let prob = if positive[t][p] { task.injection_probability } else { task.noise_probability };
            if task.markers.is_empty() || !rng.random_bool(prob) {
                continue;
            }
            let chosen: Vec<&String> = if task.markers_per_document == 0
                || task.markers_per_document >= task.markers.len()
            {
                task.markers.iter().collect()
            } else {
                task.markers
                    .choose_multiple(&mut rng, task.markers_per_document)
                    .collect()
            };
            for marker in chosen {
                for _ in 0..task.marker_copies.max(1) {
                    let note = rng.random_range(0..texts.len());
                    let pos = rng.random_range(0..=texts[note].len());
                    texts[note].insert(pos, marker.clone());
                }
            }
        }

        for (k, tokens) in texts.into_iter().enumerate() {
            let mut text = tokens.join(" ");
            if let Some(first) = text.get(0..1) {
                if rng.random_bool(0.5) {
                    text.replace_range(0..1, &first.to_uppercase());
                }
            }
            text.push('.');
            notes.push(NoteRecord {
                patient_id: id.clone(),
                category: CATEGORIES[rng.random_range(0..CATEGORIES.len())].to_owned(),
                order_key: k as i64 + 1,
                text,
            });
        }
        if rng.random_bool(config.discharge_rate) {
            let len = config.tokens_per_note.0;
            let body: Vec<String> = (0..len).map(|_| filler_terms[zipf.sample(&mut rng)].clone()).collect();
            notes.push(NoteRecord {
                patient_id: id.clone(),
                category: "discharge_report".to_owned(),
                order_key: n_notes as i64 + 1,
                text: format!("Discharge summary:\n{}", body.join(" ")),
            });
        }
        for ((concept, assertion), count) in concept_counts {
            concepts.push(ConceptAnnotation {
                patient_id: id.clone(),
                cui: format!("C{:07}", concept),
                assertion,
                count,
            });
        }
    }

    Ok(SyntheticCorpus {
        notes,
        labels,
        concepts,
        filler_terms,
    })
}

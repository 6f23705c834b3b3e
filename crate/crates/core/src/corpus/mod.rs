//! Corpus ingestion and featurization.
//!
//! Notes are read from a TSV contract, concatenated per patient, normalized
//! into lowercase tokens with numeric placeholders, and turned into TF-IDF
//! weighted bag-of-terms vectors over a vocabulary fitted on the training
//! split only.

mod concepts;
mod normalize;
mod split;
mod synth;
mod tfidf;
mod tsv;
mod vocab;

use std::collections::BTreeMap;

pub use concepts::{build_concept_features, concept_counts, Assertion, ConceptAnnotation, ConceptFeatures};
pub use normalize::{
    normalize_tokens, Normalizer, PlaceholderMode, MEAS_VAL, NUMERIC_VAL, TIME_VAL,
};
pub use split::{split_dataset, DatasetSplit, Partition};
pub use synth::{generate_synthetic_corpus, SyntheticCorpus, SyntheticTask, SynthConfig};
pub use tfidf::{FeatureMatrix, SparseFeatureVector, TfIdf};
pub use tsv::{
    escape_text, group_notes, ingest_notes, read_concepts, read_documents, read_labels, read_note_records,
    unescape_text, write_concepts, write_documents, write_labels, write_notes, LabelTable,
    NoteCorpus, NoteRecord,
};
pub use vocab::{Vocabulary, OOV_TOKEN};

/// Per-term occurrence counts for one document.
pub type TermCounts = BTreeMap<String, u64>;

/// One patient's concatenated, normalized notes.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientDocument {
    pub patient_id: String,
    pub tokens: Vec<String>,
    /// Task name to class label. Tasks without a label for this patient are
    /// simply absent.
    pub labels: BTreeMap<String, String>,
}

impl PatientDocument {
    pub fn term_counts(&self) -> TermCounts {
        count_terms(&self.tokens)
    }
}

pub fn count_terms<S: AsRef<str>>(tokens: &[S]) -> TermCounts {
    let mut counts = TermCounts::new();
    for t in tokens {
        *counts.entry(t.as_ref().to_owned()).or_insert(0) += 1;
    }
    counts
}

/// Builds documents from ingested notes: each patient's notes are joined in
/// chronological order and normalized.
pub fn build_documents(
    notes: &NoteCorpus,
    normalizer: &Normalizer,
    labels: Option<&LabelTable>,
) -> Vec<PatientDocument> {
    notes
        .patients
        .iter()
        .map(|(pid, texts)| {
            let tokens = texts.iter().flat_map(|t| normalizer.normalize(t)).collect();
            let labels = labels
                .map(|l| l.labels_for(pid))
                .unwrap_or_default();
            PatientDocument {
                patient_id: pid.clone(),
                tokens,
                labels,
            }
        })
        .collect()
}

/// Vocabulary, TF-IDF weights and feature matrices for one dataset split.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitFeatures {
    pub vocabulary: Vocabulary,
    pub tfidf: TfIdf,
    pub train: FeatureMatrix,
    pub validation: FeatureMatrix,
    pub test: FeatureMatrix,
}

impl SplitFeatures {
    pub fn partition(&self, part: Partition) -> &FeatureMatrix {
        match part {
            Partition::Train => &self.train,
            Partition::Validation => &self.validation,
            Partition::Test => &self.test,
        }
    }
}

/// Fits the vocabulary and IDF weights on the training documents only and
/// featurizes every partition; held-out terms outside the vocabulary map to
/// the OOV token.
pub fn featurize_split(
    documents: &[PatientDocument],
    split: &DatasetSplit,
    min_frequency: u64,
) -> crate::Result<SplitFeatures> {
    let by_id: std::collections::HashMap<&str, &PatientDocument> =
        documents.iter().map(|d| (d.patient_id.as_str(), d)).collect();
    let counts_for = |ids: &[String]| -> crate::Result<Vec<TermCounts>> {
        ids.iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .map(|d| d.term_counts())
                    .ok_or_else(|| crate::Error::invalid(format!("split names unknown patient {id:?}")))
            })
            .collect()
    };
    let train_counts = counts_for(&split.train)?;
    let vocabulary = Vocabulary::build(&train_counts, min_frequency)?;
    let (tfidf, train_rows) = TfIdf::fit_transform(&train_counts, &vocabulary);
    let (dim, fp) = (vocabulary.len(), vocabulary.fingerprint());
    let held_out = |ids: &[String]| -> crate::Result<FeatureMatrix> {
        let rows = counts_for(ids)?
            .iter()
            .map(|c| tfidf.transform(c, &vocabulary))
            .collect::<crate::Result<Vec<_>>>()?;
        FeatureMatrix::new(ids.to_vec(), rows, dim, fp)
    };
    let validation = held_out(&split.validation)?;
    let test = held_out(&split.test)?;
    Ok(SplitFeatures {
        train: FeatureMatrix::new(split.train.clone(), train_rows, dim, fp)?,
        validation,
        test,
        tfidf,
        vocabulary,
    })
}

//! Bag-of-concepts features from pre-computed concept annotations.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use super::{FeatureMatrix, TermCounts, TfIdf, Vocabulary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Assertion {
    Present,
    Absent,
}

impl fmt::Display for Assertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Assertion::Present => "present",
            Assertion::Absent => "absent",
        })
    }
}

impl FromStr for Assertion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "present" => Ok(Assertion::Present),
            "absent" => Ok(Assertion::Absent),
            other => Err(Error::invalid(format!(
                "unknown assertion {other:?} (expected present or absent)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConceptAnnotation {
    pub patient_id: String,
    pub cui: String,
    pub assertion: Assertion,
    pub count: u64,
}

impl ConceptAnnotation {
    /// Vocabulary term, `CUI|assertion`.
    pub fn term(&self) -> String {
        format!("{}|{}", self.cui, self.assertion)
    }
}

/// Aggregated concept-term counts per patient.
pub fn concept_counts(annotations: &[ConceptAnnotation]) -> BTreeMap<String, TermCounts> {
    let mut per_patient: BTreeMap<String, TermCounts> = BTreeMap::new();
    for a in annotations {
        *per_patient
            .entry(a.patient_id.clone())
            .or_default()
            .entry(a.term())
            .or_insert(0) += a.count;
    }
    per_patient
}

#[derive(Debug, Clone)]
pub struct ConceptFeatures {
    pub vocabulary: Vocabulary,
    pub tfidf: TfIdf,
    pub train: FeatureMatrix,
    /// Held-out patients, transformed with unseen terms mapped to OOV.
    pub heldout: FeatureMatrix,
}

/// Builds the concept vocabulary and TF-IDF vectors. Vocabulary and idf are
/// fitted on `train_ids`; `heldout_ids` are transformed only. Patients
/// without annotations get zero vectors (listed by
/// [`FeatureMatrix::degenerate`]).
pub fn build_concept_features(
    annotations: &[ConceptAnnotation],
    train_ids: &[String],
    heldout_ids: &[String],
    min_frequency: u64,
) -> Result<ConceptFeatures> {
    let per_patient = concept_counts(annotations);
    let empty = TermCounts::new();
    let lookup = |id: &String| per_patient.get(id).cloned().unwrap_or_else(|| empty.clone());
    let train_docs: Vec<TermCounts> = train_ids.iter().map(lookup).collect();
    let vocabulary = Vocabulary::build(&train_docs, min_frequency)?;
    let (tfidf, train_rows) = TfIdf::fit_transform(&train_docs, &vocabulary);
    let heldout_rows = heldout_ids
        .iter()
        .map(|id| tfidf.transform(&lookup(id), &vocabulary))
        .collect::<Result<Vec<_>>>()?;
    let dim = vocabulary.len();
    let fp = vocabulary.fingerprint();
    Ok(ConceptFeatures {
        train: FeatureMatrix::new(train_ids.to_vec(), train_rows, dim, fp)?,
        heldout: FeatureMatrix::new(heldout_ids.to_vec(), heldout_rows, dim, fp)?,
        vocabulary,
        tfidf,
    })
}

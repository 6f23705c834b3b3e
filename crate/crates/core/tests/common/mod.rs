use std::collections::HashSet;

use repvec_core::corpus::{
    build_documents, generate_synthetic_corpus, group_notes, Normalizer, PatientDocument, PlaceholderMode,
    SparseFeatureVector, SynthConfig, SyntheticCorpus, SyntheticTask, TfIdf, Vocabulary,
};

#[allow(dead_code)]
pub struct Featurized {
    pub corpus: SyntheticCorpus,
    pub documents: Vec<PatientDocument>,
    pub vocab: Vocabulary,
    pub rows: Vec<SparseFeatureVector>,
}

pub fn featurized(n_patients: usize, tasks: Vec<SyntheticTask>, seed: u64) -> Featurized {
    let corpus = generate_synthetic_corpus(&SynthConfig {
        n_patients,
        vocab_size: 300,
        tasks,
        seed,
        ..SynthConfig::default()
    })
    .unwrap();
    let notes = group_notes(corpus.notes.clone(), &HashSet::new());
    let documents = build_documents(&notes, &Normalizer::new(PlaceholderMode::Replace), Some(&corpus.labels));
    let counts: Vec<_> = documents.iter().map(|d| d.term_counts()).collect();
    let vocab = Vocabulary::build(&counts, 2).unwrap();
    let (_, rows) = TfIdf::fit_transform(&counts, &vocab);
    Featurized {
        corpus,
        documents,
        vocab,
        rows,
    }
}

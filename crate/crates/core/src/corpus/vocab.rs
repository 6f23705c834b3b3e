use std::collections::{BTreeMap, HashMap};

use super::TermCounts;
use crate::error::{Error, Result};

/// Reserved term that held-out documents use for unseen terms.
pub const OOV_TOKEN: &str = "<oov>";

/// Term index over the training split.
///
/// Retained terms are indexed in lexicographic order; the OOV token always
/// takes the last index and has corpus frequency 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
    frequencies: Vec<u64>,
    min_frequency: u64,
}

impl Vocabulary {
    /// Keeps every term whose total count over `documents` is at least
    /// `min_frequency`.
    pub fn build<'a, I>(documents: I, min_frequency: u64) -> Result<Self>
    where
        I: IntoIterator<Item = &'a TermCounts>,
    {
        let mut totals: BTreeMap<&str, u64> = BTreeMap::new();
        let mut n_docs = 0usize;
        for doc in documents {
            n_docs += 1;
            for (term, &count) in doc {
                *totals.entry(term.as_str()).or_insert(0) += count;
            }
        }
        if n_docs == 0 || totals.is_empty() {
            return Err(Error::EmptyCorpus(
                "cannot build a vocabulary from zero terms".into(),
            ));
        }
        let mut terms = Vec::new();
        let mut frequencies = Vec::new();
        for (term, count) in totals {
            if count >= min_frequency && term != OOV_TOKEN {
                terms.push(term.to_owned());
                frequencies.push(count);
            }
        }
        terms.push(OOV_TOKEN.to_owned());
        frequencies.push(0);
        Ok(Vocabulary::from_parts(terms, frequencies, min_frequency))
    }

    /// Convenience wrapper over token sequences.
    pub fn from_token_documents<S: AsRef<str>>(documents: &[Vec<S>], min_frequency: u64) -> Result<Self> {
        let counts: Vec<TermCounts> = documents.iter().map(|d| super::count_terms(d)).collect();
        Vocabulary::build(&counts, min_frequency)
    }

    /// Rebuilds a vocabulary from stored terms (OOV last) and frequencies.
    pub fn from_parts(terms: Vec<String>, frequencies: Vec<u64>, min_frequency: u64) -> Self {
        let index = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            terms,
            index,
            frequencies,
            min_frequency,
        }
    }

    /// Number of indices, including the OOV token.
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn min_frequency(&self) -> u64 {
        self.min_frequency
    }

    pub fn oov_index(&self) -> usize {
        self.terms.len() - 1
    }

    pub fn get(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    /// Index of `term`, or of the OOV token when unseen.
    pub fn get_or_oov(&self, term: &str) -> usize {
        self.get(term).unwrap_or_else(|| self.oov_index())
    }

    pub fn term(&self, index: usize) -> &str {
        &self.terms[index]
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn frequency(&self, index: usize) -> u64 {
        self.frequencies[index]
    }

    pub fn frequencies(&self) -> &[u64] {
        &self.frequencies
    }

    /// FNV-1a hash of the term list; models store it to reject inputs built
    /// over a different vocabulary.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for t in &self.terms {
            for b in t.bytes().chain(std::iter::once(0u8)) {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::count_terms;

    fn docs(texts: &[&str]) -> Vec<TermCounts> {
        texts
            .iter()
            .map(|t| count_terms(&t.split_whitespace().collect::<Vec<_>>()))
            .collect()
    }

    #[test]
    fn min_frequency_filters() {
        let d = docs(&["a a b", "a c"]);
        let v = Vocabulary::build(&d, 2).unwrap();
        assert_eq!(v.terms(), &["a".to_owned(), OOV_TOKEN.to_owned()]);
        assert_eq!(v.frequency(0), 3);
        assert_eq!(v.get_or_oov("b"), v.oov_index());
    }

    #[test]
    fn four_occurrences_below_five_are_dropped() {
        let d = docs(&["x x y y y", "x x y y"]);
        let v = Vocabulary::build(&d, 5).unwrap();
        assert!(v.get("x").is_none());
        assert_eq!(v.get("y"), Some(0));
    }

    #[test]
    fn min_frequency_one_keeps_all() {
        let d = docs(&["a a b", "a c"]);
        let v = Vocabulary::build(&d, 1).unwrap();
        assert_eq!(v.len(), 4);
        assert!(v.get(OOV_TOKEN).is_some());
    }

    #[test]
    fn empty_corpus_errors() {
        assert!(Vocabulary::build(&Vec::<TermCounts>::new(), 1).is_err());
        assert!(Vocabulary::build(&docs(&[""]), 1).is_err());
    }

    #[test]
    fn fingerprint_distinguishes_vocabularies() {
        let a = Vocabulary::build(&docs(&["a b"]), 1).unwrap();
        let b = Vocabulary::build(&docs(&["a c"]), 1).unwrap();
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint(), a.clone().fingerprint());
    }
}

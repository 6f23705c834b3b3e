use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{TermCounts, Vocabulary};
use crate::error::{Error, Result};

/// TF-IDF weighted bag of terms over a fixed vocabulary.
///
/// Indices are strictly increasing and below `dim`; the vector is either
/// zero or has unit L2 norm.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseFeatureVector {
    dim: usize,
    indices: Vec<usize>,
    values: Vec<f64>,
    vocab_fingerprint: u64,
}

impl SparseFeatureVector {
    pub fn new(
        dim: usize,
        indices: Vec<usize>,
        values: Vec<f64>,
        vocab_fingerprint: u64,
    ) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: indices.len(),
                actual: values.len(),
            });
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("sparse indices must be strictly increasing"));
        }
        if let Some(&last) = indices.last() {
            if last >= dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: last + 1,
                });
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("sparse feature weights must be finite"));
        }
        Ok(SparseFeatureVector {
            dim,
            indices,
            values,
            vocab_fingerprint,
        })
    }

    /// Sparse view of a dense vector (zeros dropped).
    pub fn from_dense(dense: &[f64], vocab_fingerprint: u64) -> Self {
        let (indices, values) = dense
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, &v)| (i, v))
            .unzip();
        SparseFeatureVector {
            dim: dense.len(),
            indices,
            values,
            vocab_fingerprint,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn vocab_fingerprint(&self) -> u64 {
        self.vocab_fingerprint
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn get(&self, index: usize) -> f64 {
        self.indices
            .binary_search(&index)
            .map_or(0.0, |pos| self.values[pos])
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            out[i] = v;
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }
}

/// Inverse document frequencies fitted on the training split.
///
/// `idf(t) = ln((1 + N) / (1 + df(t))) + 1`; weights are `tf · idf`, then
/// L2-normalized per document. The OOV index never receives document
/// frequency during fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct TfIdf {
    idf: Vec<f64>,
    n_docs: usize,
    vocab_fingerprint: u64,
}

impl TfIdf {
    pub fn fit(train_docs: &[TermCounts], vocab: &Vocabulary) -> Self {
        let mut df = vec![0u64; vocab.len()];
        let oov = vocab.oov_index();
        for doc in train_docs {
            for term in doc.keys() {
                if let Some(i) = vocab.get(term) {
                    if i != oov {
                        df[i] += 1;
                    }
                }
            }
        }
        let n = train_docs.len() as f64;
        let idf = df
            .iter()
            .map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0)
            .collect();
        TfIdf {
            idf,
            n_docs: train_docs.len(),
            vocab_fingerprint: vocab.fingerprint(),
        }
    }

    pub fn from_parts(idf: Vec<f64>, n_docs: usize, vocab_fingerprint: u64) -> Self {
        TfIdf {
            idf,
            n_docs,
            vocab_fingerprint,
        }
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    fn weigh(&self, counts: Vec<(usize, u64)>) -> SparseFeatureVector {
        let mut merged: Vec<(usize, u64)> = Vec::with_capacity(counts.len());
        let mut counts = counts;
        counts.sort_unstable_by_key(|&(i, _)| i);
        for (i, c) in counts {
            match merged.last_mut() {
                Some((j, acc)) if *j == i => *acc += c,
                _ => merged.push((i, c)),
            }
        }
        let raw: Vec<f64> = merged
            .iter()
            .map(|&(i, c)| c as f64 * self.idf[i])
            .collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        let (indices, values) = if norm > 0.0 {
            merged
                .iter()
                .zip(&raw)
                .map(|(&(i, _), &w)| (i, w / norm))
                .unzip()
        } else {
            (Vec::new(), Vec::new())
        };
        SparseFeatureVector {
            dim: self.idf.len(),
            indices,
            values,
            vocab_fingerprint: self.vocab_fingerprint,
        }
    }

    fn check(&self, vocab: &Vocabulary) -> Result<()> {
        if vocab.fingerprint() != self.vocab_fingerprint || vocab.len() != self.idf.len() {
            return Err(Error::VocabularyMismatch);
        }
        Ok(())
    }

    /// Training-split transform: terms outside the vocabulary are dropped.
    pub fn transform_training(&self, doc: &TermCounts, vocab: &Vocabulary) -> Result<SparseFeatureVector> {
        self.check(vocab)?;
        let counts = doc
            .iter()
            .filter_map(|(t, &c)| vocab.get(t).map(|i| (i, c)))
            .collect();
        Ok(self.weigh(counts))
    }

    /// Held-out transform: unseen terms map to the OOV token.
    pub fn transform(&self, doc: &TermCounts, vocab: &Vocabulary) -> Result<SparseFeatureVector> {
        self.check(vocab)?;
        let counts = doc.iter().map(|(t, &c)| (vocab.get_or_oov(t), c)).collect();
        Ok(self.weigh(counts))
    }

    pub fn fit_transform(
        train_docs: &[TermCounts],
        vocab: &Vocabulary,
    ) -> (TfIdf, Vec<SparseFeatureVector>) {
        let model = TfIdf::fit(train_docs, vocab);
        let rows = train_docs
            .iter()
            .map(|d| model.transform_training(d, vocab).expect("same vocabulary"))
            .collect();
        (model, rows)
    }
}

/// Feature vectors for a set of patients, in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub patient_ids: Vec<String>,
    pub rows: Vec<SparseFeatureVector>,
    pub dim: usize,
    pub vocab_fingerprint: u64,
}

impl FeatureMatrix {
    pub fn new(
        patient_ids: Vec<String>,
        rows: Vec<SparseFeatureVector>,
        dim: usize,
        vocab_fingerprint: u64,
    ) -> Result<Self> {
        if patient_ids.len() != rows.len() {
            return Err(Error::DimensionMismatch {
                expected: patient_ids.len(),
                actual: rows.len(),
            });
        }
        if let Some(r) = rows.iter().find(|r| r.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: r.dim(),
            });
        }
        Ok(FeatureMatrix {
            patient_ids,
            rows,
            dim,
            vocab_fingerprint,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Patients whose feature vector is all zeros.
    pub fn degenerate(&self) -> Vec<&str> {
        self.patient_ids
            .iter()
            .zip(&self.rows)
            .filter(|(_, r)| r.is_zero())
            .map(|(p, _)| p.as_str())
            .collect()
    }

    pub fn position(&self, patient_id: &str) -> Option<usize> {
        self.patient_ids.iter().position(|p| p == patient_id)
    }

    /// Rows for the given patients, in the given order.
    pub fn select(&self, ids: &[String]) -> Result<FeatureMatrix> {
        let lookup: std::collections::HashMap<&str, usize> = self
            .patient_ids
            .iter()
            .enumerate()
            .map(|(i, p)| (p.as_str(), i))
            .collect();
        let mut rows = Vec::with_capacity(ids.len());
        for id in ids {
            let &i = lookup
                .get(id.as_str())
                .ok_or_else(|| Error::invalid(format!("no features for patient {id}")))?;
            rows.push(self.rows[i].clone());
        }
        FeatureMatrix::new(ids.to_vec(), rows, self.dim, self.vocab_fingerprint)
    }

    /// Text form: a `#dim=<V>\tfingerprint=<hex>` line, then one
    /// `patient_id \t index:weight ...` line per row. Weights are printed
    /// in shortest round-trip form.
    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let mut out = format!("#dim={}\tfingerprint={:016x}\n", self.dim, self.vocab_fingerprint);
        for (pid, row) in self.patient_ids.iter().zip(&self.rows) {
            out.push_str(pid);
            out.push('\t');
            for (k, (i, v)) in row.iter().enumerate() {
                if k > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{i}:{v:?}");
            }
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read_tsv(path: &Path) -> Result<FeatureMatrix> {
        let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let perr = |line: usize, m: &str| Error::Parse {
            file: path.display().to_string(),
            line,
            message: m.to_owned(),
        };
        let mut lines = content.lines();
        let header = lines.next().ok_or_else(|| perr(1, "missing header"))?;
        let (dim, fp) = header
            .strip_prefix("#dim=")
            .and_then(|h| h.split_once("\tfingerprint="))
            .and_then(|(d, f)| Some((d.parse::<usize>().ok()?, u64::from_str_radix(f, 16).ok()?)))
            .ok_or_else(|| perr(1, "malformed header"))?;
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate() {
            let line_no = n + 2;
            let (pid, rest) = line
                .split_once('\t')
                .ok_or_else(|| perr(line_no, "expected patient_id \\t features"))?;
            let mut indices = Vec::new();
            let mut values = Vec::new();
            for item in rest.split_whitespace() {
                let (i, v) = item
                    .split_once(':')
                    .and_then(|(i, v)| Some((i.parse::<usize>().ok()?, v.parse::<f64>().ok()?)))
                    .ok_or_else(|| perr(line_no, "malformed index:weight pair"))?;
                indices.push(i);
                values.push(v);
            }
            ids.push(pid.to_owned());
            rows.push(
                SparseFeatureVector::new(dim, indices, values, fp)
                    .map_err(|e| perr(line_no, &e.to_string()))?,
            );
        }
        FeatureMatrix::new(ids, rows, dim, fp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::count_terms;
    use proptest::prelude::*;

    fn counts(text: &str) -> TermCounts {
        count_terms(&text.split_whitespace().collect::<Vec<_>>())
    }

    #[test]
    fn single_document_weight_is_one() {
        let docs = vec![counts("a a")];
        let vocab = Vocabulary::build(&docs, 1).unwrap();
        let (model, rows) = TfIdf::fit_transform(&docs, &vocab);
        assert_eq!(model.idf()[vocab.get("a").unwrap()], 1.0);
        assert_eq!(rows[0].iter().collect::<Vec<_>>(), vec![(0, 1.0)]);
    }

    #[test]
    fn hand_computed_weights() {
        // N = 2, df(a) = 2, df(b) = 1
        let docs = vec![counts("a b b"), counts("a")];
        let vocab = Vocabulary::build(&docs, 1).unwrap();
        let (model, rows) = TfIdf::fit_transform(&docs, &vocab);
        let idf_b = (3.0f64 / 2.0).ln() + 1.0;
        assert_eq!(model.idf()[0], 1.0);
        assert!((model.idf()[1] - idf_b).abs() < 1e-15);
        let (wa, wb) = (1.0, 2.0 * idf_b);
        let n = (wa * wa + wb * wb).sqrt();
        assert!((rows[0].get(0) - wa / n).abs() < 1e-15);
        assert!((rows[0].get(1) - wb / n).abs() < 1e-15);
        // OOV idf uses df = 0
        let oov = vocab.oov_index();
        assert!((model.idf()[oov] - (3.0f64.ln() + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn empty_document_is_zero() {
        let docs = vec![counts("a"), counts("")];
        let vocab = Vocabulary::build(&docs, 1).unwrap();
        let (_, rows) = TfIdf::fit_transform(&docs, &vocab);
        assert!(rows[1].is_zero());
        let m = FeatureMatrix::new(vec!["p".into(), "q".into()], rows, vocab.len(), vocab.fingerprint()).unwrap();
        assert_eq!(m.degenerate(), vec!["q"]);
    }

    #[test]
    fn heldout_unknown_terms_go_to_oov_training_unknowns_dropped() {
        let docs = vec![counts("a a b"), counts("a c")];
        let vocab = Vocabulary::build(&docs, 2).unwrap();
        let model = TfIdf::fit(&docs, &vocab);
        let test = model.transform(&counts("a zzz"), &vocab).unwrap();
        assert_eq!(test.indices(), &[0, vocab.oov_index()]);
        let train = model.transform_training(&counts("a zzz"), &vocab).unwrap();
        assert_eq!(train.indices(), &[0]);
    }

    #[test]
    fn idf_ignores_heldout_documents() {
        let train = vec![counts("a b"), counts("b c")];
        let vocab = Vocabulary::build(&train, 1).unwrap();
        let before = TfIdf::fit(&train, &vocab);
        let _ = before.transform(&counts("a a a q"), &vocab).unwrap();
        assert_eq!(before, TfIdf::fit(&train, &vocab));
    }

    #[test]
    fn vocabulary_mismatch_rejected() {
        let docs = vec![counts("a b")];
        let vocab = Vocabulary::build(&docs, 1).unwrap();
        let other = Vocabulary::build(&[counts("x y")], 1).unwrap();
        let model = TfIdf::fit(&docs, &vocab);
        assert!(matches!(model.transform(&counts("a"), &other), Err(Error::VocabularyMismatch)));
    }

    #[test]
    fn sparse_vector_validation() {
        assert!(SparseFeatureVector::new(3, vec![2, 1], vec![1.0, 1.0], 0).is_err());
        assert!(SparseFeatureVector::new(3, vec![3], vec![1.0], 0).is_err());
        assert!(SparseFeatureVector::new(3, vec![0], vec![f64::NAN], 0).is_err());
    }

    #[test]
    fn tsv_roundtrip_is_exact() {
        let docs = vec![counts("a b b c"), counts("a"), counts("")];
        let vocab = Vocabulary::build(&docs, 1).unwrap();
        let (_, rows) = TfIdf::fit_transform(&docs, &vocab);
        let m = FeatureMatrix::new(
            vec!["p1".into(), "p2".into(), "p3".into()],
            rows,
            vocab.len(),
            vocab.fingerprint(),
        )
        .unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        m.write_tsv(f.path()).unwrap();
        assert_eq!(FeatureMatrix::read_tsv(f.path()).unwrap(), m);
    }

    proptest! {
        #[test]
        fn nonzero_rows_have_unit_norm(
            docs in prop::collection::vec(prop::collection::vec(0u8..12, 0..30), 1..12)
        ) {
            let docs: Vec<TermCounts> = docs
                .iter()
                .map(|d| count_terms(&d.iter().map(|t| format!("t{t}")).collect::<Vec<_>>()))
                .collect();
            prop_assume!(docs.iter().any(|d| !d.is_empty()));
            let vocab = Vocabulary::build(&docs, 2).unwrap();
            let (model, rows) = TfIdf::fit_transform(&docs, &vocab);
            for r in rows.iter().chain(docs.iter().map(|d| model.transform(d, &vocab).unwrap()).collect::<Vec<_>>().iter()) {
                prop_assert!(r.is_zero() || (r.norm() - 1.0).abs() < 1e-9);
                prop_assert!(r.indices().iter().all(|&i| i < vocab.len()));
            }
        }
    }
}

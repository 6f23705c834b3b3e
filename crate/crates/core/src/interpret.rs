//! Interpretation of learned representations.
//!
//! Two techniques are provided. The first profiles how well the first
//! autoencoder layer reconstructs each input feature and relates that to
//! feature frequency. The second propagates classifier output sensitivities
//! back through the frozen encoder to the sparse input features:
//!
//! * `S⁽ʲ⁾(k, i) = ∂o_k/∂z_i = Σ_m (∂o_k/∂R_m)(∂R_m/∂z_i)` for instance `j`,
//! * `S(k, i) = √(Σ_j S⁽ʲ⁾(k, i)² / N)`,
//! * `φ(i) = max_k S(k, i)`.

use std::cmp::Ordering;
use std::fs;
use std::io::Write;
use std::path::Path;

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::classifier::{argmax, FeedForwardClassifier, OutputMode};
use crate::corpus::{SparseFeatureVector, Vocabulary};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::sdae::SdaeModel;

fn by_value_then_term(a: (f64, &str), b: (f64, &str), descending: bool) -> Ordering {
    let ord = a.0.total_cmp(&b.0);
    let ord = if descending { ord.reverse() } else { ord };
    ord.then_with(|| a.1.cmp(b.1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionProfile {
    /// Vocabulary indices covered by the profile (the OOV slot is left out).
    pub features: Vec<usize>,
    pub terms: Vec<String>,
    /// Mean squared reconstruction error per feature.
    pub errors: Vec<f64>,
    /// Corpus frequency per feature.
    pub frequencies: Vec<u64>,
}

impl ReconstructionProfile {
    fn ranked(&self, k: usize, descending: bool) -> Vec<(String, f64)> {
        let mut idx: Vec<usize> = (0..self.errors.len()).collect();
        idx.sort_by(|&a, &b| {
            by_value_then_term(
                (self.errors[a], &self.terms[a]),
                (self.errors[b], &self.terms[b]),
                descending,
            )
        });
        idx.into_iter()
            .take(k)
            .map(|i| (self.terms[i].clone(), self.errors[i]))
            .collect()
    }

    /// The `k` best reconstructed features, lowest error first.
    pub fn best(&self, k: usize) -> Vec<(String, f64)> {
        self.ranked(k, false)
    }

    /// The `k` worst reconstructed features, highest error first.
    pub fn worst(&self, k: usize) -> Vec<(String, f64)> {
        self.ranked(k, true)
    }
}

/// Per-feature squared error of the first layer's clean encode-decode pass,
/// averaged over `inputs`.
pub fn reconstruction_profile(
    sdae: &SdaeModel,
    inputs: &[SparseFeatureVector],
    vocab: &Vocabulary,
) -> Result<ReconstructionProfile> {
    if vocab.fingerprint() != sdae.vocab_fingerprint {
        return Err(Error::VocabularyMismatch);
    }
    if inputs.is_empty() {
        return Err(Error::EmptyCorpus("reconstruction profile over no inputs".into()));
    }
    let layer = &sdae.layers[0];
    let d = layer.input_dim();
    let mut sums = vec![0.0; d];
    for x in inputs {
        if x.vocab_fingerprint() != sdae.vocab_fingerprint {
            return Err(Error::VocabularyMismatch);
        }
        let dense = x.to_dense();
        let out = layer.forward(&dense)?;
        for (s, (a, b)) in sums.iter_mut().zip(out.reconstruction.iter().zip(&dense)) {
            *s += (a - b) * (a - b);
        }
    }
    let n = inputs.len() as f64;
    let features: Vec<usize> = (0..d).filter(|&i| i != vocab.oov_index()).collect();
    Ok(ReconstructionProfile {
        terms: features.iter().map(|&i| vocab.term(i).to_owned()).collect(),
        errors: features.iter().map(|&i| sums[i] / n).collect(),
        frequencies: features.iter().map(|&i| vocab.frequency(i)).collect(),
        features,
    })
}

/// Ranks with ties replaced by their average rank (1-based).
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(Error::invalid("rank correlation needs at least 3 points"));
    }
    let constant = |v: &[f64]| v.iter().all(|&a| a == v[0]);
    if constant(x) || constant(y) {
        return Err(Error::Undefined("rank correlation of a constant series".into()));
    }
    Ok(())
}

/// Spearman's ρ (Pearson correlation of average ranks) with a two-sided
/// p-value from the t approximation.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    check_pair(x, y)?;
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    let rho = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let p = if rho.abs() >= 1.0 || x.len() < 4 {
        if rho.abs() >= 1.0 { 0.0 } else { 1.0 }
    } else {
        let df = n - 2.0;
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::invalid(e.to_string()))?;
        2.0 * dist.cdf(-t.abs())
    };
    Ok((rho, p))
}

/// Σ t(t−1)/2, Σ t(t−1)(t−2) and Σ t(t−1)(2t+5) over runs of equal
/// adjacent keys.
fn tie_sums<T: PartialEq>(sorted: &[T]) -> (u64, f64, f64) {
    let (mut pairs, mut s3, mut s5) = (0u64, 0.0, 0.0);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as u64;
        pairs += t * (t - 1) / 2;
        let tf = t as f64;
        s3 += tf * (tf - 1.0) * (tf - 2.0);
        s5 += tf * (tf - 1.0) * (2.0 * tf + 5.0);
        i = j;
    }
    (pairs, s3, s5)
}

/// Counts inversions of `v` while merge-sorting it.
fn merge_count(v: &mut [f64], buf: &mut Vec<f64>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid], buf) + merge_count(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            swaps += (mid - i) as u64;
            buf.push(v[j]);
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

/// Kendall's τ-b in `O(n log n)`, with a two-sided p-value from the
/// tie-corrected normal approximation.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    check_pair(x, y)?;
    let n = x.len();
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let n0 = (n as u64) * (n as u64 - 1) / 2;
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let (n1, x3, x5) = tie_sums(&xs);
    let (n3, _, _) = tie_sums(&pairs);
    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let swaps = merge_count(&mut ys, &mut Vec::with_capacity(n));
    let (n2, y3, y5) = tie_sums(&ys);
    let s = n0 as f64 - n1 as f64 - n2 as f64 + n3 as f64 - 2.0 * swaps as f64;
    let tau = (s / ((n0 - n1) as f64 * (n0 - n2) as f64).sqrt()).clamp(-1.0, 1.0);
    let nf = n as f64;
    let var = (nf * (nf - 1.0) * (2.0 * nf + 5.0) - x5 - y5) / 18.0
        + x3 * y3 / (9.0 * nf * (nf - 1.0) * (nf - 2.0))
        + (2.0 * n1 as f64) * (2.0 * n2 as f64) / (2.0 * nf * (nf - 1.0));
    let p = if var > 0.0 {
        let z = s / var.sqrt();
        2.0 * Normal::standard().cdf(-z.abs())
    } else {
        1.0
    };
    Ok((tau, p.min(1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankCorrelation {
    pub n: usize,
    pub spearman: f64,
    pub spearman_p: f64,
    pub kendall: f64,
    pub kendall_p: f64,
}

/// Rank correlation between reconstruction error and corpus frequency.
pub fn frequency_correlation(profile: &ReconstructionProfile) -> Result<RankCorrelation> {
    let freq: Vec<f64> = profile.frequencies.iter().map(|&f| f as f64).collect();
    let (spearman, spearman_p) = spearman(&profile.errors, &freq)?;
    let (kendall, kendall_p) = kendall_tau_b(&profile.errors, &freq)?;
    Ok(RankCorrelation {
        n: freq.len(),
        spearman,
        spearman_p,
        kendall,
        kendall_p,
    })
}

fn check_models(sdae: &SdaeModel, clf: &FeedForwardClassifier) -> Result<()> {
    if sdae.output_dim() != clf.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: sdae.output_dim(),
            actual: clf.input_dim(),
        });
    }
    Ok(())
}

fn resolve_features(features: Option<&[usize]>, dim: usize) -> Result<Vec<usize>> {
    match features {
        Some(f) => {
            if let Some(&bad) = f.iter().find(|&&i| i >= dim) {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: bad + 1,
                });
            }
            Ok(f.to_vec())
        }
        None => Ok((0..dim).collect()),
    }
}

/// `S⁽ʲ⁾` for one input: a `K × |features|` matrix of `∂o_k/∂z_i`.
pub fn instance_sensitivity(
    sdae: &SdaeModel,
    clf: &FeedForwardClassifier,
    x: &[f64],
    features: Option<&[usize]>,
    mode: OutputMode,
) -> Result<Matrix> {
    check_models(sdae, clf)?;
    let cols = resolve_features(features, sdae.input_dim())?;
    let r = sdae.encode(x)?;
    let jac = clf.output_jacobian(&r, mode)?;
    let mut out = Matrix::zeros(clf.n_classes(), cols.len());
    for k in 0..clf.n_classes() {
        let full = sdae.encoder_vjp(x, jac.row(k))?;
        for (c, &i) in cols.iter().enumerate() {
            out.set(k, c, full[i]);
        }
    }
    Ok(out)
}

/// Per-instance sensitivities for a set of inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityMatrix {
    pub features: Vec<usize>,
    pub n_classes: usize,
    /// One `K × |features|` matrix per instance.
    pub instances: Vec<Matrix>,
}

impl SensitivityMatrix {
    pub fn get(&self, instance: usize, class: usize, feature: usize) -> f64 {
        self.instances[instance].get(class, feature)
    }
}

pub fn sensitivity_matrix(
    sdae: &SdaeModel,
    clf: &FeedForwardClassifier,
    inputs: &[SparseFeatureVector],
    features: Option<&[usize]>,
    mode: OutputMode,
) -> Result<SensitivityMatrix> {
    let cols = resolve_features(features, sdae.input_dim())?;
    let instances = inputs
        .iter()
        .map(|x| instance_sensitivity(sdae, clf, &x.to_dense(), Some(&cols), mode))
        .collect::<Result<Vec<_>>>()?;
    Ok(SensitivityMatrix {
        features: cols,
        n_classes: clf.n_classes(),
        instances,
    })
}

/// Root mean square over instances of each `(class, feature)` entry.
pub fn rms_over_instances(instances: &[Matrix]) -> Result<Matrix> {
    let first = instances
        .first()
        .ok_or_else(|| Error::EmptyCorpus("sensitivity aggregation over no instances".into()))?;
    let mut acc = Matrix::zeros(first.rows(), first.cols());
    for m in instances {
        if (m.rows(), m.cols()) != (first.rows(), first.cols()) {
            return Err(Error::DimensionMismatch {
                expected: first.cols(),
                actual: m.cols(),
            });
        }
        for (a, &v) in acc.as_mut_slice().iter_mut().zip(m.as_slice()) {
            *a += v * v;
        }
    }
    finish_rms(&mut acc, instances.len());
    Ok(acc)
}

fn finish_rms(acc: &mut Matrix, n: usize) {
    for a in acc.as_mut_slice() {
        *a = (*a / n as f64).sqrt();
    }
}

/// `φ` and its argmax class per feature (column); the lowest class index
/// wins ties.
pub fn max_over_classes(aggregate: &Matrix) -> (Vec<f64>, Vec<usize>) {
    (0..aggregate.cols())
        .map(|c| {
            let col: Vec<f64> = (0..aggregate.rows()).map(|k| aggregate.get(k, c)).collect();
            let k = argmax(&col);
            (col[k], k)
        })
        .unzip()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClassSelection {
    /// The classifier's predicted class for the instance.
    #[default]
    Predicted,
    /// A given class index, e.g. the instance's true label.
    Class(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstanceMode {
    /// RMS over all instances, maximum over classes.
    Aggregate,
    /// Magnitude of one instance's sensitivity for one class.
    Single { instance: usize, class: ClassSelection },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportEntry {
    pub rank: usize,
    pub feature: usize,
    pub term: String,
    pub phi: f64,
    pub argmax_class: String,
    /// Whether the feature occurs in the instance's document (in any
    /// instance's document for aggregate reports).
    pub present: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignificanceReport {
    pub entries: Vec<ReportEntry>,
}

impl SignificanceReport {
    /// Ranked by `φ` descending, ties broken by term.
    pub fn new(mut entries: Vec<ReportEntry>) -> Self {
        entries.sort_by(|a, b| by_value_then_term((a.phi, &a.term), (b.phi, &b.term), true));
        for (i, e) in entries.iter_mut().enumerate() {
            e.rank = i + 1;
        }
        SignificanceReport { entries }
    }

    pub fn top_terms(&self, k: usize) -> Vec<&str> {
        self.entries.iter().take(k).map(|e| e.term.as_str()).collect()
    }

    /// 1-based rank of a term.
    pub fn rank_of(&self, term: &str) -> Option<usize> {
        self.entries.iter().find(|e| e.term == term).map(|e| e.rank)
    }

    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("rank\tterm\tphi\targmax_class\tpresent_in_document\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{}\t{}\t{:?}\t{}\t{}\n",
                e.rank,
                e.term,
                e.phi,
                e.argmax_class,
                u8::from(e.present)
            ));
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityResult {
    pub features: Vec<usize>,
    /// `K × |features|`: RMS over instances (aggregate mode) or the single
    /// instance's absolute sensitivities.
    pub aggregate: Matrix,
    pub phi: Vec<f64>,
    pub argmax_class: Vec<usize>,
    pub report: SignificanceReport,
    pub n_instances: usize,
}

/// Feature significance of the composed encoder and classifier.
#[allow(clippy::too_many_arguments)]
pub fn pipeline_sensitivity(
    sdae: &SdaeModel,
    clf: &FeedForwardClassifier,
    instances: &[SparseFeatureVector],
    vocab: &Vocabulary,
    features: Option<&[usize]>,
    instance_mode: InstanceMode,
    output_mode: OutputMode,
) -> Result<SensitivityResult> {
    check_models(sdae, clf)?;
    if vocab.fingerprint() != sdae.vocab_fingerprint {
        return Err(Error::VocabularyMismatch);
    }
    let cols = resolve_features(features, sdae.input_dim())?;
    let k = clf.n_classes();
    let (aggregate, phi, argmax_class, present, n) = match instance_mode {
        InstanceMode::Aggregate => {
            if instances.is_empty() {
                return Err(Error::EmptyCorpus("sensitivity over no instances".into()));
            }
            let mut acc = Matrix::zeros(k, cols.len());
            let mut present = vec![false; cols.len()];
            for x in instances {
                let s = instance_sensitivity(sdae, clf, &x.to_dense(), Some(&cols), output_mode)?;
                for (a, &v) in acc.as_mut_slice().iter_mut().zip(s.as_slice()) {
                    *a += v * v;
                }
                for (p, &i) in present.iter_mut().zip(&cols) {
                    *p |= x.get(i) != 0.0;
                }
            }
            finish_rms(&mut acc, instances.len());
            let (phi, arg) = max_over_classes(&acc);
            (acc, phi, arg, present, instances.len())
        }
        InstanceMode::Single { instance, class } => {
            let x = instances
                .get(instance)
                .ok_or_else(|| Error::invalid(format!("instance {instance} out of range")))?;
            let dense = x.to_dense();
            let chosen = match class {
                ClassSelection::Predicted => clf.predict(&sdae.encode(&dense)?)?.0,
                ClassSelection::Class(c) if c < k => c,
                ClassSelection::Class(c) => {
                    return Err(Error::invalid(format!("class index {c} out of range")));
                }
            };
            let mut s = instance_sensitivity(sdae, clf, &dense, Some(&cols), output_mode)?;
            s.as_mut_slice().iter_mut().for_each(|v| *v = v.abs());
            let phi = s.row(chosen).to_vec();
            let present = cols.iter().map(|&i| x.get(i) != 0.0).collect();
            (s, phi, vec![chosen; cols.len()], present, 1)
        }
    };
    let entries = cols
        .iter()
        .enumerate()
        .map(|(c, &i)| ReportEntry {
            rank: 0,
            feature: i,
            term: vocab.term(i).to_owned(),
            phi: phi[c],
            argmax_class: clf.classes[argmax_class[c]].clone(),
            present: present[c],
        })
        .collect();
    Ok(SensitivityResult {
        features: cols,
        aggregate,
        phi,
        argmax_class,
        report: SignificanceReport::new(entries),
        n_instances: n,
    })
}

/// Pearson χ² of a contingency table, skipping cells with zero expected
/// count.
pub fn chi_square_statistic(table: &[Vec<u64>]) -> f64 {
    let total: u64 = table.iter().flatten().sum();
    if total == 0 {
        return 0.0;
    }
    let cols = table.first().map_or(0, Vec::len);
    let row_sums: Vec<u64> = table.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<u64> = (0..cols).map(|c| table.iter().map(|r| r[c]).sum()).collect();
    let mut chi = 0.0;
    for (r, row) in table.iter().enumerate() {
        for (c, &o) in row.iter().enumerate() {
            let e = row_sums[r] as f64 * col_sums[c] as f64 / total as f64;
            if e > 0.0 {
                chi += (o as f64 - e) * (o as f64 - e) / e;
            }
        }
    }
    chi
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChiSquareEntry {
    pub feature: usize,
    pub term: String,
    pub statistic: f64,
}

/// χ² of binarized feature presence against the labels, for every
/// vocabulary feature, ranked descending (ties by term).
pub fn chi_square_feature_ranking(
    features: &[SparseFeatureVector],
    labels: &[usize],
    vocab: &Vocabulary,
) -> Result<Vec<ChiSquareEntry>> {
    if features.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: features.len(),
            actual: labels.len(),
        });
    }
    let k = labels.iter().max().map_or(0, |&m| m + 1);
    let mut class_counts = vec![0u64; k];
    for &l in labels {
        class_counts[l] += 1;
    }
    if class_counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::invalid("chi-square ranking needs at least two classes"));
    }
    let dim = vocab.len();
    let mut present = vec![vec![0u64; k]; dim];
    for (x, &l) in features.iter().zip(labels) {
        if x.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: x.dim(),
            });
        }
        for (i, v) in x.iter() {
            if v < 0.0 {
                return Err(Error::invalid("chi-square ranking needs nonnegative features"));
            }
            if v > 0.0 {
                present[i][l] += 1;
            }
        }
    }
    let mut entries: Vec<ChiSquareEntry> = present
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let absent: Vec<u64> = class_counts.iter().zip(p).map(|(c, q)| c - q).collect();
            ChiSquareEntry {
                feature: i,
                term: vocab.term(i).to_owned(),
                statistic: chi_square_statistic(&[p.clone(), absent]),
            }
        })
        .collect();
    entries.sort_by(|a, b| by_value_then_term((a.statistic, &a.term), (b.statistic, &b.term), true));
    Ok(entries)
}

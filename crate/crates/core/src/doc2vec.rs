//! Paragraph vectors, distributed bag-of-words (DBOW) variant.
//!
//! A document vector is trained to predict each word of its document under
//! a negative-sampling logistic loss. Word vectors are trained at the same
//! time by skip-gram updates over a fixed window, sharing the output
//! vectors with the document objective. Held-out documents are embedded by
//! optimizing a fresh document vector against the frozen output vectors.

use std::collections::{BTreeMap, HashMap};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::container::{ModelKind, Persist, Reader, Writer};
use crate::corpus::PatientDocument;
use crate::error::{Error, Result};
use crate::linalg::{dot, sigmoid, Matrix};
use crate::rng::{self, SeededRng};

#[derive(Debug, Clone, PartialEq)]
pub struct Doc2VecConfig {
    pub dim: usize,
    pub window: usize,
    pub min_count: u64,
    pub negatives: usize,
    pub epochs: usize,
    pub start_alpha: f64,
    pub end_alpha: f64,
    pub noise_power: f64,
    /// Interleave skip-gram word-vector updates with document updates.
    pub train_words: bool,
    pub seed: u64,
}

impl Default for Doc2VecConfig {
    fn default() -> Self {
        Doc2VecConfig {
            dim: 300,
            window: 3,
            min_count: 10,
            negatives: 5,
            epochs: 5,
            start_alpha: 0.025,
            end_alpha: 0.0001,
            noise_power: 0.75,
            train_words: true,
            seed: 0,
        }
    }
}

/// `P(w) ∝ count(w)^power`.
pub fn build_noise_distribution(counts: &[u64], power: f64) -> Result<Vec<f64>> {
    if counts.is_empty() {
        return Err(Error::EmptyCorpus("noise distribution over an empty vocabulary".into()));
    }
    if !(power >= 0.0 && power.is_finite()) {
        return Err(Error::invalid(format!("noise power {power} must be a finite value >= 0")));
    }
    if counts.contains(&0) {
        return Err(Error::invalid("noise distribution needs positive counts"));
    }
    let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(power)).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Negative-sampling loss for one input vector `h` and a set of output
/// vectors, where `outputs[0]` is the positive target and the rest are
/// noise words:
/// `L = −ln σ(h·u₀) − Σ_{j≥1} ln σ(−h·u_j)`.
///
/// Returns `L`, `∂L/∂h` and `∂L/∂u_j` for every output vector.
pub fn ns_loss_and_grad(h: &[f64], outputs: &[&[f64]]) -> (f64, Vec<f64>, Vec<Vec<f64>>) {
    let mut loss = 0.0;
    let mut grad_h = vec![0.0; h.len()];
    let mut grad_out = Vec::with_capacity(outputs.len());
    for (j, u) in outputs.iter().enumerate() {
        let label = if j == 0 { 1.0 } else { 0.0 };
        let f = dot(h, u);
        loss += if j == 0 { softplus(-f) } else { softplus(f) };
        // ∂L/∂f = σ(f) − label
        let g = sigmoid(f) - label;
        for (gh, &uk) in grad_h.iter_mut().zip(u.iter()) {
            *gh += g * uk;
        }
        grad_out.push(h.iter().map(|&hk| g * hk).collect());
    }
    (loss, grad_h, grad_out)
}

/// `ln(1 + eˣ)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Output vectors as seen by one SGD step: updated during training, read
/// only during inference.
enum Outputs<'a> {
    Train(&'a mut Matrix),
    Frozen(&'a Matrix),
}

/// One SGD step of `ns_loss_and_grad` with step size `alpha`, with
/// negatives drawn from `sampler`. Updates `h` in place (and the output
/// rows when training). Returns the loss before the step.
#[allow(clippy::too_many_arguments)]
fn ns_step(
    h: &mut [f64],
    mut outputs: Outputs<'_>,
    target: usize,
    negatives: usize,
    sampler: &WeightedIndex<f64>,
    rng: &mut SeededRng,
    alpha: f64,
    scratch: &mut [f64],
) -> f64 {
    scratch.fill(0.0);
    let mut loss = 0.0;
    for j in 0..=negatives {
        let w = if j == 0 {
            target
        } else {
            let w = sampler.sample(rng);
            if w == target {
                continue;
            }
            w
        };
        let u = match &outputs {
            Outputs::Train(m) => m.row(w),
            Outputs::Frozen(m) => m.row(w),
        };
        let f = dot(h, u);
        let (label, l) = if j == 0 { (1.0, softplus(-f)) } else { (0.0, softplus(f)) };
        loss += l;
        let g = alpha * (sigmoid(f) - label);
        for (s, &uk) in scratch.iter_mut().zip(u.iter()) {
            *s += g * uk;
        }
        if let Outputs::Train(m) = &mut outputs {
            for (uk, &hk) in m.row_mut(w).iter_mut().zip(h.iter()) {
                *uk -= g * hk;
            }
        }
    }
    for (hk, &s) in h.iter_mut().zip(scratch.iter()) {
        *hk -= s;
    }
    loss
}

#[derive(Debug, Clone, PartialEq)]
pub struct DbowModel {
    pub config: Doc2VecConfig,
    /// Retained terms in lexicographic order, with their corpus counts.
    pub terms: Vec<String>,
    pub counts: Vec<u64>,
    pub doc_ids: Vec<String>,
    /// `n_docs × d`.
    pub doc_vectors: Matrix,
    /// `V × d` input word vectors.
    pub word_vectors: Matrix,
    /// `V × d` output vectors shared by the document and word objectives.
    pub output_vectors: Matrix,
    pub noise: Vec<f64>,
    /// Mean loss per predicted word, per epoch.
    pub loss_trace: Vec<f64>,
    index: HashMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferredVector {
    pub vector: Vec<f64>,
    /// True when the document had no in-vocabulary tokens; `vector` is then
    /// the untrained initialization.
    pub degenerate: bool,
    pub epochs_run: usize,
    pub loss_trace: Vec<f64>,
}

/// Inference stops after this many epochs at most.
pub const DEFAULT_INFER_EPOCHS: usize = 50;
/// Inference stops when the relative per-epoch loss improvement drops below
/// this value.
pub const INFER_TOLERANCE: f64 = 1e-4;

fn init_vector(rng: &mut SeededRng, dim: usize) -> Vec<f64> {
    let a = 0.5 / dim as f64;
    (0..dim).map(|_| rng.random_range(-a..=a)).collect()
}

/// Trains document and word vectors.
pub fn train_dbow(documents: &[PatientDocument], config: &Doc2VecConfig) -> Result<DbowModel> {
    if documents.is_empty() {
        return Err(Error::EmptyCorpus("no documents for paragraph-vector training".into()));
    }
    if config.dim == 0 || config.epochs == 0 {
        return Err(Error::invalid("paragraph vectors need dim > 0 and epochs > 0"));
    }
    let mut freq: BTreeMap<&str, u64> = BTreeMap::new();
    for doc in documents {
        for t in &doc.tokens {
            *freq.entry(t.as_str()).or_insert(0) += 1;
        }
    }
    let (terms, counts): (Vec<String>, Vec<u64>) = freq
        .into_iter()
        .filter(|&(_, c)| c >= config.min_count)
        .map(|(t, c)| (t.to_owned(), c))
        .unzip();
    if terms.is_empty() {
        return Err(Error::EmptyCorpus(format!(
            "no term reaches the minimum count {}",
            config.min_count
        )));
    }
    let noise = build_noise_distribution(&counts, config.noise_power)?;
    let sampler = WeightedIndex::new(&noise).map_err(|e| Error::invalid(e.to_string()))?;
    let index: HashMap<String, usize> = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    let encoded: Vec<Vec<usize>> = documents
        .iter()
        .map(|d| d.tokens.iter().filter_map(|t| index.get(t).copied()).collect())
        .collect();

    let d = config.dim;
    let v = terms.len();
    let mut rng = rng::derived(config.seed, 0);
    let mut doc_vectors = Matrix::zeros(documents.len(), d);
    for i in 0..documents.len() {
        let init = init_vector(&mut rng, d);
        doc_vectors.row_mut(i).copy_from_slice(&init);
    }
    let mut word_vectors = Matrix::zeros(v, d);
    for i in 0..v {
        let init = init_vector(&mut rng, d);
        word_vectors.row_mut(i).copy_from_slice(&init);
    }
    let mut output_vectors = Matrix::zeros(v, d);

    let total_words: usize = encoded.iter().map(Vec::len).sum();
    let total_work = (total_words * config.epochs).max(1) as f64;
    let mut processed = 0usize;
    let mut order: Vec<usize> = (0..documents.len()).collect();
    let mut scratch = vec![0.0; d];
    let mut loss_trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut predictions = 0usize;
        for &doc in &order {
            let words = &encoded[doc];
            for (pos, &target) in words.iter().enumerate() {
                let progress = processed as f64 / total_work;
                let alpha = (config.start_alpha - (config.start_alpha - config.end_alpha) * progress)
                    .max(config.end_alpha);
                processed += 1;
                epoch_loss += ns_step(
                    doc_vectors.row_mut(doc),
                    Outputs::Train(&mut output_vectors),
                    target,
                    config.negatives,
                    &sampler,
                    &mut rng,
                    alpha,
                    &mut scratch,
                );
                predictions += 1;
                if config.train_words {
                    let lo = pos.saturating_sub(config.window);
                    let hi = (pos + config.window).min(words.len() - 1);
                    for c in lo..=hi {
                        if c == pos {
                            continue;
                        }
                        ns_step(
                            word_vectors.row_mut(words[c]),
                            Outputs::Train(&mut output_vectors),
                            target,
                            config.negatives,
                            &sampler,
                            &mut rng,
                            alpha,
                            &mut scratch,
                        );
                    }
                }
            }
        }
        if !(epoch_loss.is_finite() && doc_vectors.all_finite() && output_vectors.all_finite()) {
            return Err(Error::NonFinite(format!(
                "paragraph-vector training diverged in epoch {}",
                epoch + 1
            )));
        }
        loss_trace.push(epoch_loss / predictions.max(1) as f64);
    }
    if !word_vectors.all_finite() {
        return Err(Error::NonFinite("word vectors diverged".into()));
    }
    Ok(DbowModel {
        config: config.clone(),
        terms,
        counts,
        doc_ids: documents.iter().map(|d| d.patient_id.clone()).collect(),
        doc_vectors,
        word_vectors,
        output_vectors,
        noise,
        loss_trace,
        index,
    })
}

impl DbowModel {
    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn vocabulary_size(&self) -> usize {
        self.terms.len()
    }

    pub fn term_index(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn word_vector(&self, term: &str) -> Option<&[f64]> {
        self.term_index(term).map(|i| self.word_vectors.row(i))
    }

    /// Trained vector of a training document.
    pub fn document_vector(&self, doc_id: &str) -> Option<&[f64]> {
        self.doc_ids
            .iter()
            .position(|d| d == doc_id)
            .map(|i| self.doc_vectors.row(i))
    }

    /// Embeds a new document. Only the new document vector is optimized;
    /// the model is borrowed immutably.
    pub fn infer_vector<S: AsRef<str>>(&self, tokens: &[S], max_epochs: usize, seed: u64) -> Result<InferredVector> {
        let mut rng = rng::seeded(seed);
        let mut h = init_vector(&mut rng, self.dim());
        let words: Vec<usize> = tokens.iter().filter_map(|t| self.term_index(t.as_ref())).collect();
        if words.is_empty() || max_epochs == 0 {
            return Ok(InferredVector {
                vector: h,
                degenerate: words.is_empty(),
                epochs_run: 0,
                loss_trace: Vec::new(),
            });
        }
        let sampler = WeightedIndex::new(&self.noise).map_err(|e| Error::invalid(e.to_string()))?;
        let mut scratch = vec![0.0; self.dim()];
        let total = (words.len() * max_epochs) as f64;
        let (a0, a1) = (self.config.start_alpha, self.config.end_alpha);
        let mut trace: Vec<f64> = Vec::new();
        let mut step = 0usize;
        for _ in 0..max_epochs {
            let mut loss = 0.0;
            for &target in &words {
                let alpha = (a0 - (a0 - a1) * step as f64 / total).max(a1);
                step += 1;
                loss += ns_step(
                    &mut h,
                    Outputs::Frozen(&self.output_vectors),
                    target,
                    self.config.negatives,
                    &sampler,
                    &mut rng,
                    alpha,
                    &mut scratch,
                );
            }
            let loss = loss / words.len() as f64;
            if !loss.is_finite() {
                return Err(Error::NonFinite("document-vector inference diverged".into()));
            }
            let converged = trace
                .last()
                .is_some_and(|&prev| (prev - loss) / prev.abs().max(f64::MIN_POSITIVE) < INFER_TOLERANCE);
            trace.push(loss);
            if converged {
                break;
            }
        }
        Ok(InferredVector {
            vector: h,
            degenerate: false,
            epochs_run: trace.len(),
            loss_trace: trace,
        })
    }

    fn rebuild_index(&mut self) {
        self.index = self.terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    }
}

impl Persist for DbowModel {
    const KIND: ModelKind = ModelKind::Dbow;

    fn write_payload(&self, w: &mut Writer) {
        let c = &self.config;
        w.usize(c.dim);
        w.usize(c.window);
        w.u64(c.min_count);
        w.usize(c.negatives);
        w.usize(c.epochs);
        w.f64(c.start_alpha);
        w.f64(c.end_alpha);
        w.f64(c.noise_power);
        w.u8(c.train_words as u8);
        w.u64(c.seed);
        w.usize(self.terms.len());
        for (t, &n) in self.terms.iter().zip(&self.counts) {
            w.str(t);
            w.u64(n);
        }
        w.usize(self.doc_ids.len());
        for id in &self.doc_ids {
            w.str(id);
        }
        w.f64s(self.doc_vectors.as_slice());
        w.f64s(self.word_vectors.as_slice());
        w.f64s(self.output_vectors.as_slice());
        w.f64s(&self.loss_trace);
    }

    fn read_payload(r: &mut Reader<'_>) -> Result<Self> {
        let config = Doc2VecConfig {
            dim: r.usize()?,
            window: r.usize()?,
            min_count: r.u64()?,
            negatives: r.usize()?,
            epochs: r.usize()?,
            start_alpha: r.f64()?,
            end_alpha: r.f64()?,
            noise_power: r.f64()?,
            train_words: r.u8()? != 0,
            seed: r.u64()?,
        };
        let v = r.usize()?;
        let mut terms = Vec::new();
        let mut counts = Vec::new();
        for _ in 0..v {
            terms.push(r.str()?);
            counts.push(r.u64()?);
        }
        let n = r.usize()?;
        let doc_ids = (0..n).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
        let d = config.dim;
        let doc_vectors = Matrix::from_vec(n, d, r.f64s_exact(n * d)?)?;
        let word_vectors = Matrix::from_vec(v, d, r.f64s_exact(v * d)?)?;
        let output_vectors = Matrix::from_vec(v, d, r.f64s_exact(v * d)?)?;
        let loss_trace = r.f64s()?;
        let noise = build_noise_distribution(&counts, config.noise_power)
            .map_err(|e| Error::Container(format!("invalid vocabulary counts: {e}")))?;
        let mut model = DbowModel {
            config,
            terms,
            counts,
            doc_ids,
            doc_vectors,
            word_vectors,
            output_vectors,
            noise,
            loss_trace,
            index: HashMap::new(),
        };
        model.rebuild_index();
        Ok(model)
    }
}

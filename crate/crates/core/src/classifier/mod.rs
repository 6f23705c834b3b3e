//! Feedforward softmax classifiers.
//!
//! `L ≥ 0` hidden layers of equal width share one activation; `L = 0` is
//! softmax regression on the raw input. Training minimizes categorical
//! cross-entropy with mini-batch RMSProp and stops early on a validation
//! plateau, restoring the best epoch's weights.

mod search;

use std::borrow::Cow;
use std::collections::BTreeSet;

use rand::seq::SliceRandom;

use crate::container::{ModelKind, Persist, Reader, Writer};
use crate::corpus::SparseFeatureVector;
use crate::error::{Error, Result};
use crate::linalg::{softmax, Matrix};
use crate::optim::{RmsProp, RmsPropConfig};
use crate::rng;

pub use search::{random_search, HyperparameterSpace, SearchCandidate, SearchResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
}

impl Activation {
    pub const ALL: [Activation; 3] = [Activation::Sigmoid, Activation::Tanh, Activation::Relu];

    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Activation::ALL.into_iter().find(|a| a.name() == s.trim().to_ascii_lowercase())
    }

    fn tag(self) -> u8 {
        match self {
            Activation::Sigmoid => 0,
            Activation::Tanh => 1,
            Activation::Relu => 2,
        }
    }

    fn from_tag(t: u8) -> Option<Self> {
        Activation::ALL.into_iter().find(|a| a.tag() == t)
    }

    fn apply(self, a: f64) -> f64 {
        match self {
            Activation::Sigmoid => crate::linalg::sigmoid(a),
            Activation::Tanh => a.tanh(),
            Activation::Relu => a.max(0.0),
        }
    }

    /// Derivative at pre-activation `a` with output `h`.
    fn derivative(self, a: f64, h: f64) -> f64 {
        match self {
            Activation::Sigmoid => h * (1.0 - h),
            Activation::Tanh => 1.0 - h * h,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Activation::parse(s).ok_or_else(|| Error::invalid(format!("unknown activation {s:?}")))
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Input rows for training or prediction.
#[derive(Debug, Clone, Copy)]
pub enum Features<'a> {
    Sparse(&'a [SparseFeatureVector]),
    Dense(&'a [Vec<f64>]),
}

impl<'a> Features<'a> {
    pub fn len(&self) -> usize {
        match self {
            Features::Sparse(s) => s.len(),
            Features::Dense(d) => d.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> Cow<'a, [f64]> {
        match *self {
            Features::Sparse(s) => Cow::Owned(s[i].to_dense()),
            Features::Dense(d) => Cow::Borrowed(&d[i]),
        }
    }

    fn row_dim(&self, i: usize) -> usize {
        match self {
            Features::Sparse(s) => s[i].dim(),
            Features::Dense(d) => d[i].len(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LabeledData<'a> {
    pub features: Features<'a>,
    /// Class indices into the classifier's class list.
    pub labels: &'a [usize],
}

/// Sorted distinct labels and the index of each input label.
pub fn encode_labels<S: AsRef<str>>(labels: &[S]) -> (Vec<String>, Vec<usize>) {
    let classes: Vec<String> = labels
        .iter()
        .map(|l| l.as_ref().to_owned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let idx = labels
        .iter()
        .map(|l| classes.binary_search_by(|c| c.as_str().cmp(l.as_ref())).expect("present"))
        .collect();
    (classes, idx)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    pub hidden_layers: usize,
    pub width: usize,
    pub activation: Activation,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub optimizer: RmsPropConfig,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            hidden_layers: 1,
            width: 100,
            activation: Activation::Relu,
            max_epochs: 200,
            patience: 5,
            batch_size: 64,
            optimizer: RmsPropConfig::default(),
            seed: 0,
        }
    }
}

/// Whether sensitivities differentiate softmax probabilities or logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputMode {
    #[default]
    Probability,
    Logit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedForwardClassifier {
    /// `L + 1` weight matrices (`out × in`), the last one producing logits.
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
    pub activation: Activation,
    pub classes: Vec<String>,
    pub config: ClassifierConfig,
    pub train_trace: Vec<f64>,
    pub validation_trace: Vec<f64>,
    /// 1-based epoch whose weights were kept; 0 for an untrained model.
    pub best_epoch: usize,
}

/// Parameter gradients, shaped like the model's weights and biases.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierGradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

struct Cache {
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
    logits: Vec<f64>,
}

fn log_softmax_at(logits: &[f64], k: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    logits[k] - lse
}

impl FeedForwardClassifier {
    /// Glorot-uniform weights, zero biases.
    pub fn initialize(input_dim: usize, classes: Vec<String>, config: &ClassifierConfig) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::invalid("classifier needs at least one class"));
        }
        if input_dim == 0 || (config.hidden_layers > 0 && config.width == 0) {
            return Err(Error::invalid("classifier layers must have positive width"));
        }
        let mut rng = rng::derived(config.seed, 0);
        let mut dims = vec![input_dim];
        dims.extend(std::iter::repeat_n(config.width, config.hidden_layers));
        dims.push(classes.len());
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in dims.windows(2) {
            let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
            weights.push(Matrix::uniform(w[1], w[0], limit, &mut rng));
            biases.push(vec![0.0; w[1]]);
        }
        Ok(FeedForwardClassifier {
            weights,
            biases,
            activation: config.activation,
            classes,
            config: config.clone(),
            train_trace: Vec::new(),
            validation_trace: Vec::new(),
            best_epoch: 0,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].cols()
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn hidden_layers(&self) -> usize {
        self.weights.len() - 1
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    fn forward(&self, x: &[f64]) -> Cache {
        let mut pre = Vec::with_capacity(self.hidden_layers());
        let mut post: Vec<Vec<f64>> = Vec::with_capacity(self.hidden_layers());
        for (w, b) in self.weights.iter().zip(&self.biases).take(self.hidden_layers()) {
            let a = w.affine(post.last().map_or(x, Vec::as_slice), b);
            post.push(a.iter().map(|&v| self.activation.apply(v)).collect());
            pre.push(a);
        }
        let logits = self
            .weights
            .last()
            .expect("output layer")
            .affine(post.last().map_or(x, Vec::as_slice), self.biases.last().expect("output layer"));
        Cache { pre, post, logits }
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(self.forward(x).logits)
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }

    /// Predicted class index (lowest index among ties) and probabilities.
    pub fn predict(&self, x: &[f64]) -> Result<(usize, Vec<f64>)> {
        let p = self.predict_proba(x)?;
        Ok((argmax(&p), p))
    }

    pub fn predict_all(&self, features: Features<'_>) -> Result<Vec<Vec<f64>>> {
        (0..features.len()).map(|i| self.predict_proba(&features.row(i))).collect()
    }

    /// Mean cross-entropy over a labelled set.
    pub fn cross_entropy(&self, data: &LabeledData<'_>) -> Result<f64> {
        let n = data.features.len();
        if n == 0 {
            return Err(Error::EmptyCorpus("cross-entropy of an empty set".into()));
        }
        let mut total = 0.0;
        for i in 0..n {
            let x = data.features.row(i);
            self.check_dim(&x)?;
            total -= log_softmax_at(&self.forward(&x).logits, data.labels[i]);
        }
        Ok(total / n as f64)
    }

    /// Propagates `d_logits` back through the network, optionally adding
    /// parameter gradients, and returns the gradient w.r.t. the input.
    fn backward(
        &self,
        x: &[f64],
        cache: &Cache,
        d_logits: Vec<f64>,
        mut grads: Option<&mut ClassifierGradients>,
        need_input: bool,
    ) -> Vec<f64> {
        let mut delta = d_logits;
        for l in (0..self.weights.len()).rev() {
            let input = if l == 0 { x } else { &cache.post[l - 1] };
            if let Some(g) = grads.as_deref_mut() {
                for (gb, &d) in g.biases[l].iter_mut().zip(&delta) {
                    *gb += d;
                }
                let nz: Vec<usize> = (0..input.len()).filter(|&i| input[i] != 0.0).collect();
                for (r, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = g.weights[l].row_mut(r);
                    for &i in &nz {
                        row[i] += d * input[i];
                    }
                }
            }
            if l == 0 && !need_input {
                return Vec::new();
            }
            let back = self.weights[l].transpose_mul(&delta);
            delta = if l == 0 {
                back
            } else {
                back.iter()
                    .zip(cache.pre[l - 1].iter().zip(&cache.post[l - 1]))
                    .map(|(&b, (&a, &h))| b * self.activation.derivative(a, h))
                    .collect()
            };
        }
        delta
    }

    fn zero_gradients(&self) -> ClassifierGradients {
        ClassifierGradients {
            weights: self.weights.iter().map(|w| Matrix::zeros(w.rows(), w.cols())).collect(),
            biases: self.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    /// Cross-entropy of one example and its exact parameter gradient.
    pub fn loss_and_gradients(&self, x: &[f64], label: usize) -> Result<(f64, ClassifierGradients)> {
        self.check_dim(x)?;
        self.check_class(label)?;
        let mut g = self.zero_gradients();
        let loss = self.accumulate(x, label, &mut g);
        Ok((loss, g))
    }

    fn accumulate(&self, x: &[f64], label: usize, g: &mut ClassifierGradients) -> f64 {
        let cache = self.forward(x);
        let mut d = softmax(&cache.logits);
        d[label] -= 1.0;
        let loss = -log_softmax_at(&cache.logits, label);
        self.backward(x, &cache, d, Some(g), false);
        loss
    }

    fn check_class(&self, k: usize) -> Result<()> {
        if k >= self.n_classes() {
            return Err(Error::invalid(format!(
                "class index {k} out of range for {} classes",
                self.n_classes()
            )));
        }
        Ok(())
    }

    /// `∂o_k/∂x` for one class.
    pub fn classifier_gradient(&self, x: &[f64], k: usize, mode: OutputMode) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        self.check_class(k)?;
        let cache = self.forward(x);
        Ok(self.backward(x, &cache, self.output_seed(&cache, k, mode), None, true))
    }

    /// `∂o/∂x` for every class: a `K × d` matrix.
    pub fn output_jacobian(&self, x: &[f64], mode: OutputMode) -> Result<Matrix> {
        self.check_dim(x)?;
        let cache = self.forward(x);
        let rows: Vec<Vec<f64>> = (0..self.n_classes())
            .map(|k| self.backward(x, &cache, self.output_seed(&cache, k, mode), None, true))
            .collect();
        Matrix::from_rows(&rows)
    }

    /// `∂o_k/∂logits`.
    fn output_seed(&self, cache: &Cache, k: usize, mode: OutputMode) -> Vec<f64> {
        let mut seed = vec![0.0; self.n_classes()];
        match mode {
            OutputMode::Logit => seed[k] = 1.0,
            OutputMode::Probability => {
                let p = softmax(&cache.logits);
                for (j, s) in seed.iter_mut().enumerate() {
                    *s = p[k] * (if j == k { 1.0 } else { 0.0 } - p[j]);
                }
            }
        }
        seed
    }

    /// The same model with class `perm[k]` of the result equal to class `k`
    /// of `self`.
    pub fn permute_classes(&self, perm: &[usize]) -> Result<Self> {
        let k = self.n_classes();
        let mut seen = vec![false; k];
        if perm.len() != k || perm.iter().any(|&p| p >= k || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::invalid("not a permutation of the classes"));
        }
        let mut out = self.clone();
        let last = self.weights.len() - 1;
        for (from, &to) in perm.iter().enumerate() {
            out.weights[last].row_mut(to).copy_from_slice(self.weights[last].row(from));
            out.biases[last][to] = self.biases[last][from];
            out.classes[to] = self.classes[from].clone();
        }
        Ok(out)
    }

    fn all_finite(&self) -> bool {
        self.weights.iter().all(Matrix::all_finite)
            && self.biases.iter().flatten().all(|v| v.is_finite())
    }
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn validate_data(data: &LabeledData<'_>, input_dim: usize, n_classes: usize, what: &str) -> Result<()> {
    if data.features.len() != data.labels.len() {
        return Err(Error::DimensionMismatch {
            expected: data.features.len(),
            actual: data.labels.len(),
        });
    }
    if data.features.is_empty() {
        return Err(Error::EmptyCorpus(format!("empty {what} set")));
    }
    for i in 0..data.features.len() {
        if data.features.row_dim(i) != input_dim {
            return Err(Error::DimensionMismatch {
                expected: input_dim,
                actual: data.features.row_dim(i),
            });
        }
    }
    if let Some(&bad) = data.labels.iter().find(|&&l| l >= n_classes) {
        return Err(Error::invalid(format!("{what} label index {bad} out of range")));
    }
    Ok(())
}

/// Trains a classifier. Early stopping monitors validation cross-entropy,
/// or training cross-entropy when no validation set is given.
pub fn train_classifier(
    train: &LabeledData<'_>,
    validation: Option<&LabeledData<'_>>,
    classes: &[String],
    config: &ClassifierConfig,
) -> Result<FeedForwardClassifier> {
    if train.features.is_empty() {
        return Err(Error::EmptyCorpus("empty training set".into()));
    }
    let model = FeedForwardClassifier::initialize(train.features.row_dim(0), classes.to_vec(), config)?;
    fit_classifier(model, train, validation)
}

/// Trains an already initialized model with the settings in its config.
pub fn fit_classifier(
    mut model: FeedForwardClassifier,
    train: &LabeledData<'_>,
    validation: Option<&LabeledData<'_>>,
) -> Result<FeedForwardClassifier> {
    let config = model.config.clone();
    let input_dim = model.input_dim();
    let n_classes = model.n_classes();
    validate_data(train, input_dim, n_classes, "training")?;
    if let Some(v) = validation {
        validate_data(v, input_dim, n_classes, "validation")?;
    }
    let distinct: BTreeSet<usize> = train.labels.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(Error::invalid("training labels contain a single class"));
    }
    let sizes: Vec<usize> = model
        .weights
        .iter()
        .map(|w| w.rows() * w.cols())
        .chain(model.biases.iter().map(Vec::len))
        .collect();
    let n_layers = model.weights.len();
    let mut opt = RmsProp::new(config.optimizer, &sizes);
    let mut rng = rng::derived(config.seed, 1);
    let mut order: Vec<usize> = (0..train.features.len()).collect();
    let mut grads = model.zero_gradients();
    let mut best: Option<(f64, Vec<Matrix>, Vec<Vec<f64>>)> = None;
    let mut since_best = 0;
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size.max(1)) {
            for w in &mut grads.weights {
                w.as_mut_slice().fill(0.0);
            }
            grads.biases.iter_mut().for_each(|b| b.fill(0.0));
            for &i in batch {
                total += model.accumulate(&train.features.row(i), train.labels[i], &mut grads);
            }
            let s = 1.0 / batch.len() as f64;
            for l in 0..n_layers {
                grads.weights[l].as_mut_slice().iter_mut().for_each(|g| *g *= s);
                grads.biases[l].iter_mut().for_each(|g| *g *= s);
                opt.step(l, model.weights[l].as_mut_slice(), grads.weights[l].as_slice());
                opt.step(n_layers + l, &mut model.biases[l], &grads.biases[l]);
            }
        }
        let train_loss = total / train.features.len() as f64;
        if !train_loss.is_finite() || !model.all_finite() {
            return Err(Error::NonFinite(format!("classifier training diverged in epoch {epoch}")));
        }
        model.train_trace.push(train_loss);
        let monitored = match validation {
            Some(v) => {
                let l = model.cross_entropy(v)?;
                model.validation_trace.push(l);
                l
            }
            None => train_loss,
        };
        if best.as_ref().is_none_or(|(b, _, _)| monitored < *b) {
            best = Some((monitored, model.weights.clone(), model.biases.clone()));
            model.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    if let Some((_, w, b)) = best {
        model.weights = w;
        model.biases = b;
    }
    Ok(model)
}

/// A dense representation of one patient.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseRepresentation {
    pub patient_id: String,
    pub values: Vec<f64>,
}

/// `[a, b]`: the coordinates of `a` followed by those of `b`. By
/// convention `a` is the paragraph vector and `b` the autoencoder output.
pub fn concat_representations(a: &DenseRepresentation, b: &DenseRepresentation) -> Result<DenseRepresentation> {
    if a.patient_id != b.patient_id {
        return Err(Error::invalid(format!(
            "cannot concatenate representations of {} and {}",
            a.patient_id, b.patient_id
        )));
    }
    let mut values = Vec::with_capacity(a.values.len() + b.values.len());
    values.extend_from_slice(&a.values);
    values.extend_from_slice(&b.values);
    Ok(DenseRepresentation {
        patient_id: a.patient_id.clone(),
        values,
    })
}

impl Persist for FeedForwardClassifier {
    const KIND: ModelKind = ModelKind::Classifier;

    fn write_payload(&self, w: &mut Writer) {
        let c = &self.config;
        w.usize(c.hidden_layers);
        w.usize(c.width);
        w.u8(c.activation.tag());
        w.usize(c.max_epochs);
        w.usize(c.patience);
        w.usize(c.batch_size);
        w.f64(c.optimizer.learning_rate);
        w.f64(c.optimizer.rho);
        w.f64(c.optimizer.epsilon);
        w.u64(c.seed);
        w.u32(self.classes.len() as u32);
        for class in &self.classes {
            w.str(class);
        }
        w.u32(self.weights.len() as u32);
        for m in &self.weights {
            w.usize(m.rows());
            w.usize(m.cols());
        }
        for (m, b) in self.weights.iter().zip(&self.biases) {
            w.f64s(m.as_slice());
            w.f64s(b);
        }
        w.f64s(&self.train_trace);
        w.f64s(&self.validation_trace);
        w.usize(self.best_epoch);
    }

    fn read_payload(r: &mut Reader<'_>) -> Result<Self> {
        let hidden_layers = r.usize()?;
        let width = r.usize()?;
        let tag = r.u8()?;
        let activation =
            Activation::from_tag(tag).ok_or_else(|| Error::Container(format!("unknown activation tag {tag}")))?;
        let config = ClassifierConfig {
            hidden_layers,
            width,
            activation,
            max_epochs: r.usize()?,
            patience: r.usize()?,
            batch_size: r.usize()?,
            optimizer: RmsPropConfig {
                learning_rate: r.f64()?,
                rho: r.f64()?,
                epsilon: r.f64()?,
            },
            seed: r.u64()?,
        };
        let n_classes = r.u32()? as usize;
        let classes = (0..n_classes).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
        let n_layers = r.u32()? as usize;
        if n_layers == 0 {
            return Err(Error::Container("classifier without layers".into()));
        }
        let dims = (0..n_layers)
            .map(|_| Ok((r.usize()?, r.usize()?)))
            .collect::<Result<Vec<_>>>()?;
        if dims.windows(2).any(|d| d[0].0 != d[1].1) || dims.last().map(|d| d.0) != Some(n_classes) {
            return Err(Error::Container("classifier layer dimensions do not chain".into()));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for &(rows, cols) in &dims {
            weights.push(Matrix::from_vec(rows, cols, r.f64s_exact(rows * cols)?)?);
            biases.push(r.f64s_exact(rows)?);
        }
        Ok(FeedForwardClassifier {
            weights,
            biases,
            activation,
            classes,
            config,
            train_trace: r.f64s()?,
            validation_trace: r.f64s()?,
            best_epoch: r.usize()?,
        })
    }
}

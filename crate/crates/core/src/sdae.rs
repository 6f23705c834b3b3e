//! Stacked denoising autoencoder.
//!
//! Each layer is an independent denoising autoencoder with a sigmoid
//! encoder and a linear decoder, trained with RMSProp to minimize the mean
//! squared error between its uncorrupted input and the reconstruction of a
//! dropout-corrupted copy. Layer `n` is trained on the clean
//! representations of layer `n − 1`; the last layer's representation is the
//! dense patient vector.

use std::borrow::Cow;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::container::{ModelKind, Persist, Reader, Writer};
use crate::corpus::SparseFeatureVector;
use crate::error::{Error, Result};
use crate::linalg::{sigmoid, Matrix};
use crate::optim::{RmsProp, RmsPropConfig};
use crate::rng;

/// Zeroes each nonzero coordinate independently with probability `p`.
/// Surviving values are not rescaled. Coordinates that are already zero
/// consume no randomness.
pub fn corrupt<R: Rng + ?Sized>(input: &[f64], p: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("corruption proportion {p} outside [0, 1]")));
    }
    Ok(input
        .iter()
        .map(|&v| {
            if v != 0.0 && p > 0.0 && rng.random_bool(p) {
                0.0
            } else {
                v
            }
        })
        .collect())
}

/// One autoencoder: `r = σ(W_enc·x + b_enc)`, `x̂ = W_dec·r + b_dec`.
/// Encoder and decoder weights are untied.
#[derive(Debug, Clone, PartialEq)]
pub struct DaeLayer {
    pub enc_w: Matrix,
    pub enc_b: Vec<f64>,
    pub dec_w: Matrix,
    pub dec_b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerOutput {
    pub representation: Vec<f64>,
    pub reconstruction: Vec<f64>,
}

/// Gradients of the per-sample loss, shaped like the layer parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients {
    pub enc_w: Matrix,
    pub enc_b: Vec<f64>,
    pub dec_w: Matrix,
    pub dec_b: Vec<f64>,
}

impl LayerGradients {
    fn zeros(d_in: usize, d_out: usize) -> Self {
        LayerGradients {
            enc_w: Matrix::zeros(d_out, d_in),
            enc_b: vec![0.0; d_out],
            dec_w: Matrix::zeros(d_in, d_out),
            dec_b: vec![0.0; d_in],
        }
    }

    fn clear(&mut self) {
        self.enc_w.as_mut_slice().fill(0.0);
        self.enc_b.fill(0.0);
        self.dec_w.as_mut_slice().fill(0.0);
        self.dec_b.fill(0.0);
    }

    fn scale(&mut self, s: f64) {
        for v in self
            .enc_w
            .as_mut_slice()
            .iter_mut()
            .chain(self.enc_b.iter_mut())
            .chain(self.dec_w.as_mut_slice())
            .chain(self.dec_b.iter_mut())
        {
            *v *= s;
        }
    }
}

impl DaeLayer {
    /// Weights uniform in `±1/√fan_in`, biases zero.
    pub fn new<R: Rng + ?Sized>(d_in: usize, d_out: usize, rng: &mut R) -> Self {
        DaeLayer {
            enc_w: Matrix::uniform(d_out, d_in, 1.0 / (d_in as f64).sqrt(), rng),
            enc_b: vec![0.0; d_out],
            dec_w: Matrix::uniform(d_in, d_out, 1.0 / (d_out as f64).sqrt(), rng),
            dec_b: vec![0.0; d_in],
        }
    }

    pub fn from_parts(enc_w: Matrix, enc_b: Vec<f64>, dec_w: Matrix, dec_b: Vec<f64>) -> Result<Self> {
        let (d_out, d_in) = (enc_w.rows(), enc_w.cols());
        let ok = enc_b.len() == d_out
            && dec_w.rows() == d_in
            && dec_w.cols() == d_out
            && dec_b.len() == d_in;
        if !ok {
            return Err(Error::invalid("inconsistent autoencoder layer dimensions"));
        }
        Ok(DaeLayer {
            enc_w,
            enc_b,
            dec_w,
            dec_b,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.enc_w.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.enc_w.rows()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn encode_unchecked(&self, x: &[f64]) -> Vec<f64> {
        self.enc_w
            .affine(x, &self.enc_b)
            .into_iter()
            .map(sigmoid)
            .collect()
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.encode_unchecked(x))
    }

    pub fn decode(&self, r: &[f64]) -> Result<Vec<f64>> {
        if r.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.output_dim(),
                actual: r.len(),
            });
        }
        Ok(self.dec_w.affine(r, &self.dec_b))
    }

    pub fn forward(&self, x: &[f64]) -> Result<LayerOutput> {
        let representation = self.encode(x)?;
        let reconstruction = self.decode(&representation)?;
        Ok(LayerOutput {
            representation,
            reconstruction,
        })
    }

    /// Mean squared error of reconstructing `target` from `input`.
    pub fn loss(&self, input: &[f64], target: &[f64]) -> Result<f64> {
        let out = self.forward(input)?;
        if target.len() != out.reconstruction.len() {
            return Err(Error::DimensionMismatch {
                expected: out.reconstruction.len(),
                actual: target.len(),
            });
        }
        let d = target.len() as f64;
        Ok(out
            .reconstruction
            .iter()
            .zip(target)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / d)
    }

    /// Adds the gradient of `loss(input, target)` into `grads` and returns
    /// the loss.
    fn accumulate_gradients(&self, input: &[f64], target: &[f64], grads: &mut LayerGradients) -> f64 {
        let d_in = self.input_dim();
        let r = self.encode_unchecked(input);
        let recon = self.dec_w.affine(&r, &self.dec_b);
        let scale = 2.0 / d_in as f64;
        let mut loss = 0.0;
        let mut d_recon = vec![0.0; d_in];
        for i in 0..d_in {
            let e = recon[i] - target[i];
            loss += e * e;
            d_recon[i] = scale * e;
        }
        for (i, &g) in d_recon.iter().enumerate() {
            grads.dec_b[i] += g;
            if g == 0.0 {
                continue;
            }
            for (gw, &rm) in grads.dec_w.row_mut(i).iter_mut().zip(&r) {
                *gw += g * rm;
            }
        }
        let d_r = self.dec_w.transpose_mul(&d_recon);
        let nonzero: Vec<usize> = (0..d_in).filter(|&i| input[i] != 0.0).collect();
        for (m, (&dr, &rm)) in d_r.iter().zip(&r).enumerate() {
            let d_pre = dr * rm * (1.0 - rm);
            grads.enc_b[m] += d_pre;
            let row = grads.enc_w.row_mut(m);
            for &i in &nonzero {
                row[i] += d_pre * input[i];
            }
        }
        loss / d_in as f64
    }

    /// Per-sample loss and its exact gradient.
    pub fn loss_and_gradients(&self, input: &[f64], target: &[f64]) -> Result<(f64, LayerGradients)> {
        self.check_input(input)?;
        self.check_input(target)?;
        let mut grads = LayerGradients::zeros(self.input_dim(), self.output_dim());
        let loss = self.accumulate_gradients(input, target, &mut grads);
        Ok((loss, grads))
    }

    fn all_finite(&self) -> bool {
        self.enc_w.all_finite()
            && self.dec_w.all_finite()
            && self.enc_b.iter().chain(&self.dec_b).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub hidden: usize,
    pub corruption: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdaeConfig {
    pub layers: Vec<LayerSpec>,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: RmsPropConfig,
    pub seed: u64,
}

impl SdaeConfig {
    pub fn single_layer(hidden: usize, corruption: f64) -> Self {
        SdaeConfig {
            layers: vec![LayerSpec { hidden, corruption }],
            ..SdaeConfig::default()
        }
    }
}

impl Default for SdaeConfig {
    fn default() -> Self {
        SdaeConfig {
            layers: vec![LayerSpec {
                hidden: 800,
                corruption: 0.05,
            }],
            epochs: 50,
            batch_size: 64,
            optimizer: RmsPropConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdaeModel {
    pub layers: Vec<DaeLayer>,
    pub corruption: Vec<f64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: RmsPropConfig,
    /// Mean training loss per epoch, per layer.
    pub loss_trace: Vec<Vec<f64>>,
    pub vocab_fingerprint: u64,
}

/// Layer inputs: sparse TF-IDF rows for the first layer, dense
/// representations above it.
enum LayerInputs<'a> {
    Sparse(&'a [SparseFeatureVector]),
    Dense(Vec<Vec<f64>>),
}

impl LayerInputs<'_> {
    fn len(&self) -> usize {
        match self {
            LayerInputs::Sparse(s) => s.len(),
            LayerInputs::Dense(d) => d.len(),
        }
    }

    fn get(&self, i: usize) -> Cow<'_, [f64]> {
        match self {
            LayerInputs::Sparse(s) => Cow::Owned(s[i].to_dense()),
            LayerInputs::Dense(d) => Cow::Borrowed(&d[i]),
        }
    }
}

fn train_layer(
    layer: &mut DaeLayer,
    inputs: &LayerInputs<'_>,
    corruption: f64,
    config: &SdaeConfig,
    layer_index: usize,
) -> Result<Vec<f64>> {
    let mut rng = rng::derived(config.seed, 1_000 + layer_index as u64);
    let d_in = layer.input_dim();
    let d_out = layer.output_dim();
    let mut opt = RmsProp::new(config.optimizer, &[d_out * d_in, d_out, d_in * d_out, d_in]);
    let mut grads = LayerGradients::zeros(d_in, d_out);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let batch_size = config.batch_size.max(1);
    let mut trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(batch_size) {
            grads.clear();
            let mut batch_loss = 0.0;
            for &i in batch {
                let clean = inputs.get(i);
                let noisy = corrupt(&clean, corruption, &mut rng)?;
                batch_loss += layer.accumulate_gradients(&noisy, &clean, &mut grads);
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "layer {} epoch {}: reconstruction loss is {batch_loss}",
                    layer_index + 1,
                    epoch + 1
                )));
            }
            total += batch_loss;
            grads.scale(1.0 / batch.len() as f64);
            opt.step(0, layer.enc_w.as_mut_slice(), grads.enc_w.as_slice());
            opt.step(1, &mut layer.enc_b, &grads.enc_b);
            opt.step(2, layer.dec_w.as_mut_slice(), grads.dec_w.as_slice());
            opt.step(3, &mut layer.dec_b, &grads.dec_b);
        }
        if !layer.all_finite() {
            return Err(Error::NonFinite(format!(
                "layer {} epoch {}: non-finite parameters",
                layer_index + 1,
                epoch + 1
            )));
        }
        trace.push(total / inputs.len() as f64);
    }
    Ok(trace)
}

/// Layerwise pretraining. Layers are trained one after another; training
/// layer `n` never touches the parameters of earlier layers.
pub fn pretrain_stack(config: &SdaeConfig, inputs: &[SparseFeatureVector]) -> Result<SdaeModel> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::EmptyCorpus("no training inputs for the autoencoder".into()))?;
    if config.layers.is_empty() {
        return Err(Error::invalid("autoencoder needs at least one layer"));
    }
    let d_in = first.dim();
    let fingerprint = first.vocab_fingerprint();
    if let Some(bad) = inputs.iter().find(|x| x.dim() != d_in) {
        return Err(Error::DimensionMismatch {
            expected: d_in,
            actual: bad.dim(),
        });
    }
    if inputs.iter().any(|x| x.vocab_fingerprint() != fingerprint) {
        return Err(Error::VocabularyMismatch);
    }
    for spec in &config.layers {
        if !(0.0..=1.0).contains(&spec.corruption) || spec.hidden == 0 {
            return Err(Error::invalid(format!("invalid layer spec {spec:?}")));
        }
    }

    let mut init_rng = rng::derived(config.seed, 0);
    let mut layers = Vec::with_capacity(config.layers.len());
    let mut traces = Vec::with_capacity(config.layers.len());
    let mut current = LayerInputs::Sparse(inputs);
    let mut width = d_in;
    for (n, spec) in config.layers.iter().enumerate() {
        let mut layer = DaeLayer::new(width, spec.hidden, &mut init_rng);
        traces.push(train_layer(&mut layer, &current, spec.corruption, config, n)?);
        let next: Vec<Vec<f64>> = (0..current.len())
            .map(|i| layer.encode_unchecked(&current.get(i)))
            .collect();
        width = spec.hidden;
        layers.push(layer);
        current = LayerInputs::Dense(next);
    }
    Ok(SdaeModel {
        layers,
        corruption: config.layers.iter().map(|s| s.corruption).collect(),
        epochs: config.epochs,
        batch_size: config.batch_size,
        seed: config.seed,
        optimizer: config.optimizer,
        loss_trace: traces,
        vocab_fingerprint: fingerprint,
    })
}

impl SdaeModel {
    /// Untrained stack with the same initialization `pretrain_stack` uses.
    pub fn initialized(config: &SdaeConfig, input_dim: usize, vocab_fingerprint: u64) -> Self {
        let mut init_rng = rng::derived(config.seed, 0);
        let mut width = input_dim;
        let layers = config
            .layers
            .iter()
            .map(|s| {
                let l = DaeLayer::new(width, s.hidden, &mut init_rng);
                width = s.hidden;
                l
            })
            .collect();
        SdaeModel {
            layers,
            corruption: config.layers.iter().map(|s| s.corruption).collect(),
            epochs: 0,
            batch_size: config.batch_size,
            seed: config.seed,
            optimizer: config.optimizer,
            loss_trace: vec![Vec::new(); config.layers.len()],
            vocab_fingerprint,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").output_dim()
    }

    /// Deterministic, corruption-free encoding of a dense input.
    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        Ok(self.encode_layers(x).pop().expect("at least one layer"))
    }

    /// Activations of every layer, first to last.
    fn encode_layers(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let next = layer.encode_unchecked(acts.last().map_or(x, Vec::as_slice));
            acts.push(next);
        }
        acts
    }

    /// Dense representation of a TF-IDF vector built over the model's
    /// vocabulary.
    pub fn represent(&self, input: &SparseFeatureVector) -> Result<Vec<f64>> {
        if input.vocab_fingerprint() != self.vocab_fingerprint {
            return Err(Error::VocabularyMismatch);
        }
        self.encode(&input.to_dense())
    }

    /// `∂R/∂z` as a `d_R × d_z` matrix, or `d_R × |features|` when a subset
    /// of input features is given (columns in the subset's order).
    pub fn encoder_jacobian(&self, x: &[f64], features: Option<&[usize]>) -> Result<Matrix> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        let all: Vec<usize>;
        let cols = match features {
            Some(f) => {
                if let Some(&bad) = f.iter().find(|&&i| i >= x.len()) {
                    return Err(Error::DimensionMismatch {
                        expected: x.len(),
                        actual: bad + 1,
                    });
                }
                f
            }
            None => {
                all = (0..x.len()).collect();
                &all
            }
        };
        let acts = self.encode_layers(x);
        // first layer: diag(r(1−r)) · W[:, cols]
        let r1 = &acts[0];
        let w1 = &self.layers[0].enc_w;
        let mut jac = Matrix::zeros(r1.len(), cols.len());
        for m in 0..r1.len() {
            let s = r1[m] * (1.0 - r1[m]);
            let row = w1.row(m);
            for (c, &i) in cols.iter().enumerate() {
                jac.set(m, c, s * row[i]);
            }
        }
        for (layer, r) in self.layers.iter().zip(&acts).skip(1) {
            let mut next = Matrix::zeros(r.len(), cols.len());
            for m in 0..r.len() {
                let s = r[m] * (1.0 - r[m]);
                let w = layer.enc_w.row(m);
                let out = next.row_mut(m);
                for (k, &wk) in w.iter().enumerate() {
                    if wk == 0.0 {
                        continue;
                    }
                    for (o, &j) in out.iter_mut().zip(jac.row(k)) {
                        *o += wk * j;
                    }
                }
                out.iter_mut().for_each(|o| *o *= s);
            }
            jac = next;
        }
        Ok(jac)
    }

    /// `vᵀ · ∂R/∂z` for a vector `v` over representation units: the
    /// gradient of `v · R(z)` with respect to the input.
    pub fn encoder_vjp(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        if v.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.output_dim(),
                actual: v.len(),
            });
        }
        let acts = self.encode_layers(x);
        let mut grad = v.to_vec();
        for (layer, r) in self.layers.iter().zip(&acts).rev() {
            let delta: Vec<f64> = grad
                .iter()
                .zip(r)
                .map(|(g, &rm)| g * rm * (1.0 - rm))
                .collect();
            grad = layer.enc_w.transpose_mul(&delta);
        }
        Ok(grad)
    }
}

impl Persist for SdaeModel {
    const KIND: ModelKind = ModelKind::Sdae;

    fn write_payload(&self, w: &mut Writer) {
        w.u64(self.vocab_fingerprint);
        w.u32(self.layers.len() as u32);
        for (layer, &c) in self.layers.iter().zip(&self.corruption) {
            w.usize(layer.input_dim());
            w.usize(layer.output_dim());
            w.f64(c);
        }
        for layer in &self.layers {
            w.f64s(layer.enc_w.as_slice());
            w.f64s(&layer.enc_b);
            w.f64s(layer.dec_w.as_slice());
            w.f64s(&layer.dec_b);
        }
        w.usize(self.epochs);
        w.usize(self.batch_size);
        w.u64(self.seed);
        w.f64(self.optimizer.learning_rate);
        w.f64(self.optimizer.rho);
        w.f64(self.optimizer.epsilon);
        for trace in &self.loss_trace {
            w.f64s(trace);
        }
    }

    fn read_payload(r: &mut Reader<'_>) -> Result<Self> {
        let vocab_fingerprint = r.u64()?;
        let n_layers = r.u32()? as usize;
        if n_layers == 0 {
            return Err(Error::Container("autoencoder with zero layers".into()));
        }
        let mut dims = Vec::with_capacity(n_layers);
        let mut corruption = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            dims.push((r.usize()?, r.usize()?));
            corruption.push(r.f64()?);
        }
        if dims.windows(2).any(|w| w[0].1 != w[1].0) {
            return Err(Error::Container("layer dimensions do not chain".into()));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for &(d_in, d_out) in &dims {
            let enc_w = Matrix::from_vec(d_out, d_in, r.f64s_exact(d_out * d_in)?)?;
            let enc_b = r.f64s_exact(d_out)?;
            let dec_w = Matrix::from_vec(d_in, d_out, r.f64s_exact(d_in * d_out)?)?;
            let dec_b = r.f64s_exact(d_in)?;
            layers.push(DaeLayer::from_parts(enc_w, enc_b, dec_w, dec_b)?);
        }
        let epochs = r.usize()?;
        let batch_size = r.usize()?;
        let seed = r.u64()?;
        let optimizer = RmsPropConfig {
            learning_rate: r.f64()?,
            rho: r.f64()?,
            epsilon: r.f64()?,
        };
        let loss_trace = (0..n_layers).map(|_| r.f64s()).collect::<Result<_>>()?;
        Ok(SdaeModel {
            layers,
            corruption,
            epochs,
            batch_size,
            seed,
            optimizer,
            loss_trace,
            vocab_fingerprint,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_layer(d_in: usize, d_out: usize, seed: u64) -> DaeLayer {
        let mut rng = rng::seeded(seed);
        let mut l = DaeLayer::new(d_in, d_out, &mut rng);
        for b in l.enc_b.iter_mut().chain(l.dec_b.iter_mut()) {
            *b = rng.random_range(-0.5..0.5);
        }
        l
    }

    fn random_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng::seeded(seed);
        (0..n)
            .map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random_range(-1.0..1.0) })
            .collect()
    }

    #[test]
    fn corrupt_extremes() {
        let x = vec![1.0, 2.0, -3.0];
        let mut rng = rng::seeded(1);
        assert_eq!(corrupt(&x, 0.0, &mut rng).unwrap(), x);
        assert_eq!(corrupt(&x, 1.0, &mut rng).unwrap(), vec![0.0; 3]);
        assert!(corrupt(&x, 1.5, &mut rng).is_err());
        assert!(corrupt(&x, -0.1, &mut rng).is_err());
    }

    #[test]
    fn corrupt_rate_concentrates() {
        let x = vec![1.0; 10_000];
        let mut rng = rng::seeded(42);
        let y = corrupt(&x, 0.3, &mut rng).unwrap();
        let zeroed = y.iter().filter(|&&v| v == 0.0).count() as f64 / 10_000.0;
        assert!((zeroed - 0.3).abs() < 0.02, "{zeroed}");
        assert!(y.iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn zero_encoder_gives_half() {
        let mut l = random_layer(4, 3, 1);
        l.enc_w = Matrix::zeros(3, 4);
        l.enc_b = vec![0.0; 3];
        let out = l.forward(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(out.representation, vec![0.5; 3]);
    }

    #[test]
    fn zero_decoder_gives_bias() {
        let mut l = random_layer(4, 3, 1);
        l.dec_w = Matrix::zeros(4, 3);
        l.dec_b = vec![0.1, 0.2, 0.3, 0.4];
        for x in [[1.0, 0.0, 0.0, 2.0], [0.0; 4]] {
            assert_eq!(l.forward(&x).unwrap().reconstruction, l.dec_b);
        }
    }

    #[test]
    fn forward_matches_straight_line_arithmetic() {
        let l = random_layer(7, 4, 3);
        let x = random_vec(7, 4);
        let out = l.forward(&x).unwrap();
        for m in 0..4 {
            let mut pre = l.enc_b[m];
            for i in 0..7 {
                pre += l.enc_w.get(m, i) * x[i];
            }
            let r = 1.0 / (1.0 + (-pre).exp());
            assert!((out.representation[m] - r).abs() < 1e-12);
        }
        for i in 0..7 {
            let mut v = l.dec_b[i];
            for m in 0..4 {
                v += l.dec_w.get(i, m) * out.representation[m];
            }
            assert!((out.reconstruction[i] - v).abs() < 1e-12);
        }
        assert!(out.representation.iter().all(|&r| r > 0.0 && r < 1.0));
    }

    #[test]
    fn dimension_mismatch() {
        let l = random_layer(5, 2, 0);
        assert!(matches!(l.forward(&[1.0; 4]), Err(Error::DimensionMismatch { .. })));
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }

    #[test]
    fn layer_gradients_match_finite_differences() {
        for seed in 0..5 {
            let l = random_layer(6, 4, seed);
            let input = random_vec(6, seed + 100);
            let target = random_vec(6, seed + 200);
            let (_, g) = l.loss_and_gradients(&input, &target).unwrap();
            let h = 1e-5;
            let check = |perturb: &dyn Fn(&mut DaeLayer, f64), analytic: f64| {
                let mut plus = l.clone();
                perturb(&mut plus, h);
                let mut minus = l.clone();
                perturb(&mut minus, -h);
                let fd = (plus.loss(&input, &target).unwrap() - minus.loss(&input, &target).unwrap()) / (2.0 * h);
                assert!(rel_err(fd, analytic) < 1e-4, "fd {fd} vs {analytic}");
            };
            for m in 0..4 {
                for i in 0..6 {
                    check(&|l, d| l.enc_w.set(m, i, l.enc_w.get(m, i) + d), g.enc_w.get(m, i));
                    check(&|l, d| l.dec_w.set(i, m, l.dec_w.get(i, m) + d), g.dec_w.get(i, m));
                }
                check(&|l, d| l.enc_b[m] += d, g.enc_b[m]);
            }
            for i in 0..6 {
                check(&|l, d| l.dec_b[i] += d, g.dec_b[i]);
            }
        }
    }

    fn random_model(dims: &[usize], seed: u64) -> SdaeModel {
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(k, w)| random_layer(w[0], w[1], seed * 31 + k as u64))
            .collect::<Vec<_>>();
        SdaeModel {
            corruption: vec![0.1; layers.len()],
            layers,
            epochs: 0,
            batch_size: 8,
            seed,
            optimizer: RmsPropConfig::default(),
            loss_trace: vec![Vec::new(); dims.len() - 1],
            vocab_fingerprint: 7,
        }
    }

    #[test]
    fn single_layer_jacobian_identity() {
        let model = random_model(&[5, 3], 2);
        let x = random_vec(5, 9);
        let r = model.encode(&x).unwrap();
        let j = model.encoder_jacobian(&x, None).unwrap();
        for m in 0..3 {
            for i in 0..5 {
                let expected = r[m] * (1.0 - r[m]) * model.layers[0].enc_w.get(m, i);
                assert!((j.get(m, i) - expected).abs() < 1e-15);
            }
        }
        let sub = model.encoder_jacobian(&x, Some(&[4, 1])).unwrap();
        assert_eq!(sub.cols(), 2);
        assert_eq!(sub.get(2, 0), j.get(2, 4));
        assert_eq!(sub.get(1, 1), j.get(1, 1));
    }

    #[test]
    fn zero_weights_zero_jacobian() {
        let mut model = random_model(&[4, 3], 1);
        model.layers[0].enc_w = Matrix::zeros(3, 4);
        let j = model.encoder_jacobian(&[1.0, 0.0, 2.0, 3.0], None).unwrap();
        assert!(j.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stacked_jacobian_matches_finite_differences() {
        for seed in 0..5 {
            let model = random_model(&[6, 5, 3], seed);
            let x = random_vec(6, seed + 50);
            let j = model.encoder_jacobian(&x, None).unwrap();
            let h = 1e-5;
            for i in 0..6 {
                let mut xp = x.clone();
                xp[i] += h;
                let mut xm = x.clone();
                xm[i] -= h;
                let (rp, rm) = (model.encode(&xp).unwrap(), model.encode(&xm).unwrap());
                for m in 0..3 {
                    let fd = (rp[m] - rm[m]) / (2.0 * h);
                    assert!(rel_err(fd, j.get(m, i)) < 1e-4);
                }
            }
            // vector-Jacobian product agrees with the explicit matrix
            let v = [0.3, -1.2, 0.7];
            let vjp = model.encoder_vjp(&x, &v).unwrap();
            for i in 0..6 {
                let expected: f64 = (0..3).map(|m| v[m] * j.get(m, i)).sum();
                assert!((vjp[i] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn encode_is_composition_of_layers() {
        let model = random_model(&[6, 4, 2], 3);
        let x = random_vec(6, 1);
        let r1 = model.layers[0].forward(&x).unwrap().representation;
        let r2 = model.layers[1].forward(&r1).unwrap().representation;
        let r = model.encode(&x).unwrap();
        for (a, b) in r.iter().zip(&r2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn persistence_roundtrip_is_bit_exact() {
        let mut model = random_model(&[6, 4, 2], 5);
        model.loss_trace = vec![vec![0.5, 0.25], vec![0.125]];
        let bytes = model.to_bytes();
        let back = SdaeModel::from_bytes(&bytes).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.to_bytes(), bytes);
        for cut in [3, 10, bytes.len() / 2, bytes.len() - 1] {
            assert!(SdaeModel::from_bytes(&bytes[..cut]).is_err());
        }
        let mut wrong_version = bytes.clone();
        wrong_version[4] = 9;
        assert!(matches!(SdaeModel::from_bytes(&wrong_version), Err(Error::Version { .. })));
    }
}

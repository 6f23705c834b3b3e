//! Randomized hyperparameter search over classifier architectures.

use rand::seq::IndexedRandom;
use rand::Rng;

use super::{train_classifier, Activation, ClassifierConfig, FeedForwardClassifier, LabeledData};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct HyperparameterSpace {
    pub min_layers: usize,
    pub max_layers: usize,
    pub min_width: usize,
    pub max_width: usize,
    pub width_step: usize,
    pub activations: Vec<Activation>,
    pub samples: usize,
    pub seed: u64,
}

impl Default for HyperparameterSpace {
    fn default() -> Self {
        HyperparameterSpace {
            min_layers: 0,
            max_layers: 10,
            min_width: 50,
            max_width: 1000,
            width_step: 10,
            activations: Activation::ALL.to_vec(),
            samples: 20,
            seed: 0,
        }
    }
}

impl HyperparameterSpace {
    fn validate(&self) -> Result<()> {
        if self.min_layers > self.max_layers
            || self.min_width > self.max_width
            || self.min_width == 0
            || self.width_step == 0
            || self.activations.is_empty()
        {
            return Err(Error::invalid(format!("empty hyperparameter space {self:?}")));
        }
        if self.samples == 0 {
            return Err(Error::invalid("random search needs at least one sample"));
        }
        Ok(())
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize, Activation) {
        let layers = rng.random_range(self.min_layers..=self.max_layers);
        let steps = (self.max_width - self.min_width) / self.width_step;
        let width = self.min_width + self.width_step * rng.random_range(0..=steps);
        let activation = *self.activations.choose(rng).expect("non-empty");
        (layers, width, activation)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchCandidate {
    pub hidden_layers: usize,
    pub width: usize,
    pub activation: Activation,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub best_config: ClassifierConfig,
    pub best_model: FeedForwardClassifier,
    pub best_index: usize,
    pub candidates: Vec<SearchCandidate>,
}

impl SearchResult {
    pub fn best_score(&self) -> f64 {
        self.candidates[self.best_index].score
    }
}

/// Samples `space.samples` architectures, trains each with `base`'s seed
/// and training settings, and keeps the one with the highest validation
/// metric (first among ties). `metric` receives validation labels and
/// predicted probabilities; a NaN score never wins.
pub fn random_search<F>(
    space: &HyperparameterSpace,
    base: &ClassifierConfig,
    train: &LabeledData<'_>,
    validation: &LabeledData<'_>,
    classes: &[String],
    metric: F,
) -> Result<SearchResult>
where
    F: Fn(&[usize], &[Vec<f64>]) -> f64,
{
    space.validate()?;
    let mut rng = rng::seeded(space.seed);
    let mut candidates = Vec::with_capacity(space.samples);
    let mut best: Option<(usize, ClassifierConfig, FeedForwardClassifier)> = None;
    for i in 0..space.samples {
        let (hidden_layers, width, activation) = space.sample(&mut rng);
        let config = ClassifierConfig {
            hidden_layers,
            width,
            activation,
            ..base.clone()
        };
        let model = train_classifier(train, Some(validation), classes, &config)?;
        let probs = model.predict_all(validation.features)?;
        let score = metric(validation.labels, &probs);
        candidates.push(SearchCandidate {
            hidden_layers,
            width,
            activation,
            score,
        });
        let better = match &best {
            None => true,
            Some((b, _, _)) => score > candidates[*b].score || (candidates[*b].score.is_nan() && !score.is_nan()),
        };
        if better {
            best = Some((i, config, model));
        }
    }
    let (best_index, best_config, best_model) = best.expect("at least one sample");
    Ok(SearchResult {
        best_config,
        best_model,
        best_index,
        candidates,
    })
}

#[cfg(test)]
mod tests {
    use super::super::Features;
    use super::*;

    fn data() -> (Vec<Vec<f64>>, Vec<usize>) {
        let xs: Vec<Vec<f64>> = (0..40).map(|i| vec![(i % 2) as f64 * 2.0 - 1.0 + 0.01 * i as f64, 1.0]).collect();
        let ys = (0..40).map(|i| i % 2).collect();
        (xs, ys)
    }

    fn accuracy(labels: &[usize], probs: &[Vec<f64>]) -> f64 {
        let ok = labels.iter().zip(probs).filter(|(&y, p)| super::super::argmax(p) == y).count();
        ok as f64 / labels.len() as f64
    }

    fn base() -> ClassifierConfig {
        ClassifierConfig { max_epochs: 5, ..ClassifierConfig::default() }
    }

    fn small_space(samples: usize) -> HyperparameterSpace {
        HyperparameterSpace { max_layers: 2, min_width: 4, max_width: 12, width_step: 4, samples, seed: 3, ..Default::default() }
    }

    #[test]
    fn single_sample_is_returned() {
        let (xs, ys) = data();
        let d = LabeledData { features: Features::Dense(&xs), labels: &ys };
        let classes = vec!["0".to_string(), "1".to_string()];
        let r = random_search(&small_space(1), &base(), &d, &d, &classes, accuracy).unwrap();
        assert_eq!(r.candidates.len(), 1);
        assert_eq!(r.best_index, 0);
        assert_eq!(r.best_config.hidden_layers, r.candidates[0].hidden_layers);
    }

    #[test]
    fn one_point_space() {
        let (xs, ys) = data();
        let d = LabeledData { features: Features::Dense(&xs), labels: &ys };
        let classes = vec!["0".to_string(), "1".to_string()];
        let space = HyperparameterSpace {
            min_layers: 1,
            max_layers: 1,
            min_width: 6,
            max_width: 6,
            width_step: 10,
            activations: vec![Activation::Tanh],
            samples: 3,
            seed: 0,
        };
        let r = random_search(&space, &base(), &d, &d, &classes, accuracy).unwrap();
        assert_eq!((r.best_config.hidden_layers, r.best_config.width, r.best_config.activation), (1, 6, Activation::Tanh));
    }

    #[test]
    fn best_score_is_maximum_of_log() {
        let (xs, ys) = data();
        let d = LabeledData { features: Features::Dense(&xs), labels: &ys };
        let classes = vec!["0".to_string(), "1".to_string()];
        let r = random_search(&small_space(5), &base(), &d, &d, &classes, accuracy).unwrap();
        let max = r.candidates.iter().map(|c| c.score).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(r.best_score(), max);
        let again = random_search(&small_space(5), &base(), &d, &d, &classes, accuracy).unwrap();
        assert_eq!(again.candidates, r.candidates);
    }

    #[test]
    fn default_space_stays_in_bounds() {
        let space = HyperparameterSpace::default();
        let mut rng = rng::seeded(1);
        for _ in 0..500 {
            let (l, w, _) = space.sample(&mut rng);
            assert!(l <= 10 && (50..=1000).contains(&w) && w % 10 == 0);
        }
        assert!(HyperparameterSpace { samples: 0, ..Default::default() }.validate().is_err());
    }
}

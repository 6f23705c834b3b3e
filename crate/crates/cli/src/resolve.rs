//! Turns configuration keys into model configurations. Every resolved value
//! is also returned as a `(key, value)` pair for the manifest.

use std::fmt;
use std::str::FromStr;

use repvec_core::classifier::{Activation, ClassifierConfig, HyperparameterSpace};
use repvec_core::doc2vec::Doc2VecConfig;
use repvec_core::optim::RmsPropConfig;
use repvec_core::presets;
use repvec_core::sdae::{LayerSpec, SdaeConfig};

use crate::config::Config;
use crate::error::{CliError, Result};

pub type Echo = Vec<(String, String)>;

fn echo(pairs: &mut Echo, key: &str, value: impl fmt::Display) {
    pairs.push((key.to_owned(), value.to_string()));
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureSet {
    Bow,
    Bocui,
}

impl FeatureSet {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSet::Bow => "bow",
            FeatureSet::Bocui => "bocui",
        }
    }
}

impl FromStr for FeatureSet {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "bow" => Ok(FeatureSet::Bow),
            "bocui" => Ok(FeatureSet::Bocui),
            _ => Err(format!("unknown feature set {s:?} (expected bow or bocui)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    Sparse,
    Sdae,
    Doc2vec,
    Ensemble,
}

impl FromStr for Representation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sparse" => Ok(Representation::Sparse),
            "sdae" => Ok(Representation::Sdae),
            "doc2vec" => Ok(Representation::Doc2vec),
            "ensemble" => Ok(Representation::Ensemble),
            _ => Err(format!("unknown representation {s:?} (expected sparse, sdae, doc2vec or ensemble)")),
        }
    }
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Representation::Sparse => "sparse",
            Representation::Sdae => "sdae",
            Representation::Doc2vec => "doc2vec",
            Representation::Ensemble => "ensemble",
        })
    }
}

/// A representation over a feature set, e.g. `sdae-bow`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InputKind {
    pub representation: Representation,
    pub feature_set: FeatureSet,
}

impl InputKind {
    pub fn new(representation: Representation, feature_set: FeatureSet) -> Result<Self> {
        if matches!(representation, Representation::Doc2vec | Representation::Ensemble)
            && feature_set == FeatureSet::Bocui
        {
            return Err(CliError::config(format!(
                "representation {representation} is only defined over the bow feature set"
            )));
        }
        Ok(InputKind {
            representation,
            feature_set,
        })
    }

    pub fn tag(&self) -> String {
        let fs = self.feature_set.as_str();
        match self.representation {
            Representation::Sparse => fs.to_owned(),
            Representation::Sdae => format!("sdae-{fs}"),
            Representation::Doc2vec => "doc2vec".to_owned(),
            Representation::Ensemble => "doc2vec+sdae-bow".to_owned(),
        }
    }
}

pub fn feature_set(cfg: &Config) -> Result<FeatureSet> {
    cfg.parse_or("feature_set", FeatureSet::Bow)
}

pub fn input_kind(cfg: &Config) -> Result<InputKind> {
    InputKind::new(cfg.parse_or("representation", Representation::Sparse)?, feature_set(cfg)?)
}

fn optimizer(cfg: &Config, key: &str) -> Result<RmsPropConfig> {
    Ok(RmsPropConfig {
        learning_rate: cfg.parse_or(key, RmsPropConfig::default().learning_rate)?,
        ..RmsPropConfig::default()
    })
}

fn join<T: fmt::Display>(values: &[T]) -> String {
    values.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

/// Autoencoder settings. Without explicit `sdae.layers` the preset for the
/// feature set (or `sdae.preset`) supplies layer sizes and corruption.
pub fn sdae_config(cfg: &Config, fs: FeatureSet, seed: u64) -> Result<(SdaeConfig, Echo)> {
    let mut out = Echo::new();
    let base = SdaeConfig::default();
    let preset_name = cfg.get("sdae.preset").unwrap_or(fs.as_str());
    let mut layers = match preset_name {
        "none" => Vec::new(),
        name => {
            let p = presets::sdae_preset(name)
                .ok_or_else(|| CliError::config(format!("unknown autoencoder preset {name:?}")))?;
            echo(&mut out, "sdae.preset", name);
            p.config(seed).layers
        }
    };
    if let Some(sizes) = cfg.list::<usize>("sdae.layers")? {
        let corruption = cfg
            .list::<f64>("sdae.corruption")?
            .ok_or_else(|| CliError::config("sdae.layers needs sdae.corruption"))?;
        let corruption = match corruption.len() {
            1 => vec![corruption[0]; sizes.len()],
            n if n == sizes.len() => corruption,
            _ => return Err(CliError::config("sdae.corruption needs one value or one per layer")),
        };
        layers = sizes
            .into_iter()
            .zip(corruption)
            .map(|(hidden, corruption)| LayerSpec { hidden, corruption })
            .collect();
    }
    if layers.is_empty() {
        return Err(CliError::config("autoencoder has no layers: set sdae.layers or a preset"));
    }
    let config = SdaeConfig {
        layers,
        epochs: cfg.parse_or("sdae.epochs", base.epochs)?,
        batch_size: cfg.parse_or("sdae.batch_size", base.batch_size)?,
        optimizer: optimizer(cfg, "sdae.learning_rate")?,
        seed,
    };
    echo(&mut out, "sdae.layers", join(&config.layers.iter().map(|l| l.hidden).collect::<Vec<_>>()));
    echo(&mut out, "sdae.corruption", join(&config.layers.iter().map(|l| l.corruption).collect::<Vec<_>>()));
    echo(&mut out, "sdae.epochs", config.epochs);
    echo(&mut out, "sdae.batch_size", config.batch_size);
    echo(&mut out, "sdae.learning_rate", config.optimizer.learning_rate);
    Ok((config, out))
}

pub fn doc2vec_config(cfg: &Config, seed: u64) -> Result<(Doc2VecConfig, Echo)> {
    let d = Doc2VecConfig::default();
    let config = Doc2VecConfig {
        dim: cfg.parse_or("doc2vec.dim", d.dim)?,
        window: cfg.parse_or("doc2vec.window", d.window)?,
        min_count: cfg.parse_or("doc2vec.min_count", d.min_count)?,
        negatives: cfg.parse_or("doc2vec.negatives", d.negatives)?,
        epochs: cfg.parse_or("doc2vec.epochs", d.epochs)?,
        start_alpha: cfg.parse_or("doc2vec.start_alpha", d.start_alpha)?,
        end_alpha: cfg.parse_or("doc2vec.end_alpha", d.end_alpha)?,
        seed,
        ..d
    };
    let mut out = Echo::new();
    echo(&mut out, "doc2vec.dim", config.dim);
    echo(&mut out, "doc2vec.window", config.window);
    echo(&mut out, "doc2vec.min_count", config.min_count);
    echo(&mut out, "doc2vec.negatives", config.negatives);
    echo(&mut out, "doc2vec.epochs", config.epochs);
    echo(&mut out, "doc2vec.start_alpha", config.start_alpha);
    echo(&mut out, "doc2vec.end_alpha", config.end_alpha);
    Ok((config, out))
}

/// Classifier settings: defaults, then the `classifier.preset` row for this
/// input (if set), then explicit keys.
pub fn classifier_config(cfg: &Config, kind: &InputKind, seed: u64) -> Result<(ClassifierConfig, Echo)> {
    let mut out = Echo::new();
    let mut config = ClassifierConfig {
        seed,
        ..ClassifierConfig::default()
    };
    if let Some(task) = cfg.get("classifier.preset") {
        let tag = kind.tag();
        let row = presets::classifier_preset(task, &tag)
            .ok_or_else(|| CliError::config(format!("no classifier preset for task {task:?} and input {tag:?}")))?;
        echo(&mut out, "classifier.preset", format!("{task}/{tag}"));
        config = row.config(seed);
    }
    config.hidden_layers = cfg.parse_or("classifier.hidden_layers", config.hidden_layers)?;
    config.width = cfg.parse_or("classifier.width", config.width)?;
    config.activation = cfg.parse_or("classifier.activation", config.activation)?;
    config.max_epochs = cfg.parse_or("classifier.max_epochs", config.max_epochs)?;
    config.patience = cfg.parse_or("classifier.patience", config.patience)?;
    config.batch_size = cfg.parse_or("classifier.batch_size", config.batch_size)?;
    config.optimizer = optimizer(cfg, "classifier.learning_rate")?;
    out.extend(classifier_echo(&config));
    Ok((config, out))
}

/// Manifest form of a classifier configuration. Width and activation are
/// `NA` when there are no hidden layers.
pub fn classifier_echo(config: &ClassifierConfig) -> Echo {
    let mut out = Echo::new();
    echo(&mut out, "classifier.hidden_layers", config.hidden_layers);
    if config.hidden_layers == 0 {
        echo(&mut out, "classifier.width", "NA");
        echo(&mut out, "classifier.activation", "NA");
    } else {
        echo(&mut out, "classifier.width", config.width);
        echo(&mut out, "classifier.activation", config.activation);
    }
    echo(&mut out, "classifier.max_epochs", config.max_epochs);
    echo(&mut out, "classifier.patience", config.patience);
    echo(&mut out, "classifier.batch_size", config.batch_size);
    echo(&mut out, "classifier.learning_rate", config.optimizer.learning_rate);
    out
}

pub fn search_space(cfg: &Config, seed: u64) -> Result<(HyperparameterSpace, Echo)> {
    let d = HyperparameterSpace::default();
    let space = HyperparameterSpace {
        min_layers: cfg.parse_or("search.min_layers", d.min_layers)?,
        max_layers: cfg.parse_or("search.max_layers", d.max_layers)?,
        min_width: cfg.parse_or("search.min_width", d.min_width)?,
        max_width: cfg.parse_or("search.max_width", d.max_width)?,
        width_step: cfg.parse_or("search.width_step", d.width_step)?,
        activations: cfg.list::<Activation>("search.activations")?.unwrap_or(d.activations),
        samples: cfg.parse_or("search.samples", d.samples)?,
        seed,
    };
    let mut out = Echo::new();
    echo(&mut out, "search.samples", space.samples);
    echo(&mut out, "search.layers", format!("{}..={}", space.min_layers, space.max_layers));
    echo(&mut out, "search.width", format!("{}..={} step {}", space.min_width, space.max_width, space.width_step));
    echo(&mut out, "search.activations", join(&space.activations));
    Ok((space, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn cfg(text: &str) -> Config {
        Config::parse(text, PathBuf::new()).unwrap()
    }

    #[test]
    fn doc2vec_over_concepts_is_rejected() {
        let c = cfg("representation = doc2vec\nfeature_set = bocui");
        assert_eq!(input_kind(&c).unwrap_err().exit_code(), 2);
        let c = cfg("representation = sdae\nfeature_set = bocui");
        assert_eq!(input_kind(&c).unwrap().tag(), "sdae-bocui");
    }

    #[test]
    fn sdae_defaults_follow_feature_set() {
        let (c, e) = sdae_config(&cfg(""), FeatureSet::Bocui, 1).unwrap();
        assert_eq!(c.layers, vec![LayerSpec { hidden: 300, corruption: 0.4 }]);
        assert!(e.contains(&("sdae.layers".into(), "300".into())));
        let (c, _) = sdae_config(&cfg("sdae.layers = 20,10\nsdae.corruption = 0.1"), FeatureSet::Bow, 1).unwrap();
        assert_eq!(c.layers.len(), 2);
        assert_eq!(c.layers[1].corruption, 0.1);
    }

    #[test]
    fn classifier_preset_then_overrides() {
        let kind = InputKind::new(Representation::Sdae, FeatureSet::Bow).unwrap();
        let (c, e) = classifier_config(&cfg("classifier.preset = in_hosp"), &kind, 0).unwrap();
        assert_eq!((c.hidden_layers, c.width, c.activation), (7, 160, Activation::Relu));
        assert!(e.contains(&("classifier.preset".into(), "in_hosp/sdae-bow".into())));
        let (c, _) = classifier_config(&cfg("classifier.preset = in_hosp\nclassifier.width = 8"), &kind, 0).unwrap();
        assert_eq!(c.width, 8);
        assert!(classifier_config(&cfg("classifier.preset = nope"), &kind, 0).is_err());
    }
}

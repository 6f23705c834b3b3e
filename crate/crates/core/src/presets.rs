//! Hyperparameters selected for the reference experiments.

use crate::classifier::{Activation, ClassifierConfig};
use crate::sdae::{LayerSpec, SdaeConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdaePreset {
    pub feature_set: &'static str,
    pub layers: usize,
    pub hidden: usize,
    pub corruption: f64,
}

impl SdaePreset {
    pub fn config(&self, seed: u64) -> SdaeConfig {
        SdaeConfig {
            layers: vec![
                LayerSpec {
                    hidden: self.hidden,
                    corruption: self.corruption,
                };
                self.layers
            ],
            seed,
            ..SdaeConfig::default()
        }
    }
}

pub const SDAE_PRESETS: [SdaePreset; 2] = [
    SdaePreset { feature_set: "bow", layers: 1, hidden: 800, corruption: 0.05 },
    SdaePreset { feature_set: "bocui", layers: 1, hidden: 300, corruption: 0.4 },
];

pub fn sdae_preset(feature_set: &str) -> Option<&'static SdaePreset> {
    SDAE_PRESETS.iter().find(|p| p.feature_set == feature_set)
}

/// Classifier shape for one task and feature set. A logistic-regression row
/// (no hidden layers) has neither width nor activation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierPreset {
    pub task: &'static str,
    pub features: &'static str,
    pub hidden_layers: usize,
    pub width: Option<usize>,
    pub activation: Option<Activation>,
}

impl ClassifierPreset {
    pub fn config(&self, seed: u64) -> ClassifierConfig {
        let base = ClassifierConfig::default();
        ClassifierConfig {
            hidden_layers: self.hidden_layers,
            width: self.width.unwrap_or(0),
            activation: self.activation.unwrap_or(base.activation),
            seed,
            ..base
        }
    }
}

pub const TASKS: [&str; 6] = ["in_hosp", "30_days", "1_year", "pri_diag_cat", "pri_proc_cat", "gender"];
pub const FEATURE_SETS: [&str; 6] = ["bow", "sdae-bow", "doc2vec", "doc2vec+sdae-bow", "bocui", "sdae-bocui"];

const fn row(
    task: &'static str,
    features: &'static str,
    hidden_layers: usize,
    width: usize,
    activation: Activation,
) -> ClassifierPreset {
    ClassifierPreset {
        task,
        features,
        hidden_layers,
        width: Some(width),
        activation: Some(activation),
    }
}

const fn linear(task: &'static str, features: &'static str) -> ClassifierPreset {
    ClassifierPreset {
        task,
        features,
        hidden_layers: 0,
        width: None,
        activation: None,
    }
}

use Activation::{Relu, Sigmoid, Tanh};

pub const CLASSIFIER_PRESETS: [ClassifierPreset; 36] = [
    row("in_hosp", "bow", 7, 980, Sigmoid),
    row("in_hosp", "sdae-bow", 7, 160, Relu),
    row("in_hosp", "doc2vec", 10, 410, Sigmoid),
    row("in_hosp", "doc2vec+sdae-bow", 7, 340, Tanh),
    row("in_hosp", "bocui", 3, 680, Sigmoid),
    row("in_hosp", "sdae-bocui", 3, 560, Sigmoid),
    row("30_days", "bow", 10, 220, Relu),
    row("30_days", "sdae-bow", 3, 820, Sigmoid),
    row("30_days", "doc2vec", 2, 900, Sigmoid),
    row("30_days", "doc2vec+sdae-bow", 8, 430, Sigmoid),
    row("30_days", "bocui", 7, 510, Tanh),
    row("30_days", "sdae-bocui", 3, 750, Sigmoid),
    row("1_year", "bow", 1, 650, Sigmoid),
    row("1_year", "sdae-bow", 10, 570, Sigmoid),
    row("1_year", "doc2vec", 3, 1000, Sigmoid),
    row("1_year", "doc2vec+sdae-bow", 5, 920, Sigmoid),
    row("1_year", "bocui", 1, 290, Sigmoid),
    row("1_year", "sdae-bocui", 6, 290, Relu),
    row("pri_diag_cat", "bow", 4, 100, Sigmoid),
    row("pri_diag_cat", "sdae-bow", 2, 110, Sigmoid),
    row("pri_diag_cat", "doc2vec", 9, 600, Relu),
    row("pri_diag_cat", "doc2vec+sdae-bow", 8, 700, Relu),
    row("pri_diag_cat", "bocui", 4, 80, Sigmoid),
    row("pri_diag_cat", "sdae-bocui", 8, 230, Relu),
    row("pri_proc_cat", "bow", 2, 220, Sigmoid),
    row("pri_proc_cat", "sdae-bow", 5, 890, Relu),
    row("pri_proc_cat", "doc2vec", 3, 980, Relu),
    row("pri_proc_cat", "doc2vec+sdae-bow", 8, 520, Relu),
    row("pri_proc_cat", "bocui", 10, 760, Relu),
    row("pri_proc_cat", "sdae-bocui", 6, 540, Relu),
    linear("gender", "bow"),
    row("gender", "sdae-bow", 8, 160, Relu),
    linear("gender", "doc2vec"),
    row("gender", "doc2vec+sdae-bow", 7, 280, Sigmoid),
    row("gender", "bocui", 5, 410, Relu),
    row("gender", "sdae-bocui", 1, 210, Relu),
];

pub fn classifier_preset(task: &str, features: &str) -> Option<&'static ClassifierPreset> {
    CLASSIFIER_PRESETS.iter().find(|p| p.task == task && p.features == features)
}

/// t-SNE perplexity used for each representation's projection.
pub fn projection_perplexity(representation: &str) -> Option<f64> {
    match representation {
        "sdae-bow" => Some(50.0),
        "doc2vec" => Some(30.0),
        _ => None,
    }
}

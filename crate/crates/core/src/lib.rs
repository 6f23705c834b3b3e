//! Dense patient representations from clinical notes.
//!
//! * [`corpus`]: note ingestion, normalization, vocabularies, TF-IDF and
//!   synthetic corpora.
//! * [`sdae`]: stacked denoising autoencoder with exact encoder Jacobians.
//! * [`doc2vec`]: DBOW paragraph vectors with negative sampling.
//! * [`classifier`]: feedforward softmax classifiers and random search.
//! * [`interpret`]: reconstruction-error profiles, cross-network sensitivity
//!   analysis and chi-square feature ranking.
//! * [`eval`]: AUC, weighted F, Cohen's kappa, approximate randomization
//!   tests and Bonferroni correction.
//! * [`projection`]: PCA and exact t-SNE.
//! * [`presets`]: hyperparameter tables for the reference experiments.

pub mod classifier;
pub mod container;
pub mod corpus;
pub mod doc2vec;
pub mod error;
pub mod eval;
pub mod interpret;
pub mod linalg;
pub mod optim;
pub mod presets;
pub mod projection;
pub mod sdae;
pub mod rng;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

//! Classifier inputs for one partition: sparse TF-IDF rows or dense
//! representations computed from stored models.

use std::collections::HashMap;

use repvec_core::classifier::{concat_representations, DenseRepresentation, Features};
use repvec_core::container::Persist;
use repvec_core::corpus::{read_documents, FeatureMatrix, LabelTable, Partition, SparseFeatureVector};
use repvec_core::doc2vec::DbowModel;
use repvec_core::sdae::SdaeModel;

use crate::artifacts::{read_split, require, Workspace};
use crate::error::{CliError, Result};
use crate::manifest::Manifest;
use crate::resolve::{FeatureSet, InputKind, Representation};

#[derive(Debug, Clone, PartialEq)]
pub enum InputData {
    Sparse(Vec<SparseFeatureVector>),
    Dense(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionInputs {
    pub patient_ids: Vec<String>,
    pub data: InputData,
}

impl PartitionInputs {
    pub fn len(&self) -> usize {
        self.patient_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patient_ids.is_empty()
    }

    pub fn features(&self) -> Features<'_> {
        match &self.data {
            InputData::Sparse(rows) => Features::Sparse(rows),
            InputData::Dense(rows) => Features::Dense(rows),
        }
    }

    pub fn dense_rows(&self) -> Vec<Vec<f64>> {
        match &self.data {
            InputData::Sparse(rows) => rows.iter().map(SparseFeatureVector::to_dense).collect(),
            InputData::Dense(rows) => rows.clone(),
        }
    }

    pub fn select(&self, indices: &[usize]) -> PartitionInputs {
        PartitionInputs {
            patient_ids: indices.iter().map(|&i| self.patient_ids[i].clone()).collect(),
            data: match &self.data {
                InputData::Sparse(rows) => InputData::Sparse(indices.iter().map(|&i| rows[i].clone()).collect()),
                InputData::Dense(rows) => InputData::Dense(indices.iter().map(|&i| rows[i].clone()).collect()),
            },
        }
    }

    /// Keeps the patients labelled for `task`, returning their labels.
    pub fn labeled(&self, labels: &LabelTable, task: &str) -> Result<(PartitionInputs, Vec<String>)> {
        let table = labels
            .task(task)
            .ok_or_else(|| CliError::config(format!("labels file has no task {task:?}")))?;
        let (keep, values): (Vec<usize>, Vec<String>) = self
            .patient_ids
            .iter()
            .enumerate()
            .filter_map(|(i, id)| table.get(id).map(|l| (i, l.clone())))
            .unzip();
        Ok((self.select(&keep), values))
    }
}

pub fn load_features(ws: &Workspace, fs: FeatureSet, part: Partition, manifest: &mut Manifest) -> Result<FeatureMatrix> {
    let path = require(ws.features(fs.as_str(), part), "featurize")?;
    manifest.input(&path);
    Ok(FeatureMatrix::read_tsv(&path)?)
}

pub fn load_sdae(ws: &Workspace, fs: FeatureSet, manifest: &mut Manifest) -> Result<SdaeModel> {
    let path = require(ws.sdae(fs.as_str()), "pretrain-sdae")?;
    manifest.input(&path);
    Ok(SdaeModel::load(&path)?)
}

pub fn load_doc2vec(ws: &Workspace, manifest: &mut Manifest) -> Result<DbowModel> {
    let path = require(ws.doc2vec(), "train-doc2vec")?;
    manifest.input(&path);
    Ok(DbowModel::load(&path)?)
}

fn sdae_partition(ws: &Workspace, fs: FeatureSet, part: Partition, manifest: &mut Manifest) -> Result<PartitionInputs> {
    let features = load_features(ws, fs, part, manifest)?;
    let model = load_sdae(ws, fs, manifest)?;
    let rows = features
        .rows
        .iter()
        .map(|r| model.represent(r))
        .collect::<repvec_core::Result<Vec<_>>>()?;
    Ok(PartitionInputs {
        patient_ids: features.patient_ids,
        data: InputData::Dense(rows),
    })
}

/// Paragraph vectors: learned vectors for training patients, inferred ones
/// (with frozen word and output vectors) for held-out patients.
fn doc2vec_partition(
    ws: &Workspace,
    part: Partition,
    infer_epochs: usize,
    seed: u64,
    manifest: &mut Manifest,
) -> Result<PartitionInputs> {
    let model = load_doc2vec(ws, manifest)?;
    let split_path = require(ws.split(), "split")?;
    manifest.input(&split_path);
    let ids = read_split(&split_path)?.ids(part).to_vec();
    let rows = if part == Partition::Train {
        ids.iter()
            .map(|id| {
                model
                    .document_vector(id)
                    .map(<[f64]>::to_vec)
                    .ok_or_else(|| CliError::config(format!("paragraph-vector model has no document {id:?}")))
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        let docs_path = require(ws.documents(), "preprocess")?;
        manifest.input(&docs_path);
        let docs = read_documents(&docs_path)?;
        let by_id: HashMap<&str, &Vec<String>> = docs.iter().map(|d| (d.patient_id.as_str(), &d.tokens)).collect();
        ids.iter()
            .map(|id| {
                let tokens = by_id
                    .get(id.as_str())
                    .ok_or_else(|| CliError::config(format!("split names unknown patient {id:?}")))?;
                Ok(model.infer_vector(tokens, infer_epochs, seed)?.vector)
            })
            .collect::<Result<Vec<_>>>()?
    };
    Ok(PartitionInputs {
        patient_ids: ids,
        data: InputData::Dense(rows),
    })
}

pub struct LoadOptions {
    pub infer_epochs: usize,
    pub seed: u64,
}

/// Inputs of `kind` for one partition, in the partition's stored order.
pub fn load_partition(
    ws: &Workspace,
    kind: &InputKind,
    part: Partition,
    options: &LoadOptions,
    manifest: &mut Manifest,
) -> Result<PartitionInputs> {
    match kind.representation {
        Representation::Sparse => {
            let f = load_features(ws, kind.feature_set, part, manifest)?;
            Ok(PartitionInputs {
                patient_ids: f.patient_ids,
                data: InputData::Sparse(f.rows),
            })
        }
        Representation::Sdae => sdae_partition(ws, kind.feature_set, part, manifest),
        Representation::Doc2vec => doc2vec_partition(ws, part, options.infer_epochs, options.seed, manifest),
        Representation::Ensemble => {
            let d2v = doc2vec_partition(ws, part, options.infer_epochs, options.seed, manifest)?;
            let sdae = sdae_partition(ws, FeatureSet::Bow, part, manifest)?;
            let sdae_rows: HashMap<&str, &Vec<f64>> = match &sdae.data {
                InputData::Dense(rows) => sdae.patient_ids.iter().map(String::as_str).zip(rows).collect(),
                InputData::Sparse(_) => unreachable!("autoencoder inputs are dense"),
            };
            let InputData::Dense(d2v_rows) = &d2v.data else {
                unreachable!("paragraph vectors are dense")
            };
            let rows = d2v
                .patient_ids
                .iter()
                .zip(d2v_rows)
                .map(|(id, v)| {
                    let s = sdae_rows
                        .get(id.as_str())
                        .ok_or_else(|| CliError::config(format!("no autoencoder features for {id:?}")))?;
                    let joined = concat_representations(
                        &DenseRepresentation {
                            patient_id: id.clone(),
                            values: v.clone(),
                        },
                        &DenseRepresentation {
                            patient_id: id.clone(),
                            values: (*s).clone(),
                        },
                    )?;
                    Ok(joined.values)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(PartitionInputs {
                patient_ids: d2v.patient_ids,
                data: InputData::Dense(rows),
            })
        }
    }
}

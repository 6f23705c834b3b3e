//! Two-dimensional projections of patient representations: PCA followed by
//! exact t-SNE.

mod pca;
mod tsne;

pub use pca::{pca, PcaResult};
pub use tsne::{
    joint_probabilities, kl_divergence, kl_gradient, silhouette_score, tsne, JointProbabilities, TsneConfig,
    TsneResult,
};

use crate::error::Result;
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionConfig {
    pub pca_dims: usize,
    pub tsne: TsneConfig,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        ProjectionConfig {
            pca_dims: 50,
            tsne: TsneConfig::default(),
        }
    }
}

/// PCA to `min(pca_dims, n, d)` dimensions, then t-SNE to two.
pub fn project(data: &Matrix, config: &ProjectionConfig) -> Result<(PcaResult, TsneResult)> {
    let k = config.pca_dims.min(data.rows()).min(data.cols());
    let reduced = pca(data, k)?;
    let embedded = tsne(&reduced.projected, &config.tsne)?;
    Ok((reduced, embedded))
}

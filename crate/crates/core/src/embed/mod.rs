//! Numerical kernels over dense embedding vectors.
//!
//! Everything is computed in `f64`; embedding files may store `f32`.

mod frechet;
pub mod io;
mod loss;
mod perturb;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use frechet::{fit_moments, frechet_distance, FrechetStage, GaussianMoments, DEFAULT_JITTER};
pub use loss::{
    clip_t_score, cosine_similarity, flow_matching_loss, regression_loss, regression_loss_grad,
    FlowSample, RegressionLoss, RegressionLossParams, ScoreScale,
};
pub use perturb::{
    add_noise, derive_item_seed, perturb, perturb_batch, population_std, rescale_latent,
    shuffle_sequence, PerturbationSpec,
};

#[derive(Debug, Error, PartialEq)]
pub enum EmbedError {
    #[error("embedding must have at least one dimension")]
    EmptyVector,
    #[error("non-finite value at coordinate {0}")]
    NonFinite(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("count mismatch: {left} vs {right}")]
    CountMismatch { left: usize, right: usize },
    #[error("zero-norm embedding")]
    ZeroNorm,
    #[error("need at least {needed} vectors, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-finite intermediate during {0}")]
    NumericalFailure(FrechetStage),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, EmbedError> {
        if values.is_empty() {
            return Err(EmbedError::EmptyVector);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite(i));
        }
        Ok(Self { id: None, values })
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = Some(id.into());
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Replaces the values, keeping the id. Same checks as [`Self::new`].
    pub(crate) fn map_values(&self, values: Vec<f64>) -> Result<Self, EmbedError> {
        Ok(Self {
            id: self.id.clone(),
            ..Self::new(values)?
        })
    }
}

/// A non-empty collection of equal-dimension vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    vectors: Vec<EmbeddingVector>,
}

impl EmbeddingSet {
    pub fn new(vectors: Vec<EmbeddingVector>) -> Result<Self, EmbedError> {
        let Some(first) = vectors.first() else {
            return Err(EmbedError::TooFew { needed: 1, got: 0 });
        };
        let dim = first.dim();
        if let Some(v) = vectors.iter().find(|v| v.dim() != dim) {
            return Err(EmbedError::DimensionMismatch {
                expected: dim,
                got: v.dim(),
            });
        }
        Ok(Self { vectors })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, EmbedError> {
        Self::new(
            rows.into_iter()
                .map(EmbeddingVector::new)
                .collect::<Result<_, _>>()?,
        )
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].dim()
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn vectors(&self) -> &[EmbeddingVector] {
        &self.vectors
    }

    pub fn iter(&self) -> std::slice::Iter<'_, EmbeddingVector> {
        self.vectors.iter()
    }

    pub fn into_vectors(self) -> Vec<EmbeddingVector> {
        self.vectors
    }
}

fn check_dims(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<(), EmbedError> {
    if a.dim() != b.dim() {
        return Err(EmbedError::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(())
}

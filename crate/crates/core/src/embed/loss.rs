use serde::{Deserialize, Serialize};

use super::{check_dims, EmbedError, EmbeddingSet, EmbeddingVector};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbedError> {
    check_dims(a, b)?;
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(EmbedError::ZeroNorm);
    }
    Ok((dot(a.values(), b.values()) / (na * nb)).clamp(-1.0, 1.0))
}

/// Weights of the cosine and mean-squared-error terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionLossParams {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for RegressionLossParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
        }
    }
}

impl RegressionLossParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, EmbedError> {
        let p = Self { alpha, beta };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<(), EmbedError> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.alpha + self.beta > 0.0)
            || !self.alpha.is_finite()
            || !self.beta.is_finite()
        {
            return Err(EmbedError::InvalidParameter(format!(
                "alpha and beta must be non-negative with a positive sum, got {} and {}",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegressionLoss {
    pub total: f64,
    pub cosine_term: f64,
    pub mse_term: f64,
}

/// `alpha * (1 - cos(pred, target)) + beta * mean((pred - target)^2)`.
pub fn regression_loss(
    pred: &EmbeddingVector,
    target: &EmbeddingVector,
    p: &RegressionLossParams,
) -> Result<RegressionLoss, EmbedError> {
    let cos = cosine_similarity(pred, target)?;
    let n = pred.dim() as f64;
    let mse = pred
        .values()
        .iter()
        .zip(target.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    let cosine_term = p.alpha * (1.0 - cos);
    let mse_term = p.beta * mse;
    Ok(RegressionLoss {
        total: cosine_term + mse_term,
        cosine_term,
        mse_term,
    })
}

/// Gradient of [`regression_loss`] with respect to `pred`.
///
/// d/dp cos = t / (|p||t|) - (p·t) p / (|p|^3 |t|), and the MSE term
/// contributes 2 (p - t) / N.
pub fn regression_loss_grad(
    pred: &EmbeddingVector,
    target: &EmbeddingVector,
    p: &RegressionLossParams,
) -> Result<Vec<f64>, EmbedError> {
    check_dims(pred, target)?;
    let (np, nt) = (pred.norm(), target.norm());
    if np == 0.0 || nt == 0.0 {
        return Err(EmbedError::ZeroNorm);
    }
    let pv = pred.values();
    let tv = target.values();
    let pt = dot(pv, tv);
    let inv = 1.0 / (np * nt);
    let radial = pt / (np * np * np * nt);
    let mse_scale = 2.0 * p.beta / pv.len() as f64;
    Ok(pv
        .iter()
        .zip(tv)
        .map(|(&x, &y)| {
            let d_cos = y * inv - x * radial;
            -p.alpha * d_cos + mse_scale * (x - y)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreScale {
    Raw,
    /// Multiplies by 100.
    Percent,
}

/// Mean cosine similarity between index-paired text and image embeddings.
pub fn clip_t_score(
    text: &EmbeddingSet,
    image: &EmbeddingSet,
    scale: ScoreScale,
) -> Result<f64, EmbedError> {
    if text.len() != image.len() {
        return Err(EmbedError::CountMismatch {
            left: text.len(),
            right: image.len(),
        });
    }
    let mut sum = 0.0;
    for (t, i) in text.iter().zip(image.iter()) {
        sum += cosine_similarity(t, i)?;
    }
    let raw = sum / text.len() as f64;
    Ok(match scale {
        ScoreScale::Raw => raw,
        ScoreScale::Percent => raw * 100.0,
    })
}

/// A predicted drift paired with the drift of the ground-truth path.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSample {
    pub predicted_drift: EmbeddingVector,
    pub target_drift: EmbeddingVector,
}

impl FlowSample {
    pub fn new(
        predicted_drift: EmbeddingVector,
        target_drift: EmbeddingVector,
    ) -> Result<Self, EmbedError> {
        check_dims(&predicted_drift, &target_drift)?;
        Ok(Self {
            predicted_drift,
            target_drift,
        })
    }
}

/// Mean squared L2 distance between predicted and target drifts.
pub fn flow_matching_loss(samples: &[FlowSample]) -> Result<f64, EmbedError> {
    let Some(first) = samples.first() else {
        return Err(EmbedError::TooFew { needed: 1, got: 0 });
    };
    let dim = first.predicted_drift.dim();
    let mut sum = 0.0;
    for s in samples {
        check_dims(&s.predicted_drift, &s.target_drift)?;
        if s.predicted_drift.dim() != dim {
            return Err(EmbedError::DimensionMismatch {
                expected: dim,
                got: s.predicted_drift.dim(),
            });
        }
        sum += s
            .predicted_drift
            .values()
            .iter()
            .zip(s.target_drift.values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    Ok(sum / samples.len() as f64)
}

//! Seeded embedding perturbations: noise, masking, and shuffling.
//!
//! Each stage draws from its own ChaCha stream derived from the seed, so
//! turning one stage off does not change what the others draw.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EmbedError, EmbeddingSet, EmbeddingVector};

const NOISE_STREAM: u64 = 0;
const MASK_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    /// Multiplier on the per-dimension reference std.
    pub noise_scale: f64,
    /// Probability of zeroing each coordinate.
    pub mask_rate: f64,
    /// Permute coordinates within the vector.
    pub shuffle: bool,
    pub seed: u64,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        Self {
            noise_scale: 0.5,
            mask_rate: 0.25,
            shuffle: true,
            seed: 0,
        }
    }
}

impl PerturbationSpec {
    pub fn identity() -> Self {
        Self {
            noise_scale: 0.0,
            mask_rate: 0.0,
            shuffle: false,
            seed: 0,
        }
    }

    pub fn check(&self) -> Result<(), EmbedError> {
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(EmbedError::InvalidParameter(format!(
                "noise_scale must be finite and >= 0, got {}",
                self.noise_scale
            )));
        }
        if !(0.0..=1.0).contains(&self.mask_rate) {
            return Err(EmbedError::InvalidParameter(format!(
                "mask_rate must lie in [0, 1], got {}",
                self.mask_rate
            )));
        }
        Ok(())
    }
}

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stable per-item seed so parallel schedules cannot change results.
pub fn derive_item_seed(seed: u64, item_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(item_id.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 digest is 32 bytes"))
}

/// Unbiased per-dimension standard deviation.
pub fn population_std(set: &EmbeddingSet) -> Result<Vec<f64>, EmbedError> {
    let n = set.len();
    if n < 2 {
        return Err(EmbedError::TooFew { needed: 2, got: n });
    }
    let dim = set.dim();
    let mut mean = vec![0.0; dim];
    for v in set.iter() {
        for (m, x) in mean.iter_mut().zip(v.values()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; dim];
    for v in set.iter() {
        for ((s, x), m) in var.iter_mut().zip(v.values()).zip(&mean) {
            *s += (x - m) * (x - m);
        }
    }
    Ok(var
        .into_iter()
        .map(|s| (s / (n - 1) as f64).sqrt())
        .collect())
}

/// Adds noise, masks, then shuffles coordinates, each stage as configured.
/// Stages that are switched off leave the values bit-for-bit untouched.
pub fn perturb(
    z: &EmbeddingVector,
    std_basis: &[f64],
    spec: &PerturbationSpec,
) -> Result<EmbeddingVector, EmbedError> {
    spec.check()?;
    if std_basis.len() != z.dim() {
        return Err(EmbedError::DimensionMismatch {
            expected: z.dim(),
            got: std_basis.len(),
        });
    }
    let mut values = z.values().to_vec();

    let mut noise_rng = stream(spec.seed, NOISE_STREAM);
    for (x, s) in values.iter_mut().zip(std_basis) {
        let draw: f64 = noise_rng.sample(StandardNormal);
        let std = spec.noise_scale * s;
        if std != 0.0 {
            *x += std * draw;
        }
    }

    if spec.mask_rate > 0.0 {
        let mut mask_rng = stream(spec.seed, MASK_STREAM);
        for x in values.iter_mut() {
            if mask_rng.random::<f64>() < spec.mask_rate {
                *x = 0.0;
            }
        }
    }

    if spec.shuffle {
        values.shuffle(&mut stream(spec.seed, SHUFFLE_STREAM));
    }
    z.map_values(values)
}

/// Applies [`perturb`] to every vector with a seed derived from the vector id
/// (or its position when it has none). Output order matches input order
/// unless `shuffle_order` permutes the sequence afterwards.
pub fn perturb_batch(
    set: &EmbeddingSet,
    std_basis: &[f64],
    spec: &PerturbationSpec,
    shuffle_order: bool,
) -> Result<Vec<EmbeddingVector>, EmbedError> {
    let mut out = set
        .vectors()
        .par_iter()
        .enumerate()
        .map(|(i, z)| {
            let key = z.id.clone().unwrap_or_else(|| format!("#{i}"));
            let item_spec = PerturbationSpec {
                seed: derive_item_seed(spec.seed, &key),
                ..*spec
            };
            perturb(z, std_basis, &item_spec)
        })
        .collect::<Result<Vec<_>, _>>()?;
    if shuffle_order {
        shuffle_sequence(&mut out, spec.seed);
    }
    Ok(out)
}

/// Uniformly permutes the order of embeddings in a sequence.
pub fn shuffle_sequence<T>(items: &mut [T], seed: u64) {
    items.shuffle(&mut stream(
        derive_item_seed(seed, "sequence"),
        SHUFFLE_STREAM,
    ));
}

pub fn rescale_latent(z: &EmbeddingVector, factor: f64) -> Result<EmbeddingVector, EmbedError> {
    if !factor.is_finite() {
        return Err(EmbedError::InvalidParameter(format!(
            "factor must be finite, got {factor}"
        )));
    }
    z.map_values(z.values().iter().map(|x| x * factor).collect())
}

/// Adds i.i.d. Gaussian noise with standard deviation `sigma`.
pub fn add_noise(
    z: &EmbeddingVector,
    sigma: f64,
    seed: u64,
) -> Result<EmbeddingVector, EmbedError> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(EmbedError::InvalidParameter(format!(
            "sigma must be finite and >= 0, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(z.clone());
    }
    let mut rng = stream(seed, NOISE_STREAM);
    z.map_values(
        z.values()
            .iter()
            .map(|x| x + sigma * rng.sample::<f64, _>(StandardNormal))
            .collect(),
    )
}

//! Gaussian moment fitting and the Fréchet (2-Wasserstein) distance between
//! two Gaussians, the core of FID/FVD-style metrics.

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{EmbedError, EmbeddingSet};

pub const DEFAULT_JITTER: f64 = 1e-6;

const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrechetStage {
    Inputs,
    SqrtA,
    Product,
    Trace,
}

impl fmt::Display for FrechetStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FrechetStage::Inputs => "input moments",
            FrechetStage::SqrtA => "square root of the first covariance",
            FrechetStage::Product => "eigendecomposition of the covariance product",
            FrechetStage::Trace => "trace combination",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMoments {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianMoments {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self, EmbedError> {
        let n = mean.len();
        if covariance.nrows() != n || covariance.ncols() != n {
            return Err(EmbedError::DimensionMismatch {
                expected: n,
                got: covariance.nrows(),
            });
        }
        Ok(Self { mean, covariance })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Sample mean and unbiased covariance.
pub fn fit_moments(set: &EmbeddingSet) -> Result<GaussianMoments, EmbedError> {
    let n = set.len();
    if n < 2 {
        return Err(EmbedError::TooFew { needed: 2, got: n });
    }
    let d = set.dim();
    let mut mean = DVector::<f64>::zeros(d);
    for v in set.iter() {
        mean += DVector::from_column_slice(v.values());
    }
    mean /= n as f64;

    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut centered = DVector::<f64>::zeros(d);
    for v in set.iter() {
        for (c, (x, m)) in centered.iter_mut().zip(v.values().iter().zip(mean.iter())) {
            *c = x - m;
        }
        cov.ger(1.0, &centered, &centered, 1.0);
    }
    cov /= (n - 1) as f64;
    Ok(GaussianMoments {
        mean,
        covariance: cov,
    })
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn eigen(m: DMatrix<f64>) -> Option<SymmetricEigen<f64, nalgebra::Dyn>> {
    let e = SymmetricEigen::try_new(m, EIGEN_EPS, EIGEN_MAX_ITER)?;
    e.eigenvalues.iter().all(|v| v.is_finite()).then_some(e)
}

/// PSD square root with negative eigenvalues clamped to zero.
fn sqrt_psd(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let e = eigen(symmetrize(m))?;
    let roots = e.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &e.eigenvectors;
    Some(v * DMatrix::from_diagonal(&roots) * v.transpose())
}

fn attempt(a: &GaussianMoments, b: &GaussianMoments, jitter: f64) -> Result<f64, FrechetStage> {
    let d = a.dim();
    let shift = DMatrix::<f64>::identity(d, d) * jitter;
    let ca = &a.covariance + &shift;
    let cb = &b.covariance + &shift;

    let sa = sqrt_psd(&ca).ok_or(FrechetStage::SqrtA)?;
    if sa.iter().any(|x| !x.is_finite()) {
        return Err(FrechetStage::SqrtA);
    }
    // sqrt(Ca) Cb sqrt(Ca) is symmetric PSD and has the same trace-sqrt as Ca Cb
    let product = symmetrize(&(&sa * &cb * &sa));
    let e = eigen(product).ok_or(FrechetStage::Product)?;
    let trace_sqrt: f64 = e.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).sum();

    let diff = &a.mean - &b.mean;
    let dist = diff.dot(&diff) + ca.trace() + cb.trace() - 2.0 * trace_sqrt;
    if !dist.is_finite() {
        return Err(FrechetStage::Trace);
    }
    Ok(dist.max(0.0))
}

/// `|mu_a - mu_b|^2 + Tr(Ca + Cb - 2 (Ca Cb)^{1/2})`, clamped at zero.
///
/// The first attempt uses the covariances as given. If the decomposition
/// fails or produces non-finite values, it is retried once with
/// `jitter * I` added to both covariances.
pub fn frechet_distance(
    a: &GaussianMoments,
    b: &GaussianMoments,
    jitter: f64,
) -> Result<f64, EmbedError> {
    if a.dim() != b.dim() {
        return Err(EmbedError::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    if !(jitter >= 0.0 && jitter.is_finite()) {
        return Err(EmbedError::InvalidParameter(format!(
            "jitter must be finite and >= 0, got {jitter}"
        )));
    }
    let finite = |m: &GaussianMoments| {
        m.mean
            .iter()
            .chain(m.covariance.iter())
            .all(|x| x.is_finite())
    };
    if !finite(a) || !finite(b) {
        return Err(EmbedError::NumericalFailure(FrechetStage::Inputs));
    }
    match attempt(a, b, 0.0) {
        Ok(d) => Ok(d),
        Err(_) if jitter > 0.0 => attempt(a, b, jitter).map_err(EmbedError::NumericalFailure),
        Err(stage) => Err(EmbedError::NumericalFailure(stage)),
    }
}

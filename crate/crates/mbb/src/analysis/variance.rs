//! Spectral norm of the per-sample gradient covariance, computed without ever
//! materializing the parameter-space covariance matrix.

use nalgebra::DMatrix;
use ndarray::Array2;
use rand_chacha::ChaCha12Rng;

use super::pool::{EstimatorTag, GradientPool};
use crate::error::{MbbError, Result};
use crate::nn::GaussianPolicy;
use crate::ppo::{score_gradient, StepData};

/// One gradient per pooled step: ∇ log π(a_i|s_i) · A_i for each index.
pub fn per_sample_gradients(
    policy: &GaussianPolicy,
    data: &StepData,
    indices: &[usize],
) -> Vec<Vec<f64>> {
    indices.iter().map(|&i| score_gradient(policy, data, &[i])).collect()
}

/// Largest eigenvalue of the sample covariance of `grads` (K rows, P columns,
/// divisor K−1). The centered matrix G satisfies ‖cov‖₂ = σ_max(G)²/(K−1),
/// and σ_max(G)² is the top eigenvalue of whichever Gram product of G is
/// smaller, so the cost scales with min(K, P)² rather than P².
pub fn covariance_spectral_norm(grads: &[Vec<f64>]) -> Result<f64> {
    let k = grads.len();
    if k < 2 {
        return Err(MbbError::Config(format!(
            "covariance needs at least two gradients, got {k}"
        )));
    }
    let p = grads[0].len();
    if grads.iter().any(|g| g.len() != p) {
        return Err(MbbError::Config("gradients have inconsistent lengths".into()));
    }
    if p == 0 {
        return Err(MbbError::Config("gradients are empty".into()));
    }
    if grads.iter().flatten().any(|x| !x.is_finite()) {
        return Err(MbbError::Numerical("non-finite per-sample gradient".into()));
    }

    let mut mean = vec![0.0; p];
    for g in grads {
        for (m, &x) in mean.iter_mut().zip(g) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= k as f64;
    }
    let mut centered = Array2::zeros((k, p));
    for (r, g) in grads.iter().enumerate() {
        for (c, (&x, &m)) in g.iter().zip(&mean).enumerate() {
            centered[[r, c]] = x - m;
        }
    }

    let gram = if k <= p {
        centered.dot(&centered.t())
    } else {
        centered.t().dot(&centered)
    };
    let d = gram.nrows();
    let sym = DMatrix::from_fn(d, d, |r, c| gram[[r, c]]);
    let top = sym
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, &ev| acc.max(ev));
    Ok(top / (k - 1) as f64)
}

/// Draws `k` pool steps without replacement and reports the spectral norm of
/// their per-sample gradient covariance.
pub fn gradient_variance(
    pool: &GradientPool,
    tag: EstimatorTag,
    k: usize,
    rng: &mut ChaCha12Rng,
) -> Result<f64> {
    if k < 2 {
        return Err(MbbError::Config(format!(
            "variance estimate needs at least two samples, got {k}"
        )));
    }
    if k > pool.len() {
        return Err(MbbError::Config(format!(
            "variance sample count {k} exceeds the {}-step pool",
            pool.len()
        )));
    }
    let mut indices = rand::seq::index::sample(rng, pool.len(), k).into_vec();
    indices.sort_unstable();
    let grads = per_sample_gradients(pool.policy(), pool.data(tag), &indices);
    covariance_spectral_norm(&grads)
}

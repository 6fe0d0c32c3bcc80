//! Cosine similarity between resampled gradient estimates and the full-pool
//! ground truths, swept over sample sizes.

use std::path::Path;

use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use super::pool::{ground_truth_gradient, resample_gradient, EstimatorTag, GradientPool};
use crate::error::{MbbError, Result};

/// Cosine of the angle between two flat vectors, clamped to [−1, 1]. Equal
/// inputs return exactly 1 and exact negations exactly −1; a zero vector has
/// no direction and is rejected.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(MbbError::Config(format!(
            "cosine of vectors with different lengths: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 || !(na.is_finite() && nb.is_finite()) {
        return Err(MbbError::Numerical(
            "cosine undefined for zero or non-finite vectors".into(),
        ));
    }
    if a == b {
        return Ok(1.0);
    }
    if a.iter().zip(b).all(|(&x, &y)| x == -y) {
        return Ok(-1.0);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// Mean cosine between one estimator's resamples at size `n` and one ground
/// truth, over `repeats` draws.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CosinePoint {
    pub estimator: EstimatorTag,
    pub ground_truth: EstimatorTag,
    pub n: usize,
    pub mean_cosine: f64,
    pub std_cosine: f64,
    pub repeats: usize,
}

/// The full similarity table over (estimator, ground truth, N).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CosineCurve {
    pub points: Vec<CosinePoint>,
}

impl CosineCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("estimator,ground_truth,n,mean_cosine,std_cosine,repeats\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{:.9},{:.9},{}\n",
                p.estimator, p.ground_truth, p.n, p.mean_cosine, p.std_cosine, p.repeats
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Mean cosine for one cell of the table.
    pub fn mean_at(&self, est: EstimatorTag, gt: EstimatorTag, n: usize) -> Option<f64> {
        self.points
            .iter()
            .find(|p| p.estimator == est && p.ground_truth == gt && p.n == n)
            .map(|p| p.mean_cosine)
    }
}

/// Sweeps resample sizes: at each `n`, every estimator is redrawn `repeats`
/// times without replacement and each draw is compared against both ground
/// truths, so one draw feeds two table cells. Sizes beyond the pool are
/// rejected up front.
pub fn cosine_similarity_curve(
    pool: &GradientPool,
    ns: &[usize],
    repeats: usize,
    rng: &mut ChaCha12Rng,
) -> Result<CosineCurve> {
    if ns.is_empty() || repeats == 0 {
        return Err(MbbError::Config("need at least one sample size and one repeat".into()));
    }
    if let Some(&bad) = ns.iter().find(|&&n| n == 0 || n > pool.len()) {
        return Err(MbbError::Config(format!(
            "sample size {bad} outside the valid range 1..={}",
            pool.len()
        )));
    }
    let mut gts: Vec<(EstimatorTag, Vec<f64>)> = Vec::new();
    for tag in EstimatorTag::ALL {
        gts.push((tag, ground_truth_gradient(pool, tag)?.gradient));
    }

    let mut points = Vec::new();
    for &n in ns {
        for est in EstimatorTag::ALL {
            let mut cells: Vec<(EstimatorTag, Vec<f64>)> =
                gts.iter().map(|(g, _)| (*g, Vec::with_capacity(repeats))).collect();
            for _ in 0..repeats {
                let draw = resample_gradient(pool, est, n, rng)?;
                for ((_, gt_vec), (_, cos_acc)) in gts.iter().zip(cells.iter_mut()) {
                    cos_acc.push(cosine_similarity(&draw.gradient, gt_vec)?);
                }
            }
            for (gt, cos) in cells {
                let mean = cos.iter().sum::<f64>() / repeats as f64;
                let std = if repeats > 1 {
                    (cos.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>()
                        / (repeats - 1) as f64)
                        .sqrt()
                } else {
                    0.0
                };
                points.push(CosinePoint {
                    estimator: est,
                    ground_truth: gt,
                    n,
                    mean_cosine: mean,
                    std_cosine: std,
                    repeats,
                });
            }
        }
    }
    Ok(CosineCurve { points })
}

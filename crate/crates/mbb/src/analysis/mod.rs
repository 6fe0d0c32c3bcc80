//! Gradient-quality analysis on frozen policies: pooled sample collection,
//! cosine similarity of resampled estimates against full-pool ground truths,
//! advantage-window statistics, and per-sample gradient variance.

mod advantage;
mod cosine;
mod pool;
mod variance;

pub use advantage::{
    advantage_windows, run_advantage_windows, windows_to_csv, write_windows_csv, WindowStat,
};
pub use cosine::{cosine_similarity, cosine_similarity_curve, CosineCurve, CosinePoint};
pub use pool::{
    collect_pool, ground_truth_gradient, pool_from_trajectories, resample_gradient, EstimatorTag,
    GradientEstimate, GradientPool, PoolConfig,
};
pub use variance::{covariance_spectral_norm, gradient_variance, per_sample_gradients};

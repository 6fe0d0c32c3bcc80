use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

use super::gradient::StepData;
use crate::nn::{Adam, GaussianPolicy};

/// Log-ratio magnitude beyond which a minibatch is considered numerically
/// unusable: exp() of anything past this either overflows toward inf or
/// underflows toward zero and the clipped surrogate loses its gradient.
const LOG_RATIO_LIMIT: f64 = 40.0;

#[derive(Debug, Clone)]
pub struct PpoConfig {
    pub clip: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub lr: f64,
    pub grad_clip: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig { clip: 0.2, epochs: 10, minibatch: 256, lr: 3e-4, grad_clip: 0.5 }
    }
}

#[derive(Debug, Clone, Default)]
pub struct PpoReport {
    pub minibatches: usize,
    pub skipped: usize,
    pub surrogate_before: f64,
    pub surrogate_after: f64,
    pub diagnostics: Vec<String>,
}

/// Mean clipped surrogate L = (1/N) Σ min(ρA, clip(ρ,1−ε,1+ε)A) over the
/// given index subset under the current policy parameters.
pub fn clipped_surrogate(
    policy: &GaussianPolicy,
    data: &StepData,
    indices: &[usize],
    clip: f64,
) -> f64 {
    if indices.is_empty() {
        return 0.0;
    }
    let (xs, acts) = gather(data, indices);
    let (lps, _) = policy.log_probs_batch(xs.view(), acts.view());
    let mut total = 0.0;
    for (r, &i) in indices.iter().enumerate() {
        let ratio = (lps[r] - data.old_log_probs[i]).exp();
        let a = data.advantages[i];
        let clipped = ratio.clamp(1.0 - clip, 1.0 + clip);
        total += (ratio * a).min(clipped * a);
    }
    total / indices.len() as f64
}

fn gather(data: &StepData, indices: &[usize]) -> (Array2<f64>, Array2<f64>) {
    let obs_dim = data.states.ncols();
    let act_dim = data.actions.ncols();
    let mut xs = Array2::zeros((indices.len(), obs_dim));
    let mut acts = Array2::zeros((indices.len(), act_dim));
    for (r, &i) in indices.iter().enumerate() {
        for j in 0..obs_dim {
            xs[[r, j]] = data.states[[i, j]];
        }
        for j in 0..act_dim {
            acts[[r, j]] = data.actions[[i, j]];
        }
    }
    (xs, acts)
}

/// One PPO update pass: `epochs` sweeps of shuffled minibatches ascending the
/// clipped surrogate with Adam, gradient L2-norm clipped at `grad_clip`.
/// Minibatches whose importance ratios overflow are skipped with a
/// diagnostic rather than poisoning the parameters.
pub fn ppo_update<R: Rng>(
    policy: &mut GaussianPolicy,
    data: &StepData,
    cfg: &PpoConfig,
    adam: &mut Adam,
    rng: &mut R,
) -> PpoReport {
    let n = data.len();
    let mut report = PpoReport::default();
    if n == 0 {
        return report;
    }
    adam.set_lr(cfg.lr);
    let all: Vec<usize> = (0..n).collect();
    report.surrogate_before = clipped_surrogate(policy, data, &all, cfg.clip);
    let mut order: Vec<usize> = all.clone();
    for _epoch in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.minibatch.max(1)) {
            report.minibatches += 1;
            if !minibatch_step(policy, data, chunk, cfg, adam, &mut report.diagnostics) {
                report.skipped += 1;
            }
        }
    }
    report.surrogate_after = clipped_surrogate(policy, data, &all, cfg.clip);
    report
}

/// Returns false if the minibatch was skipped.
fn minibatch_step(
    policy: &mut GaussianPolicy,
    data: &StepData,
    chunk: &[usize],
    cfg: &PpoConfig,
    adam: &mut Adam,
    diagnostics: &mut Vec<String>,
) -> bool {
    let m = chunk.len();
    let (xs, acts) = gather(data, chunk);
    let (lps, trace) = policy.log_probs_batch(xs.view(), acts.view());
    // Active-branch coefficients of the clipped surrogate: the gradient of
    // min(ρA, clip(ρ)A) w.r.t. log π is ρA when the unclipped branch is
    // active (A≥0 and ρ≤1+ε, or A<0 and ρ≥1−ε) and zero otherwise.
    let mut coeffs = Vec::with_capacity(m);
    for (r, &i) in chunk.iter().enumerate() {
        let log_ratio = lps[r] - data.old_log_probs[i];
        if !log_ratio.is_finite() || log_ratio.abs() > LOG_RATIO_LIMIT {
            diagnostics.push(format!(
                "skipped minibatch: log ratio {log_ratio:.3e} at sample {i} exceeds limit"
            ));
            return false;
        }
        let ratio = log_ratio.exp();
        let a = data.advantages[i];
        let active = if a >= 0.0 { ratio <= 1.0 + cfg.clip } else { ratio >= 1.0 - cfg.clip };
        // Ascent on the surrogate; Adam applies descent, so negate.
        let c = if active { ratio * a } else { 0.0 };
        coeffs.push(-c / m as f64);
    }
    let mut grads = vec![0.0; policy.param_count()];
    policy.accumulate_score_batch(&trace, acts.view(), &coeffs, &mut grads);
    if grads.iter().any(|g| !g.is_finite()) {
        diagnostics.push("skipped minibatch: non-finite gradient".to_string());
        return false;
    }
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if cfg.grad_clip.is_finite() && norm > cfg.grad_clip {
        let s = cfg.grad_clip / norm;
        for g in &mut grads {
            *g *= s;
        }
    }
    let mut params = policy.flat_params();
    adam.apply(&mut params, &grads);
    policy.set_flat_params(&params);
    true
}

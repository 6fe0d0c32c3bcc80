use ndarray::{s, Array2};

use super::returns::td_lambda_returns;
use crate::env::Trajectory;
use crate::nn::GaussianPolicy;

/// Flattened per-step view of a batch of trajectories, in trajectory-major
/// order. `advantages` holds G_t^λ − b(s_t), raw (never re-standardized).
#[derive(Debug, Clone)]
pub struct StepData {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
}

impl StepData {
    pub fn len(&self) -> usize {
        self.old_log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.old_log_probs.is_empty()
    }

    /// Keeps only the first `n` steps; a no-op when `n` covers the table.
    pub fn truncate(&mut self, n: usize) {
        if n >= self.len() {
            return;
        }
        self.states = self.states.slice(s![..n, ..]).to_owned();
        self.actions = self.actions.slice(s![..n, ..]).to_owned();
        self.old_log_probs.truncate(n);
        self.advantages.truncate(n);
    }

    /// Builds the flat step table from trajectories: TD(λ) returns against
    /// the active baseline, advantages left in raw reward units.
    pub fn from_trajectories<V, B>(
        trajectories: &[Trajectory],
        value_fn: V,
        baseline_fn: B,
        gamma: f64,
        lambda: f64,
    ) -> StepData
    where
        V: Fn(&[f64]) -> f64,
        B: Fn(&[f64]) -> f64,
    {
        let n: usize = trajectories.iter().map(Trajectory::len).sum();
        let obs_dim = trajectories
            .iter()
            .find(|t| !t.is_empty())
            .map_or(0, |t| t.steps[0].obs.len());
        let act_dim = trajectories
            .iter()
            .find(|t| !t.is_empty())
            .map_or(0, |t| t.steps[0].action.len());
        let mut states = Array2::zeros((n, obs_dim));
        let mut actions = Array2::zeros((n, act_dim));
        let mut old_log_probs = Vec::with_capacity(n);
        let mut advantages = Vec::with_capacity(n);
        let mut row = 0;
        for traj in trajectories {
            let returns = td_lambda_returns(traj, &value_fn, gamma, lambda);
            for (step, g) in traj.steps.iter().zip(returns) {
                for (j, &x) in step.obs.iter().enumerate() {
                    states[[row, j]] = x;
                }
                for (j, &a) in step.action.iter().enumerate() {
                    actions[[row, j]] = a;
                }
                old_log_probs.push(step.log_prob);
                advantages.push(g - baseline_fn(&step.obs));
                row += 1;
            }
        }
        StepData { states, actions, old_log_probs, advantages }
    }
}

/// Score-function gradient (1/N) Σ_i ∇_θ log π(a_i|s_i) · w_i over the given
/// step subset, reading the weights from the table's advantage column. This
/// is the per-sample form of the policy-gradient estimator.
pub fn score_gradient(
    policy: &GaussianPolicy,
    data: &StepData,
    indices: &[usize],
) -> Vec<f64> {
    let weights: Vec<f64> = indices.iter().map(|&i| data.advantages[i]).collect();
    score_gradient_weighted(policy, data, indices, &weights)
}

/// [`score_gradient`] with an explicit weight per selected step; `weights[j]`
/// pairs with `indices[j]`, overriding the table's advantage column.
pub fn score_gradient_weighted(
    policy: &GaussianPolicy,
    data: &StepData,
    indices: &[usize],
    weights: &[f64],
) -> Vec<f64> {
    assert_eq!(indices.len(), weights.len(), "one weight per selected step");
    let mut grads = vec![0.0; policy.param_count()];
    if indices.is_empty() {
        return grads;
    }
    let m = indices.len();
    let obs_dim = data.states.ncols();
    let act_dim = data.actions.ncols();
    let mut xs = Array2::zeros((m, obs_dim));
    let mut acts = Array2::zeros((m, act_dim));
    let mut coeffs = Vec::with_capacity(m);
    for (r, &i) in indices.iter().enumerate() {
        for j in 0..obs_dim {
            xs[[r, j]] = data.states[[i, j]];
        }
        for j in 0..act_dim {
            acts[[r, j]] = data.actions[[i, j]];
        }
        coeffs.push(weights[r] / m as f64);
    }
    let (_, trace) = policy.log_probs_batch(xs.view(), acts.view());
    policy.accumulate_score_batch(&trace, acts.view(), &coeffs, &mut grads);
    grads
}

/// The literal estimator of the policy-gradient expectation: mean over
/// trajectories of the per-trajectory sum Σ_t ∇ log π (G_t^λ − b(s_t)).
pub fn eq1_gradient<V, B>(
    policy: &GaussianPolicy,
    trajectories: &[Trajectory],
    value_fn: V,
    baseline_fn: B,
    gamma: f64,
    lambda: f64,
) -> Vec<f64>
where
    V: Fn(&[f64]) -> f64,
    B: Fn(&[f64]) -> f64,
{
    let data = StepData::from_trajectories(trajectories, value_fn, baseline_fn, gamma, lambda);
    let n = data.len();
    if n == 0 || trajectories.is_empty() {
        return vec![0.0; policy.param_count()];
    }
    let indices: Vec<usize> = (0..n).collect();
    // score_gradient divides by the step count; rescale to per-trajectory.
    let mut g = score_gradient(policy, &data, &indices);
    let scale = n as f64 / trajectories.len() as f64;
    for v in &mut g {
        *v *= scale;
    }
    g
}

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{BatchTrace, Mlp};

const LOG_STD_MIN: f64 = -20.0;
const LOG_STD_MAX: f64 = 2.0;
const LN_2PI: f64 = 1.8378770664093453;

/// Diagonal Gaussian policy with a state-independent log standard deviation.
///
/// The mean is an affine map of the network output,
/// `mean = center + scale * net(s)`, and the per-dimension standard deviation
/// is `scale * exp(log_std)`. With the default `center = 0`, `scale = 1` this
/// is the plain `N(net(s), diag(exp(log_std))^2)` head; environments with
/// asymmetric control boxes (quadrotor thrust) configure the affine map so a
/// zero-initialized network starts centered in the control box.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianPolicy {
    pub mean_net: Mlp,
    log_std: Vec<f64>,
    action_center: Vec<f64>,
    action_scale: Vec<f64>,
}

impl GaussianPolicy {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, act_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut widths = vec![obs_dim];
        widths.extend_from_slice(hidden);
        widths.push(act_dim);
        GaussianPolicy {
            mean_net: Mlp::new(&widths, rng),
            log_std: vec![0.0; act_dim],
            action_center: vec![0.0; act_dim],
            action_scale: vec![1.0; act_dim],
        }
    }

    pub fn with_action_map(mut self, center: Vec<f64>, scale: Vec<f64>) -> Self {
        assert_eq!(center.len(), self.act_dim());
        assert_eq!(scale.len(), self.act_dim());
        assert!(scale.iter().all(|&s| s > 0.0), "action scale must be positive");
        self.action_center = center;
        self.action_scale = scale;
        self
    }

    pub fn act_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn obs_dim(&self) -> usize {
        self.mean_net.in_dim()
    }

    pub fn log_std(&self) -> &[f64] {
        &self.log_std
    }

    /// Total trainable parameter count (mean net plus log_std tail).
    pub fn param_count(&self) -> usize {
        self.mean_net.param_count() + self.log_std.len()
    }

    /// Flat parameter vector: mean-net parameters followed by log_std.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = self.mean_net.params().to_vec();
        out.extend_from_slice(&self.log_std);
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        let n = self.mean_net.param_count();
        assert_eq!(flat.len(), n + self.log_std.len());
        self.mean_net.params_mut().copy_from_slice(&flat[..n]);
        self.log_std.copy_from_slice(&flat[n..]);
        self.clamp_log_std();
    }

    /// Keeps the exploration width inside its stability band.
    pub fn clamp_log_std(&mut self) {
        for ls in &mut self.log_std {
            *ls = ls.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }

    pub fn mean(&self, state: &[f64]) -> Vec<f64> {
        let raw = self.mean_net.forward_trace(state);
        raw.output()
            .iter()
            .zip(&self.action_center)
            .zip(&self.action_scale)
            .map(|((o, c), s)| c + s * o)
            .collect()
    }

    pub fn std(&self) -> Vec<f64> {
        self.log_std
            .iter()
            .zip(&self.action_scale)
            .map(|(ls, s)| s * ls.exp())
            .collect()
    }

    /// Draws an action and returns it with its exact Gaussian log-density.
    ///
    /// The action is unclamped; control bounds are the environment's concern
    /// and the log-probability refers to the pre-clamp sample.
    pub fn sample<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R) -> (Vec<f64>, f64) {
        let mean = self.mean(state);
        let std = self.std();
        let mut action = Vec::with_capacity(mean.len());
        let mut log_prob = 0.0;
        for i in 0..mean.len() {
            let z: f64 = rng.sample(StandardNormal);
            action.push(mean[i] + std[i] * z);
            log_prob += -0.5 * z * z - std[i].ln() - 0.5 * LN_2PI;
        }
        (action, log_prob)
    }

    pub fn log_prob(&self, state: &[f64], action: &[f64]) -> f64 {
        let mean = self.mean(state);
        self.log_prob_given_mean(&mean, action)
    }

    fn log_prob_given_mean(&self, mean: &[f64], action: &[f64]) -> f64 {
        let std = self.std();
        let mut lp = 0.0;
        for i in 0..mean.len() {
            let z = (action[i] - mean[i]) / std[i];
            lp += -0.5 * z * z - std[i].ln() - 0.5 * LN_2PI;
        }
        lp
    }

    /// Batched log-probabilities; returns the forward trace for reuse by
    /// [`GaussianPolicy::accumulate_score_batch`].
    pub fn log_probs_batch(
        &self,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
    ) -> (Vec<f64>, BatchTrace) {
        let trace = self.mean_net.forward_batch(states);
        let out = trace.output();
        let std = self.std();
        let mut lps = Vec::with_capacity(out.nrows());
        for i in 0..out.nrows() {
            let mut lp = 0.0;
            for j in 0..self.act_dim() {
                let mean = self.action_center[j] + self.action_scale[j] * out[[i, j]];
                let z = (actions[[i, j]] - mean) / std[j];
                lp += -0.5 * z * z - std[j].ln() - 0.5 * LN_2PI;
            }
            lps.push(lp);
        }
        (lps, trace)
    }

    /// Accumulates `sum_i coeff_i * d log pi(a_i|s_i) / d theta` into `grads`
    /// (flat layout: mean-net parameters then log_std).
    pub fn accumulate_score_batch(
        &self,
        trace: &BatchTrace,
        actions: ArrayView2<f64>,
        coeffs: &[f64],
        grads: &mut [f64],
    ) {
        let out = trace.output();
        let n = out.nrows();
        assert_eq!(coeffs.len(), n);
        assert_eq!(grads.len(), self.param_count());
        let std = self.std();
        let act_dim = self.act_dim();
        let net_params = self.mean_net.param_count();

        // d logp / d net_out = coeff * (a - mean) / sigma^2 * scale
        let mut deltas = Array2::zeros((n, act_dim));
        for i in 0..n {
            for j in 0..act_dim {
                let mean = self.action_center[j] + self.action_scale[j] * out[[i, j]];
                let z = (actions[[i, j]] - mean) / std[j];
                deltas[[i, j]] = coeffs[i] * z / std[j] * self.action_scale[j];
                // d logp / d log_std_j = z^2 - 1 (sigma = scale*exp(ls)).
                grads[net_params + j] += coeffs[i] * (z * z - 1.0);
            }
        }
        self.mean_net.backward_batch(trace, deltas.view(), &mut grads[..net_params]);
    }

    /// Single-sample score accumulation, used by the gradient analysis.
    pub fn accumulate_score(&self, state: &[f64], action: &[f64], coeff: f64, grads: &mut [f64]) {
        let trace = self.mean_net.forward_trace(state);
        let out = trace.output();
        let std = self.std();
        let net_params = self.mean_net.param_count();
        let mut delta = vec![0.0; self.act_dim()];
        for j in 0..self.act_dim() {
            let mean = self.action_center[j] + self.action_scale[j] * out[j];
            let z = (action[j] - mean) / std[j];
            delta[j] = coeff * z / std[j] * self.action_scale[j];
            grads[net_params + j] += coeff * (z * z - 1.0);
        }
        self.mean_net.backward(&trace, &delta, &mut grads[..net_params]);
    }
}

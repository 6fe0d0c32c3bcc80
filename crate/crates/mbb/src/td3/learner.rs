use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::buffer::TransitionBatch;
use crate::baseline::Baseline;
use crate::env::EnvConfig;
use crate::error::{MbbError, Result};
use crate::nn::{Adam, BatchTrace, Mlp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Td3Mode {
    Standard,
    /// Both Q targets replaced by the frozen one-step model value
    /// r + γ·V^M(s′), with Q-target polyak updates disabled.
    Mbb,
}

impl Td3Mode {
    pub fn parse(name: &str) -> Result<Td3Mode> {
        match name {
            "standard" => Ok(Td3Mode::Standard),
            "mbb" => Ok(Td3Mode::Mbb),
            other => {
                Err(MbbError::Config(format!("unknown td3 mode {other:?}; expected standard or mbb")))
            }
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Td3Mode::Standard => "standard",
            Td3Mode::Mbb => "mbb",
        }
    }
}

impl std::fmt::Display for Td3Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// All noise scales are fractions of the per-dimension control half-range,
/// matching the normalized-action convention the listed constants assume.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Td3Config {
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub polyak: f64,
    pub policy_noise: f64,
    pub noise_clip: f64,
    pub exploration_noise: f64,
    pub policy_update_freq: usize,
    pub total_timesteps: usize,
    /// Uniform-random action steps before the actor drives collection.
    pub start_steps: usize,
    /// Environment steps between update bursts.
    pub steps_per_update: usize,
    /// Gradient steps per burst.
    pub grad_steps: usize,
    pub buffer_capacity: usize,
    pub batch: usize,
    pub hidden: Vec<usize>,
    /// Environment steps per run-log row.
    pub log_every: usize,
}

impl Default for Td3Config {
    fn default() -> Self {
        Td3Config {
            gamma: 0.99,
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            polyak: 0.995,
            policy_noise: 0.2,
            noise_clip: 0.5,
            exploration_noise: 0.1,
            policy_update_freq: 2,
            total_timesteps: 300_000,
            start_steps: 10_000,
            steps_per_update: 32,
            grad_steps: 1,
            buffer_capacity: 100_000,
            batch: 256,
            hidden: vec![256, 256],
            log_every: 2048,
        }
    }
}

/// Deterministic policy μ(s) = center + scale·tanh(net(s)), always inside
/// the control box.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeterministicActor {
    pub net: Mlp,
    center: Vec<f64>,
    scale: Vec<f64>,
}

impl DeterministicActor {
    pub fn new(
        obs_dim: usize,
        act_dim: usize,
        hidden: &[usize],
        center: Vec<f64>,
        scale: Vec<f64>,
        rng: &mut ChaCha12Rng,
    ) -> DeterministicActor {
        let mut widths = vec![obs_dim];
        widths.extend_from_slice(hidden);
        widths.push(act_dim);
        DeterministicActor { net: Mlp::new(&widths, rng), center, scale }
    }

    pub fn act(&self, obs: &[f64]) -> Vec<f64> {
        let raw = self.net.forward_trace(obs);
        raw.output()
            .iter()
            .zip(self.center.iter().zip(&self.scale))
            .map(|(&u, (&c, &s))| c + s * u.tanh())
            .collect()
    }

    /// Batched forward pass returning the trace and squashed outputs needed
    /// to push a gradient back through the tanh head.
    pub fn act_batch(&self, states: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>, BatchTrace) {
        let trace = self.net.forward_batch(states);
        let raw = trace.output();
        let mut u = Array2::zeros(raw.raw_dim());
        let mut actions = Array2::zeros(raw.raw_dim());
        for r in 0..raw.nrows() {
            for j in 0..raw.ncols() {
                let t = raw[[r, j]].tanh();
                u[[r, j]] = t;
                actions[[r, j]] = self.center[j] + self.scale[j] * t;
            }
        }
        (actions, u, trace)
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }
}

/// Twin-critic TD3 learner. Critics take the concatenated (s, a) row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Td3Learner {
    pub actor: DeterministicActor,
    pub actor_target: DeterministicActor,
    pub critic1: Mlp,
    pub critic2: Mlp,
    pub critic1_target: Mlp,
    pub critic2_target: Mlp,
    pub cfg: Td3Config,
    actor_adam: Adam,
    critic1_adam: Adam,
    critic2_adam: Adam,
    control_low: Vec<f64>,
    control_high: Vec<f64>,
    /// Gradient steps taken; drives the delayed actor/target schedule.
    pub steps: usize,
}

impl Td3Learner {
    pub fn new(env_cfg: &EnvConfig, cfg: &Td3Config, rng: &mut ChaCha12Rng) -> Td3Learner {
        let obs_dim = env_cfg.obs_dim();
        let act_dim = env_cfg.action_dim();
        let center: Vec<f64> = env_cfg
            .control_low
            .iter()
            .zip(&env_cfg.control_high)
            .map(|(&l, &h)| 0.5 * (l + h))
            .collect();
        let scale: Vec<f64> = env_cfg
            .control_low
            .iter()
            .zip(&env_cfg.control_high)
            .map(|(&l, &h)| 0.5 * (h - l))
            .collect();
        let actor = DeterministicActor::new(obs_dim, act_dim, &cfg.hidden, center, scale, rng);
        let mut qwidths = vec![obs_dim + act_dim];
        qwidths.extend_from_slice(&cfg.hidden);
        qwidths.push(1);
        let critic1 = Mlp::new(&qwidths, rng);
        let critic2 = Mlp::new(&qwidths, rng);
        Td3Learner {
            actor_target: actor.clone(),
            critic1_target: critic1.clone(),
            critic2_target: critic2.clone(),
            actor_adam: Adam::new(actor.net.param_count(), cfg.actor_lr),
            critic1_adam: Adam::new(critic1.param_count(), cfg.critic_lr),
            critic2_adam: Adam::new(critic2.param_count(), cfg.critic_lr),
            actor,
            critic1,
            critic2,
            cfg: cfg.clone(),
            control_low: env_cfg.control_low.clone(),
            control_high: env_cfg.control_high.clone(),
            steps: 0,
        }
    }

    fn all_live_params_finite(&self) -> bool {
        self.actor.net.params().iter().all(|p| p.is_finite())
            && self.critic1.params().iter().all(|p| p.is_finite())
            && self.critic2.params().iter().all(|p| p.is_finite())
    }

    /// Hash of both Q-target parameter vectors; constant in MBB mode.
    pub fn q_target_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for &p in self.critic1_target.params().iter().chain(self.critic2_target.params()) {
            h.update(p.to_bits().to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// One-step model-based Q target: y = r + γ·(1−done)·V^M(s′). Replaces the
/// min over the two Q-target networks.
pub fn q_target_mbb(r: f64, s2: &[f64], done: bool, v_model: &Baseline, gamma: f64) -> f64 {
    if done {
        r
    } else {
        r + gamma * v_model.value(s2)
    }
}

/// Batched MBB targets; element-wise identical to `q_target_mbb`.
pub fn mbb_targets(batch: &TransitionBatch, v_model: &Baseline, gamma: f64) -> Vec<f64> {
    let mut y = Vec::with_capacity(batch.len());
    for i in 0..batch.len() {
        let s2: Vec<f64> = batch.s2.row(i).to_vec();
        y.push(q_target_mbb(batch.r[i], &s2, batch.done[i], v_model, gamma));
    }
    y
}

fn concat_rows(s: &Array2<f64>, a: &Array2<f64>) -> Array2<f64> {
    let m = s.nrows();
    let mut out = Array2::zeros((m, s.ncols() + a.ncols()));
    for r in 0..m {
        for j in 0..s.ncols() {
            out[[r, j]] = s[[r, j]];
        }
        for j in 0..a.ncols() {
            out[[r, s.ncols() + j]] = a[[r, j]];
        }
    }
    out
}

/// Mean squared Bellman error of one critic on a batch against targets `y`.
pub fn critic_loss(critic: &Mlp, batch: &TransitionBatch, y: &[f64]) -> f64 {
    let qin = concat_rows(&batch.s, &batch.a);
    let trace = critic.forward_batch(qin.view());
    let out = trace.output();
    let mut sse = 0.0;
    for i in 0..batch.len() {
        let e = out[[i, 0]] - y[i];
        sse += e * e;
    }
    sse / batch.len() as f64
}

fn polyak(target: &mut [f64], live: &[f64], rho: f64) {
    if rho == 0.0 {
        target.copy_from_slice(live);
    } else {
        // Delta form: exact no-op at ρ=1 and when target already equals live.
        for (t, &l) in target.iter_mut().zip(live) {
            *t += (1.0 - rho) * (l - *t);
        }
    }
}

fn regress_critic(
    critic: &mut Mlp,
    adam: &mut Adam,
    qin: &Array2<f64>,
    y: &[f64],
) -> Result<()> {
    let m = y.len();
    let trace = critic.forward_batch(qin.view());
    let mut og = Array2::zeros((m, 1));
    for i in 0..m {
        og[[i, 0]] = 2.0 * (trace.output()[[i, 0]] - y[i]) / m as f64;
    }
    let mut grads = vec![0.0; critic.param_count()];
    critic.backward_batch(&trace, og.view(), &mut grads);
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(MbbError::Numerical("non-finite critic gradient".into()));
    }
    adam.apply(critic.params_mut(), &grads);
    Ok(())
}

/// One TD3 gradient step on a sampled batch: twin-critic regression to the
/// mode's target, then on every `policy_update_freq`-th call the delayed
/// actor ascent on Q_φ1(s, μ(s)) and polyak target updates. MBB mode skips
/// the Q-target polyak entirely (those networks are never consulted) while
/// keeping the actor-target update.
pub fn td3_step(
    learner: &mut Td3Learner,
    batch: &TransitionBatch,
    mode: Td3Mode,
    v_model: Option<&Baseline>,
    rng: &mut ChaCha12Rng,
) -> Result<()> {
    if batch.is_empty() {
        return Err(MbbError::Config("empty td3 batch".into()));
    }
    let m = batch.len();
    let gamma = learner.cfg.gamma;

    let y = match mode {
        Td3Mode::Mbb => {
            let vm = v_model.ok_or_else(|| {
                MbbError::Config("MBB mode requires the model value function".into())
            })?;
            mbb_targets(batch, vm, gamma)
        }
        Td3Mode::Standard => {
            // Target-policy smoothing: clipped Gaussian noise on the target
            // action, then the pessimistic min over the twin Q targets.
            let (mut a2, _, _) = learner.actor_target.act_batch(batch.s2.view());
            let scale = learner.actor.scale().to_vec();
            for r in 0..m {
                for j in 0..a2.ncols() {
                    let eps: f64 = rng.sample(StandardNormal);
                    let noise = (eps * learner.cfg.policy_noise * scale[j])
                        .clamp(-learner.cfg.noise_clip * scale[j], learner.cfg.noise_clip * scale[j]);
                    a2[[r, j]] = (a2[[r, j]] + noise)
                        .clamp(learner.control_low[j], learner.control_high[j]);
                }
            }
            let qin2 = concat_rows(&batch.s2, &a2);
            let q1 = learner.critic1_target.forward_batch(qin2.view());
            let q2 = learner.critic2_target.forward_batch(qin2.view());
            (0..m)
                .map(|i| {
                    let q_min = q1.output()[[i, 0]].min(q2.output()[[i, 0]]);
                    let not_done = if batch.done[i] { 0.0 } else { 1.0 };
                    batch.r[i] + gamma * not_done * q_min
                })
                .collect()
        }
    };
    if y.iter().any(|v| !v.is_finite()) {
        return Err(MbbError::Numerical("non-finite critic target".into()));
    }

    let qin = concat_rows(&batch.s, &batch.a);
    regress_critic(&mut learner.critic1, &mut learner.critic1_adam, &qin, &y)?;
    regress_critic(&mut learner.critic2, &mut learner.critic2_adam, &qin, &y)?;

    learner.steps += 1;
    if learner.steps % learner.cfg.policy_update_freq.max(1) == 0 {
        // Delayed actor ascent on (1/m) Σ Q_φ1(s, μ(s)): pull dQ/da out of
        // the critic as input gradients, fold the tanh head, backprop into
        // the actor. The critic's own parameter gradients are discarded.
        let (mu, u, atrace) = learner.actor.act_batch(batch.s.view());
        let qin_mu = concat_rows(&batch.s, &mu);
        let qtrace = learner.critic1.forward_batch(qin_mu.view());
        let ones = Array2::from_elem((m, 1), 1.0 / m as f64);
        let mut scratch = vec![0.0; learner.critic1.param_count()];
        let input_grads = learner.critic1.backward_batch(&qtrace, ones.view(), &mut scratch);
        let obs_dim = batch.s.ncols();
        let mut actor_og = Array2::zeros(u.raw_dim());
        for r in 0..m {
            for j in 0..u.ncols() {
                let dq_da = input_grads[[r, obs_dim + j]];
                // Ascent via descent optimizer: negate.
                actor_og[[r, j]] =
                    -dq_da * learner.actor.scale[j] * (1.0 - u[[r, j]] * u[[r, j]]);
            }
        }
        let mut agrads = vec![0.0; learner.actor.net.param_count()];
        learner.actor.net.backward_batch(&atrace, actor_og.view(), &mut agrads);
        if agrads.iter().any(|g| !g.is_finite()) {
            return Err(MbbError::Numerical("non-finite actor gradient".into()));
        }
        learner.actor_adam.apply(learner.actor.net.params_mut(), &agrads);

        let rho = learner.cfg.polyak;
        let live = learner.actor.net.params().to_vec();
        polyak(learner.actor_target.net.params_mut(), &live, rho);
        if mode == Td3Mode::Standard {
            let live1 = learner.critic1.params().to_vec();
            polyak(learner.critic1_target.params_mut(), &live1, rho);
            let live2 = learner.critic2.params().to_vec();
            polyak(learner.critic2_target.params_mut(), &live2, rho);
        }
    }

    if !learner.all_live_params_finite() {
        return Err(MbbError::Numerical("non-finite learner parameters".into()));
    }
    Ok(())
}

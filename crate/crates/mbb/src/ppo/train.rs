use std::fmt;
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use super::gradient::StepData;
use super::returns::td_lambda_returns;
use super::update::{ppo_update, PpoConfig};
use crate::baseline::{
    fit_baseline_to_targets, regress_baseline_to_returns, update_criterion, Baseline,
    BaselineVariant,
};
use crate::env::{rollout, Env, EnvConfig, EnvKind, Terminal, Trajectory};
use crate::error::{MbbError, Result};
use crate::nn::{Adam, GaussianPolicy, Mlp};

/// Label scale for the on-policy value function: the largest terminal reward
/// magnitude. Fixed a priori so every refit works in the same standardized
/// space and the function persists across iterations.
const VALUE_SCALE: f64 = 1000.0;

/// Which baseline the learner runs with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    /// Randomly initialized on-policy value function, refit every iteration.
    Baseline,
    ViFixed,
    ViUpdated,
    MpcFixed,
    MpcUpdated,
}

impl Arm {
    pub fn parse(name: &str) -> Result<Arm> {
        match name {
            "baseline" => Ok(Arm::Baseline),
            "vi-fixed" => Ok(Arm::ViFixed),
            "vi-updated" => Ok(Arm::ViUpdated),
            "mpc-fixed" => Ok(Arm::MpcFixed),
            "mpc-updated" => Ok(Arm::MpcUpdated),
            other => Err(MbbError::Config(format!(
                "unknown arm {other:?}; expected baseline, vi-fixed, vi-updated, mpc-fixed, or mpc-updated"
            ))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Arm::Baseline => "baseline",
            Arm::ViFixed => "vi-fixed",
            Arm::ViUpdated => "vi-updated",
            Arm::MpcFixed => "mpc-fixed",
            Arm::MpcUpdated => "mpc-updated",
        }
    }

    /// True for arms whose baseline comes from a solved model.
    pub fn is_model_based(&self) -> bool {
        !matches!(self, Arm::Baseline)
    }

    /// True for arms that run the update criterion each iteration.
    pub fn is_updated(&self) -> bool {
        matches!(self, Arm::ViUpdated | Arm::MpcUpdated)
    }

    pub fn variant(&self) -> BaselineVariant {
        match self {
            Arm::ViFixed | Arm::MpcFixed => BaselineVariant::Fixed,
            _ => BaselineVariant::Updated,
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PpoTrainConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub lr: f64,
    pub grad_clip: f64,
    pub total_timesteps: usize,
    pub steps_per_iter: usize,
    pub minibatch: usize,
    pub epochs: usize,
    pub value_lr: f64,
    pub value_epochs: usize,
    pub hidden: Vec<usize>,
    /// Iterations between retained checkpoints; zero disables them.
    pub checkpoint_every: usize,
}

impl Default for PpoTrainConfig {
    fn default() -> Self {
        PpoTrainConfig {
            gamma: 0.998,
            lambda: 1.0,
            clip: 0.2,
            lr: 3e-4,
            grad_clip: 0.5,
            total_timesteps: 300_000,
            steps_per_iter: 2048,
            minibatch: 256,
            epochs: 10,
            value_lr: 1e-3,
            value_epochs: 10,
            hidden: vec![64, 64],
            checkpoint_every: 0,
        }
    }
}

/// Samples and wall time spent producing the warm-started baseline, carried
/// into the run log so efficiency claims account for it.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct WarmStartCost {
    pub samples: usize,
    pub wall_seconds: f64,
}

/// Summary of one iteration's advantage distribution. Storing the sum and
/// count (rather than the mean) lets window aggregates over many iterations
/// recover the exact pooled mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdvStat {
    pub min: f64,
    pub max: f64,
    pub sum: f64,
    pub count: usize,
}

impl AdvStat {
    pub fn from_slice(advantages: &[f64]) -> AdvStat {
        let mut stat = AdvStat { min: f64::INFINITY, max: f64::NEG_INFINITY, sum: 0.0, count: 0 };
        for &a in advantages {
            stat.min = stat.min.min(a);
            stat.max = stat.max.max(a);
            stat.sum += a;
            stat.count += 1;
        }
        if stat.count == 0 {
            stat.min = 0.0;
            stat.max = 0.0;
        }
        stat
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRow {
    pub iteration: usize,
    /// Cumulative environment steps after this iteration.
    pub samples: usize,
    /// Mean discounted episode return of the iteration's batch.
    pub mean_return: f64,
    pub success_rate: f64,
    pub collision_rate: f64,
    pub trap_rate: f64,
    /// Update-criterion decision; None for arms that never run it.
    pub criterion: Option<bool>,
    /// Seconds of training wall time elapsed at the end of this iteration,
    /// excluding warm-start cost.
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunLog {
    pub arm: Arm,
    pub env: String,
    pub seed: u64,
    pub gamma: f64,
    pub lambda: f64,
    pub total_timesteps: usize,
    pub warm_start: WarmStartCost,
    pub rows: Vec<IterationRow>,
    /// Per-iteration advantage distribution, aligned with `rows`.
    pub advantage_stats: Vec<AdvStat>,
    /// Baseline parameter hash after each iteration's maintenance step.
    pub baseline_hashes: Vec<String>,
    pub diagnostics: Vec<String>,
    pub aborted: Option<String>,
}

impl RunLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "# ppo arm={} env={} seed={} gamma={} lambda={} total_timesteps={}\n",
            self.arm, self.env, self.seed, self.gamma, self.lambda, self.total_timesteps
        ));
        out.push_str(&format!(
            "# warm_start_samples={} warm_start_wall_seconds={:.3}\n",
            self.warm_start.samples, self.warm_start.wall_seconds
        ));
        if let Some(msg) = &self.aborted {
            out.push_str(&format!("# aborted={msg}\n"));
        }
        out.push_str(
            "iteration,samples,mean_return,success_rate,collision_rate,trap_rate,criterion,wall_seconds\n",
        );
        for r in &self.rows {
            let crit = match r.criterion {
                None => "",
                Some(true) => "1",
                Some(false) => "0",
            };
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6},{:.6},{},{:.3}\n",
                r.iteration,
                r.samples,
                r.mean_return,
                r.success_rate,
                r.collision_rate,
                r.trap_rate,
                crit,
                r.wall_seconds
            ));
        }
        for d in &self.diagnostics {
            out.push_str(&format!("# note {d}\n"));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Byte-level reproducibility holds for everything except wall-clock
    /// fields; this comparison masks those.
    pub fn matches_ignoring_wall(&self, other: &RunLog) -> bool {
        self.arm == other.arm
            && self.env == other.env
            && self.seed == other.seed
            && self.gamma == other.gamma
            && self.lambda == other.lambda
            && self.total_timesteps == other.total_timesteps
            && self.warm_start.samples == other.warm_start.samples
            && self.advantage_stats == other.advantage_stats
            && self.baseline_hashes == other.baseline_hashes
            && self.diagnostics == other.diagnostics
            && self.aborted == other.aborted
            && self.rows.len() == other.rows.len()
            && self.rows.iter().zip(&other.rows).all(|(a, b)| {
                a.iteration == b.iteration
                    && a.samples == b.samples
                    && a.mean_return == b.mean_return
                    && a.success_rate == b.success_rate
                    && a.collision_rate == b.collision_rate
                    && a.trap_rate == b.trap_rate
                    && a.criterion == b.criterion
            })
    }

    /// Final mean return, or negative infinity for an empty log.
    pub fn final_mean_return(&self) -> f64 {
        self.rows.last().map_or(f64::NEG_INFINITY, |r| r.mean_return)
    }

    /// Success rate averaged over the last `k` iterations.
    pub fn tail_success_rate(&self, k: usize) -> f64 {
        let n = self.rows.len();
        if n == 0 || k == 0 {
            return 0.0;
        }
        let tail = &self.rows[n.saturating_sub(k)..];
        tail.iter().map(|r| r.success_rate).sum::<f64>() / tail.len() as f64
    }

    /// Trap-arrival rate averaged over the last `k` iterations.
    pub fn tail_trap_rate(&self, k: usize) -> f64 {
        let n = self.rows.len();
        if n == 0 || k == 0 {
            return 0.0;
        }
        let tail = &self.rows[n.saturating_sub(k)..];
        tail.iter().map(|r| r.trap_rate).sum::<f64>() / tail.len() as f64
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub iteration: usize,
    pub policy: GaussianPolicy,
    pub baseline: Baseline,
}

#[derive(Debug, Clone)]
pub struct PpoRun {
    pub log: RunLog,
    pub policy: GaussianPolicy,
    pub baseline: Baseline,
    pub checkpoints: Vec<Checkpoint>,
}

/// Gaussian policy sized for the environment, with the action map centered
/// in the control box so the untrained network starts near feasible inputs.
pub fn policy_for_env(
    env_cfg: &EnvConfig,
    hidden: &[usize],
    rng: &mut ChaCha12Rng,
) -> GaussianPolicy {
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
    GaussianPolicy::new(env_cfg.obs_dim(), env_cfg.action_dim(), hidden, rng)
        .with_action_map(center, scale)
}

fn kind_label(kind: EnvKind) -> &'static str {
    match kind {
        EnvKind::Car => "car",
        EnvKind::Quadrotor => "quadrotor",
        EnvKind::TrapGoal => "trap-goal",
    }
}

/// Freezes the value function's input whitening to the first batch's
/// observation statistics.
fn set_input_stats(baseline: &mut Baseline, trajs: &[Trajectory]) {
    let dim = baseline.net.in_dim();
    let mut mean = vec![0.0; dim];
    let mut count = 0usize;
    for t in trajs {
        for s in &t.steps {
            for (m, &x) in mean.iter_mut().zip(&s.obs) {
                *m += x;
            }
            count += 1;
        }
    }
    if count == 0 {
        return;
    }
    for m in &mut mean {
        *m /= count as f64;
    }
    let mut std = vec![0.0; dim];
    for t in trajs {
        for s in &t.steps {
            for (v, (&x, &m)) in std.iter_mut().zip(s.obs.iter().zip(&mean)) {
                *v += (x - m) * (x - m);
            }
        }
    }
    for v in &mut std {
        *v = (*v / count as f64).sqrt();
        if *v < 1e-8 {
            *v = 1.0;
        }
    }
    baseline.input_mean = mean;
    baseline.input_std = std;
}

/// Flattens a batch into step tables: TD(λ) targets against the arm's
/// baseline, raw advantages, plus the raw observations and targets needed
/// for value-function maintenance.
fn flatten_batch(
    trajs: &[Trajectory],
    baseline: &Baseline,
    gamma: f64,
    lambda: f64,
) -> (StepData, Vec<Vec<f64>>, Vec<f64>) {
    let n: usize = trajs.iter().map(Trajectory::len).sum();
    let obs_dim = trajs[0].steps[0].obs.len();
    let act_dim = trajs[0].steps[0].action.len();
    let mut states = Array2::zeros((n, obs_dim));
    let mut actions = Array2::zeros((n, act_dim));
    let mut old_log_probs = Vec::with_capacity(n);
    let mut advantages = Vec::with_capacity(n);
    let mut flat_obs = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    let mut row = 0;
    for traj in trajs {
        let returns = td_lambda_returns(traj, |o| baseline.value(o), gamma, lambda);
        for (step, g_t) in traj.steps.iter().zip(returns) {
            for (j, &x) in step.obs.iter().enumerate() {
                states[[row, j]] = x;
            }
            for (j, &a) in step.action.iter().enumerate() {
                actions[[row, j]] = a;
            }
            old_log_probs.push(step.log_prob);
            advantages.push(g_t - baseline.value(&step.obs));
            flat_obs.push(step.obs.clone());
            targets.push(g_t);
            row += 1;
        }
    }
    (StepData { states, actions, old_log_probs, advantages }, flat_obs, targets)
}

/// Runs the on-policy training loop: collect full episodes to the step
/// budget, estimate TD(λ) returns against the arm's baseline, take the
/// clipped-surrogate policy step, then maintain the baseline (refit for the
/// on-policy arm, criterion-gated regression for updated arms, nothing for
/// fixed arms). Non-finite parameters or a diverged refit abort the run and
/// return the partial log.
pub fn train_ppo(
    env_cfg: &EnvConfig,
    arm: Arm,
    warm_baseline: Option<Baseline>,
    warm_cost: Option<WarmStartCost>,
    cfg: &PpoTrainConfig,
    seed: u64,
) -> Result<PpoRun> {
    if cfg.total_timesteps > 0 && cfg.steps_per_iter == 0 {
        return Err(MbbError::Config("steps_per_iter must be positive".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut env = Env::new(env_cfg.clone())?;
    let obs_dim = env_cfg.obs_dim();
    let mut policy = policy_for_env(env_cfg, &cfg.hidden, &mut rng);

    let mut baseline = match (arm, warm_baseline) {
        (Arm::Baseline, None) => {
            let mut widths = vec![obs_dim];
            widths.extend_from_slice(&cfg.hidden);
            widths.push(1);
            let mut b = Baseline::new(Mlp::new(&widths, &mut rng), BaselineVariant::Updated);
            b.label_std = VALUE_SCALE;
            b
        }
        (Arm::Baseline, Some(_)) => {
            return Err(MbbError::Config(
                "the baseline arm initializes its own value function; do not pass one".into(),
            ));
        }
        (_, Some(b)) => {
            if b.net.in_dim() != obs_dim {
                return Err(MbbError::Config(format!(
                    "warm baseline expects {} inputs, environment emits {obs_dim}",
                    b.net.in_dim()
                )));
            }
            b
        }
        (_, None) => {
            return Err(MbbError::Config(format!(
                "arm {arm} requires a warm-started baseline"
            )));
        }
    };

    let ppo_cfg = PpoConfig {
        clip: cfg.clip,
        epochs: cfg.epochs,
        minibatch: cfg.minibatch,
        lr: cfg.lr,
        grad_clip: cfg.grad_clip,
    };
    let mut policy_adam = Adam::new(policy.param_count(), cfg.lr);
    let mut value_adam = Adam::new(baseline.net.param_count(), cfg.value_lr);

    let mut log = RunLog {
        arm,
        env: kind_label(env_cfg.kind).to_string(),
        seed,
        gamma: cfg.gamma,
        lambda: cfg.lambda,
        total_timesteps: cfg.total_timesteps,
        warm_start: warm_cost.unwrap_or_default(),
        rows: Vec::new(),
        advantage_stats: Vec::new(),
        baseline_hashes: Vec::new(),
        diagnostics: Vec::new(),
        aborted: None,
    };
    let mut checkpoints = Vec::new();
    let start = Instant::now();
    let mut samples = 0usize;
    let mut iter = 0usize;

    while samples < cfg.total_timesteps {
        iter += 1;
        let mut trajs: Vec<Trajectory> = Vec::new();
        let mut batch_steps = 0usize;
        while batch_steps < cfg.steps_per_iter {
            let t = rollout(&mut env, &policy, &mut rng);
            if t.is_empty() {
                return Err(MbbError::Config(
                    "environment produced an empty episode; check the start distribution".into(),
                ));
            }
            batch_steps += t.len();
            trajs.push(t);
        }
        samples += batch_steps;

        let n_ep = trajs.len() as f64;
        let mean_return =
            trajs.iter().map(|t| t.discounted_return(cfg.gamma)).sum::<f64>() / n_ep;
        let rate = |term: Terminal| {
            trajs.iter().filter(|t| t.terminal == term).count() as f64 / n_ep
        };
        let success_rate = rate(Terminal::Goal);
        let collision_rate = rate(Terminal::Collision);
        let trap_rate = rate(Terminal::Trap);

        if iter == 1 && arm == Arm::Baseline {
            set_input_stats(&mut baseline, &trajs);
        }

        let (data, flat_obs, targets) = flatten_batch(&trajs, &baseline, cfg.gamma, cfg.lambda);
        log.advantage_stats.push(AdvStat::from_slice(&data.advantages));

        let report = ppo_update(&mut policy, &data, &ppo_cfg, &mut policy_adam, &mut rng);
        for d in report.diagnostics {
            log.diagnostics.push(format!("iteration {iter}: {d}"));
        }
        let mut abort: Option<String> = None;
        if policy.flat_params().iter().any(|p| !p.is_finite()) {
            abort = Some(format!("non-finite policy parameters at iteration {iter}"));
        }

        let criterion_flag = if abort.is_some() {
            None
        } else {
            match arm {
                Arm::Baseline => {
                    if let Err(e) = fit_baseline_to_targets(
                        &mut baseline,
                        &flat_obs,
                        &targets,
                        cfg.value_epochs,
                        cfg.minibatch,
                        &mut value_adam,
                        &mut rng,
                    ) {
                        abort = Some(format!("value refit failed at iteration {iter}: {e}"));
                    }
                    None
                }
                Arm::ViFixed | Arm::MpcFixed => None,
                Arm::ViUpdated | Arm::MpcUpdated => {
                    let decision = update_criterion(&trajs, &baseline, cfg.gamma);
                    if decision {
                        match regress_baseline_to_returns(
                            &trajs,
                            &mut baseline,
                            cfg.gamma,
                            cfg.value_lr,
                            cfg.value_epochs,
                            cfg.minibatch,
                        ) {
                            Ok(_) => baseline.updates.push(iter),
                            Err(e) => {
                                abort = Some(format!(
                                    "baseline update failed at iteration {iter}: {e}"
                                ));
                            }
                        }
                    }
                    Some(decision)
                }
            }
        };

        log.baseline_hashes.push(baseline.param_hash());
        log.rows.push(IterationRow {
            iteration: iter,
            samples,
            mean_return,
            success_rate,
            collision_rate,
            trap_rate,
            criterion: criterion_flag,
            wall_seconds: start.elapsed().as_secs_f64(),
        });

        if cfg.checkpoint_every > 0 && iter % cfg.checkpoint_every == 0 {
            checkpoints.push(Checkpoint {
                iteration: iter,
                policy: policy.clone(),
                baseline: baseline.clone(),
            });
        }
        if abort.is_some() {
            log.aborted = abort;
            break;
        }
    }

    Ok(PpoRun { log, policy, baseline, checkpoints })
}

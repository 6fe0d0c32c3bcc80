use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::buffer::{ReplayBuffer, Transition};
use super::learner::{td3_step, Td3Config, Td3Learner, Td3Mode};
use crate::baseline::Baseline;
use crate::env::{Env, EnvConfig, Terminal};
use crate::error::{MbbError, Result};
use crate::ppo::{IterationRow, WarmStartCost};

/// Run log for off-policy training; same row schema as the on-policy log
/// plus a trailing mode column.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Td3RunLog {
    pub mode: Td3Mode,
    pub env: String,
    pub seed: u64,
    pub gamma: f64,
    pub total_timesteps: usize,
    pub warm_start: WarmStartCost,
    pub rows: Vec<IterationRow>,
    /// Q-target parameter hash at each row; constant in MBB mode.
    pub q_target_hashes: Vec<String>,
    pub diagnostics: Vec<String>,
    pub aborted: Option<String>,
}

impl Td3RunLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "# td3 mode={} env={} seed={} gamma={} total_timesteps={}\n",
            self.mode, self.env, self.seed, self.gamma, self.total_timesteps
        ));
        out.push_str(&format!(
            "# warm_start_samples={} warm_start_wall_seconds={:.3}\n",
            self.warm_start.samples, self.warm_start.wall_seconds
        ));
        if let Some(msg) = &self.aborted {
            out.push_str(&format!("# aborted={msg}\n"));
        }
        out.push_str(
            "iteration,samples,mean_return,success_rate,collision_rate,trap_rate,criterion,wall_seconds,mode\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6},{:.6},,{:.3},{}\n",
                r.iteration,
                r.samples,
                r.mean_return,
                r.success_rate,
                r.collision_rate,
                r.trap_rate,
                r.wall_seconds,
                self.mode
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

    pub fn matches_ignoring_wall(&self, other: &Td3RunLog) -> bool {
        self.mode == other.mode
            && self.env == other.env
            && self.seed == other.seed
            && self.gamma == other.gamma
            && self.total_timesteps == other.total_timesteps
            && self.warm_start.samples == other.warm_start.samples
            && self.q_target_hashes == other.q_target_hashes
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
            })
    }

    pub fn final_mean_return(&self) -> f64 {
        self.rows.last().map_or(f64::NEG_INFINITY, |r| r.mean_return)
    }
}

#[derive(Debug, Clone)]
pub struct Td3Run {
    pub log: Td3RunLog,
    pub learner: Td3Learner,
}

struct EpisodeWindow {
    returns: Vec<f64>,
    terminals: Vec<Terminal>,
}

impl EpisodeWindow {
    fn new() -> Self {
        EpisodeWindow { returns: Vec::new(), terminals: Vec::new() }
    }

    fn push(&mut self, ret: f64, terminal: Terminal) {
        self.returns.push(ret);
        self.terminals.push(terminal);
    }

    fn row(&self, iteration: usize, samples: usize, wall: f64) -> IterationRow {
        let n = self.returns.len() as f64;
        let rate =
            |t: Terminal| self.terminals.iter().filter(|&&x| x == t).count() as f64 / n;
        IterationRow {
            iteration,
            samples,
            mean_return: self.returns.iter().sum::<f64>() / n,
            success_rate: rate(Terminal::Goal),
            collision_rate: rate(Terminal::Collision),
            trap_rate: rate(Terminal::Trap),
            criterion: None,
            wall_seconds: wall,
        }
    }

    fn clear(&mut self) {
        self.returns.clear();
        self.terminals.clear();
    }
}

fn kind_label(cfg: &EnvConfig) -> &'static str {
    match cfg.kind {
        crate::env::EnvKind::Car => "car",
        crate::env::EnvKind::Quadrotor => "quadrotor",
        crate::env::EnvKind::TrapGoal => "trap-goal",
    }
}

/// Off-policy training loop: step the environment with the exploratory
/// actor (uniform random for the first `start_steps`), store folded-reward
/// transitions, and run gradient bursts on the configured cadence. A row is
/// logged every `log_every` environment steps over the episodes completed in
/// that window. Divergence aborts the run and returns the partial log.
pub fn train_td3(
    env_cfg: &EnvConfig,
    mode: Td3Mode,
    v_model: Option<&Baseline>,
    warm_cost: Option<WarmStartCost>,
    cfg: &Td3Config,
    seed: u64,
) -> Result<Td3Run> {
    if mode == Td3Mode::Mbb && v_model.is_none() {
        return Err(MbbError::Config("MBB mode requires a warm-started value function".into()));
    }
    if let Some(vm) = v_model {
        if vm.net.in_dim() != env_cfg.obs_dim() {
            return Err(MbbError::Config(format!(
                "model value function expects {} inputs, environment emits {}",
                vm.net.in_dim(),
                env_cfg.obs_dim()
            )));
        }
    }
    if cfg.buffer_capacity < cfg.batch {
        return Err(MbbError::Config("replay buffer capacity must cover one batch".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut env = Env::new(env_cfg.clone())?;
    let mut learner = Td3Learner::new(env_cfg, cfg, &mut rng);
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);

    let mut log = Td3RunLog {
        mode,
        env: kind_label(env_cfg).to_string(),
        seed,
        gamma: cfg.gamma,
        total_timesteps: cfg.total_timesteps,
        warm_start: warm_cost.unwrap_or_default(),
        rows: Vec::new(),
        q_target_hashes: Vec::new(),
        diagnostics: Vec::new(),
        aborted: None,
    };

    let scale: Vec<f64> = env_cfg
        .control_low
        .iter()
        .zip(&env_cfg.control_high)
        .map(|(&l, &h)| 0.5 * (h - l))
        .collect();
    let start = Instant::now();
    let mut obs = env.reset(&mut rng);
    let mut ep_rewards: Vec<f64> = Vec::new();
    let mut window = EpisodeWindow::new();
    let mut iteration = 0usize;

    for t in 0..cfg.total_timesteps {
        let action: Vec<f64> = if t < cfg.start_steps {
            env_cfg
                .control_low
                .iter()
                .zip(&env_cfg.control_high)
                .map(|(&l, &h)| rng.random_range(l..=h))
                .collect()
        } else {
            let mut a = learner.actor.act(&obs);
            for (j, v) in a.iter_mut().enumerate() {
                let eps: f64 = rng.sample(StandardNormal);
                *v = (*v + eps * cfg.exploration_noise * scale[j])
                    .clamp(env_cfg.control_low[j], env_cfg.control_high[j]);
            }
            a
        };

        let r_here = env.cfg().region_reward(env.region());
        let out = env.step(&action);
        let terminal_arrival = out.region.is_terminal();
        let folded = if terminal_arrival {
            r_here + cfg.gamma * env.cfg().region_reward(out.region)
        } else {
            r_here
        };
        buffer.push(Transition {
            s: std::mem::take(&mut obs),
            a: action,
            r: folded,
            s2: out.obs.clone(),
            done: terminal_arrival,
        });
        ep_rewards.push(r_here);

        if env.done() {
            let final_reward = env.cfg().region_reward(env.region());
            let len = ep_rewards.len();
            let mut ret = cfg.gamma.powi(len as i32) * final_reward;
            for (k, &r) in ep_rewards.iter().enumerate() {
                ret += cfg.gamma.powi(k as i32) * r;
            }
            window.push(ret, Terminal::from_region(env.region()));
            ep_rewards.clear();
            obs = env.reset(&mut rng);
        } else {
            obs = out.obs;
        }

        if buffer.len() >= cfg.batch && (t + 1) % cfg.steps_per_update.max(1) == 0 {
            for _ in 0..cfg.grad_steps {
                let batch = buffer.sample(cfg.batch, &mut rng);
                if let Err(e) = td3_step(&mut learner, &batch, mode, v_model, &mut rng) {
                    log.aborted = Some(format!("step {}: {e}", t + 1));
                    break;
                }
            }
        }

        let window_closes = (t + 1) % cfg.log_every.max(1) == 0 || t + 1 == cfg.total_timesteps;
        if (window_closes && !window.returns.is_empty()) || log.aborted.is_some() {
            iteration += 1;
            if window.returns.is_empty() {
                // Abort before any episode finished: log a placeholder row so
                // the abort is visible in the CSV.
                window.push(f64::NAN, Terminal::Timeout);
            }
            log.rows.push(window.row(iteration, t + 1, start.elapsed().as_secs_f64()));
            log.q_target_hashes.push(learner.q_target_hash());
            window.clear();
        }
        if log.aborted.is_some() {
            break;
        }
    }

    Ok(Td3Run { log, learner })
}

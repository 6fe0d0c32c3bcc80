use std::io::Write;

use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use super::{Env, Region};
use crate::error::Result;
use crate::nn::GaussianPolicy;

/// Anything that can pick an action from an observation. The log-probability
/// is that of the sampled action under the agent's own distribution
/// (deterministic agents report 0).
pub trait Agent {
    fn act(&self, obs: &[f64], rng: &mut ChaCha12Rng) -> (Vec<f64>, f64);
}

impl Agent for GaussianPolicy {
    fn act(&self, obs: &[f64], rng: &mut ChaCha12Rng) -> (Vec<f64>, f64) {
        self.sample(obs, rng)
    }
}

/// How an episode ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Terminal {
    Goal,
    Collision,
    Trap,
    Timeout,
}

impl Terminal {
    pub fn from_region(r: Region) -> Self {
        match r {
            Region::Goal => Terminal::Goal,
            Region::Collision => Terminal::Collision,
            Region::Trap => Terminal::Trap,
            Region::Interior => Terminal::Timeout,
        }
    }
}

/// One action step: the state acted from, the action, and that state's
/// reward (zero for every non-terminal state under the sparse scheme).
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub reward: f64,
}

/// Episode record: action steps s_0..s_{T-1} plus the final state s_T with
/// its reward. The return convention is Σ_t γ^t r(s_t) with the terminal
/// reward carried at its arrival index T.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub steps: Vec<StepRecord>,
    pub final_obs: Vec<f64>,
    pub final_reward: f64,
    pub terminal: Terminal,
}

impl Trajectory {
    /// Number of action steps T.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn is_timeout(&self) -> bool {
        self.terminal == Terminal::Timeout
    }

    pub fn discounted_return(&self, gamma: f64) -> f64 {
        let mut g = 0.0;
        for (t, step) in self.steps.iter().enumerate() {
            g += gamma.powi(t as i32) * step.reward;
        }
        g + gamma.powi(self.len() as i32) * self.final_reward
    }

    /// CSV dump, one row per state including the final one (whose action
    /// cells are empty). Floats use shortest-roundtrip formatting so reruns
    /// are byte-identical.
    pub fn write_csv<W: Write>(&self, state_names: &[&str], mut w: W) -> Result<()> {
        write!(w, "t")?;
        for n in state_names {
            write!(w, ",{n}")?;
        }
        let lidar = self.final_obs.len() - state_names.len();
        for i in 1..=lidar {
            write!(w, ",d{i}")?;
        }
        writeln!(w, ",a1,a2,reward,done")?;
        for (t, s) in self.steps.iter().enumerate() {
            write!(w, "{t}")?;
            for v in &s.obs {
                write!(w, ",{v}")?;
            }
            writeln!(w, ",{},{},{},0", s.action[0], s.action[1], s.reward)?;
        }
        write!(w, "{}", self.len())?;
        for v in &self.final_obs {
            write!(w, ",{v}")?;
        }
        writeln!(w, ",,,{},1", self.final_reward)?;
        Ok(())
    }
}

/// Runs one episode of `agent` in `env` from a fresh start state.
pub fn rollout(env: &mut Env, agent: &dyn Agent, rng: &mut ChaCha12Rng) -> Trajectory {
    let mut obs = env.reset(rng);
    rollout_from_current(env, agent, rng, &mut obs)
}

fn rollout_from_current(
    env: &mut Env,
    agent: &dyn Agent,
    rng: &mut ChaCha12Rng,
    obs: &mut Vec<f64>,
) -> Trajectory {
    let mut steps = Vec::new();
    while !env.done() {
        let (action, log_prob) = agent.act(obs, rng);
        let reward_here = env.cfg().region_reward(env.region());
        let out = env.step(&action);
        steps.push(StepRecord { obs: std::mem::take(obs), action, log_prob, reward: reward_here });
        *obs = out.obs;
    }
    Trajectory {
        steps,
        final_obs: obs.clone(),
        final_reward: env.cfg().region_reward(env.region()),
        terminal: Terminal::from_region(env.region()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvConfig;
    use rand::SeedableRng;

    struct Constant(Vec<f64>);
    impl Agent for Constant {
        fn act(&self, _obs: &[f64], _rng: &mut ChaCha12Rng) -> (Vec<f64>, f64) {
            (self.0.clone(), 0.0)
        }
    }

    #[test]
    fn max_steps_one_gives_length_one() {
        let mut cfg = EnvConfig::car_default();
        cfg.max_steps = 1;
        let mut env = Env::new(cfg).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let traj = rollout(&mut env, &Constant(vec![1.0, 0.0]), &mut rng);
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.terminal, Terminal::Timeout);
    }

    #[test]
    fn rollout_length_bounded_and_terminal_reward_placed() {
        let mut env = Env::new(EnvConfig::quad_default()).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let traj = rollout(&mut env, &Constant(vec![0.0, 0.0]), &mut rng);
        assert!(traj.len() <= 300);
        assert_eq!(traj.terminal, Terminal::Collision);
        assert_eq!(traj.final_reward, -400.0);
        assert!(traj.steps.iter().all(|s| s.reward == 0.0));
        // Single terminal reward at arrival index T.
        let gamma: f64 = 0.99;
        let expected = gamma.powi(traj.len() as i32) * -400.0;
        assert!((traj.discounted_return(gamma) - expected).abs() < 1e-9);
    }

    #[test]
    fn csv_rows_cover_every_state() {
        let mut cfg = EnvConfig::car_default();
        cfg.max_steps = 3;
        let mut env = Env::new(cfg).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let traj = rollout(&mut env, &Constant(vec![1.0, 0.5]), &mut rng);
        let mut buf = Vec::new();
        traj.write_csv(&["x", "y", "theta"], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), traj.len() + 2);
        assert_eq!(lines[0], "t,x,y,theta,d1,d2,d3,d4,d5,d6,d7,d8,a1,a2,reward,done");
        assert!(lines.last().unwrap().ends_with(",1"));
        assert!(lines[1].ends_with(",0"));
    }

    #[test]
    fn identical_seeds_reproduce_trajectories() {
        let mut env = Env::new(EnvConfig::car_default()).unwrap();
        let mut r1 = ChaCha12Rng::seed_from_u64(9);
        let mut r2 = ChaCha12Rng::seed_from_u64(9);
        let policy = GaussianPolicy::new(11, 2, &[16], &mut r1.clone());
        let t1 = rollout(&mut env, &policy, &mut r1);
        let t2 = rollout(&mut env, &policy, &mut r2);
        assert_eq!(t1.len(), t2.len());
        for (a, b) in t1.steps.iter().zip(&t2.steps) {
            assert_eq!(a.obs, b.obs);
            assert_eq!(a.action, b.action);
        }
    }
}

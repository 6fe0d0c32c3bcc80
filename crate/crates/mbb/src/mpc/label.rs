//! Value labels along solved trajectories.
//!
//! A trajectory earns the environment's state rewards: zero in the
//! interior, a terminal constant at the first state that enters a terminal
//! region. The label of step `m` is the discounted tail return from there,
//! which satisfies the Bellman identity `v_m = r_m + γ v_{m+1}` exactly
//! because that is the recursion computing it.

use crate::env::{CarState, EnvConfig, QuadState, Region};
use crate::error::{MbbError, Result};

/// `G_m = Σ_{t >= m} γ^{t-m} r_t`, computed by the backward recursion
/// `G_m = r_m + γ G_{m+1}`.
pub fn discounted_tail_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut tail = 0.0;
    for (g, &r) in out.iter_mut().rev().zip(rewards.iter().rev()) {
        tail = r + gamma * tail;
        *g = tail;
    }
    out
}

/// States kept for the value dataset with their discounted-tail labels.
/// The trajectory is truncated at the first terminal state; the steps a
/// real episode would never visit are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTrajectory {
    pub states: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    /// Classification of the last kept state; `None` when the trajectory
    /// never leaves the interior.
    pub terminal: Option<Region>,
}

/// Labels a state trajectory under the environment's reward sets and the
/// reinforcement-learning discount `gamma`.
pub fn label_trajectory(
    env: &EnvConfig,
    states: &[Vec<f64>],
    gamma: f64,
) -> Result<LabeledTrajectory> {
    if states.is_empty() {
        return Err(MbbError::Config("cannot label an empty trajectory".into()));
    }
    let d = env.state_dim();
    let rects = env.obstacle_rects()?;
    let mut cut = states.len();
    let mut terminal = None;
    for (m, row) in states.iter().enumerate() {
        if row.len() != d {
            return Err(MbbError::Config(format!(
                "state row has {} entries, environment needs {d}",
                row.len()
            )));
        }
        let region = if d == 3 {
            env.classify_car(&CarState::from_array([row[0], row[1], row[2]]), &rects)
        } else {
            let mut a = [0.0; 6];
            a.copy_from_slice(row);
            env.classify_quad(&QuadState::from_array(a), &rects)
        };
        if region.is_terminal() {
            cut = m + 1;
            terminal = Some(region);
            break;
        }
    }
    let kept = &states[..cut];
    let mut rewards = vec![0.0; cut];
    if let Some(region) = terminal {
        rewards[cut - 1] = env.region_reward(region);
    }
    Ok(LabeledTrajectory {
        states: kept.to_vec(),
        values: discounted_tail_returns(&rewards, gamma),
        terminal,
    })
}

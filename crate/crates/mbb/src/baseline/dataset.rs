use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::env::{CarState, Env, EnvConfig, InternalState, QuadState, Region};
use crate::error::{MbbError, Result};
use crate::mpc::{label_trajectory, sample_initial_states, solve_mpc, MpcProblem, MpcSolution};
use crate::vi::TabularValue;

/// Selection matrix `M` mapping the full observed state onto the model
/// state: it keeps the listed indices, which projects the lidar tail away.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub indices: Vec<usize>,
}

impl Selection {
    /// Identity on the internal state: the first `state_dim` observation
    /// entries, in the order the value grid uses.
    pub fn for_env(cfg: &EnvConfig) -> Selection {
        Selection { indices: (0..cfg.state_dim()).collect() }
    }

    pub fn apply(&self, obs: &[f64]) -> Vec<f64> {
        self.indices.iter().map(|&i| obs[i]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    Vi,
    Mpc,
}

/// Supervised value-regression data: full observed states paired with
/// model-value labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueDataset {
    pub states: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub source: DatasetSource,
    pub wall_seconds: f64,
    /// Kept length of each labeled trajectory (MPC source only); the pairs
    /// are flattened trajectory-major, so index `i = Σ lens[..j] + m`.
    pub traj_lens: Vec<usize>,
}

/// Sidecar metadata persisted next to the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DatasetMeta {
    source: DatasetSource,
    sample_count: usize,
    wall_seconds: f64,
    traj_lens: Vec<usize>,
}

impl ValueDataset {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Every label finite; VI-sourced labels inside the discounted-reward
    /// envelope `|v| <= r_max / (1 - γ)`.
    pub fn validate(&self, env: &EnvConfig, gamma: f64) -> Result<()> {
        if self.states.len() != self.values.len() {
            return Err(MbbError::Config("state/value counts differ".into()));
        }
        let r_max = env
            .rewards
            .goal
            .abs()
            .max(env.rewards.collision.abs())
            .max(env.rewards.trap.abs());
        let bound = r_max / (1.0 - gamma).max(1e-12);
        for &v in &self.values {
            if !v.is_finite() {
                return Err(MbbError::Numerical("non-finite dataset label".into()));
            }
            if self.source == DatasetSource::Vi && v.abs() > bound {
                return Err(MbbError::Numerical(format!(
                    "VI label {v} outside the envelope ±{bound}"
                )));
            }
        }
        Ok(())
    }

    pub fn save(&self, csv_path: &Path, meta_path: &Path) -> Result<()> {
        let dim = self.states.first().map_or(0, Vec::len);
        let mut out = String::new();
        for i in 0..dim {
            out.push_str(&format!("obs{i},"));
        }
        out.push_str("value\n");
        for (s, v) in self.states.iter().zip(&self.values) {
            for x in s {
                out.push_str(&format!("{x},"));
            }
            out.push_str(&format!("{v}\n"));
        }
        std::fs::write(csv_path, out)?;
        let meta = DatasetMeta {
            source: self.source,
            sample_count: self.len(),
            wall_seconds: self.wall_seconds,
            traj_lens: self.traj_lens.clone(),
        };
        std::fs::write(meta_path, serde_json::to_string_pretty(&meta)? + "\n")?;
        Ok(())
    }

    pub fn load(csv_path: &Path, meta_path: &Path) -> Result<Self> {
        let meta: DatasetMeta = serde_json::from_str(&std::fs::read_to_string(meta_path)?)?;
        let text = std::fs::read_to_string(csv_path)?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| MbbError::Config("empty dataset CSV".into()))?;
        let dim = header.split(',').count() - 1;
        let mut states = Vec::new();
        let mut values = Vec::new();
        for line in lines {
            let row = line
                .split(',')
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| MbbError::Config(format!("bad dataset row: {e}")))?;
            if row.len() != dim + 1 {
                return Err(MbbError::Config("dataset row width mismatch".into()));
            }
            values.push(row[dim]);
            states.push(row[..dim].to_vec());
        }
        if values.len() != meta.sample_count {
            return Err(MbbError::Config("dataset CSV disagrees with metadata".into()));
        }
        Ok(ValueDataset {
            states,
            values,
            source: meta.source,
            wall_seconds: meta.wall_seconds,
            traj_lens: meta.traj_lens,
        })
    }
}

/// Draws `n` full states uniformly from free space, renders their lidar,
/// and labels each with the interpolated grid value of its model state.
pub fn generate_vi_dataset(
    table: &TabularValue,
    cfg: &EnvConfig,
    selection: &Selection,
    n: usize,
    rng: &mut ChaCha12Rng,
) -> Result<ValueDataset> {
    let start = Instant::now();
    let mut env = Env::new(cfg.clone())?;
    let dims = table.grid.dims();
    if dims.len() != selection.indices.len() {
        return Err(MbbError::Config(
            "selection width must match the value grid dimension".into(),
        ));
    }
    let quad = cfg.kind.is_quad();
    let psi = cfg.psi_bound.unwrap_or(std::f64::consts::FRAC_PI_2);
    let b = cfg.bounds;
    let mut states = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    let mut attempts = 0usize;
    let budget = 1000 * n.max(1);
    while states.len() < n {
        attempts += 1;
        if attempts > budget {
            return Err(MbbError::Config("free space too small to sample".into()));
        }
        let internal = if quad {
            InternalState::Quad(QuadState {
                x: rng.random_range(b.x_min..b.x_max),
                v_x: rng.random_range(dims[1].lo..dims[1].hi),
                z: rng.random_range(b.y_min..b.y_max),
                v_z: rng.random_range(dims[3].lo..dims[3].hi),
                psi: rng.random_range(-psi..psi),
                omega: rng.random_range(dims[5].lo..dims[5].hi),
            })
        } else {
            InternalState::Car(CarState {
                x: rng.random_range(b.x_min..b.x_max),
                y: rng.random_range(b.y_min..b.y_max),
                theta: rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
            })
        };
        if env.classify(&internal) == Region::Collision {
            continue;
        }
        let obs = env.reset_to(internal);
        values.push(table.interpolate(&selection.apply(&obs)));
        states.push(obs);
    }
    Ok(ValueDataset {
        states,
        values,
        source: DatasetSource::Vi,
        wall_seconds: start.elapsed().as_secs_f64(),
        traj_lens: Vec::new(),
    })
}

/// Flattens solved trajectories into labeled pairs, trajectory-major, so
/// pair `i` of trajectory `j` at step `m` sits at `i = Σ lens[..j] + m`.
/// Labels are the discounted tail returns of the environment rewards along
/// each trajectory, truncated at the first terminal state.
pub fn generate_mpc_dataset(
    cfg: &EnvConfig,
    solutions: &[MpcSolution],
    gamma: f64,
) -> Result<ValueDataset> {
    if solutions.is_empty() {
        return Err(MbbError::Config("no trajectories to label".into()));
    }
    let start = Instant::now();
    let mut env = Env::new(cfg.clone())?;
    let d = cfg.state_dim();
    let mut states = Vec::new();
    let mut values = Vec::new();
    let mut traj_lens = Vec::with_capacity(solutions.len());
    for sol in solutions {
        let labeled = label_trajectory(cfg, &sol.states, gamma)?;
        traj_lens.push(labeled.states.len());
        for (row, &v) in labeled.states.iter().zip(&labeled.values) {
            let internal = if d == 3 {
                InternalState::Car(CarState::from_array([row[0], row[1], row[2]]))
            } else {
                let mut a = [0.0; 6];
                a.copy_from_slice(row);
                InternalState::Quad(QuadState::from_array(a))
            };
            states.push(env.reset_to(internal));
            values.push(v);
        }
    }
    Ok(ValueDataset {
        states,
        values,
        source: DatasetSource::Mpc,
        wall_seconds: start.elapsed().as_secs_f64(),
        traj_lens,
    })
}

/// Samples starts, solves each trajectory problem, and labels the results
/// until the dataset reaches `n_target` pairs.
pub fn solve_mpc_dataset(
    problem: &MpcProblem,
    cfg: &EnvConfig,
    gamma: f64,
    n_target: usize,
    rng: &mut ChaCha12Rng,
) -> Result<(ValueDataset, Vec<MpcSolution>)> {
    let start = Instant::now();
    let mut solutions = Vec::new();
    let mut pairs = 0usize;
    while pairs < n_target {
        if solutions.len() > 200_000 {
            return Err(MbbError::Config("trajectory labeling never reached the target".into()));
        }
        for x0 in sample_initial_states(problem, 16, rng)? {
            let sol = solve_mpc(problem, &x0)?;
            pairs += label_trajectory(cfg, &sol.states, gamma)?.states.len();
            solutions.push(sol);
        }
    }
    let mut dataset = generate_mpc_dataset(cfg, &solutions, gamma)?;
    dataset.wall_seconds = start.elapsed().as_secs_f64();
    Ok((dataset, solutions))
}

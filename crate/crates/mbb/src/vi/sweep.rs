use serde::{Deserialize, Serialize};

use super::grid::{Grid, MAX_DIM};
use super::table::TabularValue;
use crate::error::{MbbError, Result};

/// Finite control set: Cartesian product of per-dimension linspaces over the
/// control box Δ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteActionSet {
    actions: Vec<Vec<f64>>,
}

impl DiscreteActionSet {
    pub fn new(actions: Vec<Vec<f64>>) -> Self {
        DiscreteActionSet { actions }
    }

    /// `counts[k]` evenly spaced values per control dimension, endpoints
    /// included.
    pub fn linspace_product(low: &[f64], high: &[f64], counts: &[usize]) -> Self {
        assert_eq!(low.len(), high.len());
        assert_eq!(low.len(), counts.len());
        let axes: Vec<Vec<f64>> = (0..low.len())
            .map(|k| {
                let n = counts[k].max(1);
                (0..n)
                    .map(|i| {
                        if n == 1 {
                            0.5 * (low[k] + high[k])
                        } else {
                            low[k] + (high[k] - low[k]) * i as f64 / (n - 1) as f64
                        }
                    })
                    .collect()
            })
            .collect();
        let mut actions = vec![vec![]];
        for axis in &axes {
            let mut next = Vec::with_capacity(actions.len() * axis.len());
            for a in &actions {
                for &v in axis {
                    let mut b = a.clone();
                    b.push(v);
                    next.push(b);
                }
            }
            actions = next;
        }
        DiscreteActionSet { actions }
    }

    pub fn actions(&self) -> &[Vec<f64>] {
        &self.actions
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Deterministic discrete-time low-dimensional model with terminal labeling,
/// as value iteration sees it.
pub trait ViModel {
    /// One discrete-time transition x' = f̃(x, a), written into `out`.
    fn next_into(&self, x: &[f64], a: &[f64], out: &mut [f64]);

    /// Reward of taking `a` in non-terminal `x` (0 under the sparse scheme;
    /// nonzero only in synthetic test MDPs).
    fn reward(&self, x: &[f64], a: &[f64]) -> f64;

    /// `Some(reward)` when `x` lies in a terminal region; such nodes are
    /// absorbing with their value pinned to that reward.
    fn terminal_value_at(&self, x: &[f64]) -> Option<f64>;
}

/// Boltzmann (softmax) distribution over Q-values at temperature τ,
/// computed max-subtracted for stability.
pub fn boltzmann_policy(q: &[f64], temperature: f64) -> Vec<f64> {
    assert!(temperature > 0.0, "Boltzmann temperature must be positive");
    let mut p = q.to_vec();
    boltzmann_in_place(&mut p, temperature);
    p
}

fn boltzmann_in_place(q: &mut [f64], temperature: f64) {
    let max = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in q.iter_mut() {
        *v = ((*v - max) / temperature).exp();
        sum += *v;
    }
    for v in q.iter_mut() {
        *v /= sum;
    }
}

/// Value-iteration problem: grid, actions, model, discount, and policy
/// temperature. Terminal labels and node coordinates are cached once.
pub struct ViProblem<'a, M: ViModel> {
    pub grid: &'a Grid,
    pub actions: &'a DiscreteActionSet,
    pub model: &'a M,
    pub gamma: f64,
    pub temperature: f64,
    terminal: Vec<Option<f64>>,
    coords: Vec<f64>,
}

impl<'a, M: ViModel> ViProblem<'a, M> {
    pub fn new(
        grid: &'a Grid,
        actions: &'a DiscreteActionSet,
        model: &'a M,
        gamma: f64,
        temperature: f64,
    ) -> Self {
        let n = grid.num_nodes();
        let d = grid.ndim();
        let mut terminal = Vec::with_capacity(n);
        let mut coords = vec![0.0; n * d];
        let mut buf = [0.0; MAX_DIM];
        for node in 0..n {
            grid.node_coords(node, &mut buf);
            coords[node * d..(node + 1) * d].copy_from_slice(&buf[..d]);
            terminal.push(model.terminal_value_at(&buf[..d]));
        }
        ViProblem { grid, actions, model, gamma, temperature, terminal, coords }
    }

    pub fn terminal_mask(&self) -> &[Option<f64>] {
        &self.terminal
    }

    /// One Jacobi sweep: reads `v_in`, writes every node of `v_out`, returns
    /// the max absolute change. Terminal nodes stay pinned to their reward.
    pub fn sweep(&self, v_in: &[f64], v_out: &mut [f64]) -> Result<f64> {
        let d = self.grid.ndim();
        let na = self.actions.len();
        let mut q = vec![0.0; na];
        let mut next = [0.0; MAX_DIM];
        let mut max_delta = 0.0f64;
        for node in 0..self.grid.num_nodes() {
            let x = &self.coords[node * d..node * d + d];
            let new_v = match self.terminal[node] {
                Some(tv) => tv,
                None => {
                    for (ai, a) in self.actions.actions().iter().enumerate() {
                        self.model.next_into(x, a, &mut next[..d]);
                        q[ai] = self.model.reward(x, a)
                            + self.gamma * self.grid.interpolate(v_in, &next[..d]);
                    }
                    let mut p = q.clone();
                    boltzmann_in_place(&mut p, self.temperature);
                    let v: f64 = p.iter().zip(&q).map(|(pi, qi)| pi * qi).sum();
                    if !v.is_finite() {
                        return Err(MbbError::Numerical(format!(
                            "non-finite backup at node {node} (check grid bounds and gamma)"
                        )));
                    }
                    v
                }
            };
            max_delta = max_delta.max((new_v - v_in[node]).abs());
            v_out[node] = new_v;
        }
        Ok(max_delta)
    }
}

/// One Bellman sweep as a standalone operation.
pub fn bellman_sweep<M: ViModel>(
    v: &TabularValue,
    actions: &DiscreteActionSet,
    model: &M,
    temperature: f64,
) -> Result<(TabularValue, f64)> {
    let problem = ViProblem::new(&v.grid, actions, model, v.gamma, temperature);
    let mut out = v.clone();
    let delta = problem.sweep(&v.values, &mut out.values)?;
    Ok((out, delta))
}

/// Outcome of a full solve, including the cost-accounting fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViResult {
    pub table: TabularValue,
    pub sweeps: usize,
    pub converged: bool,
    pub max_delta: f64,
    pub wall_seconds: f64,
}

/// Iterates Jacobi sweeps until `max_delta < tol` or `max_sweeps`.
pub fn solve_vi<M: ViModel>(
    grid: &Grid,
    actions: &DiscreteActionSet,
    model: &M,
    gamma: f64,
    temperature: f64,
    tol: f64,
    max_sweeps: usize,
) -> Result<ViResult> {
    assert!(tol > 0.0);
    let start = std::time::Instant::now();
    let problem = ViProblem::new(grid, actions, model, gamma, temperature);
    let mut table = TabularValue::zeros(grid.clone(), gamma);
    let mut scratch = table.values.clone();
    let mut sweeps = 0;
    let mut max_delta = f64::INFINITY;
    let mut converged = false;
    while sweeps < max_sweeps {
        max_delta = problem.sweep(&table.values, &mut scratch)?;
        std::mem::swap(&mut table.values, &mut scratch);
        sweeps += 1;
        if max_delta < tol {
            converged = true;
            break;
        }
    }
    Ok(ViResult { table, sweeps, converged, max_delta, wall_seconds: start.elapsed().as_secs_f64() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vi::grid::GridDim;

    /// Discrete MDP embedded on integer grid nodes: transitions land exactly
    /// on nodes, so interpolation is exact and dense oracles apply.
    pub struct TableMdp {
        pub n_states: usize,
        /// next[s][a]
        pub next: Vec<Vec<usize>>,
        /// reward[s][a]
        pub reward: Vec<Vec<f64>>,
        pub terminal: Vec<Option<f64>>,
    }

    impl TableMdp {
        pub fn grid(&self) -> Grid {
            Grid::new(vec![GridDim {
                lo: 0.0,
                hi: (self.n_states - 1) as f64,
                count: self.n_states,
                periodic: false,
            }])
            .unwrap()
        }

        pub fn actions(&self) -> DiscreteActionSet {
            let na = self.next[0].len();
            DiscreteActionSet::new((0..na).map(|a| vec![a as f64]).collect())
        }
    }

    impl ViModel for TableMdp {
        fn next_into(&self, x: &[f64], a: &[f64], out: &mut [f64]) {
            out[0] = self.next[x[0] as usize][a[0] as usize] as f64;
        }
        fn reward(&self, x: &[f64], a: &[f64]) -> f64 {
            self.reward[x[0] as usize][a[0] as usize]
        }
        fn terminal_value_at(&self, x: &[f64]) -> Option<f64> {
            self.terminal[x[0] as usize]
        }
    }

    #[test]
    fn zero_mdp_fixed_point() {
        let mdp = TableMdp {
            n_states: 4,
            next: (0..4).map(|s| vec![(s + 1) % 4, s]).collect(),
            reward: vec![vec![0.0, 0.0]; 4],
            terminal: vec![None; 4],
        };
        let grid = mdp.grid();
        let actions = mdp.actions();
        let v = TabularValue::zeros(grid, 0.9);
        let (out, delta) = bellman_sweep(&v, &actions, &mdp, 1.0).unwrap();
        assert!(out.values.iter().all(|&x| x == 0.0));
        assert_eq!(delta, 0.0);
    }

    #[test]
    fn two_state_chain_matches_hand_backup() {
        // State 0: stay (r=1, ->0) or go (r=0, ->1). State 1: both actions
        // r=2, ->1. From V=0, Q(0,·)=(1,0), so V'(0)=e/(e+1)·1 + 1/(e+1)·0.
        let mdp = TableMdp {
            n_states: 2,
            next: vec![vec![0, 1], vec![1, 1]],
            reward: vec![vec![1.0, 0.0], vec![2.0, 2.0]],
            terminal: vec![None, None],
        };
        let v = TabularValue::zeros(mdp.grid(), 0.9);
        let (out, _) = bellman_sweep(&v, &mdp.actions(), &mdp, 1.0).unwrap();
        let e = std::f64::consts::E;
        assert!((out.values[0] - e / (e + 1.0)).abs() < 1e-12);
        assert!((out.values[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn low_temperature_recovers_greedy_backup() {
        let mdp = TableMdp {
            n_states: 3,
            next: vec![vec![1, 2], vec![2, 0], vec![1, 1]],
            reward: vec![vec![0.3, 1.7], vec![0.0, -0.5], vec![2.0, 1.0]],
            terminal: vec![None; 3],
        };
        let mut v = TabularValue::zeros(mdp.grid(), 0.9);
        v.values = vec![0.4, -1.0, 2.5];
        let (soft, _) = bellman_sweep(&v, &mdp.actions(), &mdp, 1e-8).unwrap();
        for s in 0..3 {
            let greedy = (0..2)
                .map(|a| mdp.reward[s][a] + 0.9 * v.values[mdp.next[s][a]])
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((soft.values[s] - greedy).abs() < 1e-6);
        }
    }

    #[test]
    fn boltzmann_basics() {
        let p = boltzmann_policy(&[1.0, 1.0, 1.0, 1.0], 1.0);
        for v in &p {
            assert!((v - 0.25).abs() < 1e-15);
        }
        let p = boltzmann_policy(&[1.0, 0.0], 1.0);
        let e = std::f64::consts::E;
        assert!((p[0] - e / (e + 1.0)).abs() < 1e-12);
        assert!((p[1] - 1.0 / (e + 1.0)).abs() < 1e-12);
        let p = boltzmann_policy(&[3.0, -1.0, 0.5], 1e9);
        for v in &p {
            assert!((v - 1.0 / 3.0).abs() < 1e-6);
        }
        // Probability vector: non-negative, sums to one.
        let p = boltzmann_policy(&[5.0, -300.0, 2.0, 0.1], 0.37);
        assert!(p.iter().all(|&v| v >= 0.0));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    /// Dense matrix-iteration oracle: per-action transition matrices and
    /// reward vectors, iterated with ndarray mat-vec products.
    fn dense_soft_vi(mdp: &TableMdp, gamma: f64, tau: f64, sweeps: usize) -> Vec<f64> {
        use ndarray::{Array1, Array2};
        let n = mdp.n_states;
        let na = mdp.next[0].len();
        let mut p_mats = Vec::with_capacity(na);
        let mut r_vecs = Vec::with_capacity(na);
        for a in 0..na {
            let mut p = Array2::<f64>::zeros((n, n));
            let mut r = Array1::<f64>::zeros(n);
            for s in 0..n {
                p[[s, mdp.next[s][a]]] = 1.0;
                r[s] = mdp.reward[s][a];
            }
            p_mats.push(p);
            r_vecs.push(r);
        }
        let mut v = Array1::<f64>::zeros(n);
        for _ in 0..sweeps {
            let q_per_action: Vec<Array1<f64>> =
                (0..na).map(|a| &r_vecs[a] + &(p_mats[a].dot(&v) * gamma)).collect();
            let mut v_new = Array1::<f64>::zeros(n);
            for s in 0..n {
                if let Some(tv) = mdp.terminal[s] {
                    v_new[s] = tv;
                    continue;
                }
                let q: Vec<f64> = (0..na).map(|a| q_per_action[a][s]).collect();
                let pi = boltzmann_policy(&q, tau);
                v_new[s] = pi.iter().zip(&q).map(|(p, q)| p * q).sum();
            }
            v = v_new;
        }
        v.to_vec()
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn solver_matches_dense_oracle(
            n in 2usize..=64,
            na in 1usize..=4,
            seed in 0u64..10_000,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
            let next = (0..n).map(|_| (0..na).map(|_| rng.random_range(0..n)).collect()).collect();
            let reward = (0..n)
                .map(|_| (0..na).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            let terminal = (0..n)
                .map(|_| {
                    if rng.random_range(0.0..1.0) < 0.15 {
                        Some(rng.random_range(-5.0..5.0))
                    } else {
                        None
                    }
                })
                .collect();
            let mdp = TableMdp { n_states: n, next, reward, terminal };
            let sweeps = 57;
            let r = solve_vi(&mdp.grid(), &mdp.actions(), &mdp, 0.9, 1.0, 1e-300, sweeps).unwrap();
            let oracle = dense_soft_vi(&mdp, 0.9, 1.0, sweeps);
            for s in 0..n {
                proptest::prop_assert!(
                    (r.table.values[s] - oracle[s]).abs() < 1e-8,
                    "state {}: {} vs {}", s, r.table.values[s], oracle[s]
                );
            }
        }
    }

    #[test]
    fn deltas_eventually_contract_geometrically() {
        let mdp = TableMdp {
            n_states: 5,
            next: (0..5).map(|s| vec![(s + 1) % 5, (s + 3) % 5]).collect(),
            reward: (0..5).map(|s| vec![s as f64 * 0.3, 1.0 - s as f64 * 0.2]).collect(),
            terminal: vec![None; 5],
        };
        let grid = mdp.grid();
        let actions = mdp.actions();
        let gamma = 0.9;
        let problem = ViProblem::new(&grid, &actions, &mdp, gamma, 1.0);
        let mut v = vec![0.0; grid.num_nodes()];
        let mut scratch = v.clone();
        let mut deltas = Vec::new();
        for _ in 0..60 {
            let d = problem.sweep(&v, &mut scratch).unwrap();
            std::mem::swap(&mut v, &mut scratch);
            deltas.push(d);
        }
        for k in 10..59 {
            assert!(deltas[k + 1] <= deltas[k] + 1e-12, "sweep {k}: {} -> {}", deltas[k], deltas[k + 1]);
        }
        // Tail decay tracks the γ^k envelope (order of magnitude).
        assert!(deltas[50] <= deltas[40] * gamma.powi(10) * 3.0);
    }

    #[test]
    fn all_absorbing_converges_in_one_sweep() {
        let mdp = TableMdp {
            n_states: 3,
            next: vec![vec![0], vec![1], vec![2]],
            reward: vec![vec![0.0]; 3],
            terminal: vec![Some(0.0), Some(0.0), Some(0.0)],
        };
        let r = solve_vi(&mdp.grid(), &mdp.actions(), &mdp, 0.9, 1.0, 1e-9, 100).unwrap();
        assert!(r.converged);
        assert_eq!(r.sweeps, 1);
        assert!(r.table.values.iter().all(|&v| v == 0.0));
    }
}

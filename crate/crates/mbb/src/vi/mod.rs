//! Tabular value iteration over discretized low-dimensional models.
//!
//! A [`Grid`] discretizes the model state space, a [`ViModel`] supplies the
//! deterministic transition, per-step reward, and terminal labels, and
//! Jacobi-style Boltzmann backups ([`solve_vi`]) produce a [`TabularValue`]
//! read back through multilinear interpolation. [`solve_vi_car`] is a
//! structure-exploiting fast path for the 3-D car grid; the 6-D quadrotor
//! grid is supported coarsely behind [`QuadViConfig::enabled`].

mod car;
mod grid;
mod quad;
mod sweep;
mod table;

pub use car::{solve_vi_car, CarViConfig, CarViModel};
pub use grid::{Grid, GridDim, MAX_DIM};
pub use quad::{solve_vi_quad, QuadViConfig, QuadViModel};
pub use sweep::{
    bellman_sweep, boltzmann_policy, solve_vi, DiscreteActionSet, ViModel, ViProblem, ViResult,
};
pub use table::TabularValue;

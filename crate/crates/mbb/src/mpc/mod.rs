//! Trajectory optimization for the low-dimensional models.
//!
//! A single-shooting penalty method: decision variables are the controls,
//! states come from rolling out the Euler dynamics, so the dynamics hold by
//! construction. Obstacle clearance, the state box, and terminal goal
//! membership enter as squared-hinge penalties whose weight grows over
//! outer stages; the inner loop is projected gradient descent with adjoint
//! gradients and a monotone backtracking line search. Solved trajectories
//! carry closed-form dual certificates of their obstacle clearances and
//! feed discounted-tail value labels for baseline training.

mod duals;
mod export;
mod label;
mod problem;
mod sample;
mod solve;

pub use duals::{
    certificate_value, dual_feasibility_check, dual_norm, rectangle_dual, DualReport,
};
pub use export::{export_solutions, MpcManifest, SolveSummary};
pub use label::{discounted_tail_returns, label_trajectory, LabeledTrajectory};
pub use problem::{MpcModel, MpcProblem, SolverConfig, MPC_MAX_DIM, UNBOUNDED};
pub use sample::sample_initial_states;
pub use solve::{solve_mpc, MpcSolution, OuterRecord};

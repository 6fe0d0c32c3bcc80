//! Model-value baselines: datasets of (full state, model value) pairs drawn
//! from a solved value grid or labeled trajectory rollouts, supervised
//! regression of an MLP baseline onto them, and the update criterion that
//! gates refreshing the baseline from empirical returns.

mod criterion;
mod dataset;
mod train;

pub use criterion::{regress_baseline_to_returns, update_criterion};
pub use dataset::{
    generate_mpc_dataset, generate_vi_dataset, solve_mpc_dataset, DatasetSource, Selection,
    ValueDataset,
};
pub use train::{
    fit_baseline_to_targets, train_baseline, Baseline, BaselineVariant, TrainReport,
};

//! On-policy actor-critic training: TD(λ) return estimation, the
//! score-function policy gradient, the clipped-surrogate update, and the
//! full training loop with swappable baselines.

mod gradient;
mod returns;
mod train;
mod update;

pub use gradient::{eq1_gradient, score_gradient, score_gradient_weighted, StepData};
pub use returns::{lambda_mixture_oracle, td_lambda_returns};
pub use train::{
    policy_for_env, train_ppo, AdvStat, Arm, Checkpoint, IterationRow, PpoRun, PpoTrainConfig,
    RunLog, WarmStartCost,
};
pub use update::{clipped_surrogate, ppo_update, PpoConfig, PpoReport};

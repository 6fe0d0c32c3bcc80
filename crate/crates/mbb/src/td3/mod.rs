//! Off-policy actor-critic training: a twin-critic TD3 learner whose
//! Q targets can be replaced wholesale by the frozen one-step model value
//! r + γ·V^M(s′), with Q-target updates disabled in that mode.

mod buffer;
mod learner;
mod train;

pub use buffer::{ReplayBuffer, Transition, TransitionBatch};
pub use learner::{
    critic_loss, mbb_targets, q_target_mbb, td3_step, DeterministicActor, Td3Config, Td3Learner,
    Td3Mode,
};
pub use train::{train_td3, Td3Run, Td3RunLog};

//! Clipped PPO over the reduced action set.

pub mod checkpoint;
mod features;
mod gae;
pub mod nn;
mod policy;
mod replay;
mod train;
mod update;

pub use checkpoint::{Checkpoint, CheckpointError, CheckpointMeta};
pub use features::{feature_len, featurize, FEATURE_LAYOUT_VERSION, TIMER_HORIZON};
pub use gae::gae;
pub use policy::{argmax, gumbel, gumbel_max, log_softmax, top_k, ActMode, NetworkShape, PolicyError, PolicyParams, PolicyProposer};
pub use replay::{priority, PrioritizedReplay, Transition, PRIORITY_EPS};
pub use train::{episode_transitions, initial_params, metrics_table, train, RoundMetrics, TrainError, TrainOutcome, TrainSetup};
pub use update::{loss_and_grads, ppo_update, Batch, Learner, LossOutput, PPOConfig, UpdateError, UpdateStats};

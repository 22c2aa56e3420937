//! Recurrent deterministic policy gradient controller: observation and
//! action encoding, exploration, history memory and the actor-critic
//! updates.

mod checkpoint;
mod config;
mod controller;
mod encode;
mod learner;
mod memory;
mod noise;
mod speed_map;
mod training;
mod types;

pub use checkpoint::{AgentCheckpoint, AGENT_FORMAT};
pub use config::{AgentConfig, InvertMode, Precision};
pub use controller::{ActionMap, ControlOutput, ControlState, DrlAgent};
pub use encode::{encode_actor_window, encode_critic_window, FeatureScale, WindowEncoder};
pub use learner::{
    action_gradients, actor_shape, actor_update, actor_update_with, compute_targets, critic_shape, critic_update, invert_gradient,
    train_iteration, Learner, TrainStats,
};
pub use memory::{sample_minibatch, HistoryMemory, MemoryCursor, RecentHistoryBuffer, Transition};
pub use noise::OuNoiseState;
pub use speed_map::SpeedMap;
pub use training::{train_agent, train_agent_threaded, training_episode, TrainingLog, TrainingRecord, TrainingSummary};
pub use types::{compute_reward, Action, Observation, ACTION_DIM, OBS_FEATURES, REF_COUNT};

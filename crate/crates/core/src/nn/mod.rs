//! From-scratch recurrent networks: LSTM stacks with a dense head,
//! windowed backpropagation through time, Glorot initialization and Adam.

mod adam;
mod checkpoint;
mod linalg;
mod network;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{NetworkCheckpoint, FORMAT as CHECKPOINT_FORMAT};
pub use linalg::{sigmoid, tanh, Real};
pub use network::{
    backward_window, forward_window, glorot_limit, soft_update, ForwardCache, Gradients, NetShape,
    NetworkParams, OutputActivation, WindowBatch,
};

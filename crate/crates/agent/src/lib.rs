//! Actor-critic agents for sequential angle selection: network, update
//! rules, optimizer, training loops and evaluation.

pub mod agent;
pub mod checkpoint;
pub mod ct;
pub mod eval;
pub mod loss;
pub mod net;
pub mod optim;
pub mod td;
pub mod train;

pub use agent::{ImageState, NetAgent};
pub use checkpoint::Checkpoint;
pub use loss::{LossWeights, TerminalTerm, UpdateTarget, Variant};
pub use net::{NetConfig, NetOutputs, NetParams};
pub use optim::{Adam, OptimizerConfig};
pub use td::{td_error_naive, td_error_terminal, TdRecord};
pub use train::{ActorCritic, EpisodeSource, Environment, LoopConfig, TrainError, TrainTrace, UpdateMode};

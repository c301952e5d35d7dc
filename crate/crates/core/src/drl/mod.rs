//! Primal-dual deep deterministic policy gradient with hand-written
//! backpropagation.

pub mod agent;
pub mod checkpoint;
pub mod net;
pub mod noise;
pub mod optim;
pub mod replay;
pub mod train;

pub use agent::{Agent, AgentConfig, TrainMode, UpdateStats};
pub use checkpoint::{load_checkpoint, load_warm_start, save_checkpoint, Checkpoint, RunMeta};
pub use net::{DenseNet, OutputActivation};
pub use noise::{OuConfig, OuNoise};
pub use optim::{Optimizer, OptimizerKind};
pub use replay::{ReplayBuffer, Transition};
pub use train::{evaluate, evaluate_traced, train, train_observed, EpisodeLog, Evaluation, Schedule, TrainOptions, TrainReport};

//! DDPG beam learning from scratch: networks, optimiser, replay, noise and the training loop.

pub mod agent;
pub mod mlp;
pub mod noise;
pub mod optim;
pub mod replay;
pub mod train;

pub use agent::{actor_objective_gradients, Agent, DdpgConfig, TrainerState, UpdateOutcome};
pub use mlp::{mlp_gradients, Gradients, Mlp, Objective, OutputActivation};
pub use noise::{ou_step, OuNoise};
pub use optim::Adam;
pub use replay::{ReplayBuffer, Transition};
pub use train::{
    cluster_gain, learn_codebook, quantize_action, reward, train_beam, LearnedCodebook, TraceStep,
    TrainOutcome,
};

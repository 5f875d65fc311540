//! SAC-TLS: soft actor-critic over observation windows with an LN-GRU
//! encoder and squeeze-excitation, plus structured pruning of the actor.

pub mod nets;
pub mod pruning;
pub mod replay;
pub mod sac;
pub mod train;

pub use nets::{Ablation, Actor, Critic, NetConfig};
pub use pruning::{structured_prune, PruneConfig, PruneError};
pub use replay::{ReplayBuffer, Transition};
pub use sac::{Sac, SacConfig, SacError, UpdateStats};
pub use train::{continue_training, evaluate, mean_return, metrics_csv, rollout, train, EpisodeRow, EvalEpisode, TrainError, TrainOutput};

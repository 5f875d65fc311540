//! Minimal reverse-mode differentiation for small recurrent policies.
//!
//! [`Graph`] records matrix operations; [`ParamStore`] owns named weights;
//! [`layers`] provides the dense, layer-normalized GRU, squeeze-excitation
//! and squashed-Gaussian blocks; [`Adam`] updates stores; [`Checkpoint`]
//! serializes them.

pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod matrix;
pub mod optim;
pub mod param;

pub use checkpoint::{Checkpoint, CheckpointError, NamedArray};
pub use graph::{GradError, Graph, Tensor, Var};
pub use layers::{Dense, GruCell, HeadOutput, SeBlock, SquashedGaussianHead};
pub use matrix::{Matrix, Real};
pub use optim::{Adam, ScalarAdam};
pub use param::{Init, Param, ParamId, ParamStore};

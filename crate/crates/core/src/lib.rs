//! Simulator of AAV relays that collect sensor data and forward it to a
//! distant base station by distributed beamforming.
//!
//! [`world`] holds geometry and move rules, [`channel`] the link budgets,
//! [`slotproto`] the per-slot protocol, ages and energy, and [`mdpenv`]
//! wraps everything as an episodic environment. [`baselines`] and [`toy`]
//! supply reference policies and a sanity task.

pub mod baselines;
pub mod channel;
pub mod geometry;
pub mod mdpenv;
pub mod slotproto;
pub mod toy;
pub mod world;

pub use channel::ChannelParams;
pub use geometry::Vec3;
pub use mdpenv::{AoiEnv, EnvConfig, EnvError, EnvStep, Environment, EpisodeSummary, ObsHistory};
pub use slotproto::{AoiVector, Assignment, EnergyParams, SlotOutcome};
pub use toy::PointGoal;
pub use world::{AavState, SensorNode, Violation, ViolationKind, World, WorldConfig};

//! The forwarding network as an episodic MDP: joint AAV moves in, a
//! scalar (and per-AAV) reward out.

use crate::channel::{self, ChannelError, ChannelParams};
use crate::slotproto::{
    self, schedule_slot, update_aoi, AoiVector, Assignment, EnergyParams, SlotError, SlotOutcome,
};
use crate::world::{apply_moves, generate_topology, Violation, World, WorldConfig, WorldError};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("step called after the episode finished")]
    Done,
    #[error("action has {got} components, expected {expected}")]
    ActionSize { expected: usize, got: usize },
    #[error("invalid env config: {field} {reason}")]
    Invalid { field: String, reason: String },
    #[error("trace has {got} slots, episode length is {expected}")]
    IncompleteTrace { expected: usize, got: usize },
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Slot(#[from] SlotError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Minimal interface the trainer drives.
pub trait Environment {
    fn obs_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn episode_length(&self) -> usize;
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    fn step(&mut self, action: &[f64]) -> Result<EnvStep, EnvError>;
    /// Task metrics of the episode played so far.
    fn summary(&self) -> EpisodeSummary {
        EpisodeSummary::default()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvStep {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub time_avg_aoi: f64,
    pub total_energy_j: f64,
    pub violations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub episode_length: usize,
    pub seq_len: usize,
    pub rho1: f64,
    pub rho2: f64,
    pub rho3: f64,
    pub oob_penalty: f64,
    pub delta_move: f64,
    /// Reuse one topology (drawn from `topology_seed`) for every episode.
    pub fixed_topology: bool,
    pub topology_seed: u64,
    pub world: WorldConfig,
    pub channel: ChannelParams,
    pub energy: EnergyParams,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            episode_length: 100,
            seq_len: 4,
            rho1: 1.0,
            rho2: 1e-3,
            rho3: 0.1,
            oob_penalty: 1.0,
            delta_move: 0.3,
            fixed_topology: true,
            topology_seed: 0,
            world: WorldConfig::default(),
            channel: ChannelParams::default(),
            energy: EnergyParams::default(),
        }
    }
}

impl EnvConfig {
    /// Small scenario: 2 AAVs and 12 clustered sensors on a 100 m square,
    /// with the sensing radius and per-slot data shrunk so slots are feasible.
    pub fn desk() -> Self {
        Self {
            episode_length: 50,
            world: WorldConfig {
                x_max: 100.0,
                y_max: 100.0,
                n_aav: 2,
                n_sn: 12,
                cluster_count: 3,
                cluster_spread: 8.0,
                comm_radius: 25.0,
                data_min_bits: 0.05e6,
                data_max_bits: 0.2e6,
                ..WorldConfig::default()
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |field: &str, reason: &str| {
            Err(EnvError::Invalid {
                field: field.to_string(),
                reason: reason.to_string(),
            })
        };
        if self.episode_length < 1 {
            return bad("episode_length", "must be >= 1");
        }
        if self.seq_len < 1 {
            return bad("seq_len", "must be >= 1");
        }
        for (f, v) in [
            ("rho1", self.rho1),
            ("rho2", self.rho2),
            ("rho3", self.rho3),
            ("oob_penalty", self.oob_penalty),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(f, "must be >= 0");
            }
        }
        if !(self.delta_move > 0.0 && self.delta_move < slotproto::SLOT_LENGTH) {
            return bad("delta_move", "must lie in (0, 1)");
        }
        self.world.validate()?;
        self.channel.validate()?;
        if let Err((f, r)) = self.energy.validate() {
            return bad(&format!("energy.{f}"), &r);
        }
        Ok(())
    }

    pub fn obs_dim(&self) -> usize {
        2 * self.world.n_aav + 3 * self.world.n_sn
    }

    pub fn action_dim(&self) -> usize {
        2 * self.world.n_aav
    }
}

/// Sensors within `comm_radius` (horizontal) of at least one AAV go to the
/// nearest such AAV, ties to the lower index.
pub fn dpam_assign(world: &World, params: &ChannelParams, comm_radius: f64) -> Assignment {
    let mut owners = vec![None; world.n_sn()];
    for (i, sn) in world.sensors.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (j, aav) in world.aavs.iter().enumerate() {
            let d = sn.position.horizontal_distance(&aav.position);
            if d > comm_radius {
                continue;
            }
            if !matches!(channel::g2a_rate(sn, aav, params), Ok(r) if r > 0.0 && r.is_finite()) {
                continue;
            }
            if best.map_or(true, |(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
        owners[i] = best.map(|(j, _)| j);
    }
    Assignment::from_owners(&owners, world.n_aav())
}

/// Number of sensors within `comm_radius` of each AAV.
pub fn coverage_counts(world: &World, comm_radius: f64) -> Vec<usize> {
    world
        .aavs
        .iter()
        .map(|a| {
            world
                .sensors
                .iter()
                .filter(|s| s.position.horizontal_distance(&a.position) <= comm_radius)
                .count()
        })
        .collect()
}

/// Maps a raw action to per-AAV displacements: components clamped to
/// `[-1, 1]`, each AAV's pair projected onto the unit disc, then scaled to
/// the maximum step.
pub fn action_to_displacements(action: &[f64], max_step: f64) -> Vec<(f64, f64)> {
    action
        .chunks(2)
        .map(|c| {
            let fix = |v: f64| if v.is_finite() { v.clamp(-1.0, 1.0) } else { 0.0 };
            let (ax, ay) = (fix(c[0]), fix(c[1]));
            let m = ax.hypot(ay);
            let s = if m > 1.0 { 1.0 / m } else { 1.0 };
            (ax * s * max_step, ay * s * max_step)
        })
        .collect()
}

/// Fixed-length window of recent observations, oldest first, left-padded
/// with zero vectors.
#[derive(Clone, Debug)]
pub struct ObsHistory {
    len: usize,
    dim: usize,
    buf: VecDeque<Vec<f64>>,
}

impl ObsHistory {
    pub fn new(len: usize, dim: usize) -> Self {
        assert!(len >= 1, "history length must be >= 1");
        Self {
            len,
            dim,
            buf: VecDeque::with_capacity(len),
        }
    }

    pub fn clear(&mut self) {
        self.buf.clear();
    }

    pub fn push(&mut self, obs: &[f64]) {
        assert_eq!(obs.len(), self.dim, "observation width");
        if self.buf.len() == self.len {
            self.buf.pop_front();
        }
        self.buf.push_back(obs.to_vec());
    }

    pub fn window_len(&self) -> usize {
        self.len
    }

    pub fn sequence(&self) -> Vec<Vec<f64>> {
        let pad = self.len - self.buf.len();
        let mut out = vec![vec![0.0; self.dim]; pad];
        out.extend(self.buf.iter().cloned());
        out
    }

    /// The window flattened row-major, `len × dim`.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = vec![0.0; (self.len - self.buf.len()) * self.dim];
        for o in &self.buf {
            out.extend_from_slice(o);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: usize,
    pub served: Vec<bool>,
    pub served_count: usize,
    pub q: f64,
    pub delta_g2a: f64,
    pub delta_a2a: f64,
    pub delta_a2g: f64,
    pub delta_move: f64,
    pub feasible: bool,
    /// Ages after this slot's update.
    pub aoi: Vec<f64>,
    pub aav_positions: Vec<(f64, f64)>,
    pub speeds: Vec<f64>,
    pub energy: Vec<f64>,
    pub coverage: Vec<usize>,
    pub rewards: Vec<f64>,
    pub reward: f64,
    pub violations: Vec<Violation>,
}

#[derive(Clone, Debug)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub per_aav_rewards: Vec<f64>,
    pub scalar_reward: f64,
    pub done: bool,
    pub outcome: SlotOutcome,
    pub violations: Vec<Violation>,
}

/// Time-averaged age (mean over slots and sensors) and total energy.
pub fn episode_metrics(trace: &[SlotRecord], episode_length: usize) -> Result<(f64, f64), EnvError> {
    if trace.len() != episode_length {
        return Err(EnvError::IncompleteTrace {
            expected: episode_length,
            got: trace.len(),
        });
    }
    Ok(partial_metrics(trace))
}

fn partial_metrics(trace: &[SlotRecord]) -> (f64, f64) {
    if trace.is_empty() {
        return (0.0, 0.0);
    }
    let mut aoi = 0.0;
    let mut energy = 0.0;
    for r in trace {
        aoi += r.aoi.iter().sum::<f64>() / r.aoi.len() as f64;
        energy += r.energy.iter().sum::<f64>();
    }
    (aoi / trace.len() as f64, energy)
}

#[derive(Clone, Debug)]
pub struct AoiEnv {
    config: EnvConfig,
    world: World,
    aoi: AoiVector,
    slot: usize,
    history: ObsHistory,
    trace: Vec<SlotRecord>,
    fixed: Option<World>,
}

impl AoiEnv {
    pub fn new(config: EnvConfig) -> Result<Self, EnvError> {
        config.validate()?;
        let fixed = if config.fixed_topology {
            Some(generate_topology(&config.world, config.topology_seed)?)
        } else {
            None
        };
        let world = match &fixed {
            Some(w) => w.clone(),
            None => generate_topology(&config.world, 0)?,
        };
        let n_sn = world.n_sn();
        let dim = config.obs_dim();
        let mut env = Self {
            history: ObsHistory::new(config.seq_len, dim),
            aoi: AoiVector::zeros(n_sn),
            config,
            world,
            slot: 0,
            trace: Vec::new(),
            fixed,
        };
        env.reset(0);
        Ok(env)
    }

    /// Uses `world` as the topology for every episode.
    pub fn with_world(config: EnvConfig, world: World) -> Result<Self, EnvError> {
        let mut config = config;
        config.world = world.config.clone();
        config.fixed_topology = true;
        config.validate()?;
        let dim = config.obs_dim();
        let mut env = Self {
            history: ObsHistory::new(config.seq_len, dim),
            aoi: AoiVector::zeros(world.n_sn()),
            config,
            world: world.clone(),
            slot: 0,
            trace: Vec::new(),
            fixed: Some(world),
        };
        env.reset(0);
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn aoi(&self) -> &AoiVector {
        &self.aoi
    }

    pub fn slot(&self) -> usize {
        self.slot
    }

    pub fn is_done(&self) -> bool {
        self.slot >= self.config.episode_length
    }

    pub fn trace(&self) -> &[SlotRecord] {
        &self.trace
    }

    pub fn observe_sequence(&self) -> Vec<Vec<f64>> {
        self.history.sequence()
    }

    pub fn observation(&self) -> Vec<f64> {
        let c = &self.config.world;
        let (w, h) = (c.width(), c.height());
        let mut o = Vec::with_capacity(self.config.obs_dim());
        for a in &self.world.aavs {
            o.push((a.position.x - c.x_min) / w);
            o.push((a.position.y - c.y_min) / h);
        }
        for s in &self.world.sensors {
            o.push((s.position.x - c.x_min) / w);
            o.push((s.position.y - c.y_min) / h);
        }
        let t = self.config.episode_length as f64;
        o.extend(self.aoi.0.iter().map(|a| a / t));
        o
    }

    pub fn reset_seeded(&mut self, seed: u64) -> Result<Vec<f64>, EnvError> {
        self.world = match &self.fixed {
            Some(w) => w.clone(),
            None => generate_topology(&self.config.world, seed)?,
        };
        self.aoi = AoiVector::zeros(self.world.n_sn());
        self.slot = 0;
        self.trace.clear();
        self.history.clear();
        let o = self.observation();
        self.history.push(&o);
        Ok(o)
    }

    pub fn step_full(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        if self.is_done() {
            return Err(EnvError::Done);
        }
        let expected = self.config.action_dim();
        if action.len() != expected {
            return Err(EnvError::ActionSize {
                expected,
                got: action.len(),
            });
        }
        let dm = self.config.delta_move;
        let disp = action_to_displacements(action, self.config.world.max_step(dm));
        let (moved, violations) = apply_moves(&self.world, &disp, dm)?;
        let speeds: Vec<f64> = self
            .world
            .aavs
            .iter()
            .zip(&moved.aavs)
            .map(|(a, b)| a.position.horizontal_distance(&b.position) / dm)
            .collect();
        self.world = moved;

        let radius = self.config.world.comm_radius;
        let beta = dpam_assign(&self.world, &self.config.channel, radius);
        let mut outcome = schedule_slot(&self.world, &beta, &self.config.channel, dm)?;
        outcome.per_aav_energy = slotproto::slot_energy(&outcome, &speeds, &self.config.energy);
        self.aoi = update_aoi(&self.aoi, &outcome.served, outcome.q_fraction);
        self.slot += 1;

        let t = self.config.episode_length as f64;
        let mean_aoi = self.aoi.mean() / t;
        let coverage = coverage_counts(&self.world, radius);
        let mut per_aav = Vec::with_capacity(self.world.n_aav());
        for j in 0..self.world.n_aav() {
            let hits = violations.iter().filter(|v| v.aav == j).count() as f64;
            per_aav.push(
                -self.config.rho1 * mean_aoi - self.config.rho2 * outcome.per_aav_energy[j]
                    + self.config.rho3 * coverage[j] as f64
                    - self.config.oob_penalty * hits,
            );
        }
        let scalar = per_aav.iter().sum::<f64>() / per_aav.len() as f64;

        let observation = self.observation();
        self.history.push(&observation);
        self.trace.push(SlotRecord {
            slot: self.slot,
            served_count: outcome.served.iter().filter(|&&s| s).count(),
            served: outcome.served.clone(),
            q: outcome.q_fraction,
            delta_g2a: outcome.delta_g2a,
            delta_a2a: outcome.delta_a2a,
            delta_a2g: outcome.delta_a2g,
            delta_move: outcome.delta_move,
            feasible: outcome.feasible,
            aoi: self.aoi.0.clone(),
            aav_positions: self.world.aavs.iter().map(|a| (a.position.x, a.position.y)).collect(),
            speeds,
            energy: outcome.per_aav_energy.clone(),
            coverage,
            rewards: per_aav.clone(),
            reward: scalar,
            violations: violations.clone(),
        });
        Ok(StepResult {
            observation,
            per_aav_rewards: per_aav,
            scalar_reward: scalar,
            done: self.is_done(),
            outcome,
            violations,
        })
    }

    pub fn metrics(&self) -> Result<(f64, f64), EnvError> {
        episode_metrics(&self.trace, self.config.episode_length)
    }
}

impl Environment for AoiEnv {
    fn obs_dim(&self) -> usize {
        self.config.obs_dim()
    }

    fn action_dim(&self) -> usize {
        self.config.action_dim()
    }

    fn episode_length(&self) -> usize {
        self.config.episode_length
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.reset_seeded(seed)
            .expect("topology config was validated at construction")
    }

    fn step(&mut self, action: &[f64]) -> Result<EnvStep, EnvError> {
        let r = self.step_full(action)?;
        Ok(EnvStep {
            observation: r.observation,
            reward: r.scalar_reward,
            done: r.done,
        })
    }

    fn summary(&self) -> EpisodeSummary {
        let (time_avg_aoi, total_energy_j) = partial_metrics(&self.trace);
        EpisodeSummary {
            time_avg_aoi,
            total_energy_j,
            violations: self.trace.iter().map(|r| r.violations.len()).sum(),
        }
    }
}

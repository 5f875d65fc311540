//! Experiment configuration files.
//!
//! One TOML file holds every tunable, split into the sections `world`,
//! `channel`, `energy`, `env`, `sac`, `prune` and `run`. Missing keys take
//! the full-scale defaults; unknown keys are errors.

use aoirelay_agent::{PruneConfig, SacConfig};
use aoirelay_core::{ChannelParams, EnergyParams, EnvConfig, EnvError, WorldConfig};
use aoirelay_core::channel::ChannelError;
use aoirelay_core::world::WorldError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("config key `{key}`: {message}")]
    Type { key: String, message: String },
    #[error("config key `{key}` {reason}")]
    Invalid { key: String, reason: String },
}

/// Scalar environment settings. The observation window length comes from
/// `sac.seq_len`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvSection {
    pub episode_length: usize,
    pub rho1: f64,
    pub rho2: f64,
    pub rho3: f64,
    pub oob_penalty: f64,
    pub delta_move: f64,
    pub fixed_topology: bool,
    pub topology_seed: u64,
}

impl Default for EnvSection {
    fn default() -> Self {
        Self::from(&EnvConfig::default())
    }
}

impl From<&EnvConfig> for EnvSection {
    fn from(e: &EnvConfig) -> Self {
        Self {
            episode_length: e.episode_length,
            rho1: e.rho1,
            rho2: e.rho2,
            rho3: e.rho3,
            oob_penalty: e.oob_penalty,
            delta_move: e.delta_move,
            fixed_topology: e.fixed_topology,
            topology_seed: e.topology_seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Deterministic evaluation episodes after training.
    pub eval_episodes: usize,
    /// Write a checkpoint every this many episodes; 0 writes only the final one.
    pub checkpoint_every: usize,
    /// Trailing training episodes averaged into the final smoothed return.
    pub smooth_window: usize,
    /// Draw the topology from the run seed instead of `env.topology_seed`.
    pub topology_from_seed: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            eval_episodes: 10,
            checkpoint_every: 0,
            smooth_window: 50,
            topology_from_seed: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub world: WorldConfig,
    pub channel: ChannelParams,
    pub energy: EnergyParams,
    pub env: EnvSection,
    pub sac: SacConfig,
    pub prune: PruneConfig,
    pub run: RunConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let env = EnvConfig::default();
        Self {
            world: env.world.clone(),
            channel: env.channel.clone(),
            energy: env.energy.clone(),
            env: EnvSection::from(&env),
            sac: SacConfig::default(),
            prune: PruneConfig::default(),
            run: RunConfig::default(),
        }
    }
}

/// Symbol spellings accepted for a few keys.
const ALIASES: &[(&str, &str, &str)] = &[("world", "h_u", "aav_altitude")];

/// Rewrites aliases to canonical keys. Returns `(canonical, alias)` paths
/// for every alias used so errors can name the key that was written.
fn canonicalize(value: &mut toml::Value) -> Result<Vec<(String, String)>, ConfigError> {
    let mut used = Vec::new();
    let Some(root) = value.as_table_mut() else { return Ok(used) };
    for (section, alias, key) in ALIASES {
        if let Some(t) = root.get_mut(*section).and_then(|v| v.as_table_mut()) {
            if let Some(v) = t.remove(*alias) {
                if t.contains_key(*key) {
                    return Err(ConfigError::Invalid {
                        key: format!("{section}.{alias}"),
                        reason: format!("given together with {section}.{key}"),
                    });
                }
                t.insert(key.to_string(), v);
                used.push((format!("{section}.{key}"), format!("{section}.{alias}")));
            }
        }
    }
    Ok(used)
}

fn rename(key: String, used: &[(String, String)]) -> String {
    used.iter().find(|(c, _)| *c == key).map_or(key, |(_, a)| a.clone())
}

impl ExperimentConfig {
    /// The 2-AAV / 12-SN desk scenario with network sizes that train in
    /// minutes on one core.
    pub fn desk() -> Self {
        let env = EnvConfig::desk();
        let mut sac = SacConfig {
            episodes: 300,
            batch_size: 64,
            lr_actor: 1e-3,
            lr_critic: 1e-3,
            lr_alpha: 1e-3,
            ..SacConfig::default()
        };
        sac.net.hidden = 32;
        sac.net.trunk = 64;
        Self {
            world: env.world.clone(),
            channel: env.channel.clone(),
            energy: env.energy.clone(),
            env: EnvSection::from(&env),
            sac,
            ..Self::default()
        }
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut value: toml::Value = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.message().to_string()))?;
        let used = canonicalize(&mut value)?;
        let cfg: Self = serde_path_to_error::deserialize(value).map_err(|e| ConfigError::Type {
            key: rename(e.path().to_string(), &used),
            message: e.into_inner().to_string(),
        })?;
        match cfg.validate() {
            Err(ConfigError::Invalid { key, reason }) => Err(ConfigError::Invalid {
                key: rename(key, &used),
                reason,
            }),
            other => other.map(|_| cfg),
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Environment for a run seeded with `seed`.
    pub fn env_config(&self, seed: u64) -> EnvConfig {
        EnvConfig {
            episode_length: self.env.episode_length,
            seq_len: self.sac.seq_len,
            rho1: self.env.rho1,
            rho2: self.env.rho2,
            rho3: self.env.rho3,
            oob_penalty: self.env.oob_penalty,
            delta_move: self.env.delta_move,
            fixed_topology: self.env.fixed_topology,
            topology_seed: if self.run.topology_from_seed {
                seed
            } else {
                self.env.topology_seed
            },
            world: self.world.clone(),
            channel: self.channel.clone(),
            energy: self.energy.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |key: String, reason: String| ConfigError::Invalid { key, reason };
        self.env_config(0).validate().map_err(|e| match e {
            EnvError::Invalid { field, reason } => {
                let key = match field.as_str() {
                    "seq_len" => "sac.seq_len".to_string(),
                    f if f.starts_with("energy.") => f.to_string(),
                    f => format!("env.{f}"),
                };
                invalid(key, reason)
            }
            EnvError::World(WorldError::Invalid { field, reason }) => invalid(format!("world.{field}"), reason),
            EnvError::Channel(ChannelError::Invalid { field, reason }) => {
                invalid(format!("channel.{field}"), reason)
            }
            other => invalid("env".into(), other.to_string()),
        })?;
        self.sac.validate().map_err(|e| match e {
            aoirelay_agent::SacError::Invalid { field, reason } => invalid(format!("sac.{field}"), reason),
            other => invalid("sac".into(), other.to_string()),
        })?;
        self.prune
            .validate()
            .map_err(|e| invalid("prune.ratios".into(), e.to_string()))?;
        if self.prune.lg_lambdas.iter().any(|l| !l.is_finite()) {
            return Err(invalid("prune.lg_lambdas".into(), "must be finite".into()));
        }
        if self.run.eval_episodes < 1 {
            return Err(invalid("run.eval_episodes".into(), "must be >= 1".into()));
        }
        if self.run.smooth_window < 1 {
            return Err(invalid("run.smooth_window".into(), "must be >= 1".into()));
        }
        Ok(())
    }
}

//! Single runs and their on-disk artifacts.
//!
//! A run directory holds `manifest.toml`, `metrics.csv`, `eval.csv`,
//! `trace.jsonl`, `summary.json`, `timing.json` and, for learned policies,
//! `checkpoint`. Everything except `timing.json` is a pure function of the
//! manifest.

use crate::config::{ConfigError, ExperimentConfig};
use aoirelay_agent::train::episode_seed;
use aoirelay_agent::{metrics_csv, train, Ablation, EpisodeRow, Sac};
use aoirelay_core::baselines::{greedy_policy, RandomPolicy};
use aoirelay_core::{AoiEnv, Environment, ObsHistory};
use aoirelay_nn::Checkpoint;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

/// Evaluation episodes of a run seeded with `s` reset from `s ^ EVAL_SALT`,
/// so learned and baseline policies face the same episodes.
pub const EVAL_SALT: u64 = 0xE7A1_0000_5EED_0001;
pub const RUNS_ENV: &str = "AOIRELAY_RUNS";

pub fn runs_root() -> PathBuf {
    std::env::var_os(RUNS_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from)
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error(transparent)]
    Env(#[from] aoirelay_core::EnvError),
    #[error(transparent)]
    Train(#[from] aoirelay_agent::TrainError),
    #[error("{0}")]
    Other(String),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn format_err(path: &Path, message: impl ToString) -> RunError {
    RunError::Format {
        path: path.display().to_string(),
        message: message.to_string(),
    }
}

pub fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), RunError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io(dir))?;
    }
    fs::write(path, contents).map_err(io(path))
}

pub fn read(path: &Path) -> Result<String, RunError> {
    fs::read_to_string(path).map_err(io(path))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    /// SAC with the network flags from `sac.ablation`.
    Sactls,
    /// SAC with every SAC-TLS component switched off.
    Sac,
    Greedy,
    Random,
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Sactls => "sactls",
            PolicyKind::Sac => "sac",
            PolicyKind::Greedy => "greedy",
            PolicyKind::Random => "random",
        }
    }

    pub fn learns(&self) -> bool {
        matches!(self, PolicyKind::Sactls | PolicyKind::Sac)
    }

    /// The configuration this policy actually runs with.
    pub fn apply(&self, mut config: ExperimentConfig) -> ExperimentConfig {
        if *self == PolicyKind::Sac {
            config.sac.ablation = Ablation::PLAIN;
        }
        config
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub name: String,
    pub group: String,
    pub policy: PolicyKind,
    pub seed: u64,
    pub config_hash: String,
    pub version: String,
    /// Command line that created the run.
    pub command: Vec<String>,
    pub config: ExperimentConfig,
}

impl Manifest {
    pub fn new(name: &str, group: &str, policy: PolicyKind, seed: u64, config: ExperimentConfig, command: Vec<String>) -> Self {
        let config = policy.apply(config);
        Self {
            name: name.to_string(),
            group: group.to_string(),
            policy,
            seed,
            config_hash: config.hash(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command,
            config,
        }
    }

    pub fn load(dir: &Path) -> Result<Self, RunError> {
        let path = dir.join("manifest.toml");
        let m: Manifest = toml::from_str(&read(&path)?).map_err(|e| format_err(&path, e.message()))?;
        m.config.validate()?;
        if m.config.hash() != m.config_hash {
            return Err(format_err(&path, "config_hash does not match the embedded config"));
        }
        Ok(m)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub group: String,
    pub policy: PolicyKind,
    pub seed: u64,
    pub config_hash: String,
    /// Mean deterministic evaluation return.
    pub eval_return: f64,
    /// Mean time-average AoI over the evaluation episodes.
    pub f1: f64,
    /// Mean total energy (J) over the evaluation episodes.
    pub f2: f64,
    /// Mean of the last `run.smooth_window` training returns; the evaluation
    /// mean for policies that do not learn.
    pub final_smoothed_return: f64,
    pub eval_violations: usize,
}

impl Summary {
    pub fn load(dir: &Path) -> Result<Self, RunError> {
        let path = dir.join("summary.json");
        serde_json::from_str(&read(&path)?).map_err(|e| format_err(&path, e))
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "eval_return" => Some(self.eval_return),
            "f1" => Some(self.f1),
            "f2" => Some(self.f2),
            "final_smoothed_return" => Some(self.final_smoothed_return),
            _ => None,
        }
    }
}

pub const METRICS: [&str; 4] = ["eval_return", "f1", "f2", "final_smoothed_return"];

/// A policy ready to act on observation windows.
pub enum Agent {
    Learned(Box<Sac>),
    Greedy,
    Random(RandomPolicy),
}

impl Agent {
    fn act(&mut self, window: &[f64], env: &AoiEnv) -> Vec<f64> {
        match self {
            Agent::Learned(sac) => sac.act_deterministic(window),
            Agent::Greedy => {
                let obs = &window[window.len() - env.config().obs_dim()..];
                greedy_policy(obs, env.world(), env.config().delta_move)
            }
            Agent::Random(p) => p.act(env.config().action_dim()),
        }
    }
}

pub struct Evaluation {
    pub rows: Vec<EpisodeRow>,
    /// One JSON object per slot, tagged with its episode.
    pub trace: String,
    pub violations: usize,
}

/// Plays `episodes` evaluation episodes from `seed`.
pub fn evaluate(env: &mut AoiEnv, agent: &mut Agent, episodes: usize, seed: u64) -> Result<Evaluation, RunError> {
    let seq_len = env.config().seq_len;
    let mut history = ObsHistory::new(seq_len, env.obs_dim());
    let mut rows = Vec::with_capacity(episodes);
    let mut trace = String::new();
    let mut violations = 0;
    for ep in 0..episodes {
        let obs = env.reset(episode_seed(seed, ep));
        history.clear();
        history.push(&obs);
        let mut ret = 0.0;
        loop {
            let a = agent.act(&history.flat(), env);
            let step = env.step(&a)?;
            history.push(&step.observation);
            ret += step.reward;
            if step.done {
                break;
            }
        }
        for rec in env.trace() {
            let mut v = serde_json::to_value(rec).expect("slot record serializes");
            v.as_object_mut()
                .expect("slot record is an object")
                .insert("episode".into(), ep.into());
            trace.push_str(&v.to_string());
            trace.push('\n');
        }
        let s = env.summary();
        violations += s.violations;
        rows.push(EpisodeRow {
            episode: ep,
            ret,
            time_avg_aoi: s.time_avg_aoi,
            total_energy_j: s.total_energy_j,
            alpha: 0.0,
            critic_loss: 0.0,
            actor_loss: 0.0,
            wall_ms: 0,
        });
    }
    Ok(Evaluation { rows, trace, violations })
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n.max(1) as f64
}

pub fn save_checkpoint(path: &Path, sac: &Sac) -> Result<(), RunError> {
    let mut bytes = Vec::new();
    sac.to_checkpoint()
        .write_to(&mut bytes)
        .map_err(|e| format_err(path, e))?;
    write(path, bytes)
}

pub fn load_checkpoint(path: &Path) -> Result<Sac, RunError> {
    let f = fs::File::open(path).map_err(io(path))?;
    let ck = Checkpoint::read_from(std::io::BufReader::new(f)).map_err(|e| format_err(path, e))?;
    Sac::from_checkpoint(&ck).map_err(|e| format_err(path, e))
}

/// Trains (if the policy learns), evaluates and writes every artifact into
/// `root/<manifest.name>`.
pub fn execute(manifest: &Manifest, root: &Path) -> Result<Summary, RunError> {
    let cfg = &manifest.config;
    cfg.validate()?;
    let dir = root.join(&manifest.name);
    fs::create_dir_all(&dir).map_err(io(&dir))?;
    write(&dir.join("manifest.toml"), manifest.to_toml())?;
    let start = Instant::now();
    let env_cfg = cfg.env_config(manifest.seed);

    let (mut agent, train_rows) = if manifest.policy.learns() {
        let mut env = AoiEnv::new(env_cfg.clone())?;
        let every = cfg.run.checkpoint_every;
        let mut failed = None;
        let out = train(&mut env, &cfg.sac, manifest.seed, |row, sac| {
            if every > 0 && (row.episode + 1) % every == 0 {
                let path = dir.join(format!("checkpoint_ep{}", row.episode + 1));
                if let Err(e) = save_checkpoint(&path, sac) {
                    failed.get_or_insert(e);
                }
            }
        })?;
        if let Some(e) = failed {
            return Err(e);
        }
        save_checkpoint(&dir.join("checkpoint"), &out.agent)?;
        (Agent::Learned(Box::new(out.agent)), Some(out.rows))
    } else {
        let agent = match manifest.policy {
            PolicyKind::Greedy => Agent::Greedy,
            _ => Agent::Random(RandomPolicy::new(manifest.seed ^ EVAL_SALT)),
        };
        (agent, None)
    };
    let train_ms = start.elapsed().as_millis() as u64;

    let mut env = AoiEnv::new(env_cfg)?;
    let ev = evaluate(&mut env, &mut agent, cfg.run.eval_episodes, manifest.seed ^ EVAL_SALT)?;
    write(&dir.join("eval.csv"), metrics_csv(&ev.rows))?;
    write(&dir.join("trace.jsonl"), &ev.trace)?;

    let eval_return = mean(ev.rows.iter().map(|r| r.ret));
    let final_smoothed_return = match &train_rows {
        Some(rows) => {
            let w = cfg.run.smooth_window.min(rows.len());
            mean(rows[rows.len() - w..].iter().map(|r| r.ret))
        }
        None => eval_return,
    };
    write(&dir.join("metrics.csv"), metrics_csv(train_rows.as_deref().unwrap_or(&ev.rows)))?;

    let summary = Summary {
        name: manifest.name.clone(),
        group: manifest.group.clone(),
        policy: manifest.policy,
        seed: manifest.seed,
        config_hash: manifest.config_hash.clone(),
        eval_return,
        f1: mean(ev.rows.iter().map(|r| r.time_avg_aoi)),
        f2: mean(ev.rows.iter().map(|r| r.total_energy_j)),
        final_smoothed_return,
        eval_violations: ev.violations,
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write(&dir.join("summary.json"), json + "\n")?;
    let timing = serde_json::json!({
        "train_ms": train_ms,
        "total_ms": start.elapsed().as_millis() as u64,
    });
    write(&dir.join("timing.json"), timing.to_string() + "\n")?;
    Ok(summary)
}

/// Re-executes a finished run from its manifest into `root/<name>`.
pub fn rerun(dir: &Path, root: &Path, name: Option<&str>) -> Result<Summary, RunError> {
    let mut m = Manifest::load(dir)?;
    if let Some(n) = name {
        m.name = n.to_string();
    }
    execute(&m, root)
}

/// The run if its directory already holds a summary for the same manifest,
/// otherwise a fresh execution.
pub fn execute_cached(manifest: &Manifest, root: &Path) -> Result<Summary, RunError> {
    let dir = root.join(&manifest.name);
    if let (Ok(m), Ok(s)) = (Manifest::load(&dir), Summary::load(&dir)) {
        if m.config_hash == manifest.config_hash && m.seed == manifest.seed && m.policy == manifest.policy {
            return Ok(s);
        }
    }
    execute(manifest, root)
}

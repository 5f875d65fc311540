#![allow(dead_code)]

use aoirelay_agent::{Ablation, Actor, NetConfig, SacConfig, Transition};
use aoirelay_core::{EnvError, EnvStep, Environment};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn small_net() -> NetConfig {
    NetConfig {
        hidden: 8,
        trunk: 12,
        trunk_layers: 2,
        se_ratio: 4,
        ln_eps: 1e-5,
    }
}

pub fn small_config(ablation: Ablation) -> SacConfig {
    SacConfig {
        batch_size: 16,
        warmup_steps: 32,
        seq_len: 3,
        buffer_capacity: 2000,
        episodes: 5,
        ablation,
        net: small_net(),
        ..SacConfig::default()
    }
}

pub fn actor(obs: usize, act: usize, seq: usize, ablation: Ablation, seed: u64) -> Actor {
    Actor::new(obs, act, seq, &small_net(), ablation, &mut rng(seed))
}

pub fn random_window(r: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| r.gen_range(-1.0..1.0)).collect()
}

pub fn random_transitions(r: &mut ChaCha8Rng, n: usize, window: usize, act: usize) -> Vec<Transition> {
    (0..n)
        .map(|_| Transition {
            state: random_window(r, window),
            action: random_window(r, act),
            reward: r.gen_range(-1.0..1.0),
            next_state: random_window(r, window),
            done: r.gen_bool(0.1),
        })
        .collect()
}

/// One-step continuous bandit: reward `−(a − target)²` with a constant
/// observation.
#[derive(Clone, Debug)]
pub struct Bandit {
    pub target: f64,
    done: bool,
}

impl Bandit {
    pub fn new(target: f64) -> Self {
        Self { target, done: false }
    }
}

impl Environment for Bandit {
    fn obs_dim(&self) -> usize {
        2
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn episode_length(&self) -> usize {
        1
    }

    fn reset(&mut self, _seed: u64) -> Vec<f64> {
        self.done = false;
        vec![1.0, 0.0]
    }

    fn step(&mut self, action: &[f64]) -> Result<EnvStep, EnvError> {
        if self.done {
            return Err(EnvError::Done);
        }
        self.done = true;
        Ok(EnvStep {
            observation: vec![1.0, 0.0],
            reward: -(action[0] - self.target).powi(2),
            done: true,
        })
    }
}

//! Episode loop: act, store, update, log.

use crate::replay::{ReplayBuffer, Transition};
use crate::sac::{Sac, SacConfig, SacError};
use aoirelay_core::mdpenv::{EnvError, Environment, ObsHistory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Sac(#[from] SacError),
}

pub const METRICS_HEADER: &str = "episode,return,time_avg_aoi,total_energy_j,alpha,critic_loss,actor_loss,wall_ms";

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRow {
    pub episode: usize,
    pub ret: f64,
    pub time_avg_aoi: f64,
    pub total_energy_j: f64,
    pub alpha: f64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub wall_ms: u64,
}

impl EpisodeRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.episode,
            self.ret,
            self.time_avg_aoi,
            self.total_energy_j,
            self.alpha,
            self.critic_loss,
            self.actor_loss,
            self.wall_ms
        )
    }
}

pub fn metrics_csv(rows: &[EpisodeRow]) -> String {
    let mut s = String::with_capacity(64 * (rows.len() + 1));
    s.push_str(METRICS_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{}", r.csv_line());
    }
    s
}

/// Reset seed of episode `k` in a run seeded with `seed`.
pub fn episode_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (k as u64).wrapping_add(1).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

pub struct TrainOutput {
    pub agent: Sac,
    pub rows: Vec<EpisodeRow>,
}

/// Runs the full training loop. `on_episode` sees every finished row.
pub fn train<E: Environment>(
    env: &mut E,
    config: &SacConfig,
    seed: u64,
    mut on_episode: impl FnMut(&EpisodeRow, &Sac),
) -> Result<TrainOutput, TrainError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (obs_dim, act_dim) = (env.obs_dim(), env.action_dim());
    let mut agent = Sac::new(obs_dim, act_dim, config.clone(), &mut rng);
    let mut buffer = ReplayBuffer::new(config.buffer_capacity);
    let mut history = ObsHistory::new(config.seq_len, obs_dim);
    let mut rows = Vec::with_capacity(config.episodes);
    let mut total_steps = 0usize;
    let start = Instant::now();

    for ep in 0..config.episodes {
        let obs = env.reset(episode_seed(seed, ep));
        history.clear();
        history.push(&obs);
        let mut ret = 0.0;
        let (mut closs, mut aloss, mut n_upd) = (0.0, 0.0, 0usize);
        loop {
            let state = history.flat();
            let action: Vec<f64> = if total_steps < config.warmup_steps {
                (0..act_dim).map(|_| rng.gen_range(-1.0..=1.0)).collect()
            } else {
                agent.act(&state, &mut rng)
            };
            let step = env.step(&action)?;
            history.push(&step.observation);
            ret += step.reward;
            total_steps += 1;
            buffer.push(Transition {
                state,
                action,
                reward: step.reward,
                next_state: history.flat(),
                done: step.done,
            });
            let ready = buffer.len() >= config.batch_size && total_steps >= config.warmup_steps;
            if ready && total_steps % config.update_every == 0 {
                for _ in 0..config.updates_per_step {
                    let batch = buffer.sample(&mut rng, config.batch_size);
                    let s = agent.update(&batch, &mut rng)?;
                    closs += s.critic_loss;
                    aloss += s.actor_loss;
                    n_upd += 1;
                }
            }
            if step.done {
                break;
            }
        }
        let summary = env.summary();
        let k = n_upd.max(1) as f64;
        let row = EpisodeRow {
            episode: ep,
            ret,
            time_avg_aoi: summary.time_avg_aoi,
            total_energy_j: summary.total_energy_j,
            alpha: agent.alpha(),
            critic_loss: closs / k,
            actor_loss: aloss / k,
            wall_ms: if config.record_wall_time {
                start.elapsed().as_millis() as u64
            } else {
                0
            },
        };
        on_episode(&row, &agent);
        rows.push(row);
    }
    Ok(TrainOutput { agent, rows })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalEpisode {
    pub ret: f64,
    pub time_avg_aoi: f64,
    pub total_energy_j: f64,
    pub violations: usize,
}

/// Plays `episodes` episodes with `policy(window, env) -> action`.
pub fn rollout<E: Environment>(
    env: &mut E,
    seq_len: usize,
    episodes: usize,
    seed: u64,
    mut policy: impl FnMut(&[f64], &E) -> Vec<f64>,
) -> Result<Vec<EvalEpisode>, EnvError> {
    let mut history = ObsHistory::new(seq_len, env.obs_dim());
    let mut out = Vec::with_capacity(episodes);
    for ep in 0..episodes {
        let obs = env.reset(episode_seed(seed, ep));
        history.clear();
        history.push(&obs);
        let mut ret = 0.0;
        loop {
            let a = policy(&history.flat(), env);
            let step = env.step(&a)?;
            history.push(&step.observation);
            ret += step.reward;
            if step.done {
                break;
            }
        }
        let s = env.summary();
        out.push(EvalEpisode {
            ret,
            time_avg_aoi: s.time_avg_aoi,
            total_energy_j: s.total_energy_j,
            violations: s.violations,
        });
    }
    Ok(out)
}

/// Deterministic-policy evaluation of the actor.
pub fn evaluate<E: Environment>(
    env: &mut E,
    actor: &crate::nets::Actor,
    episodes: usize,
    seed: u64,
) -> Result<Vec<EvalEpisode>, EnvError> {
    rollout(env, actor.seq_len, episodes, seed, |w, _| actor.act(w, None))
}

pub fn mean_return(eps: &[EvalEpisode]) -> f64 {
    eps.iter().map(|e| e.ret).sum::<f64>() / eps.len().max(1) as f64
}

/// Keeps training an existing agent for `steps` environment steps with a
/// fresh replay buffer. Updates start once a batch is available.
pub fn continue_training<E: Environment>(
    agent: &mut Sac,
    env: &mut E,
    steps: usize,
    seed: u64,
) -> Result<(), TrainError> {
    let cfg = agent.config.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut history = ObsHistory::new(cfg.seq_len, env.obs_dim());
    let mut ep = 0;
    let mut done = true;
    for t in 0..steps {
        if done {
            let obs = env.reset(episode_seed(seed, ep));
            ep += 1;
            history.clear();
            history.push(&obs);
        }
        let state = history.flat();
        let action = agent.act(&state, &mut rng);
        let step = env.step(&action)?;
        history.push(&step.observation);
        done = step.done;
        buffer.push(Transition {
            state,
            action,
            reward: step.reward,
            next_state: history.flat(),
            done,
        });
        if buffer.len() >= cfg.batch_size && (t + 1) % cfg.update_every == 0 {
            for _ in 0..cfg.updates_per_step {
                let batch = buffer.sample(&mut rng, cfg.batch_size);
                agent.update(&batch, &mut rng)?;
            }
        }
    }
    Ok(())
}

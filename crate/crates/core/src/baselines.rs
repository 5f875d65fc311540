//! Non-learning reference policies.

use crate::world::World;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Each AAV flies at full step toward the age-weighted centroid of the
/// sensors no AAV currently covers; it hovers when every sensor is covered.
/// Ages are read from the tail of `observation`; all-zero ages fall back to
/// the plain centroid.
pub fn greedy_policy(observation: &[f64], world: &World, delta_move: f64) -> Vec<f64> {
    let n_sn = world.n_sn();
    let ages = &observation[observation.len() - n_sn..];
    let radius = world.config.comm_radius;
    let step = world.config.max_step(delta_move);
    let uncovered: Vec<usize> = (0..n_sn)
        .filter(|&i| {
            let p = &world.sensors[i].position;
            world
                .aavs
                .iter()
                .all(|a| p.horizontal_distance(&a.position) > radius)
        })
        .collect();
    let mut action = vec![0.0; 2 * world.n_aav()];
    if uncovered.is_empty() {
        return action;
    }
    let total: f64 = uncovered.iter().map(|&i| ages[i].max(0.0)).sum();
    let weight = |i: usize| if total > 0.0 { ages[i].max(0.0) / total } else { 1.0 / uncovered.len() as f64 };
    let (mut tx, mut ty) = (0.0, 0.0);
    for &i in &uncovered {
        let w = weight(i);
        tx += w * world.sensors[i].position.x;
        ty += w * world.sensors[i].position.y;
    }
    for (j, a) in world.aavs.iter().enumerate() {
        let (dx, dy) = (tx - a.position.x, ty - a.position.y);
        let d = dx.hypot(dy);
        if d == 0.0 {
            continue;
        }
        let s = d.min(step) / d / step;
        action[2 * j] = dx * s;
        action[2 * j + 1] = dy * s;
    }
    action
}

/// Uniform actions in `[-1, 1]^d` from a seeded stream.
#[derive(Clone, Debug)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn act(&mut self, dim: usize) -> Vec<f64> {
        (0..dim).map(|_| self.rng.gen_range(-1.0..=1.0)).collect()
    }
}

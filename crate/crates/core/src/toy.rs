//! Point-to-goal sanity task with a closed-form optimum.
//!
//! A point starts at the origin; the goal sits at distance `goal_distance`
//! in a direction drawn per episode. Each step moves the point by at most
//! `max_step` and pays the reduction in distance to the goal (times
//! `reward_scale`), so the return telescopes to `scale · (d_0 − d_T)` and
//! the best achievable return is `scale · min(goal_distance, horizon · max_step)`.

use crate::mdpenv::{EnvError, EnvStep, Environment};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct PointGoal {
    pub horizon: usize,
    pub max_step: f64,
    pub goal_distance: f64,
    /// Multiplies every reward.
    pub reward_scale: f64,
    pos: (f64, f64),
    goal: (f64, f64),
    t: usize,
}

impl Default for PointGoal {
    /// Rewards in units of one full step, so the best return is 10.
    fn default() -> Self {
        let mut env = Self::new(20, 0.1, 1.0);
        env.reward_scale = 10.0;
        env
    }
}

impl PointGoal {
    pub fn new(horizon: usize, max_step: f64, goal_distance: f64) -> Self {
        Self {
            horizon,
            max_step,
            goal_distance,
            reward_scale: 1.0,
            pos: (0.0, 0.0),
            goal: (goal_distance, 0.0),
            t: 0,
        }
    }

    pub fn max_return(&self) -> f64 {
        self.reward_scale * self.goal_distance.min(self.horizon as f64 * self.max_step)
    }

    fn distance(&self) -> f64 {
        (self.goal.0 - self.pos.0).hypot(self.goal.1 - self.pos.1)
    }

    fn observation(&self) -> Vec<f64> {
        vec![
            self.pos.0,
            self.pos.1,
            self.goal.0 - self.pos.0,
            self.goal.1 - self.pos.1,
        ]
    }
}

impl Environment for PointGoal {
    fn obs_dim(&self) -> usize {
        4
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn episode_length(&self) -> usize {
        self.horizon
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        self.goal = (self.goal_distance * angle.cos(), self.goal_distance * angle.sin());
        self.pos = (0.0, 0.0);
        self.t = 0;
        self.observation()
    }

    fn step(&mut self, action: &[f64]) -> Result<EnvStep, EnvError> {
        if self.t >= self.horizon {
            return Err(EnvError::Done);
        }
        if action.len() != 2 {
            return Err(EnvError::ActionSize {
                expected: 2,
                got: action.len(),
            });
        }
        let fix = |v: f64| if v.is_finite() { v.clamp(-1.0, 1.0) } else { 0.0 };
        let (ax, ay) = (fix(action[0]), fix(action[1]));
        let m = ax.hypot(ay);
        let s = if m > 1.0 { 1.0 / m } else { 1.0 };
        let before = self.distance();
        self.pos.0 += ax * s * self.max_step;
        self.pos.1 += ay * s * self.max_step;
        self.t += 1;
        Ok(EnvStep {
            observation: self.observation(),
            reward: self.reward_scale * (before - self.distance()),
            done: self.t >= self.horizon,
        })
    }
}

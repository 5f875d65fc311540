//! Scenario geometry: sensor placement, AAV kinematics and the spatial rules
//! every applied move must satisfy.

use crate::geometry::Vec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error("invalid world config: {field} {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("initial AAV positions {a} and {b} are closer than d_min")]
    InitialSeparation { a: usize, b: usize },
    #[error("expected {expected} displacements, got {got}")]
    DisplacementCount { expected: usize, got: usize },
    #[error("delta_move must be positive, got {0}")]
    DeltaMove(f64),
    #[error("topology json: {0}")]
    Json(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    /// Fixed flight altitude H^U in meters.
    pub aav_altitude: f64,
    pub bs_position: Vec3,
    pub n_sn: usize,
    pub n_aav: usize,
    pub d_min: f64,
    pub v_max: f64,
    pub cluster_count: usize,
    /// Per-axis standard deviation of a sensor cluster, meters.
    pub cluster_spread: f64,
    /// Horizontal ground-to-air coverage radius, meters.
    pub comm_radius: f64,
    /// Per-sensor data volume is drawn uniformly from this range, bits.
    pub data_min_bits: f64,
    pub data_max_bits: f64,
    pub sn_tx_power_w: f64,
    pub aav_tx_power_w: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            x_min: 0.0,
            x_max: 400.0,
            y_min: 0.0,
            y_max: 400.0,
            aav_altitude: 15.0,
            bs_position: Vec3::new(2000.0, 2000.0, 0.0),
            n_sn: 60,
            n_aav: 4,
            d_min: 1.0,
            v_max: 30.0,
            cluster_count: 5,
            cluster_spread: 30.0,
            comm_radius: 100.0,
            data_min_bits: 0.5e6,
            data_max_bits: 2.0e6,
            sn_tx_power_w: 0.1,
            aav_tx_power_w: 0.5,
        }
    }
}

fn invalid(field: &'static str, reason: impl Into<String>) -> WorldError {
    WorldError::Invalid {
        field,
        reason: reason.into(),
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), WorldError> {
        let finite = [
            ("x_min", self.x_min),
            ("x_max", self.x_max),
            ("y_min", self.y_min),
            ("y_max", self.y_max),
            ("aav_altitude", self.aav_altitude),
            ("d_min", self.d_min),
            ("v_max", self.v_max),
            ("comm_radius", self.comm_radius),
            ("cluster_spread", self.cluster_spread),
        ];
        for (f, v) in finite {
            if !v.is_finite() {
                return Err(invalid(f, "must be finite"));
            }
        }
        if self.x_min >= self.x_max {
            return Err(invalid("x_max", "must exceed x_min"));
        }
        if self.y_min >= self.y_max {
            return Err(invalid("y_max", "must exceed y_min"));
        }
        if self.aav_altitude <= 0.0 {
            return Err(invalid("aav_altitude", "must be > 0"));
        }
        if self.d_min <= 0.0 {
            return Err(invalid("d_min", "must be > 0"));
        }
        if self.v_max <= 0.0 {
            return Err(invalid("v_max", "must be > 0"));
        }
        if self.n_aav < 1 {
            return Err(invalid("n_aav", "must be >= 1"));
        }
        if self.n_sn < 1 {
            return Err(invalid("n_sn", "must be >= 1"));
        }
        if self.cluster_count < 1 {
            return Err(invalid("cluster_count", "must be >= 1"));
        }
        if self.cluster_spread < 0.0 {
            return Err(invalid("cluster_spread", "must be >= 0"));
        }
        if self.comm_radius <= 0.0 {
            return Err(invalid("comm_radius", "must be > 0"));
        }
        if !(self.data_min_bits > 0.0 && self.data_min_bits <= self.data_max_bits) {
            return Err(invalid("data_min_bits", "need 0 < data_min_bits <= data_max_bits"));
        }
        if !(self.sn_tx_power_w > 0.0) {
            return Err(invalid("sn_tx_power_w", "must be > 0"));
        }
        if !(self.aav_tx_power_w > 0.0) {
            return Err(invalid("aav_tx_power_w", "must be > 0"));
        }
        Ok(())
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (self.x_min..=self.x_max).contains(&x) && (self.y_min..=self.y_max).contains(&y)
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn max_step(&self, delta_move: f64) -> f64 {
        self.v_max * delta_move
    }

    /// Start positions: the four corners for four AAVs, otherwise evenly
    /// spaced along the perimeter counter-clockwise from `(x_min, y_min)`.
    pub fn initial_aav_positions(&self) -> Vec<Vec3> {
        let h = self.aav_altitude;
        if self.n_aav == 4 {
            return vec![
                Vec3::new(self.x_min, self.y_min, h),
                Vec3::new(self.x_min, self.y_max, h),
                Vec3::new(self.x_max, self.y_min, h),
                Vec3::new(self.x_max, self.y_max, h),
            ];
        }
        let (w, ht) = (self.width(), self.height());
        let perimeter = 2.0 * (w + ht);
        (0..self.n_aav)
            .map(|k| {
                let s = perimeter * k as f64 / self.n_aav as f64;
                let (x, y) = if s < w {
                    (self.x_min + s, self.y_min)
                } else if s < w + ht {
                    (self.x_max, self.y_min + (s - w))
                } else if s < 2.0 * w + ht {
                    (self.x_max - (s - w - ht), self.y_max)
                } else {
                    (self.x_min, self.y_max - (s - 2.0 * w - ht))
                };
                Vec3::new(x, y, h)
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorNode {
    pub id: usize,
    pub position: Vec3,
    /// Bits generated per slot.
    pub data_volume: f64,
    pub transmit_power: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AavState {
    pub id: usize,
    pub position: Vec3,
    pub transmit_power: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub config: WorldConfig,
    pub seed: u64,
    pub sensors: Vec<SensorNode>,
    pub aavs: Vec<AavState>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViolationKind {
    /// Requested step longer than `v_max · delta_move`.
    Speed { requested: f64, allowed: f64 },
    /// Target left the flight region and was clamped back.
    Boundary,
    /// Move would bring the AAV within `d_min` of `other`; it held position.
    Separation { other: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub aav: usize,
    #[serde(flatten)]
    pub kind: ViolationKind,
}

const SPEED_SLACK: f64 = 1e-12;

pub fn generate_topology(config: &WorldConfig, seed: u64) -> Result<World, WorldError> {
    config.validate()?;
    let starts = config.initial_aav_positions();
    for a in 0..starts.len() {
        for b in a + 1..starts.len() {
            if starts[a].distance(&starts[b]) < config.d_min {
                return Err(WorldError::InitialSeparation { a, b });
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sensors = place_sensors(config, &mut rng);
    let aavs = starts
        .into_iter()
        .enumerate()
        .map(|(id, position)| AavState {
            id,
            position,
            transmit_power: config.aav_tx_power_w,
        })
        .collect();
    Ok(World {
        config: config.clone(),
        seed,
        sensors,
        aavs,
    })
}

// Cluster centers are drawn around the middle of the area; clusters nearer
// the middle receive more sensors.
fn place_sensors(config: &WorldConfig, rng: &mut ChaCha8Rng) -> Vec<SensorNode> {
    let (w, h) = (config.width(), config.height());
    let cx = config.x_min + 0.5 * w;
    let cy = config.y_min + 0.5 * h;
    let pull = Normal::new(0.0, 0.22).expect("valid sd");
    let k = config.cluster_count;
    let centers: Vec<(f64, f64)> = (0..k)
        .map(|_| {
            let ox: f64 = pull.sample(rng);
            let oy: f64 = pull.sample(rng);
            (
                (cx + ox * w).clamp(config.x_min, config.x_max),
                (cy + oy * h).clamp(config.y_min, config.y_max),
            )
        })
        .collect();
    let scale = 0.25 * w.min(h);
    let weights: Vec<f64> = centers
        .iter()
        .map(|&(x, y)| 1.0 / (1.0 + (x - cx).hypot(y - cy) / scale))
        .collect();
    let counts = apportion(config.n_sn, &weights);

    let spread = Normal::new(0.0, config.cluster_spread.max(0.0)).expect("valid spread");
    let mut sensors = Vec::with_capacity(config.n_sn);
    for (c, &(x0, y0)) in centers.iter().enumerate() {
        for _ in 0..counts[c] {
            let mut p = (x0, y0);
            for _ in 0..16 {
                let cand = (x0 + spread.sample(rng), y0 + spread.sample(rng));
                p = cand;
                if config.contains(cand.0, cand.1) {
                    break;
                }
            }
            let x = p.0.clamp(config.x_min, config.x_max);
            let y = p.1.clamp(config.y_min, config.y_max);
            let data = if config.data_max_bits > config.data_min_bits {
                rng.gen_range(config.data_min_bits..config.data_max_bits)
            } else {
                config.data_min_bits
            };
            sensors.push(SensorNode {
                id: sensors.len(),
                position: Vec3::new(x, y, 0.0),
                data_volume: data,
                transmit_power: config.sn_tx_power_w,
            });
        }
    }
    sensors
}

/// Largest-remainder split of `n` items by `weights`.
fn apportion(n: usize, weights: &[f64]) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| n as f64 * w / total).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut left = n - counts.iter().sum::<usize>();
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

impl World {
    pub fn n_aav(&self) -> usize {
        self.aavs.len()
    }

    pub fn n_sn(&self) -> usize {
        self.sensors.len()
    }

    pub fn aav_positions(&self) -> Vec<Vec3> {
        self.aavs.iter().map(|a| a.position).collect()
    }

    pub fn min_separation(&self) -> f64 {
        let mut best = f64::INFINITY;
        for a in 0..self.aavs.len() {
            for b in a + 1..self.aavs.len() {
                best = best.min(self.aavs[a].position.distance(&self.aavs[b].position));
            }
        }
        best
    }

    /// True when every position is in bounds, AAVs fly at `H^U` and keep `d_min`.
    pub fn satisfies_invariants(&self) -> bool {
        let c = &self.config;
        self.sensors
            .iter()
            .all(|s| c.contains(s.position.x, s.position.y))
            && self.aavs.iter().all(|a| {
                c.contains(a.position.x, a.position.y) && a.position.z == c.aav_altitude
            })
            && self.min_separation() >= c.d_min
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("world serializes")
    }

    pub fn from_json(text: &str) -> Result<World, WorldError> {
        let w: World = serde_json::from_str(text).map_err(|e| WorldError::Json(e.to_string()))?;
        w.config.validate()?;
        if w.aavs.len() != w.config.n_aav || w.sensors.len() != w.config.n_sn {
            return Err(WorldError::Json("entity counts disagree with config".into()));
        }
        Ok(w)
    }
}

/// Applies one move phase. Steps are capped to `v_max · delta_move`, then
/// clamped to the flight region; any AAV whose target would break `d_min`
/// holds its previous position. Every correction is reported.
pub fn apply_moves(
    world: &World,
    displacements: &[(f64, f64)],
    delta_move: f64,
) -> Result<(World, Vec<Violation>), WorldError> {
    if displacements.len() != world.aavs.len() {
        return Err(WorldError::DisplacementCount {
            expected: world.aavs.len(),
            got: displacements.len(),
        });
    }
    if !(delta_move > 0.0) {
        return Err(WorldError::DeltaMove(delta_move));
    }
    let c = &world.config;
    let cap = c.max_step(delta_move);
    let mut violations = Vec::new();
    let mut targets: Vec<Vec3> = Vec::with_capacity(world.aavs.len());
    for (j, (aav, &(dx, dy))) in world.aavs.iter().zip(displacements).enumerate() {
        let (dx, dy) = if dx.is_finite() && dy.is_finite() { (dx, dy) } else { (0.0, 0.0) };
        let m = dx.hypot(dy);
        let (mut sx, mut sy) = (dx, dy);
        if m > cap * (1.0 + SPEED_SLACK) {
            sx = dx * cap / m;
            sy = dy * cap / m;
            violations.push(Violation {
                aav: j,
                kind: ViolationKind::Speed {
                    requested: m,
                    allowed: cap,
                },
            });
        }
        let (rx, ry) = (aav.position.x + sx, aav.position.y + sy);
        let x = rx.clamp(c.x_min, c.x_max);
        let y = ry.clamp(c.y_min, c.y_max);
        if x != rx || y != ry {
            violations.push(Violation {
                aav: j,
                kind: ViolationKind::Boundary,
            });
        }
        targets.push(Vec3::new(x, y, c.aav_altitude));
    }

    let n = targets.len();
    let mut held = vec![false; n];
    'resolve: loop {
        for a in 0..n {
            for b in a + 1..n {
                if targets[a].distance(&targets[b]) < c.d_min {
                    let (who, other) = if !held[b] { (b, a) } else { (a, b) };
                    held[who] = true;
                    targets[who] = world.aavs[who].position;
                    violations.push(Violation {
                        aav: who,
                        kind: ViolationKind::Separation { other },
                    });
                    if held.iter().all(|&h| h) {
                        break 'resolve;
                    }
                    continue 'resolve;
                }
            }
        }
        break;
    }

    let mut next = world.clone();
    for (aav, t) in next.aavs.iter_mut().zip(targets) {
        aav.position = t;
    }
    Ok((next, violations))
}

//! The four-phase slot: ground-to-air collection, air-to-air broadcast,
//! beamformed forwarding to the BS, then movement. Also the age recurrence
//! and the rotary-wing energy model.

use crate::channel::{self, ChannelError, ChannelParams};
use crate::world::World;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SLOT_LENGTH: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum SlotError {
    #[error("sensor {0} is assigned to more than one AAV")]
    MultipleAssignment(usize),
    #[error("assignment is {got_sn}x{got_aav}, world has {n_sn} sensors and {n_aav} AAVs")]
    Shape {
        got_sn: usize,
        got_aav: usize,
        n_sn: usize,
        n_aav: usize,
    },
    #[error("sensor {sn} assigned to AAV {aav} has no achievable rate")]
    ZeroRate { sn: usize, aav: usize },
    #[error("delta_move must lie in [0, 1), got {0}")]
    DeltaMove(f64),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Binary sensor-to-AAV schedule `β[i][j]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    n_sn: usize,
    n_aav: usize,
    bits: Vec<bool>,
}

impl Assignment {
    pub fn empty(n_sn: usize, n_aav: usize) -> Self {
        Self {
            n_sn,
            n_aav,
            bits: vec![false; n_sn * n_aav],
        }
    }

    pub fn from_owners(owners: &[Option<usize>], n_aav: usize) -> Self {
        let mut a = Self::empty(owners.len(), n_aav);
        for (i, o) in owners.iter().enumerate() {
            if let Some(j) = *o {
                a.set(i, j, true);
            }
        }
        a
    }

    pub fn n_sn(&self) -> usize {
        self.n_sn
    }

    pub fn n_aav(&self) -> usize {
        self.n_aav
    }

    pub fn get(&self, sn: usize, aav: usize) -> bool {
        self.bits[sn * self.n_aav + aav]
    }

    pub fn set(&mut self, sn: usize, aav: usize, v: bool) {
        self.bits[sn * self.n_aav + aav] = v;
    }

    /// Number of AAVs serving sensor `sn`.
    pub fn load(&self, sn: usize) -> usize {
        (0..self.n_aav).filter(|&j| self.get(sn, j)).count()
    }

    /// The AAV serving `sn`, if exactly one does.
    pub fn owner(&self, sn: usize) -> Option<usize> {
        (0..self.n_aav).find(|&j| self.get(sn, j))
    }

    pub fn served_mask(&self) -> Vec<bool> {
        (0..self.n_sn).map(|i| self.load(i) > 0).collect()
    }

    pub fn served_by(&self, aav: usize) -> usize {
        (0..self.n_sn).filter(|&i| self.get(i, aav)).count()
    }

    pub fn is_valid(&self) -> bool {
        (0..self.n_sn).all(|i| self.load(i) <= 1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotOutcome {
    pub delta_g2a: f64,
    pub delta_a2a: f64,
    pub delta_a2g: f64,
    pub delta_move: f64,
    /// Per-AAV collection time `δ_j` before truncation to the slot.
    pub per_aav_g2a_time: Vec<f64>,
    /// Bits collected by each AAV, `S_j`.
    pub collected_per_aav: Vec<f64>,
    pub s_g2a: f64,
    pub s_a2g: f64,
    pub s_c: f64,
    pub q_fraction: f64,
    pub snr_bs: f64,
    pub rate_bs: f64,
    pub served: Vec<bool>,
    pub feasible: bool,
    /// Filled in by the caller once move speeds are known.
    pub per_aav_energy: Vec<f64>,
}

impl SlotOutcome {
    pub fn total_duration(&self) -> f64 {
        self.delta_g2a + self.delta_a2a + self.delta_a2g + self.delta_move
    }

    pub fn hover_time(&self) -> f64 {
        self.delta_g2a + self.delta_a2a + self.delta_a2g
    }
}

/// Runs the communication phases of one slot for schedule `beta`.
///
/// When collection plus broadcast plus movement do not fit in the slot the
/// slot is infeasible: nothing is forwarded and the reported phase lengths
/// are cut at the slot boundary.
pub fn schedule_slot(
    world: &World,
    beta: &Assignment,
    params: &ChannelParams,
    delta_move: f64,
) -> Result<SlotOutcome, SlotError> {
    let (n_sn, n_aav) = (world.n_sn(), world.n_aav());
    if beta.n_sn() != n_sn || beta.n_aav() != n_aav {
        return Err(SlotError::Shape {
            got_sn: beta.n_sn(),
            got_aav: beta.n_aav(),
            n_sn,
            n_aav,
        });
    }
    if !(0.0..SLOT_LENGTH).contains(&delta_move) {
        return Err(SlotError::DeltaMove(delta_move));
    }
    for i in 0..n_sn {
        if beta.load(i) > 1 {
            return Err(SlotError::MultipleAssignment(i));
        }
    }

    let mut per_aav_time = vec![0.0; n_aav];
    let mut collected = vec![0.0; n_aav];
    for (i, sn) in world.sensors.iter().enumerate() {
        if let Some(j) = beta.owner(i) {
            let rate = channel::g2a_rate(sn, &world.aavs[j], params)?;
            if !(rate > 0.0) || !rate.is_finite() {
                return Err(SlotError::ZeroRate { sn: i, aav: j });
            }
            per_aav_time[j] += sn.data_volume / rate;
            collected[j] += sn.data_volume;
        }
    }
    let g2a = per_aav_time.iter().cloned().fold(0.0, f64::max);
    let s_g2a: f64 = collected.iter().sum();
    let s_c: f64 = world.sensors.iter().map(|s| s.data_volume).sum();

    let mut a2a: f64 = 0.0;
    if n_aav > 1 {
        for (j, &s) in collected.iter().enumerate() {
            if s > 0.0 {
                a2a = a2a.max(s / channel::a2a_broadcast_rate(j, world, params)?);
            }
        }
    }

    let (snr_bs, rate_bs) = channel::vaa_a2g_rate(world, params)?;
    let busy = g2a + a2a + delta_move;
    let feasible = busy < SLOT_LENGTH;
    let (delta_g2a, delta_a2a, delta_a2g) = if feasible {
        (g2a, a2a, SLOT_LENGTH - busy)
    } else {
        let room = SLOT_LENGTH - delta_move;
        let dg = g2a.min(room);
        (dg, a2a.min(room - dg), 0.0)
    };
    let s_a2g = (delta_a2g * rate_bs).min(s_g2a);
    let q = forwarded_fraction(s_g2a, s_a2g, s_c);
    Ok(SlotOutcome {
        delta_g2a,
        delta_a2a,
        delta_a2g,
        delta_move,
        per_aav_g2a_time: per_aav_time,
        collected_per_aav: collected,
        s_g2a,
        s_a2g,
        s_c,
        q_fraction: q,
        snr_bs,
        rate_bs,
        served: beta.served_mask(),
        feasible,
        per_aav_energy: Vec::new(),
    })
}

/// Share of the slot's generated data that reached the BS.
pub fn forwarded_fraction(s_g2a: f64, s_a2g: f64, s_c: f64) -> f64 {
    if s_c > 0.0 {
        (s_g2a.min(s_a2g) / s_c).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Per-sensor age in slots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AoiVector(pub Vec<f64>);

impl AoiVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn mean(&self) -> f64 {
        if self.0.is_empty() {
            0.0
        } else {
            self.0.iter().sum::<f64>() / self.0.len() as f64
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Served sensors age to `(1 − q)(A + 1)`, all others to `A + 1`.
pub fn update_aoi(aoi: &AoiVector, served: &[bool], q: f64) -> AoiVector {
    assert_eq!(aoi.len(), served.len(), "served mask length");
    debug_assert!((0.0..=1.0).contains(&q));
    AoiVector(
        aoi.0
            .iter()
            .zip(served)
            .map(|(&a, &s)| if s { (1.0 - q) * (a + 1.0) } else { a + 1.0 })
            .collect(),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergyParams {
    pub p0_w: f64,
    pub p1_w: f64,
    pub u_tip: f64,
    pub v0_induced: f64,
    pub d0_drag: f64,
    pub air_density: f64,
    pub rotor_solidity: f64,
    pub rotor_disc_area: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self {
            p0_w: 199.4,
            p1_w: 88.66,
            u_tip: 120.0,
            v0_induced: 4.03,
            d0_drag: 0.6,
            air_density: 1.225,
            rotor_solidity: 0.05,
            rotor_disc_area: 0.503,
        }
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        for (f, v) in [
            ("p0_w", self.p0_w),
            ("p1_w", self.p1_w),
            ("u_tip", self.u_tip),
            ("v0_induced", self.v0_induced),
            ("d0_drag", self.d0_drag),
            ("air_density", self.air_density),
            ("rotor_solidity", self.rotor_solidity),
            ("rotor_disc_area", self.rotor_disc_area),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err((f, "must be positive".to_string()));
            }
        }
        Ok(())
    }

    pub fn hover_power(&self) -> f64 {
        self.p0_w + self.p1_w
    }
}

/// Propulsion power at horizontal speed `v`: blade profile, induced and
/// parasite terms.
pub fn propulsion_power(v: f64, p: &EnergyParams) -> f64 {
    let v2 = v * v;
    let v0_2 = p.v0_induced * p.v0_induced;
    let blade = p.p0_w * (1.0 + 3.0 * v2 / (p.u_tip * p.u_tip));
    let induced = p.p1_w * (1.0 + v2 * v2 / (4.0 * v0_2 * v0_2) - v2 / (2.0 * v0_2)).sqrt();
    let parasite = 0.5 * p.air_density * p.d0_drag * p.rotor_solidity * p.rotor_disc_area * v2 * v;
    blade + induced + parasite
}

/// Energy of each AAV over one slot: flight at its speed during the move
/// phase, hover power during the three communication phases.
pub fn slot_energy(outcome: &SlotOutcome, speeds: &[f64], p: &EnergyParams) -> Vec<f64> {
    let hover = p.hover_power() * outcome.hover_time();
    speeds
        .iter()
        .map(|&v| propulsion_power(v, p) * outcome.delta_move + hover)
        .collect()
}

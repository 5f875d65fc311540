//! Radio links: probabilistic line-of-sight ground-to-air, line-of-sight
//! air-to-air broadcast, and the coherent virtual-array link to the BS.

use crate::geometry::Vec3;
use crate::world::{AavState, SensorNode, World};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("transmitter and receiver coincide")]
    Coincident,
    #[error("air-to-air broadcast needs at least two AAVs, got {0}")]
    TooFewAavs(usize),
    #[error("AAV index {0} out of range")]
    NoSuchAav(usize),
    #[error("invalid channel params: {field} {reason}")]
    Invalid { field: &'static str, reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelParams {
    pub sigmoid_a: f64,
    pub sigmoid_b: f64,
    pub carrier_frequency_hz: f64,
    pub eta_los_db: f64,
    pub eta_nlos_db: f64,
    /// Air-to-air reference gain at 1 m.
    pub rho0_db: f64,
    pub alpha_a2a: f64,
    /// Air-to-ground reference gain at 1 m.
    pub g0_db: f64,
    pub alpha_a2g: f64,
    pub noise_psd_dbm_hz: f64,
    /// Bandwidth of the beamformed link to the BS.
    pub total_bandwidth_hz: f64,
    pub per_sn_bandwidth_hz: f64,
    pub per_aav_bandwidth_hz: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            sigmoid_a: 5.18,
            sigmoid_b: 0.43,
            carrier_frequency_hz: 2e9,
            eta_los_db: 1.0,
            eta_nlos_db: 20.0,
            rho0_db: -40.0,
            alpha_a2a: 2.0,
            g0_db: -40.0,
            alpha_a2g: 2.0,
            noise_psd_dbm_hz: -174.0,
            total_bandwidth_hz: 1e6,
            per_sn_bandwidth_hz: 180e3,
            per_aav_bandwidth_hz: 1e6,
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

fn log2_1p(x: f64) -> f64 {
    x.ln_1p() / std::f64::consts::LN_2
}

impl ChannelParams {
    pub fn validate(&self) -> Result<(), ChannelError> {
        let bad = |field, reason: &str| {
            Err(ChannelError::Invalid {
                field,
                reason: reason.to_string(),
            })
        };
        for (f, v) in [
            ("total_bandwidth_hz", self.total_bandwidth_hz),
            ("per_sn_bandwidth_hz", self.per_sn_bandwidth_hz),
            ("per_aav_bandwidth_hz", self.per_aav_bandwidth_hz),
            ("carrier_frequency_hz", self.carrier_frequency_hz),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(f, "must be positive");
            }
        }
        if self.alpha_a2a < 2.0 {
            return bad("alpha_a2a", "must be >= 2");
        }
        if self.alpha_a2g < 2.0 {
            return bad("alpha_a2g", "must be >= 2");
        }
        if self.eta_los_db < 0.0 {
            return bad("eta_los_db", "must be >= 0");
        }
        if self.eta_nlos_db < self.eta_los_db {
            return bad("eta_nlos_db", "must be >= eta_los_db");
        }
        if !(self.sigmoid_a > 0.0 && self.sigmoid_b > 0.0) {
            return bad("sigmoid_a", "sigmoid constants must be positive");
        }
        Ok(())
    }

    pub fn rho0(&self) -> f64 {
        db_to_linear(self.rho0_db)
    }

    pub fn g0(&self) -> f64 {
        db_to_linear(self.g0_db)
    }

    /// Thermal noise over `bandwidth_hz`, watts.
    pub fn noise_power(&self, bandwidth_hz: f64) -> f64 {
        db_to_linear(self.noise_psd_dbm_hz + linear_to_db(bandwidth_hz) - 30.0)
    }
}

/// Line-of-sight probability at an elevation angle in degrees.
pub fn p_los(elevation_deg: f64, params: &ChannelParams) -> f64 {
    let a = params.sigmoid_a;
    1.0 / (1.0 + a * (-params.sigmoid_b * (elevation_deg - a)).exp())
}

/// Elevation of `aav` seen from `sn`, degrees.
pub fn elevation_deg(sn: &Vec3, aav: &Vec3) -> f64 {
    let d = sn.distance(aav);
    ((aav.z - sn.z) / d).clamp(-1.0, 1.0).asin().to_degrees()
}

/// Free-space path loss as a linear factor, `(4π d f / c)²`.
pub fn fspl(distance: f64, frequency_hz: f64) -> f64 {
    let k = 4.0 * std::f64::consts::PI * distance * frequency_hz / SPEED_OF_LIGHT;
    k * k
}

pub fn g2a_gain(sn: &SensorNode, aav: &AavState, params: &ChannelParams) -> Result<f64, ChannelError> {
    g2a_gain_at(&sn.position, &aav.position, params)
}

pub fn g2a_gain_at(sn: &Vec3, aav: &Vec3, params: &ChannelParams) -> Result<f64, ChannelError> {
    let d = sn.distance(aav);
    if d == 0.0 {
        return Err(ChannelError::Coincident);
    }
    let pl = p_los(elevation_deg(sn, aav).max(0.0), params);
    let base = fspl(d, params.carrier_frequency_hz);
    let l_los = base * db_to_linear(params.eta_los_db);
    let l_nlos = base * db_to_linear(params.eta_nlos_db);
    Ok(1.0 / (pl * l_los + (1.0 - pl) * l_nlos))
}

/// Shannon rate for a given SNR over `bandwidth_hz`.
pub fn shannon_rate(bandwidth_hz: f64, snr: f64) -> f64 {
    bandwidth_hz * log2_1p(snr)
}

pub fn g2a_rate(sn: &SensorNode, aav: &AavState, params: &ChannelParams) -> Result<f64, ChannelError> {
    let g = g2a_gain(sn, aav, params)?;
    let b = params.per_sn_bandwidth_hz;
    Ok(shannon_rate(b, sn.transmit_power * g / params.noise_power(b)))
}

/// Rate over one air-to-air link of length `distance` with receiver power `power`.
pub fn a2a_pair_rate(distance: f64, power: f64, params: &ChannelParams) -> Result<f64, ChannelError> {
    if distance == 0.0 {
        return Err(ChannelError::Coincident);
    }
    let h = params.rho0() / distance.powf(params.alpha_a2a);
    let b = params.per_aav_bandwidth_hz;
    Ok(shannon_rate(b, power * h / params.noise_power(b)))
}

/// Broadcast rate of `source`: the slowest of its links to every other AAV.
pub fn a2a_broadcast_rate(source: usize, world: &World, params: &ChannelParams) -> Result<f64, ChannelError> {
    let n = world.aavs.len();
    if n < 2 {
        return Err(ChannelError::TooFewAavs(n));
    }
    let src = world.aavs.get(source).ok_or(ChannelError::NoSuchAav(source))?;
    let mut best = f64::INFINITY;
    for (j, rx) in world.aavs.iter().enumerate() {
        if j == source {
            continue;
        }
        let d = src.position.distance(&rx.position);
        best = best.min(a2a_pair_rate(d, rx.transmit_power, params)?);
    }
    Ok(best)
}

/// Received SNR at the BS when every AAV transmits coherently.
pub fn vaa_snr(aavs: &[AavState], bs: &Vec3, params: &ChannelParams) -> Result<f64, ChannelError> {
    let g0 = params.g0();
    let mut amplitude = 0.0;
    for a in aavs {
        let d = a.position.distance(bs);
        if d == 0.0 {
            return Err(ChannelError::Coincident);
        }
        amplitude += (a.transmit_power * g0 * d.powf(-params.alpha_a2g)).sqrt();
    }
    Ok(amplitude * amplitude / params.noise_power(params.total_bandwidth_hz))
}

/// `(snr, rate)` of the virtual antenna array toward the BS.
pub fn vaa_a2g_rate(world: &World, params: &ChannelParams) -> Result<(f64, f64), ChannelError> {
    let snr = vaa_snr(&world.aavs, &world.config.bs_position, params)?;
    Ok((snr, shannon_rate(params.total_bandwidth_hz, snr)))
}

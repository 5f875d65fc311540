#![allow(dead_code)]

use aoirelay_core::world::{AavState, SensorNode, World, WorldConfig};
use aoirelay_core::Vec3;

/// World with hand-placed sensors `(x, y, bits)` and AAVs `(x, y)`.
pub fn world_at(base: &WorldConfig, sensors: &[(f64, f64, f64)], aavs: &[(f64, f64)]) -> World {
    let config = WorldConfig {
        n_sn: sensors.len(),
        n_aav: aavs.len(),
        ..base.clone()
    };
    World {
        seed: 0,
        sensors: sensors
            .iter()
            .enumerate()
            .map(|(id, &(x, y, d))| SensorNode {
                id,
                position: Vec3::new(x, y, 0.0),
                data_volume: d,
                transmit_power: config.sn_tx_power_w,
            })
            .collect(),
        aavs: aavs
            .iter()
            .enumerate()
            .map(|(id, &(x, y))| AavState {
                id,
                position: Vec3::new(x, y, config.aav_altitude),
                transmit_power: config.aav_tx_power_w,
            })
            .collect(),
        config,
    }
}

use aoirelay_core::channel::*;
use aoirelay_core::world::{generate_topology, AavState, SensorNode, World, WorldConfig};
use aoirelay_core::Vec3;
use proptest::prelude::*;

fn sn(x: f64, y: f64, p: f64) -> SensorNode {
    SensorNode {
        id: 0,
        position: Vec3::new(x, y, 0.0),
        data_volume: 1e5,
        transmit_power: p,
    }
}

fn aav(id: usize, x: f64, y: f64, z: f64, p: f64) -> AavState {
    AavState {
        id,
        position: Vec3::new(x, y, z),
        transmit_power: p,
    }
}

fn world_with(aavs: Vec<AavState>) -> World {
    let cfg = WorldConfig {
        n_aav: aavs.len(),
        ..WorldConfig::default()
    };
    let mut w = generate_topology(&WorldConfig { n_aav: 1, ..cfg.clone() }, 0).unwrap();
    w.config = cfg;
    w.aavs = aavs;
    w
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn los_probability_at_extremes() {
    let p = ChannelParams::default();
    assert!((p_los(90.0, &p) - 1.0).abs() < 1e-9);
    let oracle = 1.0 / (1.0 + 5.18 * (0.43f64 * 5.18).exp());
    assert!((p_los(0.0, &p) - oracle).abs() < 1e-15);
    assert!((p_los(0.0, &p) - 0.0203).abs() < 2e-4);
}

#[test]
fn los_probability_is_monotone_and_complemented() {
    let p = ChannelParams::default();
    let mut prev = 0.0;
    for k in 0..=9000 {
        let th = k as f64 * 0.01;
        let v = p_los(th, &p);
        assert!(v >= prev, "drop at {th}");
        assert!(v > 0.0 && v < 1.0 + 1e-15);
        assert_eq!((1.0 - v) + v, 1.0);
        prev = v;
    }
}

#[test]
fn equal_excess_losses_reduce_to_free_space() {
    let p = ChannelParams {
        eta_los_db: 7.0,
        eta_nlos_db: 7.0,
        ..ChannelParams::default()
    };
    for (x, y) in [(0.0, 0.0), (30.0, 0.0), (120.0, 80.0), (300.0, 10.0)] {
        let g = g2a_gain(&sn(x, y, 0.1), &aav(0, 0.0, 0.0, 15.0, 0.5), &p).unwrap();
        let d = (x * x + y * y + 225.0f64).sqrt();
        let want = 1.0 / (fspl(d, 2e9) * 10f64.powf(0.7));
        assert!(rel(g, want) < 1e-12);
    }
}

#[test]
fn doubling_distance_at_fixed_elevation_quarters_gain() {
    let p = ChannelParams::default();
    let s = Vec3::new(0.0, 0.0, 0.0);
    let g1 = g2a_gain_at(&s, &Vec3::new(30.0, 40.0, 15.0), &p).unwrap();
    let g2 = g2a_gain_at(&s, &Vec3::new(60.0, 80.0, 30.0), &p).unwrap();
    assert!(rel(g1 / g2, 4.0) < 1e-12);
}

#[test]
fn gain_directly_below_matches_independent_fspl() {
    // FSPL(dB) = 20 log10(d) + 20 log10(f) + 20 log10(4π/c)
    let fspl_db = 20.0 * 15f64.log10() + 20.0 * 2e9f64.log10() - 147.552_2;
    assert!((fspl_db - 62.0).abs() < 0.05);
    let g = g2a_gain(&sn(10.0, 10.0, 0.1), &aav(0, 10.0, 10.0, 15.0, 0.5), &ChannelParams::default()).unwrap();
    let want = 10f64.powf(-(fspl_db + 1.0) / 10.0);
    assert!(rel(g, want) < 1e-5, "{g} vs {want}");
}

#[test]
fn gain_is_strictly_decreasing_in_horizontal_distance() {
    let p = ChannelParams::default();
    let mut prev = f64::INFINITY;
    for k in 0..400 {
        let g = g2a_gain(&sn(k as f64, 0.0, 0.1), &aav(0, 0.0, 0.0, 15.0, 0.5), &p).unwrap();
        assert!(g < prev);
        prev = g;
    }
}

#[test]
fn coincident_nodes_are_rejected() {
    let p = ChannelParams::default();
    let s = Vec3::new(1.0, 1.0, 0.0);
    assert_eq!(g2a_gain_at(&s, &s, &p), Err(ChannelError::Coincident));
}

#[test]
fn uplink_rate_special_points() {
    let p = ChannelParams::default();
    let a = aav(0, 0.0, 0.0, 15.0, 0.5);
    assert_eq!(g2a_rate(&sn(20.0, 5.0, 0.0), &a, &p).unwrap(), 0.0);
    let s = sn(20.0, 5.0, 1.0);
    let g = g2a_gain(&s, &a, &p).unwrap();
    let sigma2 = p.noise_power(p.per_sn_bandwidth_hz);
    let unit = sn(20.0, 5.0, sigma2 / g);
    assert!(rel(g2a_rate(&unit, &a, &p).unwrap(), p.per_sn_bandwidth_hz) < 1e-12);
    let three = sn(20.0, 5.0, 3.0 * sigma2 / g);
    assert!(rel(g2a_rate(&three, &a, &p).unwrap(), 2.0 * p.per_sn_bandwidth_hz) < 1e-12);
}

#[test]
fn noise_power_integrates_density() {
    let p = ChannelParams::default();
    // -174 dBm/Hz over 1 MHz = -114 dBm = 10^-14.4 W
    assert!(rel(p.noise_power(1e6), 10f64.powf(-14.4)) < 1e-12);
}

#[test]
fn broadcast_rate_is_min_over_receivers() {
    let p = ChannelParams::default();
    let w = world_with(vec![
        aav(0, 100.0, 100.0, 15.0, 0.5),
        aav(1, 130.0, 100.0, 15.0, 0.5),
        aav(2, 100.0, 130.0, 15.0, 0.5),
        aav(3, 70.0, 100.0, 15.0, 0.5),
    ]);
    let common = a2a_pair_rate(30.0, 0.5, &p).unwrap();
    assert!(rel(a2a_broadcast_rate(0, &w, &p).unwrap(), common) < 1e-12);
    let mut far = w.clone();
    far.aavs[2].position.y = 160.0;
    assert!(a2a_broadcast_rate(0, &far, &p).unwrap() <= a2a_broadcast_rate(0, &w, &p).unwrap());
    assert_eq!(a2a_broadcast_rate(0, &world_with(vec![aav(0, 0.0, 0.0, 15.0, 0.5)]), &p), Err(ChannelError::TooFewAavs(1)));
}

#[test]
fn broadcast_rate_hand_evaluation_at_100m() {
    let p = ChannelParams::default();
    let w = world_with(vec![aav(0, 0.0, 0.0, 15.0, 0.5), aav(1, 100.0, 0.0, 15.0, 0.5)]);
    let h = 1e-4 / 100.0f64.powi(2);
    let sigma2 = 1e-3 * 10f64.powf((-174.0 + 60.0) / 10.0);
    let want = 1e6 * (1.0 + 0.5 * h / sigma2).log2();
    assert!(rel(a2a_broadcast_rate(0, &w, &p).unwrap(), want) < 1e-12);
}

#[test]
fn coherent_array_gains_n_squared() {
    let p = ChannelParams::default();
    let bs = Vec3::new(2000.0, 2000.0, 0.0);
    // Four AAVs on a sphere around the BS share one distance.
    let r = 2500.0f64;
    let ring: Vec<AavState> = (0..4)
        .map(|k| {
            let t = 0.1 + 0.05 * k as f64;
            aav(k, bs.x + (r * r - 225.0).sqrt() * t.cos(), bs.y + (r * r - 225.0).sqrt() * t.sin(), 15.0, 0.5)
        })
        .collect();
    let one = vaa_snr(&ring[..1], &bs, &p).unwrap();
    for n in 1..=4 {
        let snr = vaa_snr(&ring[..n], &bs, &p).unwrap();
        assert!(rel(snr, (n * n) as f64 * one) < 1e-9);
    }
    assert!(rel(vaa_snr(&ring, &bs, &p).unwrap() / one, 16.0) < 1e-9);
}

#[test]
fn single_aav_snr_seven_gives_three_bits() {
    let p = ChannelParams::default();
    let bs = Vec3::new(2000.0, 2000.0, 0.0);
    let a = aav(0, 0.0, 0.0, 15.0, 1.0);
    let d = a.position.distance(&bs);
    let power = 7.0 * p.noise_power(p.total_bandwidth_hz) / (p.g0() * d.powi(-2));
    let mut w = world_with(vec![aav(0, 0.0, 0.0, 15.0, power)]);
    w.config.bs_position = bs;
    let (snr, rate) = vaa_a2g_rate(&w, &p).unwrap();
    assert!(rel(snr, 7.0) < 1e-12);
    assert!(rel(rate, 3.0 * p.total_bandwidth_hz) < 1e-12);
}

proptest! {
    #[test]
    fn combining_never_loses(
        pos in proptest::collection::vec((0.0f64..400.0, 0.0f64..400.0, 0.05f64..2.0), 1..6),
    ) {
        let p = ChannelParams::default();
        let bs = Vec3::new(2000.0, 2000.0, 0.0);
        let aavs: Vec<AavState> = pos.iter().enumerate().map(|(k, &(x, y, pw))| aav(k, x, y, 15.0, pw)).collect();
        let all = vaa_snr(&aavs, &bs, &p).unwrap();
        for k in 0..aavs.len() {
            let single = vaa_snr(&aavs[k..k + 1], &bs, &p).unwrap();
            prop_assert!(all >= single * (1.0 - 1e-12));
        }
        for n in 1..aavs.len() {
            prop_assert!(vaa_snr(&aavs[..n + 1], &bs, &p).unwrap() >= vaa_snr(&aavs[..n], &bs, &p).unwrap());
        }
    }

    #[test]
    fn rates_are_nonnegative_and_nonincreasing_in_distance(d1 in 1.0f64..500.0, extra in 0.0f64..500.0) {
        let p = ChannelParams::default();
        let d2 = d1 + extra;
        let r1 = g2a_rate(&sn(d1, 0.0, 0.1), &aav(0, 0.0, 0.0, 15.0, 0.5), &p).unwrap();
        let r2 = g2a_rate(&sn(d2, 0.0, 0.1), &aav(0, 0.0, 0.0, 15.0, 0.5), &p).unwrap();
        prop_assert!(r2 >= 0.0 && r2 <= r1);
        let a1 = a2a_pair_rate(d1, 0.5, &p).unwrap();
        let a2 = a2a_pair_rate(d2, 0.5, &p).unwrap();
        prop_assert!(a2 >= 0.0 && a2 <= a1);
        let bs = Vec3::new(0.0, 0.0, 0.0);
        let v1 = vaa_snr(&[aav(0, d1, 0.0, 15.0, 0.5)], &bs, &p).unwrap();
        let v2 = vaa_snr(&[aav(0, d2, 0.0, 15.0, 0.5)], &bs, &p).unwrap();
        prop_assert!(v2 >= 0.0 && v2 <= v1);
    }
}

use aoirelay::config::{ConfigError, ExperimentConfig};
use proptest::prelude::*;
use std::path::Path;

#[test]
fn empty_file_gives_table_defaults() {
    let c = ExperimentConfig::parse("").unwrap();
    assert_eq!((c.world.x_min, c.world.x_max, c.world.y_min, c.world.y_max), (0.0, 400.0, 0.0, 400.0));
    assert_eq!(c.world.aav_altitude, 15.0);
    assert_eq!(c.world.d_min, 1.0);
    assert_eq!(c.world.n_aav, 4);
    assert_eq!(c.world.n_sn, 60);
    assert_eq!((c.world.bs_position.x, c.world.bs_position.y, c.world.bs_position.z), (2000.0, 2000.0, 0.0));
    assert_eq!(c.env.episode_length, 100);
    assert_eq!(c.energy.p0_w, 199.4);
    assert_eq!(c.energy.p1_w, 88.66);
    assert_eq!(c.energy.u_tip, 120.0);
    assert_eq!(c.energy.v0_induced, 4.03);
    assert_eq!(c.energy.d0_drag, 0.6);
    assert_eq!(c.energy.air_density, 1.225);
    assert_eq!(c.energy.rotor_solidity, 0.05);
    assert_eq!((c.channel.sigmoid_a, c.channel.sigmoid_b), (5.18, 0.43));
    assert_eq!(c.channel.noise_psd_dbm_hz, -174.0);
    assert_eq!(c.sac.gamma, 0.99);
    assert_eq!(c.sac.episodes, 4500);
    assert_eq!(c, ExperimentConfig::default());
}

#[test]
fn negative_altitude_names_the_key_as_written() {
    let e = ExperimentConfig::parse("[world]\nh_u = -1\n").unwrap_err();
    assert!(matches!(&e, ConfigError::Invalid { key, .. } if key == "world.h_u"), "{e}");
    assert!(e.to_string().contains("world.h_u"));
    let e = ExperimentConfig::parse("[world]\naav_altitude = -1.0\n").unwrap_err();
    assert!(matches!(&e, ConfigError::Invalid { key, .. } if key == "world.aav_altitude"), "{e}");
}

#[test]
fn alias_sets_the_canonical_field() {
    let c = ExperimentConfig::parse("[world]\nh_u = 20.0\n").unwrap();
    assert_eq!(c.world.aav_altitude, 20.0);
    assert!(ExperimentConfig::parse("[world]\nh_u = 20.0\naav_altitude = 20.0\n").is_err());
}

#[test]
fn type_errors_carry_key_paths() {
    let e = ExperimentConfig::parse("[world]\nn_aav = \"two\"\n").unwrap_err();
    assert!(matches!(&e, ConfigError::Type { key, .. } if key == "world.n_aav"), "{e}");
    let e = ExperimentConfig::parse("[sac.net]\nhidden = 1.5\n").unwrap_err();
    assert!(matches!(&e, ConfigError::Type { key, .. } if key == "sac.net.hidden"), "{e}");
}

#[test]
fn unknown_keys_are_rejected() {
    for text in ["[sac]\nbogus = 1\n", "[nosuch]\nx = 1\n", "top = 3\n"] {
        let e = ExperimentConfig::parse(text).unwrap_err();
        assert!(matches!(e, ConfigError::Type { .. }), "{text}: {e}");
    }
    let e = ExperimentConfig::parse("[sac]\nbogus = 1\n").unwrap_err();
    assert!(e.to_string().contains("sac"), "{e}");
}

#[test]
fn validation_errors_name_section_and_key() {
    let cases = [
        ("[sac]\ngamma = 1.0\n", "sac.gamma"),
        ("[sac]\nseq_len = 0\n", "sac.seq_len"),
        ("[env]\ndelta_move = 1.5\n", "env.delta_move"),
        ("[channel]\nsigmoid_a = -1.0\n", "channel.sigmoid_a"),
        ("[prune]\nratios = [1.5]\n", "prune.ratios"),
        ("[run]\neval_episodes = 0\n", "run.eval_episodes"),
    ];
    for (text, key) in cases {
        match ExperimentConfig::parse(text) {
            Err(ConfigError::Invalid { key: k, .. }) => assert_eq!(k, key, "{text}"),
            other => panic!("{text}: {other:?}"),
        }
    }
}

#[test]
fn syntax_errors_are_reported() {
    assert!(matches!(ExperimentConfig::parse("[world\n"), Err(ConfigError::Syntax(_))));
}

#[test]
fn shipped_desk_config_matches_preset() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml");
    assert_eq!(ExperimentConfig::load(&path).unwrap(), ExperimentConfig::desk());
}

#[test]
fn missing_file_is_an_io_error() {
    assert!(matches!(
        ExperimentConfig::load(Path::new("/nonexistent/x.toml")),
        Err(ConfigError::Io { .. })
    ));
}

#[test]
fn hash_tracks_content() {
    let a = ExperimentConfig::desk();
    let mut b = a.clone();
    assert_eq!(a.hash(), b.hash());
    assert_eq!(a.hash().len(), 16);
    b.sac.gamma = 0.98;
    assert_ne!(a.hash(), b.hash());
}

#[test]
fn env_config_follows_the_run_seed() {
    let mut c = ExperimentConfig::desk();
    assert_eq!(c.env_config(7).topology_seed, 7);
    assert_eq!(c.env_config(7).seq_len, c.sac.seq_len);
    c.run.topology_from_seed = false;
    c.env.topology_seed = 3;
    assert_eq!(c.env_config(7).topology_seed, 3);
}

proptest! {
    #[test]
    fn serialization_round_trip_is_idempotent(
        gamma in 0.0f64..0.999,
        episodes in 1usize..5000,
        n_aav in 2usize..6,
        n_sn in 3usize..80,
        rho2 in 0.0f64..1.0,
        hidden in 1usize..64,
        lgs in proptest::collection::vec(-9.0f64..-3.0, 1..5),
        use_se: bool,
    ) {
        let mut c = ExperimentConfig::desk();
        c.sac.gamma = gamma;
        c.sac.episodes = episodes;
        c.world.n_aav = n_aav;
        c.world.n_sn = n_sn;
        c.env.rho2 = rho2;
        c.sac.net.hidden = hidden;
        c.sac.ablation.use_se = use_se;
        c.prune.lg_lambdas = lgs;
        let text = c.to_toml();
        let back = ExperimentConfig::parse(&text).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.to_toml(), text);
    }
}

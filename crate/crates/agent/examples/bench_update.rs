use aoirelay_agent::{Ablation, NetConfig, ReplayBuffer, Sac, SacConfig, Transition};
use rand::{Rng, SeedableRng};
use std::time::Instant;

fn main() {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().unwrap()).collect();
    let (hidden, trunk, batch) = (args[0], args[1], args[2]);
    let (obs, act, n) = (40, 4, 4);
    for (name, abl) in [("full", Ablation::FULL), ("plain", Ablation::PLAIN)] {
        let cfg = SacConfig {
            batch_size: batch,
            net: NetConfig { hidden, trunk, ..NetConfig::default() },
            ablation: abl,
            ..SacConfig::default()
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut sac = Sac::new(obs, act, cfg, &mut rng);
        let mut buf = ReplayBuffer::new(1000);
        for _ in 0..1000 {
            buf.push(Transition {
                state: (0..obs * n).map(|_| rng.gen()).collect(),
                action: (0..act).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                reward: rng.gen(),
                next_state: (0..obs * n).map(|_| rng.gen()).collect(),
                done: false,
            });
        }
        let t = Instant::now();
        let k = 50;
        for _ in 0..k {
            let b = buf.sample(&mut rng, batch);
            sac.update(&b, &mut rng).unwrap();
        }
        println!("{name}: {:.2} ms/update", t.elapsed().as_secs_f64() * 1e3 / k as f64);
    }
}

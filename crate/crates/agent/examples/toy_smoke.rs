use aoirelay_agent::{train, Ablation, NetConfig, SacConfig};
use aoirelay_core::toy::PointGoal;

fn arg<T: std::str::FromStr>(i: usize, d: T) -> T {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(d)
}

fn main() {
    let seed: u64 = arg(1, 0);
    let cfg = SacConfig {
        batch_size: arg(6, 64),
        warmup_steps: arg(7, 500),
        episodes: 300,
        updates_per_step: arg(5, 1),
        net: NetConfig { hidden: arg(2, 16), trunk: arg(3, 64), ..NetConfig::default() },
        ablation: match std::env::var("ABL").as_deref() {
            Ok("plain") => Ablation::PLAIN,
            _ => Ablation::FULL,
        },
        lr_actor: arg(4, 1e-3),
        lr_critic: arg(4, 1e-3),
        lr_alpha: arg(4, 1e-3),
        buffer_capacity: 10000,
        ..SacConfig::default()
    };
    let mut env = PointGoal::default();
    let t = std::time::Instant::now();
    let out = train(&mut env, &cfg, seed, |_, _| {}).unwrap();
    let best = out
        .rows
        .windows(10)
        .map(|w| w.iter().map(|r| r.ret).sum::<f64>() / 10.0)
        .fold(f64::MIN, f64::max);
    for c in out.rows.chunks(20) {
        let m: f64 = c.iter().map(|r| r.ret).sum::<f64>() / c.len() as f64;
        print!("{m:.2} ");
    }
    println!("| best10 {best:.3} {:.1}s alpha {:.4}", t.elapsed().as_secs_f64(), out.agent.alpha());
}

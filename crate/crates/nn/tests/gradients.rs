use aoirelay_nn::gradcheck::{check, GradCheck};
use aoirelay_nn::graph::{Graph, Var};
use aoirelay_nn::layers::{Dense, GruCell, SeBlock, SquashedGaussianHead};
use aoirelay_nn::{Matrix, ParamStore, Real};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const SEEDS: u64 = 50;
const TOL: Real = 1e-4;
const H: Real = 1e-5;
const FLOOR: Real = 1e-6;

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: Real) -> Matrix {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| scale * rng.sample::<Real, _>(StandardNormal))
            .collect(),
    )
}

// Random projection so every output element contributes to the loss.
fn project(g: &mut Graph, y: Var, r: &Matrix) -> Var {
    let r = g.constant(r.clone());
    let p = g.mul(y, r);
    g.sum_all(p)
}

fn assert_ok(what: &str, seed: u64, rep: &GradCheck) {
    assert!(
        rep.max_rel_error < TOL,
        "{what} seed {seed}: rel err {:.3e} at {} ({} entries)",
        rep.max_rel_error,
        rep.worst,
        rep.checked
    );
}

#[test]
fn dense_matches_finite_differences() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let layer = Dense::new(&mut store, "fc", 5, 4, &mut rng);
        for p in store.params_mut() {
            p.value = gaussian(&mut rng, p.value.rows(), p.value.cols(), 0.5);
        }
        let x = gaussian(&mut rng, 3, 5, 1.0);
        let r = gaussian(&mut rng, 3, 4, 1.0);
        let rep = check(&mut store, &[x], H, FLOOR, |g, s, v| {
            let y = layer.forward(g, s, v[0], true);
            let y = g.tanh(y);
            project(g, y, &r)
        });
        assert_ok("dense", seed, &rep);
    }
}

#[test]
fn layer_norm_matches_finite_differences() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let mut store = ParamStore::new();
        let x = gaussian(&mut rng, 4, 6, 2.0);
        let r = gaussian(&mut rng, 4, 6, 1.0);
        let rep = check(&mut store, &[x], H, FLOOR, |g, _, v| {
            let y = g.layer_norm(v[0], 1e-5, None);
            project(g, y, &r)
        });
        assert_ok("layer_norm", seed, &rep);

        let x = gaussian(&mut rng, 2, 6, 2.0);
        let r = gaussian(&mut rng, 2, 6, 1.0);
        let mask = [true, false, true, true, false, true];
        let rep = check(&mut store, &[x], H, FLOOR, |g, _, v| {
            let y = g.layer_norm(v[0], 1e-5, Some(&mask));
            project(g, y, &r)
        });
        assert_ok("masked layer_norm", seed, &rep);
    }
}

fn gru_case(seed: u64, layer_norm: bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
    let mut store = ParamStore::new();
    let cell = GruCell::new(&mut store, "gru", 3, 4, layer_norm, &mut rng);
    if let Some(b) = cell.bias {
        *store.value_mut(b) = gaussian(&mut rng, 1, 12, 0.3);
    }
    let xs: Vec<Matrix> = (0..10).map(|_| gaussian(&mut rng, 2, 3, 1.0)).collect();
    let r = gaussian(&mut rng, 2, 4, 1.0);
    let rep = check(&mut store, &xs, H, FLOOR, |g, s, v| {
        let hs = cell.unroll(g, s, v, true, None);
        project(g, *hs.last().unwrap(), &r)
    });
    assert_ok(if layer_norm { "lngru unroll" } else { "gru unroll" }, seed, &rep);
}

#[test]
fn lngru_ten_step_unroll_matches_finite_differences() {
    for seed in 0..SEEDS {
        gru_case(seed, true);
    }
}

#[test]
fn plain_gru_ten_step_unroll_matches_finite_differences() {
    for seed in 0..SEEDS {
        gru_case(seed, false);
    }
}

#[test]
fn lngru_single_step_from_nonzero_state() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(2500 + seed);
        let mut store = ParamStore::new();
        let cell = GruCell::new(&mut store, "gru", 3, 5, true, &mut rng);
        let x = gaussian(&mut rng, 2, 3, 1.0);
        let h = gaussian(&mut rng, 2, 5, 0.5);
        let r = gaussian(&mut rng, 2, 5, 1.0);
        let rep = check(&mut store, &[x, h], H, FLOOR, |g, s, v| {
            let h1 = cell.step(g, s, v[0], v[1], true, None);
            project(g, h1, &r)
        });
        assert_ok("lngru step", seed, &rep);
    }
}

#[test]
fn se_block_matches_finite_differences() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + seed);
        let mut store = ParamStore::new();
        let se = SeBlock::new(&mut store, "se", 8, 4, &mut rng);
        for p in store.params_mut() {
            p.value = gaussian(&mut rng, p.value.rows(), p.value.cols(), 0.7);
        }
        let hs: Vec<Matrix> = (0..4).map(|_| gaussian(&mut rng, 2, 8, 1.0)).collect();
        let rs: Vec<Matrix> = (0..4).map(|_| gaussian(&mut rng, 2, 8, 1.0)).collect();
        let rep = check(&mut store, &hs, H, FLOOR, |g, s, v| {
            let out = se.forward(g, s, v, true);
            let terms: Vec<Var> = out.iter().zip(&rs).map(|(&o, r)| project(g, o, r)).collect();
            let mut acc = terms[0];
            for &t in &terms[1..] {
                acc = g.add(acc, t);
            }
            acc
        });
        assert_ok("se_block", seed, &rep);
    }
}

#[test]
fn squashed_head_matches_finite_differences() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(4000 + seed);
        let mut store = ParamStore::new();
        let head = SquashedGaussianHead::new(&mut store, "pi", 6, 3, &mut rng);
        let f = gaussian(&mut rng, 4, 6, 1.0);
        let noise = gaussian(&mut rng, 4, 3, 1.0);
        let ra = gaussian(&mut rng, 4, 3, 1.0);
        let rl = gaussian(&mut rng, 4, 1, 1.0);
        let rep = check(&mut store, &[f], H, FLOOR, |g, s, v| {
            let out = head.forward(g, s, v[0], Some(&noise), true);
            let a = project(g, out.action, &ra);
            let l = project(g, out.log_prob, &rl);
            g.add(a, l)
        });
        assert_ok("squashed head", seed, &rep);
    }
}

#[test]
fn full_actor_chain_matches_finite_differences() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(5000 + seed);
        let mut store = ParamStore::new();
        let cell = GruCell::new(&mut store, "gru", 4, 6, true, &mut rng);
        let se = SeBlock::new(&mut store, "se", 6, 2, &mut rng);
        let fc = Dense::new(&mut store, "fc", 6, 8, &mut rng);
        let head = SquashedGaussianHead::new(&mut store, "pi", 8, 2, &mut rng);
        let xs: Vec<Matrix> = (0..4).map(|_| gaussian(&mut rng, 3, 4, 1.0)).collect();
        let noise = gaussian(&mut rng, 3, 2, 1.0);
        let rep = check(&mut store, &xs, H, FLOOR, |g, s, v| {
            let hs = cell.unroll(g, s, v, true, None);
            let hs = se.forward(g, s, &hs, true);
            let t = fc.forward(g, s, *hs.last().unwrap(), true);
            let t = g.tanh(t);
            let out = head.forward(g, s, t, Some(&noise), true);
            let a = g.sum_all(out.action);
            let l = g.mean_all(out.log_prob);
            g.sub(l, a)
        });
        assert_ok("actor chain", seed, &rep);
    }
}

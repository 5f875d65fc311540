use aoirelay_nn::graph::Graph;
use aoirelay_nn::layers::{GruCell, SeBlock, SquashedGaussianHead};
use aoirelay_nn::{Matrix, ParamStore, Real};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn ln_ref(z: &[f64], eps: f64) -> Vec<f64> {
    let n = z.len() as f64;
    let mu = z.iter().sum::<f64>() / n;
    let sd = (z.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n).sqrt();
    z.iter().map(|v| (v - mu) / (sd + eps)).collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

// Column block `gate` of the fused `[r | z | h]` weights times a row vector.
fn gate_product(x: &[f64], w: &Matrix, gate: usize, hidden: usize) -> Vec<f64> {
    (0..hidden)
        .map(|j| {
            x.iter()
                .enumerate()
                .map(|(i, xi)| xi * w.get(i, gate * hidden + j))
                .sum()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn layer_norm_is_shift_invariant(
        z in proptest::collection::vec(-50.0f64..50.0, 2..16),
        shift in -100.0f64..100.0,
    ) {
        let mut g = Graph::new();
        let a = g.constant(Matrix::row_vector(z.clone()));
        let b = g.constant(Matrix::row_vector(z.iter().map(|v| v + shift).collect()));
        let la = g.layer_norm(a, 1e-5, None);
        let lb = g.layer_norm(b, 1e-5, None);
        for (x, y) in g.value(la).data().iter().zip(g.value(lb).data()) {
            prop_assert!((x - y).abs() < 1e-7, "{} vs {}", x, y);
        }
    }

    #[test]
    fn layer_norm_has_zero_mean_unit_std(
        z in proptest::collection::vec(-10.0f64..10.0, 3..32),
    ) {
        let spread = z.iter().cloned().fold(f64::MIN, f64::max) - z.iter().cloned().fold(f64::MAX, f64::min);
        prop_assume!(spread > 1e-2);
        let mut g = Graph::new();
        let a = g.constant(Matrix::row_vector(z.clone()));
        let y = g.layer_norm(a, 1e-12, None);
        let v = g.value(y).data();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        prop_assert!(mean.abs() < 1e-9);
        prop_assert!((sd - 1.0).abs() < 1e-6);
    }

    #[test]
    fn lngru_matches_reference_and_convex_bound(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (ni, nh) = (3, 5);
        let mut store = ParamStore::new();
        let cell = GruCell::new(&mut store, "gru", ni, nh, true, &mut rng);
        let x: Vec<f64> = (0..ni).map(|_| rng.sample(StandardNormal)).collect();
        let h: Vec<f64> = (0..nh).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut g = Graph::new();
        let xv = g.constant(Matrix::row_vector(x.clone()));
        let hv = g.constant(Matrix::row_vector(h.clone()));
        let out = cell.step(&mut g, &store, xv, hv, false, None);
        let got = g.value(out).data().to_vec();

        let w = store.value(cell.w);
        let u = store.value(cell.u);
        let eps = cell.eps;
        let xr = ln_ref(&gate_product(&x, w, 0, nh), eps);
        let hr = ln_ref(&gate_product(&h, u, 0, nh), eps);
        let xz = ln_ref(&gate_product(&x, w, 1, nh), eps);
        let hz = ln_ref(&gate_product(&h, u, 1, nh), eps);
        let xh = ln_ref(&gate_product(&x, w, 2, nh), eps);
        let hh = ln_ref(&gate_product(&h, u, 2, nh), eps);
        for j in 0..nh {
            let r = sigmoid(xr[j] + hr[j]);
            let z = sigmoid(xz[j] + hz[j]);
            let cand = (xh[j] + r * hh[j]).tanh();
            let want = (1.0 - z) * h[j] + z * cand;
            prop_assert!((got[j] - want).abs() < 1e-12);
            prop_assert!(got[j].abs() <= h[j].abs().max(cand.abs()) + 1e-15);
        }
    }

    #[test]
    fn head_actions_stay_in_unit_box(seed in any::<u64>(), scale in 0.1f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let head = SquashedGaussianHead::new(&mut store, "pi", 4, 3, &mut rng);
        let f = Matrix::from_vec(5, 4, (0..20).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect());
        let xi = Matrix::from_vec(5, 3, (0..15).map(|_| rng.sample::<f64, _>(StandardNormal)).collect());
        let mut g = Graph::new();
        let fv = g.constant(f);
        let out = head.forward(&mut g, &store, fv, Some(&xi), false);
        prop_assert!(g.value(out.action).data().iter().all(|a| (-1.0..=1.0).contains(a)));
        prop_assert!(g.value(out.log_prob).is_finite());
    }
}

#[test]
fn forced_unit_excitation_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut store = ParamStore::new();
    let se = SeBlock::new(&mut store, "se", 6, 3, &mut rng);
    store.value_mut(se.excite.w).fill(0.0);
    store.value_mut(se.excite.b).fill(1e3);
    let mut g = Graph::new();
    let hs: Vec<_> = (0..5)
        .map(|_| {
            let v: Vec<Real> = (0..12).map(|_| rng.sample(StandardNormal)).collect();
            g.constant(Matrix::from_vec(2, 6, v))
        })
        .collect();
    let out = se.forward(&mut g, &store, &hs, false);
    for (&o, &h) in out.iter().zip(&hs) {
        assert_eq!(g.value(o).data(), g.value(h).data());
    }
}

#[test]
fn backward_accumulates_until_cleared() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut store = ParamStore::new();
    let w = store.add("w", 2, 1, aoirelay_nn::Init::FanInUniform, &mut rng);
    let run = |store: &mut ParamStore| {
        let mut g = Graph::new();
        let x = g.constant(Matrix::row_vector(vec![3.0, -2.0]));
        let wv = g.param(store, w, true);
        let y = g.matmul(x, wv);
        g.backward(y).unwrap();
        store.accumulate_grads(&g);
    };
    run(&mut store);
    run(&mut store);
    assert_eq!(store.grad(w).data(), &[6.0, -4.0]);
    store.zero_grad();
    run(&mut store);
    assert_eq!(store.grad(w).data(), &[3.0, -2.0]);
}

// Histogram of 1e6 squashed samples against the head's own density,
// integrated over each bin with Simpson's rule.
#[test]
fn head_log_prob_matches_monte_carlo_density() {
    let (mu, sigma) = (0.3, 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut store = ParamStore::new();
    let head = SquashedGaussianHead::new(&mut store, "pi", 1, 1, &mut rng);
    store.value_mut(head.mean.w).fill(0.0);
    store.value_mut(head.mean.b).fill(mu);
    store.value_mut(head.log_std.w).fill(0.0);
    store.value_mut(head.log_std.b).fill((sigma as f64).ln());

    let n = 1_000_000;
    let xi = Matrix::from_vec(n, 1, (0..n).map(|_| rng.sample(StandardNormal)).collect());
    let mut g = Graph::new();
    let f = g.constant(Matrix::filled(n, 1, 1.0));
    let out = head.forward(&mut g, &store, f, Some(&xi), false);
    let bins = 20;
    let width = 2.0 / bins as f64;
    let mut counts = vec![0usize; bins];
    for &a in g.value(out.action).data() {
        let b = (((a + 1.0) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }

    let density = |pts: &[f64]| -> Vec<f64> {
        let noise: Vec<f64> = pts.iter().map(|a| (a.atanh() - mu) / sigma).collect();
        let m = pts.len();
        let mut g = Graph::new();
        let f = g.constant(Matrix::filled(m, 1, 1.0));
        let out = head.forward(&mut g, &store, f, Some(&Matrix::from_vec(m, 1, noise)), false);
        g.value(out.log_prob).data().iter().map(|l| l.exp()).collect()
    };
    let sub = 200;
    let mut worst: f64 = 0.0;
    for (b, &count) in counts.iter().enumerate() {
        let lo = -1.0 + b as f64 * width;
        let hi = lo + width;
        let lo_in = lo.max(-1.0 + 1e-9);
        let hi_in = hi.min(1.0 - 1e-9);
        let step = (hi_in - lo_in) / sub as f64;
        let pts: Vec<f64> = (0..=sub).map(|k| lo_in + k as f64 * step).collect();
        let d = density(&pts);
        let mut mass = d[0] + d[sub];
        for k in 1..sub {
            mass += if k % 2 == 1 { 4.0 } else { 2.0 } * d[k];
        }
        mass *= step / 3.0;
        let empirical = count as f64 / n as f64 / width;
        let analytic = mass / width;
        worst = worst.max((empirical - analytic).abs());
    }
    assert!(worst < 1e-2, "max bin density error {worst}");
}

use elnn_core::elnn::{
    h_complex,
    ann_i, ann_r, gradient, implied_lambda, objective, phi_model, regularizer, train, ElnnParams,
    Objective, TrainConfig,
};
use elnn_core::levy_models::ParametricModel;
use elnn_core::quadrature::{integrate, QuadOptions};
use elnn_core::spectral::{phi_from_time_values, time_value_curve, SpectralGrid, SpectralTarget};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const T: f64 = 0.05;

fn merton_target(grid: SpectralGrid) -> SpectralTarget {
    let t = ParametricModel::merton(0.2, 1.0, -0.05, 0.05).unwrap().triplet().unwrap();
    let values = grid
        .w_nodes()
        .into_iter()
        .map(|w| t.shifted_char_fn(w, T).unwrap())
        .collect();
    SpectralTarget::new(grid, T, values).unwrap()
}

fn random_params(rng: &mut ChaCha8Rng, n: usize) -> ElnnParams {
    let mut v = |lo: f64, hi: f64| -> Vec<f64> { (0..n).map(|_| rng.random_range(lo..hi)).collect() };
    let wr0 = v(-1.0, 1.0);
    let wr1 = v(-1.5, 1.5);
    let wi0 = v(-1.0, 1.0);
    let wi1 = v(-1.5, 1.5);
    ElnnParams {
        sigma: rng.random_range(0.1..0.3),
        wr0,
        wr1,
        wi0,
        wi1,
    }
}

fn flat(p: &ElnnParams) -> Vec<f64> {
    let mut v = vec![p.sigma];
    for part in [&p.wr0, &p.wr1, &p.wi0, &p.wi1] {
        v.extend(part);
    }
    v
}

fn unflat(v: &[f64], n: usize) -> ElnnParams {
    ElnnParams {
        sigma: v[0],
        wr0: v[1..1 + n].to_vec(),
        wr1: v[1 + n..1 + 2 * n].to_vec(),
        wi0: v[1 + 2 * n..1 + 3 * n].to_vec(),
        wi1: v[1 + 3 * n..1 + 4 * n].to_vec(),
    }
}

/// Central difference, Richardson-extrapolated from steps h and h/2.
fn fd(obj: &Objective, p: &ElnnParams, i: usize, h: f64) -> f64 {
    let n = p.n_nodes();
    let base = flat(p);
    let at = |delta: f64| {
        let mut x = base.clone();
        x[i] += delta;
        obj.value(&unflat(&x, n))
    };
    let d1 = (at(h) - at(-h)) / (2.0 * h);
    let d2 = (at(h / 2.0) - at(-h / 2.0)) / h;
    (4.0 * d2 - d1) / 3.0
}

#[test]
fn gradient_matches_finite_differences() {
    let grid = SpectralGrid::new(1 << 10, 0.25).unwrap();
    let target = merton_target(grid);
    let cfg = TrainConfig {
        m_cutoff: 30.0,
        ..TrainConfig::default()
    };
    let obj = Objective::new(&target, &cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let p = random_params(&mut rng, 4);
        let (_, g) = obj.value_and_gradient(&p);
        let g = flat(&g);
        let scale = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for i in 0..g.len() {
            let a = fd(&obj, &p, i, 1e-5);
            let b = fd(&obj, &p, i, 1e-6);
            // the two steps must agree before either is trusted
            assert!((a - b).abs() <= 1e-6 * scale + 1e-12, "fd steps disagree at {i}: {a} {b}");
            let rel = (g[i] - a).abs() / a.abs().max(g[i].abs()).max(1e-3 * scale);
            worst = worst.max(rel);
        }
    }
    assert!(worst < 1e-5, "worst relative error {worst}");
}

#[test]
fn objective_matches_direct_summation() {
    let grid = SpectralGrid::default();
    let target = merton_target(grid);
    let cfg = TrainConfig::default();
    let p = ElnnParams::zeros(20);
    let got = objective(&p, &target, &cfg).unwrap();
    // zero network: Φ = e^{T(-σ²w²/2 + iσ²w/2)} with σ = 0
    let window = 4.0 * cfg.m_cutoff;
    let idx: Vec<usize> = (0..grid.n()).filter(|&j| grid.w(j).abs() <= window).collect();
    let mut oracle = 0.0;
    for (pos, &j) in idx.iter().enumerate() {
        let end = if pos == 0 || pos + 1 == idx.len() { 0.5 } else { 1.0 };
        let d = Complex64::new(1.0, 0.0) - target.values()[j];
        oracle += end * grid.dw() * (d.re * d.re + d.im * d.im);
    }
    assert!(got > 0.0 && got.is_finite());
    assert!(((got - oracle) / oracle).abs() < 1e-10, "{got} vs {oracle}");
}

#[test]
fn objective_vanishes_at_exact_fit() {
    let grid = SpectralGrid::new(1 << 12, 0.1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let p = random_params(&mut rng, 6);
    let values = grid.w_nodes().into_iter().map(|w| phi_model(w, &p, T)).collect();
    let target = SpectralTarget::new(grid, T, values).unwrap();
    let cfg = TrainConfig {
        beta_reg: 0.0,
        m_cutoff: 50.0,
        ..TrainConfig::default()
    };
    assert!(objective(&p, &target, &cfg).unwrap() < 1e-24);
    let with_reg = TrainConfig {
        beta_reg: 1e-3,
        ..cfg
    };
    let lambda_term = 1e-3 * regularizer(&p, &grid, 50.0, 4.0);
    let total = objective(&p, &target, &with_reg).unwrap();
    assert!(total >= lambda_term * (1.0 - 1e-12));
}

#[test]
fn regularizer_matches_quadrature() {
    let grid = SpectralGrid::default();
    let mut p = ElnnParams::zeros(1);
    p.wr0[0] = 1.0;
    p.wr1[0] = 1.0;
    let got = regularizer(&p, &grid, 10.0, 4.0);
    let s = |u: f64| 1.0 / ((1.0 + (-u).exp()) * (1.0 + u.exp()));
    let wmax = grid.w_max();
    let oracle = integrate(
        |w| (w / 10.0).powi(4) * s(w).powi(2),
        -wmax,
        wmax,
        &[0.0],
        &QuadOptions::default(),
    )
    .unwrap();
    assert!(((got - oracle) / oracle).abs() < 1e-4, "{got} vs {oracle}");
}

#[test]
fn regularizer_is_reflection_invariant() {
    let grid = SpectralGrid::new(1 << 11, 0.1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = random_params(&mut rng, 5);
    let forward: f64 = regularizer(&p, &grid, 20.0, 4.0);
    let reflected: f64 = (0..grid.n())
        .rev()
        .map(|j| {
            let w = -grid.w(j);
            grid.weight(j) * grid.dw() * (w / 20.0).abs().powi(4) * (ann_r(w, &p).powi(2) + ann_i(w, &p).powi(2))
        })
        .sum();
    assert!(((forward - reflected) / forward).abs() < 1e-13);
}

#[test]
fn zero_network_has_zero_inner_gradient() {
    let grid = SpectralGrid::new(1 << 11, 0.1).unwrap();
    let target = merton_target(grid);
    let mut p = ElnnParams::zeros(5);
    p.sigma = 0.18;
    p.wr1 = vec![0.1, 0.2, 0.3, 0.4, 0.5];
    p.wi1 = vec![0.5, 0.4, 0.3, 0.2, 0.1];
    let g = gradient(&p, &target, &TrainConfig::default()).unwrap();
    assert!(g.wr1.iter().chain(&g.wi1).all(|&x| x == 0.0));
    assert!(g.wr0.iter().any(|&x| x != 0.0));
}

#[test]
fn gradient_is_reflection_symmetric() {
    let grid = SpectralGrid::new(1 << 11, 0.1).unwrap();
    let target = merton_target(grid);
    let reflected: Vec<Complex64> = target.values().iter().rev().map(|v| v.conj()).collect();
    let reflected = SpectralTarget::new(grid, T, reflected).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let p = random_params(&mut rng, 5);
    let cfg = TrainConfig::default();
    let a = flat(&gradient(&p, &target, &cfg).unwrap());
    let b = flat(&gradient(&p, &reflected, &cfg).unwrap());
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() <= 1e-14 * x.abs().max(1e-300));
    }
}

#[test]
fn zero_epochs_return_init() {
    let grid = SpectralGrid::new(1 << 10, 0.1).unwrap();
    let target = merton_target(grid);
    let init = ElnnParams::init(20, 3);
    let cfg = TrainConfig {
        epochs: 0,
        ..TrainConfig::default()
    };
    let out = train(&target, &cfg, Some(init.clone())).unwrap();
    assert_eq!(out.params, init);
    assert!(out.loss.is_empty());
}

#[test]
fn training_is_deterministic_and_reduces_loss() {
    let grid = SpectralGrid::new(1 << 12, 0.1).unwrap();
    let target = merton_target(grid);
    let cfg = TrainConfig {
        epochs: 300,
        seed: 4,
        ..TrainConfig::default()
    };
    let a = train(&target, &cfg, None).unwrap();
    let b = train(&target, &cfg, None).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.loss, b.loss);
    assert_eq!(a.loss.len(), 300);
    assert!(a.loss.last().unwrap() < &(0.1 * a.loss[0]));
}

#[test]
fn diverging_target_is_reported() {
    let grid = SpectralGrid::new(1 << 10, 0.1).unwrap();
    let values = vec![Complex64::new(1e200, 0.0); grid.n()];
    let target = SpectralTarget::new(grid, T, values).unwrap();
    let cfg = TrainConfig {
        epochs: 5,
        ..TrainConfig::default()
    };
    match train(&target, &cfg, None) {
        Err(elnn_core::Error::DivergedLoss { .. }) => {}
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn implied_lambda_of_single_node() {
    let mut p = ElnnParams::zeros(1);
    p.wr0[0] = 2.0;
    p.wr1[0] = 0.3;
    // h(i) = 2·sig(0.3i)sig(-0.3i) = 1/(1 + cos 0.3)
    assert!((implied_lambda(&p) - 1.0 / (1.0 + 0.3f64.cos())).abs() < 1e-14);
}

#[test]
fn recovers_merton_from_noise_free_prices() {
    let grid = SpectralGrid::default();
    let model = ParametricModel::merton(0.2, 1.0, -0.05, 0.05).unwrap();
    let curve = time_value_curve(&model.triplet().unwrap(), T, 0.02, &grid).unwrap();
    let points = phi_from_time_values(&curve.z_values(), 0.02, T, &grid).unwrap();
    let target = SpectralTarget::from_points(grid, T, &points).unwrap();
    let fit = train(&target, &TrainConfig::default(), None).unwrap().params;
    let lambda = implied_lambda(&fit);
    assert!((fit.sigma / 0.2 - 1.0).abs() <= 0.01, "sigma {}", fit.sigma);
    assert!((lambda - 1.0).abs() <= 0.05, "lambda {lambda}");
}

fn params_strategy() -> impl Strategy<Value = ElnnParams> {
    (1usize..12).prop_flat_map(|n| {
        let weights = |lo: f64, hi: f64| proptest::collection::vec(lo..hi, n);
        (0.0..0.6f64, weights(-2.0, 2.0), weights(-2.8, 2.8), weights(-2.0, 2.0), weights(-2.8, 2.8)).prop_map(
            |(sigma, wr0, wr1, wi0, wi1)| ElnnParams {
                sigma,
                wr0,
                wr1,
                wi0,
                wi1,
            },
        )
    })
}

proptest! {
    #[test]
    fn networks_have_fixed_parity(p in params_strategy(), w in -300.0..300.0f64) {
        prop_assert_eq!(ann_r(-w, &p), ann_r(w, &p));
        prop_assert_eq!(ann_i(-w, &p), -ann_i(w, &p));
        prop_assert_eq!(ann_i(0.0, &p), 0.0);
    }

    #[test]
    fn model_is_one_at_origin(p in params_strategy(), t in 0.001..5.0f64) {
        prop_assert_eq!(phi_model(0.0, &p, t), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn real_network_is_flat_at_origin(p in params_strategy()) {
        for h in [1e-3, 1e-5] {
            let fd = (ann_r(h, &p) - ann_r(-h, &p)) / (2.0 * h);
            prop_assert!(fd.abs() < 1e-8);
        }
    }

    #[test]
    fn lambda_is_h_at_i(p in params_strategy()) {
        let at_i = h_complex(Complex64::i(), &p);
        let scale = p.c0().abs().max(p.c1().abs()).max(1.0);
        prop_assert!((at_i.re - implied_lambda(&p)).abs() <= 1e-12 * scale);
        prop_assert!(at_i.im.abs() <= 1e-12 * scale);
        prop_assert!((p.c0() - ann_r(0.0, &p)).abs() <= 1e-12 * scale);
    }

    #[test]
    fn networks_decay(p in params_strategy()) {
        let smallest = p.wr1.iter().chain(&p.wi1).fold(f64::INFINITY, |m, x| m.min(x.abs()));
        prop_assume!(smallest > 1e-3);
        let w = 50.0 / smallest;
        let total: f64 = p.wr0.iter().chain(&p.wi0).map(|x| x.abs()).sum();
        prop_assert!(ann_r(w, &p).abs() < 1e-20 * total);
        // the odd network carries an explicit factor of w
        prop_assert!(ann_i(w, &p).abs() < 1e-20 * total * w);
    }
}

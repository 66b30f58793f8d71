//! End-to-end acceptance checks. Runs as a plain binary so every criterion
//! prints its own line; exits non-zero when any criterion fails.

use std::io::Write;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use elnn_core::calibrate::{
    calibrate_parametric, parametric_report, prepare_target, run_elnn, stability_summary,
    ElnnRunConfig, Family, SimplexOptions, StabilityRow,
};
use elnn_core::elnn::{
    ann_i, ann_r, h_complex, implied_lambda, implied_levy_density, phi_model, ElnnParams,
    Objective, TrainConfig,
};
use elnn_core::levy_models::{char_fn, LevyDensity, LevyTriplet, ParametricModel};
use elnn_core::market::{
    generate_virtual_market, moment_table, simulate_path, MarketSlice, NoiseSpec, StrikeSampler,
};
use elnn_core::spectral::{
    call_price, phi_from_time_values, plancherel_gap, time_value_curve, SpectralGrid,
    SpectralTarget,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};

const T: f64 = 0.05;
const R: f64 = 0.02;

struct Outcome {
    pass: bool,
    detail: String,
}

fn merton() -> ParametricModel {
    ParametricModel::merton(0.2, 1.0, -0.05, 0.05).unwrap()
}

fn kou() -> ParametricModel {
    ParametricModel::kou(0.21, 1.4, 0.04, 3.7, 1.8).unwrap()
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn within_time(elapsed: Duration, limit_s: f64) -> (bool, String) {
    let s = elapsed.as_secs_f64();
    (s < limit_s, format!("{s:.1}s (limit {limit_s}s)"))
}

fn pricer_matches_monte_carlo() -> Outcome {
    let start = Instant::now();
    let (sigma, lambda, mu, delta): (f64, f64, f64, f64) = (0.2, 1.0, -0.05, 0.05);
    // martingale drift of the compound Poisson part in closed form
    let drift = -0.5 * sigma * sigma - lambda * ((mu + 0.5 * delta * delta).exp() - 1.0);
    let poisson = Poisson::new(lambda * T).unwrap();
    let jump = Normal::new(mu, delta).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let xs: Vec<f64> = (0..1_000_000)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            let count = poisson.sample(&mut rng) as usize;
            let jumps: f64 = (0..count).map(|_| jump.sample(&mut rng)).sum();
            drift * T + sigma * T.sqrt() * z + jumps
        })
        .collect();
    let curve = time_value_curve(&merton().triplet().unwrap(), T, R, &SpectralGrid::default()).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for k in [-0.1, 0.0, 0.1] {
        let payoffs: Vec<f64> = xs
            .iter()
            .map(|x| (-R * T).exp() * ((R * T + x).exp() - f64::exp(k)).max(0.0))
            .collect();
        let (mc, se) = mean_and_se(&payoffs);
        let fft = call_price(k, curve.at(k), R, T);
        let z = (fft - mc).abs() / se;
        pass &= z < 3.0;
        parts.push(format!("k={k:+}: {z:.2} SE"));
    }
    let (fast, time) = within_time(start.elapsed(), 60.0);
    Outcome {
        pass: pass && fast,
        detail: format!("{}; {time}", parts.join(", ")),
    }
}

fn spectral_round_trip() -> Outcome {
    let start = Instant::now();
    let grid = SpectralGrid::default();
    let err = |model: &ParametricModel, limit: f64| {
        let t = model.triplet().unwrap();
        let curve = time_value_curve(&t, T, R, &grid).unwrap();
        let phi = phi_from_time_values(&curve.z_values(), R, T, &grid).unwrap();
        phi.iter()
            .filter(|p| p.w.abs() <= limit)
            .map(|p| (p.value - t.shifted_char_fn(p.w, T).unwrap()).norm())
            .fold(0.0, f64::max)
    };
    let (m, k) = (err(&merton(), 100.0), err(&kou(), 55.0));
    let (fast, time) = within_time(start.elapsed(), 10.0);
    Outcome {
        pass: m < 1e-3 && k < 1e-3 && fast,
        detail: format!("max error merton {m:.2e} (|w|<=100), kou {k:.2e} (|w|<=55), limit 1e-3; {time}"),
    }
}

fn random_params(rng: &mut ChaCha8Rng, n: usize) -> ElnnParams {
    let mut v = |lo: f64, hi: f64| -> Vec<f64> { (0..n).map(|_| rng.random_range(lo..hi)).collect() };
    let wr0 = v(-1.0, 1.0);
    let wr1 = v(-2.5, 2.5);
    let wi0 = v(-1.0, 1.0);
    let wi1 = v(-2.5, 2.5);
    ElnnParams {
        sigma: rng.random_range(0.0..0.5),
        wr0,
        wr1,
        wi0,
        wi1,
    }
}

fn structural_properties() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
    let mut failures: Vec<&str> = Vec::new();
    for _ in 0..1000 {
        let n = rng.random_range(1..=20);
        let p = random_params(&mut rng, n);
        let w: f64 = rng.random_range(-200.0..200.0);
        let t: f64 = rng.random_range(0.01..1.0);
        if !close(ann_r(-w, &p), ann_r(w, &p)) || !close(ann_i(-w, &p), -ann_i(w, &p)) {
            failures.push("parity");
        }
        if phi_model(0.0, &p, t) != Complex64::new(1.0, 0.0) {
            failures.push("phi(0)");
        }
        let h = 1e-4;
        let fd = (ann_r(h, &p) - ann_r(-h, &p)) / (2.0 * h);
        // complex step on the real part alone
        let mut real_only = p.clone();
        real_only.wi0.iter_mut().for_each(|c| *c = 0.0);
        let cs = h_complex(Complex64::new(0.0, h), &real_only).im / h;
        if fd.abs() > 1e-12 || cs.abs() > 1e-12 {
            failures.push("ann_r'(0)");
        }
        let c0 = 0.25 * p.wr0.iter().sum::<f64>();
        let c1: f64 = (0..n)
            .map(|j| {
                p.wr0[j] / 4.0 - p.wr0[j] / (2.0 * (1.0 + p.wr1[j].cos()))
                    + p.wi0[j] / (2.0 * (1.0 + p.wi1[j].cos()))
            })
            .sum();
        if !close(p.c0(), c0) || !close(p.c0(), ann_r(0.0, &p)) || !close(p.c1(), c1) {
            failures.push("c0/c1");
        }
        let at_i = h_complex(Complex64::i(), &p);
        if !close(at_i.re, p.c0() - p.c1()) || at_i.im.abs() > 1e-12 || !close(implied_lambda(&p), c0 - c1) {
            failures.push("property 8");
        }
    }
    failures.sort_unstable();
    failures.dedup();
    let (fast, time) = within_time(start.elapsed(), 5.0);
    Outcome {
        pass: failures.is_empty() && fast,
        detail: if failures.is_empty() {
            format!("1000 draws, all identities within 1e-12; {time}")
        } else {
            format!("violated: {}; {time}", failures.join(", "))
        },
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

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let grid = SpectralGrid::new(1 << 10, 0.25).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let models = [merton(), kou()];
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let triplet = models[case % 2].triplet().unwrap();
        let values = grid.w_nodes().into_iter().map(|w| triplet.shifted_char_fn(w, T).unwrap()).collect();
        let target = SpectralTarget::new(grid, T, values).unwrap();
        let cfg = TrainConfig {
            m_cutoff: rng.random_range(10.0..60.0),
            beta_reg: rng.random_range(0.0..1e-2),
            ..TrainConfig::default()
        };
        let obj = Objective::new(&target, &cfg).unwrap();
        let n = rng.random_range(1..=6);
        let p = random_params(&mut rng, n);
        let (_, g) = obj.value_and_gradient(&p);
        let g = flat(&g);
        let x = flat(&p);
        let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..x.len() {
            let at = |d: f64| {
                let mut y = x.clone();
                y[i] += d;
                obj.value(&unflat(&y, n))
            };
            // Richardson-extrapolated central difference
            let h = 1e-5;
            let d1 = (at(h) - at(-h)) / (2.0 * h);
            let d2 = (at(h / 2.0) - at(-h / 2.0)) / h;
            let fd = (4.0 * d2 - d1) / 3.0;
            let rel = (g[i] - fd).abs() / fd.abs().max(g[i].abs()).max(1e-3 * scale);
            worst = worst.max(rel);
        }
    }
    let (fast, time) = within_time(start.elapsed(), 30.0);
    Outcome {
        pass: worst < 1e-5 && fast,
        detail: format!("worst relative error {worst:.2e} over 100 configurations (limit 1e-5); {time}"),
    }
}

fn plancherel() -> Outcome {
    let start = Instant::now();
    let grid = SpectralGrid::default();
    let m = merton().triplet().unwrap();
    let k = kou().triplet().unwrap();
    let m2 = ParametricModel::merton(0.21, 1.3, -0.1, 0.08).unwrap().triplet().unwrap();
    let bs = LevyTriplet::martingale(0.2, LevyDensity::Zero).unwrap();
    let mut worst: f64 = 0.0;
    for (a, b) in [(&m, &k), (&m, &m2), (&k, &bs)] {
        let fa = |w: Complex64| char_fn(w, a, T);
        let fb = |w: Complex64| char_fn(w, b, T);
        let (lhs, rhs) = plancherel_gap(&fa, &fb, &grid, 5.0).unwrap();
        worst = worst.max(((lhs - rhs) / lhs).abs());
    }
    let (fast, time) = within_time(start.elapsed(), 10.0);
    Outcome {
        pass: worst < 1e-3 && fast,
        detail: format!("worst relative gap {worst:.2e} over 3 pairs (limit 1e-3); {time}"),
    }
}

fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn moment_scaling() -> Outcome {
    let dt = 1.0 / 252.0;
    let path = simulate_path(&merton(), 1_000_000, dt, 100.0, 9).unwrap();
    let horizons = [1, 2, 4, 8, 16, 32];
    let rows = moment_table(&path, &horizons, None).unwrap();
    let lx: Vec<f64> = horizons.iter().map(|&h| (h as f64).ln()).collect();
    let skew: Vec<f64> = rows.iter().map(|r| r.empirical.skewness.unwrap().abs().ln()).collect();
    let kurt: Vec<f64> = rows.iter().map(|r| r.empirical.excess_kurtosis.unwrap().abs().ln()).collect();
    let (s, k) = (slope(&lx, &skew), slope(&lx, &kurt));
    Outcome {
        pass: (s + 0.5).abs() <= 0.15 && (k + 1.0).abs() <= 0.2,
        detail: format!("|skewness| slope {s:.3} (-0.5 ± 0.15), excess kurtosis slope {k:.3} (-1.0 ± 0.2)"),
    }
}

struct PaperScaleRun {
    sigma_err: f64,
    lambda_err: f64,
    density_err: f64,
    elapsed: Duration,
}

/// Noisy 1000-day market, amplified and fitted by the ELNN.
fn paper_scale(model: &ParametricModel, m_cutoff: f64, sampler: StrikeSampler, gibbs_gap: f64) -> PaperScaleRun {
    let start = Instant::now();
    let grid = SpectralGrid::default();
    let triplet = model.triplet().unwrap();
    let days = generate_virtual_market(&triplet, 1000, 100, T, R, &sampler, &NoiseSpec { scale: 0.05, seed: 7 }, &grid)
        .unwrap();
    let mut cfg = ElnnRunConfig::default();
    cfg.train.m_cutoff = m_cutoff;
    let run = run_elnn(&days, "acceptance", &cfg).unwrap();
    let truth = model.density();
    let curve = implied_levy_density(&run.params, &grid, 0.3).unwrap();
    let (mut num, mut den) = (0.0, 0.0);
    for &(x, v) in curve.iter().filter(|(x, _)| x.abs() > gibbs_gap) {
        num += (v - truth.pdf(x)).powi(2);
        den += truth.pdf(x).powi(2);
    }
    PaperScaleRun {
        sigma_err: (run.params.sigma / model.sigma - 1.0).abs(),
        lambda_err: (implied_lambda(&run.params) / model.lambda() - 1.0).abs(),
        density_err: (num / den).sqrt(),
        elapsed: start.elapsed(),
    }
}

fn stability_comparison() -> Outcome {
    let model = kou();
    let triplet = model.triplet().unwrap();
    let grid = SpectralGrid::default();
    let t = 13.0 / 252.0;
    let mut cfg = ElnnRunConfig::default();
    cfg.train.m_cutoff = 65.0;
    let mut elnn_rows = Vec::new();
    let mut merton_rows = Vec::new();
    let (mut elnn_sq, mut merton_sq, mut count) = (0.0, 0.0, 0usize);
    for year in 0..5u64 {
        let slices: Vec<MarketSlice> = generate_virtual_market(
            &triplet,
            250,
            4,
            t,
            R,
            &StrikeSampler::default(),
            &NoiseSpec { scale: 0.05, seed: 100 + year },
            &grid,
        )
        .unwrap();
        let n: usize = slices.iter().map(|s| s.samples.len()).sum();
        let label = format!("year{year}");
        let elnn = run_elnn(&slices, &label, &cfg).unwrap();
        let target = prepare_target(&slices, &cfg.amplification, &grid).unwrap();
        let fit = calibrate_parametric(
            Family::Merton,
            &target,
            cfg.train.data_window(&grid),
            None,
            &SimplexOptions::default(),
        )
        .unwrap();
        let merton_report = parametric_report(&fit, &target, &slices, R, &label, &cfg.buckets).unwrap();
        elnn_sq += elnn.report.z_rmse.powi(2) * n as f64;
        merton_sq += merton_report.z_rmse.powi(2) * n as f64;
        count += n;
        elnn_rows.push(StabilityRow::from(&elnn.report));
        merton_rows.push(StabilityRow::from(&merton_report));
    }
    let elnn_rmse = (elnn_sq / count as f64).sqrt();
    let merton_rmse = (merton_sq / count as f64).sqrt();
    let elnn_cv = stability_summary(&elnn_rows).unwrap().lambda_cv;
    let merton_cv = stability_summary(&merton_rows).unwrap().lambda_cv;
    let lambdas = |rows: &[StabilityRow]| rows.iter().map(|r| format!("{:.3}", r.lambda)).collect::<Vec<_>>().join("/");
    Outcome {
        pass: elnn_rmse <= merton_rmse && elnn_cv <= merton_cv,
        detail: format!(
            "scaled z-RMSE elnn {elnn_rmse:.3} vs merton {merton_rmse:.3}; lambda CV elnn {elnn_cv:.3} ({}) vs merton {merton_cv:.3} ({})",
            lambdas(&elnn_rows),
            lambdas(&merton_rows)
        ),
    }
}

fn report(id: u32, name: &str, o: &Outcome) -> bool {
    let tag = if o.pass { "PASS" } else { "FAIL" };
    println!("criterion {id:>2} [{tag}] {name}: {}", o.detail);
    std::io::stdout().flush().ok();
    o.pass
}

fn main() -> ExitCode {
    let mut all = true;
    all &= report(1, "FFT prices against Monte Carlo", &pricer_matches_monte_carlo());
    all &= report(2, "spectral round trip", &spectral_round_trip());

    let merton_run = paper_scale(&merton(), 100.0, StrikeSampler::default(), 0.0);
    // Kou time values stay material far below k = -0.4, so strikes span the
    // region where z exceeds 1e-4.
    let kou_run = paper_scale(&kou(), 55.0, StrikeSampler::Uniform { lo: -2.0, hi: 1.0 }, 0.05);
    let runtime = merton_run.elapsed.max(kou_run.elapsed).as_secs_f64();
    all &= report(
        3,
        "sigma recovery on noisy markets",
        &Outcome {
            pass: merton_run.sigma_err <= 0.01 && kou_run.sigma_err <= 0.01 && runtime < 1800.0,
            detail: format!(
                "relative error merton {:.3}%, kou {:.3}% (limit 1%); slowest run {runtime:.0}s",
                100.0 * merton_run.sigma_err,
                100.0 * kou_run.sigma_err
            ),
        },
    );
    all &= report(
        4,
        "lambda recovery on the same runs",
        &Outcome {
            pass: merton_run.lambda_err <= 0.05 && kou_run.lambda_err <= 0.05,
            detail: format!(
                "relative error merton {:.1}%, kou {:.1}% (limit 5%)",
                100.0 * merton_run.lambda_err,
                100.0 * kou_run.lambda_err
            ),
        },
    );
    all &= report(
        5,
        "Levy density recovery",
        &Outcome {
            pass: merton_run.density_err <= 0.1 && kou_run.density_err <= 0.1,
            detail: format!(
                "L2-relative error merton {:.3} on [-0.3, 0.3], kou {:.3} outside |x| <= 0.05 (limit 0.1)",
                merton_run.density_err, kou_run.density_err
            ),
        },
    );
    all &= report(6, "ELNN structural identities", &structural_properties());
    all &= report(7, "analytic gradient against finite differences", &gradient_check());
    all &= report(8, "Plancherel diagnostic", &plancherel());
    all &= report(9, "moment scaling of a simulated Merton path", &moment_scaling());
    all &= report(10, "ELNN against Merton on five Kou periods", &stability_comparison());
    if all {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: some criteria failed");
        ExitCode::FAILURE
    }
}

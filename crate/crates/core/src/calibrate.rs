//! Calibration drivers, bucketed error tables and stability summaries.

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::elnn::{implied_lambda, phi_model, train, ElnnParams, TrainConfig};
use crate::error::{Error, Result};
use crate::levy_models::{ModelDocument, ParametricModel};
use crate::market::{amplify, MarketSlice};
use crate::spectral::{
    atm_implied_vol, time_value_curve_from, Fourier, SpectralGrid, SpectralTarget, TimeValuePoint,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Merton,
    Kou,
}

impl Family {
    fn bounds(self) -> (&'static [f64], &'static [f64]) {
        match self {
            Family::Merton => (&[1e-4, 0.0, -1.0, 1e-4], &[2.0, 50.0, 1.0, 2.0]),
            Family::Kou => (&[1e-4, 0.0, 0.0, 1.0 + 1e-6, 1e-3], &[2.0, 50.0, 1.0, 200.0, 200.0]),
        }
    }

    fn build(self, x: &[f64]) -> Result<ParametricModel> {
        match self {
            Family::Merton => ParametricModel::merton(x[0], x[1], x[2], x[3]),
            Family::Kou => ParametricModel::kou(x[0], x[1], x[2], x[3], x[4]),
        }
    }

    /// Region the restart points are drawn from; `true` marks log-uniform.
    fn start_box(self) -> &'static [(f64, f64, bool)] {
        match self {
            Family::Merton => &[(0.05, 0.5, true), (0.1, 5.0, true), (-0.3, 0.3, false), (0.01, 0.3, true)],
            Family::Kou => &[
                (0.05, 0.5, true),
                (0.1, 5.0, true),
                (0.05, 0.95, false),
                (2.0, 50.0, true),
                (1.0, 50.0, true),
            ],
        }
    }

    /// A neutral starting point inside the box.
    pub fn default_init(self) -> ParametricModel {
        match self {
            Family::Merton => ParametricModel::merton(0.15, 0.5, 0.0, 0.1),
            Family::Kou => ParametricModel::kou(0.15, 0.5, 0.5, 10.0, 10.0),
        }
        .expect("valid default")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimplexOptions {
    /// Objective evaluations allowed per restart.
    pub budget: usize,
    pub restarts: usize,
    pub seed: u64,
    pub ftol: f64,
    pub xtol: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            budget: 4000,
            restarts: 5,
            seed: 0,
            ftol: 1e-13,
            xtol: 1e-9,
        }
    }
}

/// Screening candidates per parameter.
const SCREEN_PER_DIM: usize = 50;

struct Simplex {
    x: Vec<f64>,
    fx: f64,
    evals: usize,
    converged: bool,
}

fn nelder_mead<F: Fn(&[f64]) -> f64>(f: &F, x0: &[f64], step: &[f64], opts: &SimplexOptions) -> Simplex {
    let n = x0.len();
    let mut pts: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += step[i];
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| f(p)).collect();
    let mut evals = n + 1;
    let mut converged = false;
    while evals < opts.budget {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        let spread = vals[n] - vals[0];
        let size = pts[1..]
            .iter()
            .flat_map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).abs() / b.abs().max(1.0)))
            .fold(0.0f64, f64::max);
        if size <= opts.xtol || spread <= opts.ftol * vals[0].abs() {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| pts[..n].iter().map(|p| p[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&pts[n]).map(|(c, w)| c + t * (c - w)).collect()
        };
        let xr = along(1.0);
        let fr = f(&xr);
        evals += 1;
        if fr < vals[0] {
            let xe = along(2.0);
            let fe = f(&xe);
            evals += 1;
            if fe < fr {
                (pts[n], vals[n]) = (xe, fe);
            } else {
                (pts[n], vals[n]) = (xr, fr);
            }
        } else if fr < vals[n - 1] {
            (pts[n], vals[n]) = (xr, fr);
        } else {
            let (xc, fc) = if fr < vals[n] {
                let xc = along(0.5);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = along(-0.5);
                let fc = f(&xc);
                (xc, fc)
            };
            evals += 1;
            if fc < vals[n].min(fr) {
                (pts[n], vals[n]) = (xc, fc);
            } else {
                for i in 1..=n {
                    pts[i] = pts[i].iter().zip(&pts[0]).map(|(p, b)| b + 0.5 * (p - b)).collect();
                    vals[i] = f(&pts[i]);
                }
                evals += n;
            }
        }
    }
    let best = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap_or(0);
    Simplex {
        x: pts[best].clone(),
        fx: vals[best],
        evals,
        converged,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParametricFit {
    pub model: ModelDocument,
    pub loss: f64,
    pub evaluations: usize,
}

/// Fits a Merton or Kou model to `target` by minimizing the trapezoid L²
/// distance on `|w| <= window`, restarting the simplex from seeded points.
pub fn calibrate_parametric(
    family: Family,
    target: &SpectralTarget,
    window: f64,
    init: Option<&ParametricModel>,
    opts: &SimplexOptions,
) -> Result<ParametricFit> {
    let init = init.copied().unwrap_or_else(|| family.default_init());
    let x0 = init.to_vec();
    let (lo, hi) = family.bounds();
    if x0.len() != lo.len() {
        return Err(Error::InvalidParameter("initial model belongs to another family".into()));
    }
    let t = target.maturity();
    let loss_at = |x: &[f64]| -> Result<f64> {
        let triplet = family.build(x)?.triplet()?;
        target.l2_loss(window, |w| triplet.shifted_char_fn(w, t))
    };
    let penalized = |x: &[f64]| -> f64 {
        let mut excess = 0.0;
        let clamped: Vec<f64> = x
            .iter()
            .zip(lo.iter().zip(hi))
            .map(|(&v, (&a, &b))| {
                let c = v.clamp(a, b);
                excess += (v - c).powi(2);
                c
            })
            .collect();
        match loss_at(&clamped) {
            Ok(l) => l + 1e3 * excess,
            Err(_) => f64::MAX,
        }
    };

    let base = loss_at(&x0)?;
    if opts.budget == 0 {
        return Ok(ParametricFit {
            model: ModelDocument::from(&init),
            loss: base,
            evaluations: 1,
        });
    }

    // Screen a seeded Latin hypercube over the start box and restart the
    // simplex from the best candidates, the initial point among them.
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let boxes = family.start_box();
    let n_screen = SCREEN_PER_DIM * boxes.len();
    let strata: Vec<Vec<usize>> = boxes
        .iter()
        .map(|_| {
            let mut s: Vec<usize> = (0..n_screen).collect();
            s.shuffle(&mut rng);
            s
        })
        .collect();
    let mut candidates: Vec<(f64, Vec<f64>)> = (0..n_screen)
        .map(|i| {
            let x: Vec<f64> = boxes
                .iter()
                .zip(&strata)
                .map(|(&(a, b, log), s)| {
                    let u = (s[i] as f64 + rng.random::<f64>()) / n_screen as f64;
                    if log {
                        (a.ln() + u * (b.ln() - a.ln())).exp()
                    } else {
                        a + u * (b - a)
                    }
                })
                .collect();
            (penalized(&x), x)
        })
        .collect();
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut starts = vec![x0.clone()];
    starts.extend(candidates.into_iter().take(opts.restarts.max(1) - 1).map(|c| c.1));
    // the simplex works in log coordinates for the scale-like parameters
    let logs: Vec<bool> = family.start_box().iter().map(|b| b.2).collect();
    let to_u = |x: &[f64]| -> Vec<f64> {
        x.iter().zip(&logs).map(|(&v, &l)| if l { v.max(1e-12).ln() } else { v }).collect()
    };
    let from_u = |u: &[f64]| -> Vec<f64> {
        u.iter().zip(&logs).map(|(&v, &l)| if l { v.exp() } else { v }).collect()
    };
    let objective = |u: &[f64]| penalized(&from_u(u));
    let step = |u: &[f64]| -> Vec<f64> {
        u.iter()
            .zip(&logs)
            .map(|(v, &l)| if l || v.abs() > 0.1 { 0.1 * v.abs().max(1.0) } else { 0.01 })
            .collect()
    };

    let mut best: Option<Simplex> = None;
    let mut evaluations = 0;
    let mut any_converged = false;
    for s in &starts {
        let u = to_u(s);
        let mut run = nelder_mead(&objective, &u, &step(&u), opts);
        // one restart from the reported minimum guards against a collapsed simplex
        if run.converged {
            let again = nelder_mead(&objective, &run.x.clone(), &step(&run.x), opts);
            run = Simplex {
                evals: run.evals + again.evals,
                ..again
            };
        }
        evaluations += run.evals;
        any_converged |= run.converged;
        if best.as_ref().is_none_or(|b| run.fx < b.fx) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one start");
    if !any_converged {
        return Err(Error::NoConvergence(opts.budget));
    }
    let x: Vec<f64> = from_u(&best.x).iter().zip(lo.iter().zip(hi)).map(|(&v, (&a, &b))| v.clamp(a, b)).collect();
    let model = family.build(&x)?;
    Ok(ParametricFit {
        model: ModelDocument::from(&model),
        loss: loss_at(&x)?,
        evaluations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BucketSpec {
    pub atm_lo: f64,
    pub atm_hi: f64,
    /// Edges of the Low/Mid/High `|w|` buckets.
    pub w_edges: [f64; 4],
}

impl Default for BucketSpec {
    fn default() -> Self {
        Self {
            atm_lo: -0.05,
            atm_hi: 0.03,
            w_edges: [0.0, 20.0, 40.0, 60.0],
        }
    }
}

impl BucketSpec {
    fn moneyness(&self, k: f64) -> usize {
        if k < self.atm_lo {
            0
        } else if k < self.atm_hi {
            1
        } else {
            2
        }
    }

    fn frequency(&self, w: f64) -> Option<usize> {
        let a = w.abs();
        (0..3).find(|&i| a >= self.w_edges[i] && a < self.w_edges[i + 1])
    }
}

/// One error column: named bucket entries (absent when empty) and their sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketErrors {
    pub buckets: Vec<(String, Option<f64>)>,
    pub sum: f64,
}

impl BucketErrors {
    fn from_entries(names: &[&str], entries: [Option<f64>; 3]) -> Self {
        Self {
            buckets: names.iter().map(|s| s.to_string()).zip(entries).collect(),
            sum: entries.iter().flatten().sum(),
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.buckets.iter().find(|(n, _)| n == name).and_then(|(_, v)| *v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTable {
    pub z: BucketErrors,
    pub re_phi: BucketErrors,
    pub im_phi: BucketErrors,
}

/// Time-value RMSE per moneyness bucket, times 10,000.
pub fn z_errors(k: &[f64], predicted: &[f64], target: &[f64], spec: &BucketSpec) -> Result<BucketErrors> {
    if k.len() != predicted.len() {
        return Err(Error::LengthMismatch(k.len(), predicted.len()));
    }
    if predicted.len() != target.len() {
        return Err(Error::LengthMismatch(predicted.len(), target.len()));
    }
    let mut sq = [0.0; 3];
    let mut count = [0usize; 3];
    for ((&k, &p), &t) in k.iter().zip(predicted).zip(target) {
        let b = spec.moneyness(k);
        sq[b] += (p - t).powi(2);
        count[b] += 1;
    }
    let entries = std::array::from_fn(|b| (count[b] > 0).then(|| 1e4 * (sq[b] / count[b] as f64).sqrt()));
    Ok(BucketErrors::from_entries(&["ITM", "ATM", "OTM"], entries))
}

/// RMSE of Re and Im Φ per `|w|` bucket, times 100 and divided by the
/// bucket's standard deviation of the target. Nodes with `|w|` past the last
/// edge are ignored.
pub fn phi_errors(
    w: &[f64],
    predicted: &[Complex64],
    target: &[Complex64],
    spec: &BucketSpec,
) -> Result<(BucketErrors, BucketErrors)> {
    if w.len() != predicted.len() {
        return Err(Error::LengthMismatch(w.len(), predicted.len()));
    }
    if predicted.len() != target.len() {
        return Err(Error::LengthMismatch(predicted.len(), target.len()));
    }
    let part = |pick: fn(&Complex64) -> f64| -> [Option<f64>; 3] {
        std::array::from_fn(|b| {
            let idx: Vec<usize> = (0..w.len()).filter(|&i| spec.frequency(w[i]) == Some(b)).collect();
            if idx.is_empty() {
                return None;
            }
            let n = idx.len() as f64;
            let mean = idx.iter().map(|&i| pick(&target[i])).sum::<f64>() / n;
            let std = (idx.iter().map(|&i| (pick(&target[i]) - mean).powi(2)).sum::<f64>() / n).sqrt();
            let rmse = (idx.iter().map(|&i| (pick(&predicted[i]) - pick(&target[i])).powi(2)).sum::<f64>() / n).sqrt();
            if rmse == 0.0 {
                Some(0.0)
            } else if std > 0.0 {
                Some(100.0 * rmse / std)
            } else {
                None
            }
        })
    };
    let names = ["Low", "Mid", "High"];
    Ok((
        BucketErrors::from_entries(&names, part(|c| c.re)),
        BucketErrors::from_entries(&names, part(|c| c.im)),
    ))
}

/// Error table of the model `phi_shifted` against pooled samples and the
/// spectral target.
pub fn bucketed_errors<F>(
    phi_shifted: F,
    ref_vol: f64,
    samples: &[TimeValuePoint],
    target: &SpectralTarget,
    r: f64,
    spec: &BucketSpec,
) -> Result<ErrorTable>
where
    F: Fn(f64) -> Result<Complex64>,
{
    let grid = target.grid();
    let t = target.maturity();
    let curve = time_value_curve_from(&phi_shifted, t, r, grid, ref_vol)?;
    let k: Vec<f64> = samples.iter().map(|p| p.k).collect();
    let z_pred: Vec<f64> = k.iter().map(|&k| curve.at(k)).collect();
    let z_true: Vec<f64> = samples.iter().map(|p| p.z).collect();
    let z = z_errors(&k, &z_pred, &z_true, spec)?;

    let mut w = Vec::new();
    let mut pred = Vec::new();
    let mut tgt = Vec::new();
    for j in 0..grid.n() {
        let wj = grid.w(j);
        if spec.frequency(wj).is_some() {
            w.push(wj);
            pred.push(phi_shifted(wj)?);
            tgt.push(target.values()[j]);
        }
    }
    let (re_phi, im_phi) = phi_errors(&w, &pred, &tgt, spec)?;
    Ok(ErrorTable { z, re_phi, im_phi })
}

/// Overall scaled time-value RMSE, times 10,000.
pub fn z_rmse(table: &ErrorTable, samples: &[TimeValuePoint], spec: &BucketSpec) -> f64 {
    let mut count = [0usize; 3];
    for p in samples {
        count[spec.moneyness(p.k)] += 1;
    }
    let total: usize = count.iter().sum();
    let sq: f64 = table
        .z
        .buckets
        .iter()
        .zip(count)
        .map(|((_, v), c)| v.map_or(0.0, |e| e * e * c as f64))
        .sum();
    (sq / total.max(1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Amplification {
    pub n_groups: usize,
    pub group_size: usize,
    pub seed: u64,
}

impl Default for Amplification {
    fn default() -> Self {
        Self {
            n_groups: 1000,
            group_size: 10_000,
            seed: 0,
        }
    }
}

/// Amplifies the slices, transforms every group and averages the spectra.
pub fn prepare_target(
    slices: &[MarketSlice],
    amp: &Amplification,
    grid: &SpectralGrid,
) -> Result<SpectralTarget> {
    let groups = amplify(slices, amp.n_groups, amp.group_size, amp.seed)?;
    let fourier = Fourier::new(*grid);
    let targets = groups
        .into_par_iter()
        .map(|mut g| {
            g.transform(&fourier)?;
            g.target(grid)
        })
        .collect::<Result<Vec<_>>>()?;
    SpectralTarget::mean(&targets)
}

fn pooled(slices: &[MarketSlice]) -> Vec<TimeValuePoint> {
    slices.iter().flat_map(|s| s.samples.iter().copied()).collect()
}

fn market_ref_vol(samples: &[TimeValuePoint], t: f64, r: f64) -> f64 {
    samples
        .iter()
        .min_by(|a, b| (a.k - r * t).abs().total_cmp(&(b.k - r * t).abs()))
        .and_then(|p| atm_implied_vol(p.z, t))
        .unwrap_or(0.2)
        .max(1e-3)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ElnnRunConfig {
    pub train: TrainConfig,
    pub amplification: Amplification,
    pub grid: SpectralGrid,
    pub buckets: BucketSpec,
}

impl Default for ElnnRunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            amplification: Amplification::default(),
            grid: SpectralGrid::default(),
            buckets: BucketSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum FittedParams {
    Elnn(ElnnParams),
    Parametric(ModelDocument),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub label: String,
    pub params: FittedParams,
    pub sigma: f64,
    pub lambda: f64,
    /// Unregularized spectral L² loss on the data window.
    pub spectral_loss: f64,
    pub errors: ErrorTable,
    pub z_rmse: f64,
    /// Where the loss trace was written, if anywhere.
    pub loss_trace: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ElnnRun {
    pub params: ElnnParams,
    pub loss: Vec<f64>,
    pub target: SpectralTarget,
    pub report: CalibrationReport,
}

/// Amplify, transform, average and train; then score the fit.
pub fn run_elnn(slices: &[MarketSlice], label: &str, cfg: &ElnnRunConfig) -> Result<ElnnRun> {
    cfg.train.validate()?;
    let first = slices.first().ok_or(Error::EmptyPool)?;
    let target = prepare_target(slices, &cfg.amplification, &cfg.grid)?;
    let trained = train(&target, &cfg.train, None)?;
    let report = elnn_report(&trained.params, &target, slices, first.r, label, cfg)?;
    Ok(ElnnRun {
        params: trained.params,
        loss: trained.loss,
        target,
        report,
    })
}

pub fn elnn_report(
    params: &ElnnParams,
    target: &SpectralTarget,
    slices: &[MarketSlice],
    r: f64,
    label: &str,
    cfg: &ElnnRunConfig,
) -> Result<CalibrationReport> {
    let t = target.maturity();
    let samples = pooled(slices);
    let phi = |w: f64| Ok(phi_model(w, params, t));
    let ref_vol = market_ref_vol(&samples, t, r);
    let errors = bucketed_errors(phi, ref_vol, &samples, target, r, &cfg.buckets)?;
    Ok(CalibrationReport {
        label: label.to_string(),
        params: FittedParams::Elnn(params.clone()),
        sigma: params.sigma,
        lambda: implied_lambda(params),
        spectral_loss: target.l2_loss(cfg.train.data_window(&cfg.grid), phi)?,
        z_rmse: z_rmse(&errors, &samples, &cfg.buckets),
        errors,
        loss_trace: None,
    })
}

pub fn parametric_report(
    fit: &ParametricFit,
    target: &SpectralTarget,
    slices: &[MarketSlice],
    r: f64,
    label: &str,
    buckets: &BucketSpec,
) -> Result<CalibrationReport> {
    let triplet = fit.model.triplet()?;
    let t = target.maturity();
    let samples = pooled(slices);
    let phi = |w: f64| triplet.shifted_char_fn(w, t);
    let errors = bucketed_errors(phi, triplet.total_volatility()?.max(1e-3), &samples, target, r, buckets)?;
    let lambda = fit.model.density()?.total_mass()?;
    Ok(CalibrationReport {
        label: label.to_string(),
        params: FittedParams::Parametric(fit.model.clone()),
        sigma: fit.model.sigma(),
        lambda,
        spectral_loss: fit.loss,
        z_rmse: z_rmse(&errors, &samples, buckets),
        errors,
        loss_trace: None,
    })
}

/// Amplify, transform, average and fit a parametric family.
pub fn run_parametric(
    family: Family,
    slices: &[MarketSlice],
    label: &str,
    cfg: &ElnnRunConfig,
    opts: &SimplexOptions,
) -> Result<(ParametricFit, CalibrationReport)> {
    let first = slices.first().ok_or(Error::EmptyPool)?;
    let target = prepare_target(slices, &cfg.amplification, &cfg.grid)?;
    let fit = calibrate_parametric(family, &target, cfg.train.data_window(&cfg.grid), None, opts)?;
    let report = parametric_report(&fit, &target, slices, first.r, label, &cfg.buckets)?;
    Ok((fit, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub label: String,
    pub sigma: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilitySummary {
    pub rows: Vec<StabilityRow>,
    pub sigma_cv: f64,
    pub lambda_cv: f64,
}

/// Population coefficient of variation.
pub fn coefficient_of_variation(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var == 0.0 {
        0.0
    } else {
        var.sqrt() / mean.abs()
    }
}

pub fn stability_summary(rows: &[StabilityRow]) -> Result<StabilitySummary> {
    if rows.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "stability needs at least two periods, got {}",
            rows.len()
        )));
    }
    let sigma: Vec<f64> = rows.iter().map(|r| r.sigma).collect();
    let lambda: Vec<f64> = rows.iter().map(|r| r.lambda).collect();
    Ok(StabilitySummary {
        rows: rows.to_vec(),
        sigma_cv: coefficient_of_variation(&sigma),
        lambda_cv: coefficient_of_variation(&lambda),
    })
}

impl From<&CalibrationReport> for StabilityRow {
    fn from(r: &CalibrationReport) -> Self {
        Self {
            label: r.label.clone(),
            sigma: r.sigma,
            lambda: r.lambda,
        }
    }
}

/// Runs independent per-period ELNN calibrations in parallel.
pub fn run_elnn_periods(periods: &[Vec<MarketSlice>], cfg: &ElnnRunConfig) -> Result<Vec<ElnnRun>> {
    periods
        .par_iter()
        .enumerate()
        .map(|(i, slices)| {
            let label = slices.first().map_or_else(|| format!("period{i}"), |s| s.label.clone());
            run_elnn(slices, &label, cfg)
        })
        .collect()
}

/// Runs independent per-period parametric calibrations in parallel.
pub fn run_parametric_periods(
    family: Family,
    periods: &[Vec<MarketSlice>],
    cfg: &ElnnRunConfig,
    opts: &SimplexOptions,
) -> Result<Vec<(ParametricFit, CalibrationReport)>> {
    periods
        .par_iter()
        .enumerate()
        .map(|(i, slices)| {
            let label = slices.first().map_or_else(|| format!("period{i}"), |s| s.label.clone());
            run_parametric(family, slices, &label, cfg, opts)
        })
        .collect()
}

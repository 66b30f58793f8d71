//! Exponential Lévy neural network.
//!
//! `h(w) = ANN_r(w) + i·ANN_i(w)` stands in for the transform of `eˣν(dx)`.
//! Each part is a sum of sigmoid-product nodes, even for the real part and
//! odd for the imaginary part, so the implied measure is real and the
//! derived characteristic function satisfies `Φ(0) = 1` and the martingale
//! condition by construction.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{Fourier, SpectralGrid, SpectralTarget, RESIDUE_LIMIT};

pub const DEFAULT_NODES: usize = 20;

/// Smallest admissible `1 + cos(w1)` for the first-layer weights.
pub const POLE_GUARD: f64 = 1e-6;
const POLE_NUDGE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElnnParams {
    pub sigma: f64,
    pub wr0: Vec<f64>,
    pub wr1: Vec<f64>,
    pub wi0: Vec<f64>,
    pub wi1: Vec<f64>,
}

impl ElnnParams {
    pub fn zeros(n_nodes: usize) -> Self {
        Self {
            sigma: 0.0,
            wr0: vec![0.0; n_nodes],
            wr1: vec![0.0; n_nodes],
            wi0: vec![0.0; n_nodes],
            wi1: vec![0.0; n_nodes],
        }
    }

    /// Small random network around a diffusion with `σ = 0.15`.
    pub fn init(n_nodes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let outer = Uniform::new(-0.05, 0.05).expect("valid range");
        let inner = Uniform::new(0.02, 0.5).expect("valid range");
        let mut draw = |d: &Uniform<f64>| -> Vec<f64> {
            (0..n_nodes).map(|_| d.sample(&mut rng)).collect()
        };
        let wr1 = draw(&inner);
        let wi1 = draw(&inner);
        let wr0 = draw(&outer);
        let wi0 = draw(&outer);
        Self {
            sigma: 0.15,
            wr0,
            wr1,
            wi0,
            wi1,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.wr0.len()
    }

    pub fn c0(&self) -> f64 {
        self.wr0.iter().map(|a| a * 0.25).sum()
    }

    pub fn c1(&self) -> f64 {
        self.wr0
            .iter()
            .zip(&self.wr1)
            .zip(self.wi0.iter().zip(&self.wi1))
            .map(|((a, b), (c, d))| a / 4.0 - a / (2.0 * (1.0 + b.cos())) + c / (2.0 * (1.0 + d.cos())))
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.wr0.len();
        for v in [&self.wr1, &self.wi0, &self.wi1] {
            if v.len() != n {
                return Err(Error::LengthMismatch(v.len(), n));
            }
        }
        let all = std::iter::once(&self.sigma)
            .chain(&self.wr0)
            .chain(&self.wr1)
            .chain(&self.wi0)
            .chain(&self.wi1);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite network weight".into()));
        }
        if self.sigma < 0.0 {
            return Err(Error::InvalidParameter(format!("sigma = {}", self.sigma)));
        }
        if let Some(x) = self.wr1.iter().chain(&self.wi1).find(|x| 1.0 + x.cos() <= POLE_GUARD) {
            return Err(Error::InvalidParameter(format!(
                "first-layer weight {x} sits on the pole of c1"
            )));
        }
        Ok(())
    }

    /// Moves every first-layer weight off the `cos = -1` poles.
    fn guard_poles(&mut self) {
        for x in self.wr1.iter_mut().chain(self.wi1.iter_mut()) {
            while 1.0 + x.cos() < POLE_GUARD {
                *x += if x.sin() >= 0.0 { -POLE_NUDGE } else { POLE_NUDGE };
            }
        }
    }

    fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(1 + 4 * self.n_nodes());
        out.push(self.sigma);
        out.extend(&self.wr0);
        out.extend(&self.wr1);
        out.extend(&self.wi0);
        out.extend(&self.wi1);
        out
    }

    fn from_flat(flat: &[f64], n: usize) -> Self {
        Self {
            sigma: flat[0],
            wr0: flat[1..1 + n].to_vec(),
            wr1: flat[1 + n..1 + 2 * n].to_vec(),
            wi0: flat[1 + 2 * n..1 + 3 * n].to_vec(),
            wi1: flat[1 + 3 * n..1 + 4 * n].to_vec(),
        }
    }
}

/// `sig(u)·sig(-u)` and its derivative, given `e = e^{-|u|}` and anything
/// carrying the sign of `u`.
#[inline]
fn bump_from_exp(e: f64, sign: f64) -> (f64, f64) {
    let inv = 1.0 / (1.0 + e);
    let s = e * inv * inv;
    (s, -s * (1.0 - e) * inv * sign.signum())
}

#[inline]
fn bump_value(u: f64) -> f64 {
    let e = (-u.abs()).exp();
    e / ((1.0 + e) * (1.0 + e))
}

pub fn ann_r(w: f64, p: &ElnnParams) -> f64 {
    p.wr0.iter().zip(&p.wr1).map(|(a, b)| a * bump_value(b * w)).sum()
}

pub fn ann_i(w: f64, p: &ElnnParams) -> f64 {
    p.wi0.iter().zip(&p.wi1).map(|(c, d)| c * bump_value(d * w)).sum::<f64>() * w
}

/// `ANN_r + i·ANN_i` at a complex argument.
pub fn h_complex(w: Complex64, p: &ElnnParams) -> Complex64 {
    let sig = |u: Complex64| 1.0 / (1.0 + (-u).exp());
    let re: Complex64 = p.wr0.iter().zip(&p.wr1).map(|(a, b)| *a * sig(*b * w) * sig(-*b * w)).sum();
    let im: Complex64 = p.wi0.iter().zip(&p.wi1).map(|(c, d)| *c * sig(*d * w) * sig(-*d * w)).sum();
    re + Complex64::i() * im * w
}

/// Model `Φ(w - i; Θ)` at real `w`.
pub fn phi_model(w: f64, p: &ElnnParams, t: f64) -> Complex64 {
    let s2 = p.sigma * p.sigma;
    let r = t * (-0.5 * s2 * w * w + ann_r(w, p) - p.c0());
    let arg = t * (0.5 * s2 * w + ann_i(w, p) - p.c1() * w);
    Complex64::from_polar(r.exp(), arg)
}

/// `∫|w/M|^α (ANN_r² + ANN_i²) dw` by the trapezoid rule over the full grid.
pub fn regularizer(p: &ElnnParams, grid: &SpectralGrid, m_cutoff: f64, alpha: f64) -> f64 {
    (0..grid.n())
        .map(|j| {
            let w = grid.w(j);
            let (r, i) = (ann_r(w, p), ann_i(w, p));
            grid.weight(j) * grid.dw() * (w / m_cutoff).abs().powf(alpha) * (r * r + i * i)
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub m_cutoff: f64,
    pub alpha_reg: f64,
    pub beta_reg: f64,
    pub epochs: usize,
    pub seed: u64,
    pub n_nodes: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            m_cutoff: 100.0,
            alpha_reg: 4.0,
            beta_reg: 1e-3,
            epochs: 30_000,
            seed: 0,
            n_nodes: DEFAULT_NODES,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        if !(self.m_cutoff > 0.0 && self.m_cutoff.is_finite()) {
            return bad("m_cutoff must be positive");
        }
        if !(self.alpha_reg > 1.0) {
            return bad("alpha_reg must exceed 1");
        }
        if !(self.beta_reg >= 0.0) {
            return bad("beta_reg must be non-negative");
        }
        if self.n_nodes == 0 {
            return bad("n_nodes must be positive");
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.adam_beta1)
            || !(0.0..1.0).contains(&self.adam_beta2) || !(self.adam_eps > 0.0)
        {
            return bad("ADAM hyperparameters out of range");
        }
        Ok(())
    }

    /// Half-width of the frequency band entering the data term.
    pub fn data_window(&self, grid: &SpectralGrid) -> f64 {
        (4.0 * self.m_cutoff).min(grid.w_max())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        Self {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
        }
    }

    pub fn update(&mut self, x: &mut [f64], g: &[f64], cfg: &TrainConfig) {
        self.step += 1;
        let b1t = 1.0 - cfg.adam_beta1.powi(self.step as i32);
        let b2t = 1.0 - cfg.adam_beta2.powi(self.step as i32);
        for i in 0..x.len() {
            self.m[i] = cfg.adam_beta1 * self.m[i] + (1.0 - cfg.adam_beta1) * g[i];
            self.v[i] = cfg.adam_beta2 * self.v[i] + (1.0 - cfg.adam_beta2) * g[i] * g[i];
            let mh = self.m[i] / b1t;
            let vh = self.v[i] / b2t;
            x[i] -= cfg.learning_rate * mh / (vh.sqrt() + cfg.adam_eps);
        }
    }
}

/// Per-node data for the fused loss/gradient pass. Only `w > 0` is stored;
/// the mirrored node enters through `Φ(-w - i) = conj Φ(w - i)`.
struct Node {
    w: f64,
    data_weight: f64,
    target_pos: Complex64,
    target_neg: Complex64,
    reg_weight: f64,
}

/// Loss evaluator bound to one target and configuration.
pub struct Objective {
    t: f64,
    dw: f64,
    beta: f64,
    nodes: Vec<Node>,
}

impl Objective {
    pub fn new(target: &SpectralTarget, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = *target.grid();
        let window = cfg.data_window(&grid);
        let n = grid.n();
        let half = n / 2;
        let last_in = (half..n).filter(|&j| grid.w(j) <= window).last();
        let values = target.values();
        let nodes = (half..n)
            .map(|j| {
                let w = grid.w(j);
                let data_weight = match last_in {
                    Some(l) if j < l => grid.dw(),
                    Some(l) if j == l => 0.5 * grid.dw(),
                    _ => 0.0,
                };
                Node {
                    w,
                    data_weight,
                    target_pos: values[j],
                    target_neg: values[n - 1 - j],
                    reg_weight: 2.0 * grid.weight(j) * grid.dw() * (w / cfg.m_cutoff).abs().powf(cfg.alpha_reg),
                }
            })
            .collect();
        Ok(Self {
            t: target.maturity(),
            dw: grid.dw(),
            beta: cfg.beta_reg,
            nodes,
        })
    }

    pub fn value(&self, p: &ElnnParams) -> f64 {
        self.evaluate(p, None)
    }

    /// Loss and its gradient. The `sigma` slot holds the derivative with
    /// respect to the signed parameter `s`, `σ = |s|`.
    pub fn value_and_gradient(&self, p: &ElnnParams) -> (f64, ElnnParams) {
        let mut g = ElnnParams::zeros(p.n_nodes());
        let v = self.evaluate(p, Some(&mut g));
        (v, g)
    }

    fn evaluate(&self, p: &ElnnParams, mut grad: Option<&mut ElnnParams>) -> f64 {
        let n = p.n_nodes();
        let t = self.t;
        let s = p.sigma;
        let s2 = s * s;
        let c0 = p.c0();
        let c1 = p.c1();
        let mut sr = vec![(0.0, 0.0); n];
        let mut si = vec![(0.0, 0.0); n];
        let mut loss = 0.0;
        let mut sum_gr = 0.0;
        let mut sum_ga_w = 0.0;
        let mut grad_s = 0.0;

        // Nodes sit at w = (m + 1/2)·dw, so e^{-|b w|} advances by a fixed
        // factor per node.
        let start = |b: &f64| (-0.5 * b.abs() * self.dw).exp();
        let ratio = |b: &f64| (-b.abs() * self.dw).exp();
        let mut er: Vec<f64> = p.wr1.iter().map(start).collect();
        let mut ei: Vec<f64> = p.wi1.iter().map(start).collect();
        let rr: Vec<f64> = p.wr1.iter().map(ratio).collect();
        let ri: Vec<f64> = p.wi1.iter().map(ratio).collect();

        for node in &self.nodes {
            let w = node.w;
            let mut ar = 0.0;
            for j in 0..n {
                sr[j] = bump_from_exp(er[j], p.wr1[j]);
                er[j] *= rr[j];
                ar += p.wr0[j] * sr[j].0;
            }
            let mut ai = 0.0;
            for j in 0..n {
                si[j] = bump_from_exp(ei[j], p.wi1[j]);
                ei[j] *= ri[j];
                ai += p.wi0[j] * si[j].0;
            }
            ai *= w;

            let reg = node.reg_weight * (ar * ar + ai * ai);
            loss += self.beta * reg;

            let (mut gr, mut ga) = (0.0, 0.0);
            if node.data_weight > 0.0 {
                let r = t * (-0.5 * s2 * w * w + ar - c0);
                let arg = t * (0.5 * s2 * w + ai - c1 * w);
                let phi = Complex64::from_polar(r.exp(), arg);
                let phi_neg = phi.conj();
                let dp = phi - node.target_pos;
                let dn = phi_neg - node.target_neg;
                let q = node.data_weight;
                loss += q * (dp.norm_sqr() + dn.norm_sqr());
                if grad.is_some() {
                    let i = Complex64::i();
                    gr = 2.0 * q * ((dp.conj() * phi).re + (dn.conj() * phi_neg).re);
                    ga = 2.0 * q * ((dp.conj() * i * phi).re - (dn.conj() * i * phi_neg).re);
                }
            }

            if let Some(g) = grad.as_deref_mut() {
                grad_s += gr * (-t * s * w * w) + ga * (t * s * w);
                sum_gr += gr;
                sum_ga_w += ga * w;
                let cr = t * gr + self.beta * 2.0 * node.reg_weight * ar;
                let ci = t * ga + self.beta * 2.0 * node.reg_weight * ai;
                for j in 0..n {
                    g.wr0[j] += cr * sr[j].0;
                    g.wr1[j] += cr * p.wr0[j] * sr[j].1 * w;
                    g.wi0[j] += ci * si[j].0 * w;
                    g.wi1[j] += ci * p.wi0[j] * si[j].1 * w * w;
                }
            }
        }

        if let Some(g) = grad {
            g.sigma = grad_s;
            for j in 0..n {
                let (a, b, c, d) = (p.wr0[j], p.wr1[j], p.wi0[j], p.wi1[j]);
                let (cb, cd) = (1.0 + b.cos(), 1.0 + d.cos());
                let dc1_da = 0.25 - 1.0 / (2.0 * cb);
                let dc1_db = -a * b.sin() / (2.0 * cb * cb);
                let dc1_dc = 1.0 / (2.0 * cd);
                let dc1_dd = c * d.sin() / (2.0 * cd * cd);
                g.wr0[j] += -0.25 * t * sum_gr - t * dc1_da * sum_ga_w;
                g.wr1[j] += -t * dc1_db * sum_ga_w;
                g.wi0[j] += -t * dc1_dc * sum_ga_w;
                g.wi1[j] += -t * dc1_dd * sum_ga_w;
            }
        }
        loss
    }
}

/// `‖Φ(·; Θ) - Φ*‖² + β·Λ` with the data term restricted to `|w| <= 4M`.
pub fn objective(p: &ElnnParams, target: &SpectralTarget, cfg: &TrainConfig) -> Result<f64> {
    Ok(Objective::new(target, cfg)?.value(p))
}

pub fn gradient(p: &ElnnParams, target: &SpectralTarget, cfg: &TrainConfig) -> Result<ElnnParams> {
    Ok(Objective::new(target, cfg)?.value_and_gradient(p).1)
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub params: ElnnParams,
    /// Loss before each update, one entry per epoch.
    pub loss: Vec<f64>,
}

/// Full-batch ADAM on the regularized objective.
pub fn train(
    target: &SpectralTarget,
    cfg: &TrainConfig,
    init: Option<ElnnParams>,
) -> Result<TrainResult> {
    let objective = Objective::new(target, cfg)?;
    let params = match init {
        Some(p) => p,
        None => ElnnParams::init(cfg.n_nodes, cfg.seed),
    };
    params.validate()?;
    let n = params.n_nodes();
    let mut flat = params.to_flat();
    let mut adam = AdamState::new(flat.len());
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut current = params;
    for epoch in 0..cfg.epochs {
        let (loss, g) = objective.value_and_gradient(&current);
        if !loss.is_finite() {
            return Err(Error::DivergedLoss { epoch, loss });
        }
        trace.push(loss);
        adam.update(&mut flat, &g.to_flat(), cfg);
        current = ElnnParams::from_flat(&flat, n);
        current.guard_poles();
        flat = current.to_flat();
    }
    current.sigma = current.sigma.abs();
    Ok(TrainResult {
        params: current,
        loss: trace,
    })
}

/// `dν/dx = e^{-x}·F⁻¹[h](x)` on the grid's x-nodes with `|x| <= x_window`.
pub fn implied_levy_density(
    p: &ElnnParams,
    grid: &SpectralGrid,
    x_window: f64,
) -> Result<Vec<(f64, f64)>> {
    let h: Vec<Complex64> = grid
        .w_nodes()
        .into_iter()
        .map(|w| Complex64::new(ann_r(w, p), ann_i(w, p)))
        .collect();
    let inv = Fourier::new(*grid).inverse(&h);
    let mut out = Vec::new();
    let mut residue: f64 = 0.0;
    for (m, v) in inv.iter().enumerate() {
        let x = grid.k(m);
        if x.abs() <= x_window {
            residue = residue.max(v.im.abs());
            out.push((x, (-x).exp() * v.re));
        }
    }
    if residue > RESIDUE_LIMIT {
        return Err(Error::ResidueTooLarge {
            residue,
            limit: RESIDUE_LIMIT,
        });
    }
    Ok(out)
}

/// Jump intensity `λ = ∫ν = h(i) = c₀ - c₁`.
pub fn implied_lambda(p: &ElnnParams) -> f64 {
    p.c0() - p.c1()
}

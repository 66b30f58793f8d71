//! Lévy triplets, the Merton and Kou jump families, characteristic
//! exponents on the strip `-2 <= Im w <= 0`, and cumulant scaling.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::quadrature::{integrate, integrate_complex, QuadOptions};

const SQRT_2PI: f64 = 2.506_628_274_631_000_7;
const STRIP_SLACK: f64 = 1e-12;

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

/// Normally distributed jump sizes arriving at rate `lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MertonJumps {
    pub lambda: f64,
    pub mu: f64,
    pub delta: f64,
}

impl MertonJumps {
    pub fn new(lambda: f64, mu: f64, delta: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("merton lambda = {lambda}")));
        }
        if !mu.is_finite() {
            return Err(Error::InvalidParameter(format!("merton mu = {mu}")));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidParameter(format!("merton delta = {delta}")));
        }
        Ok(Self { lambda, mu, delta })
    }
}

/// Double-exponential jumps: up with probability `p` at rate `lambda_plus`,
/// down otherwise at rate `lambda_minus`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KouJumps {
    pub lambda: f64,
    pub p: f64,
    pub lambda_plus: f64,
    pub lambda_minus: f64,
}

impl KouJumps {
    pub fn new(lambda: f64, p: f64, lambda_plus: f64, lambda_minus: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("kou lambda = {lambda}")));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("kou p = {p}")));
        }
        // e^{2x} must be integrable against the up-jump tail.
        if !(lambda_plus > 2.0 && lambda_plus.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "kou lambda_plus = {lambda_plus} (must exceed 2)"
            )));
        }
        if !(lambda_minus > 0.0 && lambda_minus.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "kou lambda_minus = {lambda_minus}"
            )));
        }
        Ok(Self {
            lambda,
            p,
            lambda_plus,
            lambda_minus,
        })
    }
}

/// `λ·N(μ, δ²)` evaluated at `x`.
pub fn merton_density(x: f64, params: &MertonJumps) -> f64 {
    let z = (x - params.mu) / params.delta;
    params.lambda * std_normal_pdf(z) / params.delta
}

/// Kou Lévy density; zero at the origin by convention.
pub fn kou_density(x: f64, params: &KouJumps) -> f64 {
    if x > 0.0 {
        params.p * params.lambda * params.lambda_plus * (-params.lambda_plus * x).exp()
    } else if x < 0.0 {
        (1.0 - params.p) * params.lambda * params.lambda_minus * (params.lambda_minus * x).exp()
    } else {
        0.0
    }
}

/// Piecewise-linear density on a sorted abscissa, zero outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedDensity {
    pub x: Vec<f64>,
    pub density: Vec<f64>,
}

impl TabulatedDensity {
    pub fn new(x: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        if x.len() != density.len() {
            return Err(Error::LengthMismatch(x.len(), density.len()));
        }
        if x.len() < 2 {
            return Err(Error::InvalidParameter("tabulated density needs >= 2 nodes".into()));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("tabulated abscissa must increase".into()));
        }
        if density.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::InvalidParameter("tabulated density must be finite and >= 0".into()));
        }
        Ok(Self { x, density })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.x.len();
        if x < self.x[0] || x > self.x[n - 1] {
            return 0.0;
        }
        let i = self.x.partition_point(|&v| v <= x).clamp(1, n - 1);
        let (x0, x1) = (self.x[i - 1], self.x[i]);
        let t = (x - x0) / (x1 - x0);
        self.density[i - 1] * (1.0 - t) + self.density[i] * t
    }
}

type PdfFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Finite Lévy density `dν/dx`.
#[derive(Clone)]
pub enum LevyDensity {
    Zero,
    Merton(MertonJumps),
    Kou(KouJumps),
    Tabulated(TabulatedDensity),
    Mixture(Vec<LevyDensity>),
    /// Arbitrary density supported on `[lo, hi]`.
    Custom { pdf: PdfFn, lo: f64, hi: f64 },
}

impl fmt::Debug for LevyDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LevyDensity::Zero => write!(f, "Zero"),
            LevyDensity::Merton(m) => f.debug_tuple("Merton").field(m).finish(),
            LevyDensity::Kou(k) => f.debug_tuple("Kou").field(k).finish(),
            LevyDensity::Tabulated(t) => write!(f, "Tabulated({} nodes)", t.x.len()),
            LevyDensity::Mixture(parts) => f.debug_tuple("Mixture").field(parts).finish(),
            LevyDensity::Custom { lo, hi, .. } => write!(f, "Custom([{lo}, {hi}])"),
        }
    }
}

impl LevyDensity {
    pub fn custom<F>(pdf: F, lo: f64, hi: f64) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        LevyDensity::Custom {
            pdf: Arc::new(pdf),
            lo,
            hi,
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            LevyDensity::Zero => 0.0,
            LevyDensity::Merton(m) => merton_density(x, m),
            LevyDensity::Kou(k) => kou_density(x, k),
            LevyDensity::Tabulated(t) => t.eval(x),
            LevyDensity::Mixture(parts) => parts.iter().map(|p| p.pdf(x)).sum(),
            LevyDensity::Custom { pdf, lo, hi } => {
                if x < *lo || x > *hi {
                    0.0
                } else {
                    pdf(x)
                }
            }
        }
    }

    /// Truncated integration domain outside of which the density (times
    /// `e^{2x}`) is negligible.
    pub fn support(&self) -> Option<(f64, f64)> {
        match self {
            LevyDensity::Zero => None,
            LevyDensity::Merton(m) => Some((
                (m.mu - 10.0 * m.delta).min(-1.0),
                (m.mu + 10.0 * m.delta).max(1.0),
            )),
            LevyDensity::Kou(k) => {
                let l = 40.0 / (k.lambda_plus - 2.0).min(k.lambda_minus);
                Some((-l, l))
            }
            LevyDensity::Tabulated(t) => Some((t.x[0], t.x[t.x.len() - 1])),
            LevyDensity::Mixture(parts) => parts
                .iter()
                .filter_map(|p| p.support())
                .reduce(|a, b| (a.0.min(b.0), a.1.max(b.1))),
            LevyDensity::Custom { lo, hi, .. } => Some((*lo, *hi)),
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        let mut pts = vec![-1.0, 0.0, 1.0];
        if let LevyDensity::Merton(m) = self {
            pts.push(m.mu);
        }
        if let LevyDensity::Mixture(parts) = self {
            for p in parts {
                pts.extend(p.breakpoints());
            }
        }
        pts
    }

    fn integrate_real<F: Fn(f64) -> f64>(&self, g: F) -> Result<f64> {
        match self.support() {
            None => Ok(0.0),
            Some((lo, hi)) => integrate(
                |x| g(x) * self.pdf(x),
                lo,
                hi,
                &self.breakpoints(),
                &QuadOptions::default(),
            ),
        }
    }

    /// Total mass `λ = ∫ν(dx)`.
    pub fn total_mass(&self) -> Result<f64> {
        match self {
            LevyDensity::Zero => Ok(0.0),
            LevyDensity::Merton(m) => Ok(m.lambda),
            LevyDensity::Kou(k) => Ok(k.lambda),
            LevyDensity::Mixture(parts) => parts.iter().map(|p| p.total_mass()).sum(),
            _ => self.integrate_real(|_| 1.0),
        }
    }

    /// `∫ x^n ν(dx)` by quadrature.
    pub fn moment(&self, n: i32) -> Result<f64> {
        self.integrate_real(|x| x.powi(n))
    }

    /// `∫ e^{cx} ν(dx)` by quadrature.
    pub fn exp_moment(&self, c: f64) -> Result<f64> {
        self.integrate_real(|x| (c * x).exp())
    }

    /// Closed-form `∫(e^{iwx} - 1 - iwx·1_{|x|<=1}) ν(dx)` where one exists.
    pub fn closed_form_exponent(&self, w: Complex64) -> Option<Complex64> {
        let i = Complex64::i();
        match self {
            LevyDensity::Zero => Some(Complex64::new(0.0, 0.0)),
            LevyDensity::Merton(m) => {
                let jump = m.lambda * ((i * w * m.mu - 0.5 * m.delta * m.delta * w * w).exp() - 1.0);
                let a = (-1.0 - m.mu) / m.delta;
                let b = (1.0 - m.mu) / m.delta;
                let truncated_mean = m.lambda
                    * (m.mu * (std_normal_cdf(b) - std_normal_cdf(a))
                        - m.delta * (std_normal_pdf(b) - std_normal_pdf(a)));
                Some(jump - i * w * truncated_mean)
            }
            LevyDensity::Kou(k) => {
                let up = k.p * k.lambda_plus / (k.lambda_plus - i * w);
                let down = (1.0 - k.p) * k.lambda_minus / (k.lambda_minus + i * w);
                let jump = k.lambda * (up + down - 1.0);
                // ∫_0^1 x e^{-cx} dx
                let unit = |c: f64| (1.0 - (-c).exp() * (1.0 + c)) / (c * c);
                let truncated_mean = k.lambda
                    * (k.p * k.lambda_plus * unit(k.lambda_plus)
                        - (1.0 - k.p) * k.lambda_minus * unit(k.lambda_minus));
                Some(jump - i * w * truncated_mean)
            }
            LevyDensity::Mixture(parts) => parts
                .iter()
                .map(|p| p.closed_form_exponent(w))
                .sum::<Option<Complex64>>(),
            LevyDensity::Tabulated(_) | LevyDensity::Custom { .. } => None,
        }
    }

    /// Jump part of the characteristic exponent, closed form when available.
    pub fn jump_exponent(&self, w: Complex64) -> Result<Complex64> {
        if w == Complex64::new(0.0, 0.0) {
            return Ok(w);
        }
        match self.closed_form_exponent(w) {
            Some(v) => Ok(v),
            None => f_exponent(w, self),
        }
    }

    /// Checks finite activity and integrability of `e^{2x}` by quadrature.
    pub fn validate(&self) -> Result<()> {
        let mass = self.total_mass()?;
        if !mass.is_finite() || mass < 0.0 {
            return Err(Error::InvalidParameter(format!("Lévy mass = {mass}")));
        }
        let second = self.exp_moment(2.0)?;
        if !second.is_finite() {
            return Err(Error::InvalidParameter("∫e^{2x}ν(dx) is not finite".into()));
        }
        Ok(())
    }
}

fn check_strip(w: Complex64) -> Result<()> {
    if w.im > STRIP_SLACK || w.im < -2.0 - STRIP_SLACK || !w.re.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "w = {w} outside the strip -2 <= Im w <= 0"
        )));
    }
    Ok(())
}

/// `f(w) = ∫(e^{iwx} - 1 - iwx·1_{|x|<=1}) ν(dx)` by adaptive quadrature.
pub fn f_exponent(w: Complex64, density: &LevyDensity) -> Result<Complex64> {
    check_strip(w)?;
    let Some((lo, hi)) = density.support() else {
        return Ok(Complex64::new(0.0, 0.0));
    };
    if w == Complex64::new(0.0, 0.0) {
        return Ok(w);
    }
    let i = Complex64::i();
    let integrand = |x: f64| {
        let iwx = i * w * x;
        let compensator = if x.abs() <= 1.0 { iwx } else { Complex64::new(0.0, 0.0) };
        (iwx.exp() - 1.0 - compensator) * density.pdf(x)
    };
    let value = integrate_complex(
        integrand,
        lo,
        hi,
        &density.breakpoints(),
        w.re,
        &QuadOptions::default(),
    )?;
    if !(value.re.is_finite() && value.im.is_finite()) {
        return Err(Error::NonFinite(format!("f({w})")));
    }
    Ok(value)
}

/// Drift making `e^{X_t}` a martingale: `b = -σ²/2 - f(-i)`.
pub fn martingale_drift(sigma: f64, density: &LevyDensity) -> Result<f64> {
    let f = density.jump_exponent(Complex64::new(0.0, -1.0))?;
    let b = -0.5 * sigma * sigma - f.re;
    if !b.is_finite() {
        return Err(Error::NonFinite("martingale drift".into()));
    }
    Ok(b)
}

/// Lévy-Khinchine triplet `(σ, ν, b)`.
#[derive(Debug, Clone)]
pub struct LevyTriplet {
    pub sigma: f64,
    pub density: LevyDensity,
    pub drift_b: f64,
}

impl LevyTriplet {
    pub fn new(sigma: f64, density: LevyDensity, drift_b: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma = {sigma}")));
        }
        if !drift_b.is_finite() {
            return Err(Error::InvalidParameter(format!("drift = {drift_b}")));
        }
        density.validate()?;
        Ok(Self {
            sigma,
            density,
            drift_b,
        })
    }

    /// Triplet whose drift satisfies the martingale condition.
    pub fn martingale(sigma: f64, density: LevyDensity) -> Result<Self> {
        let b = martingale_drift(sigma, &density)?;
        Self::new(sigma, density, b)
    }

    /// Characteristic exponent `ψ(w)` with `Φ_{X_t}(w) = exp(t·ψ(w))`.
    pub fn exponent(&self, w: Complex64) -> Result<Complex64> {
        check_strip(w)?;
        let i = Complex64::i();
        let f = self.density.jump_exponent(w)?;
        Ok(-0.5 * self.sigma * self.sigma * w * w + i * self.drift_b * w + f)
    }

    /// `Φ_{X_T}(w - i)`, the transform of `e^x` times the density of `X_T`.
    pub fn shifted_char_fn(&self, w: f64, t: f64) -> Result<Complex64> {
        char_fn(Complex64::new(w, -1.0), self, t)
    }

    /// Standard deviation per unit time, `sqrt(σ² + ∫x²ν)`.
    pub fn total_volatility(&self) -> Result<f64> {
        Ok((self.sigma * self.sigma + self.density.moment(2)?).sqrt())
    }
}

/// `Φ_{X_T}(w) = exp(T(-σ²w²/2 + ibw + f(w)))`.
pub fn char_fn(w: Complex64, triplet: &LevyTriplet, t: f64) -> Result<Complex64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("maturity T = {t}")));
    }
    let value = (triplet.exponent(w)? * t).exp();
    if !(value.re.is_finite() && value.im.is_finite()) {
        return Err(Error::NonFinite(format!("Φ({w})")));
    }
    Ok(value)
}

/// Merton or Kou parameter set plus diffusion volatility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JumpModel {
    Merton(MertonJumps),
    Kou(KouJumps),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParametricModel {
    pub sigma: f64,
    pub jumps: JumpModel,
}

impl ParametricModel {
    pub fn merton(sigma: f64, lambda: f64, mu: f64, delta: f64) -> Result<Self> {
        Self::checked(sigma, JumpModel::Merton(MertonJumps::new(lambda, mu, delta)?))
    }

    pub fn kou(sigma: f64, lambda: f64, p: f64, lambda_plus: f64, lambda_minus: f64) -> Result<Self> {
        Self::checked(
            sigma,
            JumpModel::Kou(KouJumps::new(lambda, p, lambda_plus, lambda_minus)?),
        )
    }

    fn checked(sigma: f64, jumps: JumpModel) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma = {sigma}")));
        }
        Ok(Self { sigma, jumps })
    }

    pub fn density(&self) -> LevyDensity {
        match self.jumps {
            JumpModel::Merton(m) => LevyDensity::Merton(m),
            JumpModel::Kou(k) => LevyDensity::Kou(k),
        }
    }

    pub fn lambda(&self) -> f64 {
        match self.jumps {
            JumpModel::Merton(m) => m.lambda,
            JumpModel::Kou(k) => k.lambda,
        }
    }

    pub fn triplet(&self) -> Result<LevyTriplet> {
        LevyTriplet::martingale(self.sigma, self.density())
    }

    /// Parameters as a flat vector: `[σ, λ, μ, δ]` or `[σ, λ, p, λ₊, λ₋]`.
    pub fn to_vec(&self) -> Vec<f64> {
        match self.jumps {
            JumpModel::Merton(m) => vec![self.sigma, m.lambda, m.mu, m.delta],
            JumpModel::Kou(k) => vec![self.sigma, k.lambda, k.p, k.lambda_plus, k.lambda_minus],
        }
    }
}

/// Cumulants of `X_Δ` up to order four.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CumulantSet {
    pub delta: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
}

impl CumulantSet {
    /// Cumulants at another horizon; every order scales linearly in `Δ`.
    pub fn at_horizon(&self, delta: f64) -> Self {
        let s = delta / self.delta;
        Self {
            delta,
            k1: self.k1 * s,
            k2: self.k2 * s,
            k3: self.k3 * s,
            k4: self.k4 * s,
        }
    }

    pub fn mean(&self) -> f64 {
        self.k1
    }

    pub fn std_dev(&self) -> f64 {
        self.k2.sqrt()
    }

    pub fn skewness(&self) -> f64 {
        if self.k3 == 0.0 {
            0.0
        } else {
            self.k3 / self.k2.powf(1.5)
        }
    }

    pub fn excess_kurtosis(&self) -> f64 {
        if self.k4 == 0.0 {
            0.0
        } else {
            self.k4 / (self.k2 * self.k2)
        }
    }
}

/// Cumulants of `X_Δ` for the given triplet.
pub fn cumulants(triplet: &LevyTriplet, delta: f64) -> Result<CumulantSet> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidParameter(format!("horizon Δ = {delta}")));
    }
    let d = &triplet.density;
    let big_jump_mean = d.integrate_real(|x| if x.abs() > 1.0 { x } else { 0.0 })?;
    let per_unit = [
        triplet.drift_b + big_jump_mean,
        triplet.sigma * triplet.sigma + d.moment(2)?,
        d.moment(3)?,
        d.moment(4)?,
    ];
    if per_unit.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("cumulants".into()));
    }
    Ok(CumulantSet {
        delta,
        k1: delta * per_unit[0],
        k2: delta * per_unit[1],
        k3: delta * per_unit[2],
        k4: delta * per_unit[3],
    })
}

/// JSON form `{"model": "merton"|"kou"|"custom", "sigma": .., "params": {..}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelDocument {
    Merton { sigma: f64, params: MertonJumps },
    Kou { sigma: f64, params: KouJumps },
    Custom { sigma: f64, params: TabulatedDensity },
}

impl ModelDocument {
    pub fn sigma(&self) -> f64 {
        match self {
            ModelDocument::Merton { sigma, .. }
            | ModelDocument::Kou { sigma, .. }
            | ModelDocument::Custom { sigma, .. } => *sigma,
        }
    }

    pub fn density(&self) -> Result<LevyDensity> {
        Ok(match self {
            ModelDocument::Merton { params, .. } => {
                LevyDensity::Merton(MertonJumps::new(params.lambda, params.mu, params.delta)?)
            }
            ModelDocument::Kou { params, .. } => LevyDensity::Kou(KouJumps::new(
                params.lambda,
                params.p,
                params.lambda_plus,
                params.lambda_minus,
            )?),
            ModelDocument::Custom { params, .. } => LevyDensity::Tabulated(TabulatedDensity::new(
                params.x.clone(),
                params.density.clone(),
            )?),
        })
    }

    pub fn triplet(&self) -> Result<LevyTriplet> {
        LevyTriplet::martingale(self.sigma(), self.density()?)
    }

    pub fn parametric(&self) -> Option<ParametricModel> {
        match self {
            ModelDocument::Merton { sigma, params } => Some(ParametricModel {
                sigma: *sigma,
                jumps: JumpModel::Merton(*params),
            }),
            ModelDocument::Kou { sigma, params } => Some(ParametricModel {
                sigma: *sigma,
                jumps: JumpModel::Kou(*params),
            }),
            ModelDocument::Custom { .. } => None,
        }
    }
}

impl From<&ParametricModel> for ModelDocument {
    fn from(m: &ParametricModel) -> Self {
        match m.jumps {
            JumpModel::Merton(params) => ModelDocument::Merton {
                sigma: m.sigma,
                params,
            },
            JumpModel::Kou(params) => ModelDocument::Kou {
                sigma: m.sigma,
                params,
            },
        }
    }
}

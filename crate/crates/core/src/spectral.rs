//! Fourier pricing on a paired log-strike / frequency grid.
//!
//! Time values `z(k)` and their transforms `ζ(w)` are linked through
//! `z = F⁻¹[ζ]` with `F[h](w) = ∫ h(x) e^{iwx} dx`. Both directions are
//! trapezoid sums evaluated with one FFT each. The time value has a kink at
//! `k = rT` inherited from the intrinsic value, which would otherwise limit
//! both directions to slow algebraic convergence; a Black-Scholes time value
//! with the same kink is subtracted first and added back in closed form.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::levy_models::{char_fn, LevyTriplet};

/// Imaginary residue above which an inverse transform is rejected.
pub const RESIDUE_LIMIT: f64 = 1e-6;

/// Uniform frequency grid `w_j = (j - n/2 + 1/2)·dw` paired with the
/// log-strike grid `k_m = (m - n/2)·dk`, `dk·dw·n = 2π`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralGrid {
    n: usize,
    dw: f64,
}

impl Default for SpectralGrid {
    fn default() -> Self {
        Self { n: 1 << 14, dw: 0.05 }
    }
}

impl SpectralGrid {
    pub fn new(n: usize, dw: f64) -> Result<Self> {
        if n < 4 || !n.is_power_of_two() {
            return Err(Error::InvalidParameter(format!("grid size {n} is not a power of two >= 4")));
        }
        if !(dw > 0.0 && dw.is_finite()) {
            return Err(Error::InvalidParameter(format!("frequency spacing {dw}")));
        }
        Ok(Self { n, dw })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dw(&self) -> f64 {
        self.dw
    }

    /// Half-bin shift keeping `w = 0` off the grid.
    pub fn offset(&self) -> f64 {
        0.5 * self.dw
    }

    pub fn dk(&self) -> f64 {
        2.0 * PI / (self.n as f64 * self.dw)
    }

    pub fn w(&self, j: usize) -> f64 {
        // Odd integer times dw/2 keeps w_j = -w_{n-1-j} exact.
        (2.0 * j as f64 - self.n as f64 + 1.0) * self.offset()
    }

    pub fn k(&self, m: usize) -> f64 {
        (m as f64 - (self.n / 2) as f64) * self.dk()
    }

    pub fn w_nodes(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.w(j)).collect()
    }

    pub fn k_nodes(&self) -> Vec<f64> {
        (0..self.n).map(|m| self.k(m)).collect()
    }

    /// Largest `|w|` on the grid.
    pub fn w_max(&self) -> f64 {
        self.w(self.n - 1)
    }

    /// Index of the k-node whose bin `[k_m - dk/2, k_m + dk/2)` holds `k`.
    pub fn k_index(&self, k: f64) -> Option<usize> {
        let m = (k / self.dk()).round() + (self.n / 2) as f64;
        if m >= 0.0 && m < self.n as f64 {
            Some(m as usize)
        } else {
            None
        }
    }

    /// Trapezoid end weight for node `i`.
    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.n {
            0.5
        } else {
            1.0
        }
    }
}

/// Cached FFT plans for one grid.
#[derive(Clone)]
pub struct Fourier {
    grid: SpectralGrid,
    forward_plan: Arc<dyn Fft<f64>>,
    inverse_plan: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fourier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fourier").field("grid", &self.grid).finish()
    }
}

impl Fourier {
    pub fn new(grid: SpectralGrid) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            grid,
            forward_plan: planner.plan_fft_forward(grid.n),
            inverse_plan: planner.plan_fft_inverse(grid.n),
        }
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    fn parity(i: usize) -> f64 {
        if i % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    fn corner_phase(&self) -> f64 {
        // w_0 · k_0
        let g = &self.grid;
        g.w(0) * g.k(0)
    }

    /// `F[g](w_j) ≈ dk Σ_m ω_m g(k_m) e^{i w_j k_m}` for every frequency node.
    pub fn forward(&self, values: &[Complex64]) -> Vec<Complex64> {
        let g = &self.grid;
        let n = g.n;
        assert_eq!(values.len(), n, "forward transform expects one value per k-node");
        let mut buf: Vec<Complex64> = values
            .iter()
            .enumerate()
            .map(|(m, v)| {
                let phase = PI * m as f64 / n as f64;
                v * (g.weight(m) * Self::parity(m)) * Complex64::from_polar(1.0, phase)
            })
            .collect();
        self.inverse_plan.process(&mut buf);
        let lead = Complex64::from_polar(g.dk(), self.corner_phase());
        buf.iter_mut()
            .enumerate()
            .for_each(|(j, v)| *v *= lead * Self::parity(j));
        buf
    }

    /// `F⁻¹[G](k_m) ≈ (dw/2π) Σ_j ω_j G(w_j) e^{-i w_j k_m}` for every k-node.
    pub fn inverse(&self, values: &[Complex64]) -> Vec<Complex64> {
        let g = &self.grid;
        let n = g.n;
        assert_eq!(values.len(), n, "inverse transform expects one value per w-node");
        let mut buf: Vec<Complex64> = values
            .iter()
            .enumerate()
            .map(|(j, v)| v * (g.weight(j) * Self::parity(j)))
            .collect();
        self.forward_plan.process(&mut buf);
        let lead = Complex64::from_polar(g.dw / (2.0 * PI), -self.corner_phase());
        buf.iter_mut().enumerate().for_each(|(m, v)| {
            let phase = -PI * m as f64 / n as f64;
            *v *= lead * Self::parity(m) * Complex64::from_polar(1.0, phase);
        });
        buf
    }
}

/// `(k, z)` pair: log-moneyness and time value as a fraction of spot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeValuePoint {
    pub k: f64,
    pub z: f64,
}

/// One sample `Φ(w - i)` of a shifted characteristic function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralPoint {
    pub w: f64,
    pub value: Complex64,
}

fn std_normal() -> Normal {
    Normal::standard()
}

/// Black-Scholes normalized call `c̃(k)` minus its intrinsic value.
pub fn bs_time_value(k: f64, r: f64, t: f64, sigma: f64) -> f64 {
    let intrinsic = (1.0 - (k - r * t).exp()).max(0.0);
    let sd = sigma * t.sqrt();
    if sd <= 0.0 {
        return 0.0;
    }
    let d1 = (-k + r * t + 0.5 * sd * sd) / sd;
    let d2 = d1 - sd;
    let n = std_normal();
    n.cdf(d1) - (k - r * t).exp() * n.cdf(d2) - intrinsic
}

/// `Φ(w - i)` for Black-Scholes returns with martingale drift.
pub fn bs_shifted_char(w: f64, t: f64, sigma: f64) -> Complex64 {
    let v = sigma * sigma * t;
    Complex64::new(-0.5 * v * w * w, 0.5 * v * w).exp()
}

/// Volatility of the Black-Scholes curve whose at-the-money time value is `z_atm`.
pub fn atm_implied_vol(z_atm: f64, t: f64) -> Option<f64> {
    if !(z_atm > 1e-12 && z_atm < 1.0) || !(t > 0.0) {
        return None;
    }
    // At k = rT the time value is 2N(σ√T/2) - 1.
    let x = std_normal().inverse_cdf(0.5 * (1.0 + z_atm));
    let sigma = 2.0 * x / t.sqrt();
    (sigma.is_finite() && sigma > 0.0).then_some(sigma)
}

/// `ζ(w) = e^{iwrT} (Φ(w - i) - 1) / (iw(1 + iw))`.
pub fn zeta(w: f64, phi_shifted: Complex64, r: f64, t: f64) -> Result<Complex64> {
    if w.abs() < 1e-12 {
        return Err(Error::DivisionNearZero(w));
    }
    let iw = Complex64::new(0.0, w);
    Ok(Complex64::from_polar(1.0, w * r * t) * (phi_shifted - 1.0) / (iw * (1.0 + iw)))
}

/// Normalized call price `c̃ = z + (1 - e^{k - rT})⁺`, floored at zero.
pub fn call_price(k: f64, z: f64, r: f64, t: f64) -> f64 {
    (z + (1.0 - (k - r * t).exp()).max(0.0)).max(0.0)
}

/// Time values of a model on the grid's k-nodes.
#[derive(Debug, Clone)]
pub struct TimeValueCurve {
    grid: SpectralGrid,
    r: f64,
    t: f64,
    ref_vol: f64,
    points: Vec<TimeValuePoint>,
    // z minus the reference Black-Scholes time value; smooth in k.
    residual: Vec<f64>,
}

impl TimeValueCurve {
    pub fn points(&self) -> &[TimeValuePoint] {
        &self.points
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn reference_vol(&self) -> f64 {
        self.ref_vol
    }

    pub fn z_values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.z).collect()
    }

    /// Time value at an arbitrary log-strike: exact reference curve plus a
    /// cubic interpolant of the smooth residual. Zero outside the grid.
    pub fn at(&self, k: f64) -> f64 {
        let g = &self.grid;
        let pos = k / g.dk() + (g.n / 2) as f64;
        if !(pos >= 0.0 && pos <= (g.n - 1) as f64) {
            return 0.0;
        }
        let base = (pos.floor() as usize).clamp(1, g.n - 3);
        let u = pos - base as f64;
        let y = |i: usize| self.residual[i];
        // Cubic Lagrange through nodes base-1 .. base+2.
        let (p0, p1, p2, p3) = (y(base - 1), y(base), y(base + 1), y(base + 2));
        let l0 = -u * (u - 1.0) * (u - 2.0) / 6.0;
        let l1 = (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0;
        let l2 = -(u + 1.0) * u * (u - 2.0) / 2.0;
        let l3 = (u + 1.0) * u * (u - 1.0) / 6.0;
        let residual = p0 * l0 + p1 * l1 + p2 * l2 + p3 * l3;
        bs_time_value(k, self.r, self.t, self.ref_vol) + residual
    }

    /// Normalized call prices on the k-nodes.
    pub fn prices(&self) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .map(|p| (p.k, call_price(p.k, p.z, self.r, self.t)))
            .collect()
    }
}

/// Time values implied by an arbitrary shifted characteristic function
/// `w ↦ Φ(w - i)`. `ref_vol` selects the Black-Scholes control curve; the
/// result does not depend on it beyond discretization error.
pub fn time_value_curve_from<F>(
    phi_shifted: F,
    t: f64,
    r: f64,
    grid: &SpectralGrid,
    ref_vol: f64,
) -> Result<TimeValueCurve>
where
    F: Fn(f64) -> Result<Complex64>,
{
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("maturity T = {t}")));
    }
    if !(ref_vol > 0.0 && ref_vol.is_finite()) {
        return Err(Error::InvalidParameter(format!("reference volatility {ref_vol}")));
    }
    let fourier = Fourier::new(*grid);
    let mut diff = Vec::with_capacity(grid.n);
    for j in 0..grid.n {
        let w = grid.w(j);
        let phi = phi_shifted(w)?;
        if !(phi.re.is_finite() && phi.im.is_finite()) {
            return Err(Error::NonFinite(format!("Φ({w} - i)")));
        }
        let control = bs_shifted_char(w, t, ref_vol);
        // ζ - ζ_BS, sharing the pole-free factor.
        diff.push(zeta(w, phi - control + 1.0, r, t)?);
    }
    let out = fourier.inverse(&diff);
    let residue = out.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
    if residue > RESIDUE_LIMIT {
        return Err(Error::ResidueTooLarge {
            residue,
            limit: RESIDUE_LIMIT,
        });
    }
    let residual: Vec<f64> = out.iter().map(|c| c.re).collect();
    let points = (0..grid.n)
        .map(|m| {
            let k = grid.k(m);
            TimeValuePoint {
                k,
                z: bs_time_value(k, r, t, ref_vol) + residual[m],
            }
        })
        .collect();
    Ok(TimeValueCurve {
        grid: *grid,
        r,
        t,
        ref_vol,
        points,
        residual,
    })
}

/// Time values of a martingale triplet on the grid's k-nodes.
pub fn time_value_curve(
    triplet: &LevyTriplet,
    t: f64,
    r: f64,
    grid: &SpectralGrid,
) -> Result<TimeValueCurve> {
    let ref_vol = triplet.total_volatility()?.max(1e-3);
    time_value_curve_from(
        |w| char_fn(Complex64::new(w, -1.0), triplet, t),
        t,
        r,
        grid,
        ref_vol,
    )
}

/// Reference volatility read off the node closest to the kink at `k = rT`.
fn reference_vol_from_samples(z: &[f64], r: f64, t: f64, grid: &SpectralGrid) -> Option<f64> {
    let m = grid.k_index(r * t)?;
    atm_implied_vol(z[m], t)
}

/// Empirical `Φ*(w - i) = 1 + e^{-iwrT} iw(1 + iw) F[z](w)` from time
/// values sampled on the grid's k-nodes.
pub fn phi_from_time_values(
    z: &[f64],
    r: f64,
    t: f64,
    grid: &SpectralGrid,
) -> Result<Vec<SpectralPoint>> {
    phi_from_time_values_with(&Fourier::new(*grid), z, r, t)
}

/// As [`phi_from_time_values`], reusing prepared FFT plans.
pub fn phi_from_time_values_with(
    fourier: &Fourier,
    z: &[f64],
    r: f64,
    t: f64,
) -> Result<Vec<SpectralPoint>> {
    let grid = fourier.grid();
    if z.len() != grid.n {
        return Err(Error::LengthMismatch(z.len(), grid.n));
    }
    let ref_vol = reference_vol_from_samples(z, r, t, grid);
    let shifted: Vec<Complex64> = (0..grid.n)
        .map(|m| {
            let control = ref_vol.map_or(0.0, |s| bs_time_value(grid.k(m), r, t, s));
            Complex64::new(z[m] - control, 0.0)
        })
        .collect();
    let transformed = fourier.forward(&shifted);
    let out = (0..grid.n)
        .map(|j| {
            let w = grid.w(j);
            let iw = Complex64::new(0.0, w);
            let factor = Complex64::from_polar(1.0, -w * r * t) * iw * (1.0 + iw);
            // Closed-form transform of the control curve enters as Φ_BS - 1.
            let control = ref_vol.map_or(Complex64::new(0.0, 0.0), |s| bs_shifted_char(w, t, s) - 1.0);
            SpectralPoint {
                w,
                value: 1.0 + control + factor * transformed[j],
            }
        })
        .collect();
    Ok(out)
}

/// Bins scattered `(k, z)` samples onto the grid's k-nodes.
///
/// Each node takes the mean of the samples in its bin, each shifted to the
/// node along a Black-Scholes curve of matching at-the-money level. Empty
/// bins between populated ones are filled linearly and nodes outside the
/// sampled span are zero. Fails when the samples cover less than half of the region where a
/// Black-Scholes curve of matching at-the-money level exceeds `1e-4`.
pub fn regrid_time_values(
    samples: &[TimeValuePoint],
    grid: &SpectralGrid,
    r: f64,
    t: f64,
) -> Result<Vec<f64>> {
    let n = grid.n;
    let mut sum = vec![0.0; n];
    let mut count = vec![0usize; n];
    for s in samples {
        if let Some(m) = grid.k_index(s.k) {
            sum[m] += s.z;
            count[m] += 1;
        }
    }
    let filled: Vec<usize> = (0..n).filter(|&m| count[m] > 0).collect();
    if samples.len() < 2 || filled.is_empty() {
        return Err(Error::InsufficientSupport {
            covered: 0.0,
            required: f64::NAN,
        });
    }
    let mut out = vec![0.0; n];
    for &m in &filled {
        out[m] = sum[m] / count[m] as f64;
    }
    // Move each sample from its own k to the node along a Black-Scholes
    // curve before averaging, so the within-bin position does not leak in.
    let ref_vol = reference_vol_from_samples(&out, r, t, grid);
    if let Some(sigma) = ref_vol {
        sum.iter_mut().for_each(|v| *v = 0.0);
        for s in samples {
            if let Some(m) = grid.k_index(s.k) {
                sum[m] += s.z - bs_time_value(s.k, r, t, sigma);
            }
        }
        for &m in &filled {
            out[m] = sum[m] / count[m] as f64 + bs_time_value(grid.k(m), r, t, sigma);
        }
    }
    for pair in filled.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        for m in a + 1..b {
            let u = (m - a) as f64 / (b - a) as f64;
            out[m] = out[a] * (1.0 - u) + out[b] * u;
        }
    }

    let lo = grid.k(filled[0]);
    let hi = grid.k(*filled.last().unwrap());
    if let Some(sigma) = ref_vol {
        let region: Vec<f64> = grid
            .k_nodes()
            .into_iter()
            .filter(|&k| bs_time_value(k, r, t, sigma) > 1e-4)
            .collect();
        if let (Some(&a), Some(&b)) = (region.first(), region.last()) {
            let required = b - a;
            let covered = (hi.min(b) - lo.max(a)).max(0.0);
            if required > 0.0 && covered < 0.5 * required {
                return Err(Error::InsufficientSupport { covered, required });
            }
        }
    }
    Ok(out)
}

type CharFn<'a> = &'a dyn Fn(Complex64) -> Result<Complex64>;

/// Both sides of the Plancherel identity for two characteristic functions:
/// `(∫|Φ_a(w-i) - Φ_b(w-i)|² dw,  2π ∫(e^x ρ_a - e^x ρ_b)² dx)`, with the
/// densities recovered by inverting the unshifted `Φ(w)`. The `x` integral
/// is restricted to `|x| <= x_window` so that `e^x` does not amplify
/// round-off in the far tails.
pub fn plancherel_gap(
    phi_a: CharFn<'_>,
    phi_b: CharFn<'_>,
    grid: &SpectralGrid,
    x_window: f64,
) -> Result<(f64, f64)> {
    let fourier = Fourier::new(*grid);
    let mut lhs = 0.0;
    let mut unshifted = Vec::with_capacity(grid.n);
    for j in 0..grid.n {
        let w = grid.w(j);
        let a = phi_a(Complex64::new(w, -1.0))?;
        let b = phi_b(Complex64::new(w, -1.0))?;
        lhs += grid.weight(j) * (a - b).norm_sqr() * grid.dw;
        unshifted.push(phi_a(Complex64::new(w, 0.0))? - phi_b(Complex64::new(w, 0.0))?);
    }
    let rho_gap = fourier.inverse(&unshifted);
    let dk = grid.dk();
    let mut rhs = 0.0;
    let inside: Vec<usize> = (0..grid.n).filter(|&m| grid.k(m).abs() <= x_window).collect();
    for (pos, &m) in inside.iter().enumerate() {
        let x = grid.k(m);
        let end = if pos == 0 || pos + 1 == inside.len() { 0.5 } else { 1.0 };
        let g = x.exp() * rho_gap[m].re;
        rhs += end * g * g * dk;
    }
    Ok((lhs, 2.0 * PI * rhs))
}

/// Target values `Φ*(w - i)` on every w-node of a grid, at maturity `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralTarget {
    grid: SpectralGrid,
    t: f64,
    values: Vec<Complex64>,
}

impl SpectralTarget {
    pub fn new(grid: SpectralGrid, t: f64, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.n {
            return Err(Error::LengthMismatch(values.len(), grid.n));
        }
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidParameter(format!("maturity T = {t}")));
        }
        if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::NonFinite("target Φ* contains non-finite values".into()));
        }
        Ok(Self { grid, t, values })
    }

    pub fn from_points(grid: SpectralGrid, t: f64, points: &[SpectralPoint]) -> Result<Self> {
        Self::new(grid, t, points.iter().map(|p| p.value).collect())
    }

    /// Pointwise mean of several targets sharing grid and maturity.
    pub fn mean(targets: &[SpectralTarget]) -> Result<Self> {
        let first = targets.first().ok_or(Error::EmptyPool)?;
        let mut acc = vec![Complex64::new(0.0, 0.0); first.grid.n];
        for tgt in targets {
            if tgt.grid != first.grid || tgt.t != first.t {
                return Err(Error::InvalidParameter(
                    "targets differ in grid or maturity".into(),
                ));
            }
            for (a, v) in acc.iter_mut().zip(&tgt.values) {
                *a += v;
            }
        }
        let scale = 1.0 / targets.len() as f64;
        acc.iter_mut().for_each(|a| *a *= scale);
        Self::new(first.grid, first.t, acc)
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn maturity(&self) -> f64 {
        self.t
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn points(&self) -> Vec<SpectralPoint> {
        (0..self.grid.n)
            .map(|j| SpectralPoint {
                w: self.grid.w(j),
                value: self.values[j],
            })
            .collect()
    }

    /// Trapezoid weights (including `dw`) for the nodes with `|w| <= window`,
    /// as `(index, weight)` pairs.
    pub fn window_weights(&self, window: f64) -> Vec<(usize, f64)> {
        let idx: Vec<usize> = (0..self.grid.n)
            .filter(|&j| self.grid.w(j).abs() <= window)
            .collect();
        idx.iter()
            .enumerate()
            .map(|(pos, &j)| {
                let end = if pos == 0 || pos + 1 == idx.len() { 0.5 } else { 1.0 };
                (j, end * self.grid.dw)
            })
            .collect()
    }

    /// `∫_{|w| <= window} |Φ(w - i) - Φ*(w - i)|² dw` by the trapezoid rule.
    pub fn l2_loss<F>(&self, window: f64, phi_shifted: F) -> Result<f64>
    where
        F: Fn(f64) -> Result<Complex64>,
    {
        let mut total = 0.0;
        for (j, q) in self.window_weights(window) {
            let d = phi_shifted(self.grid.w(j))? - self.values[j];
            total += q * d.norm_sqr();
        }
        if !total.is_finite() {
            return Err(Error::NonFinite("spectral loss".into()));
        }
        Ok(total)
    }
}

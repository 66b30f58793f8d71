//! Virtual markets, data amplification and quote ingestion.

use std::io::Read;

use chrono::{Datelike, NaiveDate, Weekday};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levy_models::{cumulants, JumpModel, LevyTriplet, ParametricModel};
use crate::spectral::{
    phi_from_time_values_with, regrid_time_values, time_value_curve, Fourier, SpectralGrid,
    SpectralPoint, SpectralTarget, TimeValuePoint,
};

pub const TRADING_DAYS: f64 = 252.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionQuote {
    pub strike: f64,
    pub spot: f64,
    pub maturity: f64,
    pub price: f64,
    pub is_call: bool,
    pub volume: u64,
    pub trade_date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketSlice {
    pub label: String,
    pub t: f64,
    pub r: f64,
    pub samples: Vec<TimeValuePoint>,
    /// `Φ*(w - i)` on the grid's w-nodes once [`MarketSlice::transform`] ran.
    pub spectral: Option<Vec<SpectralPoint>>,
}

impl MarketSlice {
    pub fn new(label: impl Into<String>, t: f64, r: f64, samples: Vec<TimeValuePoint>) -> Self {
        Self {
            label: label.into(),
            t,
            r,
            samples,
            spectral: None,
        }
    }

    /// Regrids the samples and fills `spectral` with the empirical `Φ*`.
    pub fn transform(&mut self, fourier: &Fourier) -> Result<()> {
        let z = regrid_time_values(&self.samples, fourier.grid(), self.r, self.t)?;
        self.spectral = Some(phi_from_time_values_with(fourier, &z, self.r, self.t)?);
        Ok(())
    }

    pub fn target(&self, grid: &SpectralGrid) -> Result<SpectralTarget> {
        let points = self.spectral.as_ref().ok_or_else(|| {
            Error::InvalidParameter(format!("slice '{}' has not been transformed", self.label))
        })?;
        SpectralTarget::from_points(*grid, self.t, points)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub scale: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            scale: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StrikeSampler {
    Uniform { lo: f64, hi: f64 },
    Fixed { k: Vec<f64> },
}

impl Default for StrikeSampler {
    fn default() -> Self {
        StrikeSampler::Uniform { lo: -0.4, hi: 0.4 }
    }
}

impl StrikeSampler {
    fn draw(&self, rng: &mut ChaCha8Rng, count: usize) -> Result<Vec<f64>> {
        match self {
            StrikeSampler::Uniform { lo, hi } => {
                if !(lo < hi) {
                    return Err(Error::InvalidParameter(format!("strike range [{lo}, {hi}]")));
                }
                Ok((0..count).map(|_| rng.random_range(*lo..*hi)).collect())
            }
            StrikeSampler::Fixed { k } => {
                if k.is_empty() {
                    return Err(Error::InvalidParameter("empty strike list".into()));
                }
                Ok((0..count).map(|i| k[i % k.len()]).collect())
            }
        }
    }
}

fn day_rng(seed: u64, day: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(day as u64);
    rng
}

/// Noisy time values `z* = max(z(k) + ε, 0)`, `ε ~ N(0, (scale·z(k))²)`,
/// for `per_day` strikes on each of `days` days.
#[allow(clippy::too_many_arguments)]
pub fn generate_virtual_market(
    model: &LevyTriplet,
    days: usize,
    per_day: usize,
    t: f64,
    r: f64,
    sampler: &StrikeSampler,
    noise: &NoiseSpec,
    grid: &SpectralGrid,
) -> Result<Vec<MarketSlice>> {
    if !(noise.scale >= 0.0 && noise.scale.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise scale {}", noise.scale)));
    }
    let curve = time_value_curve(model, t, r, grid)?;
    (0..days)
        .map(|day| {
            let mut rng = day_rng(noise.seed, day);
            let ks = sampler.draw(&mut rng, per_day)?;
            let samples = ks
                .into_iter()
                .map(|k| {
                    let z = curve.at(k);
                    let eps: f64 = rng.sample(StandardNormal);
                    TimeValuePoint {
                        k,
                        z: (z + noise.scale * z * eps).max(0.0),
                    }
                })
                .collect();
            Ok(MarketSlice::new(format!("day{day}"), t, r, samples))
        })
        .collect()
}

/// Pools every sample and redraws `n_groups` groups of `group_size`.
///
/// Draws are uniform with replacement, except that a single group as large
/// as the pool is a permutation of it.
pub fn amplify(
    slices: &[MarketSlice],
    n_groups: usize,
    group_size: usize,
    seed: u64,
) -> Result<Vec<MarketSlice>> {
    let first = slices.first().ok_or(Error::EmptyPool)?;
    let (t, r) = (first.t, first.r);
    if let Some(s) = slices.iter().find(|s| s.t != t) {
        return Err(Error::MixedMaturities(t, s.t));
    }
    if slices.iter().any(|s| s.r != r) {
        return Err(Error::InvalidParameter("slices differ in interest rate".into()));
    }
    let pool: Vec<TimeValuePoint> = slices.iter().flat_map(|s| s.samples.iter().copied()).collect();
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if n_groups == 1 && group_size == pool.len() {
        let mut perm = pool;
        perm.shuffle(&mut rng);
        return Ok(vec![MarketSlice::new("group0", t, r, perm)]);
    }
    Ok((0..n_groups)
        .map(|g| {
            let samples = (0..group_size)
                .map(|_| pool[rng.random_range(0..pool.len())])
                .collect();
            MarketSlice::new(format!("group{g}"), t, r, samples)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuoteFilter {
    pub min_volume: u64,
    pub min_price: f64,
}

impl Default for QuoteFilter {
    fn default() -> Self {
        Self {
            min_volume: 100,
            min_price: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestCounts {
    pub kept: usize,
    pub dropped: usize,
}

#[derive(Debug, Deserialize)]
struct QuoteRow {
    trade_date: String,
    expiry_date: String,
    strike: f64,
    spot: f64,
    is_call: u8,
    price: f64,
    volume: u64,
}

/// Weekdays in `(from, to]`.
pub fn business_days(from: NaiveDate, to: NaiveDate) -> i64 {
    if to <= from {
        return 0;
    }
    let total = (to - from).num_days();
    let weeks = total / 7;
    let mut count = weeks * 5;
    let mut day = from + chrono::Duration::days(weeks * 7);
    while day < to {
        day = day.succ_opt().expect("date in range");
        if !matches!(day.weekday(), Weekday::Sat | Weekday::Sun) {
            count += 1;
        }
    }
    count
}

/// Reads quotes from CSV with header
/// `trade_date,expiry_date,strike,spot,is_call,price,volume`.
pub fn ingest_quotes<R: Read>(
    input: R,
    filter: &QuoteFilter,
) -> Result<(Vec<OptionQuote>, IngestCounts)> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers()?.clone();
    let expected = ["trade_date", "expiry_date", "strike", "spot", "is_call", "price", "volume"];
    if !headers.is_empty() && headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Parse {
            line: 1,
            message: format!("unexpected header {:?}", headers.iter().collect::<Vec<_>>()),
        });
    }
    let mut quotes = Vec::new();
    let mut counts = IngestCounts::default();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let row: QuoteRow = record.deserialize(Some(&headers)).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let parse_date = |s: &str| {
            NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| Error::Parse {
                line,
                message: format!("date '{s}': {e}"),
            })
        };
        let trade = parse_date(&row.trade_date)?;
        let expiry = parse_date(&row.expiry_date)?;
        if row.is_call > 1 {
            return Err(Error::Parse {
                line,
                message: format!("is_call must be 0 or 1, got {}", row.is_call),
            });
        }
        if !(row.strike > 0.0 && row.spot > 0.0 && row.price > 0.0) {
            return Err(Error::Parse {
                line,
                message: "strike, spot and price must be positive".into(),
            });
        }
        let days = business_days(trade, expiry);
        if days <= 0 {
            return Err(Error::Parse {
                line,
                message: "expiry must follow the trade date".into(),
            });
        }
        if row.volume < filter.min_volume || row.price < filter.min_price {
            counts.dropped += 1;
            continue;
        }
        counts.kept += 1;
        quotes.push(OptionQuote {
            strike: row.strike,
            spot: row.spot,
            maturity: days as f64 / TRADING_DAYS,
            price: row.price,
            is_call: row.is_call == 1,
            volume: row.volume,
            trade_date: trade,
        });
    }
    Ok((quotes, counts))
}

/// Converts quotes sharing one maturity into time values. Puts go through
/// put-call parity; negative time values are clamped to zero and counted.
pub fn to_time_values(
    quotes: &[OptionQuote],
    r: f64,
    label: &str,
) -> Result<(MarketSlice, usize)> {
    let first = quotes.first().ok_or(Error::EmptyPool)?;
    let t = first.maturity;
    let mut clamped = 0;
    let mut samples = Vec::with_capacity(quotes.len());
    for q in quotes {
        if (q.maturity - t).abs() > 1e-12 {
            return Err(Error::MixedMaturities(t, q.maturity));
        }
        let call = if q.is_call {
            q.price
        } else {
            q.price + q.spot - q.strike * (-r * t).exp()
        };
        let k = (q.strike / q.spot).ln();
        let z = call / q.spot - (1.0 - (k - r * t).exp()).max(0.0);
        if z < 0.0 {
            clamped += 1;
        }
        samples.push(TimeValuePoint { k, z: z.max(0.0) });
    }
    Ok((MarketSlice::new(label, t, r, samples), clamped))
}

/// Mean, standard deviation, skewness and excess kurtosis of one horizon.
/// The last two are `None` when the spread is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub std_dev: f64,
    pub skewness: Option<f64>,
    pub excess_kurtosis: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    /// Horizon in steps of the price series.
    pub horizon: usize,
    pub count: usize,
    pub empirical: Moments,
    pub levy: Option<Moments>,
    pub gaussian: Option<Moments>,
}

fn sample_moments(x: &[f64]) -> Moments {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let spread = m2 > 0.0 && m2 > 1e-28 * mean * mean;
    Moments {
        mean,
        std_dev: m2.sqrt(),
        skewness: spread.then(|| m3 / m2.powf(1.5)),
        excess_kurtosis: spread.then(|| m4 / (m2 * m2) - 3.0),
    }
}

/// Moments of non-overlapping log-returns at each horizon, with the
/// predictions of `theory` (a Lévy triplet per unit time, sampled every
/// `dt`) and of a Gaussian with the same variance.
pub fn moment_table(
    prices: &[f64],
    horizons: &[usize],
    theory: Option<(&LevyTriplet, f64)>,
) -> Result<Vec<MomentRow>> {
    if prices.iter().any(|p| !(p > &0.0 && p.is_finite())) {
        return Err(Error::InvalidParameter("prices must be positive".into()));
    }
    let logs: Vec<f64> = prices.iter().map(|p| p.ln()).collect();
    horizons
        .iter()
        .map(|&h| {
            if h == 0 || h >= prices.len() {
                return Err(Error::InvalidParameter(format!(
                    "horizon {h} outside 1..{}",
                    prices.len()
                )));
            }
            let returns: Vec<f64> = (0..(logs.len() - 1) / h)
                .map(|i| logs[(i + 1) * h] - logs[i * h])
                .collect();
            let (levy, gaussian) = match theory {
                Some((triplet, dt)) => {
                    let c = cumulants(triplet, dt * h as f64)?;
                    let levy = Moments {
                        mean: c.mean(),
                        std_dev: c.std_dev(),
                        skewness: Some(c.skewness()),
                        excess_kurtosis: Some(c.excess_kurtosis()),
                    };
                    let gaussian = Moments {
                        skewness: Some(0.0),
                        excess_kurtosis: Some(0.0),
                        ..levy
                    };
                    (Some(levy), Some(gaussian))
                }
                None => (None, None),
            };
            Ok(MomentRow {
                horizon: h,
                count: returns.len(),
                empirical: sample_moments(&returns),
                levy,
                gaussian,
            })
        })
        .collect()
}

/// Price path `S_j = s0·exp(X_{j·dt})` of a parametric exponential Lévy model.
pub fn simulate_path(
    model: &ParametricModel,
    steps: usize,
    dt: f64,
    s0: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    let triplet = model.triplet()?;
    let lambda = model.lambda();
    let mean_jump = match model.jumps {
        JumpModel::Merton(m) => m.mu,
        JumpModel::Kou(k) => k.p / k.lambda_plus - (1.0 - k.p) / k.lambda_minus,
    };
    // κ₁ = b + ∫x·1_{|x|>1}ν, so the continuous part drifts at κ₁ - λE[J]
    let drift = (cumulants(&triplet, 1.0)?.k1 - lambda * mean_jump) * dt;
    let vol = triplet.sigma * dt.sqrt();
    let poisson = if lambda * dt > 0.0 {
        Some(Poisson::new(lambda * dt).map_err(|e| Error::InvalidParameter(e.to_string()))?)
    } else {
        None
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut path = Vec::with_capacity(steps + 1);
    let mut x = 0.0;
    path.push(s0);
    for _ in 0..steps {
        let z: f64 = rng.sample(StandardNormal);
        x += drift + vol * z;
        if let Some(p) = &poisson {
            let count = p.sample(&mut rng) as usize;
            for _ in 0..count {
                x += sample_jump(&model.jumps, &mut rng)?;
            }
        }
        path.push(s0 * x.exp());
    }
    Ok(path)
}

fn sample_jump(jumps: &JumpModel, rng: &mut ChaCha8Rng) -> Result<f64> {
    let bad = |e: String| Error::InvalidParameter(e);
    Ok(match jumps {
        JumpModel::Merton(m) => Normal::new(m.mu, m.delta).map_err(|e| bad(e.to_string()))?.sample(rng),
        JumpModel::Kou(k) => {
            if rng.random::<f64>() < k.p {
                Exp::new(k.lambda_plus).map_err(|e| bad(e.to_string()))?.sample(rng)
            } else {
                -Exp::new(k.lambda_minus).map_err(|e| bad(e.to_string()))?.sample(rng)
            }
        }
    })
}

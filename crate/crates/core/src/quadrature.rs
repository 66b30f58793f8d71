//! Globally adaptive 15-point Gauss-Kronrod integration.

use num_complex::Complex64;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5, 7).
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_94,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
    /// Upper bound on the initial piece length, in units of one period of
    /// the oscillation frequency supplied to [`integrate_complex`].
    pub max_periods_per_piece: f64,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-13,
            rel_tol: 1e-12,
            max_intervals: 20_000,
            max_periods_per_piece: 1.0,
        }
    }
}

struct Piece {
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64) -> Piece {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kron += pair * WGK[j];
        if j % 2 == 1 {
            gauss += pair * WG[j / 2];
        }
    }
    let value = kron * half;
    let error = ((kron - gauss) * half).norm();
    Piece { a, b, value, error }
}

/// Integrates `f` over `[lo, hi]`, splitting first at every breakpoint
/// inside the range and then into pieces short enough to resolve an
/// oscillation of angular frequency `omega`.
pub fn integrate_complex<F>(
    f: F,
    lo: f64,
    hi: f64,
    breakpoints: &[f64],
    omega: f64,
    opts: &QuadOptions,
) -> Result<Complex64>
where
    F: Fn(f64) -> Complex64,
{
    if !(lo.is_finite() && hi.is_finite()) || hi < lo {
        return Err(Error::InvalidParameter(format!(
            "integration range [{lo}, {hi}]"
        )));
    }
    if hi == lo {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let mut cuts: Vec<f64> = vec![lo];
    cuts.extend(breakpoints.iter().copied().filter(|&c| c > lo && c < hi));
    cuts.push(hi);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let period = if omega.abs() > 1.0 {
        2.0 * std::f64::consts::PI / omega.abs()
    } else {
        2.0 * std::f64::consts::PI
    };
    let max_len = period * opts.max_periods_per_piece;

    let mut heap = BinaryHeap::new();
    for win in cuts.windows(2) {
        let (a, b) = (win[0], win[1]);
        let pieces = ((b - a) / max_len).ceil().max(1.0) as usize;
        let step = (b - a) / pieces as f64;
        for i in 0..pieces {
            let pa = a + step * i as f64;
            let pb = if i + 1 == pieces { b } else { pa + step };
            heap.push(kronrod(&f, pa, pb));
        }
    }

    let mut total = heap.iter().fold(Complex64::new(0.0, 0.0), |s, p| s + p.value);
    let mut err: f64 = heap.iter().map(|p| p.error).sum();
    loop {
        if !(total.re.is_finite() && total.im.is_finite()) {
            return Err(Error::NonFinite("quadrature produced a non-finite sum".into()));
        }
        if err <= opts.abs_tol.max(opts.rel_tol * total.norm()) {
            // Re-sum to shed drift from the incremental updates.
            return Ok(heap.iter().fold(Complex64::new(0.0, 0.0), |s, p| s + p.value));
        }
        if heap.len() >= opts.max_intervals {
            return Err(Error::NonFinite(format!(
                "quadrature did not converge (error estimate {err:e})"
            )));
        }
        let worst = heap.pop().expect("heap is never empty here");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval can no longer be split in floating point.
            err -= worst.error;
            heap.push(Piece { error: 0.0, ..worst });
            continue;
        }
        let left = kronrod(&f, worst.a, mid);
        let right = kronrod(&f, mid, worst.b);
        total += left.value + right.value - worst.value;
        err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
}

/// Real-valued convenience wrapper around [`integrate_complex`].
pub fn integrate<F>(f: F, lo: f64, hi: f64, breakpoints: &[f64], opts: &QuadOptions) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    integrate_complex(|x| Complex64::new(f(x), 0.0), lo, hi, breakpoints, 0.0, opts).map(|c| c.re)
}

//! Trigonometric series and uniform physical grids.
//!
//! Every field is handled as a zero-mean real trigonometric polynomial on its
//! full period (`L` periodic, `2L` for the even Neumann extension). Grids
//! always sample the full period at `x_m = m P / M`.

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::cell::RefCell;
use std::sync::Arc;

use super::SpectralError;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Forward and inverse plans for one grid size, cached per thread.
pub(crate) fn plans(m: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(m), p.plan_fft_inverse(m))
    })
}

/// Zero-mean trigonometric polynomial
/// `f(x) = Σ_k cos_k cos(2πkx/P) + sin_k sin(2πkx/P)`, `k = 1..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigSeries {
    pub period: f64,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl TrigSeries {
    pub fn zeros(period: f64, n: usize) -> Self {
        Self {
            period,
            cos: vec![0.0; n],
            sin: vec![0.0; n],
        }
    }

    pub fn modes(&self) -> usize {
        self.cos.len()
    }

    #[inline]
    pub fn q(&self, k: usize) -> f64 {
        2.0 * std::f64::consts::PI * k as f64 / self.period
    }

    /// `order`-th derivative, applied coefficient-wise.
    pub fn derivative(&self, order: u32) -> TrigSeries {
        let mut out = self.clone();
        for k in 1..=self.modes() {
            let q = self.q(k);
            let (mut a, mut b) = (self.cos[k - 1], self.sin[k - 1]);
            for _ in 0..order {
                // d/dx (a cos + b sin) = q b cos - q a sin
                let na = q * b;
                let nb = -q * a;
                a = na;
                b = nb;
            }
            out.cos[k - 1] = a;
            out.sin[k - 1] = b;
        }
        out
    }

    /// Multiply mode `k` (both partners) by `weight(k)`.
    pub fn map_modes(&self, weight: impl Fn(usize) -> f64) -> TrigSeries {
        let mut out = self.clone();
        for k in 1..=self.modes() {
            let w = weight(k);
            out.cos[k - 1] *= w;
            out.sin[k - 1] *= w;
        }
        out
    }

    /// Point evaluation by direct summation.
    pub fn eval(&self, x: f64) -> f64 {
        (1..=self.modes())
            .map(|k| {
                let (s, c) = (self.q(k) * x).sin_cos();
                self.cos[k - 1] * c + self.sin[k - 1] * s
            })
            .sum()
    }

    /// Samples on `m` uniform points of the full period; needs `m ≥ 2n + 1`.
    pub fn to_grid(&self, m: usize) -> Result<Vec<f64>, SpectralError> {
        let n = self.modes();
        if m < 2 * n + 1 {
            return Err(SpectralError::Resolution {
                samples: m,
                required: 2 * n + 1,
            });
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); m];
        fill_spectrum(&self.cos, &self.sin, &mut buf);
        let (_, inv) = plans(m);
        inv.process(&mut buf);
        Ok(buf.iter().map(|c| c.re).collect())
    }

    /// Least-squares projection of grid samples onto modes `1..=n`; needs `m > 2n`.
    pub fn from_grid(samples: &[f64], period: f64, n: usize) -> Result<TrigSeries, SpectralError> {
        let m = samples.len();
        if m < 2 * n + 1 {
            return Err(SpectralError::Resolution {
                samples: m,
                required: 2 * n + 1,
            });
        }
        let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        let (fwd, _) = plans(m);
        fwd.process(&mut buf);
        let mut out = TrigSeries::zeros(period, n);
        read_spectrum(&buf, &mut out.cos, &mut out.sin);
        Ok(out)
    }
}

/// Writes `(a_k - i b_k)/2` at `k` and its conjugate at `m - k`.
pub(crate) fn fill_spectrum(cos: &[f64], sin: &[f64], buf: &mut [Complex64]) {
    let m = buf.len();
    for v in buf.iter_mut() {
        *v = Complex64::new(0.0, 0.0);
    }
    for k in 1..=cos.len() {
        let c = Complex64::new(0.5 * cos[k - 1], -0.5 * sin[k - 1]);
        buf[k] = c;
        buf[m - k] = c.conj();
    }
}

/// Inverse of [`fill_spectrum`] for an unnormalized forward transform.
pub(crate) fn read_spectrum(buf: &[Complex64], cos: &mut [f64], sin: &mut [f64]) {
    let scale = 2.0 / buf.len() as f64;
    for k in 1..=cos.len() {
        cos[k - 1] = scale * buf[k].re;
        sin[k - 1] = -scale * buf[k].im;
    }
}

/// How a grid was sized relative to the truncation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Caller-chosen sample count.
    Plain,
    /// At least `3N + 1` samples: quadratic products project exactly.
    Dealiased,
    /// Four times the Nyquist count, for extrema and `L⁴` integrals.
    Oversampled,
}

/// Real samples on a uniform grid covering one full period.
///
/// For Neumann fields the grid covers the even extension on `[0, 2L)`; the
/// physical domain `[0, L]` is its first half.
#[derive(Debug, Clone, PartialEq)]
pub struct GridBuffer {
    pub period: f64,
    pub length: f64,
    pub samples: Vec<f64>,
    pub padding: Padding,
}

impl GridBuffer {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.period / self.samples.len() as f64
    }

    /// Grid abscissae.
    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        let dx = self.spacing();
        (0..self.samples.len()).map(move |m| m as f64 * dx)
    }

    /// `∫_0^L g dx` by the periodic trapezoid rule (exact for band-limited data).
    pub fn mass(&self) -> f64 {
        let full: f64 = self.samples.iter().sum::<f64>() * self.spacing();
        full * self.length / self.period
    }

    /// `∫_0^L |g|^p dx` by the periodic trapezoid rule.
    pub fn integral_pow(&self, p: i32) -> f64 {
        let full: f64 = self.samples.iter().map(|v| v.powi(p)).sum::<f64>() * self.spacing();
        full * self.length / self.period
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Largest violation of `g(x) = g(P - x)`, relative to `max |g|`.
    pub fn even_defect(&self) -> f64 {
        let m = self.samples.len();
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        (1..m)
            .map(|i| (self.samples[i] - self.samples[m - i]).abs())
            .fold(0.0, f64::max)
            / scale
    }
}

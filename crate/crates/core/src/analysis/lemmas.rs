//! Monte Carlo checks of the two technical moment estimates: the short-time
//! scaling of `E‖∂x W_A(t)‖_∞⁴`, and the logarithmic moment inequality
//!
//! ```text
//! E(log(x e^{W₁} + e^{W₂}))² ≤ (log x)² + 2(ε + E W₁) log x + C,   x ≥ 1.
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::stats::Moments;
use crate::integrator::ModelSpec;
use crate::noise::{split_seed, NoiseError, OuPropagator, WienerState};
use crate::spectral::{l4_pow4, sup_norm, BasisSpec, SpectralField, TrigSeries};

/// Samples per parallel work unit; fixed so results do not depend on the pool.
const CHUNK: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LemmaError {
    #[error("time grid must be nonempty with entries in (0, 1], got {0:?}")]
    TimeGrid(Vec<f64>),
    #[error("short-time scan requires all eigenvalues negative; mode {index} has {lambda}")]
    Unstable { index: usize, lambda: f64 },
    #[error("x grid must be nonempty with entries >= 1")]
    XGrid,
    #[error("epsilon must be positive, got {0}")]
    Epsilon(f64),
    #[error("moment precondition violated: E(W1² + W2²) = {found} exceeds K = {k}")]
    Moment { found: f64, k: f64 },
    #[error("need at least two samples")]
    Samples,
    #[error("model: {0}")]
    Model(String),
    #[error(transparent)]
    Noise(#[from] NoiseError),
}

/// Fractional multiplier `(Kf)_j = j^{s} f_j` on mode indices, `s = 3/8`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KWeight {
    pub exponent: f64,
}

impl Default for KWeight {
    fn default() -> Self {
        Self { exponent: 0.375 }
    }
}

impl KWeight {
    pub fn weight(&self, j: usize) -> f64 {
        (j as f64).powf(self.exponent)
    }

    pub fn apply(&self, f: &TrigSeries) -> TrigSeries {
        f.map_modes(|j| self.weight(j))
    }

    /// `K ∘ K`.
    pub fn squared(&self) -> KWeight {
        KWeight {
            exponent: 2.0 * self.exponent,
        }
    }
}

/// Exact sample of `W_A(t)` from `W_A(0) = 0`, in amplitude units.
fn sample_convolution(prop: &OuPropagator, basis: &BasisSpec, seed: u64, out: &mut [f64]) {
    let mut rng = WienerState::new(seed, basis);
    prop.increments(&mut rng, out);
}

fn check_times(times: &[f64]) -> Result<(), LemmaError> {
    if times.is_empty() || times.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
        return Err(LemmaError::TimeGrid(times.to_vec()));
    }
    Ok(())
}

fn check_stable(model: &ModelSpec) -> Result<(), LemmaError> {
    let spec = model.spectrum();
    for j in 1..=spec.len() {
        if spec.get(j) >= 0.0 {
            return Err(LemmaError::Unstable {
                index: j,
                lambda: spec.get(j),
            });
        }
    }
    Ok(())
}

/// Runs `f` on every sample index in fixed chunks and merges the resulting
/// moment vectors in index order.
fn chunked_moments<F>(samples: usize, width: usize, f: F) -> Vec<Moments>
where
    F: Fn(usize, &mut Vec<Moments>) + Sync,
{
    let chunks: Vec<Vec<Moments>> = (0..samples.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![Moments::default(); width];
            for i in c * CHUNK..((c + 1) * CHUNK).min(samples) {
                f(i, &mut acc);
            }
            acc
        })
        .collect();
    chunks
        .iter()
        .fold(vec![Moments::default(); width], |acc, c| {
            acc.iter().zip(c).map(|(a, b)| a.merge(b)).collect()
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub modes: usize,
    /// Estimates of `E‖∂x W_A(t)‖_∞⁴`, one per time.
    pub estimates: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// `max_t estimate / t^{1/8}`
    pub c_hat: f64,
    /// Same maximum with suprema on the 8× grid over the first samples.
    pub c_hat_fine: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma61Report {
    pub times: Vec<f64>,
    pub samples: usize,
    pub rows: Vec<DecayRow>,
    /// `max Ĉ / min Ĉ` across the scanned truncations.
    pub c_variation: f64,
    /// Estimates nondecreasing in `t` on `(0, 0.1]` up to 3 SE, every row.
    pub monotone_short_time: bool,
    pub pass: bool,
}

/// `E‖∂x W_A^N(t)‖_∞⁴` on the time grid for each truncation in `modes`.
///
/// Suprema are taken on the 4×-oversampled grid (`8N` points for periodic
/// fields); `c_hat_fine` repeats the estimate at twice that resolution on
/// `min(samples, 1000)` draws.
pub fn lemma61_experiment(
    times: &[f64],
    samples: usize,
    model: &ModelSpec,
    modes: &[usize],
    seed: u64,
) -> Result<Lemma61Report, LemmaError> {
    check_times(times)?;
    if samples < 2 {
        return Err(LemmaError::Samples);
    }
    let mut rows = Vec::with_capacity(modes.len());
    for &n in modes {
        let m = model
            .with_modes(n)
            .map_err(|e| LemmaError::Model(e.to_string()))?;
        check_stable(&m)?;
        let basis = m.basis;
        let spec = m.spectrum();
        let grid = basis.oversampled_samples();
        let fine_n = samples.min(1000);
        let mut estimates = Vec::new();
        let mut std_errors = Vec::new();
        let mut c_hat: f64 = 0.0;
        let mut c_hat_fine: f64 = 0.0;
        for (ti, &t) in times.iter().enumerate() {
            let prop = OuPropagator::new(&basis, &spec, &m.noise, t)?;
            let mom = chunked_moments(samples, 2, |i, acc| {
                let mut w = vec![0.0; basis.dim()];
                sample_convolution(&prop, &basis, split_seed(seed, (ti * samples + i) as u64), &mut w);
                let f = SpectralField::from_coeffs(basis, w).expect("sized");
                let dx = f.as_series().derivative(1);
                acc[0].push(sup_norm(&dx, grid).powi(4));
                if i < fine_n {
                    acc[1].push(sup_norm(&dx, 2 * grid).powi(4));
                }
            });
            let scale = t.powf(0.125);
            c_hat = c_hat.max(mom[0].mean / scale);
            c_hat_fine = c_hat_fine.max(mom[1].mean / scale);
            estimates.push(mom[0].mean);
            std_errors.push(mom[0].std_error());
        }
        log::info!("lemma61 N = {n}: C = {c_hat:.4} (fine {c_hat_fine:.4})");
        rows.push(DecayRow {
            modes: n,
            estimates,
            std_errors,
            c_hat,
            c_hat_fine,
        });
    }
    let (lo, hi) = rows
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), r| (lo.min(r.c_hat), hi.max(r.c_hat)));
    let c_variation = hi / lo;
    let mut order: Vec<usize> = (0..times.len()).filter(|&i| times[i] <= 0.1).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let monotone_short_time = rows.iter().all(|r| {
        order.windows(2).all(|w| {
            let (a, b) = (w[0], w[1]);
            r.estimates[b] + 3.0 * r.std_errors[a].hypot(r.std_errors[b]) >= r.estimates[a]
        })
    });
    let finite = rows.iter().all(|r| r.c_hat.is_finite() && r.c_hat > 0.0);
    Ok(Lemma61Report {
        times: times.to_vec(),
        samples,
        rows,
        c_variation,
        monotone_short_time,
        pass: finite && c_variation < 2.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KWeightReport {
    pub t: f64,
    pub x: f64,
    /// `E‖K∂x W_A(t)‖₄⁴`
    pub fourth_moment: f64,
    pub fourth_moment_se: f64,
    /// `E|(K∂x W_A)(t, x)|²`
    pub variance: f64,
    pub variance_se: f64,
    /// `Σ α_j² |(K∂x e_j)(x)|² (1 - e^{2λ_j t})/(2|λ_j|)`
    pub variance_oracle: f64,
    /// `variance / t^{1/16}`
    pub variance_ratio: f64,
    /// `fourth_moment / t^{1/8}`
    pub fourth_ratio: f64,
}

/// Mode-sum value of the pointwise variance of `K∂x W_A(t, x)`.
pub fn k_weight_variance_oracle(model: &ModelSpec, k: KWeight, t: f64, x: f64) -> f64 {
    let b = &model.basis;
    let spec = model.spectrum();
    let scale2 = b.amplitude_scale().powi(2);
    (1..=b.modes())
        .map(|j| {
            let q = b.wavenumber(j).unwrap();
            let var = crate::noise::ou_variance(spec.get(j), model.noise.alpha(j), t);
            // ∂x cos = -q sin, ∂x sin = q cos: the partners contribute sin² + cos².
            let shape = match b.boundary() {
                crate::spectral::Boundary::Periodic => 1.0,
                crate::spectral::Boundary::Neumann => (q * x).sin().powi(2),
            };
            var * scale2 * (k.weight(j) * q).powi(2) * shape
        })
        .sum()
}

/// Monte Carlo moments of `K∂x W_A(t)` on `samples` exact draws.
pub fn k_weight_moment(
    t: f64,
    samples: usize,
    model: &ModelSpec,
    x: f64,
    seed: u64,
) -> Result<KWeightReport, LemmaError> {
    check_times(&[t])?;
    if samples < 2 {
        return Err(LemmaError::Samples);
    }
    let k = KWeight::default();
    let basis = model.basis;
    let prop = OuPropagator::new(&basis, &model.spectrum(), &model.noise, t)?;
    let grid = basis.oversampled_samples();
    let mom = chunked_moments(samples, 2, |i, acc| {
        let mut w = vec![0.0; basis.dim()];
        sample_convolution(&prop, &basis, split_seed(seed, i as u64), &mut w);
        let f = SpectralField::from_coeffs(basis, w).expect("sized");
        let g = k.apply(&f.as_series().derivative(1));
        acc[0].push(l4_pow4(&g, basis.length(), grid));
        acc[1].push(g.eval(x).powi(2));
    });
    let variance_oracle = k_weight_variance_oracle(model, k, t, x);
    Ok(KWeightReport {
        t,
        x,
        fourth_moment: mom[0].mean,
        fourth_moment_se: mom[0].std_error(),
        variance: mom[1].mean,
        variance_se: mom[1].std_error(),
        variance_oracle,
        variance_ratio: mom[1].mean / t.powf(1.0 / 16.0),
        fourth_ratio: mom[0].mean / t.powf(0.125),
    })
}

/// Largest `‖f‖_∞/‖Kf‖₄` over random band-limited zero-mean fields whose
/// coefficients decay like `j^{-s}` with `s` drawn from `[0.5, 2]`.
pub fn k_embedding_constant(basis: &BasisSpec, samples: usize, seed: u64) -> f64 {
    let k = KWeight::default();
    let grid = basis.oversampled_samples();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let s: f64 = 0.5 + 1.5 * rand::Rng::random::<f64>(&mut rng);
        let c: Vec<f64> = (0..basis.dim())
            .map(|slot| {
                let g: f64 = StandardNormal.sample(&mut rng);
                g * (basis.mode_of_slot(slot) as f64).powf(-s)
            })
            .collect();
        let f = SpectralField::from_coeffs(*basis, c).expect("sized").as_series();
        let kf = k.apply(&f);
        let r = sup_norm(&f, grid) / l4_pow4(&kf, basis.length(), grid).powf(0.25);
        worst = worst.max(r);
    }
    worst
}

/// Jointly Gaussian `(W₁, W₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPair {
    pub mean: [f64; 2],
    pub sd: [f64; 2],
    pub rho: f64,
}

impl GaussianPair {
    /// Deterministic pair `W₁ = W₂ = 0`.
    pub fn zero() -> Self {
        Self {
            mean: [0.0; 2],
            sd: [0.0; 2],
            rho: 0.0,
        }
    }

    /// Means `±a/2`, unit-scaled deviations `a` and correlation 0.3, with
    /// `a` chosen so that `E(W₁² + W₂²) = k`.
    pub fn with_moment(k: f64) -> Self {
        let a = (k / 2.5).sqrt();
        Self {
            mean: [0.5 * a, -0.5 * a],
            sd: [a, a],
            rho: 0.3,
        }
    }

    pub fn second_moment(&self) -> f64 {
        (0..2).map(|i| self.mean[i].powi(2) + self.sd[i].powi(2)).sum()
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> (f64, f64) {
        let z1: f64 = StandardNormal.sample(rng);
        let z2: f64 = StandardNormal.sample(rng);
        let w1 = self.mean[0] + self.sd[0] * z1;
        let w2 = self.mean[1] + self.sd[1] * (self.rho * z1 + (1.0 - self.rho * self.rho).sqrt() * z2);
        (w1, w2)
    }
}

/// `ε'` with `2ε' + ε' log(1 + ε') = ε`.
pub fn inner_epsilon(eps: f64) -> f64 {
    let g = |e: f64| 2.0 * e + e * e.ln_1p() - eps;
    let (mut lo, mut hi) = (0.0, eps);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Explicit constant for the logarithmic moment inequality.
///
/// The remainder term is at most `6K + 2`. For `x ≥ x₀ = e^{1+2K/ε'}/ε'`
/// the correction `E log(1 + e^{W₂-W₁}/x)` is at most `ε`. Below `x₀` it is
/// at most `log 2 + sqrt(2K)`, which contributes `2 log x₀ (log 2 + sqrt(2K))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma62Constant {
    pub k: f64,
    pub eps: f64,
    pub inner_eps: f64,
    pub log_x0: f64,
    pub c: f64,
}

pub fn lemma62_constant(k: f64, eps: f64) -> Result<Lemma62Constant, LemmaError> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(LemmaError::Epsilon(eps));
    }
    let e = inner_epsilon(eps);
    let log_x0 = 1.0 + 2.0 * k / e - e.ln();
    let c = 6.0 * k + 2.0 + 2.0 * log_x0 * (std::f64::consts::LN_2 + (2.0 * k).sqrt());
    Ok(Lemma62Constant {
        k,
        eps,
        inner_eps: e,
        log_x0,
        c,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma62Row {
    pub x: f64,
    pub lhs: f64,
    pub lhs_se: f64,
    pub rhs: f64,
    /// `rhs - lhs - 3 se`
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma62Report {
    pub constant: Lemma62Constant,
    pub pair: GaussianPair,
    pub samples: usize,
    /// Empirical `E(W₁² + W₂²)`.
    pub second_moment: f64,
    pub mean_w1: f64,
    pub rows: Vec<Lemma62Row>,
    pub min_margin: f64,
    pub pass: bool,
}

/// `log(x e^{a} + e^{b})` without overflow.
fn log_sum(x: f64, a: f64, b: f64) -> f64 {
    let p = x.ln() + a;
    let hi = p.max(b);
    hi + ((p - hi).exp() + (b - hi).exp()).ln()
}

/// Monte Carlo comparison of both sides on a common sample for every `x`.
pub fn lemma62_check(
    xs: &[f64],
    pair: GaussianPair,
    k: f64,
    eps: f64,
    samples: usize,
    seed: u64,
) -> Result<Lemma62Report, LemmaError> {
    if xs.is_empty() || xs.iter().any(|&x| !(x >= 1.0)) {
        return Err(LemmaError::XGrid);
    }
    if samples < 2 {
        return Err(LemmaError::Samples);
    }
    let constant = lemma62_constant(k, eps)?;
    let width = xs.len() + 2;
    let mom = chunked_moments(samples, width, |i, acc| {
        let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, i as u64));
        let (w1, w2) = pair.sample(&mut rng);
        acc[0].push(w1 * w1 + w2 * w2);
        acc[1].push(w1);
        for (j, &x) in xs.iter().enumerate() {
            acc[j + 2].push(log_sum(x, w1, w2).powi(2));
        }
    });
    let second_moment = mom[0].mean;
    if second_moment - 3.0 * mom[0].std_error() > k {
        return Err(LemmaError::Moment {
            found: second_moment,
            k,
        });
    }
    let mean_w1 = mom[1].mean;
    let rows: Vec<Lemma62Row> = xs
        .iter()
        .enumerate()
        .map(|(j, &x)| {
            let lx = x.ln();
            let lhs = mom[j + 2].mean;
            let lhs_se = mom[j + 2].std_error();
            let rhs = lx * lx + 2.0 * (eps + mean_w1) * lx + constant.c;
            Lemma62Row {
                x,
                lhs,
                lhs_se,
                rhs,
                margin: rhs - lhs - 3.0 * lhs_se,
            }
        })
        .collect();
    let min_margin = rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
    Ok(Lemma62Report {
        constant,
        pair,
        samples,
        second_moment,
        mean_w1,
        rows,
        min_margin,
        pass: min_margin >= 0.0,
    })
}

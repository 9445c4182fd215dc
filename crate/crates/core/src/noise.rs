//! Cylindrical Q-Wiener forcing diagonal in the eigenbasis and the
//! stochastic convolution `W_A(t) = ∫_0^t e^{(t-s)A} dW(s)`.
//!
//! Each coefficient slot has its own ChaCha stream, keyed by the trajectory
//! seed and addressed by a stream id that depends only on the mode index and
//! partner (cosine/sine), never on the truncation. Runs at different `N` with
//! the same seed therefore share the noise on their common modes, and the
//! sampled path does not depend on traversal order or worker count.
//!
//! Variances refer to coordinates against the `L²`-orthonormal eigenbasis;
//! amplitudes stored in a [`SpectralField`] are those coordinates times
//! `sqrt(2/L)`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectral::{BasisSpec, Boundary, LinearSpectrum, SpectralField};

/// Below this `|λh|` the variance uses its series limit.
pub const SERIES_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("time step must be positive and finite, got {0}")]
    NonPositiveStep(f64),
    #[error("noise amplitude alpha_{index} = {value} is negative or not finite")]
    InvalidAmplitude { index: usize, value: f64 },
    #[error("power-law exponent {0} would give an unbounded spectrum")]
    UnboundedSpectrum(f64),
    #[error("mode {index} has eigenvalue {lambda} >= 0 and no stationary law")]
    UnstableMode { index: usize, lambda: f64 },
    #[error("noise spectrum has {found} modes, basis needs {expected}")]
    Length { expected: usize, found: usize },
}

/// Noise amplitudes `α_j` per mode index, with the bound `C_α`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpectrum {
    alphas: Vec<f64>,
    bound: f64,
}

impl NoiseSpectrum {
    /// Space-time white noise, `α_j ≡ 1`.
    pub fn white(modes: usize) -> Self {
        Self {
            alphas: vec![1.0; modes],
            bound: 1.0,
        }
    }

    pub fn zero(modes: usize) -> Self {
        Self {
            alphas: vec![0.0; modes],
            bound: 0.0,
        }
    }

    pub fn from_values(alphas: Vec<f64>) -> Result<Self, NoiseError> {
        for (i, &a) in alphas.iter().enumerate() {
            if !(a.is_finite() && a >= 0.0) {
                return Err(NoiseError::InvalidAmplitude {
                    index: i + 1,
                    value: a,
                });
            }
        }
        let bound = alphas.iter().copied().fold(0.0, f64::max);
        Ok(Self { alphas, bound })
    }

    /// `α_j = c j^{-p}` with `p ≥ 0`.
    pub fn power_law(c: f64, p: f64, modes: usize) -> Result<Self, NoiseError> {
        if !(p.is_finite() && p >= 0.0) {
            return Err(NoiseError::UnboundedSpectrum(p));
        }
        Self::from_values((1..=modes).map(|j| c * (j as f64).powf(-p)).collect())
    }

    /// Uniform scaling of every amplitude.
    pub fn scaled(&self, s: f64) -> Result<Self, NoiseError> {
        Self::from_values(self.alphas.iter().map(|a| a * s).collect())
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    /// `α_j`, `j ≥ 1`.
    pub fn alpha(&self, j: usize) -> f64 {
        self.alphas[j - 1]
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn is_zero(&self) -> bool {
        self.bound == 0.0
    }

    fn check(&self, modes: usize) -> Result<(), NoiseError> {
        if self.alphas.len() < modes {
            return Err(NoiseError::Length {
                expected: modes,
                found: self.alphas.len(),
            });
        }
        Ok(())
    }
}

/// Seed of trajectory `index` under master seed `master`.
///
/// The rule is the first 64-bit output of ChaCha8 keyed by `master` on
/// stream `index`, so any subset of trajectories can be regenerated alone.
pub fn split_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.next_u64()
}

/// Stream id of a coefficient slot: `2(j-1)` / `2(j-1)+1` for the periodic
/// cosine / sine partner, `j-1` for Neumann.
pub fn stream_id(basis: &BasisSpec, slot: usize) -> u64 {
    let j = basis.mode_of_slot(slot) as u64;
    match basis.boundary() {
        Boundary::Periodic => {
            let partner = (slot / basis.modes()) as u64;
            2 * (j - 1) + partner
        }
        Boundary::Neumann => j - 1,
    }
}

/// Per-slot Gaussian streams of one trajectory.
#[derive(Debug, Clone)]
pub struct WienerState {
    seed: u64,
    streams: Vec<ChaCha8Rng>,
    /// Time the increments drawn so far extend to.
    pub t: f64,
}

impl WienerState {
    pub fn new(seed: u64, basis: &BasisSpec) -> Self {
        let ids: Vec<u64> = (0..basis.dim()).map(|s| stream_id(basis, s)).collect();
        Self::with_streams(seed, &ids)
    }

    pub fn with_streams(seed: u64, ids: &[u64]) -> Self {
        let base = ChaCha8Rng::seed_from_u64(seed);
        let streams = ids
            .iter()
            .map(|&id| {
                let mut r = base.clone();
                r.set_stream(id);
                r
            })
            .collect();
        Self {
            seed,
            streams,
            t: 0.0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.streams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.streams.is_empty()
    }

    /// One standard normal per stream.
    pub fn draw(&mut self, out: &mut [f64]) {
        for (o, r) in out.iter_mut().zip(self.streams.iter_mut()) {
            *o = StandardNormal.sample(r);
        }
    }

    /// Word position of every stream, the resumable part of the state.
    pub fn positions(&self) -> Vec<u128> {
        self.streams.iter().map(|r| r.get_word_pos()).collect()
    }
}

/// Variance of `∫_0^h e^{λ(h-s)} α dw(s)`: `α² (e^{2λh} - 1)/(2λ)`.
pub fn ou_variance(lambda: f64, alpha: f64, h: f64) -> f64 {
    let z = lambda * h;
    let a2 = alpha * alpha;
    if z.abs() < SERIES_THRESHOLD {
        a2 * h * (1.0 + z)
    } else {
        a2 * (2.0 * z).exp_m1() / (2.0 * lambda)
    }
}

/// Stationary variance `α²/(2|λ|)` of a decaying mode.
pub fn stationary_variance(lambda: f64, alpha: f64) -> f64 {
    alpha * alpha / (2.0 * lambda.abs())
}

/// Precomputed one-step Ornstein-Uhlenbeck update for a fixed step.
#[derive(Debug, Clone)]
pub struct OuPropagator {
    decay: Vec<f64>,
    std: Vec<f64>,
}

impl OuPropagator {
    pub fn new(
        basis: &BasisSpec,
        spectrum: &LinearSpectrum,
        noise: &NoiseSpectrum,
        h: f64,
    ) -> Result<Self, NoiseError> {
        check_step(h)?;
        noise.check(basis.modes())?;
        let scale = basis.amplitude_scale();
        let (decay, std) = (0..basis.dim())
            .map(|slot| {
                let j = basis.mode_of_slot(slot);
                let l = spectrum.get(j);
                ((l * h).exp(), scale * ou_variance(l, noise.alpha(j), h).sqrt())
            })
            .unzip();
        Ok(Self { decay, std })
    }

    /// `e^{λ_j h}` per slot.
    pub fn decay(&self) -> &[f64] {
        &self.decay
    }

    /// Increment standard deviation per slot, in amplitude units.
    pub fn std(&self) -> &[f64] {
        &self.std
    }

    /// Scales standard normals into stochastic-integral increments in place.
    pub fn increments(&self, rng: &mut WienerState, out: &mut [f64]) {
        rng.draw(out);
        for (o, s) in out.iter_mut().zip(&self.std) {
            *o *= s;
        }
    }
}

fn check_step(h: f64) -> Result<(), NoiseError> {
    if h.is_finite() && h > 0.0 {
        Ok(())
    } else {
        Err(NoiseError::NonPositiveStep(h))
    }
}

/// Exact-in-law increment of `∫_t^{t+h} e^{(t+h-s)A} dW_N(s)` per slot
/// (amplitude units). Advances `rng` by one draw per stream.
pub fn mild_noise_increment(
    basis: &BasisSpec,
    spectrum: &LinearSpectrum,
    noise: &NoiseSpectrum,
    rng: &mut WienerState,
    h: f64,
) -> Result<Vec<f64>, NoiseError> {
    let prop = OuPropagator::new(basis, spectrum, noise, h)?;
    let mut eta = vec![0.0; basis.dim()];
    prop.increments(rng, &mut eta);
    rng.t += h;
    Ok(eta)
}

/// Stochastic convolution at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvolutionState {
    pub field: SpectralField,
    pub t: f64,
}

impl ConvolutionState {
    /// `W_A(0) = 0` at the time origin.
    pub fn origin(basis: BasisSpec) -> Self {
        Self {
            field: SpectralField::zeros(basis),
            t: 0.0,
        }
    }
}

/// `W'_j = e^{λ_j h} W_j + η_j`, distributionally exact.
pub fn ou_step(
    state: &ConvolutionState,
    spectrum: &LinearSpectrum,
    noise: &NoiseSpectrum,
    rng: &mut WienerState,
    h: f64,
) -> Result<ConvolutionState, NoiseError> {
    let basis = *state.field.basis();
    let prop = OuPropagator::new(&basis, spectrum, noise, h)?;
    let mut eta = vec![0.0; basis.dim()];
    prop.increments(rng, &mut eta);
    rng.t += h;
    let mut next = state.field.clone();
    for ((w, d), e) in next.coeffs_mut().iter_mut().zip(prop.decay()).zip(&eta) {
        *w = d * *w + e;
    }
    Ok(ConvolutionState {
        field: next,
        t: state.t + h,
    })
}

/// What to do with modes that have no stationary law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnstablePolicy {
    /// Any `λ_j ≥ 0` is an error.
    Reject,
    /// Modes with `λ_j ≥ 0` are left at zero.
    Zero,
}

/// Sample from the stationary law of the stochastic convolution.
pub fn stationary_convolution_sample(
    basis: &BasisSpec,
    spectrum: &LinearSpectrum,
    noise: &NoiseSpectrum,
    rng: &mut WienerState,
    policy: UnstablePolicy,
) -> Result<ConvolutionState, NoiseError> {
    noise.check(basis.modes())?;
    if policy == UnstablePolicy::Reject {
        if let Some((i, &l)) = spectrum.as_slice().iter().enumerate().find(|(_, &l)| l >= 0.0) {
            return Err(NoiseError::UnstableMode {
                index: i + 1,
                lambda: l,
            });
        }
    }
    let mut z = vec![0.0; basis.dim()];
    rng.draw(&mut z);
    let scale = basis.amplitude_scale();
    let coeffs = z
        .iter()
        .enumerate()
        .map(|(slot, g)| {
            let j = basis.mode_of_slot(slot);
            let l = spectrum.get(j);
            if l < 0.0 {
                scale * stationary_variance(l, noise.alpha(j)).sqrt() * g
            } else {
                0.0
            }
        })
        .collect();
    Ok(ConvolutionState {
        field: SpectralField::from_coeffs(*basis, coeffs).expect("slot count matches basis"),
        t: 0.0,
    })
}

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::SpectralError;

/// Boundary condition of the evolution problem on `[0, L]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// `L`-periodic; every mode index carries a cosine and a sine partner.
    Periodic,
    /// Homogeneous Neumann; realized as the even `2L`-periodic extension,
    /// so only cosines appear.
    Neumann,
}

impl Boundary {
    pub fn tag(self) -> u8 {
        match self {
            Boundary::Periodic => 0,
            Boundary::Neumann => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Boundary::Periodic),
            1 => Some(Boundary::Neumann),
            _ => None,
        }
    }
}

/// Domain, boundary condition and Galerkin truncation.
///
/// Mode indices run over `1..=N`; the mean (index 0) is never represented.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    boundary: Boundary,
    length: f64,
    modes: usize,
}

impl BasisSpec {
    pub fn new(boundary: Boundary, length: f64, modes: usize) -> Result<Self, SpectralError> {
        if !(length.is_finite() && length > 0.0) {
            return Err(SpectralError::InvalidLength(length));
        }
        if modes == 0 {
            return Err(SpectralError::InvalidTruncation);
        }
        Ok(Self {
            boundary,
            length,
            modes,
        })
    }

    pub fn periodic(length: f64, modes: usize) -> Result<Self, SpectralError> {
        Self::new(Boundary::Periodic, length, modes)
    }

    pub fn neumann(length: f64, modes: usize) -> Result<Self, SpectralError> {
        Self::new(Boundary::Neumann, length, modes)
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Truncation `N`.
    pub fn modes(&self) -> usize {
        self.modes
    }

    /// Same domain, different truncation.
    pub fn with_modes(&self, modes: usize) -> Result<Self, SpectralError> {
        Self::new(self.boundary, self.length, modes)
    }

    /// Period of the trigonometric representation: `L` or `2L`.
    pub fn period(&self) -> f64 {
        match self.boundary {
            Boundary::Periodic => self.length,
            Boundary::Neumann => 2.0 * self.length,
        }
    }

    /// Number of real coefficients per mode index.
    pub fn components(&self) -> usize {
        match self.boundary {
            Boundary::Periodic => 2,
            Boundary::Neumann => 1,
        }
    }

    /// Total number of stored coefficients.
    pub fn dim(&self) -> usize {
        self.modes * self.components()
    }

    /// Mode index of coefficient slot `slot` (cosines first, then sines).
    #[inline]
    pub fn mode_of_slot(&self, slot: usize) -> usize {
        slot % self.modes + 1
    }

    /// Wavenumber `q_j` without range check.
    #[inline]
    pub(crate) fn q(&self, j: usize) -> f64 {
        2.0 * PI * j as f64 / self.period()
    }

    /// Wavenumber `q_j = 2πj/L` (periodic) or `πj/L` (Neumann).
    pub fn wavenumber(&self, j: usize) -> Result<f64, SpectralError> {
        self.check_mode(j)?;
        Ok(self.q(j))
    }

    /// Eigenvalue `λ_j = -q_j⁴ - ν q_j²` of `A = -∂x⁴ + ν∂x²`.
    pub fn eigenvalue(&self, nu: f64, j: usize) -> Result<f64, SpectralError> {
        self.check_mode(j)?;
        Ok(symbol(self.q(j), nu))
    }

    /// `ν_c = -q_1²`: the first mode is marginal at `ν_c` and grows below it.
    pub fn nu_critical(&self) -> f64 {
        let q1 = self.q(1);
        -q1 * q1
    }

    /// Squared `L²([0,L])` norm of a unit-amplitude mode, `L/2`.
    pub fn mode_norm_sq(&self) -> f64 {
        0.5 * self.length
    }

    /// Amplitude of an `L²`-normalized eigenfunction, `sqrt(2/L)`.
    pub fn amplitude_scale(&self) -> f64 {
        (2.0 / self.length).sqrt()
    }

    /// Fewest full-period samples that represent the truncated space exactly.
    pub fn min_samples(&self) -> usize {
        2 * self.modes + 1
    }

    /// Default padded grid for quadratic products (`4N ≥ 3N + 1`).
    pub fn dealiased_samples(&self) -> usize {
        4 * self.modes
    }

    /// Grid used for supremum and `L⁴` norms: four times the Nyquist count.
    pub fn oversampled_samples(&self) -> usize {
        8 * self.modes
    }

    fn check_mode(&self, j: usize) -> Result<(), SpectralError> {
        if j == 0 || j > self.modes {
            Err(SpectralError::ModeIndex {
                index: j,
                modes: self.modes,
            })
        } else {
            Ok(())
        }
    }

    /// Eigenvalue bound constants: `c1 j⁴ ≤ -λ_j ≤ c2 j⁴` for all `j ≥ j0`.
    pub fn eigenvalue_bounds(&self, nu: f64) -> EigenvalueBounds {
        let k2 = self.q(1).powi(2);
        let k4 = k2 * k2;
        if nu >= 0.0 {
            EigenvalueBounds {
                j0: 1,
                c1: k4,
                c2: k4 + nu * k2,
            }
        } else {
            // q_j² ≥ 2|ν| makes the ν-term at most half the quartic one.
            let j0 = ((2.0 * nu.abs() / k2).sqrt().ceil() as usize).max(1);
            EigenvalueBounds {
                j0,
                c1: 0.5 * k4,
                c2: k4,
            }
        }
    }
}

/// Constants of the two-sided quartic eigenvalue bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenvalueBounds {
    pub j0: usize,
    pub c1: f64,
    pub c2: f64,
}

#[inline]
pub(crate) fn symbol(q: f64, nu: f64) -> f64 {
    let q2 = q * q;
    -q2 * q2 - nu * q2
}

/// Eigenvalues `λ_j`, `j = 1..=N`, of the linear operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSpectrum {
    eigenvalues: Vec<f64>,
}

impl LinearSpectrum {
    pub fn new(basis: &BasisSpec, nu: f64) -> Self {
        Self {
            eigenvalues: (1..=basis.modes()).map(|j| symbol(basis.q(j), nu)).collect(),
        }
    }

    /// Arbitrary per-mode rates, e.g. to probe a single Ornstein-Uhlenbeck mode.
    pub fn from_eigenvalues(eigenvalues: Vec<f64>) -> Self {
        Self { eigenvalues }
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// `λ_j` for mode index `j ≥ 1`.
    pub fn get(&self, j: usize) -> f64 {
        self.eigenvalues[j - 1]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn all_negative(&self) -> bool {
        self.eigenvalues.iter().all(|&l| l < 0.0)
    }

    /// Largest (least negative) eigenvalue.
    pub fn max(&self) -> f64 {
        self.eigenvalues
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Smallest nonzero `|λ_j|`, the slowest linear relaxation rate.
    pub fn slowest_rate(&self) -> Option<f64> {
        self.eigenvalues
            .iter()
            .map(|l| l.abs())
            .filter(|&a| a > 0.0)
            .min_by(|a, b| a.total_cmp(b))
    }

    /// Largest `|λ_j|`.
    pub fn stiffest_rate(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l.abs()).fold(0.0, f64::max)
    }
}

use rustfft::num_complex::Complex64;
use rustfft::Fft;
use serde::{Deserialize, Serialize};
use std::ops::{Add, Sub};
use std::sync::Arc;

use super::basis::{BasisSpec, Boundary};
use super::transform::{fill_spectrum, plans, read_spectrum, GridBuffer, Padding, TrigSeries};
use super::SpectralError;

/// Relative tolerance on the even symmetry of Neumann grid input.
pub const NEUMANN_SYMMETRY_TOL: f64 = 1e-8;

/// Zero-mean field stored as amplitudes of `cos(q_j x)` (and `sin(q_j x)` for
/// periodic bases).
///
/// Layout: `[a_1..a_N]` for Neumann, `[a_1..a_N, b_1..b_N]` for periodic.
/// Amplitudes are not `L²`-normalized; norms apply the `L/2` weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralField {
    basis: BasisSpec,
    coeffs: Vec<f64>,
}

impl SpectralField {
    pub fn zeros(basis: BasisSpec) -> Self {
        Self {
            coeffs: vec![0.0; basis.dim()],
            basis,
        }
    }

    pub fn from_coeffs(basis: BasisSpec, coeffs: Vec<f64>) -> Result<Self, SpectralError> {
        if coeffs.len() != basis.dim() {
            return Err(SpectralError::CoefficientCount {
                expected: basis.dim(),
                found: coeffs.len(),
            });
        }
        Ok(Self { basis, coeffs })
    }

    /// Field with a single cosine amplitude at mode `j`.
    pub fn cosine_mode(basis: BasisSpec, j: usize, amplitude: f64) -> Result<Self, SpectralError> {
        basis.wavenumber(j)?;
        let mut f = Self::zeros(basis);
        f.coeffs[j - 1] = amplitude;
        Ok(f)
    }

    pub fn basis(&self) -> &BasisSpec {
        &self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn cos(&self) -> &[f64] {
        &self.coeffs[..self.basis.modes()]
    }

    /// Sine amplitudes; empty for Neumann.
    pub fn sin(&self) -> &[f64] {
        &self.coeffs[self.basis.modes()..]
    }

    /// Coordinates against the `L²`-orthonormal eigenbasis.
    pub fn orthonormal_coords(&self) -> Vec<f64> {
        let s = 1.0 / self.basis.amplitude_scale();
        self.coeffs.iter().map(|c| c * s).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    /// Representation on the full period.
    pub fn as_series(&self) -> TrigSeries {
        let n = self.basis.modes();
        let sin = match self.basis.boundary() {
            Boundary::Periodic => self.sin().to_vec(),
            Boundary::Neumann => vec![0.0; n],
        };
        TrigSeries {
            period: self.basis.period(),
            cos: self.cos().to_vec(),
            sin,
        }
    }

    /// Interprets a series on this basis' period, applying `Π_N`.
    ///
    /// Neumann input must be a pure cosine series (relative tolerance
    /// [`NEUMANN_SYMMETRY_TOL`]).
    pub fn from_series(basis: BasisSpec, series: &TrigSeries) -> Result<Self, SpectralError> {
        if (series.period - basis.period()).abs() > 1e-12 * basis.period() {
            return Err(SpectralError::PeriodMismatch {
                expected: basis.period(),
                found: series.period,
            });
        }
        let n = basis.modes();
        let take = n.min(series.modes());
        let mut f = Self::zeros(basis);
        f.coeffs[..take].copy_from_slice(&series.cos[..take]);
        match basis.boundary() {
            Boundary::Periodic => f.coeffs[n..n + take].copy_from_slice(&series.sin[..take]),
            Boundary::Neumann => {
                let scale = series
                    .cos
                    .iter()
                    .chain(series.sin.iter())
                    .fold(0.0_f64, |a, v| a.max(v.abs()));
                let odd = series.sin.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
                if scale > 0.0 && odd > NEUMANN_SYMMETRY_TOL * scale {
                    return Err(SpectralError::Symmetry(odd / scale));
                }
            }
        }
        Ok(f)
    }

    /// Same field on a different truncation of the same domain (zero-padded or cut).
    pub fn resize(&self, modes: usize) -> Result<Self, SpectralError> {
        let basis = self.basis.with_modes(modes)?;
        Self::from_series(basis, &self.as_series())
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            basis: self.basis,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    /// `L²(0,L)` inner product.
    pub fn inner(&self, other: &SpectralField) -> f64 {
        debug_assert_eq!(self.basis, other.basis);
        self.basis.mode_norm_sq()
            * self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }

    /// `Σ q_j^{2s} |c_j|²` scaled by `L/2`, i.e. the squared `H^s` norm.
    pub fn sobolev_sq(&self, s: f64) -> f64 {
        let b = &self.basis;
        b.mode_norm_sq()
            * self
                .coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| b.q(b.mode_of_slot(i)).powf(2.0 * s) * c * c)
                .sum::<f64>()
    }

    /// Squared `L²` norm of the `r`-th derivative.
    pub fn derivative_sq(&self, r: u32) -> f64 {
        let b = &self.basis;
        b.mode_norm_sq()
            * self
                .coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| b.q(b.mode_of_slot(i)).powi(2 * r as i32) * c * c)
                .sum::<f64>()
    }

    pub fn l2_sq(&self) -> f64 {
        self.basis.mode_norm_sq() * self.coeffs.iter().map(|c| c * c).sum::<f64>()
    }
}

impl Add for &SpectralField {
    type Output = SpectralField;

    fn add(self, rhs: &SpectralField) -> SpectralField {
        debug_assert_eq!(self.basis, rhs.basis);
        SpectralField {
            basis: self.basis,
            coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &SpectralField {
    type Output = SpectralField;

    fn sub(self, rhs: &SpectralField) -> SpectralField {
        debug_assert_eq!(self.basis, rhs.basis);
        SpectralField {
            basis: self.basis,
            coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a - b).collect(),
        }
    }
}

/// Samples `f` on `m` uniform points of its full period.
pub fn to_physical(f: &SpectralField, m: usize) -> Result<GridBuffer, SpectralError> {
    let samples = f.as_series().to_grid(m)?;
    let b = f.basis();
    let padding = if m >= b.oversampled_samples() {
        Padding::Oversampled
    } else if m >= 3 * b.modes() + 1 {
        Padding::Dealiased
    } else {
        Padding::Plain
    };
    Ok(GridBuffer {
        period: b.period(),
        length: b.length(),
        samples,
        padding,
    })
}

/// Projects grid data onto modes `1..=N`, dropping the mean and everything above `N`.
pub fn from_physical(g: &GridBuffer, basis: BasisSpec) -> Result<SpectralField, SpectralError> {
    if (g.period - basis.period()).abs() > 1e-12 * basis.period() {
        return Err(SpectralError::PeriodMismatch {
            expected: basis.period(),
            found: g.period,
        });
    }
    if basis.boundary() == Boundary::Neumann {
        let defect = g.even_defect();
        if defect > NEUMANN_SYMMETRY_TOL {
            return Err(SpectralError::Symmetry(defect));
        }
    }
    let series = TrigSeries::from_grid(&g.samples, basis.period(), basis.modes())?;
    let mut f = SpectralField::zeros(basis);
    let n = basis.modes();
    f.coeffs[..n].copy_from_slice(&series.cos);
    if basis.boundary() == Boundary::Periodic {
        f.coeffs[n..].copy_from_slice(&series.sin);
    }
    Ok(f)
}

/// `∂x^order f` as a general series; odd derivatives of Neumann fields are
/// sine series and only meaningful on the extended grid.
pub fn derivative(f: &SpectralField, order: u32) -> Result<TrigSeries, SpectralError> {
    if !(1..=4).contains(&order) {
        return Err(SpectralError::DerivativeOrder(order));
    }
    Ok(f.as_series().derivative(order))
}

/// Even-order derivative as a field of the same basis.
pub fn derivative_field(f: &SpectralField, order: u32) -> Result<SpectralField, SpectralError> {
    if order % 2 != 0 {
        return Err(SpectralError::DerivativeOrder(order));
    }
    SpectralField::from_series(*f.basis(), &derivative(f, order)?)
}

/// `B(u) = -Π_N ∂x²(∂x u)²` on the default dealiased grid.
pub fn nonlinearity(u: &SpectralField) -> SpectralField {
    let mut out = SpectralField::zeros(*u.basis());
    Dealiaser::new(*u.basis()).apply(u, out.coeffs_mut());
    out
}

/// `B(u)` on an explicit grid size `m ≥ 3N + 1`.
pub fn nonlinearity_with(u: &SpectralField, m: usize) -> Result<SpectralField, SpectralError> {
    let mut out = SpectralField::zeros(*u.basis());
    Dealiaser::with_samples(*u.basis(), m)?.apply(u, out.coeffs_mut());
    Ok(out)
}

/// Reusable workspace for the dealiased quadratic term.
pub struct Dealiaser {
    basis: BasisSpec,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl Dealiaser {
    pub fn new(basis: BasisSpec) -> Self {
        Self::with_samples(basis, basis.dealiased_samples()).expect("default padding is valid")
    }

    pub fn with_samples(basis: BasisSpec, m: usize) -> Result<Self, SpectralError> {
        let required = 3 * basis.modes() + 1;
        if m < required {
            return Err(SpectralError::Resolution {
                samples: m,
                required,
            });
        }
        let (fwd, inv) = plans(m);
        let scratch_len = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        let n = basis.modes();
        Ok(Self {
            basis,
            fwd,
            inv,
            buf: vec![Complex64::new(0.0, 0.0); m],
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
            cos: vec![0.0; n],
            sin: vec![0.0; n],
        })
    }

    /// Writes the coefficients of `B(u)` into `out` (layout of `u`'s basis).
    pub fn apply(&mut self, u: &SpectralField, out: &mut [f64]) {
        let b = self.basis;
        let n = b.modes();
        // ∂x u: (a cos + b sin)' = q b cos - q a sin
        for j in 1..=n {
            let q = b.q(j);
            let a = u.coeffs[j - 1];
            let s = if b.boundary() == Boundary::Periodic {
                u.coeffs[n + j - 1]
            } else {
                0.0
            };
            self.cos[j - 1] = q * s;
            self.sin[j - 1] = -q * a;
        }
        fill_spectrum(&self.cos, &self.sin, &mut self.buf);
        self.inv.process_with_scratch(&mut self.buf, &mut self.scratch);
        for v in self.buf.iter_mut() {
            *v = Complex64::new(v.re * v.re, 0.0);
        }
        self.fwd.process_with_scratch(&mut self.buf, &mut self.scratch);
        read_spectrum(&self.buf, &mut self.cos, &mut self.sin);
        // -∂x² multiplies mode j by q_j².
        for j in 1..=n {
            let q2 = b.q(j).powi(2);
            out[j - 1] = q2 * self.cos[j - 1];
            if b.boundary() == Boundary::Periodic {
                out[n + j - 1] = q2 * self.sin[j - 1];
            }
        }
    }
}

/// Norm selector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NormKind {
    L2,
    /// Fractional Sobolev norm with weights `q_j^{2s}`, `s ∈ [-4, 4]`.
    Hs(f64),
    Linf,
    /// `‖f‖_∞ + ‖∂x f‖_∞`.
    C1,
    L4,
}

pub fn norm(f: &SpectralField, kind: NormKind) -> Result<f64, SpectralError> {
    let m = f.basis().oversampled_samples();
    Ok(match kind {
        NormKind::L2 => f.l2_sq().sqrt(),
        NormKind::Hs(s) => {
            if !(-4.0..=4.0).contains(&s) {
                return Err(SpectralError::SobolevIndex(s));
            }
            f.sobolev_sq(s).sqrt()
        }
        NormKind::Linf => sup_norm(&f.as_series(), m),
        NormKind::C1 => {
            let s = f.as_series();
            sup_norm(&s, m) + sup_norm(&s.derivative(1), m)
        }
        NormKind::L4 => to_physical(f, m)?.integral_pow(4).powf(0.25),
    })
}

/// `max |s|` on `m` grid points (the whole period covers `[0, L]` in both bases).
pub fn sup_norm(s: &TrigSeries, m: usize) -> f64 {
    s.to_grid(m)
        .expect("oversampled grid resolves the series")
        .iter()
        .fold(0.0, |a, v| a.max(v.abs()))
}

/// `∫_0^L s^4 dx` on `m` points, for a series on the basis' full period.
pub fn l4_pow4(s: &TrigSeries, length: f64, m: usize) -> f64 {
    let g = s.to_grid(m).expect("oversampled grid resolves the series");
    let dx = s.period / m as f64;
    g.iter().map(|v| v.powi(4)).sum::<f64>() * dx * length / s.period
}

/// `M(u) = ∫_0^L u dx`, identically zero since no mean mode exists.
pub fn mass(_f: &SpectralField) -> f64 {
    0.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_field(basis: BasisSpec, seed: u64) -> SpectralField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = (0..basis.dim())
            .map(|i| {
                let j = basis.mode_of_slot(i) as f64;
                rng.random_range(-1.0..1.0) / j
            })
            .collect();
        SpectralField::from_coeffs(basis, c).unwrap()
    }

    #[test]
    fn zero_field_samples_to_zero() {
        let b = BasisSpec::periodic(2.0 * PI, 8).unwrap();
        let g = to_physical(&SpectralField::zeros(b), 32).unwrap();
        assert!(g.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_mode_at_origin_equals_amplitude() {
        let b = BasisSpec::periodic(2.0 * PI, 4).unwrap();
        let f = SpectralField::cosine_mode(b, 1, 1.0).unwrap();
        let g = to_physical(&f, 16).unwrap();
        assert!((g.samples[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn round_trip_both_bases() {
        for b in [BasisSpec::periodic(3.0, 16).unwrap(), BasisSpec::neumann(3.0, 16).unwrap()] {
            let f = random_field(b, 7);
            let back = from_physical(&to_physical(&f, 4 * 16).unwrap(), b).unwrap();
            for (x, y) in f.coeffs().iter().zip(back.coeffs()) {
                assert!((x - y).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn projection_drops_mean_and_high_modes() {
        let b = BasisSpec::periodic(2.0 * PI, 4).unwrap();
        let m = 32;
        let g = |f: &dyn Fn(f64) -> f64| GridBuffer {
            period: 2.0 * PI,
            length: 2.0 * PI,
            samples: (0..m).map(|i| f(2.0 * PI * i as f64 / m as f64)).collect(),
            padding: Padding::Plain,
        };
        let c = from_physical(&g(&|_| 3.5), b).unwrap();
        assert!(c.coeffs().iter().all(|v| v.abs() < 1e-15));
        let c2 = from_physical(&g(&|x| (2.0 * x).cos()), b).unwrap();
        assert!((c2.cos()[1] - 1.0).abs() < 1e-14);
        assert!(c2.coeffs().iter().enumerate().all(|(i, v)| i == 1 || v.abs() < 1e-14));
        let c5 = from_physical(&g(&|x| (5.0 * x).cos()), b).unwrap();
        assert!(c5.coeffs().iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn neumann_rejects_odd_grid() {
        let b = BasisSpec::neumann(PI, 4).unwrap();
        let g = GridBuffer {
            period: 2.0 * PI,
            length: PI,
            samples: (0..16).map(|i| (2.0 * PI * i as f64 / 16.0).sin()).collect(),
            padding: Padding::Plain,
        };
        assert!(matches!(from_physical(&g, b), Err(SpectralError::Symmetry(_))));
    }

    #[test]
    fn derivative_examples() {
        let b = BasisSpec::periodic(2.0 * PI, 4).unwrap();
        let f = SpectralField::cosine_mode(b, 1, 1.0).unwrap();
        let d2 = derivative_field(&f, 2).unwrap();
        assert!((d2.cos()[0] + 1.0).abs() < 1e-15);
        let z = derivative_field(&SpectralField::zeros(b), 4).unwrap();
        assert!(z.coeffs().iter().all(|&v| v == 0.0));
        assert!(matches!(derivative(&f, 5), Err(SpectralError::DerivativeOrder(5))));
        assert!(derivative(&f, 0).is_err());

        // Neumann cos(x) on [0, π]: derivative samples are -sin(x) on the extension.
        let n = BasisSpec::neumann(PI, 4).unwrap();
        let c = SpectralField::cosine_mode(n, 1, 1.0).unwrap();
        let d = derivative(&c, 1).unwrap();
        let g = d.to_grid(32).unwrap();
        for (m, v) in g.iter().enumerate() {
            let x = 2.0 * PI * m as f64 / 32.0;
            assert!((v + x.sin()).abs() < 1e-14);
        }
    }

    #[test]
    fn nonlinearity_of_neumann_cosine() {
        let b = BasisSpec::neumann(PI, 6).unwrap();
        let u = SpectralField::cosine_mode(b, 1, 1.0).unwrap();
        let bu = nonlinearity(&u);
        for (i, v) in bu.coeffs().iter().enumerate() {
            let expected = if i == 1 { -2.0 } else { 0.0 };
            assert!((v - expected).abs() < 1e-13, "slot {i}: {v}");
        }
        assert!(nonlinearity(&SpectralField::zeros(b)).coeffs().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn nonlinearity_is_padding_independent() {
        for b in [BasisSpec::periodic(5.0, 24).unwrap(), BasisSpec::neumann(5.0, 24).unwrap()] {
            let u = random_field(b, 3);
            let m = 3 * 24 + 1;
            let a = nonlinearity_with(&u, m).unwrap();
            let c = nonlinearity_with(&u, 2 * m).unwrap();
            let scale = norm(&a, NormKind::L2).unwrap();
            let diff = norm(&(&a - &c), NormKind::L2).unwrap();
            assert!(diff <= 1e-12 * scale, "{diff} vs {scale}");
            assert!(nonlinearity_with(&u, 3 * 24).is_err());
        }
    }

    #[test]
    fn norm_conventions() {
        let b = BasisSpec::periodic(2.0 * PI, 4).unwrap();
        for k in [NormKind::L2, NormKind::Hs(1.5), NormKind::Linf, NormKind::C1, NormKind::L4] {
            assert_eq!(norm(&SpectralField::zeros(b), k).unwrap(), 0.0);
        }
        let f = SpectralField::cosine_mode(b, 1, 1.0).unwrap();
        // ‖cos x‖² on [0, 2π] is π.
        assert!((norm(&f, NormKind::L2).unwrap().powi(2) - PI).abs() < 1e-13);
        assert!((norm(&f, NormKind::Linf).unwrap() - 1.0).abs() < 1e-14);
        assert!((norm(&f, NormKind::C1).unwrap() - 2.0).abs() < 1e-3);
        // ∫ cos⁴ over a period is 3π/4.
        assert!((norm(&f, NormKind::L4).unwrap().powi(4) - 0.75 * PI).abs() < 1e-13);
        assert!(norm(&f, NormKind::Hs(4.5)).is_err());

        let g = random_field(BasisSpec::neumann(3.0, 12).unwrap(), 11);
        let h2 = norm(&g, NormKind::Hs(2.0)).unwrap();
        let d2 = norm(&derivative_field(&g, 2).unwrap(), NormKind::L2).unwrap();
        assert!((h2 - d2).abs() < 1e-12 * h2);
    }

    #[test]
    fn parseval_against_grid_quadrature() {
        for b in [BasisSpec::periodic(4.0, 10).unwrap(), BasisSpec::neumann(4.0, 10).unwrap()] {
            let f = random_field(b, 5);
            let spectral = norm(&f, NormKind::L2).unwrap();
            let grid = to_physical(&f, 64).unwrap().integral_pow(2).sqrt();
            assert!((spectral - grid).abs() <= 1e-10 * spectral);
        }
    }

    #[test]
    fn quadrature_mass_vanishes() {
        for b in [BasisSpec::periodic(4.0, 10).unwrap(), BasisSpec::neumann(4.0, 10).unwrap()] {
            let f = random_field(b, 9);
            let g = to_physical(&f, 8 * 10).unwrap();
            assert!(g.mass().abs() <= 1e-10 * norm(&f, NormKind::L2).unwrap());
            assert_eq!(mass(&f), 0.0);
        }
    }

    #[test]
    fn coefficient_count_checked() {
        let b = BasisSpec::periodic(1.0, 3).unwrap();
        assert!(SpectralField::from_coeffs(b, vec![0.0; 5]).is_err());
        assert_eq!(SpectralField::zeros(b).coeffs().len(), 6);
        assert_eq!(SpectralField::zeros(BasisSpec::neumann(1.0, 3).unwrap()).coeffs().len(), 3);
    }
}

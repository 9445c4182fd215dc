//! Shift profile `Φ` for the linearly unstable Neumann problem, the `Γ`
//! certificate bounding its Schrödinger operator, and numerical checks that
//! the shifted linear operator `Ã v = A v - 2∂x²(∂xΦ ∂x v)` is negative.
//!
//! With `V = -∂x²Φ`, integration by parts against Neumann fields gives
//!
//! ```text
//! -⟨v, Ã v⟩ = ‖∂x²v‖² + ν‖∂x v‖² + ⟨∂x v, V ∂x v⟩
//! ```
//!
//! so negativity follows once `H = -½∂x² + V` with Dirichlet conditions is
//! bounded below by `|ν|`. The profile is `Φ(x) = 2ν Σ φ_n cos(2πnx/L)`,
//! `φ_n = ψ_n/n²`, `ψ_n = 2` for `n ≤ 2n*`; for `ν < 0` this makes `V`
//! approximately the positive constant `2|ν|(2π/L)²` away from the walls.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

use crate::integrator::{IntegratorError, ModelSpec, SimParams, Stepper, TrajectoryState};
use crate::spectral::{nonlinearity, BasisSpec, Boundary, SpectralError, SpectralField};

/// Largest `n*` considered by [`select_n_star`].
pub const MAX_N_STAR: usize = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilizerError {
    #[error("linear operator is stable at nu = {nu} (critical {critical}); no stabilizer needed")]
    NotNeeded { nu: f64, critical: f64 },
    #[error("n_star must be at least 1")]
    InvalidNStar,
    #[error("m_max = {m_max} below 4 n_star = {required}")]
    MMaxTooSmall { m_max: usize, required: usize },
    #[error("grid of {0} sine modes below the minimum of 64")]
    GridTooSmall(usize),
    #[error("target constant must be positive, got {0}")]
    InvalidTarget(f64),
    #[error("symmetric eigen-solver did not converge on a {0}x{0} matrix")]
    EigenFailure(usize),
    #[error("test field has vanishing second derivative")]
    DegenerateField,
    #[error("stabilizer requires a Neumann basis")]
    NotNeumann,
    #[error("no n_star up to {0} satisfies the certificate")]
    NotFound(usize),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
}

/// Certified value of `Γ = Σ_{k>m>0} |ψ_{k+m} - ψ_{k-m}|²/(E_k E_m)`, `E_n = αn²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaCertificate {
    pub n_star: usize,
    pub length: f64,
    /// `2π²/L²`
    pub alpha: f64,
    pub m_max: usize,
    /// Exact sum over `m ≤ m_max`.
    pub computed_sum: f64,
    /// Bound on the remainder `m > m_max`, `32n*/(3α²m_max³)`.
    pub tail_bound: f64,
    /// `4π²/(3α²n*)`
    pub analytic_bound: f64,
}

impl GammaCertificate {
    pub fn upper(&self) -> f64 {
        self.computed_sum + self.tail_bound
    }

    pub fn holds(&self) -> bool {
        self.upper() <= self.analytic_bound
    }
}

/// `Γ` summed over `m ≤ m_max`, with the analytic tail bound.
///
/// The nonzero terms are those with `k - m ≤ 2n* < k + m`, each equal to
/// `4/(α²k²m²)`; inner sums over `k` use prefix sums of `1/k²`.
pub fn gamma_sum(n_star: usize, length: f64, m_max: usize) -> Result<GammaCertificate, StabilizerError> {
    if n_star == 0 {
        return Err(StabilizerError::InvalidNStar);
    }
    if !(length.is_finite() && length > 0.0) {
        return Err(SpectralError::InvalidLength(length).into());
    }
    if m_max < 4 * n_star {
        return Err(StabilizerError::MMaxTooSmall {
            m_max,
            required: 4 * n_star,
        });
    }
    let alpha = 2.0 * PI * PI / (length * length);
    let w = 2 * n_star;
    let top = m_max + w;
    let mut prefix = vec![0.0; top + 1];
    for k in 1..=top {
        prefix[k] = prefix[k - 1] + 1.0 / (k as f64 * k as f64);
    }
    let mut s = 0.0;
    for m in 1..=m_max {
        let lo = (m + 1).max((w + 1).saturating_sub(m));
        let hi = m + w;
        if lo <= hi {
            s += (prefix[hi] - prefix[lo - 1]) / (m as f64 * m as f64);
        }
    }
    let a2 = alpha * alpha;
    Ok(GammaCertificate {
        n_star,
        length,
        alpha,
        m_max,
        computed_sum: 4.0 * s / a2,
        tail_bound: 32.0 * n_star as f64 / (3.0 * a2 * (m_max as f64).powi(3)),
        analytic_bound: 4.0 * PI * PI / (3.0 * a2 * n_star as f64),
    })
}

/// Shift profile on a Neumann basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilizerProfile {
    /// Zero for the trivial profile `Φ = 0`.
    pub n_star: usize,
    pub nu: f64,
    /// `ψ_n`, `n = 1..=2n*`.
    pub psi: Vec<f64>,
    /// `φ_n = ψ_n/n²`.
    pub phi_coeffs: Vec<f64>,
    /// `L²` norm of the part of `Φ` above the truncation.
    pub truncation_residual: f64,
    pub gamma: Option<GammaCertificate>,
    phi_n: SpectralField,
}

impl StabilizerProfile {
    /// `Φ = 0` on `basis`; used as the control case.
    pub fn zero(nu: f64, basis: BasisSpec) -> Result<Self, StabilizerError> {
        if basis.boundary() != Boundary::Neumann {
            return Err(StabilizerError::NotNeumann);
        }
        Ok(Self {
            n_star: 0,
            nu,
            psi: Vec::new(),
            phi_coeffs: Vec::new(),
            truncation_residual: 0.0,
            gamma: None,
            phi_n: SpectralField::zeros(basis),
        })
    }

    pub fn basis(&self) -> &BasisSpec {
        self.phi_n.basis()
    }

    pub fn length(&self) -> f64 {
        self.basis().length()
    }

    /// `Π_N Φ`.
    pub fn phi_n(&self) -> &SpectralField {
        &self.phi_n
    }

    /// Cosine coefficient of `cos(2πnx/L)` in the full `Φ`.
    pub fn phi_cos(&self, n: usize) -> f64 {
        if n == 0 || n > self.phi_coeffs.len() {
            0.0
        } else {
            2.0 * self.nu * self.phi_coeffs[n - 1]
        }
    }

    /// Cosine coefficient of `cos(2πnx/L)` in `V = -∂x²Φ`.
    pub fn potential_cos(&self, n: usize) -> f64 {
        let k = 2.0 * PI * n as f64 / self.length();
        self.phi_cos(n) * k * k
    }

    /// Same profile on another truncation.
    pub fn with_modes(&self, modes: usize) -> Result<Self, StabilizerError> {
        let basis = self.basis().with_modes(modes)?;
        let (phi_n, truncation_residual) = project(basis, self)?;
        Ok(Self {
            phi_n,
            truncation_residual,
            ..self.clone()
        })
    }
}

fn project(basis: BasisSpec, p: &StabilizerProfile) -> Result<(SpectralField, f64), SpectralError> {
    let mut coeffs = vec![0.0; basis.dim()];
    let mut dropped = 0.0;
    for n in 1..=p.phi_coeffs.len() {
        let c = p.phi_cos(n);
        // cos(2πnx/L) is Neumann mode 2n.
        if 2 * n <= basis.modes() {
            coeffs[2 * n - 1] = c;
        } else {
            dropped += c * c;
        }
    }
    let residual = (dropped * basis.mode_norm_sq()).sqrt();
    Ok((SpectralField::from_coeffs(basis, coeffs)?, residual))
}

/// Builds `Φ` for `n*` on the `modes`-mode Neumann basis of `[0, L]`.
pub fn build_phi(n_star: usize, nu: f64, length: f64, modes: usize) -> Result<StabilizerProfile, StabilizerError> {
    if n_star == 0 {
        return Err(StabilizerError::InvalidNStar);
    }
    let basis = BasisSpec::neumann(length, modes)?;
    let critical = basis.nu_critical();
    if !(nu <= critical) {
        return Err(StabilizerError::NotNeeded { nu, critical });
    }
    let psi = vec![2.0; 2 * n_star];
    let phi_coeffs = psi
        .iter()
        .enumerate()
        .map(|(i, p)| p / ((i + 1) * (i + 1)) as f64)
        .collect();
    let mut profile = StabilizerProfile {
        n_star,
        nu,
        psi,
        phi_coeffs,
        truncation_residual: 0.0,
        gamma: Some(gamma_sum(n_star, length, 8 * n_star)?),
        phi_n: SpectralField::zeros(basis),
    };
    let (phi_n, residual) = project(basis, &profile)?;
    profile.phi_n = phi_n;
    profile.truncation_residual = residual;
    Ok(profile)
}

/// Dirichlet sine-Galerkin matrix of `H = -½∂x² + V` with `m` modes,
/// in the orthonormal basis `√(2/L) sin(kπx/L)`.
fn hphi_matrix(p: &StabilizerProfile, m: usize) -> DMatrix<f64> {
    let l = p.length();
    let mut h = DMatrix::zeros(m, m);
    for k in 1..=m {
        let q = k as f64 * PI / l;
        h[(k - 1, k - 1)] = 0.5 * q * q;
    }
    for n in 1..=p.phi_coeffs.len() {
        let v = 0.5 * p.potential_cos(n);
        let d = 2 * n;
        for k in 1..=m {
            if k + d <= m {
                h[(k - 1, k + d - 1)] += v;
                h[(k + d - 1, k - 1)] += v;
            }
            if d > k && d - k <= m && d - k != k {
                h[(k - 1, d - k - 1)] -= v;
            } else if d == 2 * k {
                h[(k - 1, k - 1)] -= v;
            }
        }
    }
    h
}

fn min_eigenvalue(a: DMatrix<f64>) -> Result<f64, StabilizerError> {
    let n = a.nrows();
    a.try_symmetric_eigen(1e-14, 100 * n.max(10))
        .map(|e| e.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
        .ok_or(StabilizerError::EigenFailure(n))
}

/// Smallest eigenvalue of the `m`-mode Dirichlet discretization of `H`.
pub fn hphi_min_eigenvalue(p: &StabilizerProfile, m: usize) -> Result<f64, StabilizerError> {
    if m < 64 {
        return Err(StabilizerError::GridTooSmall(m));
    }
    min_eigenvalue(hphi_matrix(p, m))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HphiReport {
    pub grid: usize,
    pub min_eigenvalue: f64,
    pub refined: f64,
    /// `|λ(M) - λ(2M)|/|λ(2M)|`
    pub relative_drift: f64,
}

/// Minimum eigenvalue at `m` and `2m` sine modes.
pub fn hphi_report(p: &StabilizerProfile, m: usize) -> Result<HphiReport, StabilizerError> {
    let a = hphi_min_eigenvalue(p, m)?;
    let b = hphi_min_eigenvalue(p, 2 * m)?;
    Ok(HphiReport {
        grid: m,
        min_eigenvalue: a,
        refined: b,
        relative_drift: (a - b).abs() / b.abs(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectOptions {
    /// Threshold on the certified `Γ`; `None` means `0.1/α²`.
    pub gamma_max: Option<f64>,
    pub grid: usize,
    /// Relative margin required above the target.
    pub margin: f64,
    pub max_n_star: usize,
}

impl Default for SelectOptions {
    fn default() -> Self {
        Self {
            gamma_max: None,
            grid: 512,
            margin: 0.05,
            max_n_star: MAX_N_STAR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub profile: StabilizerProfile,
    pub gamma_max: f64,
    pub min_eigenvalue: f64,
}

/// Smallest `n*` whose certified `Γ` is below the threshold and whose
/// discretized `H` has minimum eigenvalue at least `c_target (1 + margin)`.
pub fn select_n_star(
    nu: f64,
    length: f64,
    modes: usize,
    c_target: f64,
    opts: &SelectOptions,
) -> Result<Selection, StabilizerError> {
    if !(c_target.is_finite() && c_target > 0.0) {
        return Err(StabilizerError::InvalidTarget(c_target));
    }
    let alpha = 2.0 * PI * PI / (length * length);
    let gamma_max = opts.gamma_max.unwrap_or(0.1 / (alpha * alpha));
    let need = c_target * (1.0 + opts.margin);
    for n in 1..=opts.max_n_star {
        if gamma_sum(n, length, 4 * n)?.upper() > gamma_max {
            continue;
        }
        let profile = build_phi(n, nu, length, modes)?;
        // The potential spans sine modes up to 4n*.
        let grid = opts.grid.max(16 * n);
        let lam = hphi_min_eigenvalue(&profile, grid)?;
        log::debug!("n* = {n}: min eigenvalue {lam}");
        if lam >= need {
            return Ok(Selection {
                profile,
                gamma_max,
                min_eigenvalue: lam,
            });
        }
    }
    Err(StabilizerError::NotFound(opts.max_n_star))
}

/// `-⟨v, Ã v⟩` and `‖∂x²v‖²` as a matrix pair on the profile's basis.
struct FormMatrices {
    q: DMatrix<f64>,
    d: Vec<f64>,
}

fn form_matrices(p: &StabilizerProfile) -> FormMatrices {
    let b = *p.basis();
    let n = b.modes();
    let half = b.mode_norm_sq();
    let quarter = 0.5 * half;
    let mut q = DMatrix::zeros(n, n);
    let mut d = vec![0.0; n];
    let qs: Vec<f64> = (1..=n).map(|j| b.q(j)).collect();
    for j in 0..n {
        let qj = qs[j];
        d[j] = half * qj.powi(4);
        q[(j, j)] = half * (qj.powi(4) + p.nu * qj * qj);
    }
    // ⟨sin_j, cos(2πnx/L) sin_k⟩ = L/4 (δ_{|j-k|,2n} - δ_{j+k,2n}), restricted to Φ_N.
    for nn in 1..=n / 2 {
        let v = p.potential_cos(nn) * quarter;
        if v == 0.0 {
            continue;
        }
        let w = 2 * nn;
        for j in 1..=n {
            for k in 1..=n {
                let mut s = 0.0;
                if j.abs_diff(k) == w {
                    s += 1.0;
                }
                if j + k == w {
                    s -= 1.0;
                }
                if s != 0.0 {
                    q[(j - 1, k - 1)] += s * v * qs[j - 1] * qs[k - 1];
                }
            }
        }
    }
    FormMatrices { q, d }
}

impl FormMatrices {
    fn ratio(&self, c: &[f64]) -> Result<f64, StabilizerError> {
        let v = DVector::from_column_slice(c);
        let den: f64 = c.iter().zip(&self.d).map(|(x, d)| d * x * x).sum();
        if den <= 0.0 {
            return Err(StabilizerError::DegenerateField);
        }
        Ok(v.dot(&(&self.q * &v)) / den)
    }

    fn exact_min(&self) -> Result<f64, StabilizerError> {
        let s: Vec<f64> = self.d.iter().map(|d| 1.0 / d.sqrt()).collect();
        let n = s.len();
        let m = DMatrix::from_fn(n, n, |i, j| self.q[(i, j)] * s[i] * s[j]);
        min_eigenvalue(m)
    }

    fn pair_min(&self, i: usize, j: usize) -> f64 {
        let (a, b, c) = (
            self.q[(i, i)] / self.d[i],
            self.q[(i, j)] / (self.d[i] * self.d[j]).sqrt(),
            self.q[(j, j)] / self.d[j],
        );
        0.5 * (a + c) - (0.25 * (a - c).powi(2) + b * b).sqrt()
    }
}

/// `R(v) = -⟨v, Ã v⟩/‖∂x²v‖²` on the profile's truncation, evaluated by
/// quadrature of `‖∂x²v‖² + ν‖∂x v‖² + 2⟨∂x²v, ∂xΦ_N ∂x v⟩`.
pub fn form_ratio(p: &StabilizerProfile, v: &SpectralField) -> Result<f64, StabilizerError> {
    if v.basis() != p.basis() {
        return Err(SpectralError::CoefficientCount {
            expected: p.basis().modes(),
            found: v.basis().modes(),
        }
        .into());
    }
    let h2 = v.derivative_sq(2);
    if h2 <= 0.0 {
        return Err(StabilizerError::DegenerateField);
    }
    let m = 4 * v.basis().modes() + 4;
    let s = v.as_series();
    let v1 = s.derivative(1).to_grid(m)?;
    let v2 = s.derivative(2).to_grid(m)?;
    let f1 = p.phi_n().as_series().derivative(1).to_grid(m)?;
    let period = v.basis().period();
    let cross: f64 = (0..m).map(|i| v2[i] * f1[i] * v1[i]).sum::<f64>() * period / m as f64
        * (v.basis().length() / period);
    Ok((h2 + p.nu * v.derivative_sq(1) + 2.0 * cross) / h2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormCheckReport {
    pub samples: usize,
    pub min_random: f64,
    pub min_single: f64,
    pub min_pair: f64,
    /// Minimum over the whole truncated space (generalized eigenvalue).
    pub exact_min: f64,
    /// Minimum observed over random fields, single modes and pairs.
    pub c_estimate: f64,
    /// Mode achieving the single-mode minimum.
    pub worst_mode: usize,
    pub pass: bool,
}

/// Samples `R(v)` over random zero-mean Neumann fields and searches single
/// modes and pairs; passes iff the minimum is positive.
pub fn tilde_a_form_check(
    p: &StabilizerProfile,
    samples: usize,
    seed: u64,
) -> Result<FormCheckReport, StabilizerError> {
    let fm = form_matrices(p);
    let n = p.basis().modes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let decay = Uniform::new(0.0, 3.0).expect("valid range");
    let mut min_random = f64::INFINITY;
    let mut c = vec![0.0; n];
    for _ in 0..samples {
        let s: f64 = decay.sample(&mut rng);
        for (j, x) in c.iter_mut().enumerate() {
            let g: f64 = StandardNormal.sample(&mut rng);
            *x = g * ((j + 1) as f64).powf(-s);
        }
        min_random = min_random.min(fm.ratio(&c)?);
    }
    let (mut min_single, mut worst_mode) = (f64::INFINITY, 1);
    for j in 0..n {
        let r = fm.q[(j, j)] / fm.d[j];
        if r < min_single {
            min_single = r;
            worst_mode = j + 1;
        }
    }
    let mut min_pair = f64::INFINITY;
    for i in 0..n {
        for j in i + 1..n {
            min_pair = min_pair.min(fm.pair_min(i, j));
        }
    }
    let exact_min = fm.exact_min()?;
    let c_estimate = min_random.min(min_single).min(min_pair);
    Ok(FormCheckReport {
        samples,
        min_random,
        min_single,
        min_pair,
        exact_min,
        c_estimate,
        worst_mode,
        pass: c_estimate > 0.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub records: usize,
    /// Constant `c` used in the bound.
    pub c: f64,
    /// Largest `d/dt‖v‖² - (-2c‖∂x²v‖² + 2⟨v, F⟩)` seen; nonpositive when the bound holds.
    pub max_excess: f64,
    /// Largest mismatch between the change of `‖v‖²` over a run and the
    /// time integral of the analytic drift, relative to `∫|d/dt‖v‖²|`.
    pub consistency: f64,
    pub pass: bool,
}

/// `A f + B(f)` projected onto the basis of `f`.
fn drift_field(f: &SpectralField, nu: f64) -> SpectralField {
    let b = *f.basis();
    let mut out = nonlinearity(f);
    for (slot, c) in out.coeffs_mut().iter_mut().enumerate() {
        let lam = b.eigenvalue(nu, b.mode_of_slot(slot)).unwrap();
        *c += lam * f.coeffs()[slot];
    }
    out
}

/// Noise-off runs from `u(0) = Φ_N + v(0)` with random `v(0)`, checking
/// `d/dt‖v‖² ≤ -2c‖∂x²v‖² + 2⟨v, Π_N(AΦ_N + B(Φ_N))⟩` at every step.
pub fn drift_check(
    p: &StabilizerProfile,
    c: f64,
    runs: usize,
    amplitude: f64,
    h: f64,
    t_end: f64,
    seed: u64,
) -> Result<DriftReport, StabilizerError> {
    let basis = *p.basis();
    let model = ModelSpec::white(basis, p.nu).without_noise();
    let params = SimParams::new(model, h, t_end).with_stabilizer(p.clone());
    let forcing = drift_field(p.phi_n(), p.nu);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_excess = f64::NEG_INFINITY;
    let mut consistency: f64 = 0.0;
    let mut records = 0;
    for _ in 0..runs {
        let coeffs: Vec<f64> = (1..=basis.modes())
            .map(|j| {
                let g: f64 = StandardNormal.sample(&mut rng);
                amplitude * g / (j * j) as f64
            })
            .collect();
        let v0 = SpectralField::from_coeffs(basis, coeffs)?;
        let mut state = TrajectoryState::new(p.phi_n() + &v0, 0);
        let mut stepper = Stepper::new(&params)?;
        let drift = |u: &SpectralField| {
            let v = u - p.phi_n();
            let d = 2.0 * v.inner(&drift_field(u, p.nu));
            let bound = -2.0 * c * v.derivative_sq(2) + 2.0 * v.inner(&forcing);
            (d, bound, v.l2_sq())
        };
        let (mut d_prev, _, n0) = drift(&state.u);
        let (mut integral, mut magnitude) = (0.0, 0.0);
        for _ in 0..params.steps() {
            stepper.step(&mut state)?;
            let (d, bound, _) = drift(&state.u);
            let scale = d.abs().max(bound.abs()).max(1e-12);
            max_excess = max_excess.max((d - bound) / scale);
            integral += 0.5 * h * (d + d_prev);
            magnitude += 0.5 * h * (d.abs() + d_prev.abs());
            d_prev = d;
            records += 1;
        }
        let change = (&state.u - p.phi_n()).l2_sq() - n0;
        consistency = consistency.max((change - integral).abs() / magnitude.max(1e-300));
    }
    Ok(DriftReport {
        records,
        c,
        max_excess,
        consistency,
        pass: max_excess <= 1e-9,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alpha(l: f64) -> f64 {
        2.0 * PI * PI / (l * l)
    }

    fn brute_gamma(n_star: usize, l: f64, m_max: usize) -> f64 {
        let psi = |n: usize| if n >= 1 && n <= 2 * n_star { 2.0 } else { 0.0 };
        let a = alpha(l);
        let mut s = 0.0;
        for m in 1..=m_max {
            for k in m + 1..=m + 2 * n_star + 2 {
                let d: f64 = psi(k + m) - psi(k - m);
                s += d * d / (a * (k * k) as f64 * a * (m * m) as f64);
            }
        }
        s
    }

    #[test]
    fn gamma_closed_form_at_one() {
        let l = 2.0 * PI;
        let c = gamma_sum(1, l, 1 << 16).unwrap();
        let a = alpha(l);
        let oracle = (PI * PI / 3.0 - 3.0) + 0.25 * (PI * PI / 3.0 - 2.75);
        let got = c.computed_sum * a * a / 4.0;
        assert!((got - oracle).abs() < 1e-9, "{got} vs {oracle}");
        assert!((oracle - 0.424835).abs() < 1e-6);
        assert!((4.0 * got - 1.69934).abs() < 1e-5);
        assert!(c.holds());
        assert!((c.analytic_bound * a * a - 4.0 * PI * PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn gamma_matches_brute_force() {
        for n in [1, 2, 3, 5] {
            for l in [PI, 7.0] {
                let c = gamma_sum(n, l, 40).unwrap();
                let b = brute_gamma(n, l, 40);
                assert!((c.computed_sum - b).abs() <= 1e-12 * b, "n*={n}");
            }
        }
    }

    #[test]
    fn gamma_interval_contains_reference() {
        for n in [1, 3, 8] {
            let reference = gamma_sum(n, PI, 8 * n).unwrap().computed_sum;
            let mut last_tail = f64::INFINITY;
            for m_max in 4 * n..=8 * n {
                let c = gamma_sum(n, PI, m_max).unwrap();
                assert!(c.computed_sum <= reference * (1.0 + 1e-14));
                assert!(c.upper() >= reference);
                assert!(c.tail_bound <= last_tail);
                last_tail = c.tail_bound;
            }
        }
        assert!(matches!(gamma_sum(2, PI, 7), Err(StabilizerError::MMaxTooSmall { .. })));
        assert!(gamma_sum(0, PI, 7).is_err());
    }

    #[test]
    fn build_phi_coefficients() {
        let p = build_phi(1, -0.5, 2.0 * PI, 16).unwrap();
        assert_eq!(p.phi_coeffs, vec![2.0, 0.5]);
        for (n, (f, s)) in p.phi_coeffs.iter().zip(&p.psi).enumerate() {
            assert_eq!(f * ((n + 1) * (n + 1)) as f64, *s);
        }
        assert_eq!(p.truncation_residual, 0.0);
        assert_eq!(p.phi_n().coeffs()[1], 2.0 * -0.5 * 2.0);
        assert_eq!(p.phi_n().coeffs()[3], 2.0 * -0.5 * 0.5);
        let m = crate::analysis::evaluate(
            &[crate::analysis::Probe::Mass],
            &TrajectoryState::new(p.phi_n().clone(), 0),
            None,
        );
        assert!(m[0].abs() < 1e-12);
    }

    #[test]
    fn truncation_residual_vanishes_past_support() {
        let l = 2.0 * PI;
        let mut prev = f64::INFINITY;
        for n in [2, 4, 6, 8, 12] {
            let p = build_phi(3, -0.5, l, n).unwrap();
            assert!(p.truncation_residual <= prev);
            prev = p.truncation_residual;
        }
        assert_eq!(prev, 0.0);
        assert!(build_phi(3, -0.5, l, 10).unwrap().truncation_residual > 0.0);
    }

    #[test]
    fn stable_viscosity_rejected() {
        assert!(matches!(
            build_phi(2, 0.3, 2.0 * PI, 16),
            Err(StabilizerError::NotNeeded { .. })
        ));
        assert!(matches!(
            build_phi(2, -0.1, 2.0 * PI, 16),
            Err(StabilizerError::NotNeeded { .. })
        ));
    }

    #[test]
    fn hphi_zero_potential() {
        for l in [PI, 2.0 * PI, 5.0] {
            let b = BasisSpec::neumann(l, 8).unwrap();
            let p = StabilizerProfile::zero(-1.0, b).unwrap();
            let e = hphi_min_eigenvalue(&p, 64).unwrap();
            assert!((e - 0.5 * (PI / l).powi(2)).abs() < 1e-12);
        }
        let b = BasisSpec::neumann(PI, 8).unwrap();
        let p = StabilizerProfile::zero(-1.0, b).unwrap();
        assert!((hphi_min_eigenvalue(&p, 64).unwrap() - 0.5).abs() < 1e-12);
        assert!(matches!(
            hphi_min_eigenvalue(&p, 32),
            Err(StabilizerError::GridTooSmall(32))
        ));
    }

    #[test]
    fn hphi_matrix_matches_quadrature() {
        let p = build_phi(2, -1.5, 3.0, 16).unwrap();
        let m = 24;
        let h = hphi_matrix(&p, m);
        let l = 3.0;
        let pot = |x: f64| {
            (1..=p.phi_coeffs.len())
                .map(|n| p.potential_cos(n) * (2.0 * PI * n as f64 * x / l).cos())
                .sum::<f64>()
        };
        let g = 2000;
        for (k, j) in [(1, 1), (1, 3), (2, 6), (3, 5), (4, 4), (7, 2)] {
            let mut s = 0.0;
            for i in 0..g {
                let x = (i as f64 + 0.5) * l / g as f64;
                s += pot(x)
                    * (k as f64 * PI * x / l).sin()
                    * (j as f64 * PI * x / l).sin();
            }
            s *= 2.0 / g as f64;
            let diag = if k == j { 0.5 * (k as f64 * PI / l).powi(2) } else { 0.0 };
            assert!((h[(k - 1, j - 1)] - diag - s).abs() < 1e-9, "({k},{j})");
        }
    }

    #[test]
    fn form_matrix_matches_operator() {
        let p = build_phi(3, -0.6, 2.0 * PI, 16).unwrap();
        let fm = form_matrices(&p);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let c: Vec<f64> = (0..16).map(|_| StandardNormal.sample(&mut rng)).collect();
            let v = SpectralField::from_coeffs(*p.basis(), c.clone()).unwrap();
            let a = fm.ratio(&c).unwrap();
            let b = form_ratio(&p, &v).unwrap();
            assert!((a - b).abs() < 1e-10 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn form_ratio_matches_direct_operator_application() {
        // -⟨v, Ãv⟩ with Ãv = Av - 2∂x²(∂xΦ ∂xv), products on a fine grid.
        let p = build_phi(2, -0.8, 2.0 * PI, 12).unwrap();
        let b = *p.basis();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let c: Vec<f64> = (0..12).map(|_| StandardNormal.sample(&mut rng)).collect();
        let v = SpectralField::from_coeffs(b, c).unwrap();
        let m = 256;
        let vx = v.as_series().derivative(1).to_grid(m).unwrap();
        let fx = p.phi_n().as_series().derivative(1).to_grid(m).unwrap();
        let prod: Vec<f64> = vx.iter().zip(&fx).map(|(a, b)| a * b).collect();
        let g = crate::spectral::TrigSeries::from_grid(&prod, b.period(), 40).unwrap();
        let g2 = g.derivative(2).to_grid(m).unwrap();
        let vg = v.as_series().to_grid(m).unwrap();
        let cross: f64 = vg.iter().zip(&g2).map(|(a, b)| a * b).sum::<f64>() * b.length() / m as f64;
        let lin: f64 = v
            .coeffs()
            .iter()
            .enumerate()
            .map(|(i, x)| b.eigenvalue(p.nu, i + 1).unwrap() * x * x * b.mode_norm_sq())
            .sum();
        let direct = -(lin - 2.0 * cross) / v.derivative_sq(2);
        let r = form_ratio(&p, &v).unwrap();
        assert!((direct - r).abs() < 1e-10 * r.abs().max(1.0), "{direct} vs {r}");
    }

    #[test]
    fn stable_viscosity_zero_profile_ratio_at_least_one() {
        let b = BasisSpec::neumann(2.0 * PI, 16).unwrap();
        let p = StabilizerProfile::zero(0.7, b).unwrap();
        let r = tilde_a_form_check(&p, 200, 1).unwrap();
        assert!(r.c_estimate >= 1.0 - 1e-12 && r.exact_min >= 1.0 - 1e-12);
    }

    #[test]
    fn unstable_zero_profile_fails() {
        let b = BasisSpec::neumann(2.0 * PI, 16).unwrap();
        let p = StabilizerProfile::zero(2.0 * b.nu_critical(), b).unwrap();
        let r = tilde_a_form_check(&p, 200, 1).unwrap();
        assert!(!r.pass);
        assert_eq!(r.worst_mode, 1);
        assert!(r.min_single <= 0.0);
    }

    #[test]
    fn degenerate_field_rejected() {
        let b = BasisSpec::neumann(2.0 * PI, 4).unwrap();
        let p = StabilizerProfile::zero(-1.0, b).unwrap();
        assert!(matches!(
            form_ratio(&p, &SpectralField::zeros(b)),
            Err(StabilizerError::DegenerateField)
        ));
    }

    #[test]
    fn selection_monotone_in_target() {
        let l = 2.0 * PI;
        let nu = -0.5;
        let opts = SelectOptions {
            grid: 128,
            ..SelectOptions::default()
        };
        let mut last = 0;
        for c in [0.1, 0.5, 1.0] {
            let s = select_n_star(nu, l, 64, c, &opts).unwrap();
            assert!(s.profile.n_star >= last);
            assert!(s.min_eigenvalue >= c);
            last = s.profile.n_star;
        }
        assert!(select_n_star(nu, l, 64, 0.0, &opts).is_err());
    }

    #[test]
    fn stabilized_operator_is_negative() {
        let b = BasisSpec::neumann(2.0 * PI, 32).unwrap();
        let nu = 2.0 * b.nu_critical();
        let s = select_n_star(nu, b.length(), 32, nu.abs(), &SelectOptions::default()).unwrap();
        let r = tilde_a_form_check(&s.profile, 500, 3).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.exact_min > 0.0);
        assert!(r.exact_min <= r.c_estimate + 1e-12);
    }

    #[test]
    fn reversed_shift_destabilizes() {
        let b = BasisSpec::neumann(2.0 * PI, 32).unwrap();
        let nu = 2.0 * b.nu_critical();
        let s = select_n_star(nu, b.length(), 32, nu.abs(), &SelectOptions::default()).unwrap();
        let mut flipped = s.profile.clone();
        flipped.phi_coeffs.iter_mut().for_each(|c| *c = -*c);
        let flipped = flipped.with_modes(32).unwrap();
        let r = tilde_a_form_check(&flipped, 0, 0).unwrap();
        assert!(r.exact_min < 0.0, "{r:?}");
    }

    #[test]
    fn drift_bound_holds_on_noise_free_runs() {
        let b = BasisSpec::neumann(2.0 * PI, 32).unwrap();
        let nu = 2.0 * b.nu_critical();
        let s = select_n_star(nu, b.length(), 32, nu.abs(), &SelectOptions::default()).unwrap();
        let form = tilde_a_form_check(&s.profile, 0, 0).unwrap();
        let r = drift_check(&s.profile, form.exact_min, 3, 0.3, 1e-4, 0.05, 5).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.consistency < 0.05, "{r:?}");
    }
}
